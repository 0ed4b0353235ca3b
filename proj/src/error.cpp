#include "pheno/error.hpp"

namespace pheno {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Config: return "config";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Ingest: return "ingest";
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Lookup: return "lookup";
        case ErrorKind::Conflict: return "conflict";
        case ErrorKind::Alignment: return "alignment";
        case ErrorKind::Training: return "training";
        case ErrorKind::Transport: return "transport";
        case ErrorKind::Auth: return "auth";
        case ErrorKind::Protocol: return "protocol";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

bool Error::is_validation() const noexcept {
    switch (kind_) {
        case ErrorKind::Config:
        case ErrorKind::Validation:
        case ErrorKind::Ingest:
        case ErrorKind::Parse:
        case ErrorKind::Lookup:
        case ErrorKind::Conflict:
        case ErrorKind::Alignment:
            return true;
        default:
            return false;
    }
}

}  // namespace pheno

#pragma once

#include <stdexcept>
#include <string>

namespace pheno {

/// Broad failure classes. The CLI maps validation-type errors to exit code 1
/// and everything else to exit code 2.
enum class ErrorKind {
    Config,      // bad flag, missing column, missing env var
    Validation,  // precondition or schema violation on user input
    Ingest,      // corpus ingestion (duplicate ids)
    Parse,       // malformed file or response
    Lookup,      // out-of-vocabulary token, unknown label
    Conflict,    // state conflict (rejected seed, immutable seed)
    Alignment,   // matrices that do not line up
    Training,    // model cannot be fit
    Transport,   // network / retries exhausted
    Auth,        // authentication failure
    Protocol,    // malformed response envelope
    Io,          // filesystem
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    const char* code() const noexcept { return to_string(kind_); }

    /// True for errors caused by bad user input rather than by the runtime.
    bool is_validation() const noexcept;

private:
    ErrorKind kind_;
};

}  // namespace pheno

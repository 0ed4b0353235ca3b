#include "pheno/labels.hpp"

#include "pheno/error.hpp"
#include "text_util.hpp"

namespace pheno {

namespace {

constexpr std::array<std::string_view, kLabelCount> kNames = {
    "behavior",  "cognitive",     "eom",     "fatigue",      "gait",
    "hyperreflexia", "hypertonia", "hyporeflexia", "sphincter", "incoordination",
    "on",        "pain",          "paresthesias", "seizure", "sleep",
    "speech",    "tremor",        "vision",  "weakness",
};

}  // namespace

std::string_view label_name(Label label) noexcept { return kNames[ordinal(label)]; }

std::optional<Label> parse_label(std::string_view name) noexcept {
    const std::string folded = detail::to_lower(detail::trim(name));
    for (std::size_t i = 0; i < kLabelCount; ++i) {
        if (kNames[i] == folded) return kAllLabels[i];
    }
    return std::nullopt;
}

Label require_label(std::string_view name) {
    if (auto label = parse_label(name)) return *label;
    throw Error(ErrorKind::Lookup, "unknown phenotype label '" + std::string(name) + "'");
}

}  // namespace pheno

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace pheno {

/// The 19 phenotype categories. Ordinal order is the column order of every
/// phenotype matrix and label vector.
enum class Label : std::uint8_t {
    Behavior,
    Cognitive,
    Eom,
    Fatigue,
    Gait,
    Hyperreflexia,
    Hypertonia,
    Hyporeflexia,
    Sphincter,
    Incoordination,
    On,
    Pain,
    Paresthesias,
    Seizure,
    Sleep,
    Speech,
    Tremor,
    Vision,
    Weakness,
};

inline constexpr std::size_t kLabelCount = 19;

inline constexpr std::array<Label, kLabelCount> kAllLabels = {
    Label::Behavior,     Label::Cognitive,      Label::Eom,       Label::Fatigue,
    Label::Gait,         Label::Hyperreflexia,  Label::Hypertonia, Label::Hyporeflexia,
    Label::Sphincter,    Label::Incoordination, Label::On,         Label::Pain,
    Label::Paresthesias, Label::Seizure,        Label::Sleep,      Label::Speech,
    Label::Tremor,       Label::Vision,         Label::Weakness,
};

/// Binary presence per label, indexed by label ordinal.
using LabelVector = std::array<std::uint8_t, kLabelCount>;

constexpr std::size_t ordinal(Label label) noexcept { return static_cast<std::size_t>(label); }

/// Canonical lowercase name ("behavior", ..., "eom", "on", ...).
std::string_view label_name(Label label) noexcept;

/// Case-insensitive lookup of a canonical name; surrounding whitespace ignored.
std::optional<Label> parse_label(std::string_view name) noexcept;

/// Like parse_label but throws Error(Lookup) naming the offending string.
Label require_label(std::string_view name);

}  // namespace pheno

#pragma once

#include "pheno/labels.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pheno {

class EmbeddingModel;

enum class SimclinStatus { Seed, Accepted, Rejected };
enum class Decision { Accept, Reject };
enum class NegationPosition { Pre, Post };

std::string_view to_string(SimclinStatus status) noexcept;
std::string_view to_string(NegationPosition position) noexcept;
SimclinStatus parse_status(std::string_view text);
NegationPosition parse_position(std::string_view text);
Decision parse_decision(std::string_view text);

struct Simclin {
    std::string phrase;  // normalized: lowercase tokens joined by '_'
    Label label = Label::Behavior;
    std::optional<double> similarity;
    SimclinStatus status = SimclinStatus::Seed;
    std::string provenance;

    bool active() const noexcept { return status != SimclinStatus::Rejected; }
    friend bool operator==(const Simclin&, const Simclin&) = default;
};

struct NegationTerm {
    std::string phrase;  // normalized like Simclin::phrase
    NegationPosition position = NegationPosition::Pre;

    friend bool operator==(const NegationTerm&, const NegationTerm&) = default;
};

/// Candidate simclin proposed by the embedding neighborhood of an anchor.
struct Candidate {
    std::string phrase;
    Label label = Label::Behavior;
    double similarity = 0.0;
    std::string nearest_seed;

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

struct CandidateBatch {
    std::vector<Candidate> candidates;
    std::vector<std::string> warnings;  // anchors missing from the model
};

/// Lowercase, tokenize and join with '_'. "Gait  instability" and
/// "gait_instability" both become "gait_instability".
std::string normalize_phrase(std::string_view phrase);

/// Split a normalized phrase back into its token surfaces.
std::vector<std::string> phrase_tokens(std::string_view normalized);

inline constexpr double kDefaultThreshold = 0.6;

/// Seeds, review decisions and negation terms. Mutations are not
/// synchronized; callers serialize writers.
class Lexicon {
public:
    Lexicon() = default;

    /// Empty simclin list with the stock negation terms.
    static Lexicon with_default_negations();

    double threshold() const noexcept { return threshold_; }
    void set_threshold(double threshold);

    const std::vector<Simclin>& simclins() const noexcept { return simclins_; }
    const std::vector<NegationTerm>& negations() const noexcept { return negations_; }

    const Simclin* find(std::string_view phrase, Label label) const;

    /// Seeds and accepted simclins, in insertion order.
    std::vector<const Simclin*> active() const;
    std::size_t seed_count() const;

    /// No-op if the seed already exists; an accepted simclin is promoted to a
    /// seed. Throws Error(Validation) on an empty phrase and Error(Conflict)
    /// if the phrase was rejected under this label.
    void add_seed(std::string_view phrase, Label label, std::string provenance = "seed");

    /// Record a review decision. Unknown phrases are inserted. Throws
    /// Error(Conflict) on a seed.
    void decide(std::string_view phrase, Label label, Decision decision,
                std::optional<double> similarity = std::nullopt,
                std::string provenance = "review");

    /// Drop a non-seed entry so the phrase can be re-proposed (un-reject).
    /// Returns false if nothing was removed.
    bool forget(std::string_view phrase, Label label);

    /// Throws Error(Validation) on an empty phrase, Error(Conflict) on a
    /// duplicate (phrase, position).
    void add_negation(std::string_view phrase, NegationPosition position);
    bool remove_negation(std::string_view phrase, NegationPosition position);

    friend bool operator==(const Lexicon&, const Lexicon&) = default;
    friend Lexicon lexicon_from_json(std::string_view json);

private:
    Simclin* find_mutable(std::string_view phrase, Label label);

    double threshold_ = kDefaultThreshold;
    std::vector<Simclin> simclins_;
    std::vector<NegationTerm> negations_;
};

/// For every seed and accepted simclin present in the model, collect
/// vocabulary tokens at similarity >= lexicon.threshold() (up to
/// limit_per_seed per anchor). Phrases that already carry any status under
/// the anchor's label are excluded. Duplicates keep the highest similarity.
/// Sorted by similarity descending, then label, then phrase.
CandidateBatch generate_candidates(const Lexicon& lexicon, const EmbeddingModel& model,
                                   std::size_t limit_per_seed);

std::string lexicon_to_json(const Lexicon& lexicon);
Lexicon lexicon_from_json(std::string_view json);

/// Atomic write (temp file + rename).
void save_lexicon(const Lexicon& lexicon, const std::filesystem::path& path);
Lexicon load_lexicon(const std::filesystem::path& path);

}  // namespace pheno

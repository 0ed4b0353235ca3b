#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace pheno {

/// Token surfaces of one note (or any other unit of text).
using TokenStream = std::vector<std::string>;

struct EmbeddingConfig {
    std::size_t dim = 100;
    std::size_t window = 5;
    std::size_t negative_samples = 5;
    std::size_t epochs = 5;
    std::size_t min_count = 2;
    double initial_learning_rate = 0.025;
    double final_learning_rate = 1e-4;
    std::size_t phrase_min_count = 3;
    double phrase_score_threshold = 10.0;

    /// Throws Error(Config) when a field is out of range.
    void validate() const;
};

/// Merge frequent bigrams into '_'-joined tokens. A bigram (a, b) is merged
/// when count(a b) >= phrase_min_count and
///   (count(a b) - phrase_min_count) * N / (count(a) * count(b)) > phrase_score_threshold
/// where N is the total token count. One greedy left-to-right pass.
std::vector<TokenStream> detect_phrases(const std::vector<TokenStream>& corpus,
                                        const EmbeddingConfig& config);

struct Neighbor {
    std::string token;
    double similarity = 0.0;

    friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Immutable vocabulary + dense vectors. Safe to share across threads.
class EmbeddingModel {
public:
    EmbeddingModel() = default;

    /// Build from explicit vectors (row-major, vocab.size() x dim). Used for
    /// loading and for fixtures with injected geometry.
    EmbeddingModel(std::vector<std::string> vocab, std::vector<double> vectors, std::size_t dim);

    std::size_t size() const noexcept { return vocab_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    const std::vector<std::string>& vocab() const noexcept { return vocab_; }

    std::optional<std::size_t> index_of(std::string_view token) const;
    bool contains(std::string_view token) const { return index_of(token).has_value(); }

    std::span<const double> vector(std::size_t index) const;
    std::span<const double> vector(std::string_view token) const;

    /// Cosine similarity. Throws Error(Lookup) for out-of-vocabulary tokens.
    /// A zero vector has similarity 0 with everything.
    double similarity(std::string_view a, std::string_view b) const;

    /// Every other vocabulary token with similarity >= min_similarity, sorted
    /// by similarity descending then token ascending, truncated to limit.
    std::vector<Neighbor> neighbors(std::string_view term, double min_similarity,
                                    std::size_t limit) const;

    /// Text vector file: "<vocab_size> <dim>" then "<token> <v1> ... <vdim>".
    /// Values use shortest round-trip formatting so load(save(m)) is exact.
    void save(const std::filesystem::path& path) const;
    static EmbeddingModel load(const std::filesystem::path& path);

    friend bool operator==(const EmbeddingModel& a, const EmbeddingModel& b) {
        return a.dim_ == b.dim_ && a.vocab_ == b.vocab_ && a.vectors_ == b.vectors_;
    }

private:
    double cosine(std::size_t a, std::size_t b) const;
    std::size_t require(std::string_view token) const;

    std::vector<std::string> vocab_;
    std::unordered_map<std::string, std::size_t> index_;
    std::vector<double> vectors_;
    std::vector<double> norms_;
    std::size_t dim_ = 0;
};

struct TrainingReport {
    /// Mean skip-gram loss per (center, context) pair, one entry per epoch.
    std::vector<double> epoch_loss;
    std::size_t pairs_per_epoch = 0;
};

/// Skip-gram with negative sampling. Tokens below min_count are dropped,
/// negatives come from the unigram^0.75 distribution, the learning rate
/// decays linearly to final_learning_rate. Single-threaded and a pure function
/// of (corpus, config, seed). Throws Error(Training) if no token reaches
/// min_count.
EmbeddingModel train_embeddings(const std::vector<TokenStream>& corpus,
                                const EmbeddingConfig& config, std::uint64_t seed,
                                TrainingReport* report = nullptr);

/// Loss and gradients for one skip-gram pair:
///   L = -log s(u_o . v) - sum_k log s(-u_k . v)
/// with v the center (input) vector, u_o the true context (output) vector and
/// u_k the negative-sample output vectors.
struct SkipGramGradient {
    double loss = 0.0;
    std::vector<double> center;                 // dL/dv
    std::vector<double> context;                // dL/du_o
    std::vector<std::vector<double>> negatives; // dL/du_k
};

SkipGramGradient skip_gram_gradient(std::span<const double> center,
                                    std::span<const double> context,
                                    const std::vector<std::span<const double>>& negatives);

}  // namespace pheno

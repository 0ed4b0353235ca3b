#pragma once

#include "pheno/corpus.hpp"
#include "pheno/labels.hpp"
#include "pheno/lexicon.hpp"
#include "pheno/matcher.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace pheno {

inline constexpr std::size_t kHashBits = 18;
inline constexpr std::size_t kHashDimension = std::size_t{1} << kHashBits;

/// 64-bit FNV-1a (offset basis 0xcbf29ce484222325, prime 0x100000001b3).
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

/// Sparse feature vector, sorted by index, no duplicates.
struct FeatureVector {
    std::vector<std::pair<std::uint32_t, double>> entries;

    bool empty() const noexcept { return entries.empty(); }
    std::size_t size() const noexcept { return entries.size(); }
    friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// Feature layout: one indicator per active simclin (ordered by label, then
/// phrase), followed by 2^18 hashed unigram buckets. Simclin indicators have
/// value 1; the k active unigram buckets each have value 1/sqrt(k).
class FeatureSpace {
public:
    explicit FeatureSpace(const Lexicon& lexicon);

    std::size_t simclin_block() const noexcept { return keys_.size(); }
    std::size_t dimension() const noexcept { return keys_.size() + kHashDimension; }

    /// "label\tphrase" keys in block order.
    const std::vector<std::string>& keys() const noexcept { return keys_; }

    FeatureVector featurize(const NoteAnalysis& analysis) const;

    std::uint32_t token_index(std::string_view surface) const noexcept;

private:
    std::vector<std::string> keys_;
    std::unordered_map<std::string, std::uint32_t> index_;
};

/// Indicator per matched non-negated simclin plus the normalized unigram
/// block. Convenience wrapper that runs the matcher.
FeatureVector featurize(const Note& note, const Lexicon& lexicon,
                        const NegationConfig& negation = {});

struct ClassifierParams {
    double lambda = 1e-4;
    std::size_t epochs = 20;
    std::uint64_t seed = 0;
    double negative_sample_ratio = 1.0;
    NegationConfig negation;

    void validate() const;
};

struct LabelModel {
    std::vector<double> weights;  // dense, FeatureSpace::dimension() entries
    double bias = 0.0;
    bool trained = false;
    std::size_t positives = 0;
    std::size_t negatives = 0;

    friend bool operator==(const LabelModel&, const LabelModel&) = default;
};

struct LinearModel {
    static constexpr int kFormatVersion = 1;

    ClassifierParams params;
    std::vector<std::string> feature_keys;  // simclin block the weights were fit against
    std::array<LabelModel, kLabelCount> labels;

    friend bool operator==(const LinearModel& a, const LinearModel& b) {
        return a.feature_keys == b.feature_keys && a.labels == b.labels &&
               a.params.lambda == b.params.lambda && a.params.epochs == b.params.epochs &&
               a.params.seed == b.params.seed &&
               a.params.negative_sample_ratio == b.params.negative_sample_ratio &&
               a.params.negation.pre_window == b.params.negation.pre_window &&
               a.params.negation.post_window == b.params.negation.post_window;
    }
};

struct Example {
    FeatureVector features;
    int target = 1;  // +1 or -1
};

/// L2-regularized hinge objective
///   lambda/2 * (|w|^2 + b^2) + 1/n * sum max(0, 1 - y (w.x + b))
/// The bias is treated as a weight on a constant feature.
double hinge_objective(const std::vector<double>& weights, double bias,
                       const std::vector<Example>& examples, double lambda);

/// Subgradient of hinge_objective. At a kink (margin exactly 1) the zero
/// subgradient is taken for that example.
std::pair<std::vector<double>, double> hinge_subgradient(const std::vector<double>& weights,
                                                         double bias,
                                                         const std::vector<Example>& examples,
                                                         double lambda);

/// Pegasos: step 1/(lambda t), one seeded permutation per epoch, projection
/// onto the ball of radius 1/sqrt(lambda). on_epoch (if set) receives the
/// regularized objective at the running average of all iterates so far.
/// The returned model is the last iterate.
LabelModel train_linear_svm(const std::vector<Example>& examples, std::size_t dimension,
                            double lambda, std::size_t epochs, std::uint64_t seed,
                            const std::function<void(std::size_t, double)>& on_epoch = {});

/// Positive-only training: for each label, matcher-positive notes are
/// positives and a seeded uniform sample of the remaining notes (ratio x
/// positives) are provisional negatives. Labels with no positives stay
/// untrained. Throws Error(Training) on an empty corpus or when no label has
/// a positive note.
LinearModel train_pu(const std::vector<Note>& notes, const Lexicon& lexicon,
                     const ClassifierParams& params, std::size_t workers = 1);

struct Prediction {
    LabelVector present{};
    std::array<double, kLabelCount> margins{};  // -inf for untrained labels
};

/// Throws Error(Validation) if the lexicon's active simclins differ from the
/// ones the model was trained with.
Prediction predict(const LinearModel& model, const Note& note, const Lexicon& lexicon);

/// Prediction from precomputed features.
Prediction predict_features(const LinearModel& model, const FeatureVector& features);

/// JSON with per-label weights stored as nonzero (index, value) pairs.
void save_model(const LinearModel& model, const std::filesystem::path& path);
LinearModel load_model(const std::filesystem::path& path);
std::string model_to_json(const LinearModel& model);
LinearModel model_from_json(std::string_view json);

}  // namespace pheno

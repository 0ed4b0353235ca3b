#include "pheno/classifier.hpp"

#include "pheno/error.hpp"
#include "pheno/parallel.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

namespace pheno {

std::uint64_t fnv1a64(std::string_view bytes) noexcept {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

namespace {

std::string feature_key(Label label, std::string_view phrase) {
    std::string key(label_name(label));
    key += '\t';
    key += phrase;
    return key;
}

}  // namespace

FeatureSpace::FeatureSpace(const Lexicon& lexicon) {
    std::vector<std::pair<Label, std::string>> active;
    for (const Simclin* s : lexicon.active()) active.emplace_back(s->label, s->phrase);
    std::sort(active.begin(), active.end());
    keys_.reserve(active.size());
    for (const auto& [label, phrase] : active) {
        index_.emplace(feature_key(label, phrase), static_cast<std::uint32_t>(keys_.size()));
        keys_.push_back(feature_key(label, phrase));
    }
}

std::uint32_t FeatureSpace::token_index(std::string_view surface) const noexcept {
    return static_cast<std::uint32_t>(keys_.size() + (fnv1a64(surface) & (kHashDimension - 1)));
}

FeatureVector FeatureSpace::featurize(const NoteAnalysis& analysis) const {
    std::vector<std::uint32_t> indices;
    for (const auto& match : analysis.matches) {
        if (match.negated) continue;
        auto it = index_.find(feature_key(match.label, match.phrase));
        if (it != index_.end()) indices.push_back(it->second);
    }
    for (const auto& token : analysis.tokens) indices.push_back(token_index(token.surface));
    std::sort(indices.begin(), indices.end());
    indices.erase(std::unique(indices.begin(), indices.end()), indices.end());

    // Simclin indicators are 1; the hashed unigram block has unit L2 norm.
    const auto hashed = static_cast<std::size_t>(
        indices.end() - std::lower_bound(indices.begin(), indices.end(),
                                         static_cast<std::uint32_t>(keys_.size())));
    const double token_value = hashed > 0 ? 1.0 / std::sqrt(static_cast<double>(hashed)) : 0.0;
    FeatureVector out;
    out.entries.reserve(indices.size());
    for (auto i : indices) out.entries.emplace_back(i, i < keys_.size() ? 1.0 : token_value);
    return out;
}

FeatureVector featurize(const Note& note, const Lexicon& lexicon, const NegationConfig& negation) {
    const PhraseMatcher matcher(lexicon, negation);
    return FeatureSpace(lexicon).featurize(analyze_note(matcher, note));
}

void ClassifierParams::validate() const {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) {
        throw Error(ErrorKind::Config, "classifier lambda must be > 0");
    }
    if (epochs < 1) throw Error(ErrorKind::Config, "classifier epochs must be >= 1");
    if (!(negative_sample_ratio >= 0.0) || !std::isfinite(negative_sample_ratio)) {
        throw Error(ErrorKind::Config, "negative_sample_ratio must be >= 0");
    }
    negation.validate();
}

namespace {

double margin_of(const std::vector<double>& weights, double bias, const FeatureVector& x) {
    double sum = bias;
    for (const auto& [i, v] : x.entries) sum += weights[i] * v;
    return sum;
}

std::size_t bounded(std::mt19937_64& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % n);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

double hinge_objective(const std::vector<double>& weights, double bias,
                       const std::vector<Example>& examples, double lambda) {
    double sq = bias * bias;
    for (double w : weights) sq += w * w;
    double loss = 0.0;
    for (const auto& ex : examples) {
        loss += std::max(0.0, 1.0 - ex.target * margin_of(weights, bias, ex.features));
    }
    const double n = examples.empty() ? 1.0 : static_cast<double>(examples.size());
    return 0.5 * lambda * sq + loss / n;
}

std::pair<std::vector<double>, double> hinge_subgradient(const std::vector<double>& weights,
                                                         double bias,
                                                         const std::vector<Example>& examples,
                                                         double lambda) {
    std::vector<double> grad(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) grad[i] = lambda * weights[i];
    double grad_bias = lambda * bias;
    const double n = examples.empty() ? 1.0 : static_cast<double>(examples.size());
    for (const auto& ex : examples) {
        if (ex.target * margin_of(weights, bias, ex.features) < 1.0) {
            for (const auto& [i, v] : ex.features.entries) grad[i] -= ex.target * v / n;
            grad_bias -= ex.target / n;
        }
    }
    return {std::move(grad), grad_bias};
}

LabelModel train_linear_svm(const std::vector<Example>& examples, std::size_t dimension,
                            double lambda, std::size_t epochs, std::uint64_t seed,
                            const std::function<void(std::size_t, double)>& on_epoch) {
    // w = scale * v, with the bias stored at v[dimension].
    std::vector<double> v(dimension + 1, 0.0);
    double scale = 1.0;
    double sq_norm = 0.0;  // |v|^2
    const double radius = 1.0 / std::sqrt(lambda);
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::size_t t = 0;

    auto materialize = [&] {
        LabelModel model;
        model.weights.assign(dimension, 0.0);
        for (std::size_t i = 0; i < dimension; ++i) model.weights[i] = scale * v[i];
        model.bias = scale * v[dimension];
        model.trained = true;
        return model;
    };

    // Running average of every iterate so far, tracked lazily: sum[i] holds
    // sum_s scale_s * v_s[i] up to the step where v[i] last changed.
    const bool track = static_cast<bool>(on_epoch);
    std::vector<double> sum(track ? dimension + 1 : 0, 0.0);
    std::vector<double> last(track ? dimension + 1 : 0, 0.0);
    double scale_sum = 0.0;
    auto flush = [&](std::size_t i) {
        sum[i] += v[i] * (scale_sum - last[i]);
        last[i] = scale_sum;
    };
    auto flush_all = [&] {
        for (std::size_t i = 0; i < sum.size(); ++i) flush(i);
    };

    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[bounded(rng, i)]);
        for (auto idx : order) {
            ++t;
            const auto& ex = examples[idx];
            const double eta = 1.0 / (lambda * static_cast<double>(t));
            double raw = v[dimension];
            for (const auto& [i, value] : ex.features.entries) raw += v[i] * value;
            const bool violated = ex.target * scale * raw < 1.0;

            const double shrink = 1.0 - eta * lambda;
            if (shrink <= 0.0) {
                if (track) flush_all();
                std::fill(v.begin(), v.end(), 0.0);
                scale = 1.0;
                sq_norm = 0.0;
            } else {
                scale *= shrink;
            }
            if (violated) {
                const double step = eta * ex.target / scale;
                auto bump = [&](std::size_t i, double delta) {
                    if (track) flush(i);
                    sq_norm += 2.0 * v[i] * delta + delta * delta;
                    v[i] += delta;
                };
                for (const auto& [i, value] : ex.features.entries) bump(i, step * value);
                bump(dimension, step);
            }
            const double norm = scale * std::sqrt(std::max(0.0, sq_norm));
            if (norm > radius) scale *= radius / norm;
            if (scale < 1e-9) {
                if (track) flush_all();
                for (auto& x : v) x *= scale;
                scale = 1.0;
                sq_norm = 0.0;
                for (double x : v) sq_norm += x * x;
            }
            scale_sum += scale;
        }
        if (track && t > 0) {
            flush_all();
            const double n = static_cast<double>(t);
            std::vector<double> average(dimension);
            for (std::size_t i = 0; i < dimension; ++i) average[i] = sum[i] / n;
            on_epoch(epoch, hinge_objective(average, sum[dimension] / n, examples, lambda));
        }
    }
    return materialize();
}

LinearModel train_pu(const std::vector<Note>& notes, const Lexicon& lexicon,
                     const ClassifierParams& params, std::size_t workers) {
    params.validate();
    if (notes.empty()) throw Error(ErrorKind::Training, "cannot train on an empty corpus");

    const PhraseMatcher matcher(lexicon, params.negation);
    const FeatureSpace space(lexicon);
    const auto analyses = analyze_corpus(matcher, notes, workers);
    std::vector<FeatureVector> features(notes.size());
    parallel_for(notes.size(), workers,
                 [&](std::size_t i) { features[i] = space.featurize(analyses[i]); });

    bool any_positive = false;
    for (const auto& a : analyses) {
        any_positive = any_positive || std::any_of(a.labels.begin(), a.labels.end(),
                                                   [](auto c) { return c != 0; });
    }
    if (!any_positive) {
        throw Error(ErrorKind::Training, "no note has a non-negated simclin match; nothing to learn");
    }

    LinearModel model;
    model.params = params;
    model.feature_keys = space.keys();

    parallel_for(kLabelCount, workers, [&](std::size_t l) {
        std::vector<std::size_t> positives;
        std::vector<std::size_t> unlabeled;
        for (std::size_t n = 0; n < notes.size(); ++n) {
            (analyses[n].labels[l] ? positives : unlabeled).push_back(n);
        }
        LabelModel& out = model.labels[l];
        if (positives.empty()) {
            out = LabelModel{};
            out.weights.assign(space.dimension(), 0.0);
            return;
        }
        std::mt19937_64 rng(mix_seed(params.seed, l));
        const auto wanted = static_cast<std::size_t>(
            std::llround(params.negative_sample_ratio * static_cast<double>(positives.size())));
        const std::size_t take = std::min(wanted, unlabeled.size());
        for (std::size_t i = 0; i < take; ++i) {
            std::swap(unlabeled[i], unlabeled[i + bounded(rng, unlabeled.size() - i)]);
        }
        std::vector<Example> examples;
        examples.reserve(positives.size() + take);
        for (auto n : positives) examples.push_back({features[n], 1});
        for (std::size_t i = 0; i < take; ++i) examples.push_back({features[unlabeled[i]], -1});

        out = train_linear_svm(examples, space.dimension(), params.lambda, params.epochs,
                               mix_seed(params.seed, 1000 + l));
        out.positives = positives.size();
        out.negatives = take;
    });
    return model;
}

Prediction predict_features(const LinearModel& model, const FeatureVector& features) {
    Prediction out;
    for (std::size_t l = 0; l < kLabelCount; ++l) {
        const auto& label = model.labels[l];
        if (!label.trained) {
            out.margins[l] = -std::numeric_limits<double>::infinity();
            out.present[l] = 0;
            continue;
        }
        double margin = label.bias;
        for (const auto& [i, v] : features.entries) {
            if (i < label.weights.size()) margin += label.weights[i] * v;
        }
        out.margins[l] = margin;
        out.present[l] = margin > 0.0 ? 1 : 0;
    }
    return out;
}

Prediction predict(const LinearModel& model, const Note& note, const Lexicon& lexicon) {
    const FeatureSpace space(lexicon);
    if (space.keys() != model.feature_keys) {
        throw Error(ErrorKind::Validation,
                    "lexicon active simclins differ from the ones the model was trained with");
    }
    const PhraseMatcher matcher(lexicon, model.params.negation);
    return predict_features(model, space.featurize(analyze_note(matcher, note)));
}

std::string model_to_json(const LinearModel& model) {
    nlohmann::ordered_json doc;
    doc["format"] = "pheno-linear-svm";
    doc["version"] = LinearModel::kFormatVersion;
    doc["hash_bits"] = kHashBits;
    doc["params"] = {
        {"lambda", model.params.lambda},
        {"epochs", model.params.epochs},
        {"seed", model.params.seed},
        {"negative_sample_ratio", model.params.negative_sample_ratio},
        {"pre_window", model.params.negation.pre_window},
        {"post_window", model.params.negation.post_window},
    };
    doc["feature_keys"] = model.feature_keys;
    doc["labels"] = nlohmann::ordered_json::array();
    for (std::size_t l = 0; l < kLabelCount; ++l) {
        const auto& label = model.labels[l];
        nlohmann::ordered_json entry;
        entry["label"] = label_name(kAllLabels[l]);
        entry["trained"] = label.trained;
        entry["positives"] = label.positives;
        entry["negatives"] = label.negatives;
        entry["bias"] = label.bias;
        auto weights = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < label.weights.size(); ++i) {
            if (label.weights[i] != 0.0) weights.push_back({i, label.weights[i]});
        }
        entry["weights"] = std::move(weights);
        doc["labels"].push_back(std::move(entry));
    }
    return doc.dump() + "\n";
}

LinearModel model_from_json(std::string_view json) {
    auto fail = [](const std::string& what) -> Error {
        return Error(ErrorKind::Parse, "classifier model: " + what);
    };
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json);
        if (doc.value("format", "") != "pheno-linear-svm") throw fail("unrecognized format");
        if (doc.at("version").get<int>() != LinearModel::kFormatVersion) {
            throw fail("unsupported version " + doc.at("version").dump());
        }
        if (doc.at("hash_bits").get<std::size_t>() != kHashBits) throw fail("hash_bits mismatch");

        LinearModel model;
        const auto& p = doc.at("params");
        model.params.lambda = p.at("lambda").get<double>();
        model.params.epochs = p.at("epochs").get<std::size_t>();
        model.params.seed = p.at("seed").get<std::uint64_t>();
        model.params.negative_sample_ratio = p.at("negative_sample_ratio").get<double>();
        model.params.negation.pre_window = p.at("pre_window").get<std::size_t>();
        model.params.negation.post_window = p.at("post_window").get<std::size_t>();
        model.feature_keys = doc.at("feature_keys").get<std::vector<std::string>>();
        const std::size_t dimension = model.feature_keys.size() + kHashDimension;

        const auto& labels = doc.at("labels");
        if (!labels.is_array() || labels.size() != kLabelCount) {
            throw fail("expected exactly " + std::to_string(kLabelCount) + " label entries");
        }
        std::set<Label> seen;
        for (const auto& entry : labels) {
            const auto name = entry.at("label").get<std::string>();
            const auto label = parse_label(name);
            if (!label || label_name(*label) != name) throw fail("unknown label '" + name + "'");
            if (!seen.insert(*label).second) throw fail("duplicate label '" + name + "'");
            auto& out = model.labels[ordinal(*label)];
            out.trained = entry.at("trained").get<bool>();
            out.positives = entry.at("positives").get<std::size_t>();
            out.negatives = entry.at("negatives").get<std::size_t>();
            out.bias = entry.at("bias").get<double>();
            out.weights.assign(dimension, 0.0);
            for (const auto& pair : entry.at("weights")) {
                const auto index = pair.at(0).get<std::size_t>();
                if (index >= dimension) throw fail("weight index out of range for '" + name + "'");
                out.weights[index] = pair.at(1).get<double>();
            }
        }
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw fail(e.what());
    }
}

void save_model(const LinearModel& model, const std::filesystem::path& path) {
    detail::write_file_atomic(path, model_to_json(model));
}

LinearModel load_model(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorKind::Config, "model file '" + path.string() + "' does not exist");
    }
    return model_from_json(detail::read_file(path));
}

}  // namespace pheno

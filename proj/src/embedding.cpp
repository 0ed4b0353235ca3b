#include "pheno/embedding.hpp"

#include "pheno/error.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <utility>

namespace pheno {

void EmbeddingConfig::validate() const {
    auto fail = [](const std::string& what) {
        throw Error(ErrorKind::Config, "invalid embedding config: " + what);
    };
    if (dim < 2) fail("dim must be >= 2");
    if (window < 1) fail("window must be >= 1");
    if (negative_samples < 1) fail("negative_samples must be >= 1");
    if (epochs < 1) fail("epochs must be >= 1");
    if (min_count < 1) fail("min_count must be >= 1");
    if (!(initial_learning_rate > 0.0)) fail("initial_learning_rate must be > 0");
    if (!(final_learning_rate > 0.0) || final_learning_rate > initial_learning_rate) {
        fail("final_learning_rate must be in (0, initial_learning_rate]");
    }
    if (phrase_min_count < 1) fail("phrase_min_count must be >= 1");
    if (!(phrase_score_threshold > 0.0)) fail("phrase_score_threshold must be > 0");
}

std::vector<TokenStream> detect_phrases(const std::vector<TokenStream>& corpus,
                                        const EmbeddingConfig& config) {
    std::map<std::string, std::size_t, std::less<>> unigrams;
    std::map<std::pair<std::string, std::string>, std::size_t> bigrams;
    std::size_t total = 0;
    for (const auto& stream : corpus) {
        for (std::size_t i = 0; i < stream.size(); ++i) {
            ++unigrams[stream[i]];
            ++total;
            if (i + 1 < stream.size()) ++bigrams[{stream[i], stream[i + 1]}];
        }
    }

    const auto min_count = static_cast<double>(config.phrase_min_count);
    auto merges = [&](const std::string& a, const std::string& b) {
        auto it = bigrams.find({a, b});
        if (it == bigrams.end() || it->second < config.phrase_min_count) return false;
        const double score = (static_cast<double>(it->second) - min_count) *
                             static_cast<double>(total) /
                             (static_cast<double>(unigrams.find(a)->second) *
                              static_cast<double>(unigrams.find(b)->second));
        return score > config.phrase_score_threshold;
    };

    std::vector<TokenStream> out;
    out.reserve(corpus.size());
    for (const auto& stream : corpus) {
        TokenStream merged;
        merged.reserve(stream.size());
        std::size_t i = 0;
        while (i < stream.size()) {
            if (i + 1 < stream.size() && merges(stream[i], stream[i + 1])) {
                merged.push_back(stream[i] + "_" + stream[i + 1]);
                i += 2;
            } else {
                merged.push_back(stream[i]);
                ++i;
            }
        }
        out.push_back(std::move(merged));
    }
    return out;
}

EmbeddingModel::EmbeddingModel(std::vector<std::string> vocab, std::vector<double> vectors,
                               std::size_t dim)
    : vocab_(std::move(vocab)), vectors_(std::move(vectors)), dim_(dim) {
    if (dim_ < 2) throw Error(ErrorKind::Validation, "embedding dim must be >= 2");
    if (vectors_.size() != vocab_.size() * dim_) {
        throw Error(ErrorKind::Validation, "vector data size does not match vocab x dim");
    }
    index_.reserve(vocab_.size());
    norms_.resize(vocab_.size());
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
        if (!index_.emplace(vocab_[i], i).second) {
            throw Error(ErrorKind::Validation, "duplicate vocabulary token '" + vocab_[i] + "'");
        }
        double sq = 0.0;
        for (std::size_t d = 0; d < dim_; ++d) {
            const double v = vectors_[i * dim_ + d];
            if (!std::isfinite(v)) {
                throw Error(ErrorKind::Validation, "non-finite vector component for '" + vocab_[i] + "'");
            }
            sq += v * v;
        }
        norms_[i] = std::sqrt(sq);
    }
}

std::optional<std::size_t> EmbeddingModel::index_of(std::string_view token) const {
    auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

std::size_t EmbeddingModel::require(std::string_view token) const {
    if (auto index = index_of(token)) return *index;
    throw Error(ErrorKind::Lookup, "token '" + std::string(token) + "' is not in the vocabulary");
}

std::span<const double> EmbeddingModel::vector(std::size_t index) const {
    return std::span<const double>(vectors_).subspan(index * dim_, dim_);
}

std::span<const double> EmbeddingModel::vector(std::string_view token) const {
    return vector(require(token));
}

double EmbeddingModel::cosine(std::size_t a, std::size_t b) const {
    const double denom = norms_[a] * norms_[b];
    if (denom == 0.0) return 0.0;
    double dot = 0.0;
    const double* va = vectors_.data() + a * dim_;
    const double* vb = vectors_.data() + b * dim_;
    for (std::size_t d = 0; d < dim_; ++d) dot += va[d] * vb[d];
    return std::clamp(dot / denom, -1.0, 1.0);
}

double EmbeddingModel::similarity(std::string_view a, std::string_view b) const {
    return cosine(require(a), require(b));
}

std::vector<Neighbor> EmbeddingModel::neighbors(std::string_view term, double min_similarity,
                                                std::size_t limit) const {
    const std::size_t self = require(term);
    std::vector<Neighbor> out;
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
        if (i == self) continue;
        const double sim = cosine(self, i);
        if (sim >= min_similarity) out.push_back({vocab_[i], sim});
    }
    std::sort(out.begin(), out.end(), [](const Neighbor& x, const Neighbor& y) {
        if (x.similarity != y.similarity) return x.similarity > y.similarity;
        return x.token < y.token;
    });
    if (out.size() > limit) out.resize(limit);
    return out;
}

void EmbeddingModel::save(const std::filesystem::path& path) const {
    std::string out = std::to_string(vocab_.size()) + " " + std::to_string(dim_) + "\n";
    for (std::size_t i = 0; i < vocab_.size(); ++i) {
        out += vocab_[i];
        for (std::size_t d = 0; d < dim_; ++d) {
            out += ' ';
            out += detail::format_double(vectors_[i * dim_ + d]);
        }
        out += '\n';
    }
    detail::write_file_atomic(path, out);
}

EmbeddingModel EmbeddingModel::load(const std::filesystem::path& path) {
    const std::string content = detail::read_file(path);
    std::istringstream in(content);
    std::string line;
    auto fail = [&](std::size_t line_no, const std::string& what) -> void {
        throw Error(ErrorKind::Parse, path.string() + ":" + std::to_string(line_no) + ": " + what);
    };
    if (!std::getline(in, line)) fail(1, "missing header line");
    std::size_t count = 0;
    std::size_t dim = 0;
    {
        std::istringstream header(line);
        if (!(header >> count >> dim)) fail(1, "header must be '<vocab_size> <dim>'");
    }
    std::vector<std::string> vocab;
    std::vector<double> vectors;
    vocab.reserve(count);
    vectors.reserve(count * dim);
    std::size_t line_no = 1;
    while (vocab.size() < count && std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::string_view rest(line);
        const auto space = rest.find(' ');
        if (space == std::string_view::npos) fail(line_no, "expected token followed by values");
        vocab.emplace_back(rest.substr(0, space));
        rest.remove_prefix(space + 1);
        for (std::size_t d = 0; d < dim; ++d) {
            while (!rest.empty() && rest.front() == ' ') rest.remove_prefix(1);
            double value = 0.0;
            auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), value);
            if (ec != std::errc()) fail(line_no, "bad vector component " + std::to_string(d + 1));
            rest.remove_prefix(static_cast<std::size_t>(ptr - rest.data()));
            vectors.push_back(value);
        }
        if (!detail::trim(rest).empty()) fail(line_no, "too many vector components");
    }
    if (vocab.size() != count) fail(line_no, "expected " + std::to_string(count) + " vectors");
    return EmbeddingModel(std::move(vocab), std::move(vectors), dim);
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// -log(sigmoid(x)), stable for large |x|.
double neg_log_sigmoid(double x) {
    return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

double dot(const double* a, const double* b, std::size_t n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

class UnigramSampler {
public:
    explicit UnigramSampler(const std::vector<std::size_t>& counts) {
        cumulative_.reserve(counts.size());
        double total = 0.0;
        for (auto c : counts) {
            total += std::pow(static_cast<double>(c), 0.75);
            cumulative_.push_back(total);
        }
    }

    std::size_t sample(std::mt19937_64& rng) const {
        const double target = uniform01(rng) * cumulative_.back();
        auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
        if (it == cumulative_.end()) --it;
        return static_cast<std::size_t>(it - cumulative_.begin());
    }

private:
    std::vector<double> cumulative_;
};

}  // namespace

SkipGramGradient skip_gram_gradient(std::span<const double> center,
                                    std::span<const double> context,
                                    const std::vector<std::span<const double>>& negatives) {
    const std::size_t dim = center.size();
    SkipGramGradient grad;
    grad.center.assign(dim, 0.0);

    auto accumulate = [&](std::span<const double> output, double label,
                          std::vector<double>& d_output) {
        const double f = dot(center.data(), output.data(), dim);
        grad.loss += label > 0.5 ? neg_log_sigmoid(f) : neg_log_sigmoid(-f);
        const double g = sigmoid(f) - label;  // dL/df
        d_output.resize(dim);
        for (std::size_t d = 0; d < dim; ++d) {
            grad.center[d] += g * output[d];
            d_output[d] = g * center[d];
        }
    };

    accumulate(context, 1.0, grad.context);
    grad.negatives.resize(negatives.size());
    for (std::size_t k = 0; k < negatives.size(); ++k) {
        accumulate(negatives[k], 0.0, grad.negatives[k]);
    }
    return grad;
}

EmbeddingModel train_embeddings(const std::vector<TokenStream>& corpus,
                                const EmbeddingConfig& config, std::uint64_t seed,
                                TrainingReport* report) {
    config.validate();

    std::map<std::string, std::size_t, std::less<>> counts;
    for (const auto& stream : corpus) {
        for (const auto& token : stream) ++counts[token];
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [token, count] : counts) {
        if (count >= config.min_count) kept.emplace_back(token, count);
    }
    if (kept.empty()) {
        throw Error(ErrorKind::Training, "empty vocabulary: no token occurs at least " +
                                             std::to_string(config.min_count) + " times");
    }
    std::stable_sort(kept.begin(), kept.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    std::vector<std::string> vocab;
    std::vector<std::size_t> vocab_counts;
    std::map<std::string, std::size_t, std::less<>> index;
    for (auto& [token, count] : kept) {
        index.emplace(token, vocab.size());
        vocab.push_back(token);
        vocab_counts.push_back(count);
    }

    std::vector<std::vector<std::size_t>> streams;
    std::size_t total_tokens = 0;
    for (const auto& stream : corpus) {
        std::vector<std::size_t> ids;
        for (const auto& token : stream) {
            if (auto it = index.find(token); it != index.end()) ids.push_back(it->second);
        }
        total_tokens += ids.size();
        if (!ids.empty()) streams.push_back(std::move(ids));
    }

    const std::size_t dim = config.dim;
    const std::size_t n = vocab.size();
    std::mt19937_64 rng(seed);
    std::vector<double> input(n * dim);
    std::vector<double> output(n * dim, 0.0);
    for (auto& v : input) v = (uniform01(rng) - 0.5) / static_cast<double>(dim);

    const UnigramSampler sampler(vocab_counts);
    const double total_steps = static_cast<double>(config.epochs * total_tokens);
    std::size_t step = 0;
    std::vector<double> center_grad(dim);
    if (report) report->epoch_loss.clear();

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        double loss_sum = 0.0;
        std::size_t pairs = 0;
        for (const auto& ids : streams) {
            for (std::size_t pos = 0; pos < ids.size(); ++pos, ++step) {
                const double lr = std::max(
                    config.final_learning_rate,
                    config.initial_learning_rate -
                        (config.initial_learning_rate - config.final_learning_rate) *
                            static_cast<double>(step) / std::max(1.0, total_steps));
                double* center = input.data() + ids[pos] * dim;
                const std::size_t lo = pos >= config.window ? pos - config.window : 0;
                const std::size_t hi = std::min(ids.size() - 1, pos + config.window);
                for (std::size_t c = lo; c <= hi; ++c) {
                    if (c == pos) continue;
                    const std::size_t context = ids[c];
                    std::fill(center_grad.begin(), center_grad.end(), 0.0);

                    auto update = [&](std::size_t target, double label) {
                        double* out = output.data() + target * dim;
                        const double f = dot(center, out, dim);
                        loss_sum += label > 0.5 ? neg_log_sigmoid(f) : neg_log_sigmoid(-f);
                        const double g = sigmoid(f) - label;
                        for (std::size_t d = 0; d < dim; ++d) {
                            center_grad[d] += g * out[d];
                            out[d] -= lr * g * center[d];
                        }
                    };

                    update(context, 1.0);
                    for (std::size_t k = 0; k < config.negative_samples; ++k) {
                        const std::size_t negative = sampler.sample(rng);
                        if (negative == context) continue;
                        update(negative, 0.0);
                    }
                    for (std::size_t d = 0; d < dim; ++d) center[d] -= lr * center_grad[d];
                    ++pairs;
                }
            }
        }
        if (report) {
            report->epoch_loss.push_back(pairs ? loss_sum / static_cast<double>(pairs) : 0.0);
            report->pairs_per_epoch = pairs;
        }
    }

    return EmbeddingModel(std::move(vocab), std::move(input), dim);
}

}  // namespace pheno

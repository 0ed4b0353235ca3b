#include "pheno/lexicon.hpp"

#include "pheno/corpus.hpp"
#include "pheno/embedding.hpp"
#include "pheno/error.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>

namespace pheno {

using nlohmann::ordered_json;

std::string_view to_string(SimclinStatus status) noexcept {
    switch (status) {
        case SimclinStatus::Seed: return "seed";
        case SimclinStatus::Accepted: return "accepted";
        case SimclinStatus::Rejected: return "rejected";
    }
    return "seed";
}

std::string_view to_string(NegationPosition position) noexcept {
    return position == NegationPosition::Pre ? "pre" : "post";
}

SimclinStatus parse_status(std::string_view text) {
    const auto folded = detail::to_lower(detail::trim(text));
    if (folded == "seed") return SimclinStatus::Seed;
    if (folded == "accepted") return SimclinStatus::Accepted;
    if (folded == "rejected") return SimclinStatus::Rejected;
    throw Error(ErrorKind::Validation, "unknown simclin status '" + std::string(text) + "'");
}

NegationPosition parse_position(std::string_view text) {
    const auto folded = detail::to_lower(detail::trim(text));
    if (folded == "pre") return NegationPosition::Pre;
    if (folded == "post") return NegationPosition::Post;
    throw Error(ErrorKind::Validation, "negation position must be 'pre' or 'post', got '" +
                                           std::string(text) + "'");
}

Decision parse_decision(std::string_view text) {
    const auto folded = detail::to_lower(detail::trim(text));
    if (folded == "accept" || folded == "accepted") return Decision::Accept;
    if (folded == "reject" || folded == "rejected") return Decision::Reject;
    throw Error(ErrorKind::Validation, "decision must be 'accept' or 'reject', got '" +
                                           std::string(text) + "'");
}

std::string normalize_phrase(std::string_view phrase) {
    std::string out;
    for (const auto& token : tokenize(phrase)) {
        if (!out.empty()) out += '_';
        out += token.surface;
    }
    return out;
}

std::vector<std::string> phrase_tokens(std::string_view normalized) {
    std::vector<std::string> out;
    for (auto& token : tokenize(normalized)) out.push_back(std::move(token.surface));
    return out;
}

Lexicon Lexicon::with_default_negations() {
    Lexicon lexicon;
    for (const char* pre : {"no", "no sign of", "denies", "without"}) {
        lexicon.add_negation(pre, NegationPosition::Pre);
    }
    for (const char* post : {"negative", "absent"}) {
        lexicon.add_negation(post, NegationPosition::Post);
    }
    return lexicon;
}

void Lexicon::set_threshold(double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw Error(ErrorKind::Validation, "threshold must be in (0, 1], got " +
                                               detail::format_double(threshold));
    }
    threshold_ = threshold;
}

const Simclin* Lexicon::find(std::string_view phrase, Label label) const {
    const auto key = normalize_phrase(phrase);
    for (const auto& s : simclins_) {
        if (s.label == label && s.phrase == key) return &s;
    }
    return nullptr;
}

Simclin* Lexicon::find_mutable(std::string_view phrase, Label label) {
    return const_cast<Simclin*>(std::as_const(*this).find(phrase, label));
}

std::vector<const Simclin*> Lexicon::active() const {
    std::vector<const Simclin*> out;
    for (const auto& s : simclins_) {
        if (s.active()) out.push_back(&s);
    }
    return out;
}

std::size_t Lexicon::seed_count() const {
    return static_cast<std::size_t>(std::count_if(
        simclins_.begin(), simclins_.end(),
        [](const Simclin& s) { return s.status == SimclinStatus::Seed; }));
}

void Lexicon::add_seed(std::string_view phrase, Label label, std::string provenance) {
    const auto key = normalize_phrase(phrase);
    if (key.empty()) throw Error(ErrorKind::Validation, "seed phrase must not be empty");
    if (auto* existing = find_mutable(key, label)) {
        switch (existing->status) {
            case SimclinStatus::Seed:
                return;
            case SimclinStatus::Rejected:
                throw Error(ErrorKind::Conflict,
                            "'" + key + "' was rejected for " + std::string(label_name(label)) +
                                "; forget it before adding it as a seed");
            case SimclinStatus::Accepted:
                existing->status = SimclinStatus::Seed;
                existing->similarity.reset();
                existing->provenance = std::move(provenance);
                return;
        }
    }
    simclins_.push_back({key, label, std::nullopt, SimclinStatus::Seed, std::move(provenance)});
}

void Lexicon::decide(std::string_view phrase, Label label, Decision decision,
                     std::optional<double> similarity, std::string provenance) {
    const auto key = normalize_phrase(phrase);
    if (key.empty()) throw Error(ErrorKind::Validation, "phrase must not be empty");
    const auto status =
        decision == Decision::Accept ? SimclinStatus::Accepted : SimclinStatus::Rejected;
    if (auto* existing = find_mutable(key, label)) {
        if (existing->status == SimclinStatus::Seed) {
            throw Error(ErrorKind::Conflict, "'" + key + "' is a seed for " +
                                                 std::string(label_name(label)) +
                                                 " and cannot be decided");
        }
        existing->status = status;
        if (similarity) existing->similarity = similarity;
        existing->provenance = std::move(provenance);
        return;
    }
    simclins_.push_back({key, label, similarity, status, std::move(provenance)});
}

bool Lexicon::forget(std::string_view phrase, Label label) {
    const auto key = normalize_phrase(phrase);
    auto it = std::find_if(simclins_.begin(), simclins_.end(), [&](const Simclin& s) {
        return s.label == label && s.phrase == key && s.status != SimclinStatus::Seed;
    });
    if (it == simclins_.end()) return false;
    simclins_.erase(it);
    return true;
}

void Lexicon::add_negation(std::string_view phrase, NegationPosition position) {
    auto key = normalize_phrase(phrase);
    if (key.empty()) throw Error(ErrorKind::Validation, "negation phrase must not be empty");
    for (const auto& n : negations_) {
        if (n.phrase == key && n.position == position) {
            throw Error(ErrorKind::Conflict, "negation '" + key + "' (" +
                                                 std::string(to_string(position)) +
                                                 ") already exists");
        }
    }
    negations_.push_back({std::move(key), position});
}

bool Lexicon::remove_negation(std::string_view phrase, NegationPosition position) {
    const auto key = normalize_phrase(phrase);
    auto it = std::find_if(negations_.begin(), negations_.end(), [&](const NegationTerm& n) {
        return n.phrase == key && n.position == position;
    });
    if (it == negations_.end()) return false;
    negations_.erase(it);
    return true;
}

CandidateBatch generate_candidates(const Lexicon& lexicon, const EmbeddingModel& model,
                                   std::size_t limit_per_seed) {
    CandidateBatch batch;
    std::map<std::pair<Label, std::string>, Candidate> best;

    for (const Simclin* anchor : lexicon.active()) {
        if (!model.contains(anchor->phrase)) {
            batch.warnings.push_back("anchor '" + anchor->phrase + "' (" +
                                     std::string(label_name(anchor->label)) +
                                     ") is not in the embedding vocabulary; skipped");
            continue;
        }
        for (auto& neighbor :
             model.neighbors(anchor->phrase, lexicon.threshold(), limit_per_seed)) {
            if (lexicon.find(neighbor.token, anchor->label)) continue;
            auto key = std::make_pair(anchor->label, neighbor.token);
            auto it = best.find(key);
            if (it == best.end()) {
                best.emplace(key, Candidate{neighbor.token, anchor->label, neighbor.similarity,
                                            anchor->phrase});
            } else if (neighbor.similarity > it->second.similarity) {
                it->second.similarity = neighbor.similarity;
                it->second.nearest_seed = anchor->phrase;
            }
        }
    }

    batch.candidates.reserve(best.size());
    for (auto& [key, candidate] : best) batch.candidates.push_back(std::move(candidate));
    std::sort(batch.candidates.begin(), batch.candidates.end(),
              [](const Candidate& a, const Candidate& b) {
                  if (a.similarity != b.similarity) return a.similarity > b.similarity;
                  if (a.label != b.label) return a.label < b.label;
                  return a.phrase < b.phrase;
              });
    return batch;
}

std::string lexicon_to_json(const Lexicon& lexicon) {
    ordered_json doc;
    doc["threshold"] = lexicon.threshold();
    doc["simclins"] = ordered_json::array();
    for (const auto& s : lexicon.simclins()) {
        ordered_json entry;
        entry["phrase"] = s.phrase;
        entry["label"] = label_name(s.label);
        entry["similarity"] = s.similarity ? ordered_json(*s.similarity) : ordered_json(nullptr);
        entry["status"] = to_string(s.status);
        entry["provenance"] = s.provenance;
        doc["simclins"].push_back(std::move(entry));
    }
    doc["negations"] = ordered_json::array();
    for (const auto& n : lexicon.negations()) {
        doc["negations"].push_back({{"phrase", n.phrase}, {"position", to_string(n.position)}});
    }
    return doc.dump(2) + "\n";
}

namespace {

[[noreturn]] void schema_error(const std::string& where, const std::string& what) {
    throw Error(ErrorKind::Parse, "lexicon " + where + ": " + what);
}

const ordered_json& require_field(const ordered_json& obj, const char* name,
                                  const std::string& where) {
    if (!obj.is_object()) schema_error(where, "expected an object");
    auto it = obj.find(name);
    if (it == obj.end()) schema_error(where, std::string("missing field \"") + name + "\"");
    return *it;
}

std::string require_string(const ordered_json& obj, const char* name, const std::string& where) {
    const auto& value = require_field(obj, name, where);
    if (!value.is_string()) schema_error(where, std::string("field \"") + name + "\" must be a string");
    return value.get<std::string>();
}

}  // namespace

Lexicon lexicon_from_json(std::string_view json) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(json);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorKind::Parse, std::string("lexicon is not valid JSON: ") + e.what());
    }
    Lexicon lexicon;
    const auto& threshold = require_field(doc, "threshold", "document");
    if (!threshold.is_number()) schema_error("document", "\"threshold\" must be a number");
    try {
        lexicon.set_threshold(threshold.get<double>());
    } catch (const Error& e) {
        schema_error("document", e.what());
    }

    const auto& simclins = require_field(doc, "simclins", "document");
    if (!simclins.is_array()) schema_error("document", "\"simclins\" must be an array");
    std::set<std::pair<Label, std::string>> seen;
    Lexicon scratch;
    for (std::size_t i = 0; i < simclins.size(); ++i) {
        const std::string where = "simclins[" + std::to_string(i) + "]";
        const auto& entry = simclins[i];
        Simclin s;
        s.phrase = normalize_phrase(require_string(entry, "phrase", where));
        if (s.phrase.empty()) schema_error(where, "empty phrase");
        const auto label_text = require_string(entry, "label", where);
        const auto label = parse_label(label_text);
        if (!label) schema_error(where, "unknown label '" + label_text + "'");
        s.label = *label;
        const auto& similarity = require_field(entry, "similarity", where);
        if (similarity.is_number()) {
            s.similarity = similarity.get<double>();
        } else if (!similarity.is_null()) {
            schema_error(where, "\"similarity\" must be a number or null");
        }
        try {
            s.status = parse_status(require_string(entry, "status", where));
        } catch (const Error& e) {
            schema_error(where, e.what());
        }
        s.provenance = require_string(entry, "provenance", where);
        if (!seen.emplace(s.label, s.phrase).second) {
            schema_error(where, "duplicate (phrase, label) '" + s.phrase + "', " +
                                    std::string(label_name(s.label)));
        }
        scratch.simclins_.push_back(std::move(s));
    }
    lexicon.simclins_ = std::move(scratch.simclins_);

    const auto& negations = require_field(doc, "negations", "document");
    if (!negations.is_array()) schema_error("document", "\"negations\" must be an array");
    for (std::size_t i = 0; i < negations.size(); ++i) {
        const std::string where = "negations[" + std::to_string(i) + "]";
        try {
            lexicon.add_negation(require_string(negations[i], "phrase", where),
                                 parse_position(require_string(negations[i], "position", where)));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::Parse) throw;
            schema_error(where, e.what());
        }
    }
    return lexicon;
}

void save_lexicon(const Lexicon& lexicon, const std::filesystem::path& path) {
    detail::write_file_atomic(path, lexicon_to_json(lexicon));
}

Lexicon load_lexicon(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorKind::Config, "lexicon file '" + path.string() + "' does not exist");
    }
    try {
        return lexicon_from_json(detail::read_file(path));
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Parse) throw;
        throw Error(ErrorKind::Parse, path.string() + ": " + e.what());
    }
}

}  // namespace pheno

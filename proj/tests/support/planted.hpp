#pragma once

// Synthetic notes with known phenotype truth. Each label is planted through a
// small set of phrases, either plainly (present) or inside a negation wrapper
// (absent), one mention per sentence.

#include "pheno/corpus.hpp"
#include "pheno/evaluation.hpp"
#include "pheno/labels.hpp"
#include "pheno/lexicon.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace planted {

inline const std::array<std::vector<std::string>, pheno::kLabelCount>& phrases() {
    static const std::array<std::vector<std::string>, pheno::kLabelCount> table = {{
        {"depressed mood", "anxiety", "hallucinations"},
        {"memory loss", "forgetfulness", "difficulty thinking clearly"},
        {"double vision", "diplopia", "skew deviation"},
        {"worsening fatigue", "tiredness", "lack of energy"},
        {"gait instability", "imbalance", "uses a cane"},
        {"diffuse hyperreflexia", "biceps +++", "increased reflexes"},
        {"spasticity", "increased tone", "muscle spasms"},
        {"areflexia", "decreased reflexes", "hyporeflexia"},
        {"neurogenic bladder", "urinary urgency", "constipation"},
        {"dysmetria", "ataxia", "poor coordination"},
        {"optic neuritis", "afferent pupillary defect", "pale temporal nerve"},
        {"electric shock", "headache", "burning pain"},
        {"numbness", "tingling", "burning sensation"},
        {"seizures", "convulsions", "seizure activity"},
        {"insomnia", "trouble sleeping", "restless legs"},
        {"slurred speech", "dysarthria", "aphasia"},
        {"tremor", "tremulousness", "action tremor"},
        {"blurry vision", "decreased visual acuity", "visual loss"},
        {"weakness", "loss of strength", "left sided weakness"},
    }};
    return table;
}

inline const std::vector<std::string>& filler() {
    static const std::vector<std::string> sentences = {
        "Patient seen today for routine follow up",
        "Vitals reviewed and stable",
        "MRI of the brain was reviewed with the patient",
        "Continue current disease modifying therapy",
        "Return to clinic in six months",
        "Labs drawn at the visit",
        "Discussed plan with spouse at bedside",
        "Medication list reconciled",
    };
    return sentences;
}

struct Corpus {
    std::vector<pheno::Note> notes;
    std::vector<pheno::LabelVector> truth;
    std::vector<pheno::SpanAnnotation> spans;  // one per positive mention
};

inline std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }
inline double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// p_present: chance a label is planted as present; p_negated: chance an
/// absent label still gets a negated mention.
inline Corpus generate(std::size_t count, std::uint64_t seed, double p_present = 0.25,
                       double p_negated = 0.25) {
    static const std::vector<std::pair<std::string, std::string>> positive = {
        {"Patient reports ", ""},  {"Exam notable for ", ""}, {"", " noted on exam"},
        {"Endorses ", ""},         {"History of ", ""},       {"Ongoing ", " since last visit"},
    };
    static const std::vector<std::pair<std::string, std::string>> negated = {
        {"No sign of ", ""}, {"Denies ", ""}, {"", " negative"}, {"Without ", ""}, {"", " absent"},
        {"No ", " today"},
    };

    std::mt19937_64 rng(seed);
    Corpus corpus;
    for (std::size_t n = 0; n < count; ++n) {
        struct Sentence {
            std::string text;
            int label = -1;             // label ordinal of a positive mention
            std::size_t offset = 0;     // phrase offset inside text
            std::size_t length = 0;
        };
        std::vector<Sentence> sentences;
        pheno::LabelVector truth{};
        for (std::size_t l = 0; l < pheno::kLabelCount; ++l) {
            const auto& options = phrases()[l];
            const auto& phrase = options[pick(rng, options.size())];
            const double roll = unit(rng);
            if (roll < p_present) {
                const auto& [pre, post] = positive[pick(rng, positive.size())];
                truth[l] = 1;
                sentences.push_back({pre + phrase + post, static_cast<int>(l), pre.size(), phrase.size()});
            } else if (roll < p_present + p_negated) {
                const auto& [pre, post] = negated[pick(rng, negated.size())];
                sentences.push_back({pre + phrase + post});
            }
        }
        const std::size_t fillers = 2 + pick(rng, 4);
        for (std::size_t f = 0; f < fillers; ++f) {
            sentences.push_back({filler()[pick(rng, filler().size())]});
        }
        for (std::size_t i = sentences.size(); i > 1; --i) std::swap(sentences[i - 1], sentences[pick(rng, i)]);

        pheno::Note note;
        note.note_id = "n" + std::to_string(1000 + n);
        for (const auto& s : sentences) {
            if (!note.text.empty()) note.text += " ";
            if (s.label >= 0) {
                corpus.spans.push_back({note.note_id, note.text.size() + s.offset,
                                        note.text.size() + s.offset + s.length,
                                        pheno::kAllLabels[static_cast<std::size_t>(s.label)]});
            }
            note.text += s.text + ".";
        }
        note.meta["diagnosis"] = "G35";
        corpus.notes.push_back(std::move(note));
        corpus.truth.push_back(truth);
    }
    return corpus;
}

/// Every planted phrase as a seed, plus the stock negation terms.
inline pheno::Lexicon lexicon() {
    auto lex = pheno::Lexicon::with_default_negations();
    for (std::size_t l = 0; l < pheno::kLabelCount; ++l) {
        for (const auto& p : phrases()[l]) lex.add_seed(p, pheno::kAllLabels[l], "planted");
    }
    return lex;
}

inline pheno::PhenotypeMatrix truth_matrix(const Corpus& corpus) {
    pheno::PhenotypeMatrix m;
    for (std::size_t i = 0; i < corpus.notes.size(); ++i) m.add_row(corpus.notes[i].note_id, corpus.truth[i]);
    return m;
}

}  // namespace planted

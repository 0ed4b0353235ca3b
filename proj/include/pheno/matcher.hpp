#pragma once

#include "pheno/corpus.hpp"
#include "pheno/labels.hpp"
#include "pheno/lexicon.hpp"

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace pheno {

struct Match {
    std::string note_id;
    Label label = Label::Behavior;
    std::string phrase;
    std::size_t start = 0;  // byte offsets into Note::text
    std::size_t end = 0;
    bool negated = false;
    std::size_t first_token = 0;  // token index range [first_token, last_token]
    std::size_t last_token = 0;

    friend bool operator==(const Match&, const Match&) = default;
};

struct NegationConfig {
    std::size_t pre_window = 5;
    std::size_t post_window = 3;

    void validate() const;
};

/// Aho-Corasick automaton over token ids. Patterns are token sequences; a
/// note is scanned once, and every occurrence of every pattern is reported.
class TokenAutomaton {
public:
    struct Hit {
        std::size_t pattern = 0;    // index into the pattern list
        std::size_t first_token = 0;
        std::size_t last_token = 0;
    };

    using SymbolTable = std::unordered_map<std::string, std::uint32_t>;

    TokenAutomaton() = default;
    explicit TokenAutomaton(const std::vector<std::vector<std::string>>& patterns);
    /// Interns pattern tokens into a shared table (ids start at 1; 0 = unknown).
    TokenAutomaton(const std::vector<std::vector<std::string>>& patterns, SymbolTable& symbols);

    std::size_t pattern_count() const noexcept { return pattern_lengths_.size(); }

    /// All occurrences, ordered by end token then by pattern length descending.
    std::vector<Hit> scan(const std::vector<Token>& tokens) const;

    /// Same as scan over symbol ids from the table the automaton was built with.
    std::vector<Hit> scan_symbols(const std::vector<std::uint32_t>& symbols) const;

private:
    struct Node {
        std::unordered_map<std::uint32_t, std::uint32_t> next;
        std::uint32_t fail = 0;
        std::uint32_t output_link = 0;      // nearest proper suffix node with outputs (0 = none)
        std::vector<std::uint32_t> outputs; // patterns ending exactly here
    };

    void build(const std::vector<std::vector<std::string>>& patterns, SymbolTable& symbols);
    std::uint32_t step(std::uint32_t state, std::uint32_t symbol) const;

    SymbolTable symbols_;
    std::vector<Node> nodes_;
    std::vector<std::size_t> pattern_lengths_;
};

/// Compiled view of the active simclins and negation terms of a lexicon.
/// Immutable after construction and safe to share across threads.
class PhraseMatcher {
public:
    explicit PhraseMatcher(const Lexicon& lexicon, NegationConfig negation = {});

    /// Occurrences of seed/accepted simclins with negated=false. Overlaps are
    /// resolved per label: longest first, then leftmost. Text order.
    std::vector<Match> find(const Note& note, const std::vector<Token>& tokens) const;

    /// Set Match::negated from the pre/post negation terms within the
    /// configured windows, bounded by the sentence.
    void negate(std::vector<Match>& matches, const std::vector<Token>& tokens) const;

    /// find followed by negate, sharing one symbol lookup per token.
    std::vector<Match> find_negated(const Note& note, const std::vector<Token>& tokens) const;

    const NegationConfig& negation_config() const noexcept { return negation_; }
    std::size_t simclin_count() const noexcept { return simclins_.size(); }

private:
    struct Pattern {
        std::string phrase;
        Label label;
    };

    std::vector<std::uint32_t> symbolize(const std::vector<Token>& tokens) const;
    std::vector<Match> find_symbols(const Note& note, const std::vector<Token>& tokens,
                                    const std::vector<std::uint32_t>& symbols) const;
    void negate_symbols(std::vector<Match>& matches, const std::vector<Token>& tokens,
                        const std::vector<std::uint32_t>& symbols) const;

    TokenAutomaton::SymbolTable symbols_;
    std::vector<Pattern> simclins_;
    TokenAutomaton simclin_automaton_;
    TokenAutomaton pre_automaton_;
    TokenAutomaton post_automaton_;
    NegationConfig negation_;
};

std::vector<Match> find_matches(const Note& note, const Lexicon& lexicon);
std::vector<Match> find_matches(const Note& note, const std::vector<Token>& tokens,
                                const Lexicon& lexicon);

void apply_negation(std::vector<Match>& matches, const std::vector<Token>& tokens,
                    const Lexicon& lexicon, const NegationConfig& config = {});

/// 1 for every label with at least one non-negated match.
LabelVector note_label_vector(const std::vector<Match>& matches);

struct NoteAnalysis {
    std::vector<Token> tokens;
    std::vector<Match> matches;  // negation applied
    LabelVector labels{};
};

/// tokenize + split_sentences + find + negate + note_label_vector.
NoteAnalysis analyze_note(const PhraseMatcher& matcher, const Note& note);

/// analyze_note over a corpus with `workers` threads. Output order follows
/// the input order regardless of worker count.
std::vector<NoteAnalysis> analyze_corpus(const PhraseMatcher& matcher,
                                         const std::vector<Note>& notes, std::size_t workers = 1);

/// One JSON-lines record: {"note_id","label","phrase","start","end","negated"}.
std::string match_to_json_line(const Match& match);

}  // namespace pheno

#include "pheno/matcher.hpp"

#include "pheno/error.hpp"
#include "pheno/parallel.hpp"

#include <algorithm>
#include <deque>

#include <nlohmann/json.hpp>

namespace pheno {

void NegationConfig::validate() const {
    if (pre_window < 1 || post_window < 1) {
        throw Error(ErrorKind::Config, "negation windows must be >= 1 token");
    }
}

TokenAutomaton::TokenAutomaton(const std::vector<std::vector<std::string>>& patterns) {
    build(patterns, symbols_);
}

TokenAutomaton::TokenAutomaton(const std::vector<std::vector<std::string>>& patterns,
                               SymbolTable& symbols) {
    build(patterns, symbols);
}

void TokenAutomaton::build(const std::vector<std::vector<std::string>>& patterns,
                           SymbolTable& symbols) {
    nodes_.emplace_back();
    pattern_lengths_.reserve(patterns.size());
    for (std::size_t p = 0; p < patterns.size(); ++p) {
        const auto& pattern = patterns[p];
        pattern_lengths_.push_back(pattern.size());
        if (pattern.empty()) continue;
        std::uint32_t state = 0;
        for (const auto& surface : pattern) {
            auto [sym, inserted] =
                symbols.emplace(surface, static_cast<std::uint32_t>(symbols.size() + 1));
            auto& edges = nodes_[state].next;
            auto it = edges.find(sym->second);
            if (it == edges.end()) {
                const auto child = static_cast<std::uint32_t>(nodes_.size());
                nodes_[state].next.emplace(sym->second, child);
                nodes_.emplace_back();
                state = child;
            } else {
                state = it->second;
            }
        }
        nodes_[state].outputs.push_back(static_cast<std::uint32_t>(p));
    }

    // Breadth-first failure links.
    std::deque<std::uint32_t> queue;
    for (const auto& [sym, child] : nodes_[0].next) {
        nodes_[child].fail = 0;
        queue.push_back(child);
    }
    while (!queue.empty()) {
        const std::uint32_t node = queue.front();
        queue.pop_front();
        for (const auto& [sym, child] : nodes_[node].next) {
            std::uint32_t fail = nodes_[node].fail;
            while (fail != 0 && !nodes_[fail].next.contains(sym)) fail = nodes_[fail].fail;
            auto it = nodes_[fail].next.find(sym);
            const std::uint32_t target = (it != nodes_[fail].next.end() && it->second != child)
                                             ? it->second
                                             : 0;
            nodes_[child].fail = target;
            nodes_[child].output_link =
                nodes_[target].outputs.empty() ? nodes_[target].output_link : target;
            queue.push_back(child);
        }
    }
}

std::uint32_t TokenAutomaton::step(std::uint32_t state, std::uint32_t symbol) const {
    for (;;) {
        const auto& edges = nodes_[state].next;
        if (auto it = edges.find(symbol); it != edges.end()) return it->second;
        if (state == 0) return 0;
        state = nodes_[state].fail;
    }
}

std::vector<TokenAutomaton::Hit> TokenAutomaton::scan(const std::vector<Token>& tokens) const {
    std::vector<std::uint32_t> symbols(tokens.size(), 0);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (auto it = symbols_.find(tokens[i].surface); it != symbols_.end()) symbols[i] = it->second;
    }
    return scan_symbols(symbols);
}

std::vector<TokenAutomaton::Hit> TokenAutomaton::scan_symbols(
    const std::vector<std::uint32_t>& symbols) const {
    std::vector<Hit> hits;
    if (nodes_.size() <= 1) return hits;
    std::uint32_t state = 0;
    for (std::size_t i = 0; i < symbols.size(); ++i) {
        if (symbols[i] == 0) {
            state = 0;
            continue;
        }
        state = step(state, symbols[i]);
        // Deeper nodes first: this state, then the output-link chain.
        for (std::uint32_t node = nodes_[state].outputs.empty() ? nodes_[state].output_link : state;
             node != 0; node = nodes_[node].output_link) {
            for (auto pattern : nodes_[node].outputs) {
                const std::size_t length = pattern_lengths_[pattern];
                hits.push_back({pattern, i + 1 - length, i});
            }
        }
    }
    return hits;
}

namespace {

std::vector<std::vector<std::string>> negation_patterns(const Lexicon& lexicon,
                                                        NegationPosition position) {
    std::vector<std::vector<std::string>> out;
    for (const auto& term : lexicon.negations()) {
        if (term.position == position) out.push_back(phrase_tokens(term.phrase));
    }
    return out;
}

}  // namespace

PhraseMatcher::PhraseMatcher(const Lexicon& lexicon, NegationConfig negation)
    : negation_(negation) {
    negation_.validate();
    std::vector<std::vector<std::string>> patterns;
    for (const Simclin* s : lexicon.active()) {
        auto tokens = phrase_tokens(s->phrase);
        if (tokens.empty()) continue;
        simclins_.push_back({s->phrase, s->label});
        patterns.push_back(std::move(tokens));
    }
    simclin_automaton_ = TokenAutomaton(patterns, symbols_);
    pre_automaton_ = TokenAutomaton(negation_patterns(lexicon, NegationPosition::Pre), symbols_);
    post_automaton_ = TokenAutomaton(negation_patterns(lexicon, NegationPosition::Post), symbols_);
}

std::vector<std::uint32_t> PhraseMatcher::symbolize(const std::vector<Token>& tokens) const {
    std::vector<std::uint32_t> out(tokens.size(), 0);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (auto it = symbols_.find(tokens[i].surface); it != symbols_.end()) out[i] = it->second;
    }
    return out;
}

std::vector<Match> PhraseMatcher::find(const Note& note, const std::vector<Token>& tokens) const {
    return find_symbols(note, tokens, symbolize(tokens));
}

void PhraseMatcher::negate(std::vector<Match>& matches, const std::vector<Token>& tokens) const {
    if (matches.empty()) return;
    negate_symbols(matches, tokens, symbolize(tokens));
}

std::vector<Match> PhraseMatcher::find_negated(const Note& note,
                                               const std::vector<Token>& tokens) const {
    const auto symbols = symbolize(tokens);
    auto matches = find_symbols(note, tokens, symbols);
    negate_symbols(matches, tokens, symbols);
    return matches;
}

std::vector<Match> PhraseMatcher::find_symbols(const Note& note, const std::vector<Token>& tokens,
                                               const std::vector<std::uint32_t>& symbols) const {
    const auto hits = simclin_automaton_.scan_symbols(symbols);

    // Longest first, then leftmost. Hits arrive ordered by end token, so a
    // stable bucket pass over length keeps leftmost order inside a bucket.
    std::size_t longest = 0;
    for (const auto& hit : hits) longest = std::max(longest, hit.last_token - hit.first_token + 1);
    std::vector<std::size_t> bucket_start(longest + 2, 0);
    for (const auto& hit : hits) ++bucket_start[longest - (hit.last_token - hit.first_token + 1) + 1];
    for (std::size_t b = 1; b < bucket_start.size(); ++b) bucket_start[b] += bucket_start[b - 1];
    std::vector<std::size_t> order(hits.size());
    for (std::size_t i = 0; i < hits.size(); ++i) {
        order[bucket_start[longest - (hits[i].last_token - hits[i].first_token + 1)]++] = i;
    }

    std::array<std::vector<bool>, kLabelCount> occupied;
    std::vector<std::size_t> kept;
    for (auto index : order) {
        const auto& hit = hits[index];
        auto& taken = occupied[ordinal(simclins_[hit.pattern].label)];
        if (taken.empty()) taken.assign(tokens.size(), false);
        bool free = true;
        for (auto t = hit.first_token; t <= hit.last_token && free; ++t) free = !taken[t];
        if (!free) continue;
        for (auto t = hit.first_token; t <= hit.last_token; ++t) taken[t] = true;
        kept.push_back(index);
    }

    // Text order: bucket by first token, then (last token, label) within the
    // handful of matches sharing a start.
    std::vector<std::size_t> start_offset(tokens.size() + 1, 0);
    for (auto index : kept) ++start_offset[hits[index].first_token + 1];
    for (std::size_t t = 1; t < start_offset.size(); ++t) start_offset[t] += start_offset[t - 1];
    std::vector<std::size_t> text_order(kept.size());
    for (auto index : kept) text_order[start_offset[hits[index].first_token]++] = index;
    auto key = [&](std::size_t index) {
        return std::pair{hits[index].last_token, ordinal(simclins_[hits[index].pattern].label)};
    };
    for (std::size_t i = 1; i < text_order.size(); ++i) {
        const auto current = text_order[i];
        std::size_t j = i;
        while (j > 0 && hits[text_order[j - 1]].first_token == hits[current].first_token &&
               key(current) < key(text_order[j - 1])) {
            text_order[j] = text_order[j - 1];
            --j;
        }
        text_order[j] = current;
    }

    std::vector<Match> matches;
    matches.reserve(text_order.size());
    for (auto index : text_order) {
        const auto& hit = hits[index];
        const auto& pattern = simclins_[hit.pattern];
        Match match;
        match.note_id = note.note_id;
        match.label = pattern.label;
        match.phrase = pattern.phrase;
        match.start = tokens[hit.first_token].start;
        match.end = tokens[hit.last_token].end;
        match.first_token = hit.first_token;
        match.last_token = hit.last_token;
        matches.push_back(std::move(match));
    }
    return matches;
}

void PhraseMatcher::negate_symbols(std::vector<Match>& matches, const std::vector<Token>& tokens,
                                   const std::vector<std::uint32_t>& symbols) const {
    if (matches.empty()) return;
    std::vector<bool> pre_end(tokens.size(), false);
    std::vector<bool> post_begin(tokens.size(), false);
    for (const auto& hit : pre_automaton_.scan_symbols(symbols)) pre_end[hit.last_token] = true;
    for (const auto& hit : post_automaton_.scan_symbols(symbols)) post_begin[hit.first_token] = true;

    for (auto& match : matches) {
        const std::size_t sentence = tokens[match.first_token].sentence_index;
        bool negated = false;
        for (std::size_t k = 1; k <= negation_.pre_window && k <= match.first_token; ++k) {
            const std::size_t t = match.first_token - k;
            if (tokens[t].sentence_index != sentence) break;
            if (pre_end[t]) {
                negated = true;
                break;
            }
        }
        const std::size_t end_sentence = tokens[match.last_token].sentence_index;
        for (std::size_t k = 1; !negated && k <= negation_.post_window; ++k) {
            const std::size_t t = match.last_token + k;
            if (t >= tokens.size() || tokens[t].sentence_index != end_sentence) break;
            if (post_begin[t]) negated = true;
        }
        match.negated = negated;
    }
}

std::vector<Match> find_matches(const Note& note, const std::vector<Token>& tokens,
                                const Lexicon& lexicon) {
    return PhraseMatcher(lexicon).find(note, tokens);
}

std::vector<Match> find_matches(const Note& note, const Lexicon& lexicon) {
    return find_matches(note, analyze(note.text), lexicon);
}

void apply_negation(std::vector<Match>& matches, const std::vector<Token>& tokens,
                    const Lexicon& lexicon, const NegationConfig& config) {
    // Only the negation automata are used; an empty-simclin view is enough.
    Lexicon negations_only;
    for (const auto& term : lexicon.negations()) {
        negations_only.add_negation(term.phrase, term.position);
    }
    PhraseMatcher(negations_only, config).negate(matches, tokens);
}

LabelVector note_label_vector(const std::vector<Match>& matches) {
    LabelVector out{};
    for (const auto& match : matches) {
        if (!match.negated) out[ordinal(match.label)] = 1;
    }
    return out;
}

NoteAnalysis analyze_note(const PhraseMatcher& matcher, const Note& note) {
    NoteAnalysis analysis;
    analysis.tokens = analyze(note.text);
    analysis.matches = matcher.find_negated(note, analysis.tokens);
    analysis.labels = note_label_vector(analysis.matches);
    return analysis;
}

std::vector<NoteAnalysis> analyze_corpus(const PhraseMatcher& matcher,
                                         const std::vector<Note>& notes, std::size_t workers) {
    std::vector<NoteAnalysis> out(notes.size());
    parallel_for(notes.size(), workers,
                 [&](std::size_t i) { out[i] = analyze_note(matcher, notes[i]); });
    return out;
}

std::string match_to_json_line(const Match& match) {
    nlohmann::ordered_json j;
    j["note_id"] = match.note_id;
    j["label"] = label_name(match.label);
    j["phrase"] = match.phrase;
    j["start"] = match.start;
    j["end"] = match.end;
    j["negated"] = match.negated;
    return j.dump();
}

}  // namespace pheno

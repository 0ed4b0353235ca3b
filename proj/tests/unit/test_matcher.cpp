#include "pheno/corpus.hpp"
#include "pheno/error.hpp"
#include "pheno/lexicon.hpp"
#include "pheno/matcher.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <random>
#include <set>
#include <tuple>

using namespace pheno;

namespace {

Lexicon fixture_lexicon() {
    auto lex = Lexicon::with_default_negations();
    lex.add_seed("weakness", Label::Weakness);
    lex.add_seed("pain", Label::Pain);
    lex.add_seed("gait instability", Label::Gait);
    return lex;
}

std::vector<Match> run(const Lexicon& lex, const std::string& text, NegationConfig config = {}) {
    PhraseMatcher matcher(lex, config);
    Note note{"n", text, {}};
    return analyze_note(matcher, note).matches;
}

const Match& only(const std::vector<Match>& matches, Label label) {
    const Match* found = nullptr;
    for (const auto& m : matches) {
        if (m.label == label) {
            REQUIRE(found == nullptr);
            found = &m;
        }
    }
    REQUIRE(found != nullptr);
    return *found;
}

}  // namespace

TEST_CASE("negation fixtures") {
    const auto lex = fixture_lexicon();
    CHECK(only(run(lex, "no sign of weakness"), Label::Weakness).negated);
    CHECK(only(run(lex, "weakness negative"), Label::Weakness).negated);
    CHECK_FALSE(only(run(lex, "patient reports weakness"), Label::Weakness).negated);
    auto mixed = run(lex, "no pain. weakness persists");
    CHECK(only(mixed, Label::Pain).negated);
    CHECK_FALSE(only(mixed, Label::Weakness).negated);
}

TEST_CASE("negation windows are bounded") {
    const auto lex = fixture_lexicon();
    // "denies" five tokens before the match is in range, six is not.
    CHECK(only(run(lex, "denies a b c d weakness"), Label::Weakness).negated);
    CHECK_FALSE(only(run(lex, "denies a b c d e weakness"), Label::Weakness).negated);
    CHECK(only(run(lex, "weakness a b absent"), Label::Weakness).negated);
    CHECK_FALSE(only(run(lex, "weakness a b c absent"), Label::Weakness).negated);
    NegationConfig wide{10, 10};
    CHECK(only(run(lex, "denies a b c d e weakness", wide), Label::Weakness).negated);
    CHECK_FALSE(only(run(lex, "weakness! absent"), Label::Weakness).negated);
}

TEST_CASE("match offsets point at the phrase") {
    const auto lex = fixture_lexicon();
    const std::string text = "Exam: Gait  Instability noted.";
    auto matches = run(lex, text);
    REQUIRE(matches.size() == 1);
    CHECK(matches[0].phrase == "gait_instability");
    CHECK(text.substr(matches[0].start, matches[0].end - matches[0].start) == "Gait  Instability");
    CHECK(matches[0].note_id == "n");
}

TEST_CASE("overlaps resolve per label, longest then leftmost") {
    Lexicon lex;
    lex.add_seed("left sided weakness", Label::Weakness);
    lex.add_seed("weakness", Label::Weakness);
    lex.add_seed("sided weakness", Label::Hypertonia);
    auto matches = run(lex, "left sided weakness");
    REQUIRE(matches.size() == 2);
    CHECK(only(matches, Label::Weakness).phrase == "left_sided_weakness");
    CHECK(only(matches, Label::Hypertonia).phrase == "sided_weakness");

    Lexicon tie;
    tie.add_seed("a b", Label::Pain);
    tie.add_seed("b c", Label::Pain);
    auto t = run(tie, "a b c");
    REQUIRE(t.size() == 1);
    CHECK(t[0].phrase == "a_b");
}

TEST_CASE("rejected simclins never match") {
    auto lex = fixture_lexicon();
    lex.decide("tired", Label::Fatigue, Decision::Reject);
    lex.decide("exhausted", Label::Fatigue, Decision::Accept);
    auto matches = run(lex, "tired and exhausted");
    REQUIRE(matches.size() == 1);
    CHECK(matches[0].phrase == "exhausted");
}

TEST_CASE("label vector ignores negated matches") {
    const auto lex = fixture_lexicon();
    PhraseMatcher matcher(lex);
    auto analysis = analyze_note(matcher, {"n", "Denies pain. Weakness noted.", {}});
    CHECK(analysis.labels[ordinal(Label::Pain)] == 0);
    CHECK(analysis.labels[ordinal(Label::Weakness)] == 1);
}

TEST_CASE("automaton reports overlapping and nested patterns") {
    TokenAutomaton automaton({{"a", "b"}, {"b"}, {"a", "b", "c"}, {"c", "a"}});
    auto hits = automaton.scan(analyze("a b c a b"));
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> got;
    for (const auto& h : hits) got.emplace(h.pattern, h.first_token, h.last_token);
    std::set<std::tuple<std::size_t, std::size_t, std::size_t>> expected = {
        {0, 0, 1}, {1, 1, 1}, {2, 0, 2}, {3, 2, 3}, {0, 3, 4}, {1, 4, 4}};
    CHECK(got == expected);
}

TEST_CASE("matcher equals brute force on random token streams") {
    const std::vector<std::string> alphabet = {"a", "b", "c", "d", "e"};
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        Lexicon lex;
        const int patterns = 1 + static_cast<int>(rng() % 8);
        for (int p = 0; p < patterns; ++p) {
            std::string phrase;
            const int len = 1 + static_cast<int>(rng() % 3);
            for (int k = 0; k < len; ++k) phrase += (k ? " " : "") + alphabet[rng() % alphabet.size()];
            const Label label = kAllLabels[rng() % 3];
            if (!lex.find(normalize_phrase(phrase), label)) lex.add_seed(phrase, label);
        }
        std::string text;
        const int n = static_cast<int>(rng() % 30);
        for (int k = 0; k < n; ++k) text += alphabet[rng() % alphabet.size()] + " ";
        const auto tokens = analyze(text);
        auto got = PhraseMatcher(lex).find({"n", text, {}}, tokens);
        auto expected = oracle::brute_force_matches(tokens, lex);
        REQUIRE(got.size() == expected.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].first_token == expected[i].first);
            CHECK(got[i].last_token == expected[i].last);
            CHECK(got[i].label == expected[i].label);
            CHECK(got[i].phrase == expected[i].phrase);
        }
    }
}

TEST_CASE("parallel analysis preserves order and results") {
    const auto lex = fixture_lexicon();
    PhraseMatcher matcher(lex);
    std::vector<Note> notes;
    for (int i = 0; i < 200; ++i) {
        notes.push_back({"n" + std::to_string(i), i % 3 ? "patient reports weakness" : "no pain today", {}});
    }
    auto serial = analyze_corpus(matcher, notes, 1);
    auto parallel = analyze_corpus(matcher, notes, 4);
    REQUIRE(serial.size() == parallel.size());
    for (std::size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].matches == parallel[i].matches);
        CHECK(serial[i].labels == parallel[i].labels);
    }
}

TEST_CASE("negation config validation") {
    CHECK_NOTHROW((NegationConfig{1, 1}).validate());
    CHECK_THROWS_AS((NegationConfig{0, 3}).validate(), Error);
    CHECK_THROWS_AS((NegationConfig{5, 0}).validate(), Error);
}

TEST_CASE("match json line") {
    Match m{"n1", Label::Pain, "electric_shock", 3, 17, true, 1, 2};
    auto line = match_to_json_line(m);
    CHECK(line.find("\"label\":\"pain\"") != std::string::npos);
    CHECK(line.find("\"negated\":true") != std::string::npos);
}

TEST_CASE("output does not depend on simclin insertion order") {
    std::vector<std::pair<std::string, Label>> seeds = {
        {"weakness", Label::Weakness}, {"left sided weakness", Label::Weakness},
        {"pain", Label::Pain},         {"burning pain", Label::Pain},
        {"sided", Label::Gait}};
    const std::string text = "Left sided weakness and burning pain. No pain on the left sided exam.";
    auto build = [&](const std::vector<std::pair<std::string, Label>>& order) {
        auto lex = Lexicon::with_default_negations();
        for (const auto& [p, l] : order) lex.add_seed(p, l);
        return run(lex, text);
    };
    auto forward = build(seeds);
    std::reverse(seeds.begin(), seeds.end());
    CHECK(build(seeds) == forward);
}

TEST_CASE("negation only changes the negated flag") {
    const auto lex = fixture_lexicon();
    const std::string text = "No pain. Weakness absent. Gait instability noted without weakness.";
    const auto tokens = analyze(text);
    auto before = find_matches({"n", text, {}}, tokens, lex);
    auto after = before;
    apply_negation(after, tokens, lex);
    REQUIRE(before.size() == after.size());
    std::size_t negated = 0;
    for (std::size_t i = 0; i < before.size(); ++i) {
        auto copy = after[i];
        copy.negated = before[i].negated;
        CHECK(copy == before[i]);
        negated += after[i].negated;
    }
    CHECK(negated == 3);
}

TEST_CASE("count of occurrences does not matter") {
    const auto lex = fixture_lexicon();
    PhraseMatcher matcher(lex);
    auto analysis = analyze_note(matcher, {"n", "weakness. weakness. weakness.", {}});
    CHECK(analysis.matches.size() == 3);
    CHECK(analysis.labels[ordinal(Label::Weakness)] == 1);
    CHECK(note_label_vector({}) == LabelVector{});
}

TEST_CASE("token-level matching does not fire inside words") {
    const auto lex = fixture_lexicon();
    CHECK(run(lex, "trip to Spain, painless").empty());
}

TEST_CASE("matching cost grows linearly with note length") {
    auto lex = Lexicon::with_default_negations();
    const std::vector<std::string> words = {"patient", "reports", "weakness", "pain", "gait", "noted",
                                            "no",      "today",   "left",     "arm",  "leg",  "exam"};
    for (std::size_t i = 0; i < 200; ++i) {
        lex.add_seed(words[i % words.size()] + " " + words[(i * 7 + 3) % words.size()] + " w" + std::to_string(i),
                     kAllLabels[i % kLabelCount]);
    }
    lex.add_seed("weakness", Label::Weakness);
    PhraseMatcher matcher(lex);
    std::mt19937_64 rng(1);
    auto make = [&](std::size_t tokens) {
        std::string text;
        for (std::size_t i = 0; i < tokens; ++i) {
            text += words[rng() % words.size()];
            text += (i % 12 == 11) ? ". " : " ";
        }
        return Note{"n", text, {}};
    };
    auto per_token = [&](std::size_t tokens, int reps) {
        const Note note = make(tokens);
        double best = 1e300;
        for (int r = 0; r < 5; ++r) {
            const auto t0 = std::chrono::steady_clock::now();
            std::size_t sink = 0;
            for (int k = 0; k < reps; ++k) sink += analyze_note(matcher, note).matches.size();
            const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            CHECK(sink > 0);
            best = std::min(best, s / (static_cast<double>(reps) * static_cast<double>(tokens)));
        }
        return best;
    };
    const double small = per_token(1000, 100);
    const double medium = per_token(10000, 10);
    const double large = per_token(100000, 1);
    MESSAGE("ns/token: " << small * 1e9 << " " << medium * 1e9 << " " << large * 1e9);
    CHECK(large <= 2.0 * small);
    CHECK(medium <= 2.0 * small);
}

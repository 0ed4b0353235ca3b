#include "pheno/error.hpp"
#include "pheno/evaluation.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <random>

using namespace pheno;

namespace {

LabelVector cells(std::initializer_list<Label> present) {
    LabelVector v{};
    for (auto l : present) v[ordinal(l)] = 1;
    return v;
}

template <typename F>
ErrorKind kind_of(F&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected pheno::Error");
    return ErrorKind::Io;
}

}  // namespace

TEST_CASE("hand-computed confusion counts") {
    const Scores s = score(Confusion{2, 1, 1, 6});
    CHECK(s.accuracy == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(s.precision == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(s.recall == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    CHECK(s.specificity == doctest::Approx(6.0 / 7.0).epsilon(1e-12));
    CHECK(s.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("zero division policy") {
    const Scores zero = score(Confusion{0, 0, 0, 10});
    CHECK(zero.precision == 0.0);
    CHECK(zero.recall == 0.0);
    CHECK(zero.f1 == 0.0);
    CHECK(zero.specificity == 1.0);
    const Scores one = score(Confusion{0, 0, 0, 10}, 1.0);
    CHECK(one.precision == 1.0);
    CHECK(one.recall == 1.0);
    CHECK(score(Confusion{}, 0.5).accuracy == 0.5);
}

TEST_CASE("four notes two labels") {
    PhenotypeMatrix gold, pred;
    gold.add_row("a", cells({Label::Gait, Label::Pain}));
    gold.add_row("b", cells({Label::Gait}));
    gold.add_row("c", cells({}));
    gold.add_row("d", cells({Label::Pain}));
    pred.add_row("a", cells({Label::Gait}));
    pred.add_row("b", cells({Label::Gait, Label::Pain}));
    pred.add_row("c", cells({Label::Gait}));
    pred.add_row("d", cells({Label::Pain}));
    auto counts = confusion(gold, pred);
    CHECK(counts[ordinal(Label::Gait)] == Confusion{2, 1, 0, 1});
    CHECK(counts[ordinal(Label::Pain)] == Confusion{1, 1, 1, 1});
    CHECK(counts[ordinal(Label::Weakness)] == Confusion{0, 0, 0, 4});
    auto report = metrics(counts);
    CHECK(report.per_label[ordinal(Label::Gait)].precision == doctest::Approx(2.0 / 3.0));
    CHECK(report.per_label[ordinal(Label::Pain)].f1 == doctest::Approx(0.5));
    // micro: tp=3 fp=2 fn=1 tn=70
    CHECK(report.micro.precision == doctest::Approx(0.6));
    CHECK(report.micro.recall == doctest::Approx(0.75));
    CHECK(report.micro.accuracy == doctest::Approx(73.0 / 76.0));
}

TEST_CASE("macro metrics equal the brute-force oracle on random matrices") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        PhenotypeMatrix gold, pred;
        std::vector<LabelVector> g, p;
        for (int r = 0; r < 30; ++r) {
            LabelVector a{}, b{};
            for (std::size_t l = 0; l < kLabelCount; ++l) {
                a[l] = static_cast<std::uint8_t>(rng() % 5 == 0);
                b[l] = static_cast<std::uint8_t>(rng() % 4 == 0);
            }
            gold.add_row("n" + std::to_string(r), a);
            pred.add_row("n" + std::to_string(r), b);
            g.push_back(a);
            p.push_back(b);
        }
        auto report = metrics(confusion(gold, pred));
        auto expected = oracle::brute_force_macro(g, p);
        CHECK(std::abs(report.macro.accuracy - expected.accuracy) <= 1e-12);
        CHECK(std::abs(report.macro.precision - expected.precision) <= 1e-12);
        CHECK(std::abs(report.macro.recall - expected.recall) <= 1e-12);
        CHECK(std::abs(report.macro.specificity - expected.specificity) <= 1e-12);
        CHECK(std::abs(report.macro.f1 - expected.f1) <= 1e-12);
    }
}

TEST_CASE("metrics are bounded and perfect predictions score one") {
    std::mt19937_64 rng(7);
    PhenotypeMatrix gold;
    for (int r = 0; r < 20; ++r) {
        LabelVector a{};
        for (auto& c : a) c = static_cast<std::uint8_t>(rng() & 1);
        gold.add_row(std::to_string(r), a);
    }
    auto report = metrics(confusion(gold, gold));
    for (const auto& s : report.per_label) {
        CHECK(s.accuracy == 1.0);
        CHECK(s.f1 >= 0.0);
        CHECK(s.f1 <= 1.0);
    }
    CHECK(report.macro.accuracy == 1.0);
}

TEST_CASE("misaligned matrices are rejected") {
    PhenotypeMatrix a, b;
    a.add_row("x", {});
    a.add_row("y", {});
    b.add_row("y", {});
    b.add_row("x", {});
    CHECK(kind_of([&] { confusion(a, b); }) == ErrorKind::Alignment);
    CHECK(confusion(a, b.reordered(a.note_ids()))[0].tn == 2);
    CHECK(kind_of([&] { b.reordered({"x", "z"}); }) == ErrorKind::Alignment);
    CHECK(kind_of([&] { a.add_row("x", {}); }) == ErrorKind::Validation);
}

TEST_CASE("matrix csv round trip accepts any label column order") {
    PhenotypeMatrix m;
    m.add_row("n1", cells({Label::Eom, Label::Weakness}));
    m.add_row("n2", cells({}));
    CHECK(PhenotypeMatrix::from_csv(m.to_csv()) == m);
    auto shuffled = PhenotypeMatrix::from_csv(
        "note_id,weakness,eom,behavior,cognitive,fatigue,gait,hyperreflexia,hypertonia,hyporeflexia,"
        "sphincter,incoordination,on,pain,paresthesias,seizure,sleep,speech,tremor,vision\n"
        "n1,1,1,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0\n"
        "n2,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0\n");
    CHECK(shuffled == m);
    CHECK(m.to_csv().substr(0, 17) == "note_id,behavior,");
}

TEST_CASE("matrix csv rejects bad cells and missing labels") {
    CHECK_THROWS_AS(PhenotypeMatrix::from_csv("note_id,behavior\nx,1\n"), Error);
    std::string header = "note_id";
    std::string row = "x";
    for (auto l : kAllLabels) header += "," + std::string(label_name(l)), row += ",0";
    CHECK_NOTHROW(PhenotypeMatrix::from_csv(header + "\n" + row + "\n"));
    row.back() = '2';
    CHECK_THROWS_AS(PhenotypeMatrix::from_csv(header + "\n" + row + "\n"), Error);
}

TEST_CASE("span annotations become a matrix") {
    const std::string jsonl =
        R"({"text":"Gait unsteady. Weakness.","spans":[{"start":0,"end":4,"label":"GAIT"},{"start":15,"end":23,"label":"weakness"}],"meta":{"note_id":"n1"}})"
        "\n"
        R"({"text":"Nothing.","spans":[],"meta":{"note_id":2}})"
        "\n";
    auto set = parse_annotations(jsonl);
    CHECK(set.note_ids == std::vector<std::string>{"n1", "2"});
    REQUIRE(set.spans.size() == 2);
    CHECK(set.spans[0].label == Label::Gait);
    auto m = spans_to_matrix(set.spans, set.note_ids);
    CHECK(m.at(0, Label::Gait) == 1);
    CHECK(m.at(0, Label::Weakness) == 1);
    CHECK(m.ones() == 2);
    CHECK(kind_of([&] { spans_to_matrix(set.spans, {"2"}); }) == ErrorKind::Validation);
}

TEST_CASE("bad annotation lines report the line number") {
    auto expect_parse = [](const std::string& jsonl, const std::string& fragment) {
        try {
            parse_annotations(jsonl);
            FAIL("expected parse error");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Parse);
            CHECK(std::string(e.what()).find(fragment) != std::string::npos);
        }
    };
    const std::string ok = R"({"text":"x","spans":[],"meta":{"note_id":"a"}})";
    expect_parse(ok + "\n" + R"({"text":"abc","spans":[{"start":0,"end":2,"label":"gaits"}],"meta":{"note_id":"b"}})",
                 "2");
    expect_parse(R"({"text":"abc","spans":[{"start":2,"end":9,"label":"gait"}],"meta":{"note_id":"b"}})", "1");
    expect_parse("not json", "1");
}

TEST_CASE("frequency report sorts by count") {
    PhenotypeMatrix m;
    m.add_row("a", cells({Label::Weakness, Label::Pain}));
    m.add_row("b", cells({Label::Weakness}));
    auto rows = frequency_report(m);
    REQUIRE(rows.size() == kLabelCount);
    CHECK(rows[0].label == Label::Weakness);
    CHECK(rows[0].count == 2);
    CHECK(rows[1].label == Label::Pain);
    CHECK(rows[2].label == Label::Behavior);
    CHECK(render_frequency_csv(rows).find("weakness,2") != std::string::npos);
    CHECK(render_frequency_chart(rows).find("weakness") != std::string::npos);
}

TEST_CASE("metrics table lists every implementation") {
    MetricsReport r;
    r.macro = score(Confusion{2, 1, 1, 6});
    auto table = render_metrics_table({{"lexicon", r}, {"llm", r}});
    CHECK(table.find("Implementation") != std::string::npos);
    CHECK(table.find("Specificity") != std::string::npos);
    CHECK(table.find("lexicon") != std::string::npos);
    CHECK(table.find("0.80") != std::string::npos);
    CHECK(table.find("0.86") != std::string::npos);
}

TEST_CASE("swapping gold and pred swaps precision and recall") {
    std::mt19937_64 rng(3);
    PhenotypeMatrix a, b;
    for (int r = 0; r < 25; ++r) {
        LabelVector x{}, y{};
        for (std::size_t l = 0; l < kLabelCount; ++l) {
            x[l] = static_cast<std::uint8_t>(rng() % 3 == 0);
            y[l] = static_cast<std::uint8_t>(rng() % 3 == 0);
        }
        a.add_row(std::to_string(r), x);
        b.add_row(std::to_string(r), y);
    }
    auto ab = confusion(a, b);
    auto ba = confusion(b, a);
    for (std::size_t l = 0; l < kLabelCount; ++l) {
        CHECK(ab[l].total() == 25);
        CHECK(ab[l].fp == ba[l].fn);
        CHECK(ab[l].fn == ba[l].fp);
        const auto s1 = score(ab[l]);
        const auto s2 = score(ba[l]);
        CHECK(s1.precision == s2.recall);
        CHECK(s1.recall == s2.precision);
        CHECK(s1.accuracy == s2.accuracy);
    }
}

TEST_CASE("spans_to_matrix ignores annotation order") {
    std::vector<SpanAnnotation> spans = {
        {"a", 0, 3, Label::Pain}, {"b", 1, 4, Label::Gait}, {"a", 5, 9, Label::Gait}, {"a", 10, 12, Label::Pain}};
    auto forward = spans_to_matrix(spans, {"a", "b", "c"});
    std::reverse(spans.begin(), spans.end());
    CHECK(spans_to_matrix(spans, {"a", "b", "c"}) == forward);
    CHECK(forward.ones() == 3);
}

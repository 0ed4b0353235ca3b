#include "pheno/corpus.hpp"
#include "pheno/error.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

using namespace pheno;

namespace {

std::vector<std::string> surfaces(const std::vector<Token>& tokens) {
    std::vector<std::string> out;
    for (const auto& t : tokens) out.push_back(t.surface);
    return out;
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

TEST_CASE("tokenize lowercases and keeps byte offsets") {
    const std::string text = "Gait  Instability, L-sided.";
    auto tokens = tokenize(text);
    CHECK(surfaces(tokens) == std::vector<std::string>{"gait", "instability", "l", "sided"});
    for (const auto& t : tokens) {
        std::string slice = text.substr(t.start, t.end - t.start);
        for (auto& c : slice) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        CHECK(slice == t.surface);
    }
}

TEST_CASE("plus runs are their own tokens") {
    CHECK(surfaces(tokenize("biceps +++ numbness+")) ==
          std::vector<std::string>{"biceps", "+++", "numbness", "+"});
}

TEST_CASE("non-ascii bytes stay inside words") {
    auto tokens = tokenize("Sjögren syndrome");
    REQUIRE(tokens.size() == 2);
    CHECK(tokens[0].surface == "sjögren");
}

TEST_CASE("sentence indices are contiguous") {
    auto tokens = analyze("No pain. Weakness persists!\n\nGait ok");
    REQUIRE(tokens.size() == 6);
    CHECK(tokens[0].sentence_index == 0);
    CHECK(tokens[1].sentence_index == 0);
    CHECK(tokens[2].sentence_index == 1);
    CHECK(tokens[3].sentence_index == 1);
    CHECK(tokens[4].sentence_index == 2);
    CHECK(tokens[5].sentence_index == 2);
}

TEST_CASE("empty text tokenizes to nothing") {
    CHECK(tokenize("").empty());
    CHECK(tokenize(" ,;- ").empty());
}

TEST_CASE("parse_csv handles quotes, embedded newlines and BOM") {
    auto rows = parse_csv("\xEF\xBB\xBFnote_id,text\r\n1,\"a, \"\"b\"\"\nc\"\n");
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == std::vector<std::string>{"note_id", "text"});
    CHECK(rows[1][1] == "a, \"b\"\nc");
    CHECK(kind_of([] { parse_csv("a,\"unterminated\n"); }) == ErrorKind::Parse);
}

TEST_CASE("csv_escape round-trips through parse_csv") {
    for (std::string field : {"plain", "a,b", "quote\"d", "line\nbreak", ""}) {
        auto rows = parse_csv("x,y\n" + csv_escape(field) + ",end\n");
        REQUIRE(rows.size() == 2);
        CHECK(rows[1][1] == "end");
        CHECK(rows[1][0] == field);
    }
}

TEST_CASE("ingest keeps meta columns and warns on empty text") {
    auto result = ingest_csv_text("note_id,text,diagnosis\n1,Weakness noted,G35\n2,,G35\n3,Gait ok,\n");
    REQUIRE(result.notes.size() == 2);
    CHECK(result.notes[0].note_id == "1");
    CHECK(result.notes[0].meta.at("diagnosis") == "G35");
    CHECK(result.notes[1].note_id == "3");
    REQUIRE(result.warnings.size() == 1);
    CHECK(result.warnings[0].find("'2'") != std::string::npos);
}

TEST_CASE("missing text column is a config error naming the column") {
    try {
        ingest_csv_text("note_id,body\n1,x\n");
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
        CHECK(std::string(e.what()).find("text") != std::string::npos);
    }
}

TEST_CASE("duplicate note id is fatal and cites the id") {
    try {
        ingest_csv_text("note_id,text\nabc,x\nabc,y\n");
        FAIL("expected error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Ingest);
        CHECK(std::string(e.what()).find("abc") != std::string::npos);
    }
}

TEST_CASE("custom column names") {
    CsvColumns columns{"id", "note"};
    auto result = ingest_csv_text("id,note\n7,hello\n", columns);
    REQUIRE(result.notes.size() == 1);
    CHECK(result.notes[0].text == "hello");
}

TEST_CASE("write_notes_csv then ingest_csv is lossless") {
    std::vector<Note> notes = {{"a", "line one\nline \"two\", three", {{"site", "x"}}},
                               {"b", "plain", {{"dx", "G35"}}}};
    auto path = std::filesystem::temp_directory_path() / "pheno_corpus_roundtrip.csv";
    write_notes_csv(path, notes);
    auto back = ingest_csv(path);
    std::filesystem::remove(path);
    REQUIRE(back.notes.size() == 2);
    CHECK(back.notes[0].text == notes[0].text);
    CHECK(back.notes[0].meta.at("site") == "x");
    CHECK(back.notes[1].meta.at("dx") == "G35");
}

TEST_CASE("missing corpus file is a config error") {
    CHECK(kind_of([] { ingest_csv("/nonexistent/notes.csv"); }) == ErrorKind::Config);
}

TEST_CASE("spec sentence examples") {
    auto ab = analyze("A. B");
    REQUIRE(ab.size() == 2);
    CHECK(ab[1].sentence_index == 1);
    auto lines = analyze("line1\nline2");
    CHECK(lines[1].sentence_index == 1);
    for (const auto& t : analyze("single clause without terminator")) CHECK(t.sentence_index == 0);
}

TEST_CASE("token invariants on random text") {
    const std::string alphabet = "abcXYZ09+ .,!?\n-\xC3\xA9";
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        std::string text;
        const int n = static_cast<int>(rng() % 60);
        for (int i = 0; i < n; ++i) text += alphabet[rng() % alphabet.size()];
        auto tokens = analyze(text);
        std::string joined_slices, joined_surfaces;
        for (std::size_t i = 0; i < tokens.size(); ++i) {
            const auto& t = tokens[i];
            CHECK(t.start < t.end);
            if (i > 0) {
                CHECK(tokens[i - 1].end <= t.start);
                CHECK(tokens[i - 1].sentence_index <= t.sentence_index);
            }
            std::string slice = text.substr(t.start, t.end - t.start);
            for (auto& c : slice) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            CHECK(slice == t.surface);
            joined_slices += slice + " ";
            joined_surfaces += t.surface + " ";
        }
        CHECK(joined_slices == joined_surfaces);
        CHECK(split_sentences(tokenize(text), text) == tokens);
        CHECK(surfaces(tokenize(joined_surfaces)) == surfaces(tokens));
    }
}

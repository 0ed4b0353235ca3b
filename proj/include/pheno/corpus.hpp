#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace pheno {

struct Note {
    std::string note_id;
    std::string text;
    std::map<std::string, std::string> meta;
};

/// A lowercased token with byte offsets into the source text.
struct Token {
    std::string surface;
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t sentence_index = 0;

    friend bool operator==(const Token&, const Token&) = default;
};

struct CsvColumns {
    std::string id = "note_id";
    std::string text = "text";
};

struct IngestResult {
    std::vector<Note> notes;
    std::vector<std::string> warnings;  // rejected rows, one line each
};

/// Parse RFC-4180 CSV text into rows of fields. Throws Error(Parse) on an
/// unterminated quoted field.
std::vector<std::vector<std::string>> parse_csv(std::string_view content);

/// Quote a field only when needed (comma, quote, CR or LF present).
std::string csv_escape(std::string_view field);

/// Load a note collection. Remaining columns land in Note::meta. Rows with
/// empty text are dropped with a warning; duplicate ids are fatal.
IngestResult ingest_csv(const std::filesystem::path& path, const CsvColumns& columns = {});
IngestResult ingest_csv_text(std::string_view content, const CsvColumns& columns = {});

/// Write notes back out as CSV: id column, text column, then meta keys in
/// sorted order (union over all notes).
void write_notes_csv(const std::filesystem::path& path, const std::vector<Note>& notes,
                     const CsvColumns& columns = {});

/// Runs of ASCII letters/digits (and any non-ASCII byte, so UTF-8 letters stay
/// inside words) form tokens, runs of '+' form tokens, everything else
/// separates. Surfaces are ASCII-lowercased. sentence_index is left at 0.
std::vector<Token> tokenize(std::string_view text);

/// Assign sentence indices: the index increments at every '.', '!', '?' or
/// '\n' in the original text between consecutive tokens. Empty sentences do
/// not consume an index, so indices are contiguous from 0.
std::vector<Token> split_sentences(std::vector<Token> tokens, std::string_view text);

/// tokenize + split_sentences.
std::vector<Token> analyze(std::string_view text);

}  // namespace pheno

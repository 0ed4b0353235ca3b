#include "pheno/corpus.hpp"

#include "pheno/error.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

namespace pheno {

std::vector<std::vector<std::string>> parse_csv(std::string_view content) {
    if (content.starts_with("\xEF\xBB\xBF")) content.remove_prefix(3);

    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    std::size_t line = 1;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        // A lone empty field is a blank line.
        if (!(row.size() == 1 && row.front().empty())) rows.push_back(std::move(row));
        row.clear();
    };

    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                if (c == '\n') ++line;
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                if (!field_started && field.empty()) {
                    quoted = true;
                    field_started = true;
                } else {
                    field.push_back(c);
                }
                break;
            case ',':
                end_field();
                break;
            case '\r':
                if (i + 1 < content.size() && content[i + 1] == '\n') break;
                end_row();
                ++line;
                break;
            case '\n':
                end_row();
                ++line;
                break;
            default:
                field.push_back(c);
                field_started = true;
        }
    }
    if (quoted) {
        throw Error(ErrorKind::Parse, "unterminated quoted field at line " + std::to_string(line));
    }
    if (!field.empty() || field_started || !row.empty()) end_row();
    return rows;
}

std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

IngestResult ingest_csv_text(std::string_view content, const CsvColumns& columns) {
    auto rows = parse_csv(content);
    if (rows.empty()) throw Error(ErrorKind::Config, "CSV has no header row");

    const auto& header = rows.front();
    auto column_index = [&](const std::string& name) {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            throw Error(ErrorKind::Config, "missing column '" + name + "' in CSV header");
        }
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t id_col = column_index(columns.id);
    const std::size_t text_col = column_index(columns.text);

    IngestResult result;
    std::unordered_set<std::string> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        auto& row = rows[r];
        if (row.size() != header.size()) {
            throw Error(ErrorKind::Parse, "row " + std::to_string(r + 1) + " has " +
                                              std::to_string(row.size()) + " fields, expected " +
                                              std::to_string(header.size()));
        }
        Note note;
        note.note_id = std::string(detail::trim(row[id_col]));
        note.text = std::move(row[text_col]);
        if (note.note_id.empty()) {
            result.warnings.push_back("row " + std::to_string(r + 1) + ": empty note id, skipped");
            continue;
        }
        if (detail::trim(note.text).empty()) {
            result.warnings.push_back("row " + std::to_string(r + 1) + ": note '" + note.note_id +
                                      "' has empty text, skipped");
            continue;
        }
        if (!seen.insert(note.note_id).second) {
            throw Error(ErrorKind::Ingest, "duplicate note_id '" + note.note_id + "' at row " +
                                               std::to_string(r + 1));
        }
        for (std::size_t c = 0; c < header.size(); ++c) {
            if (c != id_col && c != text_col) note.meta[header[c]] = std::move(row[c]);
        }
        result.notes.push_back(std::move(note));
    }
    return result;
}

IngestResult ingest_csv(const std::filesystem::path& path, const CsvColumns& columns) {
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorKind::Config, "corpus file '" + path.string() + "' does not exist");
    }
    return ingest_csv_text(detail::read_file(path), columns);
}

void write_notes_csv(const std::filesystem::path& path, const std::vector<Note>& notes,
                     const CsvColumns& columns) {
    std::set<std::string> meta_keys;
    for (const auto& note : notes) {
        for (const auto& [key, value] : note.meta) meta_keys.insert(key);
    }
    std::string out = csv_escape(columns.id) + "," + csv_escape(columns.text);
    for (const auto& key : meta_keys) out += "," + csv_escape(key);
    out += "\n";
    for (const auto& note : notes) {
        out += csv_escape(note.note_id) + "," + csv_escape(note.text);
        for (const auto& key : meta_keys) {
            auto it = note.meta.find(key);
            out += ",";
            if (it != note.meta.end()) out += csv_escape(it->second);
        }
        out += "\n";
    }
    detail::write_file_atomic(path, out);
}

namespace {

enum class CharClass { Word, Plus, Separator };

CharClass classify(unsigned char c) noexcept {
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80) {
        return CharClass::Word;
    }
    if (c == '+') return CharClass::Plus;
    return CharClass::Separator;
}

bool is_sentence_break(char c) noexcept { return c == '.' || c == '!' || c == '?' || c == '\n'; }

}  // namespace

namespace {

// One pass over the text. With `sentences` set, sentence indices are
// assigned on the way.
std::vector<Token> scan_tokens(std::string_view text, bool sentences) {
    std::vector<Token> tokens;
    tokens.reserve(text.size() / 5 + 1);
    std::size_t sentence = 0;
    bool pending_break = false;
    std::size_t i = 0;
    while (i < text.size()) {
        const CharClass cls = classify(static_cast<unsigned char>(text[i]));
        if (cls == CharClass::Separator) {
            pending_break = pending_break || is_sentence_break(text[i]);
            ++i;
            continue;
        }
        const std::size_t start = i;
        while (i < text.size() && classify(static_cast<unsigned char>(text[i])) == cls) ++i;
        if (sentences && pending_break && !tokens.empty()) ++sentence;
        pending_break = false;
        Token& token = tokens.emplace_back();
        token.start = start;
        token.end = i;
        token.sentence_index = sentences ? sentence : 0;
        token.surface.assign(text.data() + start, i - start);
        for (auto& c : token.surface) c = detail::lower_ascii(c);
    }
    return tokens;
}

}  // namespace

std::vector<Token> tokenize(std::string_view text) { return scan_tokens(text, false); }

std::vector<Token> split_sentences(std::vector<Token> tokens, std::string_view text) {
    std::size_t sentence = 0;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
        if (t > 0) {
            const auto gap_begin = tokens[t - 1].end;
            const auto gap_end = std::min(tokens[t].start, text.size());
            for (std::size_t i = gap_begin; i < gap_end; ++i) {
                if (is_sentence_break(text[i])) {
                    ++sentence;
                    break;
                }
            }
        }
        tokens[t].sentence_index = sentence;
    }
    return tokens;
}

std::vector<Token> analyze(std::string_view text) { return scan_tokens(text, true); }

}  // namespace pheno

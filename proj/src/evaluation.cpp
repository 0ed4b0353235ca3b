#include "pheno/evaluation.hpp"

#include "pheno/corpus.hpp"
#include "pheno/error.hpp"
#include "text_util.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

namespace pheno {

AnnotationSet parse_annotations(std::string_view jsonl) {
    AnnotationSet out;
    std::unordered_map<std::string, bool> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= jsonl.size()) {
        const auto newline = jsonl.find('\n', pos);
        const auto line = detail::trim(
            jsonl.substr(pos, newline == std::string_view::npos ? std::string_view::npos : newline - pos));
        pos = newline == std::string_view::npos ? jsonl.size() + 1 : newline + 1;
        ++line_no;
        if (line.empty()) continue;

        auto fail = [&](const std::string& what) {
            return Error(ErrorKind::Parse, "annotations line " + std::to_string(line_no) + ": " + what);
        };
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
            throw fail("not valid JSON");
        }
        if (!doc.is_object()) throw fail("expected a JSON object");
        auto text_it = doc.find("text");
        if (text_it == doc.end() || !text_it->is_string()) throw fail("missing \"text\"");
        const auto& text = text_it->get_ref<const std::string&>();

        auto meta = doc.find("meta");
        if (meta == doc.end() || !meta->is_object() || !meta->contains("note_id")) {
            throw fail("missing \"meta.note_id\"");
        }
        const auto& id_value = (*meta)["note_id"];
        std::string note_id;
        if (id_value.is_string()) {
            note_id = id_value.get<std::string>();
        } else if (id_value.is_number_integer()) {
            note_id = std::to_string(id_value.get<long long>());
        } else {
            throw fail("\"meta.note_id\" must be a string or integer");
        }
        if (note_id.empty()) throw fail("empty note_id");
        if (!seen.contains(note_id)) {
            seen.emplace(note_id, true);
            out.note_ids.push_back(note_id);
        }

        auto spans = doc.find("spans");
        if (spans == doc.end() || spans->is_null()) continue;
        if (!spans->is_array()) throw fail("\"spans\" must be an array");
        for (const auto& span : *spans) {
            if (!span.is_object() || !span.contains("start") || !span.contains("end") ||
                !span.contains("label")) {
                throw fail("span needs \"start\", \"end\" and \"label\"");
            }
            if (!span["start"].is_number_integer() || !span["end"].is_number_integer() ||
                !span["label"].is_string()) {
                throw fail("span fields have the wrong type");
            }
            const auto label_text = span["label"].get<std::string>();
            const auto label = parse_label(label_text);
            if (!label) throw fail("unknown label '" + label_text + "'");
            const auto start = span["start"].get<long long>();
            const auto end = span["end"].get<long long>();
            if (start < 0 || end <= start || static_cast<std::size_t>(end) > text.size()) {
                throw fail("span offsets [" + std::to_string(start) + ", " + std::to_string(end) +
                           ") out of range for text of " + std::to_string(text.size()) + " bytes");
            }
            out.spans.push_back({note_id, static_cast<std::size_t>(start),
                                 static_cast<std::size_t>(end), *label});
        }
    }
    return out;
}

AnnotationSet load_annotations(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorKind::Config, "annotation file '" + path.string() + "' does not exist");
    }
    return parse_annotations(detail::read_file(path));
}

PhenotypeMatrix::PhenotypeMatrix(std::vector<std::string> note_ids) {
    for (auto& id : note_ids) add_row(std::move(id), LabelVector{});
}

void PhenotypeMatrix::add_row(std::string note_id, const LabelVector& cells) {
    for (auto c : cells) {
        if (c > 1) throw Error(ErrorKind::Validation, "matrix cells must be 0 or 1");
    }
    if (!index_.emplace(note_id, note_ids_.size()).second) {
        throw Error(ErrorKind::Validation, "duplicate note_id '" + note_id + "' in matrix");
    }
    note_ids_.push_back(std::move(note_id));
    cells_.push_back(cells);
}

std::size_t PhenotypeMatrix::row_of(std::string_view note_id) const {
    auto it = index_.find(std::string(note_id));
    if (it == index_.end()) {
        throw Error(ErrorKind::Lookup, "note_id '" + std::string(note_id) + "' not in matrix");
    }
    return it->second;
}

bool PhenotypeMatrix::contains(std::string_view note_id) const {
    return index_.contains(std::string(note_id));
}

std::size_t PhenotypeMatrix::ones() const noexcept {
    std::size_t total = 0;
    for (const auto& row : cells_) {
        for (auto c : row) total += c;
    }
    return total;
}

PhenotypeMatrix PhenotypeMatrix::reordered(const std::vector<std::string>& order) const {
    if (order.size() != rows()) {
        throw Error(ErrorKind::Alignment, "matrix has " + std::to_string(rows()) +
                                              " rows but " + std::to_string(order.size()) +
                                              " note ids were requested");
    }
    PhenotypeMatrix out;
    for (const auto& id : order) {
        if (!contains(id)) {
            throw Error(ErrorKind::Alignment, "note_id '" + id + "' missing from matrix");
        }
        out.add_row(id, cells_[row_of(id)]);
    }
    return out;
}

std::string PhenotypeMatrix::to_csv() const {
    std::string out = "note_id";
    for (auto label : kAllLabels) {
        out += ',';
        out += label_name(label);
    }
    out += '\n';
    for (std::size_t r = 0; r < rows(); ++r) {
        out += csv_escape(note_ids_[r]);
        for (auto c : cells_[r]) {
            out += ',';
            out += static_cast<char>('0' + c);
        }
        out += '\n';
    }
    return out;
}

PhenotypeMatrix PhenotypeMatrix::from_csv(std::string_view csv) {
    const auto rows = parse_csv(csv);
    if (rows.empty()) throw Error(ErrorKind::Parse, "matrix CSV has no header");
    const auto& header = rows.front();
    if (header.empty() || detail::trim(header[0]) != "note_id") {
        throw Error(ErrorKind::Parse, "matrix CSV must start with a note_id column");
    }
    std::array<std::size_t, kLabelCount> column{};
    std::array<bool, kLabelCount> found{};
    for (std::size_t c = 1; c < header.size(); ++c) {
        const auto label = parse_label(header[c]);
        if (!label) throw Error(ErrorKind::Parse, "matrix CSV: unknown label column '" + header[c] + "'");
        if (found[ordinal(*label)]) {
            throw Error(ErrorKind::Parse, "matrix CSV: duplicate label column '" + header[c] + "'");
        }
        found[ordinal(*label)] = true;
        column[ordinal(*label)] = c;
    }
    for (auto label : kAllLabels) {
        if (!found[ordinal(label)]) {
            throw Error(ErrorKind::Parse, "matrix CSV: missing label column '" +
                                              std::string(label_name(label)) + "'");
        }
    }
    PhenotypeMatrix out;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.size() != header.size()) {
            throw Error(ErrorKind::Parse, "matrix CSV row " + std::to_string(r + 1) +
                                              " has the wrong number of fields");
        }
        LabelVector cells{};
        for (std::size_t l = 0; l < kLabelCount; ++l) {
            const auto cell = detail::trim(row[column[l]]);
            if (cell != "0" && cell != "1") {
                throw Error(ErrorKind::Parse, "matrix CSV row " + std::to_string(r + 1) +
                                                  ": cell must be 0 or 1, got '" +
                                                  std::string(cell) + "'");
            }
            cells[l] = cell == "1" ? 1 : 0;
        }
        try {
            out.add_row(std::string(detail::trim(row[0])), cells);
        } catch (const Error& e) {
            throw Error(ErrorKind::Parse, "matrix CSV row " + std::to_string(r + 1) + ": " + e.what());
        }
    }
    return out;
}

void PhenotypeMatrix::save_csv(const std::filesystem::path& path) const {
    detail::write_file_atomic(path, to_csv());
}

PhenotypeMatrix PhenotypeMatrix::load_csv(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorKind::Config, "matrix file '" + path.string() + "' does not exist");
    }
    return from_csv(detail::read_file(path));
}

PhenotypeMatrix spans_to_matrix(const std::vector<SpanAnnotation>& spans,
                                const std::vector<std::string>& note_ids) {
    PhenotypeMatrix matrix(note_ids);
    for (const auto& span : spans) {
        if (!matrix.contains(span.note_id)) {
            throw Error(ErrorKind::Validation,
                        "annotation refers to unknown note_id '" + span.note_id + "'");
        }
        matrix.row(matrix.row_of(span.note_id))[ordinal(span.label)] = 1;
    }
    return matrix;
}

ConfusionCounts confusion(const PhenotypeMatrix& gold, const PhenotypeMatrix& pred) {
    if (gold.rows() != pred.rows()) {
        throw Error(ErrorKind::Alignment, "gold has " + std::to_string(gold.rows()) +
                                              " rows, prediction has " +
                                              std::to_string(pred.rows()));
    }
    for (std::size_t r = 0; r < gold.rows(); ++r) {
        if (gold.note_ids()[r] != pred.note_ids()[r]) {
            throw Error(ErrorKind::Alignment, "row " + std::to_string(r) + ": gold note '" +
                                                  gold.note_ids()[r] + "' vs prediction note '" +
                                                  pred.note_ids()[r] + "'");
        }
    }
    ConfusionCounts counts{};
    for (std::size_t r = 0; r < gold.rows(); ++r) {
        const auto& g = gold.row(r);
        const auto& p = pred.row(r);
        for (std::size_t l = 0; l < kLabelCount; ++l) {
            auto& c = counts[l];
            if (g[l] && p[l]) ++c.tp;
            else if (!g[l] && p[l]) ++c.fp;
            else if (g[l] && !p[l]) ++c.fn;
            else ++c.tn;
        }
    }
    return counts;
}

Scores score(const Confusion& c, double zero_division) {
    auto ratio = [zero_division](std::size_t num, std::size_t den) {
        return den == 0 ? zero_division : static_cast<double>(num) / static_cast<double>(den);
    };
    Scores s;
    s.accuracy = ratio(c.tp + c.tn, c.total());
    s.precision = ratio(c.tp, c.tp + c.fp);
    s.recall = ratio(c.tp, c.tp + c.fn);
    s.specificity = ratio(c.tn, c.tn + c.fp);
    const double denom = s.precision + s.recall;
    s.f1 = denom == 0.0 ? zero_division : 2.0 * s.precision * s.recall / denom;
    return s;
}

MetricsReport metrics(const ConfusionCounts& counts, double zero_division) {
    MetricsReport report;
    Confusion summed;
    for (std::size_t l = 0; l < kLabelCount; ++l) {
        report.per_label[l] = score(counts[l], zero_division);
        summed.tp += counts[l].tp;
        summed.fp += counts[l].fp;
        summed.fn += counts[l].fn;
        summed.tn += counts[l].tn;
    }
    for (const auto& s : report.per_label) {
        report.macro.accuracy += s.accuracy;
        report.macro.precision += s.precision;
        report.macro.recall += s.recall;
        report.macro.specificity += s.specificity;
        report.macro.f1 += s.f1;
    }
    const double n = static_cast<double>(kLabelCount);
    report.macro.accuracy /= n;
    report.macro.precision /= n;
    report.macro.recall /= n;
    report.macro.specificity /= n;
    report.macro.f1 /= n;
    report.micro = score(summed, zero_division);
    return report;
}

namespace {

std::string fixed(double value, int decimals) {
    char buffer[64];
    std::snprintf(buffer, sizeof buffer, "%.*f", decimals, value);
    return buffer;
}

std::string pad(std::string text, std::size_t width) {
    if (text.size() < width) text.append(width - text.size(), ' ');
    return text;
}

}  // namespace

std::string render_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows,
                                 int decimals) {
    const std::vector<std::string> headers = {"Implementation", "Accuracy", "Precision",
                                              "Recall",         "Specificity", "F1"};
    std::vector<std::vector<std::string>> cells;
    for (const auto& [name, report] : rows) {
        const auto& m = report.macro;
        cells.push_back({name, fixed(m.accuracy, decimals), fixed(m.precision, decimals),
                         fixed(m.recall, decimals), fixed(m.specificity, decimals),
                         fixed(m.f1, decimals)});
    }
    std::vector<std::size_t> widths(headers.size());
    for (std::size_t c = 0; c < headers.size(); ++c) {
        widths[c] = headers[c].size();
        for (const auto& row : cells) widths[c] = std::max(widths[c], row[c].size());
    }
    auto line = [&](const std::vector<std::string>& row) {
        std::string out = "|";
        for (std::size_t c = 0; c < row.size(); ++c) out += " " + pad(row[c], widths[c]) + " |";
        return out + "\n";
    };
    std::string rule = "+";
    for (auto w : widths) rule += std::string(w + 2, '-') + "+";
    rule += "\n";

    std::string out = rule + line(headers) + rule;
    for (const auto& row : cells) out += line(row);
    out += rule;
    return out;
}

std::string render_metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows) {
    std::string out = "implementation,accuracy,precision,recall,specificity,f1\n";
    for (const auto& [name, report] : rows) {
        const auto& m = report.macro;
        out += csv_escape(name) + "," + detail::format_double(m.accuracy) + "," +
               detail::format_double(m.precision) + "," + detail::format_double(m.recall) + "," +
               detail::format_double(m.specificity) + "," + detail::format_double(m.f1) + "\n";
    }
    return out;
}

std::string render_label_metrics_csv(const MetricsReport& report) {
    std::string out = "label,accuracy,precision,recall,specificity,f1\n";
    auto row = [&](std::string_view name, const Scores& s) {
        out += std::string(name) + "," + detail::format_double(s.accuracy) + "," +
               detail::format_double(s.precision) + "," + detail::format_double(s.recall) + "," +
               detail::format_double(s.specificity) + "," + detail::format_double(s.f1) + "\n";
    };
    for (auto label : kAllLabels) row(label_name(label), report.per_label[ordinal(label)]);
    row("macro", report.macro);
    row("micro", report.micro);
    return out;
}

std::vector<LabelFrequency> frequency_report(const PhenotypeMatrix& matrix) {
    std::vector<LabelFrequency> out;
    for (auto label : kAllLabels) {
        LabelFrequency f{label, 0};
        for (std::size_t r = 0; r < matrix.rows(); ++r) f.count += matrix.at(r, label);
        out.push_back(f);
    }
    std::stable_sort(out.begin(), out.end(), [](const LabelFrequency& a, const LabelFrequency& b) {
        return a.count > b.count;
    });
    return out;
}

std::string render_frequency_csv(const std::vector<LabelFrequency>& rows) {
    std::string out = "label,count\n";
    for (const auto& r : rows) out += std::string(label_name(r.label)) + "," + std::to_string(r.count) + "\n";
    return out;
}

std::string render_frequency_chart(const std::vector<LabelFrequency>& rows, std::size_t width) {
    std::size_t max_count = 0;
    std::size_t name_width = 0;
    for (const auto& r : rows) {
        max_count = std::max(max_count, r.count);
        name_width = std::max(name_width, label_name(r.label).size());
    }
    std::ostringstream out;
    for (const auto& r : rows) {
        const std::size_t bar = max_count == 0 ? 0 : (r.count * width + max_count / 2) / max_count;
        out << pad(std::string(label_name(r.label)), name_width) << " | " << std::string(bar, '#')
            << (bar ? " " : "") << r.count << "\n";
    }
    return out.str();
}

}  // namespace pheno

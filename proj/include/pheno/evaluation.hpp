#pragma once

#include "pheno/labels.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace pheno {

struct SpanAnnotation {
    std::string note_id;
    std::size_t start = 0;
    std::size_t end = 0;
    Label label = Label::Behavior;

    friend bool operator==(const SpanAnnotation&, const SpanAnnotation&) = default;
};

struct AnnotationSet {
    std::vector<std::string> note_ids;  // one per input line, file order
    std::vector<SpanAnnotation> spans;
};

/// Span annotations as JSON lines:
///   {"text": ..., "spans": [{"start","end","label"}...], "meta": {"note_id": ...}}
/// Labels are case-folded to the canonical names. Throws Error(Parse) with the
/// line number on unknown labels, bad offsets or malformed lines.
AnnotationSet load_annotations(const std::filesystem::path& path);
AnnotationSet parse_annotations(std::string_view jsonl);

/// Notes x 19 labels of 0/1 cells.
class PhenotypeMatrix {
public:
    PhenotypeMatrix() = default;
    explicit PhenotypeMatrix(std::vector<std::string> note_ids);

    /// Throws Error(Validation) on a duplicate id.
    void add_row(std::string note_id, const LabelVector& cells);

    std::size_t rows() const noexcept { return note_ids_.size(); }
    const std::vector<std::string>& note_ids() const noexcept { return note_ids_; }
    const LabelVector& row(std::size_t index) const { return cells_.at(index); }
    LabelVector& row(std::size_t index) { return cells_.at(index); }
    std::uint8_t at(std::size_t row, Label label) const { return cells_.at(row)[ordinal(label)]; }
    std::size_t row_of(std::string_view note_id) const;  // throws Error(Lookup)
    bool contains(std::string_view note_id) const;
    std::size_t ones() const noexcept;

    /// Same rows in the given order. Throws Error(Alignment) unless `order`
    /// is a permutation of note_ids().
    PhenotypeMatrix reordered(const std::vector<std::string>& order) const;

    /// Header "note_id,behavior,...,weakness", one row per note.
    std::string to_csv() const;
    static PhenotypeMatrix from_csv(std::string_view csv);
    void save_csv(const std::filesystem::path& path) const;
    static PhenotypeMatrix load_csv(const std::filesystem::path& path);

    friend bool operator==(const PhenotypeMatrix&, const PhenotypeMatrix&) = default;

private:
    std::vector<std::string> note_ids_;
    std::vector<LabelVector> cells_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Throws Error(Validation) naming any annotation whose note is not listed.
PhenotypeMatrix spans_to_matrix(const std::vector<SpanAnnotation>& spans,
                                const std::vector<std::string>& note_ids);

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const noexcept { return tp + fp + fn + tn; }
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

using ConfusionCounts = std::array<Confusion, kLabelCount>;

/// Throws Error(Alignment) unless both matrices list the same ids in the same
/// order.
ConfusionCounts confusion(const PhenotypeMatrix& gold, const PhenotypeMatrix& pred);

struct Scores {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double specificity = 0.0;
    double f1 = 0.0;
};

Scores score(const Confusion& counts, double zero_division = 0.0);

struct MetricsReport {
    std::array<Scores, kLabelCount> per_label{};
    Scores macro;  // unweighted mean over the 19 labels
    Scores micro;  // scores of the summed counts
};

/// Any 0/0 ratio evaluates to zero_division.
MetricsReport metrics(const ConfusionCounts& counts, double zero_division = 0.0);

/// Table with columns Implementation, Accuracy, Precision, Recall,
/// Specificity, F1 and one row per named report (macro values).
std::string render_metrics_table(const std::vector<std::pair<std::string, MetricsReport>>& rows,
                                 int decimals = 2);
std::string render_metrics_csv(const std::vector<std::pair<std::string, MetricsReport>>& rows);

/// Per-label metrics of one report, one row per label plus macro and micro.
std::string render_label_metrics_csv(const MetricsReport& report);

struct LabelFrequency {
    Label label = Label::Behavior;
    std::size_t count = 0;
};

/// Count of 1-cells per label, descending by count then label ordinal.
std::vector<LabelFrequency> frequency_report(const PhenotypeMatrix& matrix);
std::string render_frequency_csv(const std::vector<LabelFrequency>& rows);
/// Aligned text with a proportional bar per label.
std::string render_frequency_chart(const std::vector<LabelFrequency>& rows, std::size_t width = 40);

}  // namespace pheno

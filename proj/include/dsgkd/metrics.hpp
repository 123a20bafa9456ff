#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsgkd/textprep.hpp"

namespace dsgkd {

// Binary classification metrics; label 1 is the positive ("emergency") class.
struct MetricReport {
  double accuracy = 0.0;
  std::optional<double> auroc;  // absent when only one class is present
  std::optional<double> auprc;
  double recall = 0.0;
  double precision = 0.0;
  double f1 = 0.0;
  std::optional<double> average;  // mean of the six, absent if any is

  // "key = value" lines; undefined values print as "undefined".
  std::string to_key_values(const std::string& prefix = "") const;
  static MetricReport from_key_values(const std::string& text, const std::string& prefix = "");
};

// Rank-statistic AUROC with ties counted one half.
std::optional<double> auroc(std::span<const double> scores, std::span<const int> labels);
// Step-wise (non-interpolated) area under the precision-recall curve.
std::optional<double> auprc(std::span<const double> scores, std::span<const int> labels);

MetricReport binary_metrics(std::span<const double> scores, std::span<const int> labels,
                            double threshold = 0.5);

// Table with the columns Accuracy, AUROC, AUPRC, Recall, Precision, F1, Average,
// values x100 to one decimal.
std::string format_metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows);

// ---- MWPS ------------------------------------------------------------------------

struct MwpsReport {
  std::size_t m = 0;  // lexicon terms among Latin-script words
  std::size_t E = 0;  // Latin-script words
  std::size_t A = 0;  // all words
  std::optional<double> mwps;  // (m*A)/E^2, absent when E == 0
};

// Counts pooled over every document, then one ratio. With `per_document`,
// the score is instead the mean of per-document scores over documents with
// E > 0 (counts still report the pooled totals).
MwpsReport mwps(const std::vector<std::vector<WordAnnotation>>& documents,
                bool per_document = false);

// ---- embedding export ----------------------------------------------------------------

struct EmbeddingRow {
  std::vector<double> vector;
  std::string source;      // student_alone | student_kd | teacher
  bool knowledge = false;  // domain | non_domain
};

// One TSV row per vector: components, source tag, knowledge flag, and (when
// `with_projection`) the coordinates on the two leading principal axes of all
// rows.
void export_embeddings(const std::vector<EmbeddingRow>& rows, const std::filesystem::path& path,
                       bool with_projection = true);
std::string embeddings_tsv(const std::vector<EmbeddingRow>& rows, bool with_projection = true);

// Euclidean distance between the centroids of two row sets.
double centroid_distance(const std::vector<std::vector<double>>& a,
                         const std::vector<std::vector<double>>& b);

}  // namespace dsgkd

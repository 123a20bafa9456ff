#include "dsgkd/metrics.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "dsgkd/io.hpp"

namespace dsgkd {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ValidationError("metrics: " + std::to_string(scores.size()) + " scores vs " +
                          std::to_string(labels.size()) + " labels");
  }
  if (scores.empty()) throw ValidationError("metrics: empty input");
  for (int y : labels) {
    if (y != 0 && y != 1) throw ValidationError("metrics: label " + std::to_string(y) + " not in {0,1}");
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw NumericError("metrics: non-finite score");
  }
}

std::vector<std::size_t> order_by_score_desc(std::span<const double> scores) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return idx;
}

}  // namespace

std::optional<double> auroc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  // Ascending order with mid-ranks for ties.
  std::vector<std::size_t> idx = order_by_score_desc(scores);
  std::reverse(idx.begin(), idx.end());
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (labels[idx[t]] == 1) rank_sum += mid_rank;
    }
    i = j;
  }
  const double u = rank_sum - n_pos * (n_pos + 1.0) / 2.0;
  return u / (n_pos * n_neg);
}

std::optional<double> auprc(std::span<const double> scores, std::span<const int> labels) {
  check_inputs(scores, labels);
  const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  if (n_pos == 0 || n_pos == static_cast<double>(labels.size())) return std::nullopt;
  const std::vector<std::size_t> idx = order_by_score_desc(scores);
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, area = 0.0;
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) {
      (labels[idx[j]] == 1 ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / n_pos;
    const double precision = tp / (tp + fp);
    area += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return area;
}

MetricReport binary_metrics(std::span<const double> scores, std::span<const int> labels,
                            double threshold) {
  check_inputs(scores, labels);
  MetricReport r;
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    if (labels[i] == 1) {
      (pred ? tp : fn) += 1.0;
    } else {
      (pred ? fp : tn) += 1.0;
    }
  }
  r.accuracy = (tp + tn) / static_cast<double>(scores.size());
  r.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  r.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  r.f1 = r.precision + r.recall > 0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  r.auroc = auroc(scores, labels);
  r.auprc = auprc(scores, labels);
  if (r.auroc && r.auprc) {
    r.average = (r.accuracy + *r.auroc + *r.auprc + r.recall + r.precision + r.f1) / 6.0;
  }
  return r;
}

std::string MetricReport::to_key_values(const std::string& prefix) const {
  std::ostringstream os;
  auto opt = [](const std::optional<double>& v) {
    return v ? format_exact(*v) : std::string("undefined");
  };
  os << prefix << "accuracy = " << format_exact(accuracy) << '\n'
     << prefix << "auroc = " << opt(auroc) << '\n'
     << prefix << "auprc = " << opt(auprc) << '\n'
     << prefix << "recall = " << format_exact(recall) << '\n'
     << prefix << "precision = " << format_exact(precision) << '\n'
     << prefix << "f1 = " << format_exact(f1) << '\n'
     << prefix << "average = " << opt(average) << '\n';
  return os.str();
}

MetricReport MetricReport::from_key_values(const std::string& text, const std::string& prefix) {
  const KeyValues kv = parse_key_values(text);
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(prefix + key);
    if (it == kv.end()) throw ParseError("metric report lacks " + prefix + key);
    return it->second;
  };
  auto opt = [&](const std::string& key) -> std::optional<double> {
    const std::string& v = get(key);
    if (v == "undefined") return std::nullopt;
    return parse_double(v, key);
  };
  MetricReport r;
  r.accuracy = parse_double(get("accuracy"), "accuracy");
  r.auroc = opt("auroc");
  r.auprc = opt("auprc");
  r.recall = parse_double(get("recall"), "recall");
  r.precision = parse_double(get("precision"), "precision");
  r.f1 = parse_double(get("f1"), "f1");
  r.average = opt("average");
  return r;
}

std::string format_metric_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
  std::size_t name_w = 5;
  for (const auto& [name, r] : rows) name_w = std::max(name_w, name.size());
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s %9s %9s %9s %9s %9s %9s %9s\n", static_cast<int>(name_w),
                "Model", "Accuracy", "AUROC", "AUPRC", "Recall", "Precision", "F1 Score", "Average");
  os << buf;
  auto cell = [](const std::optional<double>& v) {
    char b[32];
    if (v) {
      std::snprintf(b, sizeof(b), "%.1f", *v * 100.0);
    } else {
      std::snprintf(b, sizeof(b), "n/a");
    }
    return std::string(b);
  };
  for (const auto& [name, r] : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s %9s %9s %9s %9s %9s %9s %9s\n",
                  static_cast<int>(name_w), name.c_str(), cell(r.accuracy).c_str(),
                  cell(r.auroc).c_str(), cell(r.auprc).c_str(), cell(r.recall).c_str(),
                  cell(r.precision).c_str(), cell(r.f1).c_str(), cell(r.average).c_str());
    os << buf;
  }
  return os.str();
}

// ---- MWPS --------------------------------------------------------------------------

MwpsReport mwps(const std::vector<std::vector<WordAnnotation>>& documents, bool per_document) {
  MwpsReport r;
  double doc_sum = 0.0;
  std::size_t doc_count = 0;
  for (const auto& doc : documents) {
    std::size_t m = 0, e = 0;
    for (const auto& w : doc) {
      if (w.script == Script::kDomainLatin) {
        ++e;
        if (w.is_lexicon_term) ++m;
      }
    }
    r.m += m;
    r.E += e;
    r.A += doc.size();
    if (e > 0) {
      doc_sum += static_cast<double>(m) * static_cast<double>(doc.size()) /
                 (static_cast<double>(e) * static_cast<double>(e));
      ++doc_count;
    }
  }
  if (per_document) {
    if (doc_count > 0) r.mwps = doc_sum / static_cast<double>(doc_count);
  } else if (r.E > 0) {
    r.mwps = static_cast<double>(r.m) * static_cast<double>(r.A) /
             (static_cast<double>(r.E) * static_cast<double>(r.E));
  }
  return r;
}

// ---- embeddings ----------------------------------------------------------------------

std::string embeddings_tsv(const std::vector<EmbeddingRow>& rows, bool with_projection) {
  if (rows.empty()) return {};
  const std::size_t d = rows.front().vector.size();
  for (const auto& r : rows) {
    if (r.vector.size() != d) {
      throw DimensionError("export_embeddings: vector width " + std::to_string(r.vector.size()) +
                           " differs from " + std::to_string(d));
    }
  }
  Eigen::MatrixXd proj;
  if (with_projection) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < d; ++j)
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i].vector[j];
    const Eigen::RowVectorXd mu = x.colwise().mean();
    x.rowwise() -= mu;
    const Eigen::MatrixXd cov = (x.transpose() * x) / std::max<double>(1.0, static_cast<double>(rows.size()) - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const Eigen::Index k = std::min<Eigen::Index>(2, static_cast<Eigen::Index>(d));
    Eigen::MatrixXd axes(static_cast<Eigen::Index>(d), 2);
    axes.setZero();
    for (Eigen::Index c = 0; c < k; ++c) {
      Eigen::VectorXd v = eig.eigenvectors().col(static_cast<Eigen::Index>(d) - 1 - c);
      Eigen::Index arg = 0;
      v.cwiseAbs().maxCoeff(&arg);
      if (v(arg) < 0) v = -v;
      axes.col(c) = v;
    }
    proj = x * axes;
  }
  std::ostringstream os;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) os << format_exact(rows[i].vector[j]) << '\t';
    os << rows[i].source << '\t' << (rows[i].knowledge ? "domain" : "non_domain");
    if (with_projection) {
      os << '\t' << format_exact(proj(static_cast<Eigen::Index>(i), 0)) << '\t'
         << format_exact(proj(static_cast<Eigen::Index>(i), 1));
    }
    os << '\n';
  }
  return os.str();
}

void export_embeddings(const std::vector<EmbeddingRow>& rows, const std::filesystem::path& path,
                       bool with_projection) {
  write_file_atomic(path, embeddings_tsv(rows, with_projection));
}

double centroid_distance(const std::vector<std::vector<double>>& a,
                         const std::vector<std::vector<double>>& b) {
  if (a.empty() || b.empty()) throw ValidationError("centroid_distance: empty set");
  const std::size_t d = a.front().size();
  std::vector<double> ca(d, 0.0), cb(d, 0.0);
  for (const auto& v : a) {
    if (v.size() != d) throw DimensionError("centroid_distance: width mismatch");
    for (std::size_t j = 0; j < d; ++j) ca[j] += v[j];
  }
  for (const auto& v : b) {
    if (v.size() != d) throw DimensionError("centroid_distance: width mismatch");
    for (std::size_t j = 0; j < d; ++j) cb[j] += v[j];
  }
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double diff = ca[j] / static_cast<double>(a.size()) - cb[j] / static_cast<double>(b.size());
    s += diff * diff;
  }
  return std::sqrt(s);
}

}  // namespace dsgkd

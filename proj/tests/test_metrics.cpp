#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "dsgkd/io.hpp"
#include "dsgkd/metrics.hpp"
#include "fixtures.hpp"

using namespace dsgkd;

namespace {

std::vector<WordAnnotation> doc(std::size_t terms, std::size_t latin, std::size_t local) {
  std::vector<WordAnnotation> d;
  for (std::size_t i = 0; i < latin; ++i) d.push_back({"x", Script::kDomainLatin, i < terms});
  for (std::size_t i = 0; i < local; ++i) d.push_back({"열", Script::kLocal, false});
  return d;
}

std::size_t columns(const std::string& line) {
  return static_cast<std::size_t>(std::count(line.begin(), line.end(), '\t')) + 1;
}

}  // namespace

TEST(Auroc, Examples) {
  const std::vector<double> s = {0.9, 0.8, 0.1};
  const std::vector<int> y = {1, 0, 0};
  EXPECT_EQ(auroc(s, y), 1.0);
  EXPECT_EQ(auroc(std::vector<double>{0.7, 0.7}, std::vector<int>{1, 0}), 0.5);
  EXPECT_FALSE(auroc(std::vector<double>{0.2, 0.3}, std::vector<int>{1, 1}).has_value());
  EXPECT_FALSE(auprc(std::vector<double>{0.2, 0.3}, std::vector<int>{0, 0}).has_value());
}

TEST(Auroc, InputErrors) {
  EXPECT_THROW(auroc(std::vector<double>{0.1}, std::vector<int>{1, 0}), ValidationError);
  EXPECT_THROW(auroc(std::vector<double>{}, std::vector<int>{}), ValidationError);
  EXPECT_THROW(auroc(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 2}), ValidationError);
  EXPECT_THROW(auprc(std::vector<double>{NAN, 0.2}, std::vector<int>{1, 0}), NumericError);
}

TEST(Auprc, HandExample) {
  // ranks: 0.9 (+), 0.8 (-), 0.7 (+): steps 1/2 at precision 1 and 1/2 at 2/3
  const std::vector<double> s = {0.9, 0.8, 0.7};
  const std::vector<int> y = {1, 0, 1};
  EXPECT_NEAR(*auprc(s, y), 0.5 + 0.5 * 2.0 / 3.0, 1e-15);
}

TEST(RankMetrics, MatchBruteForce) {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> len(2, 12), level(0, 4), bit(0, 1);
  int checked = 0;
  for (int c = 0; c < 10000; ++c) {
    const int n = len(rng);
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[static_cast<std::size_t>(i)] = level(rng) / 4.0;  // coarse levels force ties
      y[static_cast<std::size_t>(i)] = bit(rng);
    }
    const auto a = auroc(s, y), oa = fixtures::brute_auroc(s, y);
    const auto p = auprc(s, y), op = fixtures::brute_auprc(s, y);
    ASSERT_EQ(a.has_value(), oa.has_value());
    ASSERT_EQ(p.has_value(), op.has_value());
    if (!a) continue;
    ASSERT_NEAR(*a, *oa, 1e-12);
    ASSERT_NEAR(*p, *op, 1e-12);
    ++checked;
  }
  EXPECT_GT(checked, 9000);
}

TEST(BinaryMetrics, PerfectPredictions) {
  const std::vector<double> s = {0.9, 0.2, 0.8, 0.1};
  const std::vector<int> y = {1, 0, 1, 0};
  const MetricReport r = binary_metrics(s, y);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.auroc, 1.0);
  EXPECT_EQ(r.auprc, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.f1, 1.0);
  EXPECT_EQ(r.average, 1.0);
}

TEST(BinaryMetrics, AverageAndF1Invariants) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int c = 0; c < 200; ++c) {
    std::vector<double> s(20);
    std::vector<int> y(20);
    for (std::size_t i = 0; i < 20; ++i) {
      s[i] = u(rng);
      y[i] = u(rng) < 0.4 ? 1 : 0;
    }
    const MetricReport r = binary_metrics(s, y);
    if (!r.auroc) continue;
    EXPECT_NEAR(*r.average, (r.accuracy + *r.auroc + *r.auprc + r.recall + r.precision + r.f1) / 6.0, 1e-12);
    if (r.precision > 0 && r.recall > 0) {
      EXPECT_NEAR(r.f1, 2.0 / (1.0 / r.precision + 1.0 / r.recall), 1e-12);
    }
  }
}

TEST(BinaryMetrics, SingleClassIsUndefined) {
  const MetricReport r = binary_metrics(std::vector<double>{0.9, 0.1}, std::vector<int>{0, 0});
  EXPECT_FALSE(r.auroc.has_value());
  EXPECT_FALSE(r.average.has_value());
  EXPECT_EQ(r.accuracy, 0.5);
  const std::string kv = r.to_key_values();
  EXPECT_NE(kv.find("auroc = undefined"), std::string::npos);
  const MetricReport back = MetricReport::from_key_values(kv);
  EXPECT_FALSE(back.auroc.has_value());
  EXPECT_EQ(back.accuracy, 0.5);
}

TEST(MetricReport, KeyValueRoundTripIsExact) {
  const MetricReport r = binary_metrics(std::vector<double>{0.31, 0.62, 0.47, 0.9},
                                        std::vector<int>{0, 1, 1, 0});
  const MetricReport b = MetricReport::from_key_values(r.to_key_values("test."), "test.");
  EXPECT_EQ(b.accuracy, r.accuracy);
  EXPECT_EQ(b.auroc, r.auroc);
  EXPECT_EQ(b.auprc, r.auprc);
  EXPECT_EQ(b.f1, r.f1);
  EXPECT_EQ(b.average, r.average);
  EXPECT_THROW(MetricReport::from_key_values("accuracy = 1\n"), ParseError);
}

TEST(MetricTable, PercentToOneDecimal) {
  const MetricReport r = binary_metrics(std::vector<double>{0.9, 0.2}, std::vector<int>{1, 0});
  MetricReport u;
  const std::string t = format_metric_table({{"kd", r}, {"single", u}});
  EXPECT_NE(t.find("AUROC"), std::string::npos);
  EXPECT_NE(t.find("100.0"), std::string::npos);
  EXPECT_NE(t.find("n/a"), std::string::npos);
}

TEST(Mwps, Examples) {
  const MwpsReport a = mwps({doc(2, 4, 6)});
  EXPECT_EQ(a.m, 2u);
  EXPECT_EQ(a.E, 4u);
  EXPECT_EQ(a.A, 10u);
  EXPECT_DOUBLE_EQ(*a.mwps, 1.25);
  EXPECT_EQ(*mwps({doc(5, 5, 0)}).mwps, 1.0);
  EXPECT_EQ(*mwps({doc(0, 3, 4)}).mwps, 0.0);
  EXPECT_FALSE(mwps({doc(0, 0, 4)}).mwps.has_value());
}

TEST(Mwps, PooledVersusPerDocument) {
  const std::vector<std::vector<WordAnnotation>> docs = {doc(1, 1, 1), doc(0, 2, 0), doc(0, 0, 3)};
  // pooled: m=1, E=3, A=7
  EXPECT_DOUBLE_EQ(*mwps(docs).mwps, 7.0 / 9.0);
  // per-document: (1*2/1 + 0) / 2
  EXPECT_DOUBLE_EQ(*mwps(docs, true).mwps, 1.0);
  const MwpsReport r = mwps(docs);
  EXPECT_LE(r.m, r.E);
  EXPECT_LE(r.E, r.A);
}

TEST(Embeddings, ShapeContract) {
  std::vector<EmbeddingRow> rows;
  std::mt19937_64 rng(23);
  std::normal_distribution<double> n(0.0, 1.0);
  for (const char* tag : {"student_alone", "student_kd", "teacher"})
    for (int i = 0; i < 10; ++i) rows.push_back({{n(rng), n(rng), n(rng), n(rng)}, tag, i % 2 == 0});
  const std::string tsv = embeddings_tsv(rows);
  std::istringstream is(tsv);
  std::string line;
  std::size_t count = 0;
  while (std::getline(is, line)) {
    EXPECT_EQ(columns(line), 4u + 2u + 2u) << line;
    ++count;
  }
  EXPECT_EQ(count, 30u);
  EXPECT_NE(tsv.find("\tstudent_kd\tdomain\t"), std::string::npos);
  EXPECT_NE(tsv.find("\tteacher\tnon_domain\t"), std::string::npos);
  std::istringstream plain(embeddings_tsv(rows, false));
  std::getline(plain, line);
  EXPECT_EQ(columns(line), 6u);
  rows.back().vector.pop_back();
  EXPECT_THROW(embeddings_tsv(rows), DimensionError);
}

TEST(Embeddings, ProjectionIsCenteredAndOrdered) {
  std::vector<EmbeddingRow> rows;
  std::mt19937_64 rng(24);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int i = 0; i < 50; ++i) rows.push_back({{5.0 * n(rng), 0.1 * n(rng), n(rng)}, "teacher", false});
  std::istringstream is(embeddings_tsv(rows));
  std::string line;
  double s1 = 0.0, s2 = 0.0, v1 = 0.0, v2 = 0.0;
  while (std::getline(is, line)) {
    std::vector<std::string> f;
    std::istringstream ls(line);
    for (std::string x; std::getline(ls, x, '\t');) f.push_back(x);
    const double p1 = std::stod(f[5]), p2 = std::stod(f[6]);
    s1 += p1;
    s2 += p2;
    v1 += p1 * p1;
    v2 += p2 * p2;
  }
  EXPECT_NEAR(s1, 0.0, 1e-9);
  EXPECT_NEAR(s2, 0.0, 1e-9);
  EXPECT_GT(v1, v2);
}

TEST(Embeddings, IdenticalModelsGiveIdenticalRows) {
  const std::vector<double> v = {0.25, -1.5, 3.0};
  const std::string tsv = embeddings_tsv({{v, "student_kd", true}, {v, "teacher", true}}, false);
  std::istringstream is(tsv);
  std::string a, b;
  std::getline(is, a);
  std::getline(is, b);
  EXPECT_EQ(a.substr(0, a.find("student_kd")), b.substr(0, b.find("teacher")));
}

TEST(CentroidDistance, HandValues) {
  EXPECT_DOUBLE_EQ(centroid_distance({{0, 0}, {2, 0}}, {{1, 3}, {1, 5}}), 4.0);
  EXPECT_EQ(centroid_distance({{1, 2}}, {{1, 2}}), 0.0);
  EXPECT_THROW(centroid_distance({}, {{1}}), ValidationError);
  EXPECT_THROW(centroid_distance({{1, 2}}, {{1}}), DimensionError);
}

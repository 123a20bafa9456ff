#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "dsgkd/corpus.hpp"
#include "dsgkd/trainer.hpp"

using namespace dsgkd;

namespace {

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

bool same_weights(const Encoder& a, const Encoder& b) {
  const auto& pa = a.parameters();
  const auto& pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i)
    if (vec(pa[i].second) != vec(pb[i].second)) return false;
  return true;
}

class TinyRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    GeneratorConfig g;
    g.n_train = 48;
    g.n_dev = 16;
    g.n_test = 16;
    corpus_ = new GeneratedCorpus(generate(g));
    const auto train = select_split(corpus_->documents, Split::kTrain);
    vocab_ = new BpeVocab(train_tokenizer(train, 500));
    train_ = new Dataset(prepare_dataset(train, *vocab_, corpus_->lexicon, 24,
                                         MaskPolicy::kAllDomainScript));
    dev_ = new Dataset(prepare_dataset(select_split(corpus_->documents, Split::kDev), *vocab_,
                                       corpus_->lexicon, 24, MaskPolicy::kAllDomainScript));
  }
  static void TearDownTestSuite() {
    delete corpus_;
    delete vocab_;
    delete train_;
    delete dev_;
  }

  static TrainConfig config() {
    TrainConfig c;
    c.batch_size = 16;
    c.epochs = 2;
    c.model.layers = 1;
    c.model.hidden = 8;
    c.model.heads = 2;
    c.model.max_len = 24;
    c.model.ffn_mult = 2;
    return c;
  }

  static Encoder teacher() {
    TrainConfig c = config();
    c.seed = 7;
    return pretrain_teacher(*train_, *dev_, vocab_->size(), c).model;
  }

  static inline GeneratedCorpus* corpus_ = nullptr;
  static inline BpeVocab* vocab_ = nullptr;
  static inline Dataset* train_ = nullptr;
  static inline Dataset* dev_ = nullptr;
};

}  // namespace

TEST(TrainConfig, Defaults) {
  const TrainConfig c;
  EXPECT_EQ(c.batch_size, 32u);
  EXPECT_EQ(c.epochs, 15u);
  EXPECT_EQ(c.patience, 15u);
  EXPECT_EQ(c.alpha, 0.6);
  EXPECT_EQ(c.beta, 0.2);
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.model.layers, 4u);
  EXPECT_EQ(c.model.hidden, 64u);
  EXPECT_EQ(c.model.heads, 4u);
  EXPECT_EQ(c.model.max_len, 64u);
  EXPECT_EQ(c.model.dropout, 0.1);
  EXPECT_TRUE(c.enable_hidn && c.enable_attn);
}

TEST(TrainConfig, KeyValueRoundTripAndErrors) {
  TrainConfig c;
  c.lr_body = 3.5e-4;
  c.enable_attn = false;
  c.mask_policy = MaskPolicy::kLexiconOnly;
  const TrainConfig d = TrainConfig::from_key_values(c.to_key_values());
  EXPECT_EQ(d.to_key_values(), c.to_key_values());
  EXPECT_THROW(TrainConfig::from_key_values({{"learning_rate", "1"}}), ValidationError);
  EXPECT_THROW(TrainConfig::from_key_values({{"alpha", "-1"}}), ValidationError);
  EXPECT_THROW(TrainConfig::from_key_values({{"heads", "3"}}), ValidationError);
  EXPECT_THROW(parse_stop_metric("loss"), ValidationError);
}

TEST(AdamW, MatchesHandComputation) {
  Tensor w({2, 2}, {0.5, -1.0, 2.0, 0.25}, true);
  Tensor b({2}, {0.3, -0.7}, true);
  const double lr = 0.1, wd = 0.05, b1 = 0.9, b2 = 0.99, eps = 1e-8;
  AdamW opt({{{w}, lr}, {{b}, 2 * lr}}, wd, b1, b2, eps);
  std::vector<double> ew = vec(w), eb = vec(b);
  std::vector<double> mw(4, 0), vw(4, 0), mb(2, 0), vb(2, 0);
  for (int t = 1; t <= 3; ++t) {
    opt.zero_grad();
    // loss = sum(w^2)/2 + sum(b^2)/2, gradient = the values themselves
    add(scale(sum(square(w)), 0.5), scale(sum(square(b)), 0.5)).backward();
    auto upd = [&](std::vector<double>& x, std::vector<double>& m, std::vector<double>& v,
                   double rate, double decay) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double g = x[i];
        m[i] = b1 * m[i] + (1 - b1) * g;
        v[i] = b2 * v[i] + (1 - b2) * g * g;
        const double mh = m[i] / (1 - std::pow(b1, t)), vh = v[i] / (1 - std::pow(b2, t));
        x[i] = x[i] - rate * mh / (std::sqrt(vh) + eps) - rate * decay * x[i];
      }
    };
    upd(ew, mw, vw, lr, wd);
    upd(eb, mb, vb, 2 * lr, 0.0);
    opt.step();
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(w.data()[i], ew[i], 1e-14);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(b.data()[i], eb[i], 1e-14);
  }
  EXPECT_EQ(opt.steps(), 3u);
}

TEST(AdamW, ClassifierInSecondGroup) {
  TrainConfig c;
  c.model.vocab_size = 30;
  c.model.layers = 1;
  c.model.hidden = 8;
  c.model.heads = 2;
  Encoder e(c.model, 1);
  c.lr_body = 0.0;
  AdamW opt = make_optimizer(e, c);
  e.zero_grad();
  TokenBatch tb;
  tb.batch = 1;
  tb.length = 3;
  tb.ids = {kClsId, 7, kSepId};
  const std::vector<int> y = {1};
  cross_entropy(e.forward(tb, {.capture = false}).logits, y).backward();
  const Encoder before = e.clone();
  opt.step();
  for (std::size_t i = 0; i < e.parameters().size(); ++i) {
    const auto& [name, p] = e.parameters()[i];
    const bool moved = vec(p) != vec(before.parameters()[i].second);
    EXPECT_EQ(moved, Encoder::is_classifier_parameter(name)) << name;
  }
}

TEST(RunRecord, TextRoundTrip) {
  RunRecord r;
  r.kind = "distilled";
  r.config = {{"alpha", "0.6"}, {"seed", "42"}};
  EpochRecord e;
  e.epoch = 1;
  e.train_loss = 0.75;
  e.train_hidn = 0.125;
  e.dev = binary_metrics(std::vector<double>{0.2, 0.7, 0.6}, std::vector<int>{0, 1, 0});
  r.epochs = {e, e};
  r.epochs[1].epoch = 2;
  r.best_epoch = 2;
  r.test = e.dev;
  const RunRecord b = RunRecord::parse(r.to_text());
  EXPECT_EQ(b.to_text(), r.to_text());
  EXPECT_EQ(b.epochs.size(), 2u);
  EXPECT_EQ(b.epochs[0].train_hidn, 0.125);
  EXPECT_EQ(b.test->auroc, e.dev.auroc);
  EXPECT_ANY_THROW(RunRecord::parse("kind = x\nbroken"));
}

TEST(GridFile, ParsesCellsAndSeeds) {
  const GridFile g = parse_grid(
      "seeds = 42, 43,44\n# comment\n[full]\n\n[hidn-only]\nenable_attn = false\n[a]\nalpha = 0.9\nbeta = 0.5\n");
  EXPECT_EQ(g.seeds, (std::vector<std::uint64_t>{42, 43, 44}));
  ASSERT_EQ(g.cells.size(), 3u);
  EXPECT_TRUE(g.cells[0].overrides.empty());
  EXPECT_EQ(g.cells[1].overrides.at("enable_attn"), "false");
  EXPECT_EQ(g.cells[2].overrides.size(), 2u);
  EXPECT_THROW(parse_grid("[a]\n[a]\n"), ParseError);
  EXPECT_THROW(parse_grid("alpha = 1\n[a]\n"), ParseError);
  EXPECT_THROW(parse_grid("[a]\nalpha\n"), ParseError);
  EXPECT_THROW(parse_grid("[a]\nnope = 1\n"), ValidationError);
}

TEST(Compatibility, NamesMismatchedFields) {
  EncoderConfig a, b;
  b.hidden = 32;
  b.max_len = 16;
  try {
    check_teacher_compatible(a, b);
    FAIL();
  } catch (const ValidationError& e) {
    const std::string m = e.what();
    EXPECT_NE(m.find("hidden"), std::string::npos);
    EXPECT_NE(m.find("max_len"), std::string::npos);
  }
  EXPECT_NO_THROW(check_teacher_compatible(a, a));
}

TEST_F(TinyRun, EmptyCorpusRaises) {
  EXPECT_THROW(train_student(Dataset{}, *dev_, vocab_->size(), config()), ValidationError);
  EXPECT_THROW(pretrain_teacher(Dataset{}, *dev_, vocab_->size(), config()), ValidationError);
  EXPECT_THROW(evaluate(Encoder(EncoderConfig{}, 1), Dataset{}), ValidationError);
}

TEST_F(TinyRun, TrainingIsDeterministic) {
  const TrainResult a = train_student(*train_, *dev_, vocab_->size(), config());
  const TrainResult b = train_student(*train_, *dev_, vocab_->size(), config());
  EXPECT_TRUE(same_weights(a.model, b.model));
  EXPECT_EQ(a.record.to_text(), b.record.to_text());
  EXPECT_EQ(a.record.kind, "baseline");
  EXPECT_EQ(a.record.epochs.size(), 2u);
  EXPECT_GE(a.record.best_epoch, 1u);
  TrainConfig other = config();
  other.seed = 43;
  EXPECT_FALSE(same_weights(a.model, train_student(*train_, *dev_, vocab_->size(), other).model));
}

TEST_F(TinyRun, SwitchesOffEqualsBaseline) {
  const Encoder t = teacher();
  TrainConfig off = config();
  off.enable_hidn = false;
  off.enable_attn = false;
  TrainOptions o;
  o.teacher = &t;
  const TrainResult a = train_student(*train_, *dev_, vocab_->size(), off, o);
  const TrainResult b = train_student(*train_, *dev_, vocab_->size(), config());
  EXPECT_TRUE(same_weights(a.model, b.model));
  for (const auto& e : a.record.epochs) {
    EXPECT_EQ(e.train_hidn, 0.0);
    EXPECT_EQ(e.train_attn, 0.0);
  }
}

TEST_F(TinyRun, DistillationLeavesTeacherUntouched) {
  const Encoder t = teacher();
  const Encoder snapshot = t.clone();
  std::size_t steps = 0;
  double first_hidn = -1.0;
  TrainOptions o;
  o.teacher = &t;
  o.observer = [&](std::size_t, const LossBreakdown& l) {
    ++steps;
    if (first_hidn < 0) first_hidn = l.hidn;
  };
  const TrainResult r = train_student(*train_, *dev_, vocab_->size(), config(), o);
  EXPECT_EQ(r.record.kind, "distilled");
  EXPECT_EQ(steps, 2u * 3u);
  EXPECT_GT(first_hidn, 0.0);
  EXPECT_TRUE(same_weights(t, snapshot));
  for (const auto& [name, p] : t.parameters()) EXPECT_FALSE(p.has_grad()) << name;
}

TEST_F(TinyRun, CachedTargetsMatchLiveTeacher) {
  const Encoder t = teacher();
  const TeacherCache cache = TeacherCache::build(t, *train_, 5);
  const std::vector<std::size_t> idx = {9, 2, 30, 17};
  std::vector<const TokenizedInput*> tok;
  std::vector<const KnowledgeMask*> masks;
  for (std::size_t i : idx) {
    tok.push_back(&train_->examples[i].tokens);
    masks.push_back(&train_->examples[i].mask);
  }
  const std::size_t L = t.config().max_len;
  const EncoderOutput out = t.forward(TokenBatch::from_inputs(tok, L));
  const TeacherTargets live = teacher_targets(out, PoolPlan::build(masks, L), L);
  const TeacherTargets cached = cache.targets(idx);
  ASSERT_EQ(live.k_max, cached.k_max);
  EXPECT_EQ(live.valid, cached.valid);
  ASSERT_EQ(live.hidden.size(), cached.hidden.size());
  ASSERT_EQ(live.attn.size(), cached.attn.size());
  auto close = [](const Tensor& a, const Tensor& b) {
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) ASSERT_NEAR(a.data()[i], b.data()[i], 1e-12);
  };
  for (std::size_t p = 0; p < live.hidden.size(); ++p) close(live.hidden[p], cached.hidden[p]);
  for (std::size_t p = 0; p < live.attn.size(); ++p) close(live.attn[p], cached.attn[p]);
}

TEST_F(TinyRun, EvaluateMatchesMetrics) {
  const TrainResult r = train_student(*train_, *dev_, vocab_->size(), config());
  const Evaluation ev = evaluate(r.model, *dev_, 7);
  const auto labels = dev_->labels();
  ASSERT_EQ(ev.scores.size(), labels.size());
  EXPECT_EQ(ev.metrics.auroc, auroc(ev.scores, labels));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    EXPECT_EQ(ev.predictions[i], ev.scores[i] >= 0.5 ? 1 : 0);
  }
  const Evaluation again = evaluate(r.model, *dev_, 64);
  for (std::size_t i = 0; i < labels.size(); ++i) EXPECT_NEAR(again.scores[i], ev.scores[i], 1e-12);
}

TEST_F(TinyRun, WordEmbeddingsAverageTokenStates) {
  const Encoder t = teacher();
  const auto rows = word_embeddings(t, *dev_, 3);
  const std::size_t L = t.config().max_len, d = t.config().hidden;
  std::vector<const TokenizedInput*> tok;
  for (std::size_t i = 0; i < 3; ++i) tok.push_back(&dev_->examples[i].tokens);
  const Tensor h = t.forward(TokenBatch::from_inputs(tok, L)).hidden.back();
  std::size_t knowledge[3] = {0, 0, 0};
  for (const auto& r : rows) {
    ASSERT_LT(r.example, 3u);
    ASSERT_EQ(r.vector.size(), d);
    const auto& ex = dev_->examples[r.example];
    std::vector<double> mean(d, 0.0);
    int n = 0;
    bool masked = false;
    for (std::size_t pos = 0; pos < L; ++pos) {
      if (ex.tokens.word_ids[pos] != static_cast<std::int32_t>(r.word)) continue;
      ++n;
      masked = masked || ex.mask.values[pos] > 0;
      for (std::size_t f = 0; f < d; ++f) mean[f] += h.at({r.example, pos, f});
    }
    ASSERT_GT(n, 0);
    EXPECT_EQ(r.knowledge, masked);
    knowledge[r.example] += r.knowledge ? 1 : 0;
    for (std::size_t f = 0; f < d; ++f) EXPECT_NEAR(r.vector[f], mean[f] / n, 1e-12);
  }
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_EQ(knowledge[i], static_cast<std::size_t>(dev_->examples[i].mask.k));
}

TEST_F(TinyRun, AblationGridRunsEveryCellAndSeed) {
  const Encoder t = teacher();
  const auto docs = corpus_->documents;
  const GridFile g = parse_grid("[full]\n[neither]\nenable_hidn = false\nenable_attn = false\n");
  std::size_t stored = 0;
  AblationOptions o;
  o.seeds = {42, 43};
  o.done = [&](const std::string&, std::uint64_t, const RunRecord&) { ++stored; };
  const auto rows = ablation_grid(select_split(docs, Split::kTrain), select_split(docs, Split::kDev),
                                  select_split(docs, Split::kTest), *vocab_, corpus_->lexicon, &t,
                                  config(), g.cells, o);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(stored, 4u);
  for (const auto& r : rows) {
    ASSERT_EQ(r.runs.size(), 2u);
    EXPECT_TRUE(r.runs[0].test.has_value());
    double m = 0.0;
    for (const auto& run : r.runs) m += *run.test->auroc / 2.0;
    EXPECT_NEAR(r.mean_auroc(), m, 1e-12);
  }
  const std::string table = format_ablation_table(rows);
  EXPECT_NE(table.find("neither"), std::string::npos);
  std::size_t looked_up = 0;
  o.lookup = [&](const std::string& cell, std::uint64_t seed) -> std::optional<RunRecord> {
    ++looked_up;
    for (const auto& r : rows)
      if (r.name == cell) return r.runs[seed == 42 ? 0 : 1];
    return std::nullopt;
  };
  stored = 0;
  const auto again = ablation_grid(select_split(docs, Split::kTrain), select_split(docs, Split::kDev),
                                   select_split(docs, Split::kTest), *vocab_, corpus_->lexicon, &t,
                                   config(), g.cells, o);
  EXPECT_EQ(looked_up, 4u);
  EXPECT_EQ(stored, 0u);
  EXPECT_EQ(format_ablation_table(again), table);
}

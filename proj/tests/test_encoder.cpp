#include <gtest/gtest.h>

#include <filesystem>

#include "dsgkd/encoder.hpp"
#include "dsgkd/io.hpp"
#include "fixtures.hpp"

using namespace dsgkd;

TEST(EncoderConfig, Validation) {
  EncoderConfig c = fixtures::micro_config();
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), ValidationError);
  c = fixtures::micro_config();
  c.vocab_size = 0;
  EXPECT_THROW(c.validate(), ValidationError);
}

TEST(Encoder, OutputShapes) {
  EncoderConfig c = fixtures::micro_config(2, 8, 16);
  const Encoder e(c, 1);
  std::mt19937_64 rng(1);
  const auto mb = fixtures::random_batch(rng, 3, 16, c.vocab_size, 2);
  const EncoderOutput out = e.forward(mb.tokens);
  ASSERT_EQ(out.hidden.size(), 3u);
  ASSERT_EQ(out.attn.size(), 2u);
  for (const auto& h : out.hidden) EXPECT_EQ(h.shape(), (Shape{3, 16, 8}));
  for (const auto& a : out.attn) EXPECT_EQ(a.shape(), (Shape{3, 2, 16, 16}));
  EXPECT_EQ(out.logits.shape(), (Shape{3, 2}));
  EXPECT_FALSE(e.forward(mb.tokens, {.capture = false}).captured());
}

TEST(Encoder, AttentionRowsAndPadKeys) {
  EncoderConfig c = fixtures::micro_config(2, 8, 12);
  const Encoder e = fixtures::perturbed_encoder(c, 2);
  std::mt19937_64 rng(2);
  const auto mb = fixtures::random_batch(rng, 4, 12, c.vocab_size, 2);
  const EncoderOutput out = e.forward(mb.tokens);
  const auto valid = mb.tokens.key_valid();
  const std::size_t L = 12, H = 2;
  for (const auto& a : out.attn) {
    const auto d = a.data();
    for (std::size_t b = 0; b < 4; ++b)
      for (std::size_t h = 0; h < H; ++h)
        for (std::size_t q = 0; q < L; ++q) {
          double s = 0.0;
          for (std::size_t k = 0; k < L; ++k) {
            const double v = d[((b * H + h) * L + q) * L + k];
            if (!valid[b * L + k]) {
              EXPECT_EQ(v, 0.0);
            }
            s += v;
          }
          EXPECT_NEAR(s, 1.0, 1e-6);
        }
  }
}

TEST(Encoder, DuplicateRowsGiveIdenticalLogits) {
  EncoderConfig c = fixtures::micro_config();
  const Encoder e = fixtures::perturbed_encoder(c, 3);
  std::mt19937_64 rng(3);
  auto mb = fixtures::random_batch(rng, 1, 10, c.vocab_size, 2);
  const TokenizedInput* rows[] = {&mb.inputs[0], &mb.inputs[0], &mb.inputs[0]};
  const Tensor logits = e.forward(TokenBatch::from_inputs(rows, 10)).logits;
  for (std::size_t b = 1; b < 3; ++b) {
    EXPECT_EQ(logits.at({b, 0}), logits.at({0, 0}));
    EXPECT_EQ(logits.at({b, 1}), logits.at({0, 1}));
  }
}

TEST(Encoder, TrailingPadsDoNotChangeLogits) {
  EncoderConfig c = fixtures::micro_config(2, 8, 16);
  const Encoder e = fixtures::perturbed_encoder(c, 4);
  std::mt19937_64 rng(4);
  auto mb = fixtures::random_batch(rng, 2, 16, c.vocab_size, 2);
  std::vector<const TokenizedInput*> ptrs = {&mb.inputs[0], &mb.inputs[1]};
  const Tensor full = e.forward(TokenBatch::from_inputs(ptrs, 16)).logits;
  const Tensor trimmed = e.forward(TokenBatch::from_inputs(ptrs)).logits;
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(full.data()[i], trimmed.data()[i], 1e-12);
}

TEST(Encoder, OutOfVocabularyIdRaises) {
  EncoderConfig c = fixtures::micro_config();
  const Encoder e(c, 5);
  TokenBatch tb;
  tb.batch = 1;
  tb.length = 3;
  tb.ids = {kClsId, 20, kSepId};
  EXPECT_THROW(e.forward(tb), ValidationError);
}

TEST(Encoder, ClsEmbeddingsMatchHidden) {
  EncoderConfig c = fixtures::micro_config();
  const Encoder e = fixtures::perturbed_encoder(c, 6);
  std::mt19937_64 rng(6);
  const auto mb = fixtures::random_batch(rng, 3, 10, c.vocab_size, 2);
  const Tensor cls = e.extract_cls_embeddings(mb.tokens);
  EXPECT_EQ(cls.shape(), (Shape{3, 8}));
  const Tensor last = e.forward(mb.tokens).hidden.back();
  for (std::size_t b = 0; b < 3; ++b)
    for (std::size_t f = 0; f < 8; ++f) EXPECT_EQ(cls.at({b, f}), last.at({b, 0, f}));
  bool differ = false;
  for (std::size_t f = 0; f < 8; ++f) differ = differ || cls.at({0, f}) != cls.at({1, f});
  EXPECT_TRUE(differ);
}

TEST(Encoder, FreezeBlocksGradientsAndIsDeterministic) {
  EncoderConfig c = fixtures::micro_config();
  Encoder teacher = fixtures::perturbed_encoder(c, 7);
  freeze(teacher);
  std::mt19937_64 rng(7);
  const auto mb = fixtures::random_batch(rng, 2, 10, c.vocab_size, 2);
  const EncoderOutput a = teacher.forward(mb.tokens);
  const EncoderOutput b = teacher.forward(mb.tokens);
  EXPECT_EQ(std::vector<double>(a.logits.data().begin(), a.logits.data().end()),
            std::vector<double>(b.logits.data().begin(), b.logits.data().end()));
  EXPECT_FALSE(a.logits.requires_grad());
  for (const auto& [name, t] : teacher.parameters()) EXPECT_FALSE(t.requires_grad()) << name;
}

TEST(Encoder, CloneIsIndependent) {
  EncoderConfig c = fixtures::micro_config();
  Encoder a(c, 8);
  Encoder b = a.clone();
  b.parameter("classifier.bias").mutable_data()[0] = 5.0;
  EXPECT_EQ(a.parameter("classifier.bias").data()[0], 0.0);
}

TEST(Encoder, CheckpointRoundTrip) {
  EncoderConfig c = fixtures::micro_config();
  Encoder a = fixtures::perturbed_encoder(c, 9);
  a.metadata()["note"] = "x";
  const auto path = std::filesystem::temp_directory_path() / "dsgkd_encoder_test.ckpt";
  a.save(path);
  const Encoder b = Encoder::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(b.config(), a.config());
  EXPECT_EQ(b.metadata().at("note"), "x");
  ASSERT_EQ(b.parameters().size(), a.parameters().size());
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    EXPECT_EQ(a.parameters()[i].first, b.parameters()[i].first);
    const auto x = a.parameters()[i].second.data(), y = b.parameters()[i].second.data();
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end()));
  }
}

TEST(Encoder, CorruptCheckpointRaises) {
  const auto path = std::filesystem::temp_directory_path() / "dsgkd_bad.ckpt";
  write_file_atomic(path, "not a checkpoint");
  EXPECT_ANY_THROW(Encoder::load(path));
  std::filesystem::remove(path);
}

TEST(Encoder, GradcheckThroughModel) {
  EncoderConfig c = fixtures::micro_config(1, 4, 6);
  Encoder e = fixtures::perturbed_encoder(c, 10);
  std::mt19937_64 rng(10);
  const auto mb = fixtures::random_batch(rng, 2, 6, c.vocab_size, 2);
  std::vector<Tensor> params;
  for (auto& [n, t] : e.parameters()) params.push_back(t);
  const auto r = gradcheck(
      [&] { return cross_entropy(e.forward(mb.tokens, {.capture = false}).logits, mb.labels); },
      params, {.tol = 1e-4});
  EXPECT_TRUE(r.passed) << r.max_rel_error;
}

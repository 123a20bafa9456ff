#pragma once

// Knowledge-masked distillation objective.
//
// For every knowledge word j of an example, the hidden states of its subword
// tokens are averaged into one d-vector, and the attention rows of those
// tokens (as queries) are averaged over tokens and heads into one row over the
// key axis. Student and teacher pooled values are compared with an MSE over
// the valid (word, feature) entries, per layer:
//
//   layer 0 (embeddings):  alpha * MSE(hidden)
//   layer p > 0:           alpha * MSE(hidden) + beta * MSE(attention)
//
// and the total objective adds the per-layer terms to the student's
// cross-entropy. Teacher values enter as constants.

#include <cstdint>
#include <span>
#include <vector>

#include "dsgkd/encoder.hpp"
#include "dsgkd/tensor.hpp"
#include "dsgkd/textprep.hpp"

namespace dsgkd {

struct LossWeights {
  double alpha = 0.6;
  double beta = 0.2;

  void validate() const;
};

// Knowledge positions grouped per (example, word), with the knowledge axis
// padded to the batch maximum k.
struct PoolPlan {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::size_t k_max = 0;
  // groups[b * k_max + j] = token positions of knowledge word j+1 of example b.
  std::vector<std::vector<std::size_t>> groups;
  // valid[b * k_max + j] = 1 iff example b has at least j+1 knowledge words.
  std::vector<std::uint8_t> valid;

  // Masks may be longer than `length` only if every position past it is 0.
  static PoolPlan build(std::span<const KnowledgeMask* const> masks, std::size_t length);
};

struct PooledKnowledge {
  Tensor hidden_pooled;  // (batch, k_max, d)
  Tensor attn_pooled;    // (batch, k_max, width)
  std::vector<std::uint8_t> valid;  // (batch, k_max)
};

// H: (batch, length, d) -> (batch, k_max, d). Invalid rows are zero.
Tensor pool_hidden(const Tensor& hidden, const PoolPlan& plan);
// A: (batch, heads, length, length) -> (batch, k_max, width), averaging the
// query rows of each knowledge word and the heads. Keys past `length` (up to
// `width`, default = length) are zero.
Tensor pool_attention(const Tensor& attn, const PoolPlan& plan, std::size_t width = 0);

PooledKnowledge pool_knowledge(const Tensor& hidden, const Tensor& attn,
                               std::span<const KnowledgeMask* const> masks);

// Per-layer pooled teacher targets, detached. hidden has layers+1 entries;
// attn has layers entries, each padded to `width` keys.
struct TeacherTargets {
  std::vector<Tensor> hidden;
  std::vector<Tensor> attn;
  std::vector<std::uint8_t> valid;
  std::size_t k_max = 0;
};

TeacherTargets teacher_targets(const EncoderOutput& teacher, const PoolPlan& plan,
                               std::size_t width);

struct LayerTerms {
  Tensor hidn;  // alpha-weighted, scalar
  Tensor attn;  // beta-weighted, scalar (0 at the embedding layer)
};

// Weighted MSE terms between student pooled values and fixed targets for
// layer p.
LayerTerms layer_terms(const EncoderOutput& student, const TeacherTargets& targets,
                       const PoolPlan& plan, std::size_t p, const LossWeights& w,
                       std::size_t width);

Tensor layer_loss(const EncoderOutput& student, const EncoderOutput& teacher,
                  std::span<const KnowledgeMask* const> masks, std::size_t p,
                  const LossWeights& w);

struct LossBreakdown {
  Tensor total;
  double pred = 0.0;
  double hidn = 0.0;  // sum over layers of alpha * MSE(hidden)
  double attn = 0.0;  // sum over layers of beta * MSE(attention)
};

struct DistillSwitches {
  bool enable_hidn = true;
  bool enable_attn = true;
};

LossBreakdown total_loss(const EncoderOutput& student, const EncoderOutput& teacher,
                         std::span<const int> labels, std::span<const KnowledgeMask* const> masks,
                         const LossWeights& w, const DistillSwitches& switches = {});

// Same objective against precomputed teacher targets. `targets` may be null
// (no teacher), which leaves only the prediction loss.
LossBreakdown total_loss(const EncoderOutput& student, const TeacherTargets* targets,
                         const PoolPlan& plan, std::span<const int> labels, const LossWeights& w,
                         const DistillSwitches& switches, std::size_t width);

}  // namespace dsgkd

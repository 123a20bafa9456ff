#include "dsgkd/distill.hpp"

#include <algorithm>
#include <cmath>

namespace dsgkd {

void LossWeights::validate() const {
  if (!std::isfinite(alpha) || !std::isfinite(beta) || alpha < 0.0 || beta < 0.0) {
    throw ValidationError("loss weights must be finite and nonnegative (alpha=" +
                          std::to_string(alpha) + ", beta=" + std::to_string(beta) + ")");
  }
}

PoolPlan PoolPlan::build(std::span<const KnowledgeMask* const> masks, std::size_t length) {
  PoolPlan plan;
  plan.batch = masks.size();
  plan.length = length;
  for (const auto* m : masks) plan.k_max = std::max<std::size_t>(plan.k_max, static_cast<std::size_t>(m->k));
  plan.groups.assign(plan.batch * plan.k_max, {});
  plan.valid.assign(plan.batch * plan.k_max, 0);
  for (std::size_t b = 0; b < masks.size(); ++b) {
    const KnowledgeMask& m = *masks[b];
    if (m.values.size() < length) {
      throw DimensionError("knowledge mask of length " + std::to_string(m.values.size()) +
                           " for sequences of length " + std::to_string(length));
    }
    for (std::size_t i = 0; i < m.values.size(); ++i) {
      const std::int32_t v = m.values[i];
      if (v == 0) continue;
      if (v < 0 || v > m.k) throw ValidationError("knowledge mask value outside 0..k");
      if (i >= length) {
        throw DimensionError("knowledge mask marks position " + std::to_string(i) +
                             " beyond sequence length " + std::to_string(length));
      }
      plan.groups[b * plan.k_max + static_cast<std::size_t>(v - 1)].push_back(i);
    }
    for (std::int32_t j = 0; j < m.k; ++j) {
      const std::size_t row = b * plan.k_max + static_cast<std::size_t>(j);
      if (plan.groups[row].empty()) {
        throw ValidationError("knowledge word " + std::to_string(j + 1) + " has no tokens");
      }
      plan.valid[row] = 1;
    }
  }
  return plan;
}

Tensor pool_hidden(const Tensor& hidden, const PoolPlan& plan) {
  if (hidden.dim() != 3 || hidden.size(0) != plan.batch || hidden.size(1) != plan.length) {
    throw DimensionError("pool_hidden: hidden " + shape_str(hidden.shape()) +
                         " does not match masks for batch " + std::to_string(plan.batch) +
                         " x length " + std::to_string(plan.length));
  }
  const std::size_t L = plan.length, D = hidden.size(2), K = plan.k_max;
  std::vector<double> out(plan.batch * K * D, 0.0);
  auto hd = hidden.data();
  for (std::size_t b = 0; b < plan.batch; ++b) {
    for (std::size_t j = 0; j < K; ++j) {
      const auto& pos = plan.groups[b * K + j];
      if (pos.empty()) continue;
      double* row = out.data() + (b * K + j) * D;
      for (std::size_t t : pos) {
        const double* src = hd.data() + (b * L + t) * D;
        for (std::size_t c = 0; c < D; ++c) row[c] += src[c];
      }
      const double inv = 1.0 / static_cast<double>(pos.size());
      for (std::size_t c = 0; c < D; ++c) row[c] *= inv;
    }
  }
  return record_op(Shape{plan.batch, K, D}, std::move(out), {hidden},
                   [hidden, plan, L, D, K](const detail::Node& y) {
                     auto g = hidden.grad_accumulator();
                     for (std::size_t b = 0; b < plan.batch; ++b) {
                       for (std::size_t j = 0; j < K; ++j) {
                         const auto& pos = plan.groups[b * K + j];
                         if (pos.empty()) continue;
                         const double inv = 1.0 / static_cast<double>(pos.size());
                         const double* gy = y.grad.data() + (b * K + j) * D;
                         for (std::size_t t : pos) {
                           double* dst = g.data() + (b * L + t) * D;
                           for (std::size_t c = 0; c < D; ++c) dst[c] += inv * gy[c];
                         }
                       }
                     }
                   });
}

Tensor pool_attention(const Tensor& attn, const PoolPlan& plan, std::size_t width) {
  if (attn.dim() != 4 || attn.size(0) != plan.batch || attn.size(2) != plan.length ||
      attn.size(3) != plan.length) {
    throw DimensionError("pool_attention: attention " + shape_str(attn.shape()) +
                         " does not match masks for batch " + std::to_string(plan.batch) +
                         " x length " + std::to_string(plan.length));
  }
  if (width == 0) width = plan.length;
  if (width < plan.length) throw DimensionError("pool_attention: width below sequence length");
  const std::size_t H = attn.size(1), L = plan.length, K = plan.k_max, W = width;
  std::vector<double> out(plan.batch * K * W, 0.0);
  auto ad = attn.data();
  for (std::size_t b = 0; b < plan.batch; ++b) {
    for (std::size_t j = 0; j < K; ++j) {
      const auto& pos = plan.groups[b * K + j];
      if (pos.empty()) continue;
      double* row = out.data() + (b * K + j) * W;
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t q : pos) {
          const double* src = ad.data() + ((b * H + h) * L + q) * L;
          for (std::size_t c = 0; c < L; ++c) row[c] += src[c];
        }
      }
      const double inv = 1.0 / static_cast<double>(pos.size() * H);
      for (std::size_t c = 0; c < L; ++c) row[c] *= inv;
    }
  }
  return record_op(Shape{plan.batch, K, W}, std::move(out), {attn},
                   [attn, plan, H, L, K, W](const detail::Node& y) {
                     auto g = attn.grad_accumulator();
                     for (std::size_t b = 0; b < plan.batch; ++b) {
                       for (std::size_t j = 0; j < K; ++j) {
                         const auto& pos = plan.groups[b * K + j];
                         if (pos.empty()) continue;
                         const double inv = 1.0 / static_cast<double>(pos.size() * H);
                         const double* gy = y.grad.data() + (b * K + j) * W;
                         for (std::size_t h = 0; h < H; ++h) {
                           for (std::size_t q : pos) {
                             double* dst = g.data() + ((b * H + h) * L + q) * L;
                             for (std::size_t c = 0; c < L; ++c) dst[c] += inv * gy[c];
                           }
                         }
                       }
                     }
                   });
}

PooledKnowledge pool_knowledge(const Tensor& hidden, const Tensor& attn,
                               std::span<const KnowledgeMask* const> masks) {
  const PoolPlan plan = PoolPlan::build(masks, hidden.size(1));
  return {pool_hidden(hidden, plan), pool_attention(attn, plan), plan.valid};
}

namespace {

void require_captured(const EncoderOutput& out, const char* who) {
  if (!out.captured()) {
    throw StateError(std::string(who) + " output was produced without capture enabled");
  }
}

}  // namespace

TeacherTargets teacher_targets(const EncoderOutput& teacher, const PoolPlan& plan,
                               std::size_t width) {
  require_captured(teacher, "teacher");
  NoGradGuard guard;
  TeacherTargets t;
  t.valid = plan.valid;
  t.k_max = plan.k_max;
  for (const auto& h : teacher.hidden) t.hidden.push_back(pool_hidden(h, plan).detach());
  for (const auto& a : teacher.attn) t.attn.push_back(pool_attention(a, plan, width).detach());
  return t;
}

LayerTerms layer_terms(const EncoderOutput& student, const TeacherTargets& targets,
                       const PoolPlan& plan, std::size_t p, const LossWeights& w,
                       std::size_t width) {
  require_captured(student, "student");
  const std::size_t layers = student.attn.size();
  if (p > layers) {
    throw ValidationError("layer index " + std::to_string(p) + " outside 0.." +
                          std::to_string(layers));
  }
  if (targets.hidden.size() != student.hidden.size() || targets.attn.size() != layers) {
    throw DimensionError("student and teacher have different layer counts");
  }
  LayerTerms terms;
  const Tensor sh = pool_hidden(student.hidden[p], plan);
  if (sh.shape() != targets.hidden[p].shape()) {
    throw DimensionError("pooled hidden shapes differ: student " + shape_str(sh.shape()) +
                         ", teacher " + shape_str(targets.hidden[p].shape()));
  }
  terms.hidn = scale(mse(sh, targets.hidden[p], plan.valid), w.alpha);
  if (p == 0) {
    terms.attn = Tensor::scalar(0.0);
  } else {
    const Tensor sa = pool_attention(student.attn[p - 1], plan, width);
    if (sa.shape() != targets.attn[p - 1].shape()) {
      throw DimensionError("pooled attention shapes differ: student " + shape_str(sa.shape()) +
                           ", teacher " + shape_str(targets.attn[p - 1].shape()));
    }
    terms.attn = scale(mse(sa, targets.attn[p - 1], plan.valid), w.beta);
  }
  return terms;
}

namespace {

std::size_t check_pair(const EncoderOutput& student, const EncoderOutput& teacher) {
  require_captured(student, "student");
  require_captured(teacher, "teacher");
  if (student.hidden.size() != teacher.hidden.size()) {
    throw DimensionError("student and teacher have different layer counts");
  }
  if (student.hidden[0].shape() != teacher.hidden[0].shape()) {
    throw DimensionError("student hidden " + shape_str(student.hidden[0].shape()) +
                         " vs teacher hidden " + shape_str(teacher.hidden[0].shape()));
  }
  return student.hidden[0].size(1);
}

}  // namespace

Tensor layer_loss(const EncoderOutput& student, const EncoderOutput& teacher,
                  std::span<const KnowledgeMask* const> masks, std::size_t p,
                  const LossWeights& w) {
  w.validate();
  const std::size_t length = check_pair(student, teacher);
  const PoolPlan plan = PoolPlan::build(masks, length);
  const TeacherTargets targets = teacher_targets(teacher, plan, length);
  const LayerTerms terms = layer_terms(student, targets, plan, p, w, length);
  return add(terms.hidn, terms.attn);
}

LossBreakdown total_loss(const EncoderOutput& student, const EncoderOutput& teacher,
                         std::span<const int> labels, std::span<const KnowledgeMask* const> masks,
                         const LossWeights& w, const DistillSwitches& switches) {
  const std::size_t length = check_pair(student, teacher);
  const PoolPlan plan = PoolPlan::build(masks, length);
  const TeacherTargets targets = teacher_targets(teacher, plan, length);
  return total_loss(student, &targets, plan, labels, w, switches, length);
}

LossBreakdown total_loss(const EncoderOutput& student, const TeacherTargets* targets,
                         const PoolPlan& plan, std::span<const int> labels, const LossWeights& w,
                         const DistillSwitches& switches, std::size_t width) {
  w.validate();
  LossBreakdown out;
  const Tensor pred = cross_entropy(student.logits, labels);
  out.pred = pred.item();
  Tensor total = pred;
  const bool distill = targets != nullptr && (switches.enable_hidn || switches.enable_attn);
  if (distill) {
    require_captured(student, "student");
    for (std::size_t p = 0; p < student.hidden.size(); ++p) {
      const LayerTerms terms = layer_terms(student, *targets, plan, p, w, width);
      if (switches.enable_hidn) {
        out.hidn += terms.hidn.item();
        total = add(total, terms.hidn);
      }
      if (switches.enable_attn && p > 0) {
        out.attn += terms.attn.item();
        total = add(total, terms.attn);
      }
    }
  }
  out.total = total;
  return out;
}

}  // namespace dsgkd

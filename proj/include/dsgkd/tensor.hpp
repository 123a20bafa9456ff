#pragma once

// Dense float64 tensors with define-by-run reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared node. Operations on tensors that
// require gradients record a backward rule on the result node; calling
// backward() on a scalar result builds a GradTape of every reachable recorded
// node (ordered by creation) and replays the rules in reverse.
//
// Single-threaded by contract: one graph must not be built or replayed from
// two threads at once. Kernels underneath may use OpenMP, but every output
// element is produced by exactly one thread in a fixed order, so results are
// bitwise identical for any thread count.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "dsgkd/errors.hpp"

namespace dsgkd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const { return shape().at(axis); }
  std::size_t numel() const;

  std::span<const double> data() const;
  // In-place access for leaf tensors (parameter updates, gradcheck probes).
  // Mutating a tensor that is already part of a recorded graph is undefined.
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  // Zero-initialized on first use. Backward rules accumulate into this.
  std::span<double> grad_accumulator() const;
  void zero_grad();

  // Same storage values, no history, requires_grad = false.
  Tensor detach() const;

  // Only valid on a scalar (numel == 1) tensor.
  void backward() const;

  const detail::Node* node() const { return node_.get(); }

 private:
  friend class GradTape;
  friend Tensor record_op(Shape, std::vector<double>, std::vector<Tensor>,
                          std::function<void(const detail::Node&)>);
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool has_grad = false;
  bool requires_grad = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(const Node&)> backward;

  std::span<double> ensure_grad() {
    if (!has_grad) {
      grad.assign(data.size(), 0.0);
      has_grad = true;
    }
    return grad;
  }
};
}  // namespace detail

// Builds a result tensor. When gradient recording is enabled and any input
// requires grad, the rule is attached and invoked during backward with the
// result node (its data and grad). Rules accumulate into the inputs they
// captured via grad_accumulator(), and must skip inputs with
// requires_grad() == false.
Tensor record_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                 std::function<void(const detail::Node&)> rule);

// Ordered record of the operations reachable from a root.
class GradTape {
 public:
  static GradTape from_root(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }
  // Creation order; every node's parents appear before it.
  const std::vector<std::shared_ptr<detail::Node>>& nodes() const { return nodes_; }

  // Seeds d(root)/d(root) = 1 and runs each backward rule in reverse order.
  // Intermediate history is released afterwards.
  void replay_backward();

 private:
  std::shared_ptr<detail::Node> root_;
  std::vector<std::shared_ptr<detail::Node>> nodes_;
};

bool grad_enabled();

// Disables recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- operations ------------------------------------------------------------

// a[..., m, k] x b[..., k, n]. Batch dimensions must be equal, or one side may
// have none (it is then shared by every batch entry).
Tensor matmul(const Tensor& a, const Tensor& b);
// b must equal a's shape or a suffix of it (broadcast over leading dims).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor square(const Tensor& a);
Tensor gelu(const Tensor& x);

// Swap the two trailing axes.
Tensor transpose_last2(const Tensor& x);
// (B, L, heads*dh) -> (B, heads, L, dh) and back.
Tensor split_heads(const Tensor& x, std::size_t heads);
Tensor merge_heads(const Tensor& x);
// (B, L, d) -> (B, d), taking position `pos` of every sequence.
Tensor select_position(const Tensor& x, std::size_t pos);
// Leading rows [0, rows) of a 2-D tensor.
Tensor slice_rows(const Tensor& x, std::size_t rows);
// table (V, d), ids (B*L, row-major) -> (B, L, d)
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids, std::size_t batch,
                 std::size_t length);

Tensor softmax_lastdim(const Tensor& x);
// x: (B, H, Lq, Lk); key_valid: B*Lk flags. Invalid keys get probability 0.
// A row with no valid key yields all zeros.
Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> key_valid);

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Inverted dropout: kept entries scaled by 1/(1-p). Identity when p == 0.
Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng);

// Mean of squared differences over valid entries. `valid`, when given, has
// one flag per leading index (its length divides numel); every flagged
// leading index contributes all of its trailing entries. No valid entries
// gives exactly 0.
Tensor mse(const Tensor& a, const Tensor& b, std::span<const std::uint8_t> valid = {});

// logits (B, C); labels in [0, C). Mean negative log-likelihood.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// ---- finite-difference checking ---------------------------------------------

struct GradcheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

struct GradcheckOptions {
  double epsilon = 1e-5;
  double tol = 1e-5;
  // Relative error is |analytic - numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-6;
  // Check at most this many entries per input (evenly strided); 0 = all.
  std::size_t max_entries_per_input = 0;
};

// `f` must be deterministic and return a scalar built from `inputs`.
GradcheckReport gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                          const GradcheckOptions& options = {});

}  // namespace dsgkd

#include "dsgkd/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "dsgkd/kernels.hpp"

namespace dsgkd {

namespace {

std::atomic<std::uint64_t> g_next_seq{1};
thread_local bool g_grad_enabled = true;

std::shared_ptr<detail::Node> make_node(Shape shape, std::vector<double> data,
                                        bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  node->seq = g_next_seq.fetch_add(1, std::memory_order_relaxed);
  return node;
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ValidationError(std::string(op) + ": undefined tensor");
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

// ---- Tensor ------------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(make_node(std::move(shape), std::move(data), requires_grad)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->data.size(); }
std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != dim()) throw DimensionError("index rank mismatch for " + shape_str(shape()));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape()[axis]) throw DimensionError("index out of range for " + shape_str(shape()));
    flat = flat * shape()[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return node_ && node_->has_grad; }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::grad_accumulator() const { return node_->ensure_grad(); }

void Tensor::zero_grad() {
  if (node_->has_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  return Tensor(make_node(node_->shape, node_->data, false));
}

void Tensor::backward() const {
  require_defined(*this, "backward");
  if (numel() != 1) {
    throw DimensionError("backward() needs a scalar, got shape " + shape_str(shape()));
  }
  GradTape::from_root(*this).replay_backward();
}

Tensor record_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                 std::function<void(const detail::Node&)> rule) {
  bool needs = false;
  if (g_grad_enabled) {
    for (const auto& in : inputs) needs = needs || in.requires_grad();
  }
  auto node = make_node(std::move(shape), std::move(data), needs);
  if (needs) {
    node->parents.reserve(inputs.size());
    for (auto& in : inputs) node->parents.push_back(in.node_);
    node->backward = std::move(rule);
  }
  return Tensor(std::move(node));
}

// ---- GradTape ----------------------------------------------------------------

GradTape GradTape::from_root(const Tensor& root) {
  GradTape tape;
  tape.root_ = root.node_;
  if (!root.requires_grad()) return tape;
  std::vector<detail::Node*> stack{root.node_.get()};
  std::unordered_set<const detail::Node*> seen{root.node_.get()};
  tape.nodes_.push_back(root.node_);
  while (!stack.empty()) {
    detail::Node* n = stack.back();
    stack.pop_back();
    for (const auto& p : n->parents) {
      if (p->requires_grad && seen.insert(p.get()).second) {
        tape.nodes_.push_back(p);
        stack.push_back(p.get());
      }
    }
  }
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const auto& a, const auto& b) { return a->seq < b->seq; });
  return tape;
}

void GradTape::replay_backward() {
  if (nodes_.empty()) return;
  for (const auto& n : nodes_) n->ensure_grad();
  root_->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    detail::Node& n = **it;
    if (n.backward) n.backward(n);
  }
  for (const auto& n : nodes_) {
    n->parents.clear();
    n->backward = nullptr;
  }
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---- elementwise -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_defined(a, "add");
  require_defined(b, "add");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.size() > sa.size() || !std::equal(sb.rbegin(), sb.rend(), sa.rbegin())) {
    throw DimensionError("add: cannot broadcast " + shape_str(sb) + " onto " + shape_str(sa));
  }
  const std::size_t inner = b.numel();
  const std::size_t outer = inner == 0 ? 0 : a.numel() / inner;
  std::vector<double> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (std::size_t o = 0; o < outer; ++o) {
    double* row = out.data() + o * inner;
    for (std::size_t j = 0; j < inner; ++j) row[j] += bd[j];
  }
  return record_op(sa, std::move(out), {a, b}, [a, b, outer, inner](const detail::Node& y) {
    if (a.requires_grad()) {
      auto ga = a.grad_accumulator();
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += y.grad[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_accumulator();
      for (std::size_t o = 0; o < outer; ++o) {
        const double* row = y.grad.data() + o * inner;
        for (std::size_t j = 0; j < inner; ++j) gb[j] += row[j];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  return add(a, scale(b, -1.0));
}

Tensor scale(const Tensor& a, double factor) {
  require_defined(a, "scale");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= factor;
  return record_op(a.shape(), std::move(out), {a}, [a, factor](const detail::Node& y) {
    auto ga = a.grad_accumulator();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * y.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  double total = 0.0;
  for (double v : a.data()) total += v;
  return record_op(Shape{}, {total}, {a}, [a](const detail::Node& y) {
    auto ga = a.grad_accumulator();
    for (double& g : ga) g += y.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor square(const Tensor& a) {
  require_defined(a, "square");
  std::vector<double> out(a.data().begin(), a.data().end());
  for (double& v : out) v *= v;
  return record_op(a.shape(), std::move(out), {a}, [a](const detail::Node& y) {
    auto ga = a.grad_accumulator();
    auto ad = a.data();
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2.0 * ad[i] * y.grad[i];
  });
}

Tensor gelu(const Tensor& x) {
  require_defined(x, "gelu");
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * xd[i] * (1.0 + std::erf(xd[i] * kInvSqrt2));
  }
  return record_op(x.shape(), std::move(out), {x}, [x](const detail::Node& y) {
    constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    auto gx = x.grad_accumulator();
    auto xs = x.data();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = xs[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
      gx[i] += y.grad[i] * (cdf + v * pdf);
    }
  });
}

// ---- matmul ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto mismatch = [&] {
    return DimensionError("matmul: incompatible shapes " + shape_str(sa) + " and " +
                          shape_str(sb));
  };
  if (sa.size() < 2 || sb.size() < 2) throw mismatch();
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t k = sa.back();
  const std::size_t n = sb.back();
  if (sb[sb.size() - 2] != k) throw mismatch();
  const Shape batch_a(sa.begin(), sa.end() - 2);
  const Shape batch_b(sb.begin(), sb.end() - 2);
  if (!batch_a.empty() && !batch_b.empty() && batch_a != batch_b) throw mismatch();
  const Shape batch_shape = batch_a.empty() ? batch_b : batch_a;
  const std::size_t batch = shape_numel(batch_shape);
  const std::size_t stride_a = batch_a.empty() ? 0 : m * k;
  const std::size_t stride_b = batch_b.empty() ? 0 : k * n;

  Shape out_shape = batch_shape;
  out_shape.push_back(m);
  out_shape.push_back(n);
  std::vector<double> out(batch * m * n);
  if (stride_b == 0 && stride_a != 0) {
    // Shared right operand: one tall product.
    kernels::gemm(false, false, batch * m, n, k, a.data().data(), k, b.data().data(), n,
                  out.data(), false);
  } else {
    kernels::gemm_batched(batch, false, false, m, n, k, a.data().data(), stride_a,
                          b.data().data(), stride_b, out.data(), m * n, false);
  }
  return record_op(std::move(out_shape), std::move(out), {a, b},
                   [a, b, batch, m, n, k, stride_a, stride_b](const detail::Node& y) {
                     const double* gy = y.grad.data();
                     if (a.requires_grad()) {
                       double* ga = a.grad_accumulator().data();
                       if (stride_a != 0) {
                         if (stride_b == 0) {
                           kernels::gemm(false, true, batch * m, k, n, gy, n, b.data().data(), n,
                                         ga, true);
                         } else {
                           kernels::gemm_batched(batch, false, true, m, k, n, gy, m * n,
                                                 b.data().data(), k * n, ga, m * k, true);
                         }
                       } else {
                         for (std::size_t e = 0; e < batch; ++e) {
                           kernels::gemm(false, true, m, k, n, gy + e * m * n, n,
                                         b.data().data() + e * stride_b, n, ga, true);
                         }
                       }
                     }
                     if (b.requires_grad()) {
                       double* gb = b.grad_accumulator().data();
                       if (stride_b != 0) {
                         kernels::gemm_batched(batch, true, false, k, n, m, a.data().data(),
                                               stride_a, gy, m * n, gb, k * n, true);
                       } else if (stride_a != 0) {
                         kernels::gemm(true, false, k, n, batch * m, a.data().data(), k, gy, n,
                                       gb, true);
                       } else {
                         kernels::gemm(true, false, k, n, m, a.data().data(), k, gy, n, gb, true);
                       }
                     }
                   });
}

// ---- layout ------------------------------------------------------------------

Tensor transpose_last2(const Tensor& x) {
  require_defined(x, "transpose_last2");
  if (x.dim() < 2) throw DimensionError("transpose_last2 on " + shape_str(x.shape()));
  const std::size_t r = x.shape()[x.dim() - 2];
  const std::size_t c = x.shape().back();
  const std::size_t batch = r * c == 0 ? 0 : x.numel() / (r * c);
  Shape out_shape = x.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t e = 0; e < batch; ++e) {
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[e * r * c + j * r + i] = xd[e * r * c + i * c + j];
    }
  }
  return record_op(std::move(out_shape), std::move(out), {x},
                   [x, batch, r, c](const detail::Node& y) {
                     auto gx = x.grad_accumulator();
                     for (std::size_t e = 0; e < batch; ++e) {
                       for (std::size_t i = 0; i < r; ++i) {
                         for (std::size_t j = 0; j < c; ++j) {
                           gx[e * r * c + i * c + j] += y.grad[e * r * c + j * r + i];
                         }
                       }
                     }
                   });
}

Tensor split_heads(const Tensor& x, std::size_t heads) {
  require_defined(x, "split_heads");
  if (x.dim() != 3 || heads == 0 || x.size(2) % heads != 0) {
    throw DimensionError("split_heads: shape " + shape_str(x.shape()) + " with " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t B = x.size(0), L = x.size(1), D = x.size(2), dh = D / heads;
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < L; ++t)
      for (std::size_t h = 0; h < heads; ++h)
        std::copy_n(xd.data() + (b * L + t) * D + h * dh, dh,
                    out.data() + ((b * heads + h) * L + t) * dh);
  return record_op(Shape{B, heads, L, dh}, std::move(out), {x},
                   [x, B, L, D, heads, dh](const detail::Node& y) {
                     auto gx = x.grad_accumulator();
                     for (std::size_t b = 0; b < B; ++b)
                       for (std::size_t t = 0; t < L; ++t)
                         for (std::size_t h = 0; h < heads; ++h) {
                           const double* src = y.grad.data() + ((b * heads + h) * L + t) * dh;
                           double* dst = gx.data() + (b * L + t) * D + h * dh;
                           for (std::size_t j = 0; j < dh; ++j) dst[j] += src[j];
                         }
                   });
}

Tensor merge_heads(const Tensor& x) {
  require_defined(x, "merge_heads");
  if (x.dim() != 4) throw DimensionError("merge_heads: shape " + shape_str(x.shape()));
  const std::size_t B = x.size(0), H = x.size(1), L = x.size(2), dh = x.size(3), D = H * dh;
  std::vector<double> out(x.numel());
  auto xd = x.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t t = 0; t < L; ++t)
        std::copy_n(xd.data() + ((b * H + h) * L + t) * dh, dh,
                    out.data() + (b * L + t) * D + h * dh);
  return record_op(Shape{B, L, D}, std::move(out), {x},
                   [x, B, H, L, dh, D](const detail::Node& y) {
                     auto gx = x.grad_accumulator();
                     for (std::size_t b = 0; b < B; ++b)
                       for (std::size_t h = 0; h < H; ++h)
                         for (std::size_t t = 0; t < L; ++t) {
                           const double* src = y.grad.data() + (b * L + t) * D + h * dh;
                           double* dst = gx.data() + ((b * H + h) * L + t) * dh;
                           for (std::size_t j = 0; j < dh; ++j) dst[j] += src[j];
                         }
                   });
}

Tensor select_position(const Tensor& x, std::size_t pos) {
  require_defined(x, "select_position");
  if (x.dim() != 3 || pos >= x.size(1)) {
    throw DimensionError("select_position " + std::to_string(pos) + " from " +
                         shape_str(x.shape()));
  }
  const std::size_t B = x.size(0), L = x.size(1), D = x.size(2);
  std::vector<double> out(B * D);
  for (std::size_t b = 0; b < B; ++b) {
    std::copy_n(x.data().data() + (b * L + pos) * D, D, out.data() + b * D);
  }
  return record_op(Shape{B, D}, std::move(out), {x}, [x, B, L, D, pos](const detail::Node& y) {
    auto gx = x.grad_accumulator();
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t j = 0; j < D; ++j) gx[(b * L + pos) * D + j] += y.grad[b * D + j];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t rows) {
  require_defined(x, "slice_rows");
  if (x.dim() != 2 || rows > x.size(0)) {
    throw DimensionError("slice_rows " + std::to_string(rows) + " from " + shape_str(x.shape()));
  }
  const std::size_t D = x.size(1);
  std::vector<double> out(x.data().begin(), x.data().begin() + static_cast<std::ptrdiff_t>(rows * D));
  return record_op(Shape{rows, D}, std::move(out), {x}, [x](const detail::Node& y) {
    auto gx = x.grad_accumulator();
    for (std::size_t i = 0; i < y.grad.size(); ++i) gx[i] += y.grad[i];
  });
}

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids, std::size_t batch,
                 std::size_t length) {
  require_defined(table, "embedding");
  if (table.dim() != 2) throw DimensionError("embedding table shape " + shape_str(table.shape()));
  if (ids.size() != batch * length) {
    throw DimensionError("embedding: " + std::to_string(ids.size()) + " ids for batch " +
                         std::to_string(batch) + " x length " + std::to_string(length));
  }
  const std::size_t V = table.size(0), D = table.size(1);
  std::vector<double> out(ids.size() * D);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= V) {
      throw ValidationError("token id " + std::to_string(ids[i]) + " outside vocabulary of " +
                            std::to_string(V));
    }
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * D, D, out.data() + i * D);
  }
  std::vector<std::int32_t> saved(ids.begin(), ids.end());
  return record_op(Shape{batch, length, D}, std::move(out), {table},
                   [table, saved = std::move(saved), D](const detail::Node& y) {
                     auto gt = table.grad_accumulator();
                     for (std::size_t i = 0; i < saved.size(); ++i) {
                       double* row = gt.data() + static_cast<std::size_t>(saved[i]) * D;
                       const double* src = y.grad.data() + i * D;
                       for (std::size_t j = 0; j < D; ++j) row[j] += src[j];
                     }
                   });
}

// ---- normalization -----------------------------------------------------------

namespace {

Tensor softmax_impl(const Tensor& x, std::span<const std::uint8_t> key_valid,
                    std::size_t rows_per_group) {
  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / cols;
  std::vector<double> out(x.numel());
  kernels::softmax_rows(x.data().data(), out.data(), rows, cols,
                        key_valid.empty() ? nullptr : key_valid.data(), rows_per_group);
  return record_op(x.shape(), std::move(out), {x}, [x, rows, cols](const detail::Node& y) {
    auto gx = x.grad_accumulator();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* yr = y.data.data() + r * cols;
      const double* gr = y.grad.data() + r * cols;
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += yr[j] * gr[j];
      double* out = gx.data() + r * cols;
      for (std::size_t j = 0; j < cols; ++j) out[j] += yr[j] * (gr[j] - dot);
    }
  });
}

}  // namespace

Tensor softmax_lastdim(const Tensor& x) {
  require_defined(x, "softmax_lastdim");
  if (x.dim() == 0 || x.numel() == 0) {
    throw DimensionError("softmax_lastdim on empty tensor " + shape_str(x.shape()));
  }
  return softmax_impl(x, {}, 1);
}

Tensor masked_softmax(const Tensor& x, std::span<const std::uint8_t> key_valid) {
  require_defined(x, "masked_softmax");
  if (x.dim() != 4 || x.numel() == 0) {
    throw DimensionError("masked_softmax expects non-empty (B,H,Lq,Lk), got " +
                         shape_str(x.shape()));
  }
  const std::size_t B = x.size(0), H = x.size(1), Lq = x.size(2), Lk = x.size(3);
  if (key_valid.size() != B * Lk) {
    throw DimensionError("masked_softmax: key mask of " + std::to_string(key_valid.size()) +
                         " flags for " + shape_str(x.shape()));
  }
  return softmax_impl(x, key_valid, H * Lq);
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_defined(x, "layernorm");
  if (x.dim() == 0 || gain.shape() != Shape{x.shape().back()} || bias.shape() != gain.shape()) {
    throw DimensionError("layernorm: x " + shape_str(x.shape()) + ", gain " +
                         shape_str(gain.shape()) + ", bias " + shape_str(bias.shape()));
  }
  const std::size_t cols = x.shape().back();
  const std::size_t rows = cols == 0 ? 0 : x.numel() / cols;
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  std::vector<double> out(x.numel());
  kernels::layernorm_rows(x.data().data(), gain.data().data(), bias.data().data(), xhat.data(),
                          inv_std.data(), out.data(), rows, cols, eps);
  return record_op(
      x.shape(), std::move(out), {x, gain, bias},
      [x, gain, bias, rows, cols, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](const detail::Node& y) {
        const double* g = gain.data().data();
        if (gain.requires_grad() || bias.requires_grad()) {
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gy = y.grad.data() + r * cols;
            const double* xh = xhat.data() + r * cols;
            if (gain.requires_grad()) {
              auto gg = gain.grad_accumulator();
              for (std::size_t j = 0; j < cols; ++j) gg[j] += gy[j] * xh[j];
            }
            if (bias.requires_grad()) {
              auto gb = bias.grad_accumulator();
              for (std::size_t j = 0; j < cols; ++j) gb[j] += gy[j];
            }
          }
        }
        if (x.requires_grad()) {
          auto gx = x.grad_accumulator();
          const double n = static_cast<double>(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            const double* gy = y.grad.data() + r * cols;
            const double* xh = xhat.data() + r * cols;
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < cols; ++j) {
              const double d = gy[j] * g[j];
              s1 += d;
              s2 += d * xh[j];
            }
            double* out = gx.data() + r * cols;
            for (std::size_t j = 0; j < cols; ++j) {
              const double d = gy[j] * g[j];
              out[j] += inv_std[r] * (d - s1 / n - xh[j] * s2 / n);
            }
          }
        }
      });
}

Tensor dropout(const Tensor& x, double p, std::mt19937_64& rng) {
  require_defined(x, "dropout");
  if (p < 0.0 || p >= 1.0) throw ValidationError("dropout probability must be in [0,1)");
  if (p == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - p);
  const double s = 1.0 / (1.0 - p);
  std::vector<double> factor(x.numel());
  for (double& f : factor) f = keep(rng) ? s : 0.0;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor[i];
  return record_op(x.shape(), std::move(out), {x},
                   [x, factor = std::move(factor)](const detail::Node& y) {
                     auto gx = x.grad_accumulator();
                     for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += factor[i] * y.grad[i];
                   });
}

// ---- losses ------------------------------------------------------------------

Tensor mse(const Tensor& a, const Tensor& b, std::span<const std::uint8_t> valid) {
  require_defined(a, "mse");
  require_defined(b, "mse");
  if (a.shape() != b.shape()) {
    throw DimensionError("mse: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const std::size_t n = a.numel();
  std::size_t groups = n;
  std::size_t inner = 1;
  if (!valid.empty()) {
    // The flags must cover a leading prefix of the axes.
    std::size_t lead = 1;
    std::size_t axis = 0;
    while (axis < a.dim() && lead < valid.size()) lead *= a.shape()[axis++];
    if (lead != valid.size()) {
      throw DimensionError("mse: " + std::to_string(valid.size()) +
                           " validity flags do not match leading axes of " + shape_str(a.shape()));
    }
    groups = valid.size();
    inner = groups == 0 ? 0 : n / groups;
    for (std::uint8_t v : valid) {
      if (v > 1) throw ValidationError("mse: validity flags must be 0 or 1");
    }
  }
  std::vector<std::uint8_t> flags(valid.begin(), valid.end());
  std::size_t count = 0;
  double total = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t g = 0; g < groups; ++g) {
    if (!flags.empty() && !flags[g]) continue;
    for (std::size_t j = 0; j < inner; ++j) {
      const double d = ad[g * inner + j] - bd[g * inner + j];
      total += d * d;
    }
    count += inner;
  }
  const double value = count == 0 ? 0.0 : total / static_cast<double>(count);
  return record_op(Shape{}, {value}, {a, b},
                   [a, b, groups, inner, count, flags = std::move(flags)](const detail::Node& y) {
                     if (count == 0) return;
                     const double coef = 2.0 * y.grad[0] / static_cast<double>(count);
                     auto ad = a.data();
                     auto bd = b.data();
                     std::span<double> ga, gb;
                     if (a.requires_grad()) ga = a.grad_accumulator();
                     if (b.requires_grad()) gb = b.grad_accumulator();
                     for (std::size_t g = 0; g < groups; ++g) {
                       if (!flags.empty() && !flags[g]) continue;
                       for (std::size_t j = 0; j < inner; ++j) {
                         const std::size_t i = g * inner + j;
                         const double d = coef * (ad[i] - bd[i]);
                         if (!ga.empty()) ga[i] += d;
                         if (!gb.empty()) gb[i] -= d;
                       }
                     }
                   });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  require_defined(logits, "cross_entropy");
  if (logits.dim() != 2 || logits.size(0) != labels.size() || logits.size(0) == 0) {
    throw DimensionError("cross_entropy: logits " + shape_str(logits.shape()) + " with " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t B = logits.size(0), C = logits.size(1);
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= C) {
      throw ValidationError("cross_entropy: label " + std::to_string(y) + " outside [0," +
                            std::to_string(C) + ")");
    }
  }
  std::vector<double> probs(B * C);
  double total = 0.0;
  auto ld = logits.data();
  for (std::size_t b = 0; b < B; ++b) {
    const double* row = ld.data() + b * C;
    const double mx = *std::max_element(row, row + C);
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    total += lse - row[labels[b]];
    for (std::size_t c = 0; c < C; ++c) probs[b * C + c] = std::exp(row[c] - lse);
  }
  std::vector<int> saved(labels.begin(), labels.end());
  return record_op(Shape{}, {total / static_cast<double>(B)}, {logits},
                   [logits, B, C, probs = std::move(probs),
                    saved = std::move(saved)](const detail::Node& y) {
                     auto g = logits.grad_accumulator();
                     const double coef = y.grad[0] / static_cast<double>(B);
                     for (std::size_t b = 0; b < B; ++b) {
                       for (std::size_t c = 0; c < C; ++c) {
                         const double target = static_cast<int>(c) == saved[b] ? 1.0 : 0.0;
                         g[b * C + c] += coef * (probs[b * C + c] - target);
                       }
                     }
                   });
}

// ---- gradcheck ---------------------------------------------------------------

GradcheckReport gradcheck(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                          const GradcheckOptions& options) {
  for (auto& in : inputs) {
    require_defined(in, "gradcheck");
    in.zero_grad();
  }
  Tensor y = f();
  if (y.numel() != 1) throw DimensionError("gradcheck: function must return a scalar");
  if (!std::isfinite(y.item())) throw NumericError("gradcheck: non-finite function value");
  y.backward();

  GradcheckReport report;
  for (auto& in : inputs) {
    std::vector<double> analytic(in.numel(), 0.0);
    if (in.has_grad()) std::copy(in.grad().begin(), in.grad().end(), analytic.begin());
    const std::size_t n = in.numel();
    const std::size_t stride =
        options.max_entries_per_input == 0 || n <= options.max_entries_per_input
            ? 1
            : (n + options.max_entries_per_input - 1) / options.max_entries_per_input;
    auto data = in.mutable_data();
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = data[i];
      double plus = 0.0, minus = 0.0;
      {
        NoGradGuard guard;
        data[i] = saved + options.epsilon;
        plus = f().item();
        data[i] = saved - options.epsilon;
        minus = f().item();
      }
      data[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericError("gradcheck: non-finite function value under perturbation");
      }
      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double abs_err = std::abs(numeric - analytic[i]);
      const double denom =
          std::max({std::abs(numeric), std::abs(analytic[i]), options.floor});
      report.max_abs_error = std::max(report.max_abs_error, abs_err);
      report.max_rel_error = std::max(report.max_rel_error, abs_err / denom);
      ++report.checked;
    }
  }
  report.passed = report.max_rel_error < options.tol;
  return report;
}

}  // namespace dsgkd

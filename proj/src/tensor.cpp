#include "lenopt/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "lenopt/errors.hpp"

namespace lenopt::ad {

namespace {

thread_local Tape* g_tape = nullptr;
thread_local MacCounter* g_counter = nullptr;

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

bool should_record(const std::vector<Tensor>& inputs) {
  if (g_tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor& t) { return t.requires_grad(); });
}

void record(std::string_view op, std::vector<std::shared_ptr<Node>> inputs, Tensor& out,
            Tape::BackwardFn fn) {
  out.set_requires_grad(true);
  g_tape->record(op, std::move(inputs), out.shared(), std::move(fn));
}

void count_macs(std::size_t m, std::size_t k, std::size_t n) {
  if (g_counter != nullptr) g_counter->macs += static_cast<std::uint64_t>(m) * k * n;
}

void require_matrix(const Tensor& t, const char* op) {
  if (!t.defined() || t.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " +
                         (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

std::size_t trailing(const Tensor& t) { return t.shape().back(); }

// C[m×n] += A[m×k] · B[k×n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m×n] += A[m×k] · B[n×k]ᵀ
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

// C[m×n] += A[k×m]ᵀ · B[k×n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b,
             double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

// ---- Tensor ----------------------------------------------------------------

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill, bool requires_grad) : node_(std::make_shared<Node>()) {
  if (shape.empty() || std::any_of(shape.begin(), shape.end(), [](std::size_t d) { return d == 0; }))
    throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  node_->data.assign(shape_size(shape), fill);
  node_->shape = std::move(shape);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (shape.empty() || std::any_of(shape.begin(), shape.end(), [](std::size_t d) { return d == 0; }))
    throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  if (shape_size(shape) != data.size())
    throw DimensionError("shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value) { return Tensor({1}, std::vector<double>{value}); }

std::size_t Tensor::rows() const { return dim() == 1 ? 1 : node_->shape[0]; }
std::size_t Tensor::cols() const { return node_->shape.back(); }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->data[0];
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->data, node_->requires_grad); }

// ---- tape ------------------------------------------------------------------

std::span<const double> GradientMap::at(const Tensor& t) const {
  auto it = grads_.find(t.node());
  if (it == grads_.end()) throw ContractError("tensor has no gradient in this map");
  return it->second->grad;
}

void Tape::record(std::string_view op, std::vector<std::shared_ptr<Node>> inputs,
                  std::shared_ptr<Node> output, BackwardFn backward) {
  if (consumed_) throw ContractError("cannot record onto a tape that was already replayed");
  entries_.push_back(Entry{op, std::move(inputs), std::move(output), std::move(backward)});
}

std::vector<std::string_view> Tape::op_names() const {
  std::vector<std::string_view> names;
  names.reserve(entries_.size());
  for (const auto& e : entries_) names.push_back(e.op);
  return names;
}

GradientMap Tape::backward(const Tensor& loss) {
  if (consumed_) throw ContractError("backward already ran on this tape; record a new pass");
  if (!loss.defined() || loss.size() != 1)
    throw ContractError("backward needs a scalar loss, got " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  const bool on_tape = std::any_of(entries_.begin(), entries_.end(),
                                   [&](const Entry& e) { return e.output.get() == loss.node(); });
  if (!on_tape) throw ContractError("loss was not produced by an operation on this tape");

  Node* root = loss.node();
  root->ensure_grad();
  root->grad[0] += 1.0;

  visited_.clear();
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    visited_.push_back(it->op);
    if (it->output->grad.empty()) continue;
    it->backward();
  }

  GradientMap result;
  for (auto& e : entries_) {
    for (auto& in : e.inputs) {
      if (!in->requires_grad) continue;
      in->ensure_grad();
      result.grads_.emplace(in.get(), in);
    }
    e.output->ensure_grad();
    result.grads_.emplace(e.output.get(), e.output);
  }
  entries_.clear();
  entries_.shrink_to_fit();
  consumed_ = true;
  return result;
}

TapeScope::TapeScope(Tape& tape) : previous_(g_tape) { g_tape = &tape; }
TapeScope::~TapeScope() { g_tape = previous_; }
Tape* active_tape() noexcept { return g_tape; }

MacCountScope::MacCountScope(MacCounter& counter) : previous_(g_counter) { g_counter = &counter; }
MacCountScope::~MacCountScope() { g_counter = previous_; }

// ---- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k)
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  Tensor out({m, n});
  gemm_nn(m, k, n, a.data().data(), b.data().data(), out.mutable_data().data());
  count_macs(m, k, n);
  if (should_record({&a, &b})) {
    Node* an = a.node();
    Node* bn = b.node();
    Node* on = out.node();
    record("matmul", {a.shared(), b.shared()}, out, [an, bn, on, m, k, n] {
      if (an->requires_grad) {
        an->ensure_grad();
        gemm_nt(m, n, k, on->grad.data(), bn->data.data(), an->grad.data());
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        gemm_tn(k, m, n, an->data.data(), on->grad.data(), bn->grad.data());
      }
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k)
    throw DimensionError("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) +
                         " x transpose of " + shape_str(b.shape()));
  Tensor out({m, n});
  gemm_nt(m, k, n, a.data().data(), b.data().data(), out.mutable_data().data());
  count_macs(m, k, n);
  if (should_record({&a, &b})) {
    Node* an = a.node();
    Node* bn = b.node();
    Node* on = out.node();
    record("matmul_nt", {a.shared(), b.shared()}, out, [an, bn, on, m, k, n] {
      if (an->requires_grad) {
        an->ensure_grad();
        gemm_nn(m, n, k, on->grad.data(), bn->data.data(), an->grad.data());
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        gemm_tn(n, m, k, on->grad.data(), an->data.data(), bn->grad.data());
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out({n, m});
  auto src = a.data();
  auto dst = out.mutable_data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  if (should_record({&a})) {
    Node* an = a.node();
    Node* on = out.node();
    record("transpose", {a.shared()}, out, [an, on, m, n] {
      an->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) an->grad[i * n + j] += on->grad[j * m + i];
    });
  }
  return out;
}

// ---- element-wise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + b[i];
  if (should_record({&a, &b})) {
    Node* an = a.node();
    Node* bn = b.node();
    Node* on = out.node();
    record("add", {a.shared(), b.shared()}, out, [an, bn, on] {
      for (Node* in : {an, bn}) {
        if (!in->requires_grad) continue;
        in->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) in->grad[i] += on->grad[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] - b[i];
  if (should_record({&a, &b})) {
    Node* an = a.node();
    Node* bn = b.node();
    Node* on = out.node();
    record("sub", {a.shared(), b.shared()}, out, [an, bn, on] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] -= on->grad[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * b[i];
  if (should_record({&a, &b})) {
    Node* an = a.node();
    Node* bn = b.node();
    Node* on = out.node();
    record("mul", {a.shared(), b.shared()}, out, [an, bn, on] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->data[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->data[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] * factor;
  if (should_record({&a})) {
    Node* an = a.node();
    Node* on = out.node();
    record("scale", {a.shared()}, out, [an, on, factor] {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * factor;
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& a, double value) {
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = a[i] + value;
  if (should_record({&a})) {
    Node* an = a.node();
    Node* on = out.node();
    record("add_scalar", {a.shared()}, out, [an, on] {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
  }
  return out;
}

Tensor add_rowwise(const Tensor& a, const Tensor& bias) {
  require_matrix(a, "add_rowwise");
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.size() != n)
    throw DimensionError("add_rowwise: bias " + shape_str(bias.shape()) + " does not fit rows of " +
                         shape_str(a.shape()));
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) o[i * n + j] = a[i * n + j] + bias[j];
  if (should_record({&a, &bias})) {
    Node* an = a.node();
    Node* bn = bias.node();
    Node* on = out.node();
    record("add_rowwise", {a.shared(), bias.shared()}, out, [an, bn, on, m, n] {
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < m * n; ++i) an->grad[i] += on->grad[i];
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) bn->grad[j] += on->grad[i * n + j];
      }
    });
  }
  return out;
}

Tensor gelu(const Tensor& a) {
  Tensor out(a.shape());
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    const double x = a[i];
    o[i] = 0.5 * x * (1.0 + std::tanh(kGeluC * (x + kGeluA * x * x * x)));
  }
  if (should_record({&a})) {
    Node* an = a.node();
    Node* on = out.node();
    record("gelu", {a.shared()}, out, [an, on] {
      an->ensure_grad();
      for (std::size_t i = 0; i < on->grad.size(); ++i) {
        const double x = an->data[i];
        const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
        const double dt = (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * x * x);
        an->grad[i] += on->grad[i] * (0.5 * (1.0 + t) + 0.5 * x * dt);
      }
    });
  }
  return out;
}

// ---- row-wise normalizations -----------------------------------------------

Tensor softmax_rows(const Tensor& x, double temperature) {
  if (!(temperature > 0.0))
    throw ParameterError("softmax temperature must be positive, got " + std::to_string(temperature));
  const std::size_t n = trailing(x);
  const std::size_t rows = x.size() / n;
  const double inv_t = 1.0 / temperature;
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * n;
    double* yr = o.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      yr[j] = std::exp((xr[j] - mx) * inv_t);
      total += yr[j];
    }
    for (std::size_t j = 0; j < n; ++j) yr[j] /= total;
  }
  if (should_record({&x})) {
    Node* xn = x.node();
    Node* on = out.node();
    record("softmax_rows", {x.shared()}, out, [xn, on, n, rows, inv_t] {
      xn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = on->data.data() + r * n;
        const double* dy = on->grad.data() + r * n;
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
        double* dx = xn->grad.data() + r * n;
        for (std::size_t j = 0; j < n; ++j) dx[j] += inv_t * y[j] * (dy[j] - dot);
      }
    });
  }
  return out;
}

Tensor log_softmax_rows(const Tensor& x, double temperature) {
  if (!(temperature > 0.0))
    throw ParameterError("softmax temperature must be positive, got " + std::to_string(temperature));
  const std::size_t n = trailing(x);
  const std::size_t rows = x.size() / n;
  const double inv_t = 1.0 / temperature;
  Tensor out(x.shape());
  auto o = out.mutable_data();
  auto in = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * n;
    double* yr = o.data() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += std::exp((xr[j] - mx) * inv_t);
    const double lse = std::log(total);
    for (std::size_t j = 0; j < n; ++j) yr[j] = (xr[j] - mx) * inv_t - lse;
  }
  if (should_record({&x})) {
    Node* xn = x.node();
    Node* on = out.node();
    record("log_softmax_rows", {x.shared()}, out, [xn, on, n, rows, inv_t] {
      xn->ensure_grad();
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = on->data.data() + r * n;
        const double* dy = on->grad.data() + r * n;
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) total += dy[j];
        double* dx = xn->grad.data() + r * n;
        for (std::size_t j = 0; j < n; ++j) dx[j] += inv_t * (dy[j] - std::exp(y[j]) * total);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t h = trailing(x);
  if (gain.size() != h || bias.size() != h)
    throw DimensionError("layer_norm: input " + shape_str(x.shape()) + " vs gain " +
                         shape_str(gain.shape()) + " / bias " + shape_str(bias.shape()));
  if (!(eps > 0.0)) throw ParameterError("layer_norm eps must be positive");
  const std::size_t rows = x.size() / h;
  Tensor out(x.shape());
  std::vector<double> xhat(x.size());
  std::vector<double> rstd(rows);
  auto o = out.mutable_data();
  auto in = x.data();
  auto g = gain.data();
  auto b = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = in.data() + r * h;
    double mu = 0.0;
    for (std::size_t j = 0; j < h; ++j) mu += xr[j];
    mu /= static_cast<double>(h);
    double var = 0.0;
    for (std::size_t j = 0; j < h; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(h);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < h; ++j) {
      xhat[r * h + j] = (xr[j] - mu) * rstd[r];
      o[r * h + j] = g[j] * xhat[r * h + j] + b[j];
    }
  }
  if (should_record({&x, &gain, &bias})) {
    Node* xn = x.node();
    Node* gn = gain.node();
    Node* bn = bias.node();
    Node* on = out.node();
    record("layer_norm", {x.shared(), gain.shared(), bias.shared()}, out,
           [xn, gn, bn, on, h, rows, xhat = std::move(xhat), rstd = std::move(rstd)] {
             if (gn->requires_grad) gn->ensure_grad();
             if (bn->requires_grad) bn->ensure_grad();
             if (xn->requires_grad) xn->ensure_grad();
             std::vector<double> dxhat(h);
             for (std::size_t r = 0; r < rows; ++r) {
               const double* dy = on->grad.data() + r * h;
               const double* xh = xhat.data() + r * h;
               if (gn->requires_grad)
                 for (std::size_t j = 0; j < h; ++j) gn->grad[j] += dy[j] * xh[j];
               if (bn->requires_grad)
                 for (std::size_t j = 0; j < h; ++j) bn->grad[j] += dy[j];
               if (!xn->requires_grad) continue;
               double mean_d = 0.0, mean_dx = 0.0;
               for (std::size_t j = 0; j < h; ++j) {
                 dxhat[j] = dy[j] * gn->data[j];
                 mean_d += dxhat[j];
                 mean_dx += dxhat[j] * xh[j];
               }
               mean_d /= static_cast<double>(h);
               mean_dx /= static_cast<double>(h);
               double* dx = xn->grad.data() + r * h;
               for (std::size_t j = 0; j < h; ++j)
                 dx[j] += rstd[r] * (dxhat[j] - mean_d - xh[j] * mean_dx);
             }
           });
  }
  return out;
}

// ---- structural ------------------------------------------------------------

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  if (begin >= end || end > n)
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") outside " + shape_str(x.shape()));
  const std::size_t w = end - begin;
  Tensor out({m, w});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(x.data().data() + i * n + begin, w, o.data() + i * w);
  if (should_record({&x})) {
    Node* xn = x.node();
    Node* on = out.node();
    record("slice_cols", {x.shared()}, out, [xn, on, m, n, w, begin] {
      xn->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) xn->grad[i * n + begin + j] += on->grad[i * w + j];
    });
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no parts");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != m)
      throw DimensionError("concat_cols: row counts differ, " + shape_str(parts.front().shape()) +
                           " vs " + shape_str(p.shape()));
    n += p.cols();
  }
  Tensor out({m, n});
  auto o = out.mutable_data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(p.data().data() + i * w, w, o.data() + i * n + offset);
    offset += w;
  }
  if (should_record(parts)) {
    std::vector<std::shared_ptr<Node>> inputs;
    std::vector<Node*> raw;
    for (const auto& p : parts) {
      inputs.push_back(p.shared());
      raw.push_back(p.node());
    }
    Node* on = out.node();
    record("concat_cols", std::move(inputs), out, [raw, on, m, n] {
      std::size_t off = 0;
      for (Node* p : raw) {
        const std::size_t w = p->shape.back();
        if (p->requires_grad) {
          p->ensure_grad();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) p->grad[i * w + j] += on->grad[i * n + off + j];
        }
        off += w;
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  require_matrix(x, "gather_rows");
  const std::size_t n = x.cols();
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  for (std::size_t r : rows)
    if (r >= x.rows())
      throw DimensionError("gather_rows: row " + std::to_string(r) + " outside " +
                           shape_str(x.shape()));
  Tensor out({rows.size(), n});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(x.data().data() + rows[i] * n, n, o.data() + i * n);
  if (should_record({&x})) {
    Node* xn = x.node();
    Node* on = out.node();
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    record("gather_rows", {x.shared()}, out, [xn, on, n, idx = std::move(idx)] {
      xn->ensure_grad();
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < n; ++j) xn->grad[idx[i] * n + j] += on->grad[i * n + j];
    });
  }
  return out;
}

Tensor scatter_rows(const std::vector<Tensor>& parts,
                    const std::vector<std::vector<std::size_t>>& dst, std::size_t n_rows) {
  if (parts.empty() || parts.size() != dst.size())
    throw DimensionError("scatter_rows: parts and destination lists differ in count");
  const std::size_t n = parts.front().cols();
  std::vector<char> written(n_rows, 0);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    require_matrix(parts[p], "scatter_rows");
    if (parts[p].cols() != n || parts[p].rows() != dst[p].size())
      throw DimensionError("scatter_rows: part " + shape_str(parts[p].shape()) + " does not fit " +
                           std::to_string(dst[p].size()) + " destinations");
    for (std::size_t r : dst[p]) {
      if (r >= n_rows || written[r])
        throw DimensionError("scatter_rows: destination row " + std::to_string(r) +
                             " out of range or written twice");
      written[r] = 1;
    }
  }
  if (std::find(written.begin(), written.end(), 0) != written.end())
    throw DimensionError("scatter_rows: some destination rows are never written");
  Tensor out({n_rows, n});
  auto o = out.mutable_data();
  for (std::size_t p = 0; p < parts.size(); ++p)
    for (std::size_t i = 0; i < dst[p].size(); ++i)
      std::copy_n(parts[p].data().data() + i * n, n, o.data() + dst[p][i] * n);
  if (should_record(parts)) {
    std::vector<std::shared_ptr<Node>> inputs;
    std::vector<Node*> raw;
    for (const auto& p : parts) {
      inputs.push_back(p.shared());
      raw.push_back(p.node());
    }
    Node* on = out.node();
    record("scatter_rows", std::move(inputs), out, [raw, on, n, dst] {
      for (std::size_t p = 0; p < raw.size(); ++p) {
        if (!raw[p]->requires_grad) continue;
        raw[p]->ensure_grad();
        for (std::size_t i = 0; i < dst[p].size(); ++i)
          for (std::size_t j = 0; j < n; ++j) raw[p]->grad[i * n + j] += on->grad[dst[p][i] * n + j];
      }
    });
  }
  return out;
}

// ---- reductions ------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor out = Tensor::scalar(total);
  if (should_record({&x})) {
    Node* xn = x.node();
    Node* on = out.node();
    record("sum", {x.shared()}, out, [xn, on] {
      xn->ensure_grad();
      for (double& g : xn->grad) g += on->grad[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  Tensor out = Tensor::scalar(total * inv);
  if (should_record({&x})) {
    Node* xn = x.node();
    Node* on = out.node();
    record("mean", {x.shared()}, out, [xn, on, inv] {
      xn->ensure_grad();
      for (double& g : xn->grad) g += on->grad[0] * inv;
    });
  }
  return out;
}

Tensor mse(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse");
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  const double inv = 1.0 / static_cast<double>(a.size());
  Tensor out = Tensor::scalar(total * inv);
  if (should_record({&a, &b})) {
    Node* an = a.node();
    Node* bn = b.node();
    Node* on = out.node();
    record("mse", {a.shared(), b.shared()}, out, [an, bn, on, inv] {
      const double g = on->grad[0] * 2.0 * inv;
      if (an->requires_grad) {
        an->ensure_grad();
        for (std::size_t i = 0; i < an->data.size(); ++i)
          an->grad[i] += g * (an->data[i] - bn->data[i]);
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (std::size_t i = 0; i < bn->data.size(); ++i)
          bn->grad[i] -= g * (an->data[i] - bn->data[i]);
      }
    });
  }
  return out;
}

}  // namespace lenopt::ad

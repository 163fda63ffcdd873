#pragma once

// Dense row-major double tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto shared storage. Operations record themselves
// onto the tape that is active on the calling thread (see TapeScope) whenever
// at least one input requires a gradient; with no active tape they are plain
// forward computations and safe to run concurrently on shared read-only inputs.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace lenopt::ad {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_size(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a backward pass reaches the node
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor scalar(double value);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return node_->data; }
  std::span<double> mutable_data() { return node_->data; }
  double operator[](std::size_t i) const { return node_->data[i]; }
  double at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() { node_->grad.clear(); }

  /// Copy of the values with no gradient tracking.
  Tensor detach() const;
  /// Deep copy preserving requires_grad.
  Tensor clone() const;

  Node* node() const noexcept { return node_.get(); }
  const std::shared_ptr<Node>& shared() const noexcept { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Gradients produced by one backward pass, keyed by tensor identity.
class GradientMap {
 public:
  bool contains(const Tensor& t) const { return grads_.contains(t.node()); }
  std::span<const double> at(const Tensor& t) const;
  std::size_t size() const { return grads_.size(); }

 private:
  friend class Tape;
  std::unordered_map<const Node*, std::shared_ptr<Node>> grads_;
};

class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Entry {
    std::string_view op;
    std::vector<std::shared_ptr<Node>> inputs;
    std::shared_ptr<Node> output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::string_view op, std::vector<std::shared_ptr<Node>> inputs,
              std::shared_ptr<Node> output, BackwardFn backward);

  /// Propagates d(loss)/d(.) through the recorded operations in reverse order.
  /// Gradients accumulate into leaf tensors until they are zeroed. A tape can
  /// be replayed only once.
  GradientMap backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  std::vector<std::string_view> op_names() const;
  /// Operation names in the order backward visited them (filled by backward).
  const std::vector<std::string_view>& visit_order() const { return visited_; }

 private:
  std::vector<Entry> entries_;
  std::vector<std::string_view> visited_;
  bool consumed_ = false;
};

/// Makes `tape` the active tape of the current thread for the scope lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape() noexcept;

/// Counts multiply-accumulate operations performed by matmul kernels on this thread.
struct MacCounter {
  std::uint64_t macs = 0;
};

class MacCountScope {
 public:
  explicit MacCountScope(MacCounter& counter);
  ~MacCountScope();
  MacCountScope(const MacCountScope&) = delete;
  MacCountScope& operator=(const MacCountScope&) = delete;

 private:
  MacCounter* previous_;
};

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double value);
/// Adds a length-n vector to every row of an m×n matrix.
Tensor add_rowwise(const Tensor& a, const Tensor& bias);
Tensor gelu(const Tensor& a);

Tensor softmax_rows(const Tensor& x, double temperature = 1.0);
Tensor log_softmax_rows(const Tensor& x, double temperature = 1.0);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-12);

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows);
/// Builds an n_rows×c matrix where row dst[p][r] is row r of parts[p].
/// Every destination row must be written exactly once.
Tensor scatter_rows(const std::vector<Tensor>& parts,
                    const std::vector<std::vector<std::size_t>>& dst, std::size_t n_rows);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// mean((a - b)^2)
Tensor mse(const Tensor& a, const Tensor& b);

}  // namespace lenopt::ad

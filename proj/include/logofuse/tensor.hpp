#pragma once

// Dense f64 tensors (rank 1 or 2) with a reverse-mode tape. Small by intent:
// just enough operations for attention blocks, margin losses and pooling.
// Summation order is fixed row-major left-to-right so runs are reproducible
// under a fixed seed.

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace lf {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(msg) {}
};

class DegenerateInputError : public Error {
 public:
  explicit DegenerateInputError(const std::string& msg) : Error(msg) {}
};

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

class Tensor {
 public:
  // Throws ShapeError when product(shape) != data.size(), NumericError when
  // any value is non-finite. `origin` names the producing operation for
  // diagnostics.
  Tensor(Shape shape, std::vector<double> data, bool requires_grad,
         const std::string& origin);

  static TensorPtr make(Shape shape, std::vector<double> data,
                        bool requires_grad = false,
                        const std::string& origin = "tensor");
  static TensorPtr zeros(Shape shape, bool requires_grad = false);
  static TensorPtr scalar(double v, bool requires_grad = false);
  static TensorPtr vec(std::vector<double> data, bool requires_grad = false);
  static TensorPtr matrix(int rows, int cols, std::vector<double> data,
                          bool requires_grad = false);

  const Shape& shape() const { return shape_; }
  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape_.size()); }
  bool is_scalar() const { return rank() == 1 && shape_[0] == 1; }
  double scalar_value() const;

  // 2-D accessors; rank-1 tensors act as a single row.
  int rows() const { return rank() == 2 ? shape_[0] : 1; }
  int cols() const { return rank() == 2 ? shape_[1] : shape_[0]; }
  double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }
  double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }

  bool has_grad() const { return !grad.empty(); }
  void ensure_grad();
  void zero_grad() { grad.clear(); }

  std::vector<double> data;
  std::vector<double> grad;  // empty until backward touches this tensor
  bool requires_grad = false;

 private:
  Shape shape_;
};

// Ordered record of executed differentiable operations. Backward replays the
// record in reverse; the tape and its tensors stay on one thread during a
// training step.
class Graph {
 public:
  using BackwardFn = std::function<void()>;

  TensorPtr record(TensorPtr out, std::vector<TensorPtr> inputs, BackwardFn bw);

  // Seeds loss.grad with 1 and replays the tape. Throws on a non-scalar loss,
  // a loss not produced through this graph, or a second call without reset().
  void backward(const TensorPtr& loss);

  void reset();
  size_t num_ops() const { return nodes_.size(); }
  bool produced(const Tensor* t) const { return produced_.count(t) > 0; }

 private:
  struct Node {
    TensorPtr out;
    std::vector<TensorPtr> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  std::unordered_set<const Tensor*> produced_;
  bool backward_done_ = false;
};

// ---- differentiable operations ---------------------------------------------

TensorPtr matmul(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr transpose(Graph& g, const TensorPtr& a);
TensorPtr add(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr scale(Graph& g, const TensorPtr& a, double c);
// x[N x C] + b[C] broadcast over rows
TensorPtr add_rowvec(Graph& g, const TensorPtr& x, const TensorPtr& b);
TensorPtr tanh(Graph& g, const TensorPtr& a);
TensorPtr sum(Graph& g, const TensorPtr& a);
TensorPtr clamp(Graph& g, const TensorPtr& a, double lo, double hi);

// Softmax along the last axis with max-subtraction; rank-1 input is one row.
TensorPtr softmax(Graph& g, const TensorPtr& x);
// Same, but only columns with attend[c] != 0 participate; masked outputs are 0.
TensorPtr softmax_masked(Graph& g, const TensorPtr& x,
                         const std::vector<uint8_t>& attend);

// Unit-normalizes a rank-1 tensor; throws DegenerateInputError when the norm
// is at or below 1e-12.
TensorPtr l2_normalize(Graph& g, const TensorPtr& x);

// Row-wise x / sqrt(mean(x^2) + eps). Scale-only normalization; idempotent up
// to the eps term and direction-preserving, which the fusion residual relies on.
TensorPtr rms_norm_rows(Graph& g, const TensorPtr& x, double eps = 1e-8);

TensorPtr mean_rows(Graph& g, const TensorPtr& x);                 // [N x C] -> [C]
TensorPtr slice_rows(Graph& g, const TensorPtr& x, int r0, int r1);
TensorPtr concat_rows(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr concat_cols(Graph& g, const std::vector<TensorPtr>& parts);
TensorPtr concat_vec(Graph& g, const TensorPtr& a, const TensorPtr& b);
TensorPtr stack_rows(Graph& g, const std::vector<TensorPtr>& vecs); // B x [C] -> [B x C]
TensorPtr reshape(Graph& g, const TensorPtr& x, Shape shape);
// rows of `table` gathered by id; backward scatter-adds into table.grad
TensorPtr embedding_rows(Graph& g, const TensorPtr& table,
                         const std::vector<int>& ids);

// ---- gradient checking ------------------------------------------------------

// Central-difference check of d f / d x. `f` must return a scalar built on the
// graph it is handed. Returns max over coordinates of
// |analytic - numeric| / max(1, |numeric|). step must lie in (0, 1e-2].
double finite_diff_check(
    const std::function<TensorPtr(Graph&, const TensorPtr&)>& f,
    const TensorPtr& x, double step);

// ---- seeded rng -------------------------------------------------------------

// mt19937_64 with hand-rolled uniform/normal draws so the stream is exactly
// reproducible and serializable (no distribution-internal caching).
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }
  double uniform();                         // [0, 1)
  double uniform(double lo, double hi);
  double normal();                          // Box-Muller, no cached spare
  int uniform_int(int lo, int hi);          // inclusive bounds

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[i], v[uniform_int(0, i)]);
    }
  }

  std::string state() const;
  void set_state(const std::string& s);

 private:
  std::mt19937_64 engine_;
};

uint64_t mix_seed(uint64_t seed, uint64_t salt);

}  // namespace lf

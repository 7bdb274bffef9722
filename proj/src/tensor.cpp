#include "logofuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lf {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool rg,
               const std::string& origin)
    : data(std::move(values)), requires_grad(rg), shape_(std::move(shape)) {
  if (shape_.empty() || shape_.size() > 2) {
    throw ShapeError(origin + ": rank must be 1 or 2, got " + shape_str(shape_));
  }
  int64_t n = 1;
  for (int d : shape_) {
    if (d <= 0) throw ShapeError(origin + ": non-positive dimension in " + shape_str(shape_));
    n *= d;
  }
  if (n != static_cast<int64_t>(data.size())) {
    throw ShapeError(origin + ": shape " + shape_str(shape_) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
  for (double v : data) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value produced by " + origin);
    }
  }
}

TensorPtr Tensor::make(Shape shape, std::vector<double> data, bool requires_grad,
                       const std::string& origin) {
  return std::make_shared<Tensor>(std::move(shape), std::move(data), requires_grad, origin);
}

TensorPtr Tensor::zeros(Shape shape, bool requires_grad) {
  int64_t n = 1;
  for (int d : shape) n *= std::max(d, 0);
  return make(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

TensorPtr Tensor::scalar(double v, bool requires_grad) {
  return make({1}, {v}, requires_grad, "scalar");
}

TensorPtr Tensor::vec(std::vector<double> data, bool requires_grad) {
  int n = static_cast<int>(data.size());
  return make({n}, std::move(data), requires_grad, "vec");
}

TensorPtr Tensor::matrix(int rows, int cols, std::vector<double> data, bool requires_grad) {
  return make({rows, cols}, std::move(data), requires_grad, "matrix");
}

double Tensor::scalar_value() const {
  if (!is_scalar()) throw ShapeError("scalar_value on tensor of shape " + shape_str(shape_));
  return data[0];
}

void Tensor::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

TensorPtr Graph::record(TensorPtr out, std::vector<TensorPtr> inputs, BackwardFn bw) {
  produced_.insert(out.get());
  nodes_.push_back(Node{out, std::move(inputs), std::move(bw)});
  bool rg = false;
  for (const auto& in : nodes_.back().inputs) rg = rg || in->requires_grad;
  nodes_.back().out->requires_grad = nodes_.back().out->requires_grad || rg;
  return out;
}

void Graph::backward(const TensorPtr& loss) {
  if (!loss || !loss->is_scalar()) {
    throw ShapeError("backward: loss must be a scalar tensor");
  }
  if (!produced(loss.get())) {
    throw Error("backward: loss was not produced through this graph");
  }
  if (backward_done_) {
    throw Error("backward: already called on this graph; reset() first");
  }
  backward_done_ = true;
  loss->ensure_grad();
  loss->grad[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (!it->out->has_grad()) continue;  // no downstream contribution
    it->backward();
  }
}

void Graph::reset() {
  nodes_.clear();
  produced_.clear();
  backward_done_ = false;
}

namespace {

void want_rank2(const TensorPtr& t, const char* op) {
  if (t->rank() != 2) {
    throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t->shape()));
  }
}

void want_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
  if (a->shape() != b->shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->shape()) +
                     " vs " + shape_str(b->shape()));
  }
}

}  // namespace

TensorPtr matmul(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  want_rank2(a, "matmul");
  want_rank2(b, "matmul");
  const int m = a->rows(), k = a->cols(), n = b->cols();
  if (b->rows() != k) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a->shape()) +
                     " vs " + shape_str(b->shape()));
  }
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += a->at(i, t) * b->at(t, j);
      out[static_cast<size_t>(i) * n + j] = acc;
    }
  }
  TensorPtr o = Tensor::make({m, n}, std::move(out), false, "matmul");
  return g.record(o, {a, b}, [a, b, o, m, k, n]() {
    a->ensure_grad();
    b->ensure_grad();
    for (int i = 0; i < m; ++i) {
      for (int t = 0; t < k; ++t) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += o->grad[static_cast<size_t>(i) * n + j] * b->at(t, j);
        a->grad[static_cast<size_t>(i) * k + t] += acc;
      }
    }
    for (int t = 0; t < k; ++t) {
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int i = 0; i < m; ++i) acc += a->at(i, t) * o->grad[static_cast<size_t>(i) * n + j];
        b->grad[static_cast<size_t>(t) * n + j] += acc;
      }
    }
  });
}

TensorPtr transpose(Graph& g, const TensorPtr& a) {
  want_rank2(a, "transpose");
  const int m = a->rows(), n = a->cols();
  std::vector<double> out(a->data.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(j) * m + i] = a->at(i, j);
  TensorPtr o = Tensor::make({n, m}, std::move(out), false, "transpose");
  return g.record(o, {a}, [a, o, m, n]() {
    a->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        a->grad[static_cast<size_t>(i) * n + j] += o->grad[static_cast<size_t>(j) * m + i];
  });
}

TensorPtr add(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  want_same_shape(a, b, "add");
  std::vector<double> out(a->data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] + b->data[i];
  TensorPtr o = Tensor::make(a->shape(), std::move(out), false, "add");
  return g.record(o, {a, b}, [a, b, o]() {
    a->ensure_grad();
    b->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) {
      a->grad[i] += o->grad[i];
      b->grad[i] += o->grad[i];
    }
  });
}

TensorPtr sub(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  want_same_shape(a, b, "sub");
  std::vector<double> out(a->data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] - b->data[i];
  TensorPtr o = Tensor::make(a->shape(), std::move(out), false, "sub");
  return g.record(o, {a, b}, [a, b, o]() {
    a->ensure_grad();
    b->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) {
      a->grad[i] += o->grad[i];
      b->grad[i] -= o->grad[i];
    }
  });
}

TensorPtr mul(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  want_same_shape(a, b, "mul");
  std::vector<double> out(a->data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * b->data[i];
  TensorPtr o = Tensor::make(a->shape(), std::move(out), false, "mul");
  return g.record(o, {a, b}, [a, b, o]() {
    a->ensure_grad();
    b->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) {
      a->grad[i] += o->grad[i] * b->data[i];
      b->grad[i] += o->grad[i] * a->data[i];
    }
  });
}

TensorPtr scale(Graph& g, const TensorPtr& a, double c) {
  std::vector<double> out(a->data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a->data[i] * c;
  TensorPtr o = Tensor::make(a->shape(), std::move(out), false, "scale");
  return g.record(o, {a}, [a, o, c]() {
    a->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i] * c;
  });
}

TensorPtr add_rowvec(Graph& g, const TensorPtr& x, const TensorPtr& b) {
  want_rank2(x, "add_rowvec");
  if (b->rank() != 1 || b->cols() != x->cols()) {
    throw ShapeError("add_rowvec: bias " + shape_str(b->shape()) + " does not match " +
                     shape_str(x->shape()));
  }
  const int n = x->rows(), c = x->cols();
  std::vector<double> out(x->data.size());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<size_t>(i) * c + j] = x->at(i, j) + b->data[j];
  TensorPtr o = Tensor::make(x->shape(), std::move(out), false, "add_rowvec");
  return g.record(o, {x, b}, [x, b, o, n, c]() {
    x->ensure_grad();
    b->ensure_grad();
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < c; ++j) {
        const double gv = o->grad[static_cast<size_t>(i) * c + j];
        x->grad[static_cast<size_t>(i) * c + j] += gv;
        b->grad[j] += gv;
      }
    }
  });
}

TensorPtr tanh(Graph& g, const TensorPtr& a) {
  std::vector<double> out(a->data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a->data[i]);
  TensorPtr o = Tensor::make(a->shape(), std::move(out), false, "tanh");
  return g.record(o, {a}, [a, o]() {
    a->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) {
      a->grad[i] += o->grad[i] * (1.0 - o->data[i] * o->data[i]);
    }
  });
}

TensorPtr sum(Graph& g, const TensorPtr& a) {
  double acc = 0.0;
  for (double v : a->data) acc += v;
  TensorPtr o = Tensor::make({1}, {acc}, false, "sum");
  return g.record(o, {a}, [a, o]() {
    a->ensure_grad();
    for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += o->grad[0];
  });
}

TensorPtr clamp(Graph& g, const TensorPtr& a, double lo, double hi) {
  std::vector<double> out(a->data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::min(std::max(a->data[i], lo), hi);
  TensorPtr o = Tensor::make(a->shape(), std::move(out), false, "clamp");
  return g.record(o, {a}, [a, o, lo, hi]() {
    a->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) {
      if (a->data[i] > lo && a->data[i] < hi) a->grad[i] += o->grad[i];
    }
  });
}

namespace {

TensorPtr softmax_impl(Graph& g, const TensorPtr& x, const std::vector<uint8_t>* attend) {
  const int rows = x->rows(), cols = x->cols();
  if (cols < 1) throw ShapeError("softmax: empty axis");
  if (attend) {
    if (static_cast<int>(attend->size()) != cols) {
      throw ShapeError("softmax: mask length " + std::to_string(attend->size()) +
                       " does not match axis " + std::to_string(cols));
    }
    bool any = false;
    for (uint8_t m : *attend) any = any || (m != 0);
    if (!any) throw ShapeError("softmax: mask excludes every column");
  }
  std::vector<double> out(x->data.size(), 0.0);
  for (int i = 0; i < rows; ++i) {
    double mx = -1e300;
    for (int j = 0; j < cols; ++j) {
      if (attend && !(*attend)[j]) continue;
      mx = std::max(mx, x->at(i, j));
    }
    double denom = 0.0;
    for (int j = 0; j < cols; ++j) {
      if (attend && !(*attend)[j]) continue;
      denom += std::exp(x->at(i, j) - mx);
    }
    for (int j = 0; j < cols; ++j) {
      if (attend && !(*attend)[j]) continue;
      out[static_cast<size_t>(i) * cols + j] = std::exp(x->at(i, j) - mx) / denom;
    }
  }
  TensorPtr o = Tensor::make(x->shape(), std::move(out), false, "softmax");
  return g.record(o, {x}, [x, o, rows, cols]() {
    x->ensure_grad();
    for (int i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < cols; ++j) {
        const size_t k = static_cast<size_t>(i) * cols + j;
        dot += o->grad[k] * o->data[k];
      }
      for (int j = 0; j < cols; ++j) {
        const size_t k = static_cast<size_t>(i) * cols + j;
        x->grad[k] += o->data[k] * (o->grad[k] - dot);
      }
    }
  });
}

}  // namespace

TensorPtr softmax(Graph& g, const TensorPtr& x) { return softmax_impl(g, x, nullptr); }

TensorPtr softmax_masked(Graph& g, const TensorPtr& x, const std::vector<uint8_t>& attend) {
  return softmax_impl(g, x, &attend);
}

TensorPtr l2_normalize(Graph& g, const TensorPtr& x) {
  if (x->rank() != 1) {
    throw ShapeError("l2_normalize: expected rank-1 tensor, got " + shape_str(x->shape()));
  }
  double sq = 0.0;
  for (double v : x->data) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= 1e-12) {
    throw DegenerateInputError("l2_normalize: input norm " + std::to_string(norm) +
                               " is at or below 1e-12");
  }
  std::vector<double> out(x->data.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x->data[i] / norm;
  TensorPtr o = Tensor::make(x->shape(), std::move(out), false, "l2_normalize");
  return g.record(o, {x}, [x, o, norm]() {
    x->ensure_grad();
    double dot = 0.0;
    for (size_t i = 0; i < x->data.size(); ++i) dot += x->data[i] * o->grad[i];
    const double n3 = norm * norm * norm;
    for (size_t i = 0; i < x->data.size(); ++i) {
      x->grad[i] += o->grad[i] / norm - x->data[i] * dot / n3;
    }
  });
}

TensorPtr rms_norm_rows(Graph& g, const TensorPtr& x, double eps) {
  const int rows = x->rows(), cols = x->cols();
  std::vector<double> out(x->data.size());
  std::vector<double> rms(rows);
  for (int i = 0; i < rows; ++i) {
    double sq = 0.0;
    for (int j = 0; j < cols; ++j) sq += x->at(i, j) * x->at(i, j);
    rms[i] = std::sqrt(sq / cols + eps);
    for (int j = 0; j < cols; ++j) out[static_cast<size_t>(i) * cols + j] = x->at(i, j) / rms[i];
  }
  TensorPtr o = Tensor::make(x->shape(), std::move(out), false, "rms_norm");
  return g.record(o, {x}, [x, o, rows, cols, rms]() {
    x->ensure_grad();
    for (int i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < cols; ++j) {
        dot += o->grad[static_cast<size_t>(i) * cols + j] * x->at(i, j);
      }
      const double r = rms[i];
      const double r3 = r * r * r;
      for (int j = 0; j < cols; ++j) {
        const size_t k = static_cast<size_t>(i) * cols + j;
        x->grad[k] += o->grad[k] / r - x->at(i, j) * dot / (cols * r3);
      }
    }
  });
}

TensorPtr mean_rows(Graph& g, const TensorPtr& x) {
  want_rank2(x, "mean_rows");
  const int rows = x->rows(), cols = x->cols();
  std::vector<double> out(cols, 0.0);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out[j] += x->at(i, j);
  for (int j = 0; j < cols; ++j) out[j] /= rows;
  TensorPtr o = Tensor::make({cols}, std::move(out), false, "mean_rows");
  return g.record(o, {x}, [x, o, rows, cols]() {
    x->ensure_grad();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        x->grad[static_cast<size_t>(i) * cols + j] += o->grad[j] / rows;
  });
}

TensorPtr slice_rows(Graph& g, const TensorPtr& x, int r0, int r1) {
  want_rank2(x, "slice_rows");
  if (r0 < 0 || r1 <= r0 || r1 > x->rows()) {
    throw ShapeError("slice_rows: range [" + std::to_string(r0) + ", " + std::to_string(r1) +
                     ") invalid for " + shape_str(x->shape()));
  }
  const int cols = x->cols();
  std::vector<double> out(static_cast<size_t>(r1 - r0) * cols);
  std::copy(x->data.begin() + static_cast<size_t>(r0) * cols,
            x->data.begin() + static_cast<size_t>(r1) * cols, out.begin());
  TensorPtr o = Tensor::make({r1 - r0, cols}, std::move(out), false, "slice_rows");
  return g.record(o, {x}, [x, o, r0, cols]() {
    x->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) {
      x->grad[static_cast<size_t>(r0) * cols + i] += o->grad[i];
    }
  });
}

TensorPtr concat_rows(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  want_rank2(a, "concat_rows");
  want_rank2(b, "concat_rows");
  if (a->cols() != b->cols()) {
    throw ShapeError("concat_rows: column mismatch " + shape_str(a->shape()) + " vs " +
                     shape_str(b->shape()));
  }
  std::vector<double> out;
  out.reserve(a->data.size() + b->data.size());
  out.insert(out.end(), a->data.begin(), a->data.end());
  out.insert(out.end(), b->data.begin(), b->data.end());
  TensorPtr o = Tensor::make({a->rows() + b->rows(), a->cols()}, std::move(out), false, "concat_rows");
  return g.record(o, {a, b}, [a, b, o]() {
    a->ensure_grad();
    b->ensure_grad();
    for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += o->grad[i];
    for (size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += o->grad[a->data.size() + i];
  });
}

TensorPtr concat_cols(Graph& g, const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const int rows = parts[0]->rows();
  int total = 0;
  for (const auto& p : parts) {
    want_rank2(p, "concat_cols");
    if (p->rows() != rows) {
      throw ShapeError("concat_cols: row mismatch " + shape_str(p->shape()));
    }
    total += p->cols();
  }
  std::vector<double> out(static_cast<size_t>(rows) * total);
  int off = 0;
  for (const auto& p : parts) {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < p->cols(); ++j)
        out[static_cast<size_t>(i) * total + off + j] = p->at(i, j);
    off += p->cols();
  }
  TensorPtr o = Tensor::make({rows, total}, std::move(out), false, "concat_cols");
  std::vector<TensorPtr> inputs = parts;
  return g.record(o, inputs, [parts, o, rows, total]() {
    int off = 0;
    for (const auto& p : parts) {
      p->ensure_grad();
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < p->cols(); ++j)
          p->grad[static_cast<size_t>(i) * p->cols() + j] +=
              o->grad[static_cast<size_t>(i) * total + off + j];
      off += p->cols();
    }
  });
}

TensorPtr concat_vec(Graph& g, const TensorPtr& a, const TensorPtr& b) {
  if (a->rank() != 1 || b->rank() != 1) {
    throw ShapeError("concat_vec: expects rank-1 tensors");
  }
  std::vector<double> out;
  out.reserve(a->data.size() + b->data.size());
  out.insert(out.end(), a->data.begin(), a->data.end());
  out.insert(out.end(), b->data.begin(), b->data.end());
  const int total = static_cast<int>(out.size());
  TensorPtr o = Tensor::make({total}, std::move(out), false, "concat_vec");
  return g.record(o, {a, b}, [a, b, o]() {
    a->ensure_grad();
    b->ensure_grad();
    for (size_t i = 0; i < a->grad.size(); ++i) a->grad[i] += o->grad[i];
    for (size_t i = 0; i < b->grad.size(); ++i) b->grad[i] += o->grad[a->data.size() + i];
  });
}

TensorPtr stack_rows(Graph& g, const std::vector<TensorPtr>& vecs) {
  if (vecs.empty()) throw ShapeError("stack_rows: no inputs");
  const int cols = vecs[0]->cols();
  for (const auto& v : vecs) {
    if (v->rank() != 1 || v->cols() != cols) {
      throw ShapeError("stack_rows: expects rank-1 tensors of equal length");
    }
  }
  const int rows = static_cast<int>(vecs.size());
  std::vector<double> out(static_cast<size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i)
    std::copy(vecs[i]->data.begin(), vecs[i]->data.end(),
              out.begin() + static_cast<size_t>(i) * cols);
  TensorPtr o = Tensor::make({rows, cols}, std::move(out), false, "stack_rows");
  std::vector<TensorPtr> inputs = vecs;
  return g.record(o, inputs, [vecs, o, cols]() {
    for (size_t i = 0; i < vecs.size(); ++i) {
      vecs[i]->ensure_grad();
      for (int j = 0; j < cols; ++j) vecs[i]->grad[j] += o->grad[i * cols + j];
    }
  });
}

TensorPtr reshape(Graph& g, const TensorPtr& x, Shape shape) {
  TensorPtr o = Tensor::make(std::move(shape), x->data, false, "reshape");
  if (o->size() != x->size()) {
    throw ShapeError("reshape: size mismatch " + shape_str(x->shape()) + " -> " +
                     shape_str(o->shape()));
  }
  return g.record(o, {x}, [x, o]() {
    x->ensure_grad();
    for (size_t i = 0; i < o->grad.size(); ++i) x->grad[i] += o->grad[i];
  });
}

TensorPtr embedding_rows(Graph& g, const TensorPtr& table, const std::vector<int>& ids) {
  want_rank2(table, "embedding_rows");
  const int vocab = table->rows(), cols = table->cols();
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw ShapeError("embedding_rows: id " + std::to_string(id) + " out of range for vocab " +
                       std::to_string(vocab));
    }
  }
  const int rows = static_cast<int>(ids.size());
  if (rows == 0) throw ShapeError("embedding_rows: empty id list");
  std::vector<double> out(static_cast<size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out[static_cast<size_t>(i) * cols + j] = table->at(ids[i], j);
  TensorPtr o = Tensor::make({rows, cols}, std::move(out), false, "embedding_rows");
  return g.record(o, {table}, [table, o, ids, cols]() {
    table->ensure_grad();
    for (size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < cols; ++j)
        table->grad[static_cast<size_t>(ids[i]) * cols + j] += o->grad[i * cols + j];
  });
}

double finite_diff_check(const std::function<TensorPtr(Graph&, const TensorPtr&)>& f,
                         const TensorPtr& x, double step) {
  if (!(step > 0.0 && step <= 1e-2)) {
    throw Error("finite_diff_check: step must lie in (0, 1e-2]");
  }
  TensorPtr probe = Tensor::make(x->shape(), x->data, true);
  Graph g;
  TensorPtr loss = f(g, probe);
  if (!loss->is_scalar()) {
    throw ShapeError("finite_diff_check: f must return a scalar");
  }
  g.backward(loss);
  std::vector<double> analytic = probe->has_grad()
                                     ? probe->grad
                                     : std::vector<double>(probe->data.size(), 0.0);

  double worst = 0.0;
  for (size_t i = 0; i < probe->data.size(); ++i) {
    auto eval = [&](double v) {
      TensorPtr y = Tensor::make(x->shape(), x->data, false);
      y->data[i] = v;
      Graph gf;
      return f(gf, y)->scalar_value();
    };
    const double hi = eval(x->data[i] + step);
    const double lo = eval(x->data[i] - step);
    const double numeric = (hi - lo) / (2.0 * step);
    const double err = std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(numeric));
    worst = std::max(worst, err);
  }
  return worst;
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
  // fresh pair per call keeps the stream trivially serializable
  const double u1 = static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
  const double u2 = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
}

int Rng::uniform_int(int lo, int hi) {
  const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
  return lo + static_cast<int>(engine_() % span);
}

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_;
  if (is.fail()) throw Error("Rng::set_state: malformed state string");
}

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
  // splitmix64 finalizer over the xor'd pair
  uint64_t z = seed ^ (salt + 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace lf

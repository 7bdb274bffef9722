#include "logofuse/arcface.hpp"

#include <cmath>

namespace lf::loss {

namespace {
constexpr double kCosClamp = 1.0 - 1e-7;
}

void ArcFaceConfig::validate() const {
  if (scale <= 0) throw Error("arcface: scale must be > 0");
  if (margin < 0 || margin >= 1.5707963267948966) {
    throw Error("arcface: margin must lie in [0, pi/2)");
  }
}

ArcFaceParams init_arcface(int num_classes, int dim, const ArcFaceConfig& cfg, Rng& rng) {
  cfg.validate();
  if (num_classes < 1 || dim < 1) throw Error("arcface: non-positive shape");
  std::vector<double> data(static_cast<size_t>(num_classes) * dim);
  for (auto& v : data) v = rng.normal();
  ArcFaceParams p;
  p.centers = Tensor::matrix(num_classes, dim, std::move(data), true);
  p.cfg = cfg;
  renormalize_centers(p);
  return p;
}

void collect_params(const std::string& prefix, const ArcFaceParams& p, enc::NamedParams& out) {
  out.emplace_back(prefix + ".centers", p.centers);
}

void renormalize_centers(ArcFaceParams& p) {
  const int k = p.centers->rows(), c = p.centers->cols();
  for (int i = 0; i < k; ++i) {
    double sq = 0.0;
    for (int j = 0; j < c; ++j) sq += p.centers->at(i, j) * p.centers->at(i, j);
    const double norm = std::sqrt(sq);
    if (norm <= 1e-12) {
      throw DegenerateInputError("arcface: center row " + std::to_string(i) + " collapsed to zero");
    }
    for (int j = 0; j < c; ++j) p.centers->at(i, j) /= norm;
  }
}

namespace {

// margined rescaling of clamped cosines; one tape node with a bespoke backward
TensorPtr cosine_margin_logits(Graph& g, const TensorPtr& cosines,
                               const std::vector<int>& labels, double s, double margin) {
  const int b = cosines->rows(), k = cosines->cols();
  const double cos_m = std::cos(margin), sin_m = std::sin(margin);
  std::vector<double> out(cosines->data.size());
  for (int i = 0; i < b; ++i) {
    for (int j = 0; j < k; ++j) {
      const double c = cosines->at(i, j);
      out[static_cast<size_t>(i) * k + j] =
          (j == labels[i]) ? s * (c * cos_m - std::sqrt(1.0 - c * c) * sin_m) : s * c;
    }
  }
  TensorPtr o = Tensor::make(cosines->shape(), std::move(out), false, "cosine_margin_logits");
  return g.record(o, {cosines}, [cosines, o, labels, s, cos_m, sin_m, b, k]() {
    cosines->ensure_grad();
    for (int i = 0; i < b; ++i) {
      for (int j = 0; j < k; ++j) {
        const size_t idx = static_cast<size_t>(i) * k + j;
        double d = s;
        if (j == labels[i]) {
          const double c = cosines->data[idx];
          const double sin_t = std::sqrt(1.0 - c * c);
          d = s * (cos_m + sin_m * c / sin_t);
        }
        cosines->grad[idx] += o->grad[idx] * d;
      }
    }
  });
}

}  // namespace

TensorPtr cross_entropy_mean(Graph& g, const TensorPtr& logits, const std::vector<int>& labels) {
  const int b = logits->rows(), k = logits->cols();
  if (b == 0 || labels.empty()) throw Error("cross_entropy_mean: empty batch");
  if (static_cast<int>(labels.size()) != b) {
    throw ShapeError("cross_entropy_mean: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(b) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || y >= k) {
      throw Error("cross_entropy_mean: label " + std::to_string(y) + " out of range [0, " +
                  std::to_string(k) + ")");
    }
  }
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    double mx = logits->at(i, 0);
    for (int j = 1; j < k; ++j) mx = std::max(mx, logits->at(i, j));
    double denom = 0.0;
    for (int j = 0; j < k; ++j) denom += std::exp(logits->at(i, j) - mx);
    total += mx + std::log(denom) - logits->at(i, labels[i]);
  }
  TensorPtr o = Tensor::make({1}, {total / b}, false, "cross_entropy_mean");
  return g.record(o, {logits}, [logits, o, labels, b, k]() {
    logits->ensure_grad();
    const double gscale = o->grad[0] / b;
    for (int i = 0; i < b; ++i) {
      double mx = logits->at(i, 0);
      for (int j = 1; j < k; ++j) mx = std::max(mx, logits->at(i, j));
      double denom = 0.0;
      for (int j = 0; j < k; ++j) denom += std::exp(logits->at(i, j) - mx);
      for (int j = 0; j < k; ++j) {
        const double softmax_ij = std::exp(logits->at(i, j) - mx) / denom;
        const double onehot = (j == labels[i]) ? 1.0 : 0.0;
        logits->grad[static_cast<size_t>(i) * k + j] += gscale * (softmax_ij - onehot);
      }
    }
  });
}

TensorPtr arcface_logits(Graph& g, const TensorPtr& features, const ArcFaceParams& params,
                         const std::vector<int>& labels) {
  params.cfg.validate();
  if (features->rank() != 2) throw ShapeError("arcface_logits: features must be rank 2");
  const int b = features->rows(), c = features->cols();
  const int k = params.centers->rows();
  if (params.centers->cols() != c) {
    throw ShapeError("arcface_logits: feature dim " + std::to_string(c) +
                     " vs center dim " + std::to_string(params.centers->cols()));
  }
  if (static_cast<int>(labels.size()) != b) {
    throw Error("arcface_logits: " + std::to_string(labels.size()) + " labels for batch " +
                std::to_string(b));
  }
  for (int i = 0; i < b; ++i) {
    double sq = 0.0;
    for (int j = 0; j < c; ++j) sq += features->at(i, j) * features->at(i, j);
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-4) {
      throw Error("arcface_logits: feature row " + std::to_string(i) + " has norm " +
                  std::to_string(std::sqrt(sq)) + ", expected 1");
    }
    if (labels[i] < 0 || labels[i] >= k) {
      throw Error("arcface_logits: label " + std::to_string(labels[i]) + " out of range [0, " +
                  std::to_string(k) + ")");
    }
  }
  TensorPtr cosines = clamp(g, matmul(g, features, transpose(g, params.centers)),
                            -kCosClamp, kCosClamp);
  return cosine_margin_logits(g, cosines, labels, params.cfg.scale, params.cfg.margin);
}

TensorPtr arcface_loss(Graph& g, const TensorPtr& features, const ArcFaceParams& params,
                       const std::vector<int>& labels) {
  return cross_entropy_mean(g, arcface_logits(g, features, params, labels), labels);
}

}  // namespace lf::loss

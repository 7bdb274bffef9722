#pragma once

// ArcFace objective: additive angular margin over cosine logits against
// learned class centers.
//
//   logit[i][j] = s * cos(theta_j)              for j != y_i
//   logit[i][y] = s * cos(theta_y + margin)
//               = s * (cos(theta_y) cos(margin) - sin(theta_y) sin(margin))
//
// Cosines are clamped to [-1 + 1e-7, 1 - 1e-7] so the trig identity stays
// defined everywhere; no easy-margin branch. The loss is mean cross-entropy
// over the margined logits.

#include "logofuse/encoders.hpp"
#include "logofuse/tensor.hpp"

#include <string>
#include <vector>

namespace lf::loss {

struct ArcFaceConfig {
  double scale = 30.0;
  double margin = 0.3;

  void validate() const;
};

struct ArcFaceParams {
  TensorPtr centers;  // num_classes x C, rows kept unit-norm
  ArcFaceConfig cfg;
};

ArcFaceParams init_arcface(int num_classes, int dim, const ArcFaceConfig& cfg, Rng& rng);
void collect_params(const std::string& prefix, const ArcFaceParams& p, enc::NamedParams& out);

// Rescales every center row to unit norm in place; call after optimizer steps.
void renormalize_centers(ArcFaceParams& p);

// Features must arrive with unit rows (norm within 1e-4 of 1).
TensorPtr arcface_logits(Graph& g, const TensorPtr& features, const ArcFaceParams& params,
                         const std::vector<int>& labels);

TensorPtr arcface_loss(Graph& g, const TensorPtr& features, const ArcFaceParams& params,
                       const std::vector<int>& labels);

// Mean cross-entropy over rows with integer targets; stable log-sum-exp.
TensorPtr cross_entropy_mean(Graph& g, const TensorPtr& logits, const std::vector<int>& labels);

}  // namespace lf::loss

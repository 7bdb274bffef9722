#pragma once

// Representation enhancement module M: three interchangeable fusion methods
// producing the fused feature f = M(v, t).
//
// The cross-attention layer runs, per head i,
//   q = q_v W_q^(i),  k = k_t W_k^(i),  v = v_t W_v^(i)
//   CA_i = softmax(q k^T / sqrt(C/n_h)) v
// then concatenates heads, projects by W^(m), adds the q_v residual and
// applies a scale-only row normalization. The output projection starts at
// exactly zero, so an untrained or text-silenced model reproduces the plain
// visual path and its gradients; mean-centering normalization would break
// that equivalence.

#include "logofuse/encoders.hpp"
#include "logofuse/tensor.hpp"

#include <string>
#include <vector>

namespace lf::fusion {

enum class FusionMethod { kMlp, kSelfAttn, kCrossAttn };

std::string fusion_method_name(FusionMethod m);
FusionMethod fusion_method_from_name(const std::string& name);

struct FusionConfig {
  FusionMethod method = FusionMethod::kCrossAttn;
  int dim = 64;         // C
  int layers = 2;       // m
  int heads = 4;        // n_h
  int mlp_hidden = 128;

  void validate() const;
};

using CrossAttnLayerParams = enc::AttnLayerParams;

struct MlpFusionParams {
  TensorPtr w1;  // 2C x hidden
  TensorPtr b1;  // hidden
  TensorPtr w2;  // hidden x C
  TensorPtr b2;  // C
};

struct FusionParams {
  std::vector<CrossAttnLayerParams> layers;  // cross_attn or self_attn stacks
  MlpFusionParams mlp;                       // mlp method
};

FusionParams init_fusion(const FusionConfig& cfg, Rng& rng);
void collect_params(const std::string& prefix, const FusionConfig& cfg, const FusionParams& p,
                    enc::NamedParams& out);

// Test-mode switches; production paths keep the defaults.
struct CrossAttnOptions {
  bool residual = true;
  bool norm = true;
};

struct MlpOptions {
  bool activation = true;
  bool normalize = true;
};

// Collects per-head attention weight matrices for inspection.
struct AttnProbe {
  std::vector<TensorPtr> weights;
};

TensorPtr cross_attn_layer(Graph& g, const TensorPtr& q_v, const TensorPtr& k_t,
                           const TensorPtr& v_t, const CrossAttnLayerParams& params,
                           const CrossAttnOptions& opts = {}, AttnProbe* probe = nullptr);

TensorPtr fuse_cross_attn(Graph& g, const TensorPtr& v_tokens, const TensorPtr& t_tokens,
                          const FusionConfig& cfg, const FusionParams& params,
                          AttnProbe* probe = nullptr);

TensorPtr fuse_self_attn(Graph& g, const TensorPtr& v_tokens, const TensorPtr& t_tokens,
                         const FusionConfig& cfg, const FusionParams& params,
                         AttnProbe* probe = nullptr);

TensorPtr fuse_mlp(Graph& g, const TensorPtr& v_pooled, const TensorPtr& t_pooled,
                   const FusionParams& params, const MlpOptions& opts = {});

// Dispatches on cfg.method; token matrices in, unit-norm C vector out.
TensorPtr fuse(Graph& g, const TensorPtr& v_tokens, const TensorPtr& t_tokens,
               const FusionConfig& cfg, const FusionParams& params);

}  // namespace lf::fusion

#include "logofuse/fusion.hpp"

#include <cmath>

namespace lf::fusion {

std::string fusion_method_name(FusionMethod m) {
  switch (m) {
    case FusionMethod::kMlp: return "mlp";
    case FusionMethod::kSelfAttn: return "self_attn";
    case FusionMethod::kCrossAttn: return "cross_attn";
  }
  return "cross_attn";
}

FusionMethod fusion_method_from_name(const std::string& name) {
  if (name == "mlp") return FusionMethod::kMlp;
  if (name == "self_attn") return FusionMethod::kSelfAttn;
  if (name == "cross_attn") return FusionMethod::kCrossAttn;
  throw Error("unknown fusion method '" + name + "'");
}

void FusionConfig::validate() const {
  if (dim < 1) throw Error("fusion: dim must be >= 1");
  if (layers < 1) throw Error("fusion: layers must be >= 1");
  if (heads < 1 || dim % heads != 0) {
    throw Error("fusion: dim " + std::to_string(dim) + " not divisible by heads " +
                std::to_string(heads));
  }
  if (mlp_hidden < 1) throw Error("fusion: mlp_hidden must be >= 1");
}

namespace {

TensorPtr uniform_matrix(int rows, int cols, double scale, Rng& rng) {
  std::vector<double> data(static_cast<size_t>(rows) * cols);
  for (auto& v : data) v = rng.uniform(-1.0, 1.0) * scale;
  return Tensor::matrix(rows, cols, std::move(data), true);
}

}  // namespace

FusionParams init_fusion(const FusionConfig& cfg, Rng& rng) {
  cfg.validate();
  FusionParams p;
  const int c = cfg.dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(c));
  const int head_dim = c / cfg.heads;
  for (int l = 0; l < cfg.layers; ++l) {
    CrossAttnLayerParams layer;
    for (int h = 0; h < cfg.heads; ++h) {
      enc::AttnHeadParams hp;
      hp.wq = uniform_matrix(c, head_dim, scale, rng);
      hp.wk = uniform_matrix(c, head_dim, scale, rng);
      hp.wv = uniform_matrix(c, head_dim, scale, rng);
      layer.heads.push_back(std::move(hp));
    }
    // zero output projection: the first forward reproduces the visual path
    layer.wo = Tensor::zeros({c, c}, true);
    p.layers.push_back(std::move(layer));
  }
  p.mlp.w1 = uniform_matrix(2 * c, cfg.mlp_hidden, scale, rng);
  p.mlp.b1 = Tensor::zeros({cfg.mlp_hidden}, true);
  p.mlp.w2 = uniform_matrix(cfg.mlp_hidden, c, scale, rng);
  p.mlp.b2 = Tensor::zeros({c}, true);
  return p;
}

void collect_params(const std::string& prefix, const FusionConfig& cfg, const FusionParams& p,
                    enc::NamedParams& out) {
  if (cfg.method == FusionMethod::kMlp) {
    out.emplace_back(prefix + ".mlp.w1", p.mlp.w1);
    out.emplace_back(prefix + ".mlp.b1", p.mlp.b1);
    out.emplace_back(prefix + ".mlp.w2", p.mlp.w2);
    out.emplace_back(prefix + ".mlp.b2", p.mlp.b2);
    return;
  }
  for (size_t l = 0; l < p.layers.size(); ++l) {
    enc::collect_params(prefix + ".layer" + std::to_string(l), p.layers[l], out);
  }
}

TensorPtr cross_attn_layer(Graph& g, const TensorPtr& q_v, const TensorPtr& k_t,
                           const TensorPtr& v_t, const CrossAttnLayerParams& params,
                           const CrossAttnOptions& opts, AttnProbe* probe) {
  if (q_v->rank() != 2 || k_t->rank() != 2 || v_t->rank() != 2) {
    throw ShapeError("cross_attn_layer: token matrices must be rank 2");
  }
  if (k_t->rows() != v_t->rows()) {
    throw ShapeError("cross_attn_layer: key rows " + std::to_string(k_t->rows()) +
                     " vs value rows " + std::to_string(v_t->rows()));
  }
  const int c = q_v->cols();
  if (k_t->cols() != c || v_t->cols() != c) {
    throw ShapeError("cross_attn_layer: feature dims disagree, queries " +
                     shape_str(q_v->shape()) + " keys " + shape_str(k_t->shape()));
  }
  if (params.heads.empty() || params.heads.front().wq->rows() != c) {
    throw ShapeError("cross_attn_layer: parameter shapes do not match token dim " +
                     std::to_string(c));
  }
  const int head_dim = params.heads.front().wq->cols();
  if (static_cast<int>(params.heads.size()) * head_dim != c) {
    throw ShapeError("cross_attn_layer: head count does not divide dim");
  }
  const double logit_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  std::vector<TensorPtr> head_outs;
  head_outs.reserve(params.heads.size());
  for (const auto& h : params.heads) {
    TensorPtr q = matmul(g, q_v, h.wq);
    TensorPtr k = matmul(g, k_t, h.wk);
    TensorPtr v = matmul(g, v_t, h.wv);
    TensorPtr attn = softmax(g, scale(g, matmul(g, q, transpose(g, k)), logit_scale));
    if (probe) probe->weights.push_back(attn);
    head_outs.push_back(matmul(g, attn, v));
  }
  TensorPtr merged = head_outs.size() == 1 ? head_outs[0] : concat_cols(g, head_outs);
  TensorPtr projected = matmul(g, merged, params.wo);
  TensorPtr out = opts.residual ? add(g, q_v, projected) : projected;
  return opts.norm ? rms_norm_rows(g, out) : out;
}

TensorPtr fuse_cross_attn(Graph& g, const TensorPtr& v_tokens, const TensorPtr& t_tokens,
                          const FusionConfig& cfg, const FusionParams& params,
                          AttnProbe* probe) {
  telemetry::fusion_ops.fetch_add(1, std::memory_order_relaxed);
  if (static_cast<int>(params.layers.size()) != cfg.layers) {
    throw ShapeError("fuse_cross_attn: params hold " + std::to_string(params.layers.size()) +
                     " layers, config wants " + std::to_string(cfg.layers));
  }
  TensorPtr q = v_tokens;
  for (const auto& layer : params.layers) {
    q = cross_attn_layer(g, q, t_tokens, t_tokens, layer, {}, probe);
  }
  return enc::pool(g, q);
}

TensorPtr fuse_self_attn(Graph& g, const TensorPtr& v_tokens, const TensorPtr& t_tokens,
                         const FusionConfig& cfg, const FusionParams& params,
                         AttnProbe* probe) {
  telemetry::fusion_ops.fetch_add(1, std::memory_order_relaxed);
  if (v_tokens->cols() != t_tokens->cols()) {
    throw ShapeError("fuse_self_attn: dims disagree, " + shape_str(v_tokens->shape()) + " vs " +
                     shape_str(t_tokens->shape()));
  }
  if (static_cast<int>(params.layers.size()) != cfg.layers) {
    throw ShapeError("fuse_self_attn: params hold " + std::to_string(params.layers.size()) +
                     " layers, config wants " + std::to_string(cfg.layers));
  }
  const int n_v = v_tokens->rows();
  TensorPtr x = concat_rows(g, v_tokens, t_tokens);
  for (const auto& layer : params.layers) {
    // pre-norm residual block, attention over the joint sequence
    TensorPtr normed = rms_norm_rows(g, x);
    TensorPtr y = cross_attn_layer(g, normed, normed, normed, layer,
                                   {.residual = false, .norm = false}, probe);
    x = add(g, x, y);
  }
  return enc::pool(g, slice_rows(g, x, 0, n_v));
}

TensorPtr fuse_mlp(Graph& g, const TensorPtr& v_pooled, const TensorPtr& t_pooled,
                   const FusionParams& params, const MlpOptions& opts) {
  telemetry::fusion_ops.fetch_add(1, std::memory_order_relaxed);
  if (v_pooled->rank() != 1 || t_pooled->rank() != 1 ||
      v_pooled->cols() != t_pooled->cols()) {
    throw ShapeError("fuse_mlp: expected two rank-1 vectors of equal dim, got " +
                     shape_str(v_pooled->shape()) + " and " + shape_str(t_pooled->shape()));
  }
  TensorPtr joint = reshape(g, concat_vec(g, v_pooled, t_pooled), {1, 2 * v_pooled->cols()});
  TensorPtr hidden = add_rowvec(g, matmul(g, joint, params.mlp.w1), params.mlp.b1);
  if (opts.activation) hidden = tanh(g, hidden);
  TensorPtr out = add_rowvec(g, matmul(g, hidden, params.mlp.w2), params.mlp.b2);
  TensorPtr flat = reshape(g, out, {out->cols()});
  return opts.normalize ? l2_normalize(g, flat) : flat;
}

TensorPtr fuse(Graph& g, const TensorPtr& v_tokens, const TensorPtr& t_tokens,
               const FusionConfig& cfg, const FusionParams& params) {
  switch (cfg.method) {
    case FusionMethod::kCrossAttn:
      return fuse_cross_attn(g, v_tokens, t_tokens, cfg, params);
    case FusionMethod::kSelfAttn:
      return fuse_self_attn(g, v_tokens, t_tokens, cfg, params);
    case FusionMethod::kMlp:
      return fuse_mlp(g, enc::pool(g, v_tokens), enc::pool(g, t_tokens), params);
  }
  throw Error("fuse: unreachable method");
}

}  // namespace lf::fusion

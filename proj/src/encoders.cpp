#include "logofuse/encoders.hpp"

#include "json.hpp"

#include <cctype>
#include <cmath>

namespace lf::telemetry {

std::atomic<uint64_t> text_ops{0};
std::atomic<uint64_t> fusion_ops{0};

void reset() {
  text_ops = 0;
  fusion_ops = 0;
}

}  // namespace lf::telemetry

namespace lf::enc {

using nlohmann::json;

void EncoderConfig::validate(const std::string& who) const {
  if (embed_dim < 1) throw Error(who + ": embed_dim must be >= 1");
  if (embed_dim % heads != 0) {
    throw Error(who + ": embed_dim " + std::to_string(embed_dim) +
                " not divisible by heads " + std::to_string(heads));
  }
  if (num_tokens < 1) throw Error(who + ": num_tokens must be >= 1");
  if (mode == EncoderMode::kTrainable) {
    if (depth < 1) throw Error(who + ": depth must be >= 1 in trainable mode");
    if (patch_size < 1) throw Error(who + ": patch_size must be >= 1");
    if (vocab_size < Vocab::kFirstWordId + 1) {
      throw Error(who + ": vocab_size must exceed the reserved ids");
    }
  } else {
    if (input_dim < 1) throw Error(who + ": input_dim must be >= 1 in passthrough mode");
  }
}

Vocab Vocab::build(const std::vector<std::string>& texts, int capacity) {
  Vocab v;
  const int max_words = capacity - kFirstWordId;
  for (const auto& text : texts) {
    for (const auto& word : split_words(text)) {
      if (static_cast<int>(v.words_.size()) >= max_words) return v;
      if (v.by_word_.count(word)) continue;
      v.by_word_[word] = kFirstWordId + static_cast<int>(v.words_.size());
      v.words_.push_back(word);
    }
  }
  return v;
}

int Vocab::id_of(const std::string& word) const {
  auto it = by_word_.find(word);
  return it == by_word_.end() ? kUnknownTokenId : it->second;
}

std::string Vocab::to_json() const {
  json j = words_;
  return j.dump();
}

Vocab Vocab::from_json(const std::string& s) {
  Vocab v;
  for (const auto& w : json::parse(s).get<std::vector<std::string>>()) {
    v.by_word_[w] = kFirstWordId + static_cast<int>(v.words_.size());
    v.words_.push_back(w);
  }
  return v;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const unsigned char u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) {
      cur += static_cast<char>(std::tolower(u));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

TokenSequence tokenize(const std::string& text, const Vocab& vocab, int num_tokens) {
  TokenSequence seq;
  seq.ids.assign(num_tokens, kPadTokenId);
  seq.mask.assign(num_tokens, 0);
  const auto words = split_words(text);
  for (int i = 0; i < num_tokens && i < static_cast<int>(words.size()); ++i) {
    seq.ids[i] = vocab.id_of(words[i]);
    seq.mask[i] = 1;
  }
  return seq;
}

namespace {

TensorPtr uniform_matrix(int rows, int cols, double scale, Rng& rng) {
  std::vector<double> data(static_cast<size_t>(rows) * cols);
  for (auto& v : data) v = rng.uniform(-1.0, 1.0) * scale;
  return Tensor::matrix(rows, cols, std::move(data), true);
}

}  // namespace

AttnLayerParams init_attn_layer(int dim, int heads, Rng& rng) {
  AttnLayerParams p;
  const int head_dim = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (int h = 0; h < heads; ++h) {
    AttnHeadParams hp;
    hp.wq = uniform_matrix(dim, head_dim, scale, rng);
    hp.wk = uniform_matrix(dim, head_dim, scale, rng);
    hp.wv = uniform_matrix(dim, head_dim, scale, rng);
    p.heads.push_back(std::move(hp));
  }
  p.wo = uniform_matrix(dim, dim, scale, rng);
  return p;
}

namespace {

EncoderBlockParams init_block(int dim, int heads, Rng& rng) {
  EncoderBlockParams b;
  b.attn = init_attn_layer(dim, heads, rng);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  const int hidden = 2 * dim;
  b.ffn_w1 = uniform_matrix(dim, hidden, scale, rng);
  b.ffn_b1 = Tensor::zeros({hidden}, true);
  b.ffn_w2 = uniform_matrix(hidden, dim, scale, rng);
  b.ffn_b2 = Tensor::zeros({dim}, true);
  return b;
}

}  // namespace

VisualEncoderParams init_visual_encoder(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate("visual encoder");
  VisualEncoderParams p;
  const int c = cfg.embed_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(c));
  if (cfg.mode == EncoderMode::kPassthrough) {
    p.proj = uniform_matrix(cfg.input_dim, c, scale, rng);
    p.proj_b = Tensor::zeros({c}, true);
  } else {
    p.proj = uniform_matrix(cfg.patch_size * cfg.patch_size, c, scale, rng);
    p.proj_b = Tensor::zeros({c}, true);
    p.pos = uniform_matrix(cfg.num_tokens, c, scale, rng);
    for (int d = 0; d < cfg.depth; ++d) p.blocks.push_back(init_block(c, cfg.heads, rng));
  }
  return p;
}

TextEncoderParams init_text_encoder(const EncoderConfig& cfg, Rng& rng) {
  cfg.validate("text encoder");
  TextEncoderParams p;
  const int c = cfg.embed_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(c));
  p.embed = uniform_matrix(cfg.vocab_size, c, scale, rng);
  p.pos = uniform_matrix(cfg.num_tokens, c, scale, rng);
  for (int d = 0; d < cfg.depth; ++d) p.blocks.push_back(init_block(c, cfg.heads, rng));
  return p;
}

void collect_params(const std::string& prefix, const AttnLayerParams& p, NamedParams& out) {
  for (size_t h = 0; h < p.heads.size(); ++h) {
    const std::string hp = prefix + ".h" + std::to_string(h);
    out.emplace_back(hp + ".wq", p.heads[h].wq);
    out.emplace_back(hp + ".wk", p.heads[h].wk);
    out.emplace_back(hp + ".wv", p.heads[h].wv);
  }
  out.emplace_back(prefix + ".wo", p.wo);
}

namespace {

void collect_block(const std::string& prefix, const EncoderBlockParams& b, NamedParams& out) {
  collect_params(prefix + ".attn", b.attn, out);
  out.emplace_back(prefix + ".ffn_w1", b.ffn_w1);
  out.emplace_back(prefix + ".ffn_b1", b.ffn_b1);
  out.emplace_back(prefix + ".ffn_w2", b.ffn_w2);
  out.emplace_back(prefix + ".ffn_b2", b.ffn_b2);
}

}  // namespace

void collect_params(const std::string& prefix, const VisualEncoderParams& p, NamedParams& out) {
  out.emplace_back(prefix + ".proj", p.proj);
  out.emplace_back(prefix + ".proj_b", p.proj_b);
  if (p.pos) out.emplace_back(prefix + ".pos", p.pos);
  for (size_t i = 0; i < p.blocks.size(); ++i) {
    collect_block(prefix + ".block" + std::to_string(i), p.blocks[i], out);
  }
}

void collect_params(const std::string& prefix, const TextEncoderParams& p, NamedParams& out) {
  out.emplace_back(prefix + ".embed", p.embed);
  out.emplace_back(prefix + ".pos", p.pos);
  for (size_t i = 0; i < p.blocks.size(); ++i) {
    collect_block(prefix + ".block" + std::to_string(i), p.blocks[i], out);
  }
}

TensorPtr multi_head_self_attention(Graph& g, const TensorPtr& x, const AttnLayerParams& p,
                                    const std::vector<uint8_t>* key_mask) {
  const int head_dim = p.heads.front().wq->cols();
  const double logit_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  TensorPtr normed = rms_norm_rows(g, x);
  std::vector<TensorPtr> head_outs;
  head_outs.reserve(p.heads.size());
  for (const auto& h : p.heads) {
    TensorPtr q = matmul(g, normed, h.wq);
    TensorPtr k = matmul(g, normed, h.wk);
    TensorPtr v = matmul(g, normed, h.wv);
    TensorPtr logits = scale(g, matmul(g, q, transpose(g, k)), logit_scale);
    TensorPtr attn = key_mask ? softmax_masked(g, logits, *key_mask) : softmax(g, logits);
    head_outs.push_back(matmul(g, attn, v));
  }
  TensorPtr merged = head_outs.size() == 1 ? head_outs[0] : concat_cols(g, head_outs);
  return add(g, x, matmul(g, merged, p.wo));
}

namespace {

TensorPtr encoder_block(Graph& g, const TensorPtr& x, const EncoderBlockParams& b,
                        const std::vector<uint8_t>* key_mask) {
  TensorPtr after_attn = multi_head_self_attention(g, x, b.attn, key_mask);
  TensorPtr normed = rms_norm_rows(g, after_attn);
  TensorPtr hidden = tanh(g, add_rowvec(g, matmul(g, normed, b.ffn_w1), b.ffn_b1));
  TensorPtr ffn_out = add_rowvec(g, matmul(g, hidden, b.ffn_w2), b.ffn_b2);
  return add(g, after_attn, ffn_out);
}

}  // namespace

TensorPtr encode_image(Graph& g, const data::ImageRecord& rec, const EncoderConfig& cfg,
                       const VisualEncoderParams& params) {
  if (cfg.mode == EncoderMode::kPassthrough) {
    if (!rec.has_features()) {
      throw Error("encode_image: record '" + rec.id + "' has no feature vector for passthrough");
    }
    if (static_cast<int>(rec.features.size()) != cfg.input_dim) {
      throw ShapeError("encode_image: feature length " + std::to_string(rec.features.size()) +
                       " does not match input_dim " + std::to_string(cfg.input_dim));
    }
    TensorPtr feat = Tensor::matrix(1, cfg.input_dim, rec.features);
    return add_rowvec(g, matmul(g, feat, params.proj), params.proj_b);
  }

  if (!rec.pixels) {
    throw Error("encode_image: record '" + rec.id + "' has no pixel grid for trainable mode");
  }
  const auto& grid = *rec.pixels;
  const int ps = cfg.patch_size;
  if (grid.h % ps != 0 || grid.w % ps != 0) {
    throw ShapeError("encode_image: " + std::to_string(grid.h) + "x" + std::to_string(grid.w) +
                     " grid not divisible by patch_size " + std::to_string(ps));
  }
  const int rows = grid.h / ps, cols = grid.w / ps;
  const int n_patches = rows * cols;
  if (n_patches != cfg.num_tokens) {
    throw ShapeError("encode_image: " + std::to_string(n_patches) +
                     " patches but num_tokens is " + std::to_string(cfg.num_tokens));
  }
  std::vector<double> patches(static_cast<size_t>(n_patches) * ps * ps);
  for (int pr = 0; pr < rows; ++pr) {
    for (int pc = 0; pc < cols; ++pc) {
      const int patch = pr * cols + pc;
      for (int i = 0; i < ps; ++i)
        for (int j = 0; j < ps; ++j)
          patches[static_cast<size_t>(patch) * ps * ps + i * ps + j] =
              grid.data[static_cast<size_t>(pr * ps + i) * grid.w + pc * ps + j];
    }
  }
  TensorPtr x = add(g,
                    add_rowvec(g, matmul(g, Tensor::matrix(n_patches, ps * ps, std::move(patches)),
                                         params.proj),
                               params.proj_b),
                    params.pos);
  for (const auto& block : params.blocks) x = encoder_block(g, x, block, nullptr);
  return x;
}

TensorPtr encode_text(Graph& g, const TokenSequence& seq, const EncoderConfig& cfg,
                      const TextEncoderParams& params) {
  telemetry::text_ops.fetch_add(1, std::memory_order_relaxed);
  if (static_cast<int>(seq.ids.size()) != cfg.num_tokens ||
      seq.mask.size() != seq.ids.size()) {
    throw ShapeError("encode_text: sequence length " + std::to_string(seq.ids.size()) +
                     " does not match num_tokens " + std::to_string(cfg.num_tokens));
  }
  TensorPtr x = add(g, embedding_rows(g, params.embed, seq.ids), params.pos);
  // position 0 stays attendable so an all-pad caption cannot empty the softmax
  std::vector<uint8_t> key_mask = seq.mask;
  key_mask[0] = 1;
  for (const auto& block : params.blocks) x = encoder_block(g, x, block, &key_mask);
  return x;
}

TensorPtr pool(Graph& g, const TensorPtr& token_matrix) {
  return l2_normalize(g, mean_rows(g, token_matrix));
}

}  // namespace lf::enc

#pragma once

// Visual encoder E_v and text encoder E_t at desk scale. Two modes: a tiny
// pre-norm transformer over pixel patches / token ids, or a passthrough
// projection over precomputed feature vectors.

#include "logofuse/data_io.hpp"
#include "logofuse/tensor.hpp"

#include <atomic>
#include <map>
#include <string>
#include <vector>

namespace lf::telemetry {

// Counts forward passes through the text branch; the inference path must keep
// this at zero.
extern std::atomic<uint64_t> text_ops;
extern std::atomic<uint64_t> fusion_ops;
void reset();

}  // namespace lf::telemetry

namespace lf::enc {

enum class EncoderMode { kTrainable, kPassthrough };

struct EncoderConfig {
  EncoderMode mode = EncoderMode::kPassthrough;
  int embed_dim = 64;    // C
  int num_tokens = 1;    // N_v (patches) or N_t (text positions)
  int depth = 1;
  int heads = 2;
  int vocab_size = 256;  // text only
  int patch_size = 4;    // visual only
  int input_dim = 32;    // passthrough feature length D_v

  void validate(const std::string& who) const;
};

struct TokenSequence {
  std::vector<int> ids;
  std::vector<uint8_t> mask;  // 1 = real token, 0 = padding
};

constexpr int kUnknownTokenId = 0;
constexpr int kPadTokenId = 1;

class Vocab {
 public:
  static constexpr int kFirstWordId = 2;

  // Assigns ids in order of first appearance, capped at capacity words.
  static Vocab build(const std::vector<std::string>& texts, int capacity);

  int id_of(const std::string& word) const;  // kUnknownTokenId when absent
  int size() const { return kFirstWordId + static_cast<int>(words_.size()); }
  const std::vector<std::string>& words() const { return words_; }

  std::string to_json() const;
  static Vocab from_json(const std::string& s);

 private:
  std::vector<std::string> words_;
  std::map<std::string, int> by_word_;
};

std::vector<std::string> split_words(const std::string& text);
TokenSequence tokenize(const std::string& text, const Vocab& vocab, int num_tokens);

// ---- parameters -------------------------------------------------------------

struct AttnHeadParams {
  TensorPtr wq, wk, wv;  // C x C/heads each
};

struct AttnLayerParams {
  std::vector<AttnHeadParams> heads;
  TensorPtr wo;  // C x C
};

struct EncoderBlockParams {
  AttnLayerParams attn;
  TensorPtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct VisualEncoderParams {
  TensorPtr proj;    // input_dim x C (passthrough) or patch_size^2 x C
  TensorPtr proj_b;  // C
  TensorPtr pos;     // num_tokens x C, trainable mode only
  std::vector<EncoderBlockParams> blocks;
};

struct TextEncoderParams {
  TensorPtr embed;  // vocab_size x C
  TensorPtr pos;    // num_tokens x C
  std::vector<EncoderBlockParams> blocks;
};

AttnLayerParams init_attn_layer(int dim, int heads, Rng& rng);
VisualEncoderParams init_visual_encoder(const EncoderConfig& cfg, Rng& rng);
TextEncoderParams init_text_encoder(const EncoderConfig& cfg, Rng& rng);

using NamedParams = std::vector<std::pair<std::string, TensorPtr>>;
void collect_params(const std::string& prefix, const AttnLayerParams& p, NamedParams& out);
void collect_params(const std::string& prefix, const VisualEncoderParams& p, NamedParams& out);
void collect_params(const std::string& prefix, const TextEncoderParams& p, NamedParams& out);

// ---- forward ----------------------------------------------------------------

// Pre-norm multi-head self-attention: x + MHSA(norm(x)). `key_mask`, when
// given, restricts which positions can be attended to.
TensorPtr multi_head_self_attention(Graph& g, const TensorPtr& x, const AttnLayerParams& p,
                                    const std::vector<uint8_t>* key_mask = nullptr);

TensorPtr encode_image(Graph& g, const data::ImageRecord& rec, const EncoderConfig& cfg,
                       const VisualEncoderParams& params);
TensorPtr encode_text(Graph& g, const TokenSequence& seq, const EncoderConfig& cfg,
                      const TextEncoderParams& params);

// mean over tokens then unit-normalize
TensorPtr pool(Graph& g, const TensorPtr& token_matrix);

}  // namespace lf::enc

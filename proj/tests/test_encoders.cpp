#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "logofuse/encoders.hpp"

#include <cmath>

using namespace lf;
using namespace lf::enc;

namespace {

data::ImageRecord feature_record(std::string id, std::vector<double> features) {
  data::ImageRecord rec;
  rec.id = std::move(id);
  rec.label = 0;
  rec.features = std::move(features);
  return rec;
}

data::ImageRecord pixel_record(std::string id, int h, int w, double fill = 0.25) {
  data::ImageRecord rec;
  rec.id = std::move(id);
  rec.label = 0;
  data::PixelGrid grid;
  grid.h = h;
  grid.w = w;
  grid.data.assign(static_cast<size_t>(h) * w, fill);
  for (size_t i = 0; i < grid.data.size(); ++i) grid.data[i] += 0.001 * (i % 7);
  rec.pixels = std::move(grid);
  return rec;
}

}  // namespace

TEST_CASE("tokenize lowers, splits and pads") {
  Vocab v = Vocab::build({"nike shoe red"}, 64);
  TokenSequence seq = tokenize("Nike shoe!", v, 5);
  CHECK(seq.ids[0] == v.id_of("nike"));
  CHECK(seq.ids[1] == v.id_of("shoe"));
  CHECK(seq.ids[2] == kPadTokenId);
  CHECK(seq.mask == std::vector<uint8_t>{1, 1, 0, 0, 0});

  TokenSequence empty = tokenize("", v, 3);
  CHECK(empty.ids == std::vector<int>{kPadTokenId, kPadTokenId, kPadTokenId});
  CHECK(empty.mask == std::vector<uint8_t>{0, 0, 0});

  TokenSequence oov = tokenize("zzzunknown", v, 2);
  CHECK(oov.ids[0] == kUnknownTokenId);
}

TEST_CASE("vocab round-trips through json and caps capacity") {
  Vocab v = Vocab::build({"alpha beta", "gamma alpha"}, 4);  // room for 2 words
  CHECK(v.id_of("alpha") == 2);
  CHECK(v.id_of("beta") == 3);
  CHECK(v.id_of("gamma") == kUnknownTokenId);  // over capacity

  Vocab back = Vocab::from_json(v.to_json());
  CHECK(back.id_of("beta") == v.id_of("beta"));
  CHECK(back.size() == v.size());
}

TEST_CASE("passthrough encode_image projects the feature vector") {
  EncoderConfig cfg;
  cfg.mode = EncoderMode::kPassthrough;
  cfg.embed_dim = 3;
  cfg.input_dim = 3;
  cfg.heads = 1;

  VisualEncoderParams params;
  params.proj = Tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1}, true);
  params.proj_b = Tensor::zeros({3}, true);

  Graph g;
  auto tm = encode_image(g, feature_record("r", {1.0, 0.0, 0.0}), cfg, params);
  CHECK(tm->shape() == Shape{1, 3});
  CHECK(tm->data == std::vector<double>{1, 0, 0});
}

TEST_CASE("trainable encode_image patch count and determinism") {
  EncoderConfig cfg;
  cfg.mode = EncoderMode::kTrainable;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.depth = 1;
  cfg.patch_size = 4;
  cfg.num_tokens = 4;  // 8x8 pixels, patch 4 -> 4 tokens

  Rng rng(21);
  auto params = init_visual_encoder(cfg, rng);

  Graph g;
  auto rec = pixel_record("p", 8, 8);
  auto a = encode_image(g, rec, cfg, params);
  CHECK(a->shape() == Shape{4, 8});

  auto b = encode_image(g, rec, cfg, params);
  CHECK(a->data == b->data);

  auto odd = pixel_record("odd", 6, 8);
  CHECK_THROWS_AS(encode_image(g, odd, cfg, params), ShapeError);
}

TEST_CASE("encode_text handles all-pad input and stays deterministic") {
  EncoderConfig cfg;
  cfg.mode = EncoderMode::kTrainable;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.depth = 2;
  cfg.num_tokens = 4;
  cfg.vocab_size = 16;

  Rng rng(3);
  auto params = init_text_encoder(cfg, rng);
  Vocab v = Vocab::build({"nike shoe cap"}, 16);

  Graph g;
  auto all_pad = encode_text(g, tokenize("", v, 4), cfg, params);
  CHECK(all_pad->shape() == Shape{4, 8});
  for (double x : all_pad->data) CHECK(std::isfinite(x));

  auto t1 = encode_text(g, tokenize("nike shoe", v, 4), cfg, params);
  auto t2 = encode_text(g, tokenize("nike shoe", v, 4), cfg, params);
  CHECK(t1->data == t2->data);

  // token order matters
  auto swapped = encode_text(g, tokenize("shoe nike", v, 4), cfg, params);
  CHECK(t1->data != swapped->data);

  TokenSequence bad = tokenize("nike", v, 4);
  bad.ids[0] = 999;
  CHECK_THROWS_AS(encode_text(g, bad, cfg, params), ShapeError);
}

TEST_CASE("padding mask keeps pad embeddings out of real positions") {
  EncoderConfig cfg;
  cfg.mode = EncoderMode::kTrainable;
  cfg.embed_dim = 8;
  cfg.heads = 2;
  cfg.depth = 2;
  cfg.num_tokens = 6;
  cfg.vocab_size = 32;

  Rng rng(17);
  auto params = init_text_encoder(cfg, rng);
  Vocab v = Vocab::build({"nike shoe"}, 32);
  TokenSequence seq = tokenize("nike shoe", v, 6);

  Graph g;
  auto before = encode_text(g, seq, cfg, params);

  // rewriting the pad embedding row must not disturb non-pad outputs
  for (int j = 0; j < cfg.embed_dim; ++j) params.embed->at(kPadTokenId, j) += 3.7;
  auto after = encode_text(g, seq, cfg, params);

  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < cfg.embed_dim; ++j) {
      CHECK(before->at(i, j) == after->at(i, j));
    }
  }
}

TEST_CASE("pool examples") {
  Graph g;
  auto single = pool(g, Tensor::matrix(1, 2, {3, 4}));
  CHECK(single->data[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(single->data[1] == doctest::Approx(0.8).epsilon(1e-12));

  auto repeated = pool(g, Tensor::matrix(2, 2, {3, 4, 3, 4}));
  CHECK(repeated->data[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(repeated->data[1] == doctest::Approx(0.8).epsilon(1e-12));

  CHECK_THROWS_AS(pool(g, Tensor::matrix(2, 2, {1, 1, -1, -1})), DegenerateInputError);

  double norm = 0.0;
  for (double x : single->data) norm += x * x;
  CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gradients flow through encode and pool") {
  EncoderConfig cfg;
  cfg.mode = EncoderMode::kPassthrough;
  cfg.embed_dim = 4;
  cfg.input_dim = 3;
  cfg.heads = 1;

  Rng rng(5);
  auto params = init_visual_encoder(cfg, rng);
  auto rec = feature_record("r", {0.4, -0.2, 0.9});

  auto f = [&](Graph& g, const TensorPtr& proj) {
    VisualEncoderParams probe = params;
    probe.proj = proj;
    auto pooled = pool(g, encode_image(g, rec, cfg, probe));
    auto target = Tensor::vec({0.5, -1.0, 0.25, 0.7});
    return sum(g, mul(g, pooled, target));
  };
  CHECK(finite_diff_check(f, params.proj, 1e-5) < 1e-4);
}

TEST_CASE("gradients flow through the trainable text encoder") {
  EncoderConfig cfg;
  cfg.mode = EncoderMode::kTrainable;
  cfg.embed_dim = 4;
  cfg.heads = 2;
  cfg.depth = 1;
  cfg.num_tokens = 3;
  cfg.vocab_size = 8;

  Rng rng(9);
  auto params = init_text_encoder(cfg, rng);
  Vocab v = Vocab::build({"nike shoe"}, 8);
  TokenSequence seq = tokenize("nike shoe", v, 3);

  auto f = [&](Graph& g, const TensorPtr& embed) {
    TextEncoderParams probe = params;
    probe.embed = embed;
    auto pooled = pool(g, encode_text(g, seq, cfg, probe));
    auto target = Tensor::vec({1.0, 0.5, -0.5, 0.2});
    return sum(g, mul(g, pooled, target));
  };
  CHECK(finite_diff_check(f, params.embed, 1e-5) < 1e-4);
}

TEST_CASE("telemetry counts text encoder invocations") {
  EncoderConfig cfg;
  cfg.mode = EncoderMode::kTrainable;
  cfg.embed_dim = 4;
  cfg.heads = 1;
  cfg.depth = 1;
  cfg.num_tokens = 2;
  cfg.vocab_size = 8;

  Rng rng(1);
  auto params = init_text_encoder(cfg, rng);
  Vocab v = Vocab::build({"a"}, 8);

  telemetry::reset();
  CHECK(telemetry::text_ops.load() == 0);
  Graph g;
  encode_text(g, tokenize("a", v, 2), cfg, params);
  CHECK(telemetry::text_ops.load() == 1);
  telemetry::reset();
}

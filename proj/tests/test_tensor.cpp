#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "logofuse/tensor.hpp"

#include <cmath>
#include <vector>

using namespace lf;

namespace {

// independent triple-loop reference, same summation order as the library
std::vector<double> matmul_reference(const std::vector<double>& a, int m, int k,
                                     const std::vector<double>& b, int n) {
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double acc = 0.0;
      for (int t = 0; t < k; ++t) acc += a[i * k + t] * b[t * n + j];
      out[i * n + j] = acc;
    }
  return out;
}

TensorPtr random_tensor(Rng& rng, Shape shape, bool rg = false) {
  int64_t n = 1;
  for (int d : shape) n *= d;
  std::vector<double> data(n);
  for (auto& v : data) v = rng.uniform(-1.5, 1.5);
  return Tensor::make(std::move(shape), std::move(data), rg);
}

}  // namespace

TEST_CASE("tensor constructor enforces invariants") {
  CHECK_THROWS_AS(Tensor::make({2, 2}, {1.0, 2.0, 3.0}), ShapeError);
  CHECK_THROWS_AS(Tensor::make({0}, {}), ShapeError);
  CHECK_THROWS_AS(Tensor::make({2}, {1.0, std::nan("")}), NumericError);
  CHECK_THROWS_AS(Tensor::make({1}, {std::numeric_limits<double>::infinity()}), NumericError);
  auto t = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(t->rows() == 2);
  CHECK(t->cols() == 3);
  CHECK(t->at(1, 2) == 6.0);
}

TEST_CASE("matmul identity and zero cases") {
  Graph g;
  auto eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
  auto a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  auto out = matmul(g, eye, a);
  CHECK(out->data == std::vector<double>{1, 2, 3, 4});

  auto z = Tensor::matrix(2, 1, {0, 0});
  auto out2 = matmul(g, a, z);
  CHECK(out2->data == std::vector<double>{0, 0});
}

TEST_CASE("matmul hand multiplication") {
  Graph g;
  auto a = Tensor::matrix(2, 2, {1, 2, 3, 4});
  auto b = Tensor::matrix(2, 2, {5, 6, 7, 8});
  auto out = matmul(g, a, b);
  CHECK(out->data == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Graph g;
  auto a = Tensor::matrix(2, 3, std::vector<double>(6, 1.0));
  auto b = Tensor::matrix(2, 2, std::vector<double>(4, 1.0));
  CHECK_THROWS_WITH_AS(matmul(g, a, b),
                       doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("matmul agrees bit-exactly with triple-loop reference") {
  Rng rng(42);
  for (int trial = 0; trial < 25; ++trial) {
    const int m = rng.uniform_int(1, 16);
    const int k = rng.uniform_int(1, 16);
    const int n = rng.uniform_int(1, 16);
    Graph g;
    auto a = random_tensor(rng, {m, k});
    auto b = random_tensor(rng, {k, n});
    auto out = matmul(g, a, b);
    CHECK(out->data == matmul_reference(a->data, m, k, b->data, n));
  }
}

TEST_CASE("softmax uniform, hand value, row sums") {
  Graph g;
  auto u = softmax(g, Tensor::vec({0, 0, 0}));
  for (double v : u->data) CHECK(v == doctest::Approx(1.0 / 3).epsilon(1e-12));

  auto s = softmax(g, Tensor::vec({2, 0}));
  CHECK(s->data[0] == doctest::Approx(0.880797).epsilon(1e-6));
  CHECK(s->data[1] == doctest::Approx(0.119203).epsilon(1e-6));

  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    Graph gg;
    auto x = random_tensor(rng, {rng.uniform_int(1, 6), rng.uniform_int(1, 8)});
    auto sm = softmax(gg, x);
    for (int i = 0; i < sm->rows(); ++i) {
      double row = 0.0;
      for (int j = 0; j < sm->cols(); ++j) {
        CHECK(sm->at(i, j) >= 0.0);
        row += sm->at(i, j);
      }
      CHECK(std::abs(row - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("softmax shift invariance") {
  Rng rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    Graph g;
    auto x = random_tensor(rng, {rng.uniform_int(2, 8)});
    const double c = rng.uniform(-5, 5);
    std::vector<double> shifted = x->data;
    for (auto& v : shifted) v += c;
    auto a = softmax(g, x);
    auto b = softmax(g, Tensor::vec(shifted));
    for (size_t i = 0; i < a->data.size(); ++i) {
      CHECK(a->data[i] == doctest::Approx(b->data[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("masked softmax ignores masked columns") {
  Graph g;
  auto x = Tensor::matrix(1, 3, {5.0, 100.0, 5.0});
  auto s = softmax_masked(g, x, {1, 0, 1});
  CHECK(s->at(0, 1) == 0.0);
  CHECK(s->at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(s->at(0, 2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(softmax_masked(g, x, {0, 0, 0}), ShapeError);
}

TEST_CASE("l2_normalize hand value, idempotence, degenerate input") {
  Graph g;
  auto n = l2_normalize(g, Tensor::vec({3, 4}));
  CHECK(n->data[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(n->data[1] == doctest::Approx(0.8).epsilon(1e-12));

  auto again = l2_normalize(g, n);
  for (size_t i = 0; i < n->data.size(); ++i) {
    CHECK(again->data[i] == doctest::Approx(n->data[i]).epsilon(1e-12));
  }

  CHECK_THROWS_AS(l2_normalize(g, Tensor::vec({0, 0})), DegenerateInputError);
}

TEST_CASE("backward on linear and quadratic losses") {
  {
    Graph g;
    auto x = Tensor::vec({1, 2, 3}, true);
    auto loss = sum(g, x);
    g.backward(loss);
    CHECK(x->grad == std::vector<double>{1, 1, 1});
  }
  {
    Graph g;
    auto x = Tensor::vec({1, 2}, true);
    auto loss = sum(g, mul(g, x, x));
    g.backward(loss);
    CHECK(x->grad == std::vector<double>{2, 4});
  }
}

TEST_CASE("backward guards: non-scalar, detached, repeated") {
  Graph g;
  auto x = Tensor::vec({1, 2}, true);
  auto y = mul(g, x, x);
  CHECK_THROWS_AS(g.backward(y), ShapeError);

  auto detached = Tensor::scalar(1.0);
  CHECK_THROWS_AS(g.backward(detached), Error);

  auto loss = sum(g, y);
  g.backward(loss);
  CHECK_THROWS_AS(g.backward(loss), Error);
  g.reset();
}

TEST_CASE("finite_diff_check validates trivial and composite gradients") {
  auto f_sum = [](Graph& g, const TensorPtr& x) { return sum(g, x); };
  Rng rng(3);
  auto x = random_tensor(rng, {5});
  CHECK(finite_diff_check(f_sum, x, 1e-5) < 1e-10);

  CHECK_THROWS_AS(finite_diff_check(f_sum, x, 0.5), Error);

  auto f_bad = [](Graph& g, const TensorPtr& x) { return mul(g, x, x); };
  CHECK_THROWS_AS(finite_diff_check(f_bad, x, 1e-5), ShapeError);
}

TEST_CASE("gradients of every op pass the finite-difference oracle") {
  Rng rng(2024);
  auto check = [&](const std::function<TensorPtr(Graph&, const TensorPtr&)>& f, Shape shape) {
    for (int trial = 0; trial < 100; ++trial) {
      auto x = random_tensor(rng, shape);
      CHECK(finite_diff_check(f, x, 1e-5) < 1e-4);
    }
  };

  check([](Graph& g, const TensorPtr& x) {
    auto w = Tensor::matrix(4, 3, {0.3, -0.2, 0.5, 0.1, 0.7, -0.4, 0.2, 0.2, -0.1, -0.6, 0.4, 0.3});
    return sum(g, matmul(g, x, w));
  }, {3, 4});

  check([](Graph& g, const TensorPtr& x) {
    auto w = Tensor::vec({0.5, -1.0, 0.25, 0.75, -0.5, 1.5, 0.2, -0.8});
    return sum(g, mul(g, softmax(g, x), Tensor::matrix(2, 4, w->data)));
  }, {2, 4});

  check([](Graph& g, const TensorPtr& x) {
    auto w = Tensor::vec({0.9, -0.3, 0.6, 0.1, -0.7});
    return sum(g, mul(g, l2_normalize(g, x), w));
  }, {5});

  check([](Graph& g, const TensorPtr& x) {
    auto w = Tensor::matrix(3, 4, {0.2, -0.5, 0.3, 0.8, -0.1, 0.4, 0.6, -0.9, 0.5, 0.1, -0.2, 0.7});
    return sum(g, mul(g, rms_norm_rows(g, x), w));
  }, {3, 4});

  check([](Graph& g, const TensorPtr& x) {
    return sum(g, tanh(g, x));
  }, {6});

  check([](Graph& g, const TensorPtr& x) {
    auto m = mean_rows(g, x);
    return sum(g, mul(g, m, m));
  }, {4, 3});

  check([](Graph& g, const TensorPtr& x) {
    auto t = transpose(g, x);
    return sum(g, mul(g, t, t));
  }, {3, 2});

  check([](Graph& g, const TensorPtr& x) {
    auto sliced = slice_rows(g, x, 1, 3);
    return sum(g, mul(g, sliced, sliced));
  }, {4, 2});
}

TEST_CASE("gradient flows through a composite of the named ops") {
  // matmul -> softmax -> l2_normalize, the spec's composite case
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_tensor(rng, {2, 3});
    auto f = [](Graph& g, const TensorPtr& x) {
      auto w = Tensor::matrix(3, 3, {0.4, -0.2, 0.1, 0.3, 0.5, -0.6, -0.1, 0.2, 0.8});
      auto h = softmax(g, matmul(g, x, w));
      auto pooled = mean_rows(g, h);
      auto n = l2_normalize(g, pooled);
      auto t = Tensor::vec({1.0, -2.0, 0.5});
      return sum(g, mul(g, n, t));
    };
    CHECK(finite_diff_check(f, x, 1e-5) < 1e-4);
  }
}

TEST_CASE("no op produces NaN on finite inputs up to magnitude 1e3") {
  Rng rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    Graph g;
    auto x = Tensor::make({3, 3}, [&] {
      std::vector<double> d(9);
      for (auto& v : d) v = rng.uniform(-1e3, 1e3);
      return d;
    }());
    // constructors reject non-finite output, so reaching here means clean
    CHECK_NOTHROW(softmax(g, x));
    CHECK_NOTHROW(tanh(g, x));
    CHECK_NOTHROW(rms_norm_rows(g, x));
    CHECK_NOTHROW(matmul(g, x, x));
    CHECK_NOTHROW(sum(g, mul(g, x, x)));
  }
}

TEST_CASE("concat, stack and embedding round out the op set") {
  Graph g;
  auto a = Tensor::matrix(1, 2, {1, 2});
  auto b = Tensor::matrix(2, 2, {3, 4, 5, 6});
  auto r = concat_rows(g, a, b);
  CHECK(r->rows() == 3);
  CHECK(r->data == std::vector<double>{1, 2, 3, 4, 5, 6});

  auto c = concat_cols(g, {a, Tensor::matrix(1, 1, {9})});
  CHECK(c->shape() == Shape{1, 3});
  CHECK(c->data == std::vector<double>{1, 2, 9});

  auto v = concat_vec(g, Tensor::vec({1}), Tensor::vec({2, 3}));
  CHECK(v->data == std::vector<double>{1, 2, 3});

  auto s = stack_rows(g, {Tensor::vec({1, 2}), Tensor::vec({3, 4})});
  CHECK(s->shape() == Shape{2, 2});

  auto table = Tensor::matrix(3, 2, {0, 1, 10, 11, 20, 21}, true);
  auto e = embedding_rows(g, table, {2, 0, 2});
  CHECK(e->data == std::vector<double>{20, 21, 0, 1, 20, 21});
  auto loss = sum(g, e);
  g.backward(loss);
  CHECK(table->grad == std::vector<double>{1, 1, 0, 0, 2, 2});

  CHECK_THROWS_AS(embedding_rows(g, table, {3}), ShapeError);
}

TEST_CASE("rng determinism and serialization") {
  Rng a(123), b(123);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());

  Rng c(9);
  c.normal();
  const std::string st = c.state();
  const double next = c.normal();
  Rng d(1);
  d.set_state(st);
  CHECK(d.normal() == next);
}

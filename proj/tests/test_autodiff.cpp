#include "hbaf/autodiff.hpp"
#include "hbaf/errors.hpp"
#include "hbaf/gradcheck.hpp"
#include "hbaf/parameters.hpp"

#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <functional>

using namespace hbaf;
using ad::Tape;

namespace {

struct OpCase {
  const char* name;
  std::function<ad::Var(Graph&, ad::Var, ad::Var)> op;
  Index ar, ac, br, bc;
  bool positive = false;  // op needs strictly positive inputs
};

// Projects the op output onto fixed random weights so every output entry matters.
GradCheckReport check_op(const OpCase& c, std::uint64_t seed) {
  Rng rng(seed);
  ParameterStore store;
  store.create_glorot("a", c.ar, c.ac, rng);
  store.create_glorot("b", c.br, c.bc, rng);
  if (c.positive) {
    store.at("a").value = store.at("a").value.array().abs() + 0.5;
    store.at("b").value = store.at("b").value.array().abs() + 0.5;
  }
  Matrix weights;
  auto loss = [&](Graph& g) {
    ad::Var out = c.op(g, g.param("a"), g.param("b"));
    if (weights.size() == 0) {
      weights = Matrix(out.rows(), out.cols());
      for (Index i = 0; i < weights.size(); ++i) weights.data()[i] = rng.uniform(-1.0, 1.0);
    }
    return ad::sum(ad::mul(out, g.constant(weights)));
  };
  GradCheckOptions opts;
  opts.tolerance = 1e-6;
  return grad_check(store, loss, opts);
}

}  // namespace

TEST_SUITE_BEGIN("autodiff");

TEST_CASE("every tape op has matching analytic and numeric gradients") {
  const std::vector<OpCase> cases = {
      {"matmul", [](Graph&, ad::Var a, ad::Var b) { return ad::matmul(a, b); }, 3, 4, 4, 2},
      {"matmul_nt", [](Graph&, ad::Var a, ad::Var b) { return ad::matmul_nt(a, b); }, 3, 4, 5, 4},
      {"transpose", [](Graph&, ad::Var a, ad::Var) { return ad::transpose(a); }, 3, 4, 1, 1},
      {"add", [](Graph&, ad::Var a, ad::Var b) { return ad::add(a, b); }, 3, 4, 3, 4},
      {"sub", [](Graph&, ad::Var a, ad::Var b) { return ad::sub(a, b); }, 3, 4, 3, 4},
      {"mul", [](Graph&, ad::Var a, ad::Var b) { return ad::mul(a, b); }, 3, 4, 3, 4},
      {"scale", [](Graph&, ad::Var a, ad::Var) { return ad::scale(a, -2.5); }, 3, 4, 1, 1},
      {"add_scalar", [](Graph&, ad::Var a, ad::Var) { return ad::add_scalar(a, 0.7); }, 3, 4, 1, 1},
      {"one_minus", [](Graph&, ad::Var a, ad::Var) { return ad::one_minus(a); }, 3, 4, 1, 1},
      {"sigmoid", [](Graph&, ad::Var a, ad::Var) { return ad::sigmoid(a); }, 3, 4, 1, 1},
      {"tanh", [](Graph&, ad::Var a, ad::Var) { return ad::tanh(a); }, 3, 4, 1, 1},
      {"relu", [](Graph&, ad::Var a, ad::Var) { return ad::relu(a); }, 3, 4, 1, 1},
      {"exp", [](Graph&, ad::Var a, ad::Var) { return ad::exp(a); }, 3, 4, 1, 1},
      {"log", [](Graph&, ad::Var a, ad::Var) { return ad::log(a); }, 3, 4, 1, 1, true},
      {"add_row", [](Graph&, ad::Var a, ad::Var b) { return ad::add_row(a, b); }, 3, 4, 1, 4},
      {"mul_row", [](Graph&, ad::Var a, ad::Var b) { return ad::mul_row(a, b); }, 3, 4, 1, 4},
      {"mean", [](Graph&, ad::Var a, ad::Var) { return ad::mean(a); }, 3, 4, 1, 1},
      {"logsumexp_rows", [](Graph&, ad::Var a, ad::Var) { return ad::logsumexp_rows(a); }, 3, 4, 1, 1},
      {"softmax_rows", [](Graph&, ad::Var a, ad::Var) { return ad::softmax_rows(a); }, 3, 4, 1, 1},
      {"log_softmax_rows", [](Graph&, ad::Var a, ad::Var) { return ad::log_softmax_rows(a); }, 3, 4, 1, 1},
      {"layer_norm_rows", [](Graph&, ad::Var a, ad::Var) { return ad::layer_norm_rows(a, 1e-9); }, 3, 5, 1, 1},
      {"normalize_rows", [](Graph&, ad::Var a, ad::Var) { return ad::normalize_rows(a); }, 3, 4, 1, 1},
      {"concat_cols", [](Graph&, ad::Var a, ad::Var b) { return ad::concat_cols({a, b, a}); }, 3, 4, 3, 2},
      {"concat_rows", [](Graph&, ad::Var a, ad::Var b) { return ad::concat_rows({a, b}); }, 3, 4, 2, 4},
      {"slice_rows", [](Graph&, ad::Var a, ad::Var) { return ad::slice_rows(a, 1, 2); }, 4, 3, 1, 1},
      {"slice_cols", [](Graph&, ad::Var a, ad::Var) { return ad::slice_cols(a, 1, 2); }, 3, 4, 1, 1},
      {"gather",
       [](Graph&, ad::Var a, ad::Var) {
         const std::pair<Index, Index> at[] = {{0, 1}, {2, 3}, {0, 1}};
         return ad::gather(a, at);
       },
       3, 4, 1, 1},
      {"mask",
       [](Graph&, ad::Var a, ad::Var) {
         Matrix m(3, 4);
         m << 0, 2, 2, 0, 2, 0, 2, 2, 0, 0, 2, 2;
         return ad::mask(a, m);
       },
       3, 4, 1, 1},
  };
  for (const auto& c : cases) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      const GradCheckReport r = check_op(c, seed);
      INFO(c.name << " seed " << seed << " max rel err " << r.max_rel_error);
      CHECK(r.pass);
    }
  }
}

TEST_CASE("a gradient fans in across reuse of the same node") {
  Tape t;
  ad::Var x = t.variable(Matrix::Constant(1, 1, 3.0));
  ad::Var y = ad::mul(x, x);  // x^2
  ad::Var z = ad::add(y, x);  // x^2 + x
  t.backward(ad::sum(z));
  CHECK(t.grad(x)(0, 0) == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("constants receive no gradient and no-record tapes compute values only") {
  Tape t;
  ad::Var c = t.constant(Matrix::Ones(2, 2));
  ad::Var v = t.variable(Matrix::Ones(2, 2));
  t.backward(ad::sum(ad::mul(c, v)));
  CHECK(t.grad(c).size() == 0);
  CHECK(t.grad(v).isApprox(Matrix::Ones(2, 2)));

  Tape eval(Precision::kFloat64, false);
  ad::Var w = eval.variable(Matrix::Constant(1, 1, 2.0));
  CHECK(ad::exp(w).value()(0, 0) == doctest::Approx(std::exp(2.0)));
  CHECK_FALSE(eval.recording());
}

TEST_CASE("float32 mode rounds op outputs through single precision") {
  Tape t(Precision::kFloat32);
  ad::Var a = t.constant(Matrix::Constant(1, 1, 1.0));
  ad::Var third = ad::scale(a, 1.0 / 3.0);
  CHECK(third.value()(0, 0) == static_cast<double>(static_cast<float>(1.0 / 3.0)));
  CHECK(third.value()(0, 0) != 1.0 / 3.0);
}

TEST_CASE("row softmax matches the scalar oracle on random rows") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 100; ++trial) {
    const oracle::Mat x = oracle::random(gen, 1 + trial % 4, 2 + trial % 7, 6.0);
    Tape t;
    const Matrix got = ad::softmax_rows(t.constant(testutil::to_matrix(x))).value();
    oracle::Mat want;
    for (const auto& row : x) want.push_back(oracle::softmax(row));
    CHECK(testutil::max_diff(got, want) <= 1e-12);
  }
}

TEST_CASE("layer norm rows have zero mean and unit variance") {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 50; ++trial) {
    const oracle::Mat x = oracle::random(gen, 3, 8, 4.0);
    Tape t;
    const Matrix got = ad::layer_norm_rows(t.constant(testutil::to_matrix(x)), 1e-9).value();
    for (Index i = 0; i < got.rows(); ++i) {
      CHECK(std::abs(got.row(i).mean()) <= 1e-12);
      const double var = (got.row(i).array() - got.row(i).mean()).square().mean();
      CHECK(std::abs(var - 1.0) <= 1e-6);
      const oracle::Vec want = oracle::layer_norm(x[static_cast<std::size_t>(i)], 1e-9);
      for (Index j = 0; j < got.cols(); ++j) CHECK(std::abs(got(i, j) - want[j]) <= 1e-12);
    }
  }
}

TEST_CASE("normalizing a zero row is a numeric error") {
  Tape t;
  CHECK_THROWS_AS(ad::normalize_rows(t.constant(Matrix::Zero(2, 3))), NumericError);
}

TEST_CASE("grad_check on a linear toy model is exact to rounding") {
  Rng rng(3);
  ParameterStore store;
  store.create_glorot("lin.w", 4, 3, rng);
  store.create_glorot("lin.b", 1, 3, rng);
  Matrix x(5, 4);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.uniform(-1.0, 1.0);
  Matrix weights(5, 3);
  for (Index i = 0; i < weights.size(); ++i) weights.data()[i] = rng.uniform(-1.0, 1.0);
  auto loss = [&](Graph& g) {
    ad::Var y = ad::add_row(ad::matmul(g.constant(x), g.param("lin.w")), g.param("lin.b"));
    return ad::sum(ad::mul(y, g.constant(weights)));
  };
  GradCheckOptions opts;
  const GradCheckReport r = grad_check(store, loss, opts);
  CHECK(r.pass);
  CHECK(r.max_rel_error <= 1e-9);
}

TEST_CASE("grad_check flags a corrupted tensor and only that tensor") {
  Rng rng(4);
  ParameterStore store;
  store.create_glorot("p.first", 2, 3, rng);
  store.create_glorot("p.second", 3, 2, rng);
  auto loss = [](Graph& g) {
    return ad::sum(ad::tanh(ad::matmul(g.param("p.first"), g.param("p.second"))));
  };
  GradCheckOptions opts;
  opts.corrupt = "p.second";
  const GradCheckReport r = grad_check(store, loss, opts);
  CHECK_FALSE(r.pass);
  REQUIRE(r.failing().size() == 1);
  CHECK(r.failing()[0] == "p.second");

  opts.corrupt = "p.missing";
  CHECK_THROWS_AS(grad_check(store, loss, opts), ConfigError);
}
TEST_SUITE_END();

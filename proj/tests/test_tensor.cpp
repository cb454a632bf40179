#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "suparc/errors.hpp"
#include "suparc/gradcheck.hpp"
#include "suparc/rng.hpp"
#include "suparc/tensor.hpp"

using namespace suparc;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Analytic gradient of a scalar graph w.r.t. a single parameter tensor.
std::vector<double> grad_of(const std::function<Tensor(const Tensor&)>& build,
                            const Tensor& x0) {
  Tensor x = Tensor::parameter(x0.shape(), {x0.values().begin(), x0.values().end()});
  Tape tape;
  TapeScope scope(tape);
  backward(build(x));
  return {x.grad().begin(), x.grad().end()};
}

Tensor random_normal(Rng& rng, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  std::vector<double> values(n);
  for (auto& v : values) v = rng.normal();
  return Tensor::from(std::move(shape), std::move(values));
}

}  // namespace

TEST_CASE("matmul identity and orthogonal-pick examples") {
  Tensor identity = Tensor::matrix(2, 2, {1, 0, 0, 1});
  Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  Tensor product = matmul(identity, m);
  CHECK(product.values()[0] == 1.0);
  CHECK(product.values()[1] == 2.0);
  CHECK(product.values()[2] == 3.0);
  CHECK(product.values()[3] == 4.0);

  Tensor row = Tensor::matrix(1, 2, {1, 0});
  Tensor col = Tensor::matrix(2, 1, {0, 5});
  CHECK(matmul(row, col).values()[0] == 0.0);

  CHECK_THROWS_AS(matmul(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}), identity), DimensionError);
}

TEST_CASE("matmul gradient matches central differences at 1e-6") {
  Rng rng(1234);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x0 = random_normal(rng, {20});
    const auto build = [](const Tensor& x) {
      return sum(matmul(reshape(slice(x, 0, 12), {3, 4}), reshape(slice(x, 12, 8), {4, 2})));
    };
    const auto analytic = grad_of(build, x0);
    const auto numeric = finite_difference_gradient(
        [&build](const Tensor& t) { return build(t).item(); }, x0);
    CHECK(max_rel_error(analytic, numeric) <= 1e-6);
  }
}

TEST_CASE("elementwise examples") {
  CHECK(tanh(Tensor::scalar(0.0)).item() == 0.0);

  Tensor x = Tensor::parameter({}, {-2.5});
  Tape tape;
  TapeScope scope(tape);
  Tensor r = relu(x);
  CHECK(r.item() == 0.0);
  backward(r);
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("exp gradient at x=1 matches central differences at 1e-6") {
  Tensor x0 = Tensor::vector({1.0});
  const auto build = [](const Tensor& t) { return sum(exp(t)); };
  const auto analytic = grad_of(build, x0);
  const auto numeric = finite_difference_gradient(
      [&build](const Tensor& t) { return build(t).item(); }, x0);
  CHECK(max_rel_error(analytic, numeric) <= 1e-6);
  CHECK(analytic[0] == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
}

TEST_CASE("scalar broadcasting and shape validation") {
  Tensor v = Tensor::vector({1.0, 2.0, 3.0});
  Tensor s = Tensor::scalar(10.0);
  Tensor summed = add(v, s);
  CHECK(summed.values()[2] == 13.0);
  Tensor scaled = mul(s, v);
  CHECK(scaled.values()[1] == 20.0);
  CHECK(sub(v, s).values()[0] == -9.0);

  CHECK_THROWS_AS(add(v, Tensor::vector({1.0, 2.0})), DimensionError);
}

TEST_CASE("domain guards keep forward values finite") {
  CHECK(log(Tensor::scalar(0.0)).item() == doctest::Approx(std::log(1e-12)));
  CHECK(log(Tensor::scalar(-5.0)).item() == doctest::Approx(std::log(1e-12)));
  CHECK(sqrt(Tensor::scalar(-1.0)).item() == doctest::Approx(1e-6));
  CHECK(std::isfinite(exp(Tensor::scalar(1e9)).item()));
  CHECK(std::isfinite(arccos(Tensor::scalar(5.0)).item()));
}

TEST_CASE("clamp and scale semantics") {
  Tensor x = Tensor::vector({-2.0, 0.5, 7.0});
  Tensor clamped = clamp(x, -1.0, 1.0);
  CHECK(clamped.values()[0] == -1.0);
  CHECK(clamped.values()[1] == 0.5);
  CHECK(clamped.values()[2] == 1.0);
  CHECK(scale(x, -2.0).values()[2] == -14.0);

  // Zero gradient outside the window, unit inside.
  const auto g = grad_of([](const Tensor& t) { return sum(clamp(t, -1.0, 1.0)); }, x);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 1.0);
  CHECK(g[2] == 0.0);
}

TEST_CASE("cosine similarity examples") {
  CHECK(cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({0, 1})).item() == 0.0);
  // Parallel vectors hit exactly 1 regardless of scale.
  CHECK(cosine_similarity(Tensor::vector({2, 2}), Tensor::vector({1, 1})).item() == 1.0);
  CHECK(cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({1, 1})).item() ==
        doctest::Approx(std::sqrt(0.5)).epsilon(1e-12));
  CHECK_THROWS_AS(cosine_similarity(Tensor::vector({0, 0}), Tensor::vector({1, 1})),
                  DegenerateInputError);
  CHECK_THROWS_AS(cosine_similarity(Tensor::vector({1, 0}), Tensor::vector({1, 0, 0})),
                  DimensionError);
}

TEST_CASE("cosine similarity is invariant to positive rescaling") {
  Rng rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor a = random_normal(rng, {8});
    Tensor b = random_normal(rng, {8});
    const double lambda = rng.uniform(0.1, 10.0);
    const double mu = rng.uniform(0.1, 10.0);
    Tensor a2 = scale(a, lambda);
    Tensor b2 = scale(b, mu);
    const double base = cosine_similarity(a, b).item();
    const double scaled = cosine_similarity(a2, b2).item();
    CHECK(std::fabs(base - scaled) <= 1e-12);
  }
}

TEST_CASE("arccos examples and bounds") {
  CHECK(arccos(Tensor::scalar(0.0)).item() == doctest::Approx(kPi / 2).epsilon(1e-15));
  CHECK(arccos(Tensor::scalar(0.5)).item() == doctest::Approx(kPi / 3).epsilon(1e-12));

  // x = 1 lands on the clamped closed form with a finite gradient.
  const double clamped_top = std::acos(1.0 - 1e-7);
  CHECK(arccos(Tensor::scalar(1.0)).item() == doctest::Approx(clamped_top).epsilon(1e-12));
  const auto g = grad_of([](const Tensor& t) { return arccos(reshape(t, {})); },
                         Tensor::vector({1.0}));
  CHECK(std::isfinite(g[0]));

  // 1/sqrt(2e-7 - 1e-14); the small slack absorbs the differently-rounded
  // but mathematically equal 1 - clamp^2 inside the op.
  const double grad_bound = 1.0 / std::sqrt(2e-7 - 1e-14) * (1.0 + 1e-9);
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const double x = rng.uniform(-1.5, 1.5);
    const double value = arccos(Tensor::scalar(x)).item();
    CHECK(value >= clamped_top);
    CHECK(value <= kPi - clamped_top);
    const auto gx = grad_of([](const Tensor& t) { return arccos(reshape(t, {})); },
                            Tensor::vector({x}));
    CHECK(std::fabs(gx[0]) <= grad_bound);
  }
}

TEST_CASE("backward contract checks") {
  Tensor x = Tensor::parameter({2}, {1.0, 2.0});
  Tape tape;
  TapeScope scope(tape);
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(backward(y), ContractError);      // non-scalar
  CHECK_THROWS_AS(backward(x), ContractError);      // leaf, not on the tape
}

TEST_CASE("repeated backward accumulates into leaves") {
  Tensor x = Tensor::parameter({2}, {1.5, -2.0});
  Tape tape;
  TapeScope scope(tape);
  Tensor loss = sum(mul(x, x));
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(3.0).epsilon(1e-15));
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(x.grad()[1] == doctest::Approx(-8.0).epsilon(1e-15));
}

TEST_CASE("parameters outside the graph keep exactly zero gradient") {
  Tensor used = Tensor::parameter({2}, {1.0, 2.0});
  Tensor unused = Tensor::parameter({3}, {5.0, 6.0, 7.0});
  Tape tape;
  TapeScope scope(tape);
  backward(sum(mul(used, used)));
  CHECK(unused.grad()[0] == 0.0);
  CHECK(unused.grad()[1] == 0.0);
  CHECK(unused.grad()[2] == 0.0);
}

TEST_CASE("diamond-shaped reuse sums both paths") {
  Tensor x = Tensor::parameter({}, {3.0});
  Tape tape;
  TapeScope scope(tape);
  Tensor y = add(mul(x, x), x);  // x^2 + x, dy/dx = 2x + 1
  backward(y);
  CHECK(x.grad()[0] == doctest::Approx(7.0).epsilon(1e-15));
}

TEST_CASE("tape records parents before children") {
  Tensor x = Tensor::parameter({4}, {0.1, 0.2, 0.3, 0.4});
  Tape tape;
  TapeScope scope(tape);
  Tensor h = tanh(add(x, Tensor::vector({1, 1, 1, 1})));
  backward(mean(mul(h, h)));
  REQUIRE(tape.size() > 0);
  for (std::size_t id = 0; id < tape.size(); ++id) {
    for (std::int64_t parent : tape.node(id).parents) {
      CHECK(parent < static_cast<std::int64_t>(id));
    }
  }
}

TEST_CASE("finite differences on known gradients") {
  Tensor x = Tensor::vector({1.0, 2.0});

  const auto ones = finite_difference_gradient(
      [](const Tensor& t) { return sum(t).item(); }, x);
  CHECK(ones[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(ones[1] == doctest::Approx(1.0).epsilon(1e-9));

  const auto sq = finite_difference_gradient(
      [](const Tensor& t) { return sum(mul(t, t)).item(); }, x);
  CHECK(sq[0] == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(sq[1] == doctest::Approx(4.0).epsilon(1e-6));

  CHECK_THROWS_AS(finite_difference_gradient(
                      [](const Tensor& t) { return sum(t).item(); }, x, 0.0),
                  ContractError);
}

TEST_CASE("every op passes the gradient oracle at 1e-4") {
  // The acceptance suite runs 100 cases per check; keep the unit pass short.
  for (const auto& result : run_gradient_checks(10, 99)) {
    INFO(result.name);
    CHECK(result.passed);
  }
}

TEST_CASE("slice and concat shape handling") {
  Tensor x = Tensor::vector({1, 2, 3, 4, 5});
  Tensor window = slice(x, 1, 3);
  CHECK(window.numel() == 3);
  CHECK(window.values()[0] == 2.0);
  CHECK_THROWS_AS(slice(x, 4, 3), DimensionError);

  const std::array<Tensor, 2> parts = {Tensor::vector({1, 2}), Tensor::vector({3})};
  Tensor joined = concat(std::span<const Tensor>(parts.data(), parts.size()));
  CHECK(joined.numel() == 3);
  CHECK(joined.values()[2] == 3.0);
}

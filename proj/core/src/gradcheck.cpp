#include "suparc/gradcheck.hpp"

#include <array>
#include <cmath>
#include <functional>

#include "suparc/errors.hpp"
#include "suparc/losses.hpp"
#include "suparc/rng.hpp"
#include "suparc/tensor.hpp"

namespace suparc {

double max_rel_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) {
    throw ContractError("max_rel_error: gradient lengths differ");
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), 1e-6});
    worst = std::max(worst, std::fabs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

namespace {

// One case: analytic gradient via a fresh tape vs central differences of the
// same scalar-valued graph builder.
double check_case(const std::function<Tensor(const Tensor&)>& build, const Tensor& x0) {
  Tensor x = Tensor::parameter(x0.shape(), {x0.values().begin(), x0.values().end()});
  std::vector<double> analytic;
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = build(x);
    backward(loss);
    analytic.assign(x.grad().begin(), x.grad().end());
  }
  const std::vector<double> numeric = finite_difference_gradient(
      [&build](const Tensor& probe) { return build(probe).item(); }, x0);
  return max_rel_error(analytic, numeric);
}

Tensor random_uniform(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  std::vector<double> values(n);
  for (auto& v : values) v = rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(values));
}

Tensor random_normal(Rng& rng, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  std::vector<double> values(n);
  for (auto& v : values) v = rng.normal();
  return Tensor::from(std::move(shape), std::move(values));
}

// Keeps every coordinate at least `margin` away from the kink at `knot` so
// central differences never straddle a non-smooth point.
Tensor away_from(Rng& rng, std::vector<std::size_t> shape, double knot, double margin) {
  Tensor t = random_normal(rng, shape);
  for (auto& v : t.values_mut()) {
    if (std::fabs(v - knot) < margin) v = knot + (v >= knot ? margin : -margin);
  }
  return t;
}

// Labels with a guaranteed positive pair for anchor 0.
std::vector<double> contrastive_labels(Rng& rng, std::size_t n, double threshold) {
  std::vector<double> y(n);
  for (auto& v : y) v = rng.uniform(-3.0, 3.0);
  y[1] = std::min(3.0, std::max(-3.0, y[0] + rng.uniform(0.0, 0.9 * threshold)));
  return y;
}

std::vector<Tensor> rows_of(const Tensor& matrix, std::size_t n, std::size_t d) {
  std::vector<Tensor> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) rows.push_back(slice(matrix, i * d, d));
  return rows;
}

struct Check {
  std::string name;
  std::function<double(Rng&)> run;  // one random case, returns its max rel err
};

constexpr std::size_t kBatch = 4;
constexpr std::size_t kDim = 6;
constexpr double kThreshold = 0.5;
constexpr double kTau = 0.5;
constexpr double kMargin = 0.1;

std::vector<Check> build_checks() {
  std::vector<Check> checks;

  checks.push_back({"op_matmul", [](Rng& rng) {
    return check_case(
        [](const Tensor& x) {
          Tensor lhs = reshape(slice(x, 0, 12), {3, 4});
          Tensor rhs = reshape(slice(x, 12, 8), {4, 2});
          Tensor weights = Tensor::from({3, 2}, {0.7, -0.4, 1.3, 0.2, -0.9, 0.5});
          return sum(mul(matmul(lhs, rhs), weights));
        },
        random_normal(rng, {20}));
  }});

  checks.push_back({"op_add", [](Rng& rng) {
    return check_case(
        [](const Tensor& x) {
          Tensor a = slice(x, 0, 5);
          Tensor b = slice(x, 5, 5);
          Tensor s = slice(x, 10, 1);
          return sum(mul(add(add(a, b), s), Tensor::vector({1.0, -2.0, 0.5, 3.0, -1.5})));
        },
        random_normal(rng, {11}));
  }});

  checks.push_back({"op_sub", [](Rng& rng) {
    return check_case(
        [](const Tensor& x) {
          Tensor a = slice(x, 0, 5);
          Tensor b = slice(x, 5, 5);
          Tensor s = slice(x, 10, 1);
          return sum(mul(sub(sub(a, b), s), Tensor::vector({2.0, -1.0, 0.25, 1.5, -0.75})));
        },
        random_normal(rng, {11}));
  }});

  checks.push_back({"op_mul", [](Rng& rng) {
    return check_case(
        [](const Tensor& x) {
          Tensor a = slice(x, 0, 5);
          Tensor b = slice(x, 5, 5);
          Tensor s = slice(x, 10, 1);
          return sum(mul(mul(a, b), s));
        },
        random_normal(rng, {11}));
  }});

  checks.push_back({"op_tanh", [](Rng& rng) {
    return check_case([](const Tensor& x) { return sum(tanh(x)); }, random_normal(rng, {8}));
  }});

  checks.push_back({"op_sigmoid", [](Rng& rng) {
    return check_case([](const Tensor& x) { return sum(sigmoid(x)); }, random_normal(rng, {8}));
  }});

  checks.push_back({"op_relu", [](Rng& rng) {
    return check_case([](const Tensor& x) { return sum(relu(x)); },
                      away_from(rng, {8}, 0.0, 1e-3));
  }});

  checks.push_back({"op_exp", [](Rng& rng) {
    return check_case([](const Tensor& x) { return sum(exp(x)); },
                      random_uniform(rng, {8}, -2.0, 2.0));
  }});

  checks.push_back({"op_log", [](Rng& rng) {
    return check_case([](const Tensor& x) { return sum(log(x)); },
                      random_uniform(rng, {8}, 0.1, 4.0));
  }});

  checks.push_back({"op_sqrt", [](Rng& rng) {
    return check_case([](const Tensor& x) { return sum(sqrt(x)); },
                      random_uniform(rng, {8}, 0.1, 4.0));
  }});

  checks.push_back({"op_abs", [](Rng& rng) {
    return check_case([](const Tensor& x) { return sum(abs(x)); },
                      away_from(rng, {8}, 0.0, 1e-3));
  }});

  checks.push_back({"op_cos", [](Rng& rng) {
    return check_case([](const Tensor& x) { return sum(cos(x)); }, random_normal(rng, {8}));
  }});

  checks.push_back({"op_scale", [](Rng& rng) {
    return check_case([](const Tensor& x) { return sum(scale(x, -1.7)); },
                      random_normal(rng, {8}));
  }});

  checks.push_back({"op_clamp", [](Rng& rng) {
    Tensor x0 = random_uniform(rng, {8}, -3.0, 3.0);
    for (auto& v : x0.values_mut()) {  // stay off the clamp kinks
      if (std::fabs(v - 1.5) < 1e-3) v += 2e-3;
      if (std::fabs(v + 1.5) < 1e-3) v -= 2e-3;
    }
    return check_case([](const Tensor& x) { return sum(clamp(x, -1.5, 1.5)); }, x0);
  }});

  checks.push_back({"op_reshape", [](Rng& rng) {
    return check_case(
        [](const Tensor& x) {
          return sum(mul(reshape(x, {2, 4}), reshape(x, {2, 4})));
        },
        random_normal(rng, {8}));
  }});

  checks.push_back({"op_slice", [](Rng& rng) {
    return check_case(
        [](const Tensor& x) { return sum(mul(slice(x, 2, 4), slice(x, 4, 4))); },
        random_normal(rng, {10}));
  }});

  checks.push_back({"op_concat", [](Rng& rng) {
    return check_case(
        [](const Tensor& x) {
          const std::array<Tensor, 3> parts = {slice(x, 0, 3), slice(x, 3, 2), slice(x, 5, 4)};
          Tensor joined = concat(std::span<const Tensor>(parts.data(), parts.size()));
          return sum(mul(joined, joined));
        },
        random_normal(rng, {9}));
  }});

  checks.push_back({"op_sum", [](Rng& rng) {
    return check_case([](const Tensor& x) { return sum(mul(x, x)); }, random_normal(rng, {8}));
  }});

  checks.push_back({"op_mean", [](Rng& rng) {
    return check_case([](const Tensor& x) { return mean(mul(x, x)); }, random_normal(rng, {8}));
  }});

  checks.push_back({"cosine_similarity", [](Rng& rng) {
    return check_case(
        [](const Tensor& x) {
          return cosine_similarity(slice(x, 0, 6), slice(x, 6, 6));
        },
        random_normal(rng, {12}));
  }});

  checks.push_back({"op_arccos", [](Rng& rng) {
    return check_case(
        [](const Tensor& x) { return arccos(reshape(x, {})); },
        random_uniform(rng, {1}, -0.95, 0.95));
  }});

  checks.push_back({"mae_loss", [](Rng& rng) {
    std::vector<double> targets(5);
    for (auto& t : targets) t = rng.uniform(-3.0, 3.0);
    Tensor x0 = random_normal(rng, {5});
    for (std::size_t i = 0; i < 5; ++i) {  // keep |pred - target| off the kink
      if (std::fabs(x0.values()[i] - targets[i]) < 1e-3) x0.values_mut()[i] += 2e-3;
    }
    return check_case(
        [targets](const Tensor& x) {
          return mae_loss(rows_of(x, 5, 1), targets);
        },
        x0);
  }});

  checks.push_back({"supervised_ntxent", [](Rng& rng) {
    const std::vector<double> y = contrastive_labels(rng, kBatch, kThreshold);
    const PairMatrix pairs = pair_label(y, kThreshold);
    return check_case(
        [pairs](const Tensor& x) {
          return supervised_ntxent(rows_of(x, kBatch, kDim), pairs, kTau);
        },
        random_normal(rng, {kBatch, kDim}));
  }});

  checks.push_back({"arccos_loss", [](Rng& rng) {
    const std::vector<double> y = contrastive_labels(rng, kBatch, kThreshold);
    const PairMatrix pairs = pair_label(y, kThreshold);
    return check_case(
        [pairs](const Tensor& x) {
          return arccos_loss(rows_of(x, kBatch, kDim), pairs, kTau, kMargin);
        },
        random_normal(rng, {kBatch, kDim}));
  }});

  checks.push_back({"suparc_loss", [](Rng& rng) {
    const std::vector<double> y = contrastive_labels(rng, kBatch, kThreshold);
    const PairMatrix pairs = pair_label(y, kThreshold);
    return check_case(
        [pairs, y](const Tensor& x) {
          return suparc_loss(rows_of(x, kBatch, kDim), y, pairs, kTau, kMargin);
        },
        random_normal(rng, {kBatch, kDim}));
  }});

  checks.push_back({"triplet_modalities_loss", [](Rng& rng) {
    return check_case(
        [](const Tensor& x) {
          const std::vector<Tensor> rows = rows_of(x, 7, kDim);
          const std::array<Tensor, 3> singles = {rows[1], rows[2], rows[3]};
          const std::array<Tensor, 3> doubles = {rows[4], rows[5], rows[6]};
          return triplet_modalities_loss(rows[0], singles, doubles, 0.3);
        },
        random_normal(rng, {7, kDim}));
  }});

  return checks;
}

}  // namespace

std::vector<GradCheckResult> run_gradient_checks(std::size_t trials, std::uint64_t seed,
                                                 double tolerance) {
  if (trials == 0) throw ContractError("run_gradient_checks: trials must be >= 1");
  std::vector<GradCheckResult> results;
  for (const auto& check : build_checks()) {
    Rng rng(seed ^ std::hash<std::string>{}(check.name));
    GradCheckResult result;
    result.name = check.name;
    result.cases = trials;
    for (std::size_t trial = 0; trial < trials; ++trial) {
      result.max_rel_err = std::max(result.max_rel_err, check.run(rng));
    }
    result.passed = result.max_rel_err <= tolerance;
    results.push_back(std::move(result));
  }
  return results;
}

}  // namespace suparc

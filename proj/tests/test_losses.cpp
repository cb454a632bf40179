#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <array>
#include <cmath>

#include "doctest.h"
#include "suparc/errors.hpp"
#include "suparc/losses.hpp"
#include "suparc/rng.hpp"
#include "suparc/tensor.hpp"

using namespace suparc;

namespace {

std::vector<Tensor> batch_of(const std::vector<std::vector<double>>& rows) {
  std::vector<Tensor> h;
  h.reserve(rows.size());
  for (const auto& row : rows) h.push_back(Tensor::vector(row));
  return h;
}

std::vector<Tensor> random_batch(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<Tensor> h;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(d);
    for (auto& v : row) v = rng.normal();
    h.push_back(Tensor::vector(std::move(row)));
  }
  return h;
}

// Random labels with at least one positive pair under the threshold.
std::vector<double> labels_with_positive(Rng& rng, std::size_t n, double threshold) {
  std::vector<double> y(n);
  for (auto& v : y) v = rng.uniform(-3.0, 3.0);
  y[1] = std::min(3.0, std::max(-3.0, y[0] + rng.uniform(0.0, 0.9 * threshold)));
  return y;
}

}  // namespace

TEST_CASE("pair_label examples") {
  {
    const std::vector<double> y = {2.2, 0.6};
    const PairMatrix pairs = pair_label(y, 0.5);
    CHECK_FALSE(pairs.same(0, 1));
    CHECK(pairs.gap(0, 1) == doctest::Approx(1.6).epsilon(1e-12));
  }
  {
    const std::vector<double> y = {1.25, 1.25};
    const PairMatrix pairs = pair_label(y, 0.5);
    CHECK(pairs.same(0, 1));
    CHECK(pairs.gap(0, 1) == 0.0);
  }
  {
    const std::vector<double> y = {3.0, -3.0};
    const PairMatrix pairs = pair_label(y, 0.5);
    CHECK_FALSE(pairs.same(0, 1));
    CHECK(pairs.gap(0, 1) == 6.0);
  }
  CHECK_THROWS_AS(pair_label(std::vector<double>{1.0}, 0.5), ContractError);
}

TEST_CASE("pair matrix is symmetric with unit diagonal") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> y(7);
    for (auto& v : y) v = rng.uniform(-3.0, 3.0);
    const PairMatrix pairs = pair_label(y, 0.5);
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(pairs.same(i, i));
      CHECK(pairs.gap(i, i) == 0.0);
      for (std::size_t j = 0; j < 7; ++j) {
        CHECK(pairs.same(i, j) == pairs.same(j, i));
        CHECK(pairs.gap(i, j) == pairs.gap(j, i));
        CHECK(pairs.same(i, j) == (pairs.gap(i, j) <= 0.5));
      }
    }
  }
}

TEST_CASE("mae examples") {
  const auto preds = [](std::initializer_list<double> values) {
    std::vector<Tensor> out;
    for (double v : values) out.push_back(Tensor::scalar(v));
    return out;
  };

  CHECK(mae_loss(preds({1.0, -2.0}), std::vector<double>{1.0, -2.0}).item() == 0.0);
  CHECK(mae_loss(preds({1.0, -1.0}), std::vector<double>{0.0, 0.0}).item() == 1.0);
  CHECK(mae_loss(preds({2.2, 0.6, -0.6}), std::vector<double>{3.0, 0.0, 0.0}).item() ==
        doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK_THROWS_AS(mae_loss(std::vector<Tensor>{}, std::vector<double>{}), ContractError);
}

TEST_CASE("mae subgradient is sign(pred - target)/n with sign(0) = 0") {
  Tensor x = Tensor::parameter({3}, {2.0, -1.0, 0.5});
  const std::vector<double> targets = {1.0, 0.0, 0.5};
  Tape tape;
  TapeScope scope(tape);
  std::vector<Tensor> preds;
  for (std::size_t i = 0; i < 3; ++i) preds.push_back(slice(x, i, 1));
  backward(mae_loss(preds, targets));
  CHECK(x.grad()[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(x.grad()[1] == doctest::Approx(-1.0 / 3.0).epsilon(1e-15));
  CHECK(x.grad()[2] == 0.0);
}

TEST_CASE("supervised NT-Xent spot values") {
  // Two identical vectors, both positives: the denominator is the lone
  // numerator term.
  {
    const auto h = batch_of({{1, 0}, {1, 0}});
    const PairMatrix pairs = pair_label(std::vector<double>{0.0, 0.0}, 0.5);
    CHECK(std::fabs(supervised_ntxent(h, pairs, 0.1).item()) <= 1e-12);
  }
  // Anchor with one identical positive and one orthogonal negative at tau=1.
  {
    const auto h = batch_of({{1, 0}, {1, 0}, {0, 1}});
    const PairMatrix pairs = pair_label(std::vector<double>{0.0, 0.0, 2.0}, 0.5);
    const double loss = supervised_ntxent(h, pairs, 1.0).item();
    CHECK(loss == doctest::Approx(0.31326168751822286).epsilon(1e-9));
  }
}

TEST_CASE("contrastive losses raise on batches without positives") {
  const auto h = batch_of({{1, 0}, {0, 1}, {-1, 0}});
  const std::vector<double> y = {-3.0, 0.0, 3.0};
  const PairMatrix pairs = pair_label(y, 0.5);
  CHECK_THROWS_AS(supervised_ntxent(h, pairs, 1.0), EmptyPositiveError);
  CHECK_THROWS_AS(arccos_loss(h, pairs, 1.0, 0.1), EmptyPositiveError);
  CHECK_THROWS_AS(suparc_loss(h, y, pairs, 1.0, 0.1), EmptyPositiveError);
}

TEST_CASE("arccos loss spot values and margin ordering") {
  const auto h = batch_of({{1, 0}, {1, 0}, {0, 1}});
  const PairMatrix pairs = pair_label(std::vector<double>{0.0, 0.0, 2.0}, 0.5);

  const double at_zero = arccos_loss(h, pairs, 1.0, 0.0).item();
  CHECK(at_zero == doctest::Approx(0.31326168751822286).epsilon(1e-6));

  // Closed form with the arccos clamp: theta_pos = acos(1 - 1e-7).
  const double cp = std::cos(std::acos(1.0 - 1e-7) + 0.5);
  const double oracle = std::log(std::exp(cp) + std::exp(std::cos(std::acos(0.0)))) - cp;
  const double at_half = arccos_loss(h, pairs, 1.0, 0.5).item();
  CHECK(at_half == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(at_half == doctest::Approx(std::log1p(std::exp(-std::cos(0.5)))).epsilon(3e-4));
  CHECK(at_half > at_zero);
}

TEST_CASE("suparc spot values: margin scales with the sentiment gap") {
  const auto h = batch_of({{1, 0}, {1, 0}, {0, 1}});

  // Gap 2 with m=0.5 turns the orthogonal negative's angle into pi/2 - 1.
  {
    const std::vector<double> y = {0.0, 0.0, 2.0};
    const PairMatrix pairs = pair_label(y, 0.5);
    const double loss = suparc_loss(h, y, pairs, 1.0, 0.5).item();
    CHECK(loss == doctest::Approx(0.6170208200172538).epsilon(1e-6));

    const double cp = 1.0 - 1e-7;  // cos(acos(1 - 1e-7))
    const double shifted = std::cos(std::acos(0.0) - 1.0);
    const double oracle = std::log(std::exp(cp) + std::exp(shifted)) - cp;
    CHECK(loss == doctest::Approx(oracle).epsilon(1e-12));
  }
  // Gap 4 drives theta - m*delta past the clamp at 0, maximizing the
  // negative's weight; the loss must exceed the gap-2 value.
  {
    const std::vector<double> y = {-2.0, -2.0, 2.0};
    const PairMatrix pairs = pair_label(y, 0.5);
    const double loss = suparc_loss(h, y, pairs, 1.0, 0.5).item();
    CHECK(loss == doctest::Approx(0.6931472305599464).epsilon(1e-9));
    CHECK(loss > 0.6170208200172538);
  }
}

TEST_CASE("suparc rejects a pair matrix built from different labels") {
  const auto h = batch_of({{1, 0}, {1, 0}});
  const PairMatrix pairs = pair_label(std::vector<double>{0.0, 0.1}, 0.5);
  const std::vector<double> other = {0.0, 0.3};
  CHECK_THROWS_AS(suparc_loss(h, other, pairs, 1.0, 0.1), ContractError);
}

TEST_CASE("suparc at m=0 equals the arccos loss at m=0") {
  Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const auto h = random_batch(rng, 5, 4);
    const auto y = labels_with_positive(rng, 5, 0.5);
    const PairMatrix pairs = pair_label(y, 0.5);
    const double a = arccos_loss(h, pairs, 0.3, 0.0).item();
    const double s = suparc_loss(h, y, pairs, 0.3, 0.0).item();
    CHECK(std::fabs(a - s) <= 1e-12);
  }
}

TEST_CASE("contrastive losses are invariant to positive row rescaling") {
  Rng rng(512);
  for (int trial = 0; trial < 20; ++trial) {
    const auto h = random_batch(rng, 5, 4);
    const auto y = labels_with_positive(rng, 5, 0.5);
    const PairMatrix pairs = pair_label(y, 0.5);

    std::vector<Tensor> rescaled;
    for (const auto& row : h) rescaled.push_back(scale(row, rng.uniform(0.05, 20.0)));

    CHECK(std::fabs(supervised_ntxent(h, pairs, 0.4).item() -
                    supervised_ntxent(rescaled, pairs, 0.4).item()) <= 1e-9);
    CHECK(std::fabs(arccos_loss(h, pairs, 0.4, 0.1).item() -
                    arccos_loss(rescaled, pairs, 0.4, 0.1).item()) <= 1e-9);
    CHECK(std::fabs(suparc_loss(h, y, pairs, 0.4, 0.1).item() -
                    suparc_loss(rescaled, y, pairs, 0.4, 0.1).item()) <= 1e-9);
  }
}

TEST_CASE("suparc is non-decreasing in the margin while the guard holds") {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    // Near-orthogonal rows keep every theta around pi/2, so m*delta <= 0.18
    // stays well inside (0, pi).
    std::vector<Tensor> h;
    for (std::size_t i = 0; i < 6; ++i) {
      std::vector<double> row(6, 0.0);
      row[i] = 1.0;
      for (auto& v : row) v += 0.1 * rng.normal();
      h.push_back(Tensor::vector(std::move(row)));
    }
    std::vector<double> y(6);
    for (auto& v : y) v = rng.uniform(0.0, 1.2);
    y[1] = y[0];
    const PairMatrix pairs = pair_label(y, 0.5);

    double previous = -1.0;
    for (double m : {0.0, 0.05, 0.1, 0.15}) {
      const double value = suparc_loss(h, y, pairs, 0.4, m).item();
      CHECK(value >= previous - 1e-12);
      previous = value;
    }
  }
}

TEST_CASE("triplet loss spot cases") {
  Tensor h = Tensor::vector({0.3, -0.7, 1.1, 0.4});
  const std::array<Tensor, 3> identical = {h, h, h};

  // All seven vectors identical: six hinge terms of exactly m_tri each.
  CHECK(triplet_modalities_loss(h, identical, identical, 0.2).item() ==
        doctest::Approx(1.2).epsilon(1e-15));
  // With a margin that is exact in binary the total is bit-exact too.
  CHECK(triplet_modalities_loss(h, identical, identical, 0.25).item() == 1.5);
  CHECK(triplet_modalities_loss(h, identical, identical, 0.0).item() == 0.0);

  // Margin satisfied: singles aligned with h, doubles orthogonal.
  Tensor aligned = Tensor::vector({1.0, 0.0});
  Tensor orthogonal = Tensor::vector({0.0, 1.0});
  const std::array<Tensor, 3> singles = {aligned, aligned, aligned};
  const std::array<Tensor, 3> doubles = {orthogonal, orthogonal, orthogonal};
  CHECK(triplet_modalities_loss(aligned, singles, doubles, 0.2).item() == 0.0);

  Tensor zero = Tensor::vector({0.0, 0.0});
  CHECK_THROWS_AS(triplet_modalities_loss(zero, singles, doubles, 0.2),
                  DegenerateInputError);
}

TEST_CASE("triplet loss is non-negative and zero when the margin is met") {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Tensor> rows;
    for (int i = 0; i < 7; ++i) {
      std::vector<double> row(5);
      for (auto& v : row) v = rng.normal();
      rows.push_back(Tensor::vector(std::move(row)));
    }
    const std::array<Tensor, 3> singles = {rows[1], rows[2], rows[3]};
    const std::array<Tensor, 3> doubles = {rows[4], rows[5], rows[6]};
    const double m_tri = 0.2;
    const double value = triplet_modalities_loss(rows[0], singles, doubles, m_tri).item();
    CHECK(value >= 0.0);

    double worst = 1e300;
    for (int x = 0; x < 3; ++x) {
      for (int pair = 0; pair < 3; ++pair) {
        // Ordered pairs (x, y); pair indexes {t,v},{t,a},{v,a}.
        const int lo = pair == 2 ? 1 : 0;
        const int hi = pair == 0 ? 1 : 2;
        if (x != lo && x != hi) continue;
        const double s_single = cosine_similarity(rows[0], singles[x]).item();
        const double s_double = cosine_similarity(rows[0], doubles[pair]).item();
        worst = std::min(worst, s_single - s_double);
      }
    }
    if (worst >= m_tri) CHECK(value == 0.0);
    if (value == 0.0) CHECK(worst >= m_tri - 1e-12);
  }
}

TEST_CASE("total loss composition") {
  Tensor main = Tensor::scalar(0.5);
  Tensor contrastive = Tensor::scalar(0.3);
  Tensor triplet = Tensor::scalar(1.2);

  Tensor plain = total_loss(main, contrastive, triplet, 0.0, 0.0);
  CHECK(plain.data() == main.data());  // exactly the main term, not a copy

  CHECK(total_loss(main, contrastive, triplet, 0.1, 0.1).item() ==
        doctest::Approx(0.65).epsilon(1e-12));

  // A skipped contrastive batch contributes exactly zero.
  Tensor skipped = Tensor::scalar(0.0);
  CHECK(total_loss(main, skipped, triplet, 0.1, 0.1).item() ==
        doctest::Approx(0.5 + 0.12).epsilon(1e-12));

  CHECK_THROWS_AS(total_loss(Tensor::scalar(std::nan("")), contrastive, triplet, 0.1, 0.1),
                  NumericError);
}

TEST_CASE("loss config validation") {
  LossConfig config;
  CHECK_NOTHROW(config.validate());
  config.tau = 0.0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = {};
  config.margin_m = -0.1;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = {};
  config.threshold_th = 0.0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
  config = {};
  config.m_tri = -1.0;
  CHECK_THROWS_AS(config.validate(), ConfigError);
}

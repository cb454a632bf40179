#include "suparc/losses.hpp"

#include <cmath>
#include <string>

#include "suparc/errors.hpp"

namespace suparc {

namespace {

constexpr double kPi = 3.14159265358979323846;

void check_batch(std::span<const Tensor> h, const PairMatrix& pairs, double tau) {
  if (tau <= 0.0) throw ConfigError("contrastive loss: tau must be > 0");
  if (h.size() != pairs.n) {
    throw ContractError("contrastive loss: batch size " + std::to_string(h.size()) +
                        " does not match pair matrix of " + std::to_string(pairs.n));
  }
  if (h.size() < 2) throw ContractError("contrastive loss: need at least 2 samples");
}

// Upper triangle of pairwise cosine similarities, mirrored on read.
class SimilarityTable {
 public:
  explicit SimilarityTable(std::span<const Tensor> h) : n_(h.size()), sims_(n_ * n_) {
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i + 1; j < n_; ++j) {
        sims_[i * n_ + j] = cosine_similarity(h[i], h[j]);
      }
    }
  }

  const Tensor& at(std::size_t i, std::size_t j) const {
    return i < j ? sims_[i * n_ + j] : sims_[j * n_ + i];
  }

 private:
  std::size_t n_;
  std::vector<Tensor> sims_;
};

Tensor average_terms(const std::vector<Tensor>& terms) {
  if (terms.empty()) {
    throw EmptyPositiveError("contrastive loss: no anchor has an in-batch positive");
  }
  Tensor total = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
  return scale(total, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

void LossConfig::validate() const {
  if (tau <= 0.0) throw ConfigError("LossConfig: tau must be > 0");
  if (margin_m < 0.0) throw ConfigError("LossConfig: margin_m must be >= 0");
  if (threshold_th <= 0.0) throw ConfigError("LossConfig: threshold_TH must be > 0");
  if (m_tri < 0.0) throw ConfigError("LossConfig: m_tri must be >= 0");
}

PairMatrix pair_label(std::span<const double> y, double threshold) {
  if (y.size() < 2) throw ContractError("pair_label: need at least 2 samples");
  PairMatrix pairs;
  pairs.n = y.size();
  pairs.same_class.assign(pairs.n * pairs.n, 0);
  pairs.delta.assign(pairs.n * pairs.n, 0.0);
  for (std::size_t i = 0; i < pairs.n; ++i) {
    for (std::size_t j = 0; j < pairs.n; ++j) {
      const double gap = std::fabs(y[i] - y[j]);
      pairs.delta[i * pairs.n + j] = gap;
      pairs.same_class[i * pairs.n + j] = gap <= threshold ? 1 : 0;
    }
  }
  return pairs;
}

Tensor mae_loss(std::span<const Tensor> predictions, std::span<const double> targets) {
  if (predictions.empty()) throw ContractError("mae_loss: empty batch");
  if (predictions.size() != targets.size()) {
    throw ContractError("mae_loss: " + std::to_string(predictions.size()) +
                        " predictions vs " + std::to_string(targets.size()) + " targets");
  }
  std::vector<Tensor> flat(predictions.begin(), predictions.end());
  Tensor stacked = concat(flat);
  Tensor target = Tensor::vector({targets.begin(), targets.end()});
  return mean(abs(sub(stacked, target)));
}

Tensor supervised_ntxent(std::span<const Tensor> h, const PairMatrix& pairs, double tau) {
  check_batch(h, pairs, tau);
  const std::size_t n = h.size();
  SimilarityTable sims(h);
  const double inv_tau = 1.0 / tau;

  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < n; ++i) {
    bool has_positive = false;
    for (std::size_t j = 0; j < n && !has_positive; ++j) {
      has_positive = j != i && pairs.same(i, j);
    }
    if (!has_positive) continue;

    // Denominator over every j != i, shared by all positives of this anchor.
    Tensor denom;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      Tensor term = exp(scale(sims.at(i, j), inv_tau));
      denom = denom.defined() ? add(denom, term) : term;
    }
    Tensor log_denom = log(denom);
    for (std::size_t p = 0; p < n; ++p) {
      if (p == i || !pairs.same(i, p)) continue;
      terms.push_back(sub(log_denom, scale(sims.at(i, p), inv_tau)));
    }
  }
  return average_terms(terms);
}

Tensor arccos_loss(std::span<const Tensor> h, const PairMatrix& pairs, double tau,
                   double margin) {
  check_batch(h, pairs, tau);
  if (margin < 0.0) throw ConfigError("arccos_loss: margin must be >= 0");
  const std::size_t n = h.size();
  SimilarityTable sims(h);
  const double inv_tau = 1.0 / tau;

  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < n; ++i) {
    // Negative part of the denominator: true negatives only.
    Tensor negatives;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || pairs.same(i, j)) continue;
      Tensor term = exp(scale(cos(arccos(sims.at(i, j))), inv_tau));
      negatives = negatives.defined() ? add(negatives, term) : term;
    }
    for (std::size_t p = 0; p < n; ++p) {
      if (p == i || !pairs.same(i, p)) continue;
      Tensor margined = cos(add(arccos(sims.at(i, p)), Tensor::scalar(margin)));
      Tensor exponent = scale(margined, inv_tau);
      Tensor numerator = exp(exponent);
      Tensor denom = negatives.defined() ? add(numerator, negatives) : numerator;
      terms.push_back(sub(log(denom), exponent));
    }
  }
  return average_terms(terms);
}

Tensor suparc_loss(std::span<const Tensor> h, std::span<const double> y,
                   const PairMatrix& pairs, double tau, double margin) {
  check_batch(h, pairs, tau);
  if (margin < 0.0) throw ConfigError("suparc_loss: margin must be >= 0");
  if (y.size() != pairs.n) {
    throw ContractError("suparc_loss: label count does not match pair matrix");
  }
  for (std::size_t i = 0; i < pairs.n; ++i) {
    for (std::size_t j = 0; j < pairs.n; ++j) {
      if (pairs.gap(i, j) != std::fabs(y[i] - y[j])) {
        throw ContractError("suparc_loss: pair matrix was not built from these labels");
      }
    }
  }

  const std::size_t n = h.size();
  SimilarityTable sims(h);
  const double inv_tau = 1.0 / tau;

  std::vector<Tensor> terms;
  for (std::size_t i = 0; i < n; ++i) {
    // Each negative's angle is widened by margin*delta before the cosine;
    // the clamp to [0, pi] stops extreme gaps from wrapping cosine upward.
    Tensor negatives;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i || pairs.same(i, j)) continue;
      Tensor shifted = sub(arccos(sims.at(i, j)), Tensor::scalar(margin * pairs.gap(i, j)));
      Tensor term = exp(scale(cos(clamp(shifted, 0.0, kPi)), inv_tau));
      negatives = negatives.defined() ? add(negatives, term) : term;
    }
    for (std::size_t p = 0; p < n; ++p) {
      if (p == i || !pairs.same(i, p)) continue;
      Tensor exponent = scale(cos(arccos(sims.at(i, p))), inv_tau);
      Tensor numerator = exp(exponent);
      Tensor denom = negatives.defined() ? add(numerator, negatives) : numerator;
      terms.push_back(sub(log(denom), exponent));
    }
  }
  return average_terms(terms);
}

Tensor triplet_modalities_loss(const Tensor& fused, const std::array<Tensor, 3>& singles,
                               const std::array<Tensor, 3>& doubles, double m_tri) {
  if (m_tri < 0.0) throw ConfigError("triplet_modalities_loss: m_tri must be >= 0");

  std::array<Tensor, 3> single_sim;  // s(h, h_without_x), x in {t, v, a}
  for (std::size_t x = 0; x < 3; ++x) single_sim[x] = cosine_similarity(fused, singles[x]);
  std::array<Tensor, 3> double_sim;  // pair order {t,v}, {t,a}, {v,a}
  for (std::size_t p = 0; p < 3; ++p) double_sim[p] = cosine_similarity(fused, doubles[p]);

  // Unordered pair index for the masked pair {x, y}.
  const auto pair_index = [](std::size_t x, std::size_t y) -> std::size_t {
    const std::size_t lo = std::min(x, y);
    const std::size_t hi = std::max(x, y);
    if (lo == 0) return hi == 1 ? 0 : 1;
    return 2;
  };

  Tensor total;
  for (std::size_t x = 0; x < 3; ++x) {
    for (std::size_t y = 0; y < 3; ++y) {
      if (x == y) continue;
      Tensor hinge = relu(add(sub(double_sim[pair_index(x, y)], single_sim[x]),
                              Tensor::scalar(m_tri)));
      total = total.defined() ? add(total, hinge) : hinge;
    }
  }
  return total;
}

Tensor total_loss(const Tensor& main, const Tensor& contrastive, const Tensor& triplet,
                  double alpha, double beta) {
  if (!std::isfinite(main.item())) throw NumericError("total_loss: main term is not finite");
  Tensor total = main;
  if (alpha != 0.0) {
    if (!contrastive.defined()) throw ContractError("total_loss: contrastive term missing");
    if (!std::isfinite(contrastive.item())) {
      throw NumericError("total_loss: contrastive term is not finite");
    }
    total = add(total, scale(contrastive, alpha));
  }
  if (beta != 0.0) {
    if (!triplet.defined()) throw ContractError("total_loss: triplet term missing");
    if (!std::isfinite(triplet.item())) {
      throw NumericError("total_loss: triplet term is not finite");
    }
    total = add(total, scale(triplet, beta));
  }
  return total;
}

}  // namespace suparc

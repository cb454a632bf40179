#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "suparc/tensor.hpp"

namespace suparc {

/// Every scalar the training objectives need.
struct LossConfig {
  double tau = 0.1;           // contrastive temperature, > 0
  double margin_m = 0.15;     // radians of angular margin per unit of sentiment difference
  double threshold_th = 0.5;  // |y_i - y_j| at or below this makes a pair same-class
  double m_tri = 0.2;         // similarity margin of the modality triplet loss
  double alpha = 0.1;         // weight of the contrastive term
  double beta = 0.1;          // weight of the triplet term

  void validate() const;  // ConfigError on violation
};

/// Pairwise same-class labels and sentiment gaps, both n×n row-major.
/// Symmetric; the diagonal of same_class is 1 and of delta is 0.
struct PairMatrix {
  std::size_t n = 0;
  std::vector<std::uint8_t> same_class;  // t_ij = 1 iff delta_ij <= threshold
  std::vector<double> delta;             // |y_i - y_j|

  bool same(std::size_t i, std::size_t j) const { return same_class[i * n + j] != 0; }
  double gap(std::size_t i, std::size_t j) const { return delta[i * n + j]; }
};

PairMatrix pair_label(std::span<const double> y, double threshold);

/// Mean absolute error over per-sample scalar predictions. The subgradient
/// is sign(pred - target)/n with sign(0) = 0.
Tensor mae_loss(std::span<const Tensor> predictions, std::span<const double> targets);

// The contrastive objectives below take the batch of fusion vectors as one
// tensor per row. Each averages over all (anchor, positive) pairs; anchors
// with no in-batch positive are skipped, and EmptyPositiveError is raised
// when no anchor has one (callers treat the batch's term as zero).

/// -log( e^{sim(h_i,h_p)/tau} / sum_{j != i} e^{sim(h_i,h_j)/tau} ) with
/// cosine similarity; the denominator runs over every other sample.
Tensor supervised_ntxent(std::span<const Tensor> h, const PairMatrix& pairs, double tau);

/// Fixed-margin angular objective:
/// -log( e^{cos(theta_ip + m)/tau} / (e^{cos(theta_ip + m)/tau} +
///        sum_{j: t_ij=0} e^{cos(theta_ij)/tau}) ).
Tensor arccos_loss(std::span<const Tensor> h, const PairMatrix& pairs, double tau,
                   double margin);

/// Margin scaled by the sentiment gap of each negative pair:
/// -log( e^{cos(theta_ip)/tau} / (e^{cos(theta_ip)/tau} +
///        sum_{j: t_ij=0} e^{cos(theta_ij - m*delta_ij)/tau}) ),
/// with theta_ij - m*delta_ij clamped to [0, pi] before the cosine.
/// `y` must be the labels the pair matrix was built from.
Tensor suparc_loss(std::span<const Tensor> h, std::span<const double> y,
                   const PairMatrix& pairs, double tau, double margin);

/// One-sample modality triplet objective. `singles[x]` is the fusion with
/// modality x masked, `doubles[p]` the fusion with the pair p masked
/// (pair order: {t,v}, {t,a}, {v,a}). Sums the hinge
/// max(0, s(h, h_without_xy) - s(h, h_without_x) + m_tri) over the six
/// ordered modality pairs; callers average over the batch.
Tensor triplet_modalities_loss(const Tensor& fused, const std::array<Tensor, 3>& singles,
                               const std::array<Tensor, 3>& doubles, double m_tri);

/// main + alpha*contrastive + beta*triplet. With alpha == beta == 0 the main
/// term is returned unchanged, so the totals agree exactly.
Tensor total_loss(const Tensor& main, const Tensor& contrastive, const Tensor& triplet,
                  double alpha, double beta);

}  // namespace suparc

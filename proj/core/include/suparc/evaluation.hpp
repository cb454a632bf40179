#pragma once

#include <span>
#include <string>
#include <vector>

#include "suparc/data.hpp"
#include "suparc/model.hpp"

namespace suparc {

/// The standard regression-and-classification metric suite. acc7 bins both
/// sides by round-and-clamp onto the integers -3..3. The non-neg variants
/// treat zero as non-negative over all samples; the pos variants use a
/// strict positive class and skip samples with y == 0. F1 is binary with
/// positive sentiment as the positive label.
struct MetricsBundle {
  double mae = 0.0;
  double corr = 0.0;
  double acc7 = 0.0;
  double acc2_nonneg = 0.0;
  double f1_nonneg = 0.0;
  double acc2_pos = 0.0;
  double f1_pos = 0.0;
  bool corr_degenerate = false;  // constant predictions or labels; corr reported as 0
  bool pos_degenerate = false;   // no samples with y != 0; pos metrics reported as 0
};

MetricsBundle compute_metrics(std::span<const double> predicted,
                              std::span<const double> actual);

std::string metrics_to_json(const MetricsBundle& metrics);

/// Principal components by power iteration with deflation (tolerance 1e-9,
/// at most 1000 iterations per component). Coordinates are n×k row-major;
/// explained_variance holds each component's share of the total variance.
/// Components beyond the data's rank are zero-filled. Sign convention: each
/// component's largest-magnitude loading is positive.
struct PcaResult {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<double> coordinates;
  std::vector<double> explained_variance;
  std::vector<std::size_t> iterations;  // per component, for convergence checks
};

PcaResult pca_project(std::span<const double> data, std::size_t n, std::size_t d,
                      std::size_t k = 2);

/// Spearman rank correlation between pairwise cosine distance (1 - cos) and
/// pairwise label difference |y_i - y_j| over all i<j pairs, deterministically
/// strided down to at most 100k pairs. Requires n >= 10.
struct GeometryScore {
  double value = 0.0;
  bool degenerate = false;  // constant distances or gaps
};

GeometryScore geometry_score(std::span<const double> fusion_vectors, std::size_t n,
                             std::size_t d, std::span<const double> y);

/// Detached predictions over a whole dataset (no gradient tracking).
std::vector<double> predict_dataset(const FusionModel& model, const Dataset& dataset);

/// Detached fusion vectors for one mask variant, n×rep_dim row-major.
std::vector<double> fusion_vectors(const FusionModel& model, const Dataset& dataset,
                                   const ModalityMask& mask);

/// The seven export variants: full, mask-t, mask-v, mask-a, mask-tv,
/// mask-ta, mask-va.
std::vector<std::string> all_variant_names();
ModalityMask parse_variant(const std::string& name);  // ConfigError on unknown name

/// Writes one CSV (columns id, variant, y, pc1, pc2) with each variant's
/// fusion vectors PCA-projected independently. When svg_path is non-empty,
/// also writes a self-contained scatter, one panel per variant, points
/// colored from blue (-3) through gray (0) to red (+3) by label.
void export_embeddings(const FusionModel& model, const Dataset& dataset,
                       std::span<const std::string> variants, const std::string& csv_path,
                       const std::string& svg_path = "");

}  // namespace suparc

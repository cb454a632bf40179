#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "suparc/data.hpp"
#include "suparc/evaluation.hpp"
#include "suparc/losses.hpp"
#include "suparc/model.hpp"

namespace suparc {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t epochs = 12;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  LossConfig loss;
  double weight_decay = 0.01;
  double grad_clip_norm = 5.0;

  void validate() const;
};

/// Adaptive-moment state with decoupled weight decay. Slots are parallel to
/// FusionModel::parameters() order.
struct OptimizerState {
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Moments> slots;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

OptimizerState init_optimizer(const FusionModel& model);

/// Scales all gradients so their global L2 norm is at most max_norm.
/// Returns the pre-clip norm.
double clip_global_norm(const std::vector<std::pair<std::string, Tensor>>& parameters,
                        double max_norm);

struct StepLosses {
  double main = 0.0;
  double contrastive = 0.0;
  double triplet = 0.0;
  double total = 0.0;
  bool contrastive_skipped = false;  // batch had no positive pair
};

/// One optimization step on a batch of dataset indices: forward, total loss,
/// backward, gradient clip, update. The masked fusion passes are skipped
/// entirely when beta == 0, and pair labeling when alpha == 0. A non-finite
/// loss aborts with a NumericError naming the offending component.
StepLosses train_step(FusionModel& model, const Dataset& dataset,
                      std::span<const std::size_t> batch, const TrainConfig& config,
                      OptimizerState& optimizer);

struct EpochReport {
  std::size_t epoch = 0;
  double mean_main = 0.0;
  double mean_contrastive = 0.0;
  double mean_triplet = 0.0;
  double mean_total = 0.0;
  MetricsBundle validation;
  double wall_seconds = 0.0;
};

/// JSON line for the run log. Deliberately omits wall_seconds so identical
/// runs produce byte-identical logs.
std::string epoch_report_to_json(const EpochReport& report);

struct FitResult {
  FusionModel best_model;  // parameters at the best validation MAE
  std::vector<EpochReport> reports;
  std::size_t total_steps = 0;
  std::size_t best_epoch = 0;
  double best_validation_mae = 0.0;
};

FitResult fit(const FusionModel& initial, const Dataset& train, const Dataset& valid,
              const TrainConfig& config);

struct AblationRow {
  std::string name;  // full | no-suparc | no-tri | neither
  double alpha = 0.0;
  double beta = 0.0;
  MetricsBundle test_metrics;
  GeometryScore geometry;  // of the test-split fusion vectors
  std::vector<EpochReport> reports;
};

/// Trains four models from the same seed: full, alpha=0, beta=0, and both
/// zero; scores each on the test split.
std::vector<AblationRow> ablate(const EncoderConfig& encoder, const TrainConfig& base,
                                const Dataset& train, const Dataset& valid,
                                const Dataset& test);

std::string ablation_table_text(std::span<const AblationRow> rows);
std::string ablation_table_json(std::span<const AblationRow> rows);

}  // namespace suparc

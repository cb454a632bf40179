#include "suparc/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"
#include "suparc/errors.hpp"
#include "suparc/log.hpp"

namespace suparc {

void TrainConfig::validate() const {
  if (lr <= 0.0) throw ConfigError("TrainConfig: lr must be > 0");
  if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
  if (batch_size < 2) {
    throw ConfigError("TrainConfig: batch_size must be >= 2; the contrastive losses "
                      "need at least one candidate pair per batch");
  }
  if (weight_decay < 0.0) throw ConfigError("TrainConfig: weight_decay must be >= 0");
  if (grad_clip_norm <= 0.0) throw ConfigError("TrainConfig: grad_clip_norm must be > 0");
  loss.validate();
}

OptimizerState init_optimizer(const FusionModel& model) {
  OptimizerState state;
  for (const auto& [name, tensor] : model.parameters()) {
    state.slots.push_back({std::vector<double>(tensor.numel(), 0.0),
                           std::vector<double>(tensor.numel(), 0.0)});
  }
  return state;
}

double clip_global_norm(const std::vector<std::pair<std::string, Tensor>>& parameters,
                        double max_norm) {
  double norm2 = 0.0;
  for (const auto& [name, tensor] : parameters) {
    for (double g : tensor.grad()) norm2 += g * g;
  }
  const double norm = std::sqrt(norm2);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (const auto& [name, tensor] : parameters) {
      auto& grad = tensor.data()->grad;
      for (auto& g : grad) g *= factor;
    }
  }
  return norm;
}

namespace {

void adamw_update(const std::vector<std::pair<std::string, Tensor>>& parameters,
                  OptimizerState& state, double lr, double weight_decay) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t slot = 0; slot < parameters.size(); ++slot) {
    auto& data = *parameters[slot].second.data();
    auto& moments = state.slots[slot];
    for (std::size_t i = 0; i < data.values.size(); ++i) {
      const double g = data.grad[i];
      moments.m[i] = state.beta1 * moments.m[i] + (1.0 - state.beta1) * g;
      moments.v[i] = state.beta2 * moments.v[i] + (1.0 - state.beta2) * g * g;
      const double update = (moments.m[i] / bc1) / (std::sqrt(moments.v[i] / bc2) + state.epsilon);
      const double old = data.values[i];
      // Decay is decoupled from the adaptive update.
      data.values[i] = old - lr * update - lr * weight_decay * old;
    }
  }
}

void check_finite(double value, const char* component) {
  if (!std::isfinite(value)) {
    throw NumericError(std::string("train_step: ") + component + " loss is not finite");
  }
}

}  // namespace

StepLosses train_step(FusionModel& model, const Dataset& dataset,
                      std::span<const std::size_t> batch, const TrainConfig& config,
                      OptimizerState& optimizer) {
  if (batch.size() < 2) throw ContractError("train_step: batch needs at least 2 samples");
  const LossConfig& loss_cfg = config.loss;

  const auto parameters = model.parameters();
  if (optimizer.slots.size() != parameters.size()) {
    throw ContractError("train_step: optimizer state does not match the model");
  }
  model.zero_grad();

  Tape tape;
  TapeScope scope(tape);

  const std::size_t n = batch.size();
  std::vector<double> targets(n);
  std::vector<Tensor> fused(n);
  std::vector<Tensor> predictions(n);
  std::vector<Representations> reps(n);
  for (std::size_t b = 0; b < n; ++b) {
    const Utterance& utterance = dataset.samples[batch[b]];
    targets[b] = utterance.y;
    reps[b] = encode_utterance(model, utterance);
    fused[b] = fuse(model, reps[b].text, reps[b].visual, reps[b].audio);
    predictions[b] = predict(model, fused[b]);
  }

  StepLosses losses;
  Tensor main = mae_loss(predictions, targets);
  losses.main = main.item();
  check_finite(losses.main, "main");

  Tensor contrastive = Tensor::scalar(0.0);
  if (loss_cfg.alpha != 0.0) {
    const PairMatrix pairs = pair_label(targets, loss_cfg.threshold_th);
    try {
      contrastive = suparc_loss(fused, targets, pairs, loss_cfg.tau, loss_cfg.margin_m);
    } catch (const EmptyPositiveError&) {
      losses.contrastive_skipped = true;
      log_debug("train_step: batch has no positive pair, contrastive term skipped");
    }
    losses.contrastive = contrastive.item();
    check_finite(losses.contrastive, "suparc");
  }

  Tensor triplet = Tensor::scalar(0.0);
  if (loss_cfg.beta != 0.0) {
    Tensor accumulated;
    for (std::size_t b = 0; b < n; ++b) {
      const std::array<Tensor, 3> singles = {
          masked_fuse(model, reps[b].text, reps[b].visual, reps[b].audio, {true, false, false}),
          masked_fuse(model, reps[b].text, reps[b].visual, reps[b].audio, {false, true, false}),
          masked_fuse(model, reps[b].text, reps[b].visual, reps[b].audio, {false, false, true}),
      };
      const std::array<Tensor, 3> doubles = {
          masked_fuse(model, reps[b].text, reps[b].visual, reps[b].audio, {true, true, false}),
          masked_fuse(model, reps[b].text, reps[b].visual, reps[b].audio, {true, false, true}),
          masked_fuse(model, reps[b].text, reps[b].visual, reps[b].audio, {false, true, true}),
      };
      Tensor sample_loss = triplet_modalities_loss(fused[b], singles, doubles, loss_cfg.m_tri);
      accumulated = accumulated.defined() ? add(accumulated, sample_loss) : sample_loss;
    }
    triplet = scale(accumulated, 1.0 / static_cast<double>(n));
    losses.triplet = triplet.item();
    check_finite(losses.triplet, "triplet");
  }

  Tensor total = total_loss(main, contrastive, triplet, loss_cfg.alpha, loss_cfg.beta);
  losses.total = total.item();
  check_finite(losses.total, "total");

  backward(total);
  clip_global_norm(parameters, config.grad_clip_norm);
  adamw_update(parameters, optimizer, config.lr, config.weight_decay);
  return losses;
}

std::string epoch_report_to_json(const EpochReport& report) {
  nlohmann::json doc;
  doc["epoch"] = report.epoch;
  doc["mean_main"] = report.mean_main;
  doc["mean_suparc"] = report.mean_contrastive;
  doc["mean_tri"] = report.mean_triplet;
  doc["mean_total"] = report.mean_total;
  doc["validation"] = nlohmann::json::parse(metrics_to_json(report.validation));
  return doc.dump();
}

FitResult fit(const FusionModel& initial, const Dataset& train, const Dataset& valid,
              const TrainConfig& config) {
  config.validate();
  if (train.size() < 2) throw ContractError("fit: training split needs at least 2 samples");
  if (valid.size() == 0) throw ContractError("fit: validation split is empty");

  FitResult result;
  FusionModel model = initial.clone();
  OptimizerState optimizer = init_optimizer(model);

  bool have_best = false;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const auto batches = make_batches(train, config.batch_size, config.seed, epoch);

    EpochReport report;
    report.epoch = epoch;
    for (const auto& batch : batches) {
      const StepLosses losses = train_step(model, train, batch, config, optimizer);
      report.mean_main += losses.main;
      report.mean_contrastive += losses.contrastive;
      report.mean_triplet += losses.triplet;
      report.mean_total += losses.total;
    }
    result.total_steps += batches.size();
    if (!batches.empty()) {
      const double inv = 1.0 / static_cast<double>(batches.size());
      report.mean_main *= inv;
      report.mean_contrastive *= inv;
      report.mean_triplet *= inv;
      report.mean_total *= inv;
    }

    report.validation = compute_metrics(predict_dataset(model, valid), [&valid] {
      std::vector<double> y;
      y.reserve(valid.size());
      for (const auto& s : valid.samples) y.push_back(s.y);
      return y;
    }());
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.reports.push_back(report);

    if (!have_best || report.validation.mae < result.best_validation_mae) {
      have_best = true;
      result.best_validation_mae = report.validation.mae;
      result.best_epoch = epoch;
      result.best_model = model.clone();
    }

    {
      std::ostringstream line;
      line << "epoch " << epoch << "/" << config.epochs << " total " << report.mean_total
           << " val-mae " << report.validation.mae << " (" << report.wall_seconds << "s)";
      log_info(line.str());
    }
  }
  return result;
}

std::vector<AblationRow> ablate(const EncoderConfig& encoder, const TrainConfig& base,
                                const Dataset& train, const Dataset& valid,
                                const Dataset& test) {
  base.validate();
  if (test.size() < 10) throw ContractError("ablate: test split needs at least 10 samples");

  struct Setting {
    const char* name;
    double alpha;
    double beta;
  };
  const Setting settings[] = {
      {"full", base.loss.alpha, base.loss.beta},
      {"no-suparc", 0.0, base.loss.beta},
      {"no-tri", base.loss.alpha, 0.0},
      {"neither", 0.0, 0.0},
  };

  std::vector<double> y_test;
  y_test.reserve(test.size());
  for (const auto& s : test.samples) y_test.push_back(s.y);

  std::vector<AblationRow> rows;
  for (const auto& setting : settings) {
    log_info(std::string("ablate: training variant '") + setting.name + "'");
    TrainConfig config = base;
    config.loss.alpha = setting.alpha;
    config.loss.beta = setting.beta;

    // Fresh model and optimizer per run, same seed everywhere.
    const FusionModel initial = init_params(encoder, config.seed);
    FitResult fit_result = fit(initial, train, valid, config);

    AblationRow row;
    row.name = setting.name;
    row.alpha = setting.alpha;
    row.beta = setting.beta;
    row.test_metrics = compute_metrics(predict_dataset(fit_result.best_model, test), y_test);
    const std::vector<double> vectors = fusion_vectors(fit_result.best_model, test, {});
    row.geometry = geometry_score(vectors, test.size(), encoder.rep_dim, y_test);
    row.reports = std::move(fit_result.reports);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string ablation_table_text(std::span<const AblationRow> rows) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-10s %7s %7s %7s %15s %15s %9s\n", "run", "MAE",
                "Corr", "Acc-7", "Acc-2(nn/pos)", "F1(nn/pos)", "geometry");
  out << line;
  for (const auto& row : rows) {
    char acc2[32], f1[32];
    std::snprintf(acc2, sizeof(acc2), "%.3f/%.3f", row.test_metrics.acc2_nonneg,
                  row.test_metrics.acc2_pos);
    std::snprintf(f1, sizeof(f1), "%.3f/%.3f", row.test_metrics.f1_nonneg,
                  row.test_metrics.f1_pos);
    std::snprintf(line, sizeof(line), "%-10s %7.4f %7.4f %7.4f %15s %15s %9.4f\n",
                  row.name.c_str(), row.test_metrics.mae, row.test_metrics.corr,
                  row.test_metrics.acc7, acc2, f1, row.geometry.value);
    out << line;
  }
  return out.str();
}

std::string ablation_table_json(std::span<const AblationRow> rows) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& row : rows) {
    nlohmann::json entry;
    entry["run"] = row.name;
    entry["alpha"] = row.alpha;
    entry["beta"] = row.beta;
    entry["metrics"] = nlohmann::json::parse(metrics_to_json(row.test_metrics));
    entry["geometry"] = row.geometry.value;
    entry["geometry_degenerate"] = row.geometry.degenerate;
    doc.push_back(std::move(entry));
  }
  return doc.dump(2);
}

}  // namespace suparc

// Command-line front end: data generation, training, evaluation, ablation,
// embedding export, and gradient checking over the suparc core library.
//
// Exit codes: 0 success, 1 data/config error, 2 numeric failure.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "suparc/data.hpp"
#include "suparc/errors.hpp"
#include "suparc/evaluation.hpp"
#include "suparc/gradcheck.hpp"
#include "suparc/log.hpp"
#include "suparc/losses.hpp"
#include "suparc/model.hpp"
#include "suparc/training.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;

// Config file: one flat JSON object whose keys mirror the TrainConfig and
// LossConfig field names exactly. Unknown keys are rejected.
suparc::TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw suparc::ConfigError("cannot open config file " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw suparc::ConfigError("config file " + path + ": " + e.what());
  }
  if (!doc.is_object()) throw suparc::ConfigError("config file must hold one JSON object");

  suparc::TrainConfig config;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "lr") config.lr = value.get<double>();
      else if (key == "epochs") config.epochs = value.get<std::size_t>();
      else if (key == "batch_size") config.batch_size = value.get<std::size_t>();
      else if (key == "seed") config.seed = value.get<std::uint64_t>();
      else if (key == "weight_decay") config.weight_decay = value.get<double>();
      else if (key == "grad_clip_norm") config.grad_clip_norm = value.get<double>();
      else if (key == "tau") config.loss.tau = value.get<double>();
      else if (key == "margin_m") config.loss.margin_m = value.get<double>();
      else if (key == "threshold_TH") config.loss.threshold_th = value.get<double>();
      else if (key == "m_tri") config.loss.m_tri = value.get<double>();
      else if (key == "alpha") config.loss.alpha = value.get<double>();
      else if (key == "beta") config.loss.beta = value.get<double>();
      else throw suparc::ConfigError("config file " + path + ": unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw suparc::ConfigError("config file " + path + ": " + e.what());
  }
  return config;
}

json train_config_to_json(const suparc::TrainConfig& config) {
  return json{
      {"lr", config.lr},
      {"epochs", config.epochs},
      {"batch_size", config.batch_size},
      {"seed", config.seed},
      {"weight_decay", config.weight_decay},
      {"grad_clip_norm", config.grad_clip_norm},
      {"tau", config.loss.tau},
      {"margin_m", config.loss.margin_m},
      {"threshold_TH", config.loss.threshold_th},
      {"m_tri", config.loss.m_tri},
      {"alpha", config.loss.alpha},
      {"beta", config.loss.beta},
  };
}

suparc::EncoderConfig encoder_from_header(const suparc::DatasetHeader& header) {
  suparc::EncoderConfig encoder;
  encoder.text_vocab = header.vocab_size;
  encoder.visual_in = header.d_v;
  encoder.audio_in = header.d_a;
  return encoder;  // hidden, rep_dim, embed_dim stay at their defaults
}

void write_run_log(const std::string& path, const std::vector<suparc::EpochReport>& reports) {
  std::ofstream out(path);
  if (!out) throw suparc::DataError("cannot open run log " + path);
  for (const auto& report : reports) out << suparc::epoch_report_to_json(report) << "\n";
  if (!out) throw suparc::DataError("write failed for run log " + path);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw suparc::DataError("cannot open " + path);
  out << text;
  if (!out) throw suparc::DataError("write failed for " + path);
}

// --- subcommands ---------------------------------------------------------

struct SynthArgs {
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t n = 2860;
  double conflict = 0.2;
};

int run_synth(const SynthArgs& args) {
  suparc::SyntheticConfig config;
  config.seed = args.seed;
  config.n_samples = args.n;
  config.conflict_prob = args.conflict;
  const suparc::SyntheticData data = suparc::generate_synthetic(config);

  fs::create_directories(args.out_dir);
  suparc::save_split(data.train, args.out_dir);
  suparc::save_split(data.valid, args.out_dir);
  suparc::save_split(data.test, args.out_dir);
  std::cout << json{{"train", data.train.size()},
                    {"valid", data.valid.size()},
                    {"test", data.test.size()},
                    {"dir", args.out_dir}}
                   .dump()
            << "\n";
  return kExitOk;
}

struct TrainArgs {
  std::string data_dir;
  std::string config_path;
  std::string out_dir;
  double alpha = -1.0;
  double beta = -1.0;
  std::uint64_t seed = 0;
  bool alpha_set = false;
  bool beta_set = false;
  bool seed_set = false;
};

int run_train(const TrainArgs& args) {
  suparc::TrainConfig config = load_train_config(args.config_path);
  if (args.alpha_set) config.loss.alpha = args.alpha;
  if (args.beta_set) config.loss.beta = args.beta;
  if (args.seed_set) config.seed = args.seed;
  config.validate();

  const suparc::Dataset train = suparc::load_split(args.data_dir, suparc::Split::train);
  const suparc::Dataset valid = suparc::load_split(args.data_dir, suparc::Split::valid);

  const suparc::EncoderConfig encoder = encoder_from_header(train.header);
  const suparc::FusionModel initial = suparc::init_params(encoder, config.seed);
  const suparc::FitResult result = suparc::fit(initial, train, valid, config);

  fs::create_directories(args.out_dir);
  write_run_log(args.out_dir + "/run_log.jsonl", result.reports);
  suparc::save_checkpoint(result.best_model, args.out_dir + "/checkpoint.json");
  write_text(args.out_dir + "/config.json", train_config_to_json(config).dump(2) + "\n");

  std::cout << json{{"best_epoch", result.best_epoch},
                    {"best_validation_mae", result.best_validation_mae},
                    {"steps", result.total_steps},
                    {"out", args.out_dir}}
                   .dump()
            << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string data_dir;
  std::string split = "test";
};

int run_eval(const EvalArgs& args) {
  const suparc::FusionModel model = suparc::load_checkpoint(args.checkpoint);
  const suparc::Dataset dataset =
      suparc::load_split(args.data_dir, suparc::parse_split(args.split));
  if (dataset.samples.empty()) throw suparc::DataError("eval: split is empty");

  std::vector<double> actual;
  actual.reserve(dataset.size());
  for (const auto& s : dataset.samples) actual.push_back(s.y);
  const suparc::MetricsBundle metrics =
      suparc::compute_metrics(suparc::predict_dataset(model, dataset), actual);
  std::cout << suparc::metrics_to_json(metrics) << "\n";
  return kExitOk;
}

struct AblateArgs {
  std::string data_dir;
  std::string config_path;
  std::string out_dir;
};

int run_ablate(const AblateArgs& args) {
  suparc::TrainConfig config = load_train_config(args.config_path);
  config.validate();

  const suparc::Dataset train = suparc::load_split(args.data_dir, suparc::Split::train);
  const suparc::Dataset valid = suparc::load_split(args.data_dir, suparc::Split::valid);
  const suparc::Dataset test = suparc::load_split(args.data_dir, suparc::Split::test);
  const suparc::EncoderConfig encoder = encoder_from_header(train.header);

  const std::vector<suparc::AblationRow> rows =
      suparc::ablate(encoder, config, train, valid, test);

  fs::create_directories(args.out_dir);
  for (const auto& row : rows) {
    write_run_log(args.out_dir + "/" + row.name + ".run_log.jsonl", row.reports);
  }
  const std::string table = suparc::ablation_table_text(rows);
  write_text(args.out_dir + "/table.txt", table);
  write_text(args.out_dir + "/table.json", suparc::ablation_table_json(rows) + "\n");
  std::cout << table;
  return kExitOk;
}

struct EmbedArgs {
  std::string checkpoint;
  std::string data_dir;
  std::string split = "test";
  std::string variants = "full";
  std::string out_csv;
  std::string svg;
};

int run_embed(const EmbedArgs& args) {
  const suparc::FusionModel model = suparc::load_checkpoint(args.checkpoint);
  const suparc::Dataset dataset =
      suparc::load_split(args.data_dir, suparc::parse_split(args.split));

  std::vector<std::string> variants;
  if (args.variants == "all") {
    variants = suparc::all_variant_names();
  } else {
    std::string current;
    for (char c : args.variants + ",") {
      if (c == ',') {
        if (!current.empty()) variants.push_back(current);
        current.clear();
      } else {
        current.push_back(c);
      }
    }
  }
  for (const auto& name : variants) suparc::parse_variant(name);  // validate early

  suparc::export_embeddings(model, dataset, variants, args.out_csv, args.svg);
  std::cout << json{{"rows", dataset.size() * variants.size()}, {"csv", args.out_csv}}.dump()
            << "\n";
  return kExitOk;
}

struct GradcheckArgs {
  std::size_t trials = 100;
};

int run_gradcheck(const GradcheckArgs& args) {
  const auto results = suparc::run_gradient_checks(args.trials, 20240717u);
  bool all_passed = true;
  for (const auto& result : results) {
    std::printf("%-4s %-24s max rel err %.3e over %zu cases\n",
                result.passed ? "PASS" : "FAIL", result.name.c_str(), result.max_rel_err,
                result.cases);
    all_passed = all_passed && result.passed;
  }
  std::printf("%s: %zu checks\n", all_passed ? "PASS" : "FAIL", results.size());
  return all_passed ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "suparc: multimodal sentiment fusion with angular-margin contrastive and "
      "modality-triplet objectives.\n"
      "Precedence: command-line flags override config-file keys, which override defaults."};
  app.require_subcommand(1);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic multimodal dataset");
  synth->add_option("--out", synth_args.out_dir, "Output directory")->required();
  synth->add_option("--seed", synth_args.seed, "Generator seed")->required();
  synth->add_option("--n", synth_args.n, "Total sample count (split 70/15/15)");
  synth->add_option("--conflict", synth_args.conflict, "Cross-modal conflict probability");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "Train a fusion model");
  train->add_option("--data", train_args.data_dir, "Dataset directory")->required();
  train->add_option("--config", train_args.config_path, "Flat JSON training config")->required();
  train->add_option("--out", train_args.out_dir, "Run directory")->required();
  auto* alpha_opt = train->add_option("--alpha", train_args.alpha, "Contrastive weight");
  auto* beta_opt = train->add_option("--beta", train_args.beta, "Triplet weight");
  auto* seed_opt = train->add_option("--seed", train_args.seed, "Training seed");

  EvalArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint; metrics JSON on stdout");
  eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", eval_args.data_dir, "Dataset directory")->required();
  eval->add_option("--split", eval_args.split, "train|valid|test (default test)");

  AblateArgs ablate_args;
  auto* ablate = app.add_subcommand("ablate", "Train full/no-suparc/no-tri/neither variants");
  ablate->add_option("--data", ablate_args.data_dir, "Dataset directory")->required();
  ablate->add_option("--config", ablate_args.config_path, "Flat JSON training config")->required();
  ablate->add_option("--out", ablate_args.out_dir, "Run directory")->required();

  EmbedArgs embed_args;
  auto* embed = app.add_subcommand("embed", "Export PCA-projected fusion embeddings");
  embed->add_option("--checkpoint", embed_args.checkpoint, "Checkpoint file")->required();
  embed->add_option("--data", embed_args.data_dir, "Dataset directory")->required();
  embed->add_option("--variants", embed_args.variants,
                    "Comma list of full|mask-t|mask-v|mask-a|mask-tv|mask-ta|mask-va, or 'all'");
  embed->add_option("--out", embed_args.out_csv, "Output CSV path")->required();
  embed->add_option("--svg", embed_args.svg, "Optional scatter SVG path");
  embed->add_option("--split", embed_args.split, "train|valid|test (default test)");

  GradcheckArgs gradcheck_args;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks per op and loss");
  gradcheck->add_option("--trials", gradcheck_args.trials, "Random cases per check");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return run_synth(synth_args);
    if (train->parsed()) {
      train_args.alpha_set = alpha_opt->count() > 0;
      train_args.beta_set = beta_opt->count() > 0;
      train_args.seed_set = seed_opt->count() > 0;
      return run_train(train_args);
    }
    if (eval->parsed()) return run_eval(eval_args);
    if (ablate->parsed()) return run_ablate(ablate_args);
    if (embed->parsed()) return run_embed(embed_args);
    if (gradcheck->parsed()) return run_gradcheck(gradcheck_args);
  } catch (const suparc::NumericError& e) {
    suparc::log_error(e.what());
    return kExitNumeric;
  } catch (const suparc::Error& e) {
    suparc::log_error(e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    suparc::log_error(e.what());
    return kExitUsage;
  }
  return kExitUsage;
}

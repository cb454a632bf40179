#include "suparc/model.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "json.hpp"
#include "suparc/data.hpp"
#include "suparc/errors.hpp"
#include "suparc/rng.hpp"

namespace suparc {

namespace {

// Keeps the predictor's open-interval contract even where tanh saturates to
// exactly 1.0 in floating point.
constexpr double kPredictMargin = 1e-9;

std::vector<double> uniform_values(Rng& rng, std::size_t count, double bound) {
  std::vector<double> values(count);
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return values;
}

Tensor xavier_linear(Rng& rng, std::size_t out, std::size_t in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  return Tensor::parameter({out, in}, uniform_values(rng, out * in, bound));
}

LinearLayer make_linear(Rng& rng, std::size_t out, std::size_t in) {
  return {xavier_linear(rng, out, in),
          Tensor::parameter({out}, std::vector<double>(out, 0.0))};
}

Mlp make_mlp(Rng& rng, std::size_t in, std::size_t hidden, std::size_t out) {
  return {make_linear(rng, hidden, in), make_linear(rng, out, hidden)};
}

LstmCell make_lstm(Rng& rng, std::size_t input, std::size_t hidden) {
  LstmCell cell;
  const double ih_bound = std::sqrt(6.0 / static_cast<double>(input + hidden));
  cell.w_ih = Tensor::parameter({4 * hidden, input}, uniform_values(rng, 4 * hidden * input, ih_bound));
  // Scaled uniform keeps the state-transition rows near unit norm.
  const double hh_bound = std::sqrt(3.0 / static_cast<double>(hidden));
  cell.w_hh = Tensor::parameter({4 * hidden, hidden}, uniform_values(rng, 4 * hidden * hidden, hh_bound));
  std::vector<double> b_ih(4 * hidden, 0.0);
  for (std::size_t i = hidden; i < 2 * hidden; ++i) b_ih[i] = 1.0;  // forget gate
  cell.b_ih = Tensor::parameter({4 * hidden}, std::move(b_ih));
  cell.b_hh = Tensor::parameter({4 * hidden}, std::vector<double>(4 * hidden, 0.0));
  return cell;
}

Tensor mlp_forward(const Mlp& mlp, const Tensor& x) {
  Tensor hidden = tanh(add(matmul(mlp.layer0.weight, x), mlp.layer0.bias));
  return add(matmul(mlp.layer1.weight, hidden), mlp.layer1.bias);
}

// Final hidden state of one scan direction.
Tensor lstm_final_hidden(const LstmCell& cell, const ModalityFeatures& x, bool reverse,
                         std::size_t hidden) {
  Tensor input = Tensor::from({x.length, x.width}, x.values);
  Tensor h = Tensor::zeros({hidden});
  Tensor c = Tensor::zeros({hidden});
  for (std::size_t step = 0; step < x.length; ++step) {
    const std::size_t t = reverse ? x.length - 1 - step : step;
    Tensor x_t = slice(input, t * x.width, x.width);
    Tensor gates = add(add(matmul(cell.w_ih, x_t), cell.b_ih),
                       add(matmul(cell.w_hh, h), cell.b_hh));
    Tensor in_gate = sigmoid(slice(gates, 0, hidden));
    Tensor forget_gate = sigmoid(slice(gates, hidden, hidden));
    Tensor candidate = tanh(slice(gates, 2 * hidden, hidden));
    Tensor out_gate = sigmoid(slice(gates, 3 * hidden, hidden));
    c = add(mul(forget_gate, c), mul(in_gate, candidate));
    h = mul(out_gate, tanh(c));
  }
  return h;
}

void check_rep(const char* where, const Tensor& h, std::size_t rep_dim) {
  if (!h.defined() || h.numel() != rep_dim) {
    throw ContractError(std::string(where) + ": representation width " +
                        std::to_string(h.defined() ? h.numel() : 0) + ", expected " +
                        std::to_string(rep_dim));
  }
}

}  // namespace

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::text: return "text";
    case Modality::visual: return "visual";
    case Modality::audio: return "audio";
  }
  return "?";
}

void EncoderConfig::validate() const {
  if (text_vocab == 0 || text_embed_dim == 0 || visual_in == 0 || audio_in == 0 ||
      hidden == 0 || rep_dim == 0) {
    throw ConfigError("EncoderConfig: all widths must be >= 1");
  }
}

FusionModel init_params(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  FusionModel model;
  model.config = config;

  model.text.embedding = xavier_linear(rng, config.text_vocab, config.text_embed_dim);
  model.text.mlp = make_mlp(rng, config.text_embed_dim, config.rep_dim, config.rep_dim);

  model.visual.fwd = make_lstm(rng, config.visual_in, config.hidden);
  model.visual.bwd = make_lstm(rng, config.visual_in, config.hidden);
  model.visual.projection = make_linear(rng, config.rep_dim, 2 * config.hidden);

  model.audio.fwd = make_lstm(rng, config.audio_in, config.hidden);
  model.audio.bwd = make_lstm(rng, config.audio_in, config.hidden);
  model.audio.projection = make_linear(rng, config.rep_dim, 2 * config.hidden);

  model.fusion = make_mlp(rng, 3 * config.rep_dim, config.rep_dim, config.rep_dim);
  model.predictor = make_mlp(rng, config.rep_dim, config.rep_dim, 1);
  return model;
}

std::vector<std::pair<std::string, Tensor>> FusionModel::parameters() const {
  std::vector<std::pair<std::string, Tensor>> params;
  params.reserve(38);
  const auto add_mlp = [&params](const std::string& prefix, const Mlp& mlp) {
    params.emplace_back(prefix + ".layer0.weight", mlp.layer0.weight);
    params.emplace_back(prefix + ".layer0.bias", mlp.layer0.bias);
    params.emplace_back(prefix + ".layer1.weight", mlp.layer1.weight);
    params.emplace_back(prefix + ".layer1.bias", mlp.layer1.bias);
  };
  const auto add_recurrent = [&params](const std::string& prefix, const RecurrentEncoder& enc) {
    const auto add_cell = [&params](const std::string& cell_prefix, const LstmCell& cell) {
      params.emplace_back(cell_prefix + ".w_ih", cell.w_ih);
      params.emplace_back(cell_prefix + ".w_hh", cell.w_hh);
      params.emplace_back(cell_prefix + ".b_ih", cell.b_ih);
      params.emplace_back(cell_prefix + ".b_hh", cell.b_hh);
    };
    add_cell(prefix + ".fwd", enc.fwd);
    add_cell(prefix + ".bwd", enc.bwd);
    params.emplace_back(prefix + ".projection.weight", enc.projection.weight);
    params.emplace_back(prefix + ".projection.bias", enc.projection.bias);
  };

  params.emplace_back("text.embedding", text.embedding);
  add_mlp("text.mlp", text.mlp);
  add_recurrent("visual", visual);
  add_recurrent("audio", audio);
  add_mlp("fusion", fusion);
  add_mlp("predictor", predictor);
  return params;
}

void FusionModel::zero_grad() const {
  for (auto& [path, tensor] : parameters()) {
    Tensor t = tensor;
    t.zero_grad();
  }
}

FusionModel FusionModel::clone() const {
  FusionModel copy = *this;
  const auto deep = [](Tensor& t) {
    t = Tensor::parameter(t.shape(), {t.values().begin(), t.values().end()});
  };
  deep(copy.text.embedding);
  for (Mlp* mlp : {&copy.text.mlp, &copy.fusion, &copy.predictor}) {
    deep(mlp->layer0.weight);
    deep(mlp->layer0.bias);
    deep(mlp->layer1.weight);
    deep(mlp->layer1.bias);
  }
  for (RecurrentEncoder* enc : {&copy.visual, &copy.audio}) {
    for (LstmCell* cell : {&enc->fwd, &enc->bwd}) {
      deep(cell->w_ih);
      deep(cell->w_hh);
      deep(cell->b_ih);
      deep(cell->b_hh);
    }
    deep(enc->projection.weight);
    deep(enc->projection.bias);
  }
  return copy;
}

Tensor encode_text(const FusionModel& model, std::span<const int> tokens) {
  if (tokens.empty()) throw DataError("encode_text: empty token sequence");
  const std::size_t embed_dim = model.config.text_embed_dim;
  Tensor pooled;
  for (int id : tokens) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.config.text_vocab) {
      throw DataError("encode_text: token id " + std::to_string(id) +
                      " outside vocabulary of " + std::to_string(model.config.text_vocab));
    }
    Tensor row = slice(model.text.embedding, static_cast<std::size_t>(id) * embed_dim, embed_dim);
    pooled = pooled.defined() ? add(pooled, row) : row;
  }
  pooled = scale(pooled, 1.0 / static_cast<double>(tokens.size()));
  return mlp_forward(model.text.mlp, pooled);
}

Tensor encode_text(const FusionModel& model, std::span<const double> text_vector) {
  if (text_vector.size() != model.config.text_embed_dim) {
    throw DataError("encode_text: vector width " + std::to_string(text_vector.size()) +
                    ", expected " + std::to_string(model.config.text_embed_dim));
  }
  Tensor input = Tensor::vector({text_vector.begin(), text_vector.end()});
  return mlp_forward(model.text.mlp, input);
}

Tensor encode_recurrent(const FusionModel& model, const ModalityFeatures& features) {
  if (features.modality == Modality::text) {
    throw ContractError("encode_recurrent: text goes through encode_text");
  }
  const bool is_visual = features.modality == Modality::visual;
  const std::size_t expected = is_visual ? model.config.visual_in : model.config.audio_in;
  if (features.width != expected) {
    throw DataError(std::string("encode_recurrent: ") + modality_name(features.modality) +
                    " width " + std::to_string(features.width) + ", expected " +
                    std::to_string(expected));
  }
  if (features.length == 0) throw DataError("encode_recurrent: empty sequence");
  if (features.values.size() != features.length * features.width) {
    throw DataError("encode_recurrent: value count does not match length x width");
  }

  const RecurrentEncoder& encoder = is_visual ? model.visual : model.audio;
  Tensor h_fwd = lstm_final_hidden(encoder.fwd, features, false, model.config.hidden);
  Tensor h_bwd = lstm_final_hidden(encoder.bwd, features, true, model.config.hidden);
  const std::array<Tensor, 2> both = {h_fwd, h_bwd};
  Tensor joined = concat(std::span<const Tensor>(both.data(), both.size()));
  return add(matmul(encoder.projection.weight, joined), encoder.projection.bias);
}

Tensor fuse(const FusionModel& model, const Tensor& h_text, const Tensor& h_visual,
            const Tensor& h_audio) {
  check_rep("fuse: text", h_text, model.config.rep_dim);
  check_rep("fuse: visual", h_visual, model.config.rep_dim);
  check_rep("fuse: audio", h_audio, model.config.rep_dim);
  const std::array<Tensor, 3> parts = {h_text, h_visual, h_audio};
  Tensor joined = concat(std::span<const Tensor>(parts.data(), parts.size()));
  return mlp_forward(model.fusion, joined);
}

Tensor masked_fuse(const FusionModel& model, const Tensor& h_text, const Tensor& h_visual,
                   const Tensor& h_audio, const ModalityMask& mask) {
  if (mask.count() == 3) {
    throw ContractError("masked_fuse: masking all three modalities leaves no information");
  }
  if (mask.count() == 0) return fuse(model, h_text, h_visual, h_audio);
  Tensor t = mask.text ? scale(h_text, 0.0) : h_text;
  Tensor v = mask.visual ? scale(h_visual, 0.0) : h_visual;
  Tensor a = mask.audio ? scale(h_audio, 0.0) : h_audio;
  return fuse(model, t, v, a);
}

Tensor predict(const FusionModel& model, const Tensor& h) {
  check_rep("predict", h, model.config.rep_dim);
  Tensor raw = mlp_forward(model.predictor, h);
  return clamp(scale(tanh(raw), 3.0), -3.0 + kPredictMargin, 3.0 - kPredictMargin);
}

Representations encode_utterance(const FusionModel& model, const Utterance& utterance) {
  Representations reps;
  if (!utterance.tokens.empty()) {
    reps.text = encode_text(model, std::span<const int>(utterance.tokens));
  } else if (!utterance.text_vector.empty()) {
    reps.text = encode_text(model, std::span<const double>(utterance.text_vector));
  } else {
    throw DataError("encode_utterance: sample '" + utterance.id + "' has no text features");
  }
  reps.visual = encode_recurrent(model, utterance.visual);
  reps.audio = encode_recurrent(model, utterance.audio);
  return reps;
}

// --- checkpoint io -----------------------------------------------------

namespace {
constexpr int kCheckpointVersion = 1;
}

void save_checkpoint(const FusionModel& model, const std::string& path) {
  nlohmann::json doc;
  doc["format_version"] = kCheckpointVersion;
  doc["config"] = {
      {"text_vocab", model.config.text_vocab},
      {"text_embed_dim", model.config.text_embed_dim},
      {"visual_in", model.config.visual_in},
      {"audio_in", model.config.audio_in},
      {"hidden", model.config.hidden},
      {"rep_dim", model.config.rep_dim},
  };
  nlohmann::json params = nlohmann::json::object();
  for (const auto& [name, tensor] : model.parameters()) {
    params[name] = {
        {"shape", tensor.shape()},
        {"values", std::vector<double>(tensor.values().begin(), tensor.values().end())},
    };
  }
  doc["parameters"] = std::move(params);

  std::ofstream out(path);
  if (!out) throw DataError("save_checkpoint: cannot open " + path);
  out << doc.dump() << "\n";
  if (!out) throw DataError("save_checkpoint: write failed for " + path);
}

FusionModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_checkpoint: cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_checkpoint: " + path + ": " + e.what());
  }
  try {
    if (doc.at("format_version").get<int>() != kCheckpointVersion) {
      throw DataError("load_checkpoint: unsupported format version in " + path);
    }
    const auto& cfg = doc.at("config");
    EncoderConfig config;
    config.text_vocab = cfg.at("text_vocab").get<std::size_t>();
    config.text_embed_dim = cfg.at("text_embed_dim").get<std::size_t>();
    config.visual_in = cfg.at("visual_in").get<std::size_t>();
    config.audio_in = cfg.at("audio_in").get<std::size_t>();
    config.hidden = cfg.at("hidden").get<std::size_t>();
    config.rep_dim = cfg.at("rep_dim").get<std::size_t>();
    config.validate();

    FusionModel model = init_params(config, 0);
    const auto& params = doc.at("parameters");
    auto registry = model.parameters();
    if (params.size() != registry.size()) {
      throw DataError("load_checkpoint: expected " + std::to_string(registry.size()) +
                      " parameters, file has " + std::to_string(params.size()));
    }
    for (auto& [name, tensor] : registry) {
      if (!params.contains(name)) {
        throw DataError("load_checkpoint: missing parameter " + name);
      }
      const auto& entry = params.at(name);
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      auto values = entry.at("values").get<std::vector<double>>();
      if (shape != tensor.shape() || values.size() != tensor.numel()) {
        throw DataError("load_checkpoint: shape mismatch for " + name);
      }
      std::copy(values.begin(), values.end(), tensor.values_mut().begin());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("load_checkpoint: " + path + ": " + e.what());
  }
}

}  // namespace suparc

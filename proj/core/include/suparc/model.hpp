#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "suparc/tensor.hpp"

namespace suparc {

struct Utterance;  // data.hpp

enum class Modality { text = 0, visual = 1, audio = 2 };

const char* modality_name(Modality m);

/// One modality's feature sequence: `length` rows of `width` features,
/// row-major.
struct ModalityFeatures {
  Modality modality = Modality::visual;
  std::size_t length = 0;
  std::size_t width = 0;
  std::vector<double> values;
};

struct EncoderConfig {
  std::size_t text_vocab = 512;
  std::size_t text_embed_dim = 32;
  std::size_t visual_in = 35;
  std::size_t audio_in = 74;
  std::size_t hidden = 32;   // per-direction recurrent width
  std::size_t rep_dim = 32;  // per-modality representation width

  void validate() const;  // ConfigError when any width is 0
};

struct LinearLayer {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]
};

/// Two-layer perceptron with a tanh hidden activation and linear output.
struct Mlp {
  LinearLayer layer0;
  LinearLayer layer1;
};

/// One direction of the recurrent encoder. Gate order in the stacked
/// matrices is input, forget, cell, output.
struct LstmCell {
  Tensor w_ih;  // [4*hidden x input]
  Tensor w_hh;  // [4*hidden x hidden]
  Tensor b_ih;  // [4*hidden]
  Tensor b_hh;  // [4*hidden]
};

struct RecurrentEncoder {
  LstmCell fwd;
  LstmCell bwd;
  LinearLayer projection;  // [rep_dim x 2*hidden]
};

struct TextEncoder {
  Tensor embedding;  // [vocab x embed_dim]
  Mlp mlp;           // embed_dim -> rep_dim
};

/// All learnable parameters: three modality encoders, the fusion MLP over
/// the 3*rep_dim concatenation, and the scalar predictor.
struct FusionModel {
  EncoderConfig config;
  TextEncoder text;
  RecurrentEncoder visual;
  RecurrentEncoder audio;
  Mlp fusion;     // 3*rep_dim -> rep_dim
  Mlp predictor;  // rep_dim -> 1, output squashed into (-3, 3)

  /// Stable path -> tensor registry ("fusion.layer0.weight", ...). The
  /// tensors alias the model's storage.
  std::vector<std::pair<std::string, Tensor>> parameters() const;
  void zero_grad() const;
  FusionModel clone() const;
};

/// Deterministic initialization: linear weights uniform in
/// +-sqrt(6/(fan_in+fan_out)), recurrent state matrices uniform in
/// +-sqrt(3/hidden) (rows of roughly unit norm), biases zero except the
/// forget-gate block of b_ih which is 1.0.
FusionModel init_params(const EncoderConfig& config, std::uint64_t seed);

/// Embedding lookup, mean pooling over the sequence, then the text MLP.
Tensor encode_text(const FusionModel& model, std::span<const int> tokens);
/// Precomputed text vector (width text_embed_dim) through the same MLP.
Tensor encode_text(const FusionModel& model, std::span<const double> text_vector);

/// One-layer bidirectional recurrent pass; the final hidden states of both
/// directions are concatenated and projected to rep_dim.
Tensor encode_recurrent(const FusionModel& model, const ModalityFeatures& features);

/// Fusion MLP over the [h_t, h_v, h_a] concatenation.
Tensor fuse(const FusionModel& model, const Tensor& h_text, const Tensor& h_visual,
            const Tensor& h_audio);

struct ModalityMask {
  bool text = false;
  bool visual = false;
  bool audio = false;

  int count() const { return int(text) + int(visual) + int(audio); }
};

/// Same fusion MLP with the masked representations zeroed beforehand, so
/// gradients flow only to the unmasked encoders. An empty mask is exactly
/// fuse(); masking all three is a ContractError.
Tensor masked_fuse(const FusionModel& model, const Tensor& h_text, const Tensor& h_visual,
                   const Tensor& h_audio, const ModalityMask& mask);

/// Predictor MLP; the 3*tanh output keeps the score inside (-3, 3).
Tensor predict(const FusionModel& model, const Tensor& h);

/// Per-modality representations of one utterance.
struct Representations {
  Tensor text;
  Tensor visual;
  Tensor audio;
};

Representations encode_utterance(const FusionModel& model, const Utterance& utterance);

// Checkpoint file: JSON with a format-version integer, the EncoderConfig,
// and a flat map from parameter path to shape + row-major values.
void save_checkpoint(const FusionModel& model, const std::string& path);
FusionModel load_checkpoint(const std::string& path);

}  // namespace suparc

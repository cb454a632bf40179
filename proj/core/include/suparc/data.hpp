#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "suparc/model.hpp"

namespace suparc {

enum class TextMode { tokens, vectors };
enum class Split { train, valid, test };

const char* split_name(Split split);
Split parse_split(const std::string& name);  // ConfigError on unknown name

struct DatasetHeader {
  std::size_t d_v = 35;
  std::size_t d_a = 74;
  TextMode text_mode = TextMode::tokens;
  std::size_t vocab_size = 512;
  Split split = Split::train;

  void validate() const;
};

/// One sample: a sentiment score in [-3, 3] plus the three modality inputs.
/// Exactly one of tokens/text_vector is populated, per the header's text mode.
struct Utterance {
  std::string id;
  double y = 0.0;
  std::vector<int> tokens;
  std::vector<double> text_vector;
  ModalityFeatures visual;
  ModalityFeatures audio;
};

struct Dataset {
  DatasetHeader header;
  std::vector<Utterance> samples;

  std::size_t size() const { return samples.size(); }
};

// Dataset file: one JSON object per line with keys id, y, text (ints, or
// floats when text_mode = vectors), visual and audio (arrays of rows).
// Violations raise DataError naming the offending line.
Dataset load_jsonl(const std::string& path, const DatasetHeader& header);
void save_jsonl(const Dataset& dataset, const std::string& path);

DatasetHeader load_header(const std::string& path);
void save_header(const DatasetHeader& header, const std::string& path);

// Directory layout: <dir>/<split>.jsonl with <dir>/<split>.header.json.
Dataset load_split(const std::string& dir, Split split);
void save_split(const Dataset& dataset, const std::string& dir);

struct SyntheticConfig {
  std::size_t n_samples = 2860;
  std::uint64_t seed = 0;
  std::size_t d_v = 35;
  std::size_t d_a = 74;
  std::size_t vocab = 512;
  std::size_t min_len = 4;
  std::size_t max_len = 20;
  double sigma_text = 0.1;    // jitter on the latent score before token binning
  double sigma_visual = 0.4;  // per-feature noise on visual rows
  double sigma_audio = 0.4;   // per-feature noise on audio rows
  double conflict_prob = 0.2;

  void validate() const;
};

struct SyntheticData {
  Dataset train;
  Dataset valid;
  Dataset test;
};

/// Deterministic synthetic generator. Each sample draws a latent score s;
/// visual/audio rows are (s/3) times a seed-derived unit direction plus
/// Gaussian noise, and text tokens come from one of seven vocabulary bands
/// selected by binning s. With probability conflict_prob one non-text
/// modality is regenerated from an independent score s' and the label
/// becomes 0.7*s + 0.3*s' (text keeps the dominant share); otherwise y = s.
/// Splits are 70/15/15 in generation order.
SyntheticData generate_synthetic(const SyntheticConfig& config);

/// Deterministic shuffle keyed by (seed, epoch), cut into index batches.
/// A trailing batch smaller than 2 is dropped (pair losses need pairs);
/// batch_size < 2 is a ConfigError.
std::vector<std::vector<std::size_t>> make_batches(const Dataset& dataset,
                                                   std::size_t batch_size,
                                                   std::uint64_t seed, std::size_t epoch);

}  // namespace suparc

#include "suparc/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "suparc/errors.hpp"
#include "suparc/rng.hpp"

namespace suparc {

namespace {

using nlohmann::json;

[[noreturn]] void line_error(const std::string& path, std::size_t line,
                             const std::string& what) {
  throw DataError(path + ": line " + std::to_string(line) + ": " + what);
}

ModalityFeatures parse_sequence(const json& rows, Modality modality, std::size_t width,
                                const std::string& key) {
  if (!rows.is_array() || rows.empty()) {
    throw DataError(key + " must be a non-empty array of rows");
  }
  ModalityFeatures features;
  features.modality = modality;
  features.length = rows.size();
  features.width = width;
  features.values.reserve(rows.size() * width);
  for (const auto& row : rows) {
    if (!row.is_array() || row.size() != width) {
      throw DataError(key + " row width " + std::to_string(row.size()) + ", expected " +
                      std::to_string(width));
    }
    for (const auto& v : row) features.values.push_back(v.get<double>());
  }
  return features;
}

json sequence_to_json(const ModalityFeatures& features) {
  json rows = json::array();
  for (std::size_t r = 0; r < features.length; ++r) {
    json row = json::array();
    for (std::size_t c = 0; c < features.width; ++c) {
      row.push_back(features.values[r * features.width + c]);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

const char* split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "valid") return Split::valid;
  if (name == "test") return Split::test;
  throw ConfigError("unknown split '" + name + "' (expected train|valid|test)");
}

void DatasetHeader::validate() const {
  if (d_v == 0 || d_a == 0) throw ConfigError("DatasetHeader: feature widths must be >= 1");
  if (text_mode == TextMode::tokens && vocab_size == 0) {
    throw ConfigError("DatasetHeader: vocab_size must be >= 1 in tokens mode");
  }
}

Dataset load_jsonl(const std::string& path, const DatasetHeader& header) {
  header.validate();
  std::ifstream in(path);
  if (!in) throw DataError("load_jsonl: cannot open " + path);

  Dataset dataset;
  dataset.header = header;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    json doc;
    try {
      doc = json::parse(line);
    } catch (const json::exception& e) {
      line_error(path, line_number, std::string("malformed JSON: ") + e.what());
    }
    try {
      Utterance utterance;
      utterance.id = doc.at("id").get<std::string>();
      utterance.y = doc.at("y").get<double>();
      if (utterance.y < -3.0 || utterance.y > 3.0 || !std::isfinite(utterance.y)) {
        throw DataError("y = " + std::to_string(utterance.y) + " outside [-3, 3]");
      }
      const auto& text = doc.at("text");
      if (!text.is_array() || text.empty()) throw DataError("text must be a non-empty array");
      if (header.text_mode == TextMode::tokens) {
        for (const auto& t : text) {
          const int id = t.get<int>();
          if (id < 0 || static_cast<std::size_t>(id) >= header.vocab_size) {
            throw DataError("token id " + std::to_string(id) + " outside vocabulary of " +
                            std::to_string(header.vocab_size));
          }
          utterance.tokens.push_back(id);
        }
      } else {
        utterance.text_vector = text.get<std::vector<double>>();
      }
      utterance.visual = parse_sequence(doc.at("visual"), Modality::visual, header.d_v, "visual");
      utterance.audio = parse_sequence(doc.at("audio"), Modality::audio, header.d_a, "audio");
      dataset.samples.push_back(std::move(utterance));
    } catch (const json::exception& e) {
      line_error(path, line_number, e.what());
    } catch (const DataError& e) {
      line_error(path, line_number, e.what());
    }
  }
  return dataset;
}

void save_jsonl(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_jsonl: cannot open " + path);
  for (const auto& utterance : dataset.samples) {
    json doc;
    doc["id"] = utterance.id;
    doc["y"] = utterance.y;
    if (dataset.header.text_mode == TextMode::tokens) {
      doc["text"] = utterance.tokens;
    } else {
      doc["text"] = utterance.text_vector;
    }
    doc["visual"] = sequence_to_json(utterance.visual);
    doc["audio"] = sequence_to_json(utterance.audio);
    out << doc.dump() << "\n";
  }
  if (!out) throw DataError("save_jsonl: write failed for " + path);
}

DatasetHeader load_header(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_header: cannot open " + path);
  json doc;
  try {
    in >> doc;
    DatasetHeader header;
    header.d_v = doc.at("d_v").get<std::size_t>();
    header.d_a = doc.at("d_a").get<std::size_t>();
    const auto mode = doc.at("text_mode").get<std::string>();
    if (mode == "tokens") {
      header.text_mode = TextMode::tokens;
    } else if (mode == "vectors") {
      header.text_mode = TextMode::vectors;
    } else {
      throw DataError("load_header: unknown text_mode '" + mode + "'");
    }
    header.vocab_size = doc.at("vocab_size").get<std::size_t>();
    header.split = parse_split(doc.at("split").get<std::string>());
    header.validate();
    return header;
  } catch (const json::exception& e) {
    throw DataError("load_header: " + path + ": " + e.what());
  }
}

void save_header(const DatasetHeader& header, const std::string& path) {
  json doc;
  doc["d_v"] = header.d_v;
  doc["d_a"] = header.d_a;
  doc["text_mode"] = header.text_mode == TextMode::tokens ? "tokens" : "vectors";
  doc["vocab_size"] = header.vocab_size;
  doc["split"] = split_name(header.split);
  std::ofstream out(path);
  if (!out) throw DataError("save_header: cannot open " + path);
  out << doc.dump(2) << "\n";
}

Dataset load_split(const std::string& dir, Split split) {
  const std::string base = dir + "/" + split_name(split);
  DatasetHeader header = load_header(base + ".header.json");
  if (header.split != split) {
    throw DataError("load_split: header at " + base + ".header.json declares split '" +
                    std::string(split_name(header.split)) + "'");
  }
  return load_jsonl(base + ".jsonl", header);
}

void save_split(const Dataset& dataset, const std::string& dir) {
  const std::string base = dir + "/" + split_name(dataset.header.split);
  save_header(dataset.header, base + ".header.json");
  save_jsonl(dataset, base + ".jsonl");
}

// --- synthetic generator ---------------------------------------------------

void SyntheticConfig::validate() const {
  if (n_samples == 0) throw ConfigError("SyntheticConfig: n_samples must be >= 1");
  if (d_v == 0 || d_a == 0) throw ConfigError("SyntheticConfig: feature widths must be >= 1");
  if (vocab < 7) throw ConfigError("SyntheticConfig: vocab must cover 7 bands");
  if (min_len == 0 || max_len < min_len) throw ConfigError("SyntheticConfig: bad length range");
  if (sigma_text < 0 || sigma_visual < 0 || sigma_audio < 0) {
    throw ConfigError("SyntheticConfig: sigmas must be >= 0");
  }
  if (conflict_prob < 0.0 || conflict_prob > 1.0) {
    throw ConfigError("SyntheticConfig: conflict_prob must be in [0, 1]");
  }
}

namespace {

std::vector<double> unit_direction(Rng& rng, std::size_t dim) {
  std::vector<double> direction(dim);
  double norm2 = 0.0;
  for (auto& v : direction) {
    v = rng.normal();
    norm2 += v * v;
  }
  const double norm = std::sqrt(std::max(norm2, 1e-30));
  for (auto& v : direction) v /= norm;
  return direction;
}

ModalityFeatures make_rows(Rng& rng, Modality modality, std::size_t length, std::size_t width,
                           const std::vector<double>& direction, double signal, double sigma) {
  ModalityFeatures features;
  features.modality = modality;
  features.length = length;
  features.width = width;
  features.values.resize(length * width);
  const double gain = signal / 3.0;
  for (std::size_t r = 0; r < length; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      features.values[r * width + c] = gain * direction[c] + sigma * rng.normal();
    }
  }
  return features;
}

// Seven token bands aligned with the seven integer sentiment intervals.
int score_band(double score) {
  const double clamped = std::min(3.0, std::max(-3.0, score));
  return static_cast<int>(std::lround(clamped)) + 3;  // 0..6
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::vector<double> w_visual = unit_direction(rng, config.d_v);
  const std::vector<double> w_audio = unit_direction(rng, config.d_a);
  const std::size_t band_size = config.vocab / 7;

  std::vector<Utterance> samples;
  samples.reserve(config.n_samples);
  for (std::size_t index = 0; index < config.n_samples; ++index) {
    const double s = rng.uniform(-3.0, 3.0);

    // Conflict: one non-text modality carries an independent score.
    bool conflicted = rng.uniform() < config.conflict_prob;
    bool conflict_visual = false;
    double s_other = s;
    if (conflicted) {
      conflict_visual = rng.uniform() < 0.5;
      s_other = rng.uniform(-3.0, 3.0);
    }
    const double visual_signal = (conflicted && conflict_visual) ? s_other : s;
    const double audio_signal = (conflicted && !conflict_visual) ? s_other : s;

    Utterance utterance;
    {
      std::ostringstream id;
      id << "synth-" << std::setw(6) << std::setfill('0') << index;
      utterance.id = id.str();
    }
    const std::size_t span = config.max_len - config.min_len + 1;
    const std::size_t l_t = config.min_len + rng.integer(span);
    for (std::size_t t = 0; t < l_t; ++t) {
      const int band = score_band(s + config.sigma_text * rng.normal());
      const std::size_t lo = static_cast<std::size_t>(band) * band_size;
      const std::size_t width = band == 6 ? config.vocab - lo : band_size;
      utterance.tokens.push_back(static_cast<int>(lo + rng.integer(width)));
    }
    const std::size_t l_v = config.min_len + rng.integer(span);
    utterance.visual = make_rows(rng, Modality::visual, l_v, config.d_v, w_visual,
                                 visual_signal, config.sigma_visual);
    const std::size_t l_a = config.min_len + rng.integer(span);
    utterance.audio = make_rows(rng, Modality::audio, l_a, config.d_a, w_audio,
                                audio_signal, config.sigma_audio);
    utterance.y = conflicted ? 0.7 * s + 0.3 * s_other : s;
    samples.push_back(std::move(utterance));
  }

  const std::size_t n_train = (config.n_samples * 70) / 100;
  const std::size_t n_valid = (config.n_samples * 15) / 100;

  SyntheticData data;
  DatasetHeader header;
  header.d_v = config.d_v;
  header.d_a = config.d_a;
  header.text_mode = TextMode::tokens;
  header.vocab_size = config.vocab;

  const auto take = [&samples](std::size_t begin, std::size_t end, DatasetHeader h, Split split) {
    Dataset dataset;
    h.split = split;
    dataset.header = h;
    dataset.samples.assign(samples.begin() + static_cast<std::ptrdiff_t>(begin),
                           samples.begin() + static_cast<std::ptrdiff_t>(end));
    return dataset;
  };
  data.train = take(0, n_train, header, Split::train);
  data.valid = take(n_train, n_train + n_valid, header, Split::valid);
  data.test = take(n_train + n_valid, samples.size(), header, Split::test);
  return data;
}

std::vector<std::vector<std::size_t>> make_batches(const Dataset& dataset,
                                                   std::size_t batch_size,
                                                   std::uint64_t seed, std::size_t epoch) {
  if (batch_size < 2) {
    throw ConfigError("make_batches: batch_size must be >= 2; the contrastive losses "
                      "need at least one candidate pair per batch");
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  // Distinct stream per (seed, epoch); the odd multiplier decorrelates epochs.
  Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1)));
  rng.shuffle(order);

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, order.size());
    if (end - begin < 2) break;  // drop a trailing singleton
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

}  // namespace suparc

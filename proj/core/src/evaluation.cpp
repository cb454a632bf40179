#include "suparc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "suparc/errors.hpp"
#include "suparc/rng.hpp"

namespace suparc {

namespace {

struct Pearson {
  double value = 0.0;
  bool degenerate = false;
};

Pearson pearson(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double cov = 0.0, vx = 0.0, vy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    cov += dx * dy;
    vx += dx * dx;
    vy += dy * dy;
  }
  if (vx <= 0.0 || vy <= 0.0) return {0.0, true};
  return {cov / std::sqrt(vx * vy), false};
}

int seven_bin(double v) {
  const double clamped = std::min(3.0, std::max(-3.0, v));
  return static_cast<int>(std::lround(clamped));
}

double binary_f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (fp + fn == 0) return 1.0;  // zero off-diagonal mass
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

// Fractional ranks (ties get the average rank of their run).
std::vector<double> ranks_of(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&values](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

std::string format_double(double v) {
  char buffer[40];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

}  // namespace

MetricsBundle compute_metrics(std::span<const double> predicted,
                              std::span<const double> actual) {
  if (predicted.size() != actual.size() || predicted.empty()) {
    throw ContractError("compute_metrics: need equal, non-zero lengths");
  }
  const std::size_t n = predicted.size();
  MetricsBundle out;

  double abs_sum = 0.0;
  std::size_t acc7_hits = 0;
  std::size_t nonneg_hits = 0, nn_tp = 0, nn_fp = 0, nn_fn = 0;
  std::size_t pos_total = 0, pos_hits = 0, p_tp = 0, p_fp = 0, p_fn = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = predicted[i];
    const double a = actual[i];
    abs_sum += std::fabs(p - a);
    if (seven_bin(p) == seven_bin(a)) ++acc7_hits;

    const bool p_nonneg = p >= 0.0;
    const bool a_nonneg = a >= 0.0;
    if (p_nonneg == a_nonneg) ++nonneg_hits;
    if (p_nonneg && a_nonneg) ++nn_tp;
    if (p_nonneg && !a_nonneg) ++nn_fp;
    if (!p_nonneg && a_nonneg) ++nn_fn;

    if (a != 0.0) {
      ++pos_total;
      const bool p_pos = p > 0.0;
      const bool a_pos = a > 0.0;
      if (p_pos == a_pos) ++pos_hits;
      if (p_pos && a_pos) ++p_tp;
      if (p_pos && !a_pos) ++p_fp;
      if (!p_pos && a_pos) ++p_fn;
    }
  }

  out.mae = abs_sum / static_cast<double>(n);
  const Pearson corr = pearson(predicted, actual);
  out.corr = corr.value;
  out.corr_degenerate = corr.degenerate;
  out.acc7 = static_cast<double>(acc7_hits) / static_cast<double>(n);
  out.acc2_nonneg = static_cast<double>(nonneg_hits) / static_cast<double>(n);
  out.f1_nonneg = binary_f1(nn_tp, nn_fp, nn_fn);
  if (pos_total == 0) {
    out.pos_degenerate = true;
  } else {
    out.acc2_pos = static_cast<double>(pos_hits) / static_cast<double>(pos_total);
    out.f1_pos = binary_f1(p_tp, p_fp, p_fn);
  }
  return out;
}

std::string metrics_to_json(const MetricsBundle& metrics) {
  nlohmann::json doc;
  doc["mae"] = metrics.mae;
  doc["corr"] = metrics.corr;
  doc["acc7"] = metrics.acc7;
  doc["acc2_nonneg"] = metrics.acc2_nonneg;
  doc["f1_nonneg"] = metrics.f1_nonneg;
  doc["acc2_pos"] = metrics.acc2_pos;
  doc["f1_pos"] = metrics.f1_pos;
  doc["corr_degenerate"] = metrics.corr_degenerate;
  doc["pos_degenerate"] = metrics.pos_degenerate;
  return doc.dump();
}

// --- PCA ---------------------------------------------------------------

PcaResult pca_project(std::span<const double> data, std::size_t n, std::size_t d,
                      std::size_t k) {
  if (data.size() != n * d) throw ContractError("pca_project: data size != n*d");
  if (k < 1 || n < k) throw ContractError("pca_project: need n >= k >= 1");

  std::vector<double> centered(data.begin(), data.end());
  for (std::size_t c = 0; c < d; ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += centered[r * d + c];
    mean /= static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) centered[r * d + c] -= mean;
  }

  std::vector<double> cov(d * d, 0.0);
  if (n > 1) {
    const double inv = 1.0 / static_cast<double>(n - 1);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t a = 0; a < d; ++a) {
        const double va = centered[r * d + a];
        if (va == 0.0) continue;
        for (std::size_t b = 0; b < d; ++b) {
          cov[a * d + b] += va * centered[r * d + b] * inv;
        }
      }
    }
  }
  double total_variance = 0.0;
  for (std::size_t a = 0; a < d; ++a) total_variance += cov[a * d + a];

  PcaResult result;
  result.n = n;
  result.k = k;
  result.coordinates.assign(n * k, 0.0);
  result.explained_variance.assign(k, 0.0);
  result.iterations.assign(k, 0);

  constexpr double kTolerance = 1e-9;
  constexpr std::size_t kMaxIterations = 1000;
  const double rank_floor = std::max(total_variance, 1.0) * 1e-12;

  std::vector<double> v(d), w(d);
  for (std::size_t comp = 0; comp < k && comp < d; ++comp) {
    if (total_variance <= 0.0) break;  // all points identical

    Rng rng(0xC0FFEEULL + comp);
    double norm2 = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      norm2 += x * x;
    }
    for (auto& x : v) x /= std::sqrt(norm2);

    std::size_t iteration = 0;
    bool exhausted = false;
    for (; iteration < kMaxIterations; ++iteration) {
      for (std::size_t a = 0; a < d; ++a) {
        double acc = 0.0;
        for (std::size_t b = 0; b < d; ++b) acc += cov[a * d + b] * v[b];
        w[a] = acc;
      }
      double wnorm = 0.0;
      for (double x : w) wnorm += x * x;
      wnorm = std::sqrt(wnorm);
      if (wnorm < rank_floor) {
        exhausted = true;  // deflated matrix has no mass left
        break;
      }
      double delta = 0.0;
      for (std::size_t a = 0; a < d; ++a) {
        w[a] /= wnorm;
        delta += (w[a] - v[a]) * (w[a] - v[a]);
      }
      v = w;
      if (std::sqrt(delta) <= kTolerance) break;
    }
    result.iterations[comp] = iteration + 1;
    if (exhausted) break;

    // Rayleigh quotient under unit norm.
    double lambda = 0.0;
    for (std::size_t a = 0; a < d; ++a) {
      double acc = 0.0;
      for (std::size_t b = 0; b < d; ++b) acc += cov[a * d + b] * v[b];
      lambda += v[a] * acc;
    }
    if (lambda < rank_floor) break;

    // Largest-magnitude loading positive.
    std::size_t peak = 0;
    for (std::size_t a = 1; a < d; ++a) {
      if (std::fabs(v[a]) > std::fabs(v[peak])) peak = a;
    }
    if (v[peak] < 0.0) {
      for (auto& x : v) x = -x;
    }

    for (std::size_t r = 0; r < n; ++r) {
      double proj = 0.0;
      for (std::size_t a = 0; a < d; ++a) proj += centered[r * d + a] * v[a];
      result.coordinates[r * k + comp] = proj;
    }
    result.explained_variance[comp] = lambda / total_variance;

    for (std::size_t a = 0; a < d; ++a) {
      for (std::size_t b = 0; b < d; ++b) {
        cov[a * d + b] -= lambda * v[a] * v[b];
      }
    }
  }
  return result;
}

// --- geometry score ------------------------------------------------------

GeometryScore geometry_score(std::span<const double> fusion_vectors, std::size_t n,
                             std::size_t d, std::span<const double> y) {
  if (n < 10) throw ContractError("geometry_score: need at least 10 samples");
  if (fusion_vectors.size() != n * d || y.size() != n) {
    throw ContractError("geometry_score: inconsistent input sizes");
  }

  std::vector<double> norms(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double v = fusion_vectors[i * d + c];
      acc += v * v;
    }
    norms[i] = std::sqrt(acc);
  }

  constexpr std::size_t kMaxPairs = 100000;
  const std::size_t total_pairs = n * (n - 1) / 2;
  const std::size_t stride = (total_pairs + kMaxPairs - 1) / kMaxPairs;

  std::vector<double> distances;
  std::vector<double> gaps;
  distances.reserve(std::min(total_pairs, kMaxPairs));
  gaps.reserve(std::min(total_pairs, kMaxPairs));
  std::size_t counter = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j, ++counter) {
      if (counter % stride != 0) continue;
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        dot += fusion_vectors[i * d + c] * fusion_vectors[j * d + c];
      }
      const double denom = std::max(norms[i] * norms[j], 1e-24);
      distances.push_back(1.0 - dot / denom);
      gaps.push_back(std::fabs(y[i] - y[j]));
    }
  }

  const std::vector<double> rank_d = ranks_of(distances);
  const std::vector<double> rank_g = ranks_of(gaps);
  const Pearson rho = pearson(rank_d, rank_g);
  return {rho.degenerate ? 0.0 : rho.value, rho.degenerate};
}

// --- dataset-level helpers -------------------------------------------------

std::vector<double> predict_dataset(const FusionModel& model, const Dataset& dataset) {
  std::vector<double> predictions;
  predictions.reserve(dataset.size());
  for (const auto& utterance : dataset.samples) {
    const Representations reps = encode_utterance(model, utterance);
    predictions.push_back(predict(model, fuse(model, reps.text, reps.visual, reps.audio)).item());
  }
  return predictions;
}

std::vector<double> fusion_vectors(const FusionModel& model, const Dataset& dataset,
                                   const ModalityMask& mask) {
  std::vector<double> vectors;
  vectors.reserve(dataset.size() * model.config.rep_dim);
  for (const auto& utterance : dataset.samples) {
    const Representations reps = encode_utterance(model, utterance);
    const Tensor h = masked_fuse(model, reps.text, reps.visual, reps.audio, mask);
    vectors.insert(vectors.end(), h.values().begin(), h.values().end());
  }
  return vectors;
}

std::vector<std::string> all_variant_names() {
  return {"full", "mask-t", "mask-v", "mask-a", "mask-tv", "mask-ta", "mask-va"};
}

ModalityMask parse_variant(const std::string& name) {
  if (name == "full") return {};
  ModalityMask mask;
  if (name.rfind("mask-", 0) == 0 && name.size() > 5 && name.size() <= 7) {
    for (std::size_t i = 5; i < name.size(); ++i) {
      switch (name[i]) {
        case 't': mask.text = true; continue;
        case 'v': mask.visual = true; continue;
        case 'a': mask.audio = true; continue;
        default: break;
      }
      throw ConfigError("unknown embedding variant '" + name + "'");
    }
    if (mask.count() >= 1 && mask.count() <= 2) return mask;
  }
  throw ConfigError("unknown embedding variant '" + name + "'");
}

// --- embedding export -------------------------------------------------

namespace {

// Blue (-3) through gray (0) to red (+3).
std::string label_color(double y) {
  const double t = std::min(1.0, std::max(0.0, (y + 3.0) / 6.0));
  const auto lerp = [](double a, double b, double u) {
    return static_cast<int>(std::lround(a + (b - a) * u));
  };
  int r, g, b;
  if (t < 0.5) {
    const double u = t * 2.0;
    r = lerp(37, 128, u);
    g = lerp(99, 128, u);
    b = lerp(235, 128, u);
  } else {
    const double u = (t - 0.5) * 2.0;
    r = lerp(128, 220, u);
    g = lerp(128, 38, u);
    b = lerp(128, 38, u);
  }
  char buffer[8];
  std::snprintf(buffer, sizeof(buffer), "#%02x%02x%02x", r, g, b);
  return buffer;
}

struct VariantDump {
  std::string name;
  PcaResult pca;
};

void write_svg(const std::string& path, const Dataset& dataset,
               const std::vector<VariantDump>& dumps) {
  constexpr double kPanel = 220.0;
  constexpr double kMargin = 26.0;
  const double width = kMargin + dumps.size() * (kPanel + kMargin);
  const double height = kPanel + 2.0 * kMargin + 14.0;

  std::ofstream out(path);
  if (!out) throw DataError("export_embeddings: cannot open " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t panel = 0; panel < dumps.size(); ++panel) {
    const auto& dump = dumps[panel];
    const double x0 = kMargin + panel * (kPanel + kMargin);
    const double y0 = kMargin;
    double lo_x = 0.0, hi_x = 0.0, lo_y = 0.0, hi_y = 0.0;
    for (std::size_t i = 0; i < dump.pca.n; ++i) {
      const double px = dump.pca.coordinates[i * dump.pca.k + 0];
      const double py = dump.pca.k > 1 ? dump.pca.coordinates[i * dump.pca.k + 1] : 0.0;
      if (i == 0 || px < lo_x) lo_x = px;
      if (i == 0 || px > hi_x) hi_x = px;
      if (i == 0 || py < lo_y) lo_y = py;
      if (i == 0 || py > hi_y) hi_y = py;
    }
    const double span_x = std::max(hi_x - lo_x, 1e-9);
    const double span_y = std::max(hi_y - lo_y, 1e-9);

    out << "<rect x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << kPanel
        << "\" height=\"" << kPanel << "\" fill=\"none\" stroke=\"#cccccc\"/>\n";
    out << "<text x=\"" << x0 + kPanel / 2 << "\" y=\"" << y0 + kPanel + 18.0
        << "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
        << dump.name << "</text>\n";
    for (std::size_t i = 0; i < dump.pca.n; ++i) {
      const double px = dump.pca.coordinates[i * dump.pca.k + 0];
      const double py = dump.pca.k > 1 ? dump.pca.coordinates[i * dump.pca.k + 1] : 0.0;
      const double cx = x0 + 8.0 + (px - lo_x) / span_x * (kPanel - 16.0);
      const double cy = y0 + kPanel - 8.0 - (py - lo_y) / span_y * (kPanel - 16.0);
      out << "<circle cx=\"" << cx << "\" cy=\"" << cy << "\" r=\"2.2\" fill=\""
          << label_color(dataset.samples[i].y) << "\" fill-opacity=\"0.75\"/>\n";
    }
  }
  out << "</svg>\n";
  if (!out) throw DataError("export_embeddings: write failed for " + path);
}

}  // namespace

void export_embeddings(const FusionModel& model, const Dataset& dataset,
                       std::span<const std::string> variants, const std::string& csv_path,
                       const std::string& svg_path) {
  if (dataset.samples.empty()) throw ContractError("export_embeddings: empty dataset");
  if (variants.empty()) throw ContractError("export_embeddings: no variants requested");

  std::vector<VariantDump> dumps;
  dumps.reserve(variants.size());
  for (const auto& name : variants) {
    const ModalityMask mask = parse_variant(name);
    const std::vector<double> vectors = fusion_vectors(model, dataset, mask);
    const std::size_t k = std::min<std::size_t>(2, dataset.size());
    dumps.push_back({name, pca_project(vectors, dataset.size(), model.config.rep_dim, k)});
  }

  std::ofstream csv(csv_path);
  if (!csv) throw DataError("export_embeddings: cannot open " + csv_path);
  csv << "id,variant,y,pc1,pc2\n";
  for (const auto& dump : dumps) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      const double pc1 = dump.pca.coordinates[i * dump.pca.k + 0];
      const double pc2 = dump.pca.k > 1 ? dump.pca.coordinates[i * dump.pca.k + 1] : 0.0;
      csv << dataset.samples[i].id << "," << dump.name << ","
          << format_double(dataset.samples[i].y) << "," << format_double(pc1) << ","
          << format_double(pc2) << "\n";
    }
  }
  if (!csv) throw DataError("export_embeddings: write failed for " + csv_path);

  if (!svg_path.empty()) write_svg(svg_path, dataset, dumps);
}

}  // namespace suparc

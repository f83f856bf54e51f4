#include "timbre/metrics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "timbre/common.hpp"

#include "json.hpp"

namespace timbre {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;  // (K1 * L)^2, L = 1
constexpr double kC2 = 0.03 * 0.03;

const std::vector<double>& gaussian_kernel() {
  static const std::vector<double> k = [] {
    std::vector<double> v(kWin);
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
      double d = i - (kWin - 1) / 2.0;
      v[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
      sum += v[i];
    }
    for (double& x : v) x /= sum;
    return v;
  }();
  return k;
}

// Weighted window statistic at (r, c): sum over the 11x11 patch of
// w(i) * w(j) * f(i, j).
template <typename F>
double window_sum(const std::vector<double>& k, int r, int c, F f) {
  double acc = 0.0;
  for (int i = 0; i < kWin; ++i) {
    double row = 0.0;
    for (int j = 0; j < kWin; ++j) row += k[j] * f(r + i, c + j);
    acc += k[i] * row;
  }
  return acc;
}

}  // namespace

double ssim(const Grid& a, const Grid& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw ShapeError("ssim: grids differ in shape");
  if (a.rows < kWin || a.cols < kWin)
    throw SizeError("ssim: grid smaller than the 11x11 window");

  const auto& k = gaussian_kernel();
  double total = 0.0;
  int count = 0;
  for (int r = 0; r + kWin <= a.rows; ++r) {
    for (int c = 0; c + kWin <= a.cols; ++c) {
      double mu_a =
          window_sum(k, r, c, [&](int i, int j) { return (double)a.at(i, j); });
      double mu_b =
          window_sum(k, r, c, [&](int i, int j) { return (double)b.at(i, j); });
      double aa = window_sum(k, r, c, [&](int i, int j) {
        double v = a.at(i, j);
        return v * v;
      });
      double bb = window_sum(k, r, c, [&](int i, int j) {
        double v = b.at(i, j);
        return v * v;
      });
      double ab = window_sum(k, r, c, [&](int i, int j) {
        return (double)a.at(i, j) * (double)b.at(i, j);
      });
      double var_a = aa - mu_a * mu_a;
      double var_b = bb - mu_b * mu_b;
      double cov = ab - mu_a * mu_b;
      double num = (2.0 * mu_a * mu_b + kC1) * (2.0 * cov + kC2);
      double den = (mu_a * mu_a + mu_b * mu_b + kC1) * (var_a + var_b + kC2);
      total += num / den;
      ++count;
    }
  }
  return total / count;
}

GaussianStats fit_gaussian(const std::vector<std::vector<double>>& embeddings) {
  if (embeddings.size() < 2)
    throw InsufficientData("fit_gaussian: need at least 2 embeddings, got " +
                           std::to_string(embeddings.size()));
  size_t n = embeddings.size();
  size_t d = embeddings[0].size();
  for (const auto& e : embeddings)
    if (e.size() != d) throw ShapeError("fit_gaussian: ragged embedding list");

  GaussianStats s;
  s.count = static_cast<int>(n);
  s.mean.assign(d, 0.0);
  for (const auto& e : embeddings)
    for (size_t i = 0; i < d; ++i) s.mean[i] += e[i];
  for (double& m : s.mean) m /= static_cast<double>(n);

  s.covariance.assign(d, std::vector<double>(d, 0.0));
  for (const auto& e : embeddings)
    for (size_t i = 0; i < d; ++i)
      for (size_t j = 0; j <= i; ++j)
        s.covariance[i][j] += (e[i] - s.mean[i]) * (e[j] - s.mean[j]);
  double denom = static_cast<double>(n - 1);
  for (size_t i = 0; i < d; ++i)
    for (size_t j = 0; j <= i; ++j) {
      s.covariance[i][j] /= denom;
      s.covariance[j][i] = s.covariance[i][j];
    }
  return s;
}

double frechet_distance(const GaussianStats& s1, const GaussianStats& s2) {
  size_t d = s1.mean.size();
  if (d != s2.mean.size())
    throw ShapeError("frechet_distance: dimension mismatch");

  Eigen::MatrixXd c1(d, d), c2(d, d);
  for (size_t i = 0; i < d; ++i)
    for (size_t j = 0; j < d; ++j) {
      c1(i, j) = s1.covariance[i][j];
      c2(i, j) = s2.covariance[i][j];
    }

  double mean_term = 0.0;
  for (size_t i = 0; i < d; ++i) {
    double diff = s1.mean[i] - s2.mean[i];
    mean_term += diff * diff;
  }

  Eigen::MatrixXd prod = c1 * c2;
  Eigen::MatrixXd sym = 0.5 * (prod + prod.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success)
    throw NumericalError("frechet_distance: eigendecomposition failed");

  double trace_sqrt = 0.0;
  for (size_t i = 0; i < d; ++i) {
    double ev = eig.eigenvalues()(static_cast<Eigen::Index>(i));
    if (ev > 0.0) trace_sqrt += std::sqrt(ev);
  }
  double result = mean_term + c1.trace() + c2.trace() - 2.0 * trace_sqrt;
  if (!std::isfinite(result))
    throw NumericalError("frechet_distance: non-finite result");
  return result < 0.0 ? 0.0 : result;
}

Embedder spectral_embedder() {
  Embedder e;
  e.name = "spectral_64";
  e.dimension = 64;
  e.evaluate = [](const AudioClip& clip) {
    StftConfig cfg;
    MelSpectrogram mel = mel_spectrogram(clip, cfg);
    const Grid& g = mel.values;
    constexpr int kBands = 32;
    int per_band = g.cols / kBands;
    std::vector<double> emb(64, 0.0);
    for (int band = 0; band < kBands; ++band) {
      double mean = 0.0, sq = 0.0;
      for (int r = 0; r < g.rows; ++r) {
        double v = 0.0;
        for (int m = 0; m < per_band; ++m)
          v += g.at(r, band * per_band + m);
        v /= per_band;
        mean += v;
        sq += v * v;
      }
      mean /= g.rows;
      sq /= g.rows;
      double var = sq - mean * mean;
      emb[band] = mean;
      emb[kBands + band] = std::sqrt(var > 0.0 ? var : 0.0);
    }
    return emb;
  };
  return e;
}

std::vector<std::vector<double>> load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open embeddings: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        size_t pos = 0;
        row.push_back(std::stod(cell, &pos));
        while (pos < cell.size() && std::isspace((unsigned char)cell[pos]))
          ++pos;
        if (pos != cell.size())
          throw FormatError("bad embedding value: '" + cell + "'");
      } catch (const std::invalid_argument&) {
        throw FormatError("bad embedding value: '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows[0].size())
      throw FormatError("ragged embedding row " +
                        std::to_string(rows.size() + 1));
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_embeddings(const std::vector<std::vector<double>>& embeddings,
                     const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write embeddings: " + path);
  char num[64];
  for (const auto& row : embeddings) {
    for (size_t i = 0; i < row.size(); ++i) {
      std::snprintf(num, sizeof num, "%.17g", row[i]);
      out << (i ? "," : "") << num;
    }
    out << "\n";
  }
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["pairs"] = nlohmann::json::array();
  for (const auto& p : pairs) {
    nlohmann::json e;
    e["source"] = p.source;
    e["target"] = p.target;
    e["ssim_recon"] = p.ssim_recon;
    e["ssim_cyclic"] = p.ssim_cyclic;
    e["fad"] = p.fad;
    e["n_excerpts"] = p.n_excerpts;
    e["n_clips"] = p.n_clips;
    j["pairs"].push_back(e);
  }
  j["warnings"] = warnings;
  return j.dump(2);
}

std::string EvalReport::to_csv() const {
  std::string out = "pair,metric,value\n";
  char num[64];
  for (const auto& p : pairs) {
    std::string pair = p.source + "-" + p.target;
    auto row = [&](const char* metric, double v) {
      std::snprintf(num, sizeof num, "%.9g", v);
      out += pair + "," + metric + "," + num + "\n";
    };
    row("ssim_recon", p.ssim_recon);
    row("ssim_cyclic", p.ssim_cyclic);
    row("fad", p.fad);
  }
  return out;
}

namespace {

Grid patch_to_grid(const Tensor4& t) {
  Grid g(kPatchSize, kPatchSize);
  for (int f = 0; f < kPatchSize; ++f)
    for (int m = 0; m < kPatchSize; ++m)
      g.at(f, m) = t.at(0, 0, m, f);
  return g;
}

Tensor4 grid_to_patch(const Grid& g, int start) {
  Tensor4 t(1, 1, kPatchSize, kPatchSize);
  for (int f = 0; f < kPatchSize; ++f)
    for (int m = 0; m < kPatchSize; ++m)
      t.at(0, 0, m, f) = g.at(start + f, m);
  return t;
}

}  // namespace

EvalReport evaluate_pairs(const TranslatorFactory& factory,
                          const DatasetManifest& manifest,
                          const std::vector<std::string>& domains,
                          const EvalConfig& cfg) {
  Embedder embed = spectral_embedder();

  // Per-domain preprocessed test clips and their mel grids.
  std::map<std::string, std::vector<AudioClip>> test_clips;
  std::map<std::string, std::vector<MelSpectrogram>> test_mels;
  for (const auto& name : domains) {
    for (const auto& path : manifest.domain(name).paths_for(Split::kTest)) {
      AudioClip clip = read_wav(path);
      clip = resample(clip, kPipelineSampleRate);
      clip = rms_normalize(clip);
      clip = mask_silence(clip);
      test_clips[name].push_back(clip);
      test_mels[name].push_back(mel_spectrogram(clip, cfg.stft));
    }
    if (test_clips[name].empty())
      throw InsufficientData("domain '" + name + "' has no test clips");
  }

  std::map<std::string, GaussianStats> real_stats;
  if (cfg.compute_fad) {
    for (const auto& name : domains) {
      std::vector<std::vector<double>> embs;
      for (const auto& path : manifest.domain(name).paths_for(cfg.reference_split)) {
        AudioClip clip = read_wav(path);
        clip = resample(clip, kPipelineSampleRate);
        embs.push_back(embed.evaluate(clip));
      }
      real_stats[name] = fit_gaussian(embs);
    }
  }

  EvalReport report;
  for (const auto& src : domains) {
    for (const auto& dst : domains) {
      if (src == dst) continue;
      auto t_self = factory(src, src);
      auto t_fwd = factory(src, dst);
      auto t_back = factory(dst, src);

      PairMetrics pm;
      pm.source = src;
      pm.target = dst;
      pm.n_clips = static_cast<int>(test_mels[src].size());

      double ssim_recon = 0.0, ssim_cyclic = 0.0;
      std::vector<std::vector<double>> fake_embs;
      for (size_t ci = 0; ci < test_mels[src].size(); ++ci) {
        const MelSpectrogram& mel = test_mels[src][ci];
        for (int start = 0; start + kPatchSize <= mel.values.rows;
             start += cfg.excerpt_stride) {
          Tensor4 x = grid_to_patch(mel.values, start);
          Grid gx = patch_to_grid(x);
          ssim_recon += ssim(gx, patch_to_grid(t_self->translate(x)));
          ssim_cyclic +=
              ssim(gx, patch_to_grid(t_back->translate(t_fwd->translate(x))));
          ++pm.n_excerpts;
        }
        if (cfg.compute_fad) {
          MelSpectrogram moved = transfer_full(mel, *t_fwd);
          Grid mag = invert_mel(moved, cfg.stft);
          AudioClip fake =
              fast_griffin_lim(mag, cfg.stft, cfg.griffin_lim_iters).clip;
          fake_embs.push_back(embed.evaluate(fake));
        }
      }
      if (pm.n_excerpts == 0)
        throw InsufficientData("domain '" + src + "' test clips are too short");
      pm.ssim_recon = ssim_recon / pm.n_excerpts;
      pm.ssim_cyclic = ssim_cyclic / pm.n_excerpts;
      if (cfg.compute_fad)
        pm.fad = frechet_distance(real_stats[dst], fit_gaussian(fake_embs));
      if (pm.ssim_cyclic > pm.ssim_recon)
        report.warnings.push_back("pair " + src + "-" + dst +
                                  ": cyclic SSIM exceeds one-pass SSIM");
      report.pairs.push_back(std::move(pm));
    }
  }

  if (!cfg.out_json.empty()) {
    std::ofstream out(cfg.out_json, std::ios::trunc);
    if (!out) throw IoError("cannot write report: " + cfg.out_json);
    out << report.to_json() << "\n";
  }
  if (!cfg.out_csv.empty()) {
    std::ofstream out(cfg.out_csv, std::ios::trunc);
    if (!out) throw IoError("cannot write report: " + cfg.out_csv);
    out << report.to_csv();
  }
  return report;
}

EvalReport evaluate_model(const ModelBundle& bundle,
                          const DatasetManifest& manifest,
                          const EvalConfig& cfg) {
  TranslatorFactory factory = [&bundle](const std::string& /*source*/,
                                        const std::string& target) {
    return std::make_unique<BundleTranslator>(bundle, target);
  };
  return evaluate_pairs(factory, manifest, bundle.domains, cfg);
}

}  // namespace timbre

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "timbre/audio.hpp"
#include "timbre/dataset.hpp"
#include "timbre/inference.hpp"
#include "timbre/melspec.hpp"
#include "timbre/model.hpp"

namespace timbre {

// Mean structural similarity over all 11x11 windows fully inside the grids.
// Gaussian weighting sigma 1.5, K1=0.01, K2=0.03, data range 1.0.
double ssim(const Grid& a, const Grid& b);

struct GaussianStats {
  std::vector<double> mean;
  std::vector<std::vector<double>> covariance;  // symmetric
  int count = 0;
};

// Sample mean and unbiased sample covariance, symmetrized.
GaussianStats fit_gaussian(const std::vector<std::vector<double>>& embeddings);

// ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}), clamped at zero.
double frechet_distance(const GaussianStats& s1, const GaussianStats& s2);

struct Embedder {
  std::string name;
  int dimension = 0;
  std::function<std::vector<double>(const AudioClip&)> evaluate;
};

// 64-dim clip summary: the 128 mel bins pooled into 32 bands, each band
// described by its mean and standard deviation over time.
Embedder spectral_embedder();

// CSV, one embedding per row, no header. Ragged rows -> FormatError.
std::vector<std::vector<double>> load_embeddings(const std::string& path);
void save_embeddings(const std::vector<std::vector<double>>& embeddings,
                     const std::string& path);

struct EvalConfig {
  StftConfig stft;
  int excerpt_stride = kPatchSize;  // deterministic excerpt grid
  Split reference_split = Split::kTrain;  // real side of the FAD comparison
  bool compute_fad = true;
  int griffin_lim_iters = 60;
  std::string out_json;  // written when non-empty
  std::string out_csv;
};

struct PairMetrics {
  std::string source;
  std::string target;
  double ssim_recon = 0.0;
  double ssim_cyclic = 0.0;
  double fad = 0.0;
  int n_excerpts = 0;
  int n_clips = 0;
};

struct EvalReport {
  std::vector<PairMetrics> pairs;
  // soft-check notes, e.g. a pair whose cyclic SSIM beats its one-pass SSIM
  std::vector<std::string> warnings;

  std::string to_json() const;
  std::string to_csv() const;  // pair,metric,value rows
};

using TranslatorFactory = std::function<std::unique_ptr<PatchTranslator>(
    const std::string& source, const std::string& target)>;

// Evaluates every ordered domain pair: one-pass and cyclic reconstruction
// SSIM over test excerpts, FAD between real target audio and transfers.
EvalReport evaluate_pairs(const TranslatorFactory& factory,
                          const DatasetManifest& manifest,
                          const std::vector<std::string>& domains,
                          const EvalConfig& cfg);

EvalReport evaluate_model(const ModelBundle& bundle,
                          const DatasetManifest& manifest,
                          const EvalConfig& cfg);

}  // namespace timbre

#pragma once

#include <cmath>
#include <filesystem>
#include <string>

#include "timbre/audio.hpp"
#include "timbre/common.hpp"
#include "timbre/tensor.hpp"

namespace testutil {

inline timbre::AudioClip sine(double freq_hz, double seconds, int rate,
                              double amplitude = 0.5) {
  timbre::AudioClip clip;
  clip.sample_rate = rate;
  int n = static_cast<int>(seconds * rate);
  clip.samples.resize(n);
  for (int i = 0; i < n; ++i)
    clip.samples[i] =
        static_cast<float>(amplitude * std::sin(2.0 * M_PI * freq_hz * i / rate));
  return clip;
}

inline timbre::AudioClip noise(double seconds, int rate, uint64_t seed,
                               double amplitude = 0.3) {
  timbre::AudioClip clip;
  clip.sample_rate = rate;
  int n = static_cast<int>(seconds * rate);
  clip.samples.resize(n);
  timbre::Rng rng(seed);
  for (int i = 0; i < n; ++i)
    clip.samples[i] =
        static_cast<float>(amplitude * (2.0 * rng.uniform() - 1.0));
  return clip;
}

// Harmonic tone with a fixed per-harmonic envelope; the envelope is the
// timbre identity used by synthetic-domain tests.
inline timbre::AudioClip harmonic_tone(double f0, double seconds, int rate,
                                       const std::vector<double>& envelope,
                                       double amplitude = 0.4) {
  timbre::AudioClip clip;
  clip.sample_rate = rate;
  int n = static_cast<int>(seconds * rate);
  clip.samples.resize(n);
  for (int i = 0; i < n; ++i) {
    double v = 0.0;
    for (size_t h = 0; h < envelope.size(); ++h) {
      double f = f0 * (h + 1);
      if (f >= rate / 2.0) break;
      v += envelope[h] * std::sin(2.0 * M_PI * f * i / rate);
    }
    clip.samples[i] = static_cast<float>(amplitude * v);
  }
  return clip;
}

inline timbre::Grid random_grid(int rows, int cols, uint64_t seed) {
  timbre::Grid g(rows, cols);
  timbre::Rng rng(seed);
  for (auto& v : g.v) v = static_cast<float>(rng.uniform());
  return g;
}

template <typename T>
timbre::Tensor4T<T> random_tensor(int n, int c, int h, int w, uint64_t seed,
                                  double scale = 1.0) {
  timbre::Tensor4T<T> t(n, c, h, w);
  timbre::Rng rng(seed);
  for (auto& v : t.v) v = static_cast<T>(scale * (2.0 * rng.uniform() - 1.0));
  return t;
}

// Fresh scratch directory under the system temp root.
inline std::string scratch_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("timbre_test_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace testutil

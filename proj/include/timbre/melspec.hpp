#pragma once

#include <limits>
#include <string>
#include <vector>

#include "timbre/audio.hpp"
#include "timbre/tensor.hpp"

namespace timbre {

struct StftConfig {
  int n_fft = 800;
  int hop = 200;
  int n_mels = 128;
  int sample_rate = 16000;
  bool center = true;

  int n_bins() const { return n_fft / 2 + 1; }

  void validate() const {
    if (hop <= 0 || hop > n_fft)
      throw ConfigError("StftConfig: hop must be in (0, n_fft]");
    if (n_mels <= 0 || n_mels > n_bins())
      throw ConfigError("StftConfig: n_mels must be in (0, n_fft/2+1]");
  }
};

// frames x n_mels grid of min-max-normalized log-mel magnitudes, with the
// pre-normalization extrema kept for inversion.
struct MelSpectrogram {
  Grid values;  // rows = frames, cols = mel bins
  // NaN until populated by mel_spectrogram; inversion requires them
  float norm_min = std::numeric_limits<float>::quiet_NaN();
  float norm_max = std::numeric_limits<float>::quiet_NaN();
  int sample_rate = 16000;
  int hop = 200;

  int frames() const { return values.rows; }
  int mels() const { return values.cols; }
};

constexpr float kLogFloor = 1e-5f;

// STFT magnitudes, frames x (n_fft/2+1). With center=true the signal is
// reflect-padded by n_fft/2 and the frame count is floor(len/hop) so that
// 1.6 s at 16 kHz maps to exactly 128 frames.
Grid stft_magnitude(const AudioClip& clip, const StftConfig& cfg);

// HTK-mel triangular filterbank, n_mels x (n_fft/2+1).
Grid mel_filterbank(const StftConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Filter center frequencies in Hz, one per mel bin.
std::vector<double> mel_centers_hz(const StftConfig& cfg);

MelSpectrogram mel_spectrogram(const AudioClip& clip, const StftConfig& cfg);

// Denormalize, undo the log, and map back through the filterbank via its
// clamped right pseudo-inverse. Output is a non-negative frames x bins grid.
Grid invert_mel(const MelSpectrogram& mel, const StftConfig& cfg);

struct GriffinLimResult {
  AudioClip clip;
  double initial_error = 0.0;  // spectral convergence at iteration 1
  double final_error = 0.0;    // spectral convergence of the returned signal
};

GriffinLimResult fast_griffin_lim(const Grid& magnitude, const StftConfig& cfg,
                                  int iters = 60, double momentum = 0.99);

// Grayscale PNG, one pixel per cell, frequency axis bottom-to-top.
void write_image(const MelSpectrogram& mel, const std::string& path);

// Binary spectrogram cache (magic MELS).
void write_mel_cache(const MelSpectrogram& mel, const std::string& path);
MelSpectrogram read_mel_cache(const std::string& path);

}  // namespace timbre

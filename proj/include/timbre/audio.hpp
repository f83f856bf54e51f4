#pragma once

#include <string>
#include <vector>

#include "timbre/common.hpp"

namespace timbre {

// Mono audio buffer, samples clamped to [-1, 1] on ingest.
struct AudioClip {
  std::vector<float> samples;
  int sample_rate = 16000;

  bool empty() const { return samples.empty(); }
  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

constexpr int kPipelineSampleRate = 16000;

// WAV I/O. Reads 16-bit PCM and 32-bit float, mono or stereo (stereo is
// downmixed by channel averaging). Writes 16-bit PCM mono.
AudioClip read_wav(const std::string& path);
void write_wav(const AudioClip& clip, const std::string& path);

// Band-limited (windowed-sinc) resampling. Bitwise no-op when the rates
// already match.
AudioClip resample(const AudioClip& clip, int target_rate);

// If the clip's RMS level is below target_db (dBFS), scale it up to that
// level; clips at or above the target pass through unchanged. An all-zero
// clip is returned unchanged and reported via `warning` when non-null.
AudioClip rms_normalize(const AudioClip& clip, double target_db = -30.0,
                        std::string* warning = nullptr);

double rms_db(const AudioClip& clip);

// Zero-fill contiguous runs of sub-threshold frames at least min_gap_ms long.
// Output length always equals input length.
AudioClip mask_silence(const AudioClip& clip, double frame_ms = 25.0,
                       double threshold_db = -60.0, double min_gap_ms = 500.0);

}  // namespace timbre

#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "timbre/audio.hpp"
#include "timbre/melspec.hpp"
#include "timbre/model.hpp"

namespace timbre {

struct WindowPlan {
  int start = 0;  // first frame of the window
};

// How the `overlap` count maps to a window stride.
enum class OverlapMode {
  kWindowsPerFrame,  // stride = 128 / overlap; each frame sees `overlap` windows
  kSharedFrames,     // stride = 128 - overlap; consecutive windows share frames
};

// Fixed-size analysis windows covering `total_frames` frames; the last
// window is aligned to the final frame so no tail is dropped. Throws
// ShortAudio below one window.
std::vector<WindowPlan> plan_windows(int total_frames, int overlap = 4,
                                     OverlapMode mode = OverlapMode::kWindowsPerFrame);

// Maps one normalized 128x128 mel patch to another.
class PatchTranslator {
 public:
  virtual ~PatchTranslator() = default;
  virtual Tensor4 translate(const Tensor4& patch) = 0;
};

// Encoder + target-domain decoder of a trained bundle. Deterministic mode
// decodes the latent mean; otherwise noise from `rng` is added.
class BundleTranslator : public PatchTranslator {
 public:
  BundleTranslator(const ModelBundle& bundle, std::string target_domain,
                   bool deterministic = true, uint64_t noise_seed = 0);
  Tensor4 translate(const Tensor4& patch) override;

 private:
  const ModelBundle& bundle_;
  std::string target_;
  bool deterministic_;
  Rng rng_;
};

class IdentityTranslator : public PatchTranslator {
 public:
  Tensor4 translate(const Tensor4& patch) override { return patch; }
};

// Runs the translator over every planned window of a full spectrogram and
// averages overlapping outputs. Normalization stats carry over unchanged.
MelSpectrogram transfer_full(const MelSpectrogram& mel,
                             PatchTranslator& translator, int overlap = 4,
                             OverlapMode mode = OverlapMode::kWindowsPerFrame);

using Vocoder = std::function<AudioClip(const Grid& magnitude,
                                        const StftConfig& cfg)>;

// Registered waveform reconstruction backends, keyed by name.
// "griffin_lim" is always available. Unknown name -> ConfigError.
Vocoder vocoder_by_name(const std::string& name);
std::vector<std::string> vocoder_names();

struct EndToEndOptions {
  int overlap = 4;
  OverlapMode overlap_mode = OverlapMode::kWindowsPerFrame;
  std::string vocoder = "griffin_lim";
  int griffin_lim_iters = 60;
  std::string png_dir;  // when set, input/output spectrogram PNGs are written
};

struct EndToEndResult {
  AudioClip audio;
  MelSpectrogram input_mel;
  MelSpectrogram output_mel;
};

// WAV in, translated WAV out: preprocess, mel, windowed transfer, mel
// inversion, vocoder. Input shorter than one window -> ShortAudio.
EndToEndResult end_to_end(const std::string& wav_in,
                          const std::string& wav_out,
                          PatchTranslator& translator,
                          const StftConfig& cfg = {},
                          const EndToEndOptions& opts = {});

}  // namespace timbre

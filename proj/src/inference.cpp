#include "timbre/inference.hpp"

#include <cmath>
#include <map>

#include "timbre/common.hpp"

namespace timbre {

std::vector<WindowPlan> plan_windows(int total_frames, int overlap,
                                     OverlapMode mode) {
  int stride;
  if (mode == OverlapMode::kWindowsPerFrame) {
    if (overlap < 1 || kPatchSize % overlap != 0)
      throw ConfigError("overlap must divide the window size of " +
                        std::to_string(kPatchSize));
    stride = kPatchSize / overlap;
  } else {
    if (overlap < 0 || overlap >= kPatchSize)
      throw ConfigError("shared-frame overlap must be in [0, " +
                        std::to_string(kPatchSize) + ")");
    stride = kPatchSize - overlap;
  }
  if (total_frames < kPatchSize)
    throw ShortAudio("need at least " + std::to_string(kPatchSize) +
                     " frames, got " + std::to_string(total_frames));
  std::vector<WindowPlan> plan;
  for (int start = 0; start + kPatchSize <= total_frames; start += stride)
    plan.push_back({start});
  int tail = total_frames - kPatchSize;
  if (plan.back().start != tail) plan.push_back({tail});
  return plan;
}

BundleTranslator::BundleTranslator(const ModelBundle& bundle,
                                   std::string target_domain,
                                   bool deterministic, uint64_t noise_seed)
    : bundle_(bundle),
      target_(std::move(target_domain)),
      deterministic_(deterministic),
      rng_(noise_seed) {
  bundle_.decoder(target_);  // validates the domain up front
}

Tensor4 BundleTranslator::translate(const Tensor4& patch) {
  Tensor4 z = bundle_.encode_value(patch);
  if (!deterministic_)
    for (float& v : z.v) v += static_cast<float>(rng_.normal());
  return bundle_.decode_value(z, target_);
}

MelSpectrogram transfer_full(const MelSpectrogram& mel,
                             PatchTranslator& translator, int overlap,
                             OverlapMode mode) {
  const Grid& in = mel.values;
  if (in.cols != kPatchSize)
    throw ShapeError("expected " + std::to_string(kPatchSize) +
                     " mel bins, got " + std::to_string(in.cols));
  auto plan = plan_windows(in.rows, overlap, mode);

  // double accumulation so averaging k identical window outputs returns
  // the value bit-exactly (pure-identity invariant)
  std::vector<double> sum(in.v.size(), 0.0);
  std::vector<int> counts(in.rows, 0);

  Tensor4 patch(1, 1, kPatchSize, kPatchSize);
  for (const auto& win : plan) {
    for (int f = 0; f < kPatchSize; ++f)
      for (int m = 0; m < kPatchSize; ++m)
        patch.at(0, 0, m, f) = in.at(win.start + f, m);
    Tensor4 out = translator.translate(patch);
    if (out.n != 1 || out.c != 1 || out.h != kPatchSize || out.w != kPatchSize)
      throw ShapeError("translator returned " + out.shape_str());
    for (int f = 0; f < kPatchSize; ++f) {
      for (int m = 0; m < kPatchSize; ++m)
        sum[static_cast<size_t>(win.start + f) * in.cols + m] +=
            out.at(0, 0, m, f);
      ++counts[win.start + f];
    }
  }

  MelSpectrogram result = mel;
  for (int r = 0; r < in.rows; ++r)
    for (int c = 0; c < in.cols; ++c)
      result.values.at(r, c) = static_cast<float>(
          sum[static_cast<size_t>(r) * in.cols + c] / counts[r]);
  return result;
}

Vocoder vocoder_by_name(const std::string& name) {
  if (name == "griffin_lim")
    return [](const Grid& magnitude, const StftConfig& cfg) {
      return fast_griffin_lim(magnitude, cfg).clip;
    };
  throw ConfigError("unknown vocoder: " + name);
}

std::vector<std::string> vocoder_names() { return {"griffin_lim"}; }

EndToEndResult end_to_end(const std::string& wav_in, const std::string& wav_out,
                          PatchTranslator& translator, const StftConfig& cfg,
                          const EndToEndOptions& opts) {
  AudioClip clip = read_wav(wav_in);
  clip = resample(clip, kPipelineSampleRate);
  clip = rms_normalize(clip);
  clip = mask_silence(clip);

  EndToEndResult result;
  result.input_mel = mel_spectrogram(clip, cfg);
  result.output_mel = transfer_full(result.input_mel, translator, opts.overlap,
                                    opts.overlap_mode);

  Grid magnitude = invert_mel(result.output_mel, cfg);
  if (opts.vocoder == "griffin_lim") {
    result.audio = fast_griffin_lim(magnitude, cfg, opts.griffin_lim_iters).clip;
  } else {
    result.audio = vocoder_by_name(opts.vocoder)(magnitude, cfg);
  }
  write_wav(result.audio, wav_out);

  if (!opts.png_dir.empty()) {
    write_image(result.input_mel, opts.png_dir + "/input.png");
    write_image(result.output_mel, opts.png_dir + "/output.png");
  }
  return result;
}

}  // namespace timbre

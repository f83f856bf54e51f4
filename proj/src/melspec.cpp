#include "timbre/melspec.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <limits>

#include <Eigen/Dense>

#include "timbre/dsp.hpp"
#include "timbre/image.hpp"

namespace timbre {

namespace {

// reflection without edge repetition; valid for any p with |p| < 2*len
int reflect_index(int p, int len) {
  if (len == 1) return 0;
  while (p < 0 || p >= len) {
    if (p < 0) p = -p;
    if (p >= len) p = 2 * (len - 1) - p;
  }
  return p;
}

int frame_count(size_t len, const StftConfig& cfg) {
  if (cfg.center) {
    int frames = static_cast<int>(len / cfg.hop);
    if (frames < 1)
      throw ShortAudio("stft: clip needs at least " + std::to_string(cfg.hop) +
                       " samples (got " + std::to_string(len) + ")");
    return frames;
  }
  if (len < static_cast<size_t>(cfg.n_fft))
    throw ShortAudio("stft: clip needs at least " + std::to_string(cfg.n_fft) +
                     " samples (got " + std::to_string(len) + ")");
  return 1 + static_cast<int>((len - cfg.n_fft) / cfg.hop);
}

std::vector<double> padded_signal(const std::vector<float>& x,
                                  const StftConfig& cfg) {
  const int len = static_cast<int>(x.size());
  if (!cfg.center) return std::vector<double>(x.begin(), x.end());
  const int pad = cfg.n_fft / 2;
  std::vector<double> out(len + 2 * pad);
  for (int i = 0; i < len + 2 * pad; ++i)
    out[i] = x[reflect_index(i - pad, len)];
  return out;
}

using ComplexFrames = std::vector<std::vector<std::complex<double>>>;

ComplexFrames stft_complex(const std::vector<float>& x, const StftConfig& cfg) {
  cfg.validate();
  const int frames = frame_count(x.size(), cfg);
  const auto padded = padded_signal(x, cfg);
  const auto window = dsp::hann_window(cfg.n_fft);
  ComplexFrames out(frames);
  std::vector<double> seg(cfg.n_fft);
  for (int t = 0; t < frames; ++t) {
    const size_t off = static_cast<size_t>(t) * cfg.hop;
    for (int i = 0; i < cfg.n_fft; ++i) seg[i] = padded[off + i] * window[i];
    out[t] = dsp::rfft(seg);
  }
  return out;
}

std::vector<float> istft(const ComplexFrames& frames, const StftConfig& cfg,
                         size_t out_len) {
  const auto window = dsp::hann_window(cfg.n_fft);
  const int pad = cfg.center ? cfg.n_fft / 2 : 0;
  const size_t acc_len = (frames.size() - 1) * cfg.hop + cfg.n_fft;
  std::vector<double> acc(acc_len, 0.0), wsum(acc_len, 0.0);
  for (size_t t = 0; t < frames.size(); ++t) {
    auto seg = dsp::irfft(frames[t], cfg.n_fft);
    const size_t off = t * cfg.hop;
    for (int i = 0; i < cfg.n_fft; ++i) {
      acc[off + i] += seg[i] * window[i];
      wsum[off + i] += window[i] * window[i];
    }
  }
  std::vector<float> out(out_len, 0.0f);
  for (size_t i = 0; i < out_len; ++i) {
    const size_t j = i + pad;
    if (j < acc_len)
      out[i] = static_cast<float>(acc[j] / (wsum[j] + 1e-12));
  }
  return out;
}

double spectral_convergence(const ComplexFrames& s, const Grid& mag) {
  double num = 0.0, den = 0.0;
  for (int t = 0; t < mag.rows; ++t)
    for (int k = 0; k < mag.cols; ++k) {
      const double m = mag.at(t, k);
      const double d = std::abs(s[t][k]) - m;
      num += d * d;
      den += m * m;
    }
  if (den <= 0.0) return 0.0;
  return std::sqrt(num / den);
}

Eigen::MatrixXd filterbank_matrix(const StftConfig& cfg) {
  const Grid fb = mel_filterbank(cfg);
  Eigen::MatrixXd m(fb.rows, fb.cols);
  for (int r = 0; r < fb.rows; ++r)
    for (int c = 0; c < fb.cols; ++c) m(r, c) = fb.at(r, c);
  return m;
}

}  // namespace

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

Grid stft_magnitude(const AudioClip& clip, const StftConfig& cfg) {
  if (clip.empty()) throw EmptyAudio("stft: empty clip");
  const auto frames = stft_complex(clip.samples, cfg);
  Grid mag(static_cast<int>(frames.size()), cfg.n_bins());
  for (int t = 0; t < mag.rows; ++t)
    for (int k = 0; k < mag.cols; ++k)
      mag.at(t, k) = static_cast<float>(std::abs(frames[t][k]));
  return mag;
}

std::vector<double> mel_centers_hz(const StftConfig& cfg) {
  const double mel_hi = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> centers(cfg.n_mels);
  for (int i = 0; i < cfg.n_mels; ++i)
    centers[i] = mel_to_hz(mel_hi * (i + 1) / (cfg.n_mels + 1));
  return centers;
}

Grid mel_filterbank(const StftConfig& cfg) {
  cfg.validate();
  const int bins = cfg.n_bins();
  const double mel_hi = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    edges[i] = mel_to_hz(mel_hi * i / (cfg.n_mels + 1));

  Grid fb(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], ctr = edges[m + 1], hi = edges[m + 2];
    bool any = false;
    for (int k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * cfg.sample_rate / cfg.n_fft;
      double w = 0.0;
      if (hz > lo && hz < hi)
        w = std::min((hz - lo) / (ctr - lo), (hi - hz) / (hi - ctr));
      fb.at(m, k) = static_cast<float>(std::max(0.0, w));
      any = any || fb.at(m, k) > 0.0f;
    }
    if (!any) {
      // degenerate configs: assign the bin nearest the filter center
      int k = static_cast<int>(std::lround(ctr * cfg.n_fft / cfg.sample_rate));
      fb.at(m, std::clamp(k, 0, bins - 1)) = 1.0f;
    }
  }
  return fb;
}

MelSpectrogram mel_spectrogram(const AudioClip& clip, const StftConfig& cfg) {
  const Grid mag = stft_magnitude(clip, cfg);
  const Grid fb = mel_filterbank(cfg);

  MelSpectrogram mel;
  mel.sample_rate = cfg.sample_rate;
  mel.hop = cfg.hop;
  mel.values = Grid(mag.rows, cfg.n_mels);

  float lo = std::numeric_limits<float>::max();
  float hi = std::numeric_limits<float>::lowest();
  for (int t = 0; t < mag.rows; ++t)
    for (int m = 0; m < cfg.n_mels; ++m) {
      double acc = 0.0;
      for (int k = 0; k < mag.cols; ++k)
        acc += static_cast<double>(fb.at(m, k)) * mag.at(t, k);
      const float lg = static_cast<float>(std::log(acc + kLogFloor));
      mel.values.at(t, m) = lg;
      lo = std::min(lo, lg);
      hi = std::max(hi, lg);
    }
  mel.norm_min = lo;
  mel.norm_max = hi;
  if (hi > lo) {
    const float scale = 1.0f / (hi - lo);
    for (float& v : mel.values.v) v = (v - lo) * scale;
  } else {
    for (float& v : mel.values.v) v = 0.5f;
  }
  return mel;
}

Grid invert_mel(const MelSpectrogram& mel, const StftConfig& cfg) {
  if (std::isnan(mel.norm_min) || std::isnan(mel.norm_max))
    throw MissingStats("invert_mel: normalization stats missing");
  if (mel.values.cols != cfg.n_mels)
    throw ShapeError("invert_mel: mel bin count mismatch");

  const int frames = mel.frames();
  const Eigen::MatrixXd fb = filterbank_matrix(cfg);

  // denormalize and undo the log
  Eigen::MatrixXd melpow(cfg.n_mels, frames);
  const double span = static_cast<double>(mel.norm_max) - mel.norm_min;
  for (int t = 0; t < frames; ++t)
    for (int m = 0; m < cfg.n_mels; ++m) {
      const double lg = mel.norm_min + span * mel.values.at(t, m);
      melpow(m, t) = std::max(0.0, std::exp(lg) - kLogFloor);
    }

  // clamped right pseudo-inverse start, then multiplicative refinements that
  // match the mel projection in ratio (not absolute) terms, which is what
  // the log-domain round-trip tolerance actually measures
  Eigen::MatrixXd gram = fb * fb.transpose();
  gram.diagonal().array() += 1e-10;
  Eigen::MatrixXd mag = (fb.transpose() * gram.ldlt().solve(melpow)).cwiseMax(1e-10);
  Eigen::VectorXd colsum = fb.colwise().sum();
  for (int it = 0; it < 30; ++it) {
    Eigen::MatrixXd ratio =
        melpow.array() / ((fb * mag).array() + 1e-300);
    Eigen::MatrixXd upd = fb.transpose() * ratio;
    for (int c = 0; c < fb.cols(); ++c)
      for (int t = 0; t < frames; ++t)
        mag(c, t) *= colsum(c) > 0.0 ? upd(c, t) / colsum(c) : 0.0;
  }

  Grid out(frames, cfg.n_bins());
  for (int t = 0; t < frames; ++t)
    for (int k = 0; k < cfg.n_bins(); ++k)
      out.at(t, k) = static_cast<float>(std::max(0.0, mag(k, t)));
  return out;
}

GriffinLimResult fast_griffin_lim(const Grid& magnitude, const StftConfig& cfg,
                                  int iters, double momentum) {
  if (iters < 1) throw ConfigError("fast_griffin_lim: iters must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0)
    throw ConfigError("fast_griffin_lim: momentum must be in [0, 1)");
  cfg.validate();
  const int frames = magnitude.rows;
  const int bins = magnitude.cols;
  if (bins != cfg.n_bins())
    throw ShapeError("fast_griffin_lim: magnitude bin count mismatch");

  const size_t out_len = cfg.center
                             ? static_cast<size_t>(frames) * cfg.hop
                             : static_cast<size_t>(frames - 1) * cfg.hop + cfg.n_fft;

  // zero initial phase
  ComplexFrames c(frames, std::vector<std::complex<double>>(bins));
  for (int t = 0; t < frames; ++t)
    for (int k = 0; k < bins; ++k) c[t][k] = {magnitude.at(t, k), 0.0};
  ComplexFrames t_prev = c;

  GriffinLimResult result;
  double best_err = std::numeric_limits<double>::max();
  std::vector<float> best_x;

  for (int it = 0; it < iters; ++it) {
    std::vector<float> x = istft(c, cfg, out_len);
    ComplexFrames s = stft_complex(x, cfg);
    // re-analysis can change the frame count by one for center=false edges
    if (static_cast<int>(s.size()) > frames) s.resize(frames);
    const double err = spectral_convergence(s, magnitude);
    if (it == 0) result.initial_error = err;
    if (err < best_err) {
      best_err = err;
      best_x = x;
    }
    // magnitude projection with momentum extrapolation
    for (int t = 0; t < frames; ++t)
      for (int k = 0; k < bins; ++k) {
        const double m = std::abs(s[t][k]);
        std::complex<double> proj =
            m > 1e-16 ? s[t][k] * (magnitude.at(t, k) / m)
                      : std::complex<double>(magnitude.at(t, k), 0.0);
        c[t][k] = proj + momentum * (proj - t_prev[t][k]);
        t_prev[t][k] = proj;
      }
  }

  result.final_error = best_err;
  result.clip.sample_rate = cfg.sample_rate;
  result.clip.samples = std::move(best_x);
  for (float& s : result.clip.samples) s = std::clamp(s, -1.0f, 1.0f);
  return result;
}

void write_image(const MelSpectrogram& mel, const std::string& path) {
  const int width = mel.frames();
  const int height = mel.mels();
  std::vector<uint8_t> pixels(static_cast<size_t>(width) * height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const float v = std::clamp(mel.values.at(x, height - 1 - y), 0.0f, 1.0f);
      pixels[static_cast<size_t>(y) * width + x] =
          static_cast<uint8_t>(std::lround(255.0f * v));
    }
  write_png_gray(path, width, height, pixels);
}

void write_mel_cache(const MelSpectrogram& mel, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write mel cache: " + path);
  out.write("MELS", 4);
  const uint32_t version = 1;
  const uint32_t frames = static_cast<uint32_t>(mel.frames());
  const uint32_t mels = static_cast<uint32_t>(mel.mels());
  out.write(reinterpret_cast<const char*>(&version), 4);
  out.write(reinterpret_cast<const char*>(&frames), 4);
  out.write(reinterpret_cast<const char*>(&mels), 4);
  out.write(reinterpret_cast<const char*>(&mel.norm_min), 4);
  out.write(reinterpret_cast<const char*>(&mel.norm_max), 4);
  out.write(reinterpret_cast<const char*>(mel.values.v.data()),
            static_cast<std::streamsize>(mel.values.v.size() * 4));
  if (!out) throw IoError("short write on mel cache: " + path);
}

MelSpectrogram read_mel_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read mel cache: " + path);
  char magic[4];
  in.read(magic, 4);
  if (std::strncmp(magic, "MELS", 4) != 0)
    throw FormatError("bad mel cache magic in " + path);
  uint32_t version = 0, frames = 0, mels = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (version != 1)
    throw VersionError("unsupported mel cache version in " + path);
  in.read(reinterpret_cast<char*>(&frames), 4);
  in.read(reinterpret_cast<char*>(&mels), 4);
  MelSpectrogram mel;
  in.read(reinterpret_cast<char*>(&mel.norm_min), 4);
  in.read(reinterpret_cast<char*>(&mel.norm_max), 4);
  mel.values = Grid(static_cast<int>(frames), static_cast<int>(mels));
  in.read(reinterpret_cast<char*>(mel.values.v.data()),
          static_cast<std::streamsize>(mel.values.v.size() * 4));
  if (!in) throw ChecksumError("truncated mel cache: " + path);
  return mel;
}

}  // namespace timbre

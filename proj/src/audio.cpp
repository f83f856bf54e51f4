#include "timbre/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace timbre {

namespace {

uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (uint32_t(b[3]) << 24);
}

uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return uint16_t(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, uint32_t v) {
  char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff),
               char((v >> 24) & 0xff)};
  out.write(b, 4);
}

void write_u16(std::ostream& out, uint16_t v) {
  char b[2] = {char(v & 0xff), char((v >> 8) & 0xff)};
  out.write(b, 2);
}

float clamp1(float x) { return std::clamp(x, -1.0f, 1.0f); }

}  // namespace

AudioClip read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open WAV file: " + path);

  char tag[5] = {0};
  in.read(tag, 4);
  if (std::strncmp(tag, "RIFF", 4) != 0)
    throw FormatError("not a RIFF file: " + path);
  read_u32(in);  // riff size
  in.read(tag, 4);
  if (std::strncmp(tag, "WAVE", 4) != 0)
    throw FormatError("not a WAVE file: " + path);

  uint16_t format = 0, channels = 0, bits = 0;
  uint32_t rate = 0;
  std::vector<char> data;
  bool have_fmt = false, have_data = false;

  while (in.read(tag, 4)) {
    uint32_t chunk_size = read_u32(in);
    if (std::strncmp(tag, "fmt ", 4) == 0) {
      format = read_u16(in);
      channels = read_u16(in);
      rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      if (chunk_size > 16) in.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::strncmp(tag, "data", 4) == 0) {
      data.resize(chunk_size);
      in.read(data.data(), chunk_size);
      have_data = true;
    } else {
      in.seekg(chunk_size + (chunk_size & 1), std::ios::cur);
    }
    if (have_fmt && have_data) break;
  }
  if (!have_fmt || !have_data)
    throw FormatError("missing fmt/data chunk: " + path);
  if (channels < 1 || channels > 2)
    throw FormatError("unsupported channel count in " + path);
  if (rate == 0) throw FormatError("zero sample rate in " + path);

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);

  if (format == 1 && bits == 16) {
    size_t n = data.size() / 2 / channels;
    clip.samples.resize(n);
    const unsigned char* p = reinterpret_cast<const unsigned char*>(data.data());
    for (size_t i = 0; i < n; ++i) {
      float acc = 0.0f;
      for (int ch = 0; ch < channels; ++ch) {
        size_t off = (i * channels + ch) * 2;
        int16_t s = int16_t(p[off] | (p[off + 1] << 8));
        acc += static_cast<float>(s) / 32768.0f;
      }
      clip.samples[i] = clamp1(acc / channels);
    }
  } else if (format == 3 && bits == 32) {
    size_t n = data.size() / 4 / channels;
    clip.samples.resize(n);
    const float* p = reinterpret_cast<const float*>(data.data());
    for (size_t i = 0; i < n; ++i) {
      float acc = 0.0f;
      for (int ch = 0; ch < channels; ++ch) acc += p[i * channels + ch];
      clip.samples[i] = clamp1(acc / channels);
    }
  } else {
    throw FormatError("unsupported WAV encoding (format " +
                      std::to_string(format) + ", " + std::to_string(bits) +
                      " bits) in " + path);
  }
  return clip;
}

void write_wav(const AudioClip& clip, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write WAV file: " + path);

  uint32_t data_bytes = static_cast<uint32_t>(clip.samples.size() * 2);
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<uint32_t>(clip.sample_rate));
  write_u32(out, static_cast<uint32_t>(clip.sample_rate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (float s : clip.samples) {
    float c = clamp1(s);
    int16_t q = static_cast<int16_t>(std::lrint(c * 32767.0f));
    write_u16(out, static_cast<uint16_t>(q));
  }
  if (!out) throw IoError("short write on WAV file: " + path);
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (clip.empty()) throw EmptyAudio("resample: empty clip");
  if (target_rate <= 0) throw ConfigError("resample: target rate must be > 0");
  if (clip.sample_rate == target_rate) return clip;

  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const size_t out_len = static_cast<size_t>(
      std::lround(static_cast<double>(clip.samples.size()) * ratio));

  // Windowed sinc, cutoff at the lower of the two Nyquist rates.
  const double cutoff = std::min(1.0, ratio);
  const int base_taps = 32;
  const int half_width = static_cast<int>(std::ceil(base_taps / cutoff));

  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  const int in_len = static_cast<int>(clip.samples.size());

  for (size_t i = 0; i < out_len; ++i) {
    const double t = static_cast<double>(i) / ratio;
    const int j0 = std::max(0, static_cast<int>(std::floor(t)) - half_width);
    const int j1 = std::min(in_len - 1, static_cast<int>(std::floor(t)) + half_width + 1);
    double acc = 0.0;
    for (int j = j0; j <= j1; ++j) {
      const double d = (j - t) * cutoff;
      double sinc = (std::abs(d) < 1e-12) ? 1.0 : std::sin(M_PI * d) / (M_PI * d);
      // Hann window over the kernel support
      const double u = (j - t) / (half_width + 1.0);
      const double win = 0.5 * (1.0 + std::cos(M_PI * std::clamp(u, -1.0, 1.0)));
      acc += clip.samples[j] * sinc * win;
    }
    out.samples[i] = clamp1(static_cast<float>(acc * cutoff));
  }
  return out;
}

double rms_db(const AudioClip& clip) {
  if (clip.empty()) throw EmptyAudio("rms_db: empty clip");
  double acc = 0.0;
  for (float s : clip.samples) acc += static_cast<double>(s) * s;
  double rms = std::sqrt(acc / clip.samples.size());
  if (rms <= 0.0) return -std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(rms);
}

AudioClip rms_normalize(const AudioClip& clip, double target_db,
                        std::string* warning) {
  if (clip.empty()) throw EmptyAudio("rms_normalize: empty clip");
  const double current = rms_db(clip);
  if (std::isinf(current)) {
    if (warning) *warning = "rms_normalize: all-zero clip, gain undefined";
    return clip;
  }
  if (current >= target_db) return clip;
  const double gain = std::pow(10.0, (target_db - current) / 20.0);
  AudioClip out = clip;
  for (float& s : out.samples) s = static_cast<float>(s * gain);
  return out;
}

AudioClip mask_silence(const AudioClip& clip, double frame_ms,
                       double threshold_db, double min_gap_ms) {
  if (clip.empty()) return clip;
  if (frame_ms <= 0.0) throw ConfigError("mask_silence: frame_ms must be > 0");
  if (min_gap_ms < frame_ms)
    throw ConfigError("mask_silence: min_gap_ms must be >= frame_ms");

  const size_t frame_len = std::max<size_t>(
      1, static_cast<size_t>(std::lround(frame_ms * clip.sample_rate / 1000.0)));
  const size_t n_frames = (clip.samples.size() + frame_len - 1) / frame_len;
  const double thr_lin = std::pow(10.0, threshold_db / 20.0);

  std::vector<bool> quiet(n_frames);
  for (size_t f = 0; f < n_frames; ++f) {
    const size_t a = f * frame_len;
    const size_t b = std::min(clip.samples.size(), a + frame_len);
    double acc = 0.0;
    for (size_t i = a; i < b; ++i)
      acc += static_cast<double>(clip.samples[i]) * clip.samples[i];
    quiet[f] = std::sqrt(acc / (b - a)) < thr_lin;
  }

  const size_t min_run =
      static_cast<size_t>(std::ceil(min_gap_ms / frame_ms));
  AudioClip out = clip;
  size_t f = 0;
  while (f < n_frames) {
    if (!quiet[f]) {
      ++f;
      continue;
    }
    size_t run_end = f;
    while (run_end < n_frames && quiet[run_end]) ++run_end;
    if (run_end - f >= min_run) {
      const size_t a = f * frame_len;
      const size_t b = std::min(clip.samples.size(), run_end * frame_len);
      std::fill(out.samples.begin() + a, out.samples.begin() + b, 0.0f);
    }
    f = run_end;
  }
  return out;
}

}  // namespace timbre

#include "doctest.h"

#include <set>

#include "timbre/audio.hpp"
#include "timbre/dataset.hpp"
#include "timbre/dsp.hpp"
#include "test_util.hpp"

using namespace timbre;

TEST_CASE("resample is a bitwise no-op at matching rates") {
  AudioClip clip = testutil::sine(440.0, 0.5, 16000);
  AudioClip out = resample(clip, 16000);
  CHECK(out.sample_rate == 16000);
  CHECK(out.samples == clip.samples);
}

TEST_CASE("resample 48k sine to 16k keeps the FFT peak at 440 Hz") {
  AudioClip clip = testutil::sine(440.0, 1.0, 48000);
  AudioClip out = resample(clip, 16000);
  CHECK(out.samples.size() == 16000);
  double hz = dsp::dominant_frequency_hz(out.samples, out.sample_rate);
  double bin_width = 16000.0 / out.samples.size();
  CHECK(std::abs(hz - 440.0) <= bin_width + 1e-9);
}

TEST_CASE("resample doubles the length when doubling the rate") {
  AudioClip clip = testutil::sine(200.0, 1.0, 8000);
  REQUIRE(clip.samples.size() == 8000);
  AudioClip out = resample(clip, 16000);
  CHECK(std::abs((int)out.samples.size() - 16000) <= 1);
}

TEST_CASE("resample round trip preserves the dominant peak bin") {
  AudioClip clip = testutil::sine(1000.0, 1.0, 16000);
  AudioClip back = resample(resample(clip, 48000), 16000);
  double bin_width = 16000.0 / back.samples.size();
  CHECK(std::abs(dsp::dominant_frequency_hz(back.samples, back.sample_rate) - 1000.0) <= bin_width + 1e-9);
}

TEST_CASE("resample rejects empty input") {
  AudioClip clip;
  clip.sample_rate = 16000;
  CHECK_THROWS_AS(resample(clip, 8000), EmptyAudio);
}

TEST_CASE("rms_normalize boosts a quiet clip to the target level") {
  AudioClip clip = testutil::sine(440.0, 0.5, 16000, 0.01414);  // ~ -40 dB
  REQUIRE(rms_db(clip) < -35.0);
  AudioClip out = rms_normalize(clip, -30.0);
  CHECK(std::abs(rms_db(out) - (-30.0)) < 1e-5);
}

TEST_CASE("rms_normalize leaves loud clips unchanged") {
  AudioClip clip = testutil::sine(440.0, 0.5, 16000, 0.1414);  // ~ -20 dB
  REQUIRE(rms_db(clip) > -25.0);
  AudioClip out = rms_normalize(clip, -30.0);
  CHECK(out.samples == clip.samples);
}

TEST_CASE("rms_normalize flags an all-zero clip") {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.assign(1000, 0.0f);
  std::string warning;
  AudioClip out = rms_normalize(clip, -30.0, &warning);
  CHECK(out.samples == clip.samples);
  CHECK(!warning.empty());
}

TEST_CASE("rms_normalize is idempotent") {
  AudioClip clip = testutil::noise(0.5, 16000, 11, 0.005);
  AudioClip once = rms_normalize(clip, -30.0);
  AudioClip twice = rms_normalize(once, -30.0);
  for (size_t i = 0; i < once.samples.size(); ++i)
    CHECK(std::abs(once.samples[i] - twice.samples[i]) < 1e-6f);
}

TEST_CASE("mask_silence zeroes a long quiet middle region") {
  int rate = 16000;
  AudioClip clip;
  clip.sample_rate = rate;
  AudioClip s = testutil::sine(440.0, 1.0, rate);
  clip.samples = s.samples;
  clip.samples.insert(clip.samples.end(), 2 * rate, 0.0f);
  clip.samples.insert(clip.samples.end(), s.samples.begin(), s.samples.end());

  AudioClip out = mask_silence(clip, 25.0, -60.0, 500.0);
  REQUIRE(out.samples.size() == clip.samples.size());

  double head = 0.0, mid = 0.0, tail = 0.0;
  for (int i = 0; i < rate; ++i) head += out.samples[i] * out.samples[i];
  for (int i = rate; i < 3 * rate; ++i) mid += out.samples[i] * out.samples[i];
  for (int i = 3 * rate; i < 4 * rate; ++i)
    tail += out.samples[i] * out.samples[i];
  CHECK(head > 0.0);
  CHECK(tail > 0.0);
  CHECK(mid == 0.0);
}

TEST_CASE("mask_silence passes a fully voiced clip through bitwise") {
  AudioClip clip = testutil::sine(440.0, 1.0, 16000);
  AudioClip out = mask_silence(clip);
  CHECK(out.samples == clip.samples);
}

TEST_CASE("mask_silence maps pure zeros to pure zeros") {
  AudioClip clip;
  clip.sample_rate = 16000;
  clip.samples.assign(16000, 0.0f);
  AudioClip out = mask_silence(clip);
  for (float v : out.samples) CHECK(v == 0.0f);
}

TEST_CASE("mask_silence never increases energy") {
  AudioClip clip = testutil::noise(1.0, 16000, 3, 0.001);
  for (int i = 4000; i < 14000; ++i) clip.samples[i] *= 1e-5f;
  AudioClip out = mask_silence(clip);
  double e_in = 0.0, e_out = 0.0;
  for (float v : clip.samples) e_in += v * v;
  for (float v : out.samples) e_out += v * v;
  CHECK(e_out <= e_in);
}

TEST_CASE("split_dataset splits 10 files as 8/1/1") {
  std::vector<std::string> files;
  for (int i = 0; i < 10; ++i) files.push_back("f" + std::to_string(i) + ".wav");
  DatasetManifest m = split_dataset({{"voice", files}}, 7);
  int train = 0, valid = 0, test = 0;
  for (const auto& e : m.domain("voice").files) {
    if (e.split == Split::kTrain) ++train;
    if (e.split == Split::kValid) ++valid;
    if (e.split == Split::kTest) ++test;
  }
  CHECK(train == 8);
  CHECK(valid == 1);
  CHECK(test == 1);
}

TEST_CASE("split_dataset assigns the 80/10/10 remainder to train") {
  std::vector<std::string> files;
  for (int i = 0; i < 1686; ++i)
    files.push_back("s" + std::to_string(i) + ".wav");
  DatasetManifest m = split_dataset({{"d", files}}, 1);
  int train = 0, valid = 0, test = 0;
  std::set<std::string> seen;
  for (const auto& e : m.domain("d").files) {
    seen.insert(e.path);
    if (e.split == Split::kTrain) ++train;
    if (e.split == Split::kValid) ++valid;
    if (e.split == Split::kTest) ++test;
  }
  CHECK(seen.size() == 1686);  // every file in exactly one split
  CHECK(valid == 168);
  CHECK(test == 168);
  CHECK(train == 1350);
}

TEST_CASE("split_dataset is deterministic under a fixed seed") {
  std::vector<std::string> files;
  for (int i = 0; i < 25; ++i) files.push_back(std::to_string(i));
  DatasetManifest a = split_dataset({{"d", files}}, 42);
  DatasetManifest b = split_dataset({{"d", files}}, 42);
  for (size_t i = 0; i < a.domain("d").files.size(); ++i) {
    CHECK(a.domain("d").files[i].path == b.domain("d").files[i].path);
    CHECK(a.domain("d").files[i].split == b.domain("d").files[i].split);
  }
}

TEST_CASE("split_dataset rejects domains with fewer than 3 files") {
  CHECK_THROWS_AS(split_dataset({{"tiny", {"a", "b"}}}, 0), InsufficientData);
  try {
    split_dataset({{"tiny", {"a", "b"}}}, 0);
  } catch (const InsufficientData& e) {
    CHECK(std::string(e.what()).find("tiny") != std::string::npos);
  }
}

TEST_CASE("manifest JSON round trip") {
  std::vector<std::string> files;
  for (int i = 0; i < 12; ++i) files.push_back("x" + std::to_string(i));
  DatasetManifest m = split_dataset({{"a", files}, {"b", files}}, 9);
  std::string dir = testutil::scratch_dir("manifest");
  write_manifest(m, dir + "/m.json");
  DatasetManifest r = read_manifest(dir + "/m.json");
  REQUIRE(r.domains.size() == m.domains.size());
  for (size_t d = 0; d < m.domains.size(); ++d) {
    CHECK(r.domains[d].name == m.domains[d].name);
    for (size_t i = 0; i < m.domains[d].files.size(); ++i) {
      CHECK(r.domains[d].files[i].path == m.domains[d].files[i].path);
      CHECK(r.domains[d].files[i].split == m.domains[d].files[i].split);
    }
  }
}

TEST_CASE("wav round trip and stereo downmix") {
  std::string dir = testutil::scratch_dir("wav");
  AudioClip clip = testutil::sine(440.0, 0.25, 16000);
  write_wav(clip, dir + "/a.wav");
  AudioClip back = read_wav(dir + "/a.wav");
  CHECK(back.sample_rate == 16000);
  REQUIRE(back.samples.size() == clip.samples.size());
  for (size_t i = 0; i < clip.samples.size(); ++i)
    CHECK(std::abs(back.samples[i] - clip.samples[i]) < 2.0f / 32768.0f);
}

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "timbre/metrics.hpp"
#include "test_util.hpp"

using namespace timbre;

namespace {

Grid constant_grid(int rows, int cols, float v) {
  Grid g(rows, cols);
  std::fill(g.v.begin(), g.v.end(), v);
  return g;
}

Grid random_unit_grid(int rows, int cols, uint64_t seed) {
  Grid g(rows, cols);
  Rng rng(seed);
  for (float& v : g.v) v = float(rng.uniform());
  return g;
}

// Direct-convolution SSIM over valid 11x11 windows, kept deliberately naive.
double ssim_reference(const Grid& a, const Grid& b) {
  const int kWin = 11;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  double kernel[kWin][kWin];
  double ksum = 0.0;
  for (int i = 0; i < kWin; ++i)
    for (int j = 0; j < kWin; ++j) {
      double di = i - 5, dj = j - 5;
      kernel[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      ksum += kernel[i][j];
    }
  for (auto& row : kernel)
    for (double& k : row) k /= ksum;

  double acc = 0.0;
  int n = 0;
  for (int r = 0; r + kWin <= a.rows; ++r)
    for (int c = 0; c + kWin <= a.cols; ++c) {
      double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          ma += kernel[i][j] * a.at(r + i, c + j);
          mb += kernel[i][j] * b.at(r + i, c + j);
        }
      for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
          double da = a.at(r + i, c + j) - ma;
          double db = b.at(r + i, c + j) - mb;
          va += kernel[i][j] * da * da;
          vb += kernel[i][j] * db * db;
          cov += kernel[i][j] * da * db;
        }
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++n;
    }
  return acc / n;
}

GaussianStats diag_1d(double mu, double var) {
  GaussianStats s;
  s.mean = {mu};
  s.covariance = {{var}};
  s.count = 2;
  return s;
}

}  // namespace

TEST_CASE("ssim is exactly one on identical grids and symmetric otherwise") {
  Grid a = random_unit_grid(32, 32, 3);
  CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
  Grid b = random_unit_grid(32, 32, 5);
  CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-9));
  CHECK(ssim(a, b) < 1.0);
  CHECK(ssim(a, b) >= -1.0);
}

TEST_CASE("ssim of two constant grids matches the closed form") {
  Grid a = constant_grid(16, 16, 0.2f);
  Grid b = constant_grid(16, 16, 0.4f);
  double expect = (2 * 0.2 * 0.4 + 1e-4) / (0.2 * 0.2 + 0.4 * 0.4 + 1e-4);
  CHECK(ssim(a, b) == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("ssim matches a naive reference on random grids") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    Grid a = random_unit_grid(32, 32, seed);
    Grid b = random_unit_grid(32, 32, seed + 100);
    CHECK(ssim(a, b) == doctest::Approx(ssim_reference(a, b)).epsilon(1e-6));
  }
}

TEST_CASE("ssim decreases as additive noise grows") {
  double avg[3] = {0, 0, 0};
  const double amps[3] = {0.05, 0.1, 0.2};
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Grid a = random_unit_grid(32, 32, seed);
    for (int k = 0; k < 3; ++k) {
      Grid noisy = a;
      Rng rng(seed * 31 + k);
      for (float& v : noisy.v)
        v = std::clamp(v + float(amps[k] * (2 * rng.uniform() - 1)), 0.0f, 1.0f);
      avg[k] += ssim(a, noisy) / 20.0;
    }
  }
  CHECK(avg[0] > avg[1]);
  CHECK(avg[1] > avg[2]);
}

TEST_CASE("ssim rejects mismatched or undersized grids") {
  Grid a = random_unit_grid(32, 32, 1);
  Grid b = random_unit_grid(16, 32, 1);
  CHECK_THROWS_AS(ssim(a, b), ShapeError);
  Grid tiny = random_unit_grid(8, 8, 1);
  CHECK_THROWS_AS(ssim(tiny, tiny), SizeError);
}

TEST_CASE("fit_gaussian produces unbiased sample statistics") {
  GaussianStats s = fit_gaussian({{0.0, 0.0}, {2.0, 2.0}});
  CHECK(s.count == 2);
  CHECK(s.mean[0] == doctest::Approx(1.0));
  CHECK(s.mean[1] == doctest::Approx(1.0));
  CHECK(s.covariance[0][0] == doctest::Approx(2.0));
  CHECK(s.covariance[0][1] == doctest::Approx(2.0));
  CHECK(s.covariance[1][0] == doctest::Approx(2.0));
  CHECK(s.covariance[1][1] == doctest::Approx(2.0));

  GaussianStats dup = fit_gaussian({{1.0, 3.0}, {1.0, 3.0}, {1.0, 3.0}});
  for (const auto& row : dup.covariance)
    for (double v : row) CHECK(v == doctest::Approx(0.0));

  GaussianStats fwd = fit_gaussian({{0, 1}, {2, 0}, {1, 1}});
  GaussianStats rev = fit_gaussian({{1, 1}, {0, 1}, {2, 0}});
  for (size_t i = 0; i < fwd.mean.size(); ++i) {
    CHECK(fwd.mean[i] == doctest::Approx(rev.mean[i]).epsilon(1e-12));
    for (size_t j = 0; j < fwd.mean.size(); ++j)
      CHECK(fwd.covariance[i][j] ==
            doctest::Approx(rev.covariance[i][j]).epsilon(1e-12));
  }

  CHECK_THROWS_AS(fit_gaussian({{1.0, 2.0}}), InsufficientData);
  CHECK_THROWS_AS(fit_gaussian({}), InsufficientData);
}

TEST_CASE("frechet_distance matches its closed forms") {
  GaussianStats s1, s2;
  s1.mean = {0, 0};
  s1.covariance = {{1, 0}, {0, 1}};
  s1.count = 10;
  s2 = s1;
  CHECK(frechet_distance(s1, s2) == doctest::Approx(0.0).epsilon(1e-10));

  s2.mean = {3, 4};
  CHECK(frechet_distance(s1, s2) == doctest::Approx(25.0).epsilon(1e-8));

  CHECK(frechet_distance(diag_1d(0, 1), diag_1d(0, 4)) ==
        doctest::Approx(1.0).epsilon(1e-8));
  // 1-D closed form (mu1-mu2)^2 + (sigma1-sigma2)^2
  for (uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    double m1 = rng.uniform() * 4 - 2, m2 = rng.uniform() * 4 - 2;
    double v1 = 0.1 + rng.uniform() * 3, v2 = 0.1 + rng.uniform() * 3;
    double expect = (m1 - m2) * (m1 - m2) +
                    std::pow(std::sqrt(v1) - std::sqrt(v2), 2);
    CHECK(frechet_distance(diag_1d(m1, v1), diag_1d(m2, v2)) ==
          doctest::Approx(expect).epsilon(1e-8));
  }

  GaussianStats wrong;
  wrong.mean = {0, 0, 0};
  wrong.covariance = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  wrong.count = 2;
  CHECK_THROWS_AS(frechet_distance(s1, wrong), ShapeError);
}

TEST_CASE("frechet_distance of matched samplers shrinks with sample count") {
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    auto draw = [&](uint64_t s, int n) {
      Rng rng(s);
      std::vector<std::vector<double>> e;
      for (int i = 0; i < n; ++i) {
        std::vector<double> v(4);
        for (double& x : v) x = rng.normal();
        e.push_back(std::move(v));
      }
      return fit_gaussian(e);
    };
    double small = frechet_distance(draw(seed, 50), draw(seed + 1000, 50));
    double large = frechet_distance(draw(seed, 2000), draw(seed + 1000, 2000));
    CHECK(large < small);
    CHECK(large >= 0.0);
  }
}

TEST_CASE("the spectral embedder summarizes clips deterministically") {
  Embedder emb = spectral_embedder();
  CHECK(emb.dimension == 64);

  AudioClip sine = testutil::sine(440.0f, 2.0f, 16000);
  std::vector<double> e1 = emb.evaluate(sine);
  std::vector<double> e2 = emb.evaluate(sine);
  REQUIRE(int(e1.size()) == emb.dimension);
  CHECK(e1 == e2);

  AudioClip noise = testutil::noise(2.0f, 16000, 7);
  std::vector<double> en = emb.evaluate(noise);
  double dist = 0.0;
  for (size_t i = 0; i < e1.size(); ++i) dist += std::pow(e1[i] - en[i], 2);
  CHECK(dist > 0.0);

  // time-pooled statistics barely move under time reversal
  AudioClip rev = sine;
  std::reverse(rev.samples.begin(), rev.samples.end());
  std::vector<double> er = emb.evaluate(rev);
  double rev_dist = 0.0;
  for (size_t i = 0; i < e1.size(); ++i) rev_dist += std::pow(e1[i] - er[i], 2);
  CHECK(rev_dist < 1e-3 * dist);

  AudioClip blip;
  blip.sample_rate = 16000;
  blip.samples.assign(100, 0.1f);
  CHECK_THROWS_AS(emb.evaluate(blip), ShortAudio);
}

TEST_CASE("embedding files round trip and reject ragged rows") {
  std::string dir = testutil::scratch_dir("emb");
  std::vector<std::vector<double>> e = {{1.0, 2.5, -3.25}, {0.0, 1e-6, 4.0},
                                        {7.0, -8.0, 9.0}};
  save_embeddings(e, dir + "/e.csv");
  auto back = load_embeddings(dir + "/e.csv");
  REQUIRE(back.size() == 3);
  for (size_t i = 0; i < 3; ++i)
    for (size_t j = 0; j < 3; ++j)
      CHECK(back[i][j] == doctest::Approx(e[i][j]).epsilon(1e-12));

  {
    std::ofstream out(dir + "/ragged.csv");
    out << "1,2,3\n4,5\n";
  }
  CHECK_THROWS_AS(load_embeddings(dir + "/ragged.csv"), FormatError);
  CHECK_THROWS_AS(load_embeddings(dir + "/absent.csv"), IoError);

  {
    std::ofstream out(dir + "/empty.csv");
  }
  CHECK(load_embeddings(dir + "/empty.csv").empty());
}

TEST_CASE("evaluate_pairs with an identity stub scores perfect reconstruction") {
  std::string dir = testutil::scratch_dir("eval");
  DatasetManifest manifest;
  for (const std::string& dom : {"a", "b"}) {
    ManifestDomain md;
    md.name = dom;
    for (int i = 0; i < 3; ++i) {
      AudioClip clip = testutil::harmonic_tone(
          dom == "a" ? 200.0 : 300.0, 3.0, 16000,
          dom == "a" ? std::vector<double>{1.0, 0.5} : std::vector<double>{1.0, 0.1, 0.8},
          0.3);
      std::string path = dir + "/" + dom + std::to_string(i) + ".wav";
      write_wav(clip, path);
      ManifestEntry e;
      e.path = path;
      e.split = i == 0 ? Split::kTest : Split::kTrain;
      md.files.push_back(e);
    }
    manifest.domains.push_back(md);
  }

  TranslatorFactory identity = [](const std::string&, const std::string&) {
    return std::make_unique<IdentityTranslator>();
  };

  EvalConfig cfg;
  cfg.compute_fad = false;
  cfg.out_json = dir + "/report.json";
  cfg.out_csv = dir + "/report.csv";
  EvalReport report = evaluate_pairs(identity, manifest, {"a", "b"}, cfg);

  REQUIRE(report.pairs.size() == 2);  // ordered pairs a->b, b->a
  for (const auto& p : report.pairs) {
    CHECK(p.ssim_recon == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p.ssim_cyclic == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p.n_excerpts > 0);
    CHECK(p.n_clips == 1);
  }
  CHECK(std::filesystem::exists(cfg.out_json));
  CHECK(std::filesystem::exists(cfg.out_csv));

  // three metric rows per pair in the CSV mirror
  std::ifstream in(cfg.out_csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "pair,metric,value");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == int(report.pairs.size()) * 3);

  std::string json_text = report.to_json();
  for (const char* key :
       {"ssim_recon", "ssim_cyclic", "fad", "n_excerpts", "n_clips"})
    CHECK(json_text.find(key) != std::string::npos);
}

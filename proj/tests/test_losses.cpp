#include "doctest.h"

#include <cmath>

#include "timbre/losses.hpp"
#include "test_util.hpp"

using namespace timbre;

namespace {

NodeP const_grid(float v, int h = 4, int w = 4) {
  Tensor4 t(1, 1, h, w);
  std::fill(t.v.begin(), t.v.end(), v);
  return make_leaf(t);
}

NodeP scalar_leaf(float v, bool grad = false) {
  Tensor4 t(1, 1, 1, 1);
  t.v[0] = v;
  return make_leaf(t, grad);
}

}  // namespace

TEST_CASE("discriminator adversarial loss hits known constant values") {
  CHECK(adversarial_loss_d(const_grid(1.0f), const_grid(0.0f))->scalar() ==
        doctest::Approx(0.0).epsilon(1e-7));
  CHECK(adversarial_loss_d(const_grid(0.5f), const_grid(0.5f))->scalar() ==
        doctest::Approx(0.5).epsilon(1e-6));
  CHECK(adversarial_loss_d(const_grid(0.0f), const_grid(1.0f))->scalar() ==
        doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("discriminator adversarial loss is permutation invariant and shape checked") {
  Tensor4 real = testutil::random_tensor<float>(1, 1, 4, 4, 3);
  Tensor4 fake = testutil::random_tensor<float>(1, 1, 4, 4, 5);
  double base = adversarial_loss_d(make_leaf(real), make_leaf(fake))->scalar();

  Tensor4 real_p = real, fake_p = fake;
  std::reverse(real_p.v.begin(), real_p.v.end());
  std::reverse(fake_p.v.begin(), fake_p.v.end());
  double perm = adversarial_loss_d(make_leaf(real_p), make_leaf(fake_p))->scalar();
  CHECK(base == doctest::Approx(perm).epsilon(1e-7));

  NodeP small = const_grid(0.0f, 2, 2);
  CHECK_THROWS_AS(adversarial_loss_d(make_leaf(real), small), ShapeError);
}

TEST_CASE("generator adversarial loss hits known constant values") {
  CHECK(adversarial_loss_g(const_grid(1.0f))->scalar() == doctest::Approx(0.0));
  CHECK(adversarial_loss_g(const_grid(0.0f))->scalar() == doctest::Approx(1.0));
  CHECK(adversarial_loss_g(const_grid(0.5f))->scalar() == doctest::Approx(0.25));
}

TEST_CASE("KL loss matches the closed form") {
  CHECK(kl_loss(const_grid(0.0f))->scalar() == doctest::Approx(0.0));
  CHECK(kl_loss(scalar_leaf(2.0f))->scalar() == doctest::Approx(2.0));

  Tensor4 mu = testutil::random_tensor<float>(2, 2, 3, 3, 7);
  double base = kl_loss(make_leaf(mu))->scalar();
  Tensor4 mu3 = mu;
  for (float& v : mu3.v) v *= 3.0f;
  CHECK(kl_loss(make_leaf(mu3))->scalar() == doctest::Approx(9.0 * base).epsilon(1e-5));

  // sum over elements, mean over batch: duplicate the sample along the batch axis
  Tensor4 two(2, 2, 3, 3);
  Tensor4 one(1, 2, 3, 3);
  Rng rng(9);
  for (size_t i = 0; i < one.v.size(); ++i) {
    one.v[i] = float(rng.normal());
    two.v[i] = one.v[i];
    two.v[i + one.v.size()] = one.v[i];
  }
  CHECK(kl_loss(make_leaf(two))->scalar() ==
        doctest::Approx(kl_loss(make_leaf(one))->scalar()).epsilon(1e-6));
}

TEST_CASE("KL loss agrees with a Monte-Carlo log-density-ratio estimate") {
  Rng rng(11);
  Tensor4 mu(1, 1, 4, 4);
  for (float& v : mu.v) v = float(0.5 + 0.4 * rng.uniform());  // ||mu||^2 in [4, 13]
  double analytic = kl_loss(make_leaf(mu))->scalar();

  // KL(N(mu,I)||N(0,I)) = E_z[log q(z) - log p(z)] with z ~ N(mu, I);
  // the ratio reduces to mu.(z - mu/2) per element.
  double acc = 0.0;
  const int kDraws = 200000;
  for (int d = 0; d < kDraws; ++d) {
    double s = 0.0;
    for (float m : mu.v) {
      double z = m + rng.normal();
      s += m * (z - 0.5 * m);
    }
    acc += s;
  }
  double mc = acc / kDraws;
  CHECK(std::abs(mc - analytic) / analytic < 0.02);
}

TEST_CASE("reconstruction L1 matches a loop oracle") {
  Tensor4 x = testutil::random_tensor<float>(1, 1, 8, 8, 13);
  Tensor4 y = testutil::random_tensor<float>(1, 1, 8, 8, 17);
  double expect = 0.0;
  for (size_t i = 0; i < x.v.size(); ++i) expect += std::abs(x.v[i] - y.v[i]);
  expect /= double(x.v.size());
  CHECK(recon_l1(make_leaf(x), make_leaf(y))->scalar() ==
        doctest::Approx(expect).epsilon(1e-7));

  CHECK(recon_l1(make_leaf(x), make_leaf(x))->scalar() == doctest::Approx(0.0));
  CHECK(recon_l1(const_grid(0.0f), const_grid(1.0f))->scalar() == doctest::Approx(1.0));
  CHECK_THROWS_AS(recon_l1(make_leaf(x), const_grid(0.0f)), ShapeError);
}

TEST_CASE("VAE loss is the weighted sum of KL and reconstruction") {
  LossWeights w;
  NodeP mu0 = const_grid(0.0f);
  CHECK(vae_loss(mu0, const_grid(0.3f), const_grid(0.3f), w)->scalar() ==
        doctest::Approx(0.0));
  CHECK(vae_loss(mu0, const_grid(0.0f), const_grid(0.1f), w)->scalar() ==
        doctest::Approx(10.0).epsilon(1e-5));

  NodeP mu = scalar_leaf(2.0f);
  LossWeights w2 = w;
  w2.lambda1 *= 2.0f;
  double a = vae_loss(mu, const_grid(0.0f), const_grid(0.1f), w)->scalar();
  double b = vae_loss(mu, const_grid(0.0f), const_grid(0.1f), w2)->scalar();
  CHECK(b - a == doctest::Approx(w.lambda1 * 2.0).epsilon(1e-5));
}

TEST_CASE("cyclic loss honors the KLD-omission variant") {
  LossWeights w;
  NodeP x = const_grid(0.4f);

  CHECK(cyclic_loss(const_grid(0.0f), x, x, w, true)->scalar() == doctest::Approx(0.0));
  CHECK(cyclic_loss(const_grid(0.0f), x, x, w, false)->scalar() == doctest::Approx(0.0));
  CHECK(cyclic_loss(scalar_leaf(1.0f), scalar_leaf(0.2f), scalar_leaf(0.2f), w, true)
            ->scalar() == doctest::Approx(0.05).epsilon(1e-6));

  // without the KLD term the result ignores mu_cc entirely
  double v1 = cyclic_loss(const_grid(0.0f), x, const_grid(0.5f), w, false)->scalar();
  double v2 = cyclic_loss(const_grid(9.0f), x, const_grid(0.5f), w, false)->scalar();
  CHECK(v1 == v2);
}

TEST_CASE("cyclic loss gradient wrt mu_cc is exactly zero when KLD is omitted") {
  LossWeights w;
  NodeP mu = make_leaf(testutil::random_tensor<float>(1, 2, 4, 4, 19), true);
  NodeP x = make_leaf(testutil::random_tensor<float>(1, 1, 4, 4, 21), true);
  NodeP xcc = make_leaf(testutil::random_tensor<float>(1, 1, 4, 4, 23), true);

  backward(cyclic_loss(mu, x, xcc, w, false));
  for (float g : mu->grad.v) CHECK(g == 0.0f);
  bool any = false;
  for (float g : xcc->grad.v) any = any || g != 0.0f;
  CHECK(any);

  mu->zero_grad();
  backward(cyclic_loss(mu, x, xcc, w, true));
  any = false;
  for (float g : mu->grad.v) any = any || g != 0.0f;
  CHECK(any);
}

TEST_CASE("latent loss averages all unordered pairs") {
  LossWeights w;
  CHECK(latent_loss({scalar_leaf(0.0f), scalar_leaf(1.0f)}, w)->scalar() ==
        doctest::Approx(10.0).epsilon(1e-6));

  NodeP a = scalar_leaf(0.0f), b = scalar_leaf(1.0f), c = scalar_leaf(3.0f),
        d = scalar_leaf(7.0f);
  // pairs: 1,3,7,2,6,4 -> mean 23/6
  CHECK(latent_loss({a, b, c, d}, w)->scalar() ==
        doctest::Approx(10.0 * 23.0 / 6.0).epsilon(1e-6));
  CHECK(latent_loss({d, b, a, c}, w)->scalar() ==
        doctest::Approx(latent_loss({a, b, c, d}, w)->scalar()).epsilon(1e-7));

  NodeP same = make_leaf(testutil::random_tensor<float>(1, 2, 3, 3, 29));
  CHECK(latent_loss({same, same}, w)->scalar() == doctest::Approx(0.0));

  CHECK_THROWS_AS(latent_loss({a}, w), ConfigError);
  CHECK_THROWS_AS(latent_loss({}, w), ConfigError);
}

TEST_CASE("total objective assembles the weighted sums") {
  LossWeights w;
  LossReport zero = total_objective(0, 0, 0, 0, 0, 0, 0, w, true);
  CHECK(zero.total_g == 0.0);
  CHECK(zero.total_d == 0.0);

  LossReport r = total_objective(0.25, 0.5, 2.0, 0.1, 0.5, 0.05, 0.3, w, true);
  CHECK(r.l_gan_g == 0.25);
  CHECK(r.l_gan_d == 0.5);
  CHECK(r.l_kl == 2.0);
  CHECK(r.l_recon == 0.1);
  CHECK(r.l_cc_kl == 0.5);
  CHECK(r.l_cc_recon == 0.05);
  CHECK(r.l_latent == 0.3);
  double g = 10.0 * 0.25 + 0.1 * 2.0 + 100.0 * 0.1 + 0.1 * 0.5 + 100.0 * 0.05 +
             10.0 * 0.3;
  CHECK(r.total_g == doctest::Approx(g).epsilon(1e-9));
  CHECK(r.total_d == doctest::Approx(10.0 * 0.5).epsilon(1e-9));

  LossReport no_kld = total_objective(0.25, 0.5, 2.0, 0.1, 0.5, 0.05, 0.3, w, false);
  CHECK(no_kld.total_g == doctest::Approx(g - 0.1 * 0.5).epsilon(1e-9));
}

TEST_CASE("total_g is linear in each lambda with fixed parts") {
  const double parts[7] = {0.3, 0.7, 1.1, 0.2, 0.4, 0.08, 0.6};
  auto total = [&](const LossWeights& w) {
    return total_objective(parts[0], parts[1], parts[2], parts[3], parts[4],
                           parts[5], parts[6], w, true)
        .total_g;
  };
  LossWeights base;
  float* lambdas[6];
  LossWeights probe;
  lambdas[0] = &probe.lambda0;
  lambdas[1] = &probe.lambda1;
  lambdas[2] = &probe.lambda2;
  lambdas[3] = &probe.lambda3;
  lambdas[4] = &probe.lambda4;
  lambdas[5] = &probe.lambda5;
  for (int i = 0; i < 6; ++i) {
    probe = base;
    double before = total(probe);
    float old = *lambdas[i];
    *lambdas[i] = old * 2.0f;
    double after = total(probe);
    *lambdas[i] = old * 3.0f;
    double third = total(probe);
    CHECK(third - after == doctest::Approx(after - before).epsilon(1e-6));
  }
}

TEST_CASE("non-finite parts are rejected by name") {
  LossWeights w;
  double inf = std::numeric_limits<double>::infinity();
  try {
    total_objective(0.1, 0.1, inf, 0.1, 0.1, 0.1, 0.1, w, true).check_finite();
    FAIL("expected NonFiniteLoss");
  } catch (const NonFiniteLoss& e) {
    CHECK(std::string(e.what()).find("l_kl") != std::string::npos);
  }
  double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(
      total_objective(nan, 0, 0, 0, 0, 0, 0, w, true).check_finite(), NonFiniteLoss);
}

TEST_CASE("CSV header lists step, epoch, pair, the nine fields, then lr") {
  std::string h = loss_csv_header();
  CHECK(h.rfind("step,epoch,pair,", 0) == 0);
  for (const std::string& f : LossReport::field_names())
    CHECK(h.find("," + f) != std::string::npos);
  CHECK(h.substr(h.size() - 3) == ",lr");
  CHECK(LossReport::field_names().size() == 9);
  CHECK(LossReport::field_names().back() == "total_d");
  LossReport r;
  CHECK(r.fields().size() == 9);
}

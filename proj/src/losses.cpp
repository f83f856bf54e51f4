#include "timbre/losses.hpp"

#include <cmath>

namespace timbre {

const std::vector<std::string>& LossReport::field_names() {
  static const std::vector<std::string> names = {
      "l_gan_g", "l_gan_d", "l_kl",    "l_recon", "l_cc_kl",
      "l_cc_recon", "l_latent", "total_g", "total_d"};
  return names;
}

std::vector<double> LossReport::fields() const {
  return {l_gan_g, l_gan_d, l_kl,    l_recon, l_cc_kl,
          l_cc_recon, l_latent, total_g, total_d};
}

void LossReport::check_finite() const {
  const auto vals = fields();
  const auto& names = field_names();
  for (size_t i = 0; i < vals.size(); ++i)
    if (!std::isfinite(vals[i]))
      throw NonFiniteLoss("non-finite loss term: " + names[i]);
}

NodeP adversarial_loss_d(const NodeP& real_scores, const NodeP& fake_scores) {
  if (!real_scores->value.same_shape(fake_scores->value))
    throw ShapeError("adversarial_loss_d: score grid shape mismatch " +
                     real_scores->value.shape_str() + " vs " +
                     fake_scores->value.shape_str());
  return weighted_sum({{1.0f, mse_to_const(real_scores, 1.0f)},
                       {1.0f, mse_to_const(fake_scores, 0.0f)}});
}

NodeP adversarial_loss_g(const NodeP& fake_scores) {
  return mse_to_const(fake_scores, 1.0f);
}

NodeP kl_loss(const NodeP& mu) { return kl_from_mean(mu); }

NodeP recon_l1(const NodeP& x, const NodeP& x_hat) { return l1_mean(x, x_hat); }

NodeP vae_loss(const NodeP& mu, const NodeP& x, const NodeP& x_hat,
               const LossWeights& w) {
  return weighted_sum(
      {{w.lambda1, kl_loss(mu)}, {w.lambda2, recon_l1(x, x_hat)}});
}

NodeP cyclic_loss(const NodeP& mu_cc, const NodeP& x, const NodeP& x_cc,
                  const LossWeights& w, bool include_kld) {
  if (!include_kld)
    return weighted_sum({{w.lambda4, recon_l1(x, x_cc)}});
  return weighted_sum(
      {{w.lambda3, kl_loss(mu_cc)}, {w.lambda4, recon_l1(x, x_cc)}});
}

NodeP latent_loss(const std::vector<NodeP>& mus, const LossWeights& w) {
  if (mus.size() < 2)
    throw ConfigError("latent_loss: at least 2 latent means required");
  std::vector<std::pair<float, NodeP>> terms;
  for (size_t i = 0; i < mus.size(); ++i)
    for (size_t j = i + 1; j < mus.size(); ++j)
      terms.push_back({1.0f, l1_mean(mus[i], mus[j])});
  const float scale = w.lambda5 / static_cast<float>(terms.size());
  for (auto& t : terms) t.first = scale;
  return weighted_sum(terms);
}

LossReport total_objective(double l_gan_g, double l_gan_d, double l_kl,
                           double l_recon, double l_cc_kl, double l_cc_recon,
                           double l_latent, const LossWeights& w,
                           bool include_kld) {
  LossReport r;
  r.l_gan_g = l_gan_g;
  r.l_gan_d = l_gan_d;
  r.l_kl = l_kl;
  r.l_recon = l_recon;
  r.l_cc_kl = l_cc_kl;
  r.l_cc_recon = l_cc_recon;
  r.l_latent = l_latent;
  r.total_g = w.lambda0 * l_gan_g + w.lambda1 * l_kl + w.lambda2 * l_recon +
              (include_kld ? w.lambda3 * l_cc_kl : 0.0) +
              w.lambda4 * l_cc_recon + w.lambda5 * l_latent;
  r.total_d = w.lambda0 * l_gan_d;
  r.check_finite();
  return r;
}

std::string loss_csv_header() {
  std::string h = "step,epoch,pair";
  for (const auto& n : LossReport::field_names()) h += "," + n;
  h += ",lr";
  return h;
}

}  // namespace timbre

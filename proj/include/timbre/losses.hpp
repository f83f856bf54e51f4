#pragma once

#include <string>
#include <vector>

#include "timbre/graph.hpp"

namespace timbre {

struct LossWeights {
  float lambda0 = 10.0f;   // adversarial
  float lambda1 = 0.1f;    // KL
  float lambda2 = 100.0f;  // reconstruction L1
  float lambda3 = 0.1f;    // cyclic KL
  float lambda4 = 100.0f;  // cyclic L1
  float lambda5 = 10.0f;   // latent alignment
};

struct LossReport {
  double l_gan_g = 0.0;
  double l_gan_d = 0.0;
  double l_kl = 0.0;
  double l_recon = 0.0;
  double l_cc_kl = 0.0;
  double l_cc_recon = 0.0;
  double l_latent = 0.0;
  double total_g = 0.0;
  double total_d = 0.0;

  // names of the nine scalar fields, CSV order
  static const std::vector<std::string>& field_names();
  std::vector<double> fields() const;
  void check_finite() const;  // throws NonFiniteLoss naming the bad term
};

// LSGAN discriminator criterion: mean((real-1)^2) + mean(fake^2).
// Unweighted; lambda0 is applied at aggregation.
NodeP adversarial_loss_d(const NodeP& real_scores, const NodeP& fake_scores);

// LSGAN generator criterion: mean((fake-1)^2).
NodeP adversarial_loss_g(const NodeP& fake_scores);

// KL(N(mu,I) || N(0,I)) = 0.5 * sum(mu^2), mean over batch.
NodeP kl_loss(const NodeP& mu);

NodeP recon_l1(const NodeP& x, const NodeP& x_hat);

// lambda1 * KL + lambda2 * L1
NodeP vae_loss(const NodeP& mu, const NodeP& x, const NodeP& x_hat,
               const LossWeights& w);

// include_kld ? lambda3 * KL + lambda4 * L1 : lambda4 * L1
NodeP cyclic_loss(const NodeP& mu_cc, const NodeP& x, const NodeP& x_cc,
                  const LossWeights& w, bool include_kld);

// lambda5 * mean over unordered pairs of mean|mu_i - mu_j|
NodeP latent_loss(const std::vector<NodeP>& mus, const LossWeights& w);

// Assembles the lambda-weighted totals from unweighted per-term scalars.
LossReport total_objective(double l_gan_g, double l_gan_d, double l_kl,
                           double l_recon, double l_cc_kl, double l_cc_recon,
                           double l_latent, const LossWeights& w,
                           bool include_kld);

std::string loss_csv_header();

}  // namespace timbre

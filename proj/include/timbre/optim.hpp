#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "timbre/common.hpp"

namespace timbre {

struct AdamState {
  int64_t step_count = 0;
  std::vector<float> first_moment;
  std::vector<float> second_moment;
  double alpha = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (alpha <= 0.0) throw ConfigError("Adam: alpha must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
      throw ConfigError("Adam: betas must be in [0, 1)");
  }
};

// Bias-corrected Adam update in place. Moments are lazily sized on first use.
// Throws NanGradient (naming `param_name`) on non-finite gradients.
void adam_step(std::span<float> params, std::span<const float> grads,
               AdamState& state, const std::string& param_name = "");

// Constant until halfway, then linear decay to zero at max_epochs.
double lr_schedule(int epoch, int max_epochs, double base_alpha);

}  // namespace timbre

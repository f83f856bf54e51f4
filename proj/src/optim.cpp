#include "timbre/optim.hpp"

#include <cmath>

namespace timbre {

void adam_step(std::span<float> params, std::span<const float> grads,
               AdamState& state, const std::string& param_name) {
  state.validate();
  if (params.size() != grads.size())
    throw ShapeError("adam_step: parameter/gradient size mismatch for " +
                     param_name);
  if (state.first_moment.empty()) {
    state.first_moment.assign(params.size(), 0.0f);
    state.second_moment.assign(params.size(), 0.0f);
  }
  if (state.first_moment.size() != params.size())
    throw ShapeError("adam_step: moment size mismatch for " + param_name);

  for (float g : grads)
    if (!std::isfinite(g))
      throw NanGradient("non-finite gradient in parameter '" + param_name +
                        "'");

  state.step_count += 1;
  const double b1 = state.beta1, b2 = state.beta2;
  const double corr1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
  const double corr2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = b1 * state.first_moment[i] + (1.0 - b1) * g;
    const double v = b2 * state.second_moment[i] + (1.0 - b2) * g * g;
    state.first_moment[i] = static_cast<float>(m);
    state.second_moment[i] = static_cast<float>(v);
    const double m_hat = m / corr1;
    const double v_hat = v / corr2;
    params[i] = static_cast<float>(
        params[i] - state.alpha * m_hat / (std::sqrt(v_hat) + state.epsilon));
  }
}

double lr_schedule(int epoch, int max_epochs, double base_alpha) {
  if (epoch < 0 || epoch >= max_epochs)
    throw ConfigError("lr_schedule: epoch out of range");
  const double half = max_epochs / 2.0;
  if (epoch <= half) return base_alpha;
  return base_alpha * (max_epochs - epoch) / (max_epochs - half);
}

}  // namespace timbre

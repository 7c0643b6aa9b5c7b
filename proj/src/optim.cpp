#include "gridsight/optim.hpp"

#include <cmath>
#include <string>

#include "gridsight/errors.hpp"

namespace gridsight {

void adam_step(AdamState& state, std::span<const double> grad,
               std::span<double> params, double eta) {
  if (grad.size() != params.size() || grad.size() != state.m.size()) {
    throw ConfigError("adam_step: dimension mismatch (grad " +
                      std::to_string(grad.size()) + ", params " +
                      std::to_string(params.size()) + ", state " +
                      std::to_string(state.m.size()) + ")");
  }
  for (std::size_t j = 0; j < grad.size(); ++j) {
    if (!std::isfinite(grad[j])) {
      throw DataError("adam_step: non-finite gradient at index " +
                      std::to_string(j));
    }
  }

  state.t += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t j = 0; j < grad.size(); ++j) {
    const double g = grad[j];
    state.m[j] = state.beta1 * state.m[j] + (1.0 - state.beta1) * g;
    state.n[j] = state.beta2 * state.n[j] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[j] / bc1;
    const double n_hat = state.n[j] / bc2;
    params[j] -= eta * m_hat / (state.eps + std::sqrt(n_hat));
  }
}

double lr_at(const LrSchedule& schedule, int epoch) {
  if (!(schedule.eta_start >= schedule.eta_end && schedule.eta_end > 0.0)) {
    throw ConfigError("lr_at: schedule requires eta_start >= eta_end > 0");
  }
  if (epoch < 0 || epoch >= schedule.total_epochs) {
    throw ConfigError("lr_at: epoch " + std::to_string(epoch) +
                      " outside [0, " + std::to_string(schedule.total_epochs) +
                      ")");
  }
  if (schedule.total_epochs == 1) return schedule.eta_start;
  const double expo =
      static_cast<double>(epoch) / (schedule.total_epochs - 1);
  return schedule.eta_start *
         std::pow(schedule.eta_end / schedule.eta_start, expo);
}

}  // namespace gridsight

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gridsight {

// First/second moment state for adaptive-moment updates. One owner, steps
// are sequential.
struct AdamState {
  std::size_t t = 0;
  std::vector<double> m;
  std::vector<double> n;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t dim) : m(dim, 0.0), n(dim, 0.0) {}
};

// One update: m, n decay toward the gradient and its square, bias-corrected
// by (1 - beta^t), and each parameter moves by -eta * m_hat / (eps +
// sqrt(n_hat)). A non-finite gradient component rejects the whole step.
void adam_step(AdamState& state, std::span<const double> grad,
               std::span<double> params, double eta);

struct LrSchedule {
  double eta_start = 0.01;
  double eta_end = 0.001;
  int total_epochs = 30;
};

// Geometric interpolation between the endpoints; epoch is 0-based.
double lr_at(const LrSchedule& schedule, int epoch);

}  // namespace gridsight

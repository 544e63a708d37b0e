#pragma once

#include <cstdint>
#include <vector>

#include "stpp/events.hpp"
#include "stpp/rng.hpp"

namespace stpp {

// Exponential-kernel Hawkes intensity:
//   lambda(t) = mu + sum_j sum_{t_i < t} a_j * exp(-b_j * (t - t_i))
struct HawkesKernel {
  double weight = 0.0;  // a_j
  double decay = 1.0;   // b_j
};

struct HawkesParams {
  double mu = 0.2;
  std::vector<HawkesKernel> kernels;
  double horizon = 50.0;

  double branching_ratio() const;
  // mu, horizon and kernel entries must be positive and finite. Supercritical
  // kernels (branching >= 1) are only valid on a finite horizon.
  void validate() const;
};

// Gaussian mixture over R^2 (general D supported) for spatial marks. In the
// linked generator each component doubles as one dimension of a multivariate
// Hawkes process.
struct GmmComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<std::vector<double>> cov;  // symmetric positive-definite
};

struct GmmSpatialParams {
  std::vector<GmmComponent> components;
  void validate() const;
  int dim() const { return static_cast<int>(components.at(0).mean.size()); }

  // rho = sqrt(2)/4, mu = (4, 7), sigma = (sqrt(2), 2)
  static GmmSpatialParams single_gaussian_default();
};

EventSequence simulate_poisson(double rate, double horizon, std::uint64_t seed);

// Ogata thinning with a piecewise-constant bound refreshed at every candidate.
EventSequence simulate_hawkes(const HawkesParams& params, std::uint64_t seed);

// Intensity exp(mu*t - alpha*N(t)); simulated by exact compensator inversion.
EventSequence simulate_self_correcting(double mu, double alpha, double horizon,
                                       std::uint64_t seed);

// Multivariate Hawkes with one dimension per mixture component; each event's
// location is drawn from the Gaussian of the dimension that fired. The
// `affinity` knob sets how strongly a component re-excites itself versus the
// others (1 = purely self-exciting components).
struct HawkesGmmParams {
  HawkesParams temporal;  // kernels give the shared decay/total weight
  GmmSpatialParams spatial;
  double affinity = 0.85;
};
EventSequence simulate_hawkes_gmm(const HawkesGmmParams& params, std::uint64_t seed);

// Times from a Hawkes process, locations i.i.d. Gaussian; independent streams.
struct IndependentConfig {
  HawkesParams temporal;          // defaults to the supercritical pair below
  GmmSpatialParams spatial;       // defaults to the single-Gaussian parameters
  int n_train = 1000;
  int n_val = 100;
  int n_test = 100;

  static IndependentConfig defaults();
};
Dataset simulate_independent(const IndependentConfig& config, std::uint64_t seed);

// Evaluation horizon defaults: base 0.2 with kernels (0.2, 0.2) and (4, 10).
// Branching ratio is 1.4, so expected counts grow exponentially in the
// horizon; keep windows short.
HawkesParams reference_hawkes_params(double horizon);

}  // namespace stpp

#pragma once

// Test-side oracles, deliberately independent of the library implementations
// they check.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "stpp/events.hpp"
#include "stpp/simulate.hpp"

namespace stpp::oracles {

// Asymptotic Kolmogorov distribution Q(lambda) = 2 sum (-1)^{j-1} exp(-2 j^2 lambda^2)
inline double kolmogorov_q(double lambda) {
  double q = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = 2.0 * ((j % 2 == 1) ? 1.0 : -1.0) * std::exp(-2.0 * j * j * lambda * lambda);
    q += term;
    if (std::fabs(term) < 1e-12) break;
  }
  return std::min(1.0, std::max(0.0, q));
}

// Two-sided one-sample KS test of `samples` against U(0,1); returns p-value.
inline double ks_uniform_pvalue(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double lo = samples[i] - static_cast<double>(i) / n;
    const double hi = (static_cast<double>(i) + 1.0) / n - samples[i];
    d = std::max({d, lo, hi});
  }
  const double rn = std::sqrt(n);
  return kolmogorov_q((rn + 0.12 + 0.11 / rn) * d);
}

// Time-rescaled intervals Lambda(t_i) - Lambda(t_{i-1}) for an exponential-
// kernel Hawkes process, computed analytically from the kernel states.
inline std::vector<double> hawkes_rescaled_intervals(const EventSequence& seq,
                                                     const HawkesParams& p) {
  std::vector<double> states(p.kernels.size(), 0.0);  // sum a_j e^{-b_j (t - t_m)} at prev event
  std::vector<double> out;
  double prev = seq.window_start;
  for (const Event& e : seq.events) {
    const double dt = e.t - prev;
    double xi = p.mu * dt;
    for (std::size_t j = 0; j < states.size(); ++j) {
      const double b = p.kernels[j].decay;
      xi += states[j] / b * (1.0 - std::exp(-b * dt));
      states[j] *= std::exp(-b * dt);
    }
    for (std::size_t j = 0; j < states.size(); ++j) states[j] += p.kernels[j].weight;
    out.push_back(xi);
    prev = e.t;
  }
  return out;
}

// Exact E[N(0,T)] for a single-kernel subcritical Hawkes started empty:
// solves m' = (a-b) m + b mu, integrates over [0,T].
inline double hawkes_expected_count(double mu, double a, double b, double T) {
  if (a >= b) throw std::invalid_argument("oracle: requires subcritical single kernel");
  const double r = a / b;
  return mu * T / (1.0 - r) - mu * a * (1.0 - std::exp(-(b - a) * T)) / ((b - a) * (b - a));
}

// Energy distance between two point clouds (Szekely): 2 E|X-Y| - E|X-X'| - E|Y-Y'|.
inline double energy_distance(const std::vector<std::vector<double>>& xs,
                              const std::vector<std::vector<double>>& ys) {
  auto dist = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  };
  double cross = 0.0, xx = 0.0, yy = 0.0;
  for (const auto& x : xs)
    for (const auto& y : ys) cross += dist(x, y);
  cross /= static_cast<double>(xs.size()) * static_cast<double>(ys.size());
  for (const auto& a : xs)
    for (const auto& b : xs) xx += dist(a, b);
  xx /= static_cast<double>(xs.size()) * static_cast<double>(xs.size());
  for (const auto& a : ys)
    for (const auto& b : ys) yy += dist(a, b);
  yy /= static_cast<double>(ys.size()) * static_cast<double>(ys.size());
  return 2.0 * cross - xx - yy;
}

// log density of the correlated 2D Gaussian with the given moments
inline double gaussian2d_logpdf(double x, double y, double m1, double m2, double s1, double s2,
                                double rho) {
  const double z1 = (x - m1) / s1;
  const double z2 = (y - m2) / s2;
  const double c = 1.0 - rho * rho;
  const double quad = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / c;
  return -std::log(2.0 * M_PI * s1 * s2 * std::sqrt(c)) - 0.5 * quad;
}

struct MeanVar {
  double mean = 0.0;
  double var = 0.0;  // population
};

inline MeanVar mean_var(const std::vector<double>& v) {
  MeanVar mv;
  for (double x : v) mv.mean += x;
  mv.mean /= static_cast<double>(v.size());
  for (double x : v) mv.var += (x - mv.mean) * (x - mv.mean);
  mv.var /= static_cast<double>(v.size());
  return mv;
}

inline double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const MeanVar ma = mean_var(a), mb = mean_var(b);
  double cov = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) cov += (a[i] - ma.mean) * (b[i] - mb.mean);
  cov /= static_cast<double>(a.size());
  return cov / std::sqrt(ma.var * mb.var);
}

}  // namespace stpp::oracles

#include "stpp/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace stpp {

double HawkesParams::branching_ratio() const {
  double r = 0.0;
  for (const HawkesKernel& k : kernels) r += k.weight / k.decay;
  return r;
}

void HawkesParams::validate() const {
  if (!(mu > 0.0) || !std::isfinite(mu)) throw std::invalid_argument("hawkes: mu must be > 0");
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw std::invalid_argument("hawkes: horizon must be > 0 and finite");
  for (const HawkesKernel& k : kernels) {
    if (!(k.weight >= 0.0) || !std::isfinite(k.weight))
      throw std::invalid_argument("hawkes: kernel weight must be >= 0");
    if (!(k.decay > 0.0) || !std::isfinite(k.decay))
      throw std::invalid_argument("hawkes: kernel decay must be > 0");
  }
}

void GmmSpatialParams::validate() const {
  if (components.empty()) throw std::invalid_argument("gmm: no components");
  const int d = dim();
  double wsum = 0.0;
  for (const GmmComponent& c : components) {
    if (!(c.weight > 0.0)) throw std::invalid_argument("gmm: weights must be positive");
    wsum += c.weight;
    if (static_cast<int>(c.mean.size()) != d) throw std::invalid_argument("gmm: mean dim mismatch");
    if (static_cast<int>(c.cov.size()) != d) throw std::invalid_argument("gmm: cov dim mismatch");
    for (int i = 0; i < d; ++i) {
      if (static_cast<int>(c.cov[i].size()) != d)
        throw std::invalid_argument("gmm: cov not square");
      for (int j = 0; j < d; ++j)
        if (std::fabs(c.cov[i][j] - c.cov[j][i]) > 1e-12)
          throw std::invalid_argument("gmm: cov not symmetric");
    }
  }
  if (std::fabs(wsum - 1.0) > 1e-9) throw std::invalid_argument("gmm: weights must sum to 1");
}

GmmSpatialParams GmmSpatialParams::single_gaussian_default() {
  const double rho = std::sqrt(2.0) / 4.0;
  const double s1 = std::sqrt(2.0), s2 = 2.0;
  GmmSpatialParams g;
  g.components.push_back(
      {1.0, {4.0, 7.0}, {{s1 * s1, rho * s1 * s2}, {rho * s1 * s2, s2 * s2}}});
  return g;
}

HawkesParams reference_hawkes_params(double horizon) {
  HawkesParams p;
  p.mu = 0.2;
  p.kernels = {{0.2, 0.2}, {4.0, 10.0}};
  p.horizon = horizon;
  return p;
}

EventSequence simulate_poisson(double rate, double horizon, std::uint64_t seed) {
  if (!(rate > 0.0)) throw std::invalid_argument("poisson: rate must be > 0");
  if (!(horizon > 0.0)) throw std::invalid_argument("poisson: horizon must be > 0");
  Rng rng = make_rng(seed);
  std::poisson_distribution<long> pd(rate * horizon);
  const long n = pd(rng);
  std::vector<double> times(n);
  for (long i = 0; i < n; ++i) times[i] = draw_uniform(rng) * horizon;
  std::sort(times.begin(), times.end());
  EventSequence seq;
  seq.window_start = 0.0;
  seq.window_end = horizon;
  for (double t : times) seq.events.push_back({t, {}, -1});
  return seq;
}

namespace {

// Shared thinning core for exponential-kernel Hawkes.  `states[j]` tracks the
// contribution sum_j a_j * sum_i exp(-b_j (t - t_i)) just after time `t`.
// The intensity decays between events, so lambda at the last anchor is a true
// upper bound; it is refreshed at every candidate.
template <typename OnAccept>
void thin_hawkes(const HawkesParams& p, Rng& rng, OnAccept&& on_accept) {
  std::vector<double> states(p.kernels.size(), 0.0);
  double t = 0.0;
  auto total = [&]() {
    double s = p.mu;
    for (double v : states) s += v;
    return s;
  };
  double bound = total();
  std::exponential_distribution<double> exp1(1.0);
  while (true) {
    const double wait = exp1(rng) / bound;
    const double tc = t + wait;
    if (tc > p.horizon) break;
    for (std::size_t j = 0; j < states.size(); ++j)
      states[j] *= std::exp(-p.kernels[j].decay * (tc - t));
    const double lam = total();
    if (!(lam <= bound * (1.0 + 1e-12)))
      throw std::logic_error("hawkes thinning: bound violated");
    if (draw_uniform(rng) * bound <= lam) {
      on_accept(tc, states);
      for (std::size_t j = 0; j < states.size(); ++j) states[j] += p.kernels[j].weight;
      bound = total();
    } else {
      bound = lam;
    }
    t = tc;
  }
}

}  // namespace

EventSequence simulate_hawkes(const HawkesParams& params, std::uint64_t seed) {
  params.validate();
  Rng rng = make_rng(seed);
  EventSequence seq;
  seq.window_start = 0.0;
  seq.window_end = params.horizon;
  thin_hawkes(params, rng,
              [&](double t, const std::vector<double>&) { seq.events.push_back({t, {}, -1}); });
  return seq;
}

EventSequence simulate_self_correcting(double mu, double alpha, double horizon,
                                       std::uint64_t seed) {
  if (!(mu > 0.0)) throw std::invalid_argument("self_correcting: mu must be > 0");
  if (!(alpha > 0.0)) throw std::invalid_argument("self_correcting: alpha must be > 0");
  if (!(horizon > 0.0)) throw std::invalid_argument("self_correcting: horizon must be > 0");
  // lambda(t) = exp(mu t - alpha N(t)); between events the compensator is
  // exp(-alpha N) (exp(mu s) - exp(mu t)) / mu, inverted in closed form.
  Rng rng = make_rng(seed);
  std::exponential_distribution<double> exp1(1.0);
  EventSequence seq;
  seq.window_start = 0.0;
  seq.window_end = horizon;
  double t = 0.0;
  long n = 0;
  while (true) {
    const double xi = exp1(rng);
    // exp(mu s) = exp(mu t) + mu xi exp(alpha N); stay in log space
    const double log_term = std::log(mu * xi) + alpha * static_cast<double>(n);
    const double a = mu * t;
    const double m = std::max(a, log_term);
    const double log_exp_mus = m + std::log(std::exp(a - m) + std::exp(log_term - m));
    const double s = log_exp_mus / mu;
    if (s > horizon) break;
    seq.events.push_back({s, {}, -1});
    t = s;
    ++n;
  }
  return seq;
}

namespace {

// Cholesky factor of a small SPD matrix
std::vector<std::vector<double>> cholesky(const std::vector<std::vector<double>>& a) {
  const int n = static_cast<int>(a.size());
  std::vector<std::vector<double>> l(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (int k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      if (i == j) {
        if (s <= 0.0) throw std::invalid_argument("gmm: covariance not positive-definite");
        l[i][j] = std::sqrt(s);
      } else {
        l[i][j] = s / l[j][j];
      }
    }
  }
  return l;
}

std::vector<double> draw_gaussian(const GmmComponent& c,
                                  const std::vector<std::vector<double>>& chol, Rng& rng) {
  const int d = static_cast<int>(c.mean.size());
  std::vector<double> z(d), out(d);
  for (int i = 0; i < d; ++i) z[i] = draw_normal(rng);
  for (int i = 0; i < d; ++i) {
    double v = c.mean[i];
    for (int j = 0; j <= i; ++j) v += chol[i][j] * z[j];
    out[i] = v;
  }
  return out;
}

}  // namespace

EventSequence simulate_hawkes_gmm(const HawkesGmmParams& params, std::uint64_t seed) {
  params.temporal.validate();
  params.spatial.validate();
  if (!(params.affinity >= 0.0 && params.affinity <= 1.0))
    throw std::invalid_argument("hawkes_gmm: affinity must be in [0,1]");

  const auto& comps = params.spatial.components;
  const int c = static_cast<int>(comps.size());
  std::vector<std::vector<std::vector<double>>> chols;
  chols.reserve(c);
  for (const GmmComponent& g : comps) chols.push_back(cholesky(g.cov));

  // Multivariate thinning: dimension intensities share the kernel decays.
  // lambda_c(t) = w_c mu + sum_events a_j [gamma 1(dim=c) + (1-gamma) w_c] e^{-b_j dt}
  const HawkesParams& tp = params.temporal;
  const double gamma = params.affinity;
  Rng rng = make_rng(seed);
  std::exponential_distribution<double> exp1(1.0);

  // states[c][j]: excitation of dimension c from kernel j
  std::vector<std::vector<double>> states(c, std::vector<double>(tp.kernels.size(), 0.0));
  std::vector<double> lam(c);
  auto refresh = [&]() {
    double total = 0.0;
    for (int ci = 0; ci < c; ++ci) {
      lam[ci] = comps[ci].weight * tp.mu;
      for (double v : states[ci]) lam[ci] += v;
      total += lam[ci];
    }
    return total;
  };

  EventSequence seq;
  seq.window_start = 0.0;
  seq.window_end = tp.horizon;
  double t = 0.0;
  double bound = refresh();
  while (true) {
    const double wait = exp1(rng) / bound;
    const double tc = t + wait;
    if (tc > tp.horizon) break;
    for (int ci = 0; ci < c; ++ci)
      for (std::size_t j = 0; j < tp.kernels.size(); ++j)
        states[ci][j] *= std::exp(-tp.kernels[j].decay * (tc - t));
    const double total = refresh();
    if (!(total <= bound * (1.0 + 1e-12)))
      throw std::logic_error("hawkes_gmm thinning: bound violated");
    if (draw_uniform(rng) * bound <= total) {
      // pick the firing dimension proportionally to its intensity
      double u = draw_uniform(rng) * total;
      int dim = c - 1;
      for (int ci = 0; ci < c; ++ci) {
        if (u < lam[ci]) {
          dim = ci;
          break;
        }
        u -= lam[ci];
      }
      Event e;
      e.t = tc;
      e.coords = draw_gaussian(comps[dim], chols[dim], rng);
      seq.events.push_back(std::move(e));
      for (int ci = 0; ci < c; ++ci) {
        const double share = gamma * (ci == dim ? 1.0 : 0.0) + (1.0 - gamma) * comps[ci].weight;
        for (std::size_t j = 0; j < tp.kernels.size(); ++j)
          states[ci][j] += tp.kernels[j].weight * share;
      }
      bound = refresh();
    } else {
      bound = total;
    }
    t = tc;
  }
  return seq;
}

IndependentConfig IndependentConfig::defaults() {
  IndependentConfig c;
  // Reference kernels are supercritical (branching 1.4); a [0,10] window keeps
  // expected lengths around a dozen events. Longer windows grow exponentially.
  c.temporal = reference_hawkes_params(10.0);
  c.spatial = GmmSpatialParams::single_gaussian_default();
  return c;
}

Dataset simulate_independent(const IndependentConfig& config, std::uint64_t seed) {
  config.temporal.validate();
  config.spatial.validate();
  const auto& comps = config.spatial.components;
  std::vector<std::vector<std::vector<double>>> chols;
  for (const GmmComponent& g : comps) chols.push_back(cholesky(g.cov));

  Dataset ds;
  ds.space = SpaceSpec::continuous(config.spatial.dim());

  auto gen_split = [&](int count, std::uint64_t split_tag) {
    std::vector<EventSequence> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
      // independent streams for the temporal and spatial draws
      EventSequence seq =
          simulate_hawkes(config.temporal, derive_seed(seed, split_tag, 2 * i));
      Rng srng = make_rng(derive_seed(seed, split_tag, 2 * i + 1));
      for (Event& e : seq.events) {
        double u = draw_uniform(srng);
        int ci = static_cast<int>(comps.size()) - 1;
        for (std::size_t j = 0; j < comps.size(); ++j) {
          if (u < comps[j].weight) {
            ci = static_cast<int>(j);
            break;
          }
          u -= comps[j].weight;
        }
        e.coords = draw_gaussian(comps[ci], chols[ci], srng);
      }
      seq.id = i;
      if (!seq.events.empty()) out.push_back(std::move(seq));
    }
    // re-number after dropping empty windows
    for (std::size_t i = 0; i < out.size(); ++i) out[i].id = static_cast<std::int64_t>(i);
    return out;
  };

  ds.train = gen_split(config.n_train, 1);
  ds.val = gen_split(config.n_val, 2);
  ds.test = gen_split(config.n_test, 3);
  ds.stats = compute_stats(ds.train, ds.space);
  return ds;
}

}  // namespace stpp

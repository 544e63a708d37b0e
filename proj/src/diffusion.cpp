#include "stpp/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace stpp {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

std::vector<double> q_sample(const std::vector<double>& x0, int k,
                             const std::vector<double>& eps, const DiffusionSchedule& s) {
  if (k < 1 || k > s.steps) throw std::invalid_argument("q_sample: step out of range");
  if (x0.size() != eps.size()) throw std::invalid_argument("q_sample: eps size mismatch");
  const double a = std::sqrt(s.alpha_bar_at(k));
  const double b = std::sqrt(1.0 - s.alpha_bar_at(k));
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

std::vector<double> p_sample_step(const std::vector<double>& x_k, int k,
                                  const std::vector<double>& eps_pred,
                                  const std::vector<double>& z, const DiffusionSchedule& s) {
  if (k < 1 || k > s.steps) throw std::invalid_argument("p_sample_step: step out of range");
  if (x_k.size() != eps_pred.size() || x_k.size() != z.size())
    throw std::invalid_argument("p_sample_step: size mismatch");
  if (k == 1) {
    for (double v : z)
      if (v != 0.0) throw std::invalid_argument("p_sample_step: z must be zero at k = 1");
  }
  const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha_at(k));
  const double coef = s.beta_at(k) / std::sqrt(1.0 - s.alpha_bar_at(k));
  const double sigma = std::sqrt(s.beta_at(k));
  std::vector<double> out(x_k.size());
  for (std::size_t i = 0; i < x_k.size(); ++i)
    out[i] = inv_sqrt_alpha * (x_k[i] - coef * eps_pred[i]) + sigma * z[i];
  return out;
}

int round_to_location(const std::vector<double>& s0_embedding,
                      const Tensor& location_embeddings) {
  const int n = location_embeddings.rows();
  const int m = location_embeddings.cols();
  if (static_cast<int>(s0_embedding.size()) != m)
    throw std::invalid_argument("round_to_location: embedding dimension mismatch");
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    double d = 0.0;
    for (int j = 0; j < m; ++j) {
      const double diff =
          s0_embedding[j] - location_embeddings.data()[static_cast<std::size_t>(i) * m + j];
      d += diff * diff;
    }
    if (d < best_d) {  // strict: ties keep the smallest id
      best_d = d;
      best = i;
    }
  }
  return best;
}

std::vector<SampledEvent> sample_event_trajectory(const Model& model, const HiddenRep& h, int n,
                                                  const std::vector<int>& snapshot_steps,
                                                  Rng& rng,
                                                  std::vector<TrajectorySnapshot>& snapshots) {
  if (n < 1) throw std::invalid_argument("sample_event: need at least one draw");
  NoGradScope ng;
  const DiffusionSchedule& s = model.schedule;
  const int vd = model.space_value_dim();
  const int big_k = s.steps;

  // per-draw normalized states
  std::vector<double> tau(n);
  std::vector<std::vector<double>> space(n, std::vector<double>(vd));
  for (int i = 0; i < n; ++i) {
    tau[i] = draw_normal(rng);
    for (int j = 0; j < vd; ++j) space[i][j] = draw_normal(rng);
  }

  auto maybe_snapshot = [&](int step) {
    if (std::find(snapshot_steps.begin(), snapshot_steps.end(), step) == snapshot_steps.end())
      return;
    for (int i = 0; i < n; ++i) snapshots.push_back({step, i, tau[i], space[i]});
  };
  maybe_snapshot(big_k);

  for (int k = big_k; k >= 1; --k) {
    Tensor noisy_space = Tensor::zeros({n, vd});
    Tensor noisy_tau = Tensor::zeros({n, 1});
    for (int i = 0; i < n; ++i) {
      noisy_tau.data()[i] = tau[i];
      for (int j = 0; j < vd; ++j)
        noisy_space.data()[static_cast<std::size_t>(i) * vd + j] = space[i][j];
    }
    DenoiseOutput pred = denoise(model.denoiser, noisy_space, noisy_tau, h, k, big_k);
    for (int i = 0; i < n; ++i) {
      std::vector<double> joint(1 + vd), eps(1 + vd), z(1 + vd, 0.0);
      joint[0] = tau[i];
      eps[0] = pred.eps_time.data()[i];
      for (int j = 0; j < vd; ++j) {
        joint[1 + j] = space[i][j];
        eps[1 + j] = pred.eps_space.data()[static_cast<std::size_t>(i) * vd + j];
      }
      if (k > 1)
        for (double& v : z) v = draw_normal(rng);
      std::vector<double> next = p_sample_step(joint, k, eps, z, s);
      tau[i] = next[0];
      for (int j = 0; j < vd; ++j) space[i][j] = next[1 + j];
    }
    maybe_snapshot(k - 1);
  }

  std::vector<SampledEvent> out(n);
  for (int i = 0; i < n; ++i) {
    SampledEvent& e = out[i];
    e.tau_normalized = tau[i];
    e.space_normalized = space[i];
    e.tau = std::max(0.0, model.stats.denorm_tau(tau[i]));
    if (model.space.is_discrete())
      e.location_id = round_to_location(space[i], model.encoder.space_embed);
    else
      e.coords = model.stats.denorm_space(space[i]);
  }
  return out;
}

std::vector<SampledEvent> sample_event(const Model& model, const HiddenRep& h, int n, Rng& rng) {
  std::vector<TrajectorySnapshot> unused;
  return sample_event_trajectory(model, h, n, {}, rng, unused);
}

std::vector<double> vlb_nll_per_coordinate(
    const std::vector<double>& x0, const DiffusionSchedule& s,
    const std::function<std::vector<double>(const std::vector<double>&, int)>& predict_noise,
    int n_draws, Rng& rng) {
  if (n_draws < 1) throw std::invalid_argument("vlb: need at least one draw");
  const std::size_t d = x0.size();
  const int big_k = s.steps;
  std::vector<double> nll(d, 0.0);

  // prior: KL(q(x^K | x0) || N(0, I)) per coordinate
  {
    const double abar = s.alpha_bar_at(big_k);
    const double var = 1.0 - abar;
    for (std::size_t c = 0; c < d; ++c) {
      const double mu = std::sqrt(abar) * x0[c];
      nll[c] += 0.5 * (var + mu * mu - 1.0 - std::log(var));
    }
  }

  std::vector<double> eps(d), x_k(d);
  for (int k = big_k; k >= 2; --k) {
    const double abar_k = s.alpha_bar_at(k);
    const double abar_prev = s.alpha_bar_at(k - 1);
    const double beta_k = s.beta_at(k);
    const double alpha_k = s.alpha_at(k);
    const double post_var = s.posterior_variance(k);
    const double c0 = std::sqrt(abar_prev) * beta_k / (1.0 - abar_k);
    const double ck = std::sqrt(alpha_k) * (1.0 - abar_prev) / (1.0 - abar_k);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha_k);
    const double coef = beta_k / std::sqrt(1.0 - abar_k);
    for (int draw = 0; draw < n_draws; ++draw) {
      for (std::size_t c = 0; c < d; ++c) eps[c] = draw_normal(rng);
      x_k = q_sample(x0, k, eps, s);
      const std::vector<double> eps_hat = predict_noise(x_k, k);
      for (std::size_t c = 0; c < d; ++c) {
        const double mu_post = c0 * x0[c] + ck * x_k[c];
        const double mu_theta = inv_sqrt_alpha * (x_k[c] - coef * eps_hat[c]);
        const double diff = mu_post - mu_theta;
        nll[c] += diff * diff / (2.0 * post_var * n_draws);
      }
    }
  }

  // reconstruction: -log N(x0; mu_theta(x^1, 1), beta_1)
  {
    const double beta_1 = s.beta_at(1);
    const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha_at(1));
    const double coef = beta_1 / std::sqrt(1.0 - s.alpha_bar_at(1));
    for (int draw = 0; draw < n_draws; ++draw) {
      for (std::size_t c = 0; c < d; ++c) eps[c] = draw_normal(rng);
      x_k = q_sample(x0, 1, eps, s);
      const std::vector<double> eps_hat = predict_noise(x_k, 1);
      for (std::size_t c = 0; c < d; ++c) {
        const double mu_theta = inv_sqrt_alpha * (x_k[c] - coef * eps_hat[c]);
        const double diff = x0[c] - mu_theta;
        nll[c] += (0.5 * std::log(kTwoPi * beta_1) + diff * diff / (2.0 * beta_1)) / n_draws;
      }
    }
  }
  return nll;
}

double temporal_log_scale_correction(const NormalizationStats& stats) {
  return std::log(stats.time_interval_std);
}

double spatial_log_scale_correction(const NormalizationStats& stats) {
  double c = 0.0;
  for (double sd : stats.space_std) c += std::log(sd);
  return c;
}

EventNll vlb_nll(const Model& model, const HiddenRep& h, double tau,
                 const std::vector<double>& coords, int location_id, Rng& rng) {
  NoGradScope ng;
  const int vd = model.space_value_dim();
  std::vector<double> x0(1 + vd);
  x0[0] = model.stats.norm_tau(tau);
  if (model.space.is_discrete()) {
    const Tensor& w = model.encoder.space_embed;
    for (int j = 0; j < vd; ++j)
      x0[1 + j] = w.data()[static_cast<std::size_t>(location_id) * vd + j];
  } else {
    const std::vector<double> z = model.stats.norm_space(coords);
    for (int j = 0; j < vd; ++j) x0[1 + j] = z[j];
  }

  auto predictor = [&](const std::vector<double>& x_k, int k) {
    Tensor noisy_tau = Tensor::from({1, 1}, {x_k[0]});
    Tensor noisy_space =
        Tensor::from({1, vd}, std::vector<double>(x_k.begin() + 1, x_k.end()));
    DenoiseOutput pred =
        denoise(model.denoiser, noisy_space, noisy_tau, h, k, model.schedule.steps);
    std::vector<double> out(x_k.size());
    out[0] = pred.eps_time.data()[0];
    for (int j = 0; j < vd; ++j) out[1 + j] = pred.eps_space.data()[j];
    return out;
  };

  const std::vector<double> per_coord =
      vlb_nll_per_coordinate(x0, model.schedule, predictor, model.config.vlb_draws, rng);
  EventNll out;
  out.temporal = per_coord[0] + temporal_log_scale_correction(model.stats);
  out.spatial = 0.0;
  for (int j = 0; j < vd; ++j) out.spatial += per_coord[1 + j];
  if (!model.space.is_discrete()) out.spatial += spatial_log_scale_correction(model.stats);
  return out;
}

}  // namespace stpp

#include "stpp/model.hpp"

#include <cmath>
#include <stdexcept>

#include "stpp/rng.hpp"

namespace stpp {

double DiffusionSchedule::posterior_variance(int k) const {
  // (1 - abar_{k-1}) / (1 - abar_k) * beta_k; zero at k = 1
  return (1.0 - alpha_bar_at(k - 1)) / (1.0 - alpha_bar_at(k)) * beta_at(k);
}

DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("make_schedule: need at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw std::invalid_argument("make_schedule: require 0 < beta_start <= beta_end < 1");
  DiffusionSchedule s;
  s.steps = steps;
  s.beta.resize(steps);
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  double prod = 1.0;
  for (int k = 0; k < steps; ++k) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(k) / (steps - 1);
    s.beta[k] = beta_start + frac * (beta_end - beta_start);
    s.alpha[k] = 1.0 - s.beta[k];
    prod *= s.alpha[k];
    s.alpha_bar[k] = prod;
  }
  return s;
}

double ModelConfig::resolved_beta_start() const {
  return beta_start > 0.0 ? beta_start : 1e-4 * (1000.0 / diffusion_steps);
}

double ModelConfig::resolved_beta_end() const {
  return beta_end > 0.0 ? beta_end : 0.02 * (1000.0 / diffusion_steps);
}

DiffusionSchedule make_default_schedule(int steps) {
  ModelConfig c;
  c.diffusion_steps = steps;
  return make_schedule(steps, c.resolved_beta_start(), c.resolved_beta_end());
}

namespace {

Tensor init_weight(int rows, int cols, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros({rows, cols}, true);
  std::uniform_real_distribution<double> u(-bound, bound);
  for (double& v : t.data()) v = u(rng);
  return t;
}

AttentionStream init_stream(int m, Rng& rng) {
  AttentionStream s;
  s.wq = init_weight(m, m, m, rng);
  s.wk = init_weight(m, m, m, rng);
  s.wv = init_weight(m, m, m, rng);
  s.ff_w1 = init_weight(m, m, m, rng);
  s.ff_b1 = init_weight(1, m, m, rng);
  s.ff_w2 = init_weight(m, m, m, rng);
  s.ff_b2 = init_weight(1, m, m, rng);
  return s;
}

DenoiserBranch init_branch(int value_dim, int m, Rng& rng) {
  DenoiserBranch b;
  b.w_value = init_weight(value_dim, m, value_dim, rng);
  b.b_value = init_weight(1, m, value_dim, rng);
  b.w_hist = init_weight(m, m, m, rng);
  b.b_hist = init_weight(1, m, m, rng);
  b.w2 = init_weight(m, m, m, rng);
  b.b2 = init_weight(1, m, m, rng);
  b.w3 = init_weight(m, m, m, rng);
  b.b3 = init_weight(1, m, m, rng);
  return b;
}

}  // namespace

Model init_model(const SpaceSpec& space, const ModelConfig& config,
                 const NormalizationStats& stats, std::uint64_t seed) {
  if (config.embed_dim < 2 || config.embed_dim % 2 != 0)
    throw std::invalid_argument("init_model: embed_dim must be even and >= 2");
  if (space.is_temporal())
    throw std::invalid_argument("init_model: times-only data carries no spatial domain to model");
  Model m;
  m.space = space;
  m.config = config;
  m.stats = stats;
  m.schedule = make_schedule(config.diffusion_steps, config.resolved_beta_start(),
                             config.resolved_beta_end());

  Rng rng = make_rng(derive_seed(seed, 0xe17c0de));
  const int md = config.embed_dim;
  const int in_dim = space.is_discrete() ? space.num_locations : space.dim;

  m.encoder.embed_dim = md;
  m.encoder.space_embed = init_weight(in_dim, md, space.is_discrete() ? md : in_dim, rng);
  m.encoder.start_space = init_weight(1, md, md, rng);
  m.encoder.start_time = init_weight(1, md, md, rng);
  for (auto& s : m.encoder.streams) s = init_stream(md, rng);

  const int value_dim = m.space_value_dim();
  m.denoiser.embed_dim = md;
  m.denoiser.ca_space_w = init_weight(2 * md, 2, 2 * md, rng);
  m.denoiser.ca_space_b = init_weight(1, 2, 2 * md, rng);
  m.denoiser.ca_time_w = init_weight(2 * md, 2, 2 * md, rng);
  m.denoiser.ca_time_b = init_weight(1, 2, 2 * md, rng);
  m.denoiser.space_branch = init_branch(value_dim, md, rng);
  m.denoiser.time_branch = init_branch(1, md, rng);
  m.denoiser.head_space_w = init_weight(md, value_dim, md, rng);
  m.denoiser.head_space_b = init_weight(1, value_dim, md, rng);
  m.denoiser.head_time_w = init_weight(md, 1, md, rng);
  m.denoiser.head_time_b = init_weight(1, 1, md, rng);

  if (space.is_discrete()) renormalize_location_embeddings(m);
  return m;
}

void renormalize_location_embeddings(Model& model) {
  if (!model.space.is_discrete()) return;
  Tensor& w = model.encoder.space_embed;
  const int n = w.rows(), m = w.cols();
  const double target = std::sqrt(static_cast<double>(m));
  for (int i = 0; i < n; ++i) {
    double norm = 0.0;
    for (int j = 0; j < m; ++j) {
      const double v = w.data()[static_cast<std::size_t>(i) * m + j];
      norm += v * v;
    }
    norm = std::sqrt(norm);
    if (norm <= 0.0) continue;
    const double f = target / norm;
    for (int j = 0; j < m; ++j) w.data()[static_cast<std::size_t>(i) * m + j] *= f;
  }
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> p;
  p.push_back(encoder.space_embed);
  p.push_back(encoder.start_space);
  p.push_back(encoder.start_time);
  for (const auto& s : encoder.streams) {
    p.push_back(s.wq);
    p.push_back(s.wk);
    p.push_back(s.wv);
    p.push_back(s.ff_w1);
    p.push_back(s.ff_b1);
    p.push_back(s.ff_w2);
    p.push_back(s.ff_b2);
  }
  p.push_back(denoiser.ca_space_w);
  p.push_back(denoiser.ca_space_b);
  p.push_back(denoiser.ca_time_w);
  p.push_back(denoiser.ca_time_b);
  for (const DenoiserBranch* b : {&denoiser.space_branch, &denoiser.time_branch}) {
    p.push_back(b->w_value);
    p.push_back(b->b_value);
    p.push_back(b->w_hist);
    p.push_back(b->b_hist);
    p.push_back(b->w2);
    p.push_back(b->b2);
    p.push_back(b->w3);
    p.push_back(b->b3);
  }
  p.push_back(denoiser.head_space_w);
  p.push_back(denoiser.head_space_b);
  p.push_back(denoiser.head_time_w);
  p.push_back(denoiser.head_time_b);
  return p;
}

}  // namespace stpp

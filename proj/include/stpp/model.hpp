#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stpp/denoiser.hpp"
#include "stpp/encoder.hpp"
#include "stpp/events.hpp"

namespace stpp {

struct DiffusionSchedule {
  int steps = 0;                  // K
  std::vector<double> beta;       // index k-1 holds beta_k
  std::vector<double> alpha;      // 1 - beta_k
  std::vector<double> alpha_bar;  // prod_{j<=k} alpha_j

  double beta_at(int k) const { return beta.at(k - 1); }
  double alpha_at(int k) const { return alpha.at(k - 1); }
  double alpha_bar_at(int k) const { return k == 0 ? 1.0 : alpha_bar.at(k - 1); }
  // posterior variance of x^{k-1} given (x^k, x^0)
  double posterior_variance(int k) const;
};

// Linear interpolation of beta between the given endpoints.
DiffusionSchedule make_schedule(int steps, double beta_start, double beta_end);

// Default endpoints follow the usual 1000-step range [1e-4, 0.02] rescaled by
// 1000/K, which keeps alpha_bar_K below 1e-3 for K = 200.
DiffusionSchedule make_default_schedule(int steps);

struct ModelConfig {
  int embed_dim = 64;       // M
  int diffusion_steps = 200;  // K
  double beta_start = 0.0;  // 0 = use the default scaled endpoints
  double beta_end = 0.0;
  int vlb_draws = 1;  // Monte-Carlo draws per VLB term

  double resolved_beta_start() const;
  double resolved_beta_end() const;
};

struct Model {
  SpaceSpec space;
  ModelConfig config;
  EncoderWeights encoder;
  DenoiserWeights denoiser;
  DiffusionSchedule schedule;
  NormalizationStats stats;

  // Spatial diffusion dimension: D for continuous, M for discrete embeddings.
  int space_value_dim() const {
    return space.is_discrete() ? config.embed_dim : space.dim;
  }
  // All trainable tensors in a stable order.
  std::vector<Tensor> parameters() const;
};

Model init_model(const SpaceSpec& space, const ModelConfig& config,
                 const NormalizationStats& stats, std::uint64_t seed);

// Keep discrete location embeddings at row norm sqrt(M); a plain noise-
// prediction loss otherwise shrinks them toward zero.
void renormalize_location_embeddings(Model& model);

}  // namespace stpp

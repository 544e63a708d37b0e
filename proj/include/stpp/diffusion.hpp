#pragma once

#include <functional>
#include <vector>

#include "stpp/model.hpp"
#include "stpp/rng.hpp"

namespace stpp {

// Closed-form forward noising: sqrt(abar_k) x0 + sqrt(1 - abar_k) eps,
// applied per coordinate.
std::vector<double> q_sample(const std::vector<double>& x0, int k,
                             const std::vector<double>& eps, const DiffusionSchedule& s);

// One reverse step. z must be all zeros when k == 1; the reverse variance is
// beta_k.
std::vector<double> p_sample_step(const std::vector<double>& x_k, int k,
                                  const std::vector<double>& eps_pred,
                                  const std::vector<double>& z, const DiffusionSchedule& s);

struct SampledEvent {
  double tau = 0.0;            // denormalized, clamped at 0
  std::vector<double> coords;  // denormalized (continuous)
  int location_id = -1;        // discrete, after rounding
  double tau_normalized = 0.0;
  std::vector<double> space_normalized;  // pre-rounding values
};

// n independent draws of the next event given a history representation.
std::vector<SampledEvent> sample_event(const Model& model, const HiddenRep& h, int n, Rng& rng);

// Same reverse chains, additionally recording the normalized state at the
// requested steps (step K is the initial noise, step 0 the final draw).
struct TrajectorySnapshot {
  int step = 0;
  int sample_id = 0;
  double tau = 0.0;            // normalized units
  std::vector<double> space;   // normalized units
};
std::vector<SampledEvent> sample_event_trajectory(const Model& model, const HiddenRep& h, int n,
                                                  const std::vector<int>& snapshot_steps,
                                                  Rng& rng,
                                                  std::vector<TrajectorySnapshot>& snapshots);

// Nearest location id under Euclidean distance to the embedding rows; ties go
// to the smallest id.
int round_to_location(const std::vector<double>& s0_embedding, const Tensor& location_embeddings);

// Variational-bound NLL of a clean value under the reverse process, split per
// coordinate (nats). `predict_noise(x_k, k)` supplies the denoiser output.
// Per-step KL terms use the forward posterior variance; the reconstruction
// term uses beta_1.
std::vector<double> vlb_nll_per_coordinate(
    const std::vector<double>& x0, const DiffusionSchedule& s,
    const std::function<std::vector<double>(const std::vector<double>&, int)>& predict_noise,
    int n_draws, Rng& rng);

struct EventNll {
  double temporal = 0.0;  // nats, original time units
  double spatial = 0.0;   // nats, original space units (embedding units if discrete)
};

// VLB for one observed event given its history representation. Includes the
// change-of-variables correction from normalized to original units.
EventNll vlb_nll(const Model& model, const HiddenRep& h, double tau,
                 const std::vector<double>& coords, int location_id, Rng& rng);

// log|d normalized / d original| correction terms added to normalized-unit NLL.
double temporal_log_scale_correction(const NormalizationStats& stats);
double spatial_log_scale_correction(const NormalizationStats& stats);

}  // namespace stpp

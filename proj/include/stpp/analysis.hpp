#pragma once

#include <string>
#include <vector>

#include "stpp/diffusion.hpp"
#include "stpp/model.hpp"

namespace stpp {

// Mean co-attention weights per denoising step, averaged over every event of
// a split (noisy inputs drawn from the forward chain at that step).
struct AttentionTraceRow {
  int step = 0;
  double space_on_space = 0.0;  // alpha_s weight on the spatial branch
  double space_on_time = 0.0;
  double time_on_space = 0.0;
  double time_on_time = 0.0;
};

std::vector<AttentionTraceRow> attention_trace(const Model& model,
                                               const std::vector<EventSequence>& split,
                                               const std::vector<int>& steps,
                                               std::uint64_t seed);

// step,domain,weight_on_time,weight_on_space
void save_attention_trace(const std::vector<AttentionTraceRow>& rows, const std::string& file);

// Reverse-chain snapshots for a set of histories; one row per
// (step, sample): step,sample_id,tau,s_1..s_D (normalized units).
std::vector<TrajectorySnapshot> denoising_snapshots(const Model& model,
                                                    const std::vector<EventSequence>& split,
                                                    const std::vector<int>& steps,
                                                    int samples_per_event, std::uint64_t seed);

void save_snapshots(const std::vector<TrajectorySnapshot>& snaps, int space_dim,
                    const std::string& file);

// Default snapshot steps {K, 3K/4, K/2, K/4, 1, 0}.
std::vector<int> default_snapshot_steps(int diffusion_steps);

}  // namespace stpp

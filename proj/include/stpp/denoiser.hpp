#pragma once

#include <utility>

#include "stpp/encoder.hpp"
#include "stpp/tensor.hpp"

namespace stpp {

// One conditioning branch: three layers with ReLU activations. The first
// layer folds the noisy value, the matching history stream and the step
// embedding together; the last layer is linear.
struct DenoiserBranch {
  Tensor w_value, b_value;  // value_dim x M, 1 x M
  Tensor w_hist, b_hist;    // M x M, 1 x M
  Tensor w2, b2;            // M x M, 1 x M
  Tensor w3, b3;            // M x M, 1 x M
};

struct DenoiserWeights {
  int embed_dim = 64;  // M; the step embedding shares this dimension
  // Mutual attention over {space, time} branches, conditioned on the joint
  // history representation and the step embedding.
  Tensor ca_space_w, ca_space_b;  // (2M) x 2, 1 x 2
  Tensor ca_time_w, ca_time_b;
  DenoiserBranch space_branch;  // value_dim = D (continuous) or M (discrete)
  DenoiserBranch time_branch;   // value_dim = 1
  Tensor head_space_w, head_space_b;  // M x value_dim, 1 x value_dim
  Tensor head_time_w, head_time_b;    // M x 1, 1 x 1
};

// Sinusoidal embedding of the integer diffusion step; rejects k outside
// [1, max_step].
Tensor step_embed(int k, int dim, int max_step);

// Convex weights over the two branches. Index 0 weighs the space branch,
// index 1 the time branch; each output sums to 1.
struct CoAttention {
  Tensor alpha_space;  // 1 x 2, weights used for the spatial noise output
  Tensor alpha_time;   // 1 x 2, weights used for the temporal noise output
};
CoAttention co_attention(const DenoiserWeights& w, const Tensor& h_joint, const Tensor& e_k);

struct DenoiseOutput {
  Tensor eps_space;  // n x value_dim
  Tensor eps_time;   // n x 1
  CoAttention attention;
};

// Predict the forward noise for a batch of n diffusion states that share the
// history representation h and step k.
DenoiseOutput denoise(const DenoiserWeights& w, const Tensor& noisy_space,
                      const Tensor& noisy_tau, const HiddenRep& h, int k, int max_step);

}  // namespace stpp

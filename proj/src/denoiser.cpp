#include "stpp/denoiser.hpp"

#include <stdexcept>

namespace stpp {

Tensor step_embed(int k, int dim, int max_step) {
  if (k < 1 || k > max_step)
    throw std::invalid_argument("step_embed: step " + std::to_string(k) + " outside [1," +
                                std::to_string(max_step) + "]");
  return positional_encode(static_cast<double>(k), dim);
}

CoAttention co_attention(const DenoiserWeights& w, const Tensor& h_joint, const Tensor& e_k) {
  Tensor cond = concat(h_joint, e_k, 1);  // 1 x 2M
  CoAttention out;
  out.alpha_space = softmax(add(matmul(cond, w.ca_space_w), w.ca_space_b), 1);
  out.alpha_time = softmax(add(matmul(cond, w.ca_time_w), w.ca_time_b), 1);
  return out;
}

namespace {

Tensor run_branch(const DenoiserBranch& b, const Tensor& value, const Tensor& hist,
                  const Tensor& e_k) {
  // conditioning row shared by all batch rows
  Tensor cond = add(add(matmul(hist, b.w_hist), b.b_hist), e_k);
  Tensor x = relu(add_rowvec(add_rowvec(matmul(value, b.w_value), b.b_value), cond));
  x = relu(add_rowvec(matmul(x, b.w2), b.b2));
  return add_rowvec(matmul(x, b.w3), b.b3);
}

}  // namespace

DenoiseOutput denoise(const DenoiserWeights& w, const Tensor& noisy_space,
                      const Tensor& noisy_tau, const HiddenRep& h, int k, int max_step) {
  if (noisy_space.rows() != noisy_tau.rows())
    throw std::invalid_argument("denoise: space/time batch sizes differ");
  if (noisy_tau.cols() != 1) throw std::invalid_argument("denoise: tau must have one column");

  Tensor e_k = step_embed(k, w.embed_dim, max_step);
  DenoiseOutput out;
  out.attention = co_attention(w, h.joint, e_k);

  Tensor x_space = run_branch(w.space_branch, noisy_space, h.space, e_k);
  Tensor x_time = run_branch(w.time_branch, noisy_tau, h.time, e_k);

  Tensor space_feat = blend2(out.attention.alpha_space, x_space, x_time);
  Tensor time_feat = blend2(out.attention.alpha_time, x_space, x_time);

  out.eps_space = add_rowvec(matmul(space_feat, w.head_space_w), w.head_space_b);
  out.eps_time = add_rowvec(matmul(time_feat, w.head_time_w), w.head_time_b);
  return out;
}

}  // namespace stpp

#pragma once

#include <array>
#include <vector>

#include "stpp/events.hpp"
#include "stpp/tensor.hpp"

namespace stpp {

// One self-attention stream: scaled dot-product attention with a causal mask
// followed by a position-wise feed-forward (linear, ReLU, linear).
struct AttentionStream {
  Tensor wq, wk, wv;        // M x M
  Tensor ff_w1, ff_b1;      // M x M, 1 x M
  Tensor ff_w2, ff_b2;      // M x M, 1 x M
};

struct EncoderWeights {
  int embed_dim = 64;  // M
  // Spatial embedding: (D x M) continuous, (N x M) discrete; discrete rows
  // double as the diffusion targets for location ids.
  Tensor space_embed;
  Tensor start_space, start_time;  // 1 x M learned start-of-sequence token
  std::array<AttentionStream, 3> streams;  // joint, space, time
};

// Per-stream history summaries; row i is the representation after observing
// events 1..i (row 0 covers the empty history via the start token).
struct EncoderOutput {
  Tensor h_joint, h_space, h_time;  // (L+1) x M
  int positions() const { return h_joint.rows(); }
};

struct HiddenRep {
  Tensor joint, space, time;  // 1 x M each
};

HiddenRep history_rep(const EncoderOutput& out, int i);

// Entry j (1-based) is cos(t / 10000^((j-1)/M)) for odd j and the matching
// sin for even j.
Tensor positional_encode(double t, int m);

// Per-event encoder inputs in normalized units.
struct EncoderInput {
  std::vector<double> times;          // encoder time axis values, length L
  std::vector<std::vector<double>> coords;  // normalized, continuous only
  std::vector<int> location_ids;      // discrete only
  int length() const { return static_cast<int>(times.size()); }
};

EncoderInput make_encoder_input(const EventSequence& seq, const SpaceSpec& space,
                                const NormalizationStats& stats);

Tensor embed_space(const EncoderWeights& w, const SpaceSpec& space,
                   const std::vector<double>& coords, int location_id);

EncoderOutput encode(const EncoderWeights& w, const SpaceSpec& space, const EncoderInput& input);

}  // namespace stpp

#include "stpp/encoder.hpp"

#include <cmath>
#include <stdexcept>

namespace stpp {

Tensor positional_encode(double t, int m) {
  if (m <= 0 || m % 2 != 0) throw std::invalid_argument("positional_encode: dimension must be even");
  std::vector<double> v(m);
  for (int j = 1; j <= m; ++j) {
    const double freq = std::pow(10000.0, -static_cast<double>(j - 1) / m);
    v[j - 1] = (j % 2 == 1) ? std::cos(t * freq) : std::sin(t * freq);
  }
  return Tensor::row_vector(std::move(v));
}

EncoderInput make_encoder_input(const EventSequence& seq, const SpaceSpec& space,
                                const NormalizationStats& stats) {
  EncoderInput in;
  in.times.reserve(seq.events.size());
  for (const Event& e : seq.events) {
    in.times.push_back(stats.encoder_time(e.t, seq.window_start));
    if (space.is_discrete())
      in.location_ids.push_back(e.location_id);
    else
      in.coords.push_back(stats.norm_space(e.coords));
  }
  return in;
}

Tensor embed_space(const EncoderWeights& w, const SpaceSpec& space,
                   const std::vector<double>& coords, int location_id) {
  if (space.is_discrete()) {
    if (location_id < 0 || location_id >= space.num_locations)
      throw std::invalid_argument("embed_space: location id out of range");
    return gather_rows(w.space_embed, {location_id});
  }
  if (static_cast<int>(coords.size()) != space.dim)
    throw std::invalid_argument("embed_space: coordinate dimension mismatch");
  return matmul(Tensor::row_vector(coords), w.space_embed);
}

namespace {

Tensor run_stream(const AttentionStream& s, const Tensor& e, int m) {
  Tensor q = matmul(e, s.wq);
  Tensor k = matmul(e, s.wk);
  Tensor v = matmul(e, s.wv);
  Tensor scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(m)));
  Tensor attn = causal_row_softmax(scores);
  Tensor ctx = matmul(attn, v);
  Tensor hidden = relu(add_rowvec(matmul(ctx, s.ff_w1), s.ff_b1));
  return add_rowvec(matmul(hidden, s.ff_w2), s.ff_b2);
}

}  // namespace

EncoderOutput encode(const EncoderWeights& w, const SpaceSpec& space, const EncoderInput& input) {
  const int l = input.length();
  if (l < 1) throw std::invalid_argument("encode: sequence must contain at least one event");
  const int m = w.embed_dim;

  // time embeddings: constants except the learned start row
  Tensor time_rows = Tensor::zeros({l, m});
  for (int i = 0; i < l; ++i) {
    Tensor pe = positional_encode(input.times[i], m);
    for (int j = 0; j < m; ++j) time_rows.data()[static_cast<std::size_t>(i) * m + j] = pe.data()[j];
  }
  Tensor e_time = concat(w.start_time, time_rows, 0);

  Tensor space_rows;
  if (space.is_discrete()) {
    space_rows = gather_rows(w.space_embed, input.location_ids);
  } else {
    Tensor coords = Tensor::zeros({l, space.dim});
    for (int i = 0; i < l; ++i)
      for (int j = 0; j < space.dim; ++j)
        coords.data()[static_cast<std::size_t>(i) * space.dim + j] = input.coords[i][j];
    space_rows = matmul(coords, w.space_embed);
  }
  Tensor e_space = concat(w.start_space, space_rows, 0);
  Tensor e_joint = add(e_space, e_time);

  EncoderOutput out;
  out.h_joint = run_stream(w.streams[0], e_joint, m);
  out.h_space = run_stream(w.streams[1], e_space, m);
  out.h_time = run_stream(w.streams[2], e_time, m);
  return out;
}

HiddenRep history_rep(const EncoderOutput& out, int i) {
  return {row(out.h_joint, i), row(out.h_space, i), row(out.h_time, i)};
}

}  // namespace stpp

#include "stpp/analysis.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace stpp {

std::vector<AttentionTraceRow> attention_trace(const Model& model,
                                               const std::vector<EventSequence>& split,
                                               const std::vector<int>& steps,
                                               std::uint64_t seed) {
  if (split.empty()) throw std::invalid_argument("attention_trace: empty split");
  NoGradScope ng;
  const int big_k = model.schedule.steps;
  const int vd = model.space_value_dim();

  std::vector<AttentionTraceRow> rows;
  rows.reserve(steps.size());
  for (int k : steps) {
    if (k < 1 || k > big_k)
      throw std::invalid_argument("attention_trace: step out of range: " + std::to_string(k));
    rows.push_back({k, 0.0, 0.0, 0.0, 0.0});
  }

  std::size_t n = 0;
  for (const EventSequence& seq : split) {
    const EncoderInput input = make_encoder_input(seq, model.space, model.stats);
    const EncoderOutput enc = encode(model.encoder, model.space, input);
    const std::vector<double> taus = intervals(seq);
    for (std::size_t ev = 0; ev < seq.events.size(); ++ev) {
      const HiddenRep h = history_rep(enc, static_cast<int>(ev));
      Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(seq.id), ev));

      std::vector<double> x0(1 + vd);
      x0[0] = model.stats.norm_tau(taus[ev]);
      if (model.space.is_discrete()) {
        const Tensor& w = model.encoder.space_embed;
        for (int j = 0; j < vd; ++j)
          x0[1 + j] =
              w.data()[static_cast<std::size_t>(seq.events[ev].location_id) * vd + j];
      } else {
        const std::vector<double> z = model.stats.norm_space(seq.events[ev].coords);
        std::copy(z.begin(), z.end(), x0.begin() + 1);
      }

      for (std::size_t r = 0; r < steps.size(); ++r) {
        std::vector<double> eps(x0.size());
        for (double& e : eps) e = draw_normal(rng);
        const std::vector<double> x_k = q_sample(x0, steps[r], eps, model.schedule);
        Tensor noisy_tau = Tensor::from({1, 1}, {x_k[0]});
        Tensor noisy_space =
            Tensor::from({1, vd}, std::vector<double>(x_k.begin() + 1, x_k.end()));
        const DenoiseOutput out =
            denoise(model.denoiser, noisy_space, noisy_tau, h, steps[r], big_k);
        rows[r].space_on_space += out.attention.alpha_space.data()[0];
        rows[r].space_on_time += out.attention.alpha_space.data()[1];
        rows[r].time_on_space += out.attention.alpha_time.data()[0];
        rows[r].time_on_time += out.attention.alpha_time.data()[1];
      }
      ++n;
    }
  }
  for (AttentionTraceRow& r : rows) {
    r.space_on_space /= static_cast<double>(n);
    r.space_on_time /= static_cast<double>(n);
    r.time_on_space /= static_cast<double>(n);
    r.time_on_time /= static_cast<double>(n);
  }
  return rows;
}

void save_attention_trace(const std::vector<AttentionTraceRow>& rows, const std::string& file) {
  std::ofstream f(file, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write attention trace: " + file);
  f << "step,domain,weight_on_time,weight_on_space\n";
  for (const AttentionTraceRow& r : rows) {
    f << r.step << ",space," << format_double(r.space_on_time) << ","
      << format_double(r.space_on_space) << "\n";
    f << r.step << ",time," << format_double(r.time_on_time) << ","
      << format_double(r.time_on_space) << "\n";
  }
}

std::vector<TrajectorySnapshot> denoising_snapshots(const Model& model,
                                                    const std::vector<EventSequence>& split,
                                                    const std::vector<int>& steps,
                                                    int samples_per_event, std::uint64_t seed) {
  if (split.empty()) throw std::invalid_argument("denoising_snapshots: empty split");
  NoGradScope ng;
  std::vector<TrajectorySnapshot> all;
  int sample_base = 0;
  for (const EventSequence& seq : split) {
    const EncoderInput input = make_encoder_input(seq, model.space, model.stats);
    const EncoderOutput enc = encode(model.encoder, model.space, input);
    for (std::size_t ev = 0; ev < seq.events.size(); ++ev) {
      const HiddenRep h = history_rep(enc, static_cast<int>(ev));
      Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(seq.id), ev));
      std::vector<TrajectorySnapshot> snaps;
      sample_event_trajectory(model, h, samples_per_event, steps, rng, snaps);
      for (TrajectorySnapshot& s : snaps) s.sample_id += sample_base;
      sample_base += samples_per_event;
      all.insert(all.end(), snaps.begin(), snaps.end());
    }
  }
  return all;
}

void save_snapshots(const std::vector<TrajectorySnapshot>& snaps, int space_dim,
                    const std::string& file) {
  std::ofstream f(file, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write snapshots: " + file);
  f << "step,sample_id,tau";
  for (int j = 1; j <= space_dim; ++j) f << ",s" << j;
  f << "\n";
  for (const TrajectorySnapshot& s : snaps) {
    f << s.step << "," << s.sample_id << "," << format_double(s.tau);
    for (double v : s.space) f << "," << format_double(v);
    f << "\n";
  }
}

std::vector<int> default_snapshot_steps(int diffusion_steps) {
  std::vector<int> steps{diffusion_steps, 3 * diffusion_steps / 4, diffusion_steps / 2,
                         diffusion_steps / 4, 1, 0};
  steps.erase(std::unique(steps.begin(), steps.end()), steps.end());
  std::vector<int> out;
  for (int s : steps)
    if (s >= 0 && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
  return out;
}

}  // namespace stpp

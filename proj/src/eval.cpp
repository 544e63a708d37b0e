#include "stpp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "stpp/train.hpp"

namespace stpp {

double rmse(const std::vector<double>& truth, const std::vector<double>& pred) {
  if (truth.size() != pred.size() || truth.empty())
    throw std::invalid_argument("rmse: length mismatch or empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double d = truth[i] - pred[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(truth.size()));
}

double euclid(const std::vector<std::vector<double>>& truth,
              const std::vector<std::vector<double>>& pred) {
  if (truth.size() != pred.size() || truth.empty())
    throw std::invalid_argument("euclid: length mismatch or empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].size() != pred[i].size())
      throw std::invalid_argument("euclid: dimension mismatch at element " + std::to_string(i));
    double sq = 0.0;
    for (std::size_t j = 0; j < truth[i].size(); ++j) {
      const double d = truth[i][j] - pred[i][j];
      sq += d * d;
    }
    acc += std::sqrt(sq);
  }
  return acc / static_cast<double>(truth.size());
}

double accuracy(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size() || truth.empty())
    throw std::invalid_argument("accuracy: length mismatch or empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (truth[i] == pred[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

namespace {

Prediction summarize_samples(const Model& model, const std::vector<SampledEvent>& draws,
                             double history_end) {
  Prediction p;
  double tau_sum = 0.0;
  for (const SampledEvent& e : draws) tau_sum += e.tau;
  p.tau = tau_sum / static_cast<double>(draws.size());
  p.t = history_end + p.tau;
  if (model.space.is_discrete()) {
    std::map<int, int> votes;
    for (const SampledEvent& e : draws) ++votes[e.location_id];
    int best_id = -1, best_n = -1;
    for (const auto& [id, n] : votes)  // map order: ties resolve to smallest id
      if (n > best_n) {
        best_n = n;
        best_id = id;
      }
    p.location_id = best_id;
  } else {
    p.coords.assign(model.space.dim, 0.0);
    for (const SampledEvent& e : draws)
      for (int j = 0; j < model.space.dim; ++j) p.coords[j] += e.coords[j];
    for (double& c : p.coords) c /= static_cast<double>(draws.size());
  }
  return p;
}

}  // namespace

Prediction predict_next(const Model& model, const EventSequence& seq, int history_len,
                        int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("predict_next: need at least one sample");
  if (history_len < 0 || history_len > static_cast<int>(seq.events.size()))
    throw std::invalid_argument("predict_next: history length out of range");
  NoGradScope ng;

  HiddenRep h;
  if (history_len == 0) {
    // cold start: the encoder's learned start token stands in for h_0
    EventSequence probe = seq;
    probe.events.resize(1);
    const EncoderInput input = make_encoder_input(probe, model.space, model.stats);
    const EncoderOutput enc = encode(model.encoder, model.space, input);
    h = history_rep(enc, 0);
  } else {
    EventSequence prefix = seq;
    prefix.events.resize(history_len);
    const EncoderInput input = make_encoder_input(prefix, model.space, model.stats);
    const EncoderOutput enc = encode(model.encoder, model.space, input);
    h = history_rep(enc, history_len);
  }

  Rng rng = make_rng(seed);
  const std::vector<SampledEvent> draws = sample_event(model, h, n_samples, rng);
  const double history_end = history_len == 0 ? seq.window_start : seq.events[history_len - 1].t;
  return summarize_samples(model, draws, history_end);
}

MetricsReport evaluate(const Model& model, const std::vector<EventSequence>& split,
                       const EvalOptions& options) {
  if (split.empty()) throw std::invalid_argument("evaluate: empty split");
  if (options.n_samples < 1) throw std::invalid_argument("evaluate: n_samples must be >= 1");
  NoGradScope ng;

  MetricsReport report;
  double nll_t_sum = 0.0, nll_s_sum = 0.0;
  std::vector<double> tau_truth, tau_pred;
  std::vector<std::vector<double>> s_truth, s_pred;
  std::vector<int> id_truth, id_pred;

  for (const EventSequence& seq : split) {
    const EncoderInput input = make_encoder_input(seq, model.space, model.stats);
    const EncoderOutput enc = encode(model.encoder, model.space, input);
    const std::vector<double> taus = intervals(seq);
    for (std::size_t ev = 0; ev < seq.events.size(); ++ev) {
      const HiddenRep h = history_rep(enc, static_cast<int>(ev));
      // likelihood
      Rng vrng = make_rng(derive_seed(options.seed, static_cast<std::uint64_t>(seq.id), ev));
      const EventNll nll = vlb_nll(model, h, taus[ev], seq.events[ev].coords,
                                   seq.events[ev].location_id, vrng);
      nll_t_sum += nll.temporal;
      nll_s_sum += nll.spatial;
      // teacher-forced point prediction
      Rng prng = make_rng(
          derive_seed(options.seed ^ 0xb1a5ull, static_cast<std::uint64_t>(seq.id), ev));
      const std::vector<SampledEvent> draws =
          sample_event(model, h, options.n_samples, prng);
      const double history_end = ev == 0 ? seq.window_start : seq.events[ev - 1].t;
      const Prediction pred = summarize_samples(model, draws, history_end);
      tau_truth.push_back(taus[ev]);
      tau_pred.push_back(pred.tau);
      if (model.space.is_discrete()) {
        id_truth.push_back(seq.events[ev].location_id);
        id_pred.push_back(pred.location_id);
      } else {
        s_truth.push_back(seq.events[ev].coords);
        s_pred.push_back(pred.coords);
      }
      ++report.n_events;
    }
  }

  report.nll_temporal = nll_t_sum / static_cast<double>(report.n_events);
  report.nll_spatial = nll_s_sum / static_cast<double>(report.n_events);
  report.rmse_time = rmse(tau_truth, tau_pred);
  if (model.space.is_discrete())
    report.accuracy = accuracy(id_truth, id_pred);
  else
    report.euclid_space = euclid(s_truth, s_pred);
  return report;
}

void save_metrics_json(const MetricsReport& r, const std::string& file) {
  nlohmann::json j{{"nll_temporal", r.nll_temporal},
                   {"nll_spatial", r.nll_spatial},
                   {"rmse_time", r.rmse_time},
                   {"n_events", r.n_events}};
  j["euclid_space"] = r.euclid_space ? nlohmann::json(*r.euclid_space) : nlohmann::json();
  j["accuracy"] = r.accuracy ? nlohmann::json(*r.accuracy) : nlohmann::json();
  std::ofstream f(file, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write metrics: " + file);
  f << j.dump(1) << "\n";
}

void append_results_row(const MetricsReport& r, const std::string& dataset,
                        const std::string& split, int diffusion_steps, std::uint64_t seed,
                        const std::string& file) {
  const bool fresh = !std::filesystem::exists(file);
  std::ofstream f(file, std::ios::binary | std::ios::app);
  if (!f) throw std::runtime_error("cannot append results: " + file);
  if (fresh) f << "dataset,split,K,nll_t,nll_s,rmse,euclid,accuracy,seed\n";
  f << dataset << "," << split << "," << diffusion_steps << "," << format_double(r.nll_temporal)
    << "," << format_double(r.nll_spatial) << "," << format_double(r.rmse_time) << ","
    << (r.euclid_space ? format_double(*r.euclid_space) : "") << ","
    << (r.accuracy ? format_double(*r.accuracy) : "") << "," << seed << "\n";
}

}  // namespace stpp

#include "stpp/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace stpp {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("train: learning_rate must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (diffusion_steps < 1) throw std::invalid_argument("train: K must be >= 1");
  if (validation_every < 1) throw std::invalid_argument("train: validation_every must be >= 1");
  if (embed_dim < 2 || embed_dim % 2 != 0)
    throw std::invalid_argument("train: embed_dim must be even and >= 2");
  if (vlb_draws < 1) throw std::invalid_argument("train: vlb_draws must be >= 1");
}

ModelConfig TrainConfig::model_config() const {
  ModelConfig mc;
  mc.embed_dim = embed_dim;
  mc.diffusion_steps = diffusion_steps;
  mc.beta_start = beta_start;
  mc.beta_end = beta_end;
  mc.vlb_draws = vlb_draws;
  return mc;
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor> params, double lr)
    : params_(std::move(params)), lr_(lr) {
  for (const Tensor& p : params_) {
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

void AdamOptimizer::step() {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++t_;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& data = params_[i].data();
    const auto& grad = params_[i].grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * grad[j];
      v[j] = b2 * v[j] + (1.0 - b2) * grad[j] * grad[j];
      data[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
    }
  }
}

void AdamOptimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

double clip_gradients(const std::vector<Tensor>& params, double max_norm) {
  double sq = 0.0;
  for (const Tensor& p : params)
    for (double g : p.grad()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double f = max_norm / norm;
    for (const Tensor& p : params)
      for (double& g : const_cast<std::vector<double>&>(p.grad())) g *= f;
  }
  return norm;
}

namespace {

struct Instance {
  int seq = 0;    // index into the split
  int event = 0;  // 0-based event index within the sequence
};

double param_norm(const std::vector<Tensor>& params) {
  double sq = 0.0;
  for (const Tensor& p : params)
    for (double v : p.data()) sq += v * v;
  return std::sqrt(sq);
}

// Per-event noise-prediction loss terms for one batch; shares one encoder
// pass per sequence.
std::vector<Tensor> batch_loss_terms(Model& model,
                                     const std::vector<EventSequence>& split,
                                     const std::vector<Instance>& batch, Rng& rng) {
  const int vd = model.space_value_dim();
  const int big_k = model.schedule.steps;
  std::uniform_int_distribution<int> kdist(1, big_k);

  // group by sequence, deterministic order
  std::vector<Instance> sorted(batch);
  std::stable_sort(sorted.begin(), sorted.end(), [](const Instance& a, const Instance& b) {
    return a.seq != b.seq ? a.seq < b.seq : a.event < b.event;
  });

  std::vector<Tensor> terms;
  std::size_t i = 0;
  while (i < sorted.size()) {
    const int seq_idx = sorted[i].seq;
    const EventSequence& seq = split[seq_idx];
    const EncoderInput input = make_encoder_input(seq, model.space, model.stats);
    const EncoderOutput enc = encode(model.encoder, model.space, input);
    const std::vector<double> taus = intervals(seq);

    for (; i < sorted.size() && sorted[i].seq == seq_idx; ++i) {
      const int ev = sorted[i].event;
      const int k = kdist(rng);
      std::vector<double> eps(1 + vd);
      for (double& e : eps) e = draw_normal(rng);
      const double sqrt_ab = std::sqrt(model.schedule.alpha_bar_at(k));
      const double sqrt_1mab = std::sqrt(1.0 - model.schedule.alpha_bar_at(k));

      const double tau0 = model.stats.norm_tau(taus[ev]);
      Tensor noisy_tau = Tensor::from({1, 1}, {sqrt_ab * tau0 + sqrt_1mab * eps[0]});

      Tensor noisy_space;
      if (model.space.is_discrete()) {
        // x0 is the live embedding row; gradients flow into it end to end
        Tensor x0 = gather_rows(model.encoder.space_embed, {seq.events[ev].location_id});
        std::vector<double> noise(vd);
        for (int j = 0; j < vd; ++j) noise[j] = sqrt_1mab * eps[1 + j];
        noisy_space = add(scale(x0, sqrt_ab), Tensor::row_vector(std::move(noise)));
      } else {
        const std::vector<double> s0 = model.stats.norm_space(seq.events[ev].coords);
        std::vector<double> vals(vd);
        for (int j = 0; j < vd; ++j) vals[j] = sqrt_ab * s0[j] + sqrt_1mab * eps[1 + j];
        noisy_space = Tensor::row_vector(std::move(vals));
      }

      const HiddenRep h = history_rep(enc, ev);
      DenoiseOutput pred = denoise(model.denoiser, noisy_space, noisy_tau, h, k, big_k);
      Tensor predicted = concat(pred.eps_time, pred.eps_space, 1);
      Tensor target = Tensor::row_vector(std::move(eps));
      terms.push_back(mse(predicted, target));
    }
  }
  return terms;
}

Tensor mean_of(const std::vector<Tensor>& terms) {
  Tensor acc = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
  return scale(acc, 1.0 / static_cast<double>(terms.size()));
}

std::vector<std::vector<double>> snapshot_params(const std::vector<Tensor>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const Tensor& p : params) out.push_back(p.data());
  return out;
}

void restore_params(std::vector<Tensor>& params, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].data() = snap[i];
}

}  // namespace

EventNll mean_vlb(const Model& model, const std::vector<EventSequence>& split,
                  std::uint64_t seed) {
  if (split.empty()) throw std::invalid_argument("mean_vlb: empty split");
  NoGradScope ng;
  EventNll total;
  std::size_t n = 0;
  for (const EventSequence& seq : split) {
    const EncoderInput input = make_encoder_input(seq, model.space, model.stats);
    const EncoderOutput enc = encode(model.encoder, model.space, input);
    const std::vector<double> taus = intervals(seq);
    for (std::size_t ev = 0; ev < seq.events.size(); ++ev) {
      Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(seq.id), ev));
      const HiddenRep h = history_rep(enc, static_cast<int>(ev));
      const EventNll e = vlb_nll(model, h, taus[ev], seq.events[ev].coords,
                                 seq.events[ev].location_id, rng);
      total.temporal += e.temporal;
      total.spatial += e.spatial;
      ++n;
    }
  }
  total.temporal /= static_cast<double>(n);
  total.spatial /= static_cast<double>(n);
  return total;
}

void verify_grad_flow(Model& model, const Dataset& dataset, std::uint64_t seed) {
  std::vector<Tensor> params = model.parameters();
  for (Tensor& p : params) p.zero_grad();
  std::vector<Instance> all;
  for (std::size_t s = 0; s < dataset.train.size(); ++s)
    for (std::size_t e = 0; e < dataset.train[s].events.size(); ++e)
      all.push_back({static_cast<int>(s), static_cast<int>(e)});
  Rng rng = make_rng(derive_seed(seed, 0x9f0be));
  std::vector<Tensor> terms = batch_loss_terms(model, dataset.train, all, rng);
  backward(mean_of(terms));
  for (std::size_t i = 0; i < params.size(); ++i) {
    bool any = false;
    for (double g : params[i].grad())
      if (g != 0.0) {
        any = true;
        break;
      }
    if (!any)
      throw std::runtime_error("verify_grad_flow: parameter tensor " + std::to_string(i) +
                               " received no gradient over a full pass");
  }
  for (Tensor& p : params) p.zero_grad();
}

ModelCheckpoint train(const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  if (dataset.train.empty()) throw std::invalid_argument("train: empty training split");
  if (dataset.val.empty()) throw std::invalid_argument("train: empty validation split");

  Model model = init_model(dataset.space, config.model_config(), dataset.stats, config.seed);
  std::vector<Tensor> params = model.parameters();
  AdamOptimizer opt(params, config.learning_rate);

  std::vector<Instance> instances;
  for (std::size_t s = 0; s < dataset.train.size(); ++s)
    for (std::size_t e = 0; e < dataset.train[s].events.size(); ++e)
      instances.push_back({static_cast<int>(s), static_cast<int>(e)});

  Rng shuffle_rng = make_rng(derive_seed(config.seed, 0x5bf));
  Rng noise_rng = make_rng(derive_seed(config.seed, 0x4015e));

  ModelCheckpoint ckpt;
  ckpt.config = config;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_snap = snapshot_params(params);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(instances.begin(), instances.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t off = 0; off < instances.size(); off += config.batch_size) {
      const std::size_t end = std::min(off + config.batch_size, instances.size());
      std::vector<Instance> batch(instances.begin() + off, instances.begin() + end);
      opt.zero_grad();
      double loss_value = 0.0;
      try {
        std::vector<Tensor> terms = batch_loss_terms(model, dataset.train, batch, noise_rng);
        Tensor loss = mean_of(terms);
        loss_value = loss.value();
        if (!std::isfinite(loss_value)) throw std::runtime_error("loss is non-finite");
        backward(loss);
      } catch (const std::exception& ex) {
        std::ostringstream msg;
        msg << "training diverged at epoch " << epoch << ", batch " << n_batches
            << " (param norm " << param_norm(params) << "): " << ex.what();
        throw TrainDivergence(msg.str());
      }
      clip_gradients(params, config.grad_clip_norm);
      if (config.learning_rate > 0.0) opt.step();
      renormalize_location_embeddings(model);
      loss_sum += loss_value;
      ++n_batches;
    }

    if (epoch % config.validation_every == 0 || epoch == config.epochs) {
      const EventNll val = mean_vlb(model, dataset.val, derive_seed(config.seed, 0xa11d));
      ckpt.log.push_back({epoch, loss_sum / static_cast<double>(n_batches), val.temporal,
                          val.spatial});
      const double score = val.temporal + val.spatial;
      if (score < best) {
        best = score;
        best_snap = snapshot_params(params);
        ckpt.val_nll_temporal = val.temporal;
        ckpt.val_nll_spatial = val.spatial;
        ckpt.best_epoch = epoch;
      }
    }
  }

  restore_params(params, best_snap);
  ckpt.model = std::move(model);
  return ckpt;
}

// --- checkpoint serialization ------------------------------------------------

namespace {

json tensor_to_json(const Tensor& t) {
  return {{"shape", t.shape()}, {"data", t.data()}};
}

Tensor tensor_from_json(const json& j, bool requires_grad = true) {
  return Tensor::from(j.at("shape").get<std::vector<int>>(),
                      j.at("data").get<std::vector<double>>(), requires_grad);
}

json stream_to_json(const AttentionStream& s) {
  return {{"wq", tensor_to_json(s.wq)},       {"wk", tensor_to_json(s.wk)},
          {"wv", tensor_to_json(s.wv)},       {"ff_w1", tensor_to_json(s.ff_w1)},
          {"ff_b1", tensor_to_json(s.ff_b1)}, {"ff_w2", tensor_to_json(s.ff_w2)},
          {"ff_b2", tensor_to_json(s.ff_b2)}};
}

AttentionStream stream_from_json(const json& j) {
  AttentionStream s;
  s.wq = tensor_from_json(j.at("wq"));
  s.wk = tensor_from_json(j.at("wk"));
  s.wv = tensor_from_json(j.at("wv"));
  s.ff_w1 = tensor_from_json(j.at("ff_w1"));
  s.ff_b1 = tensor_from_json(j.at("ff_b1"));
  s.ff_w2 = tensor_from_json(j.at("ff_w2"));
  s.ff_b2 = tensor_from_json(j.at("ff_b2"));
  return s;
}

json branch_to_json(const DenoiserBranch& b) {
  return {{"w_value", tensor_to_json(b.w_value)}, {"b_value", tensor_to_json(b.b_value)},
          {"w_hist", tensor_to_json(b.w_hist)},   {"b_hist", tensor_to_json(b.b_hist)},
          {"w2", tensor_to_json(b.w2)},           {"b2", tensor_to_json(b.b2)},
          {"w3", tensor_to_json(b.w3)},           {"b3", tensor_to_json(b.b3)}};
}

DenoiserBranch branch_from_json(const json& j) {
  DenoiserBranch b;
  b.w_value = tensor_from_json(j.at("w_value"));
  b.b_value = tensor_from_json(j.at("b_value"));
  b.w_hist = tensor_from_json(j.at("w_hist"));
  b.b_hist = tensor_from_json(j.at("b_hist"));
  b.w2 = tensor_from_json(j.at("w2"));
  b.b2 = tensor_from_json(j.at("b2"));
  b.w3 = tensor_from_json(j.at("w3"));
  b.b3 = tensor_from_json(j.at("b3"));
  return b;
}

json space_spec_to_json(const SpaceSpec& s) {
  if (s.is_discrete()) return {{"kind", "discrete"}, {"num_locations", s.num_locations}};
  return {{"kind", "continuous"}, {"dim", s.dim}};
}

SpaceSpec space_spec_from_json(const json& j) {
  if (j.at("kind") == "discrete") return SpaceSpec::discrete(j.at("num_locations"));
  return SpaceSpec::continuous(j.at("dim"));
}

}  // namespace

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& file) {
  const Model& m = ckpt.model;
  json enc{{"space_embed", tensor_to_json(m.encoder.space_embed)},
           {"start_space", tensor_to_json(m.encoder.start_space)},
           {"start_time", tensor_to_json(m.encoder.start_time)},
           {"streams", json::array()}};
  for (const auto& s : m.encoder.streams) enc["streams"].push_back(stream_to_json(s));

  json den{{"ca_space_w", tensor_to_json(m.denoiser.ca_space_w)},
           {"ca_space_b", tensor_to_json(m.denoiser.ca_space_b)},
           {"ca_time_w", tensor_to_json(m.denoiser.ca_time_w)},
           {"ca_time_b", tensor_to_json(m.denoiser.ca_time_b)},
           {"space_branch", branch_to_json(m.denoiser.space_branch)},
           {"time_branch", branch_to_json(m.denoiser.time_branch)},
           {"head_space_w", tensor_to_json(m.denoiser.head_space_w)},
           {"head_space_b", tensor_to_json(m.denoiser.head_space_b)},
           {"head_time_w", tensor_to_json(m.denoiser.head_time_w)},
           {"head_time_b", tensor_to_json(m.denoiser.head_time_b)}};

  json j{{"version", 1},
         {"space", space_spec_to_json(m.space)},
         {"model_config",
          {{"embed_dim", m.config.embed_dim},
           {"diffusion_steps", m.config.diffusion_steps},
           {"beta_start", m.config.beta_start},
           {"beta_end", m.config.beta_end},
           {"vlb_draws", m.config.vlb_draws}}},
         {"stats",
          {{"time_interval_mean", m.stats.time_interval_mean},
           {"time_interval_std", m.stats.time_interval_std},
           {"space_mean", m.stats.space_mean},
           {"space_std", m.stats.space_std}}},
         {"train_config",
          {{"learning_rate", ckpt.config.learning_rate},
           {"batch_size", ckpt.config.batch_size},
           {"epochs", ckpt.config.epochs},
           {"diffusion_steps", ckpt.config.diffusion_steps},
           {"seed", ckpt.config.seed},
           {"validation_every", ckpt.config.validation_every},
           {"embed_dim", ckpt.config.embed_dim},
           {"grad_clip_norm", ckpt.config.grad_clip_norm},
           {"beta_start", ckpt.config.beta_start},
           {"beta_end", ckpt.config.beta_end},
           {"vlb_draws", ckpt.config.vlb_draws}}},
         {"validation",
          {{"nll_temporal", ckpt.val_nll_temporal},
           {"nll_spatial", ckpt.val_nll_spatial},
           {"best_epoch", ckpt.best_epoch}}},
         {"encoder", std::move(enc)},
         {"denoiser", std::move(den)}};

  std::ofstream f(file, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write checkpoint: " + file);
  f << j.dump(1) << "\n";
}

ModelCheckpoint load_checkpoint(const std::string& file) {
  std::ifstream f(file);
  if (!f) throw std::runtime_error("cannot open checkpoint: " + file);
  json j;
  f >> j;
  if (!j.contains("version") || j.at("version").get<int>() != 1)
    throw std::runtime_error("checkpoint version mismatch: expected 1");

  ModelCheckpoint ckpt;
  Model& m = ckpt.model;
  m.space = space_spec_from_json(j.at("space"));
  const json& mc = j.at("model_config");
  m.config.embed_dim = mc.at("embed_dim");
  m.config.diffusion_steps = mc.at("diffusion_steps");
  m.config.beta_start = mc.at("beta_start");
  m.config.beta_end = mc.at("beta_end");
  m.config.vlb_draws = mc.at("vlb_draws");
  m.schedule = make_schedule(m.config.diffusion_steps, m.config.resolved_beta_start(),
                             m.config.resolved_beta_end());
  const json& st = j.at("stats");
  m.stats.time_interval_mean = st.at("time_interval_mean");
  m.stats.time_interval_std = st.at("time_interval_std");
  m.stats.space_mean = st.at("space_mean").get<std::vector<double>>();
  m.stats.space_std = st.at("space_std").get<std::vector<double>>();

  const json& enc = j.at("encoder");
  m.encoder.embed_dim = m.config.embed_dim;
  m.encoder.space_embed = tensor_from_json(enc.at("space_embed"));
  m.encoder.start_space = tensor_from_json(enc.at("start_space"));
  m.encoder.start_time = tensor_from_json(enc.at("start_time"));
  for (int i = 0; i < 3; ++i) m.encoder.streams[i] = stream_from_json(enc.at("streams")[i]);

  const json& den = j.at("denoiser");
  m.denoiser.embed_dim = m.config.embed_dim;
  m.denoiser.ca_space_w = tensor_from_json(den.at("ca_space_w"));
  m.denoiser.ca_space_b = tensor_from_json(den.at("ca_space_b"));
  m.denoiser.ca_time_w = tensor_from_json(den.at("ca_time_w"));
  m.denoiser.ca_time_b = tensor_from_json(den.at("ca_time_b"));
  m.denoiser.space_branch = branch_from_json(den.at("space_branch"));
  m.denoiser.time_branch = branch_from_json(den.at("time_branch"));
  m.denoiser.head_space_w = tensor_from_json(den.at("head_space_w"));
  m.denoiser.head_space_b = tensor_from_json(den.at("head_space_b"));
  m.denoiser.head_time_w = tensor_from_json(den.at("head_time_w"));
  m.denoiser.head_time_b = tensor_from_json(den.at("head_time_b"));

  const json& tc = j.at("train_config");
  ckpt.config.learning_rate = tc.at("learning_rate");
  ckpt.config.batch_size = tc.at("batch_size");
  ckpt.config.epochs = tc.at("epochs");
  ckpt.config.diffusion_steps = tc.at("diffusion_steps");
  ckpt.config.seed = tc.at("seed");
  ckpt.config.validation_every = tc.at("validation_every");
  ckpt.config.embed_dim = tc.at("embed_dim");
  ckpt.config.grad_clip_norm = tc.at("grad_clip_norm");
  ckpt.config.beta_start = tc.at("beta_start");
  ckpt.config.beta_end = tc.at("beta_end");
  ckpt.config.vlb_draws = tc.at("vlb_draws");

  const json& val = j.at("validation");
  ckpt.val_nll_temporal = val.at("nll_temporal");
  ckpt.val_nll_spatial = val.at("nll_spatial");
  ckpt.best_epoch = val.at("best_epoch");
  return ckpt;
}

void save_train_log(const std::vector<TrainLogRow>& log, const std::string& file) {
  std::ofstream f(file, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write train log: " + file);
  f << "epoch,train_loss,val_nll_t,val_nll_s\n";
  for (const TrainLogRow& r : log)
    f << r.epoch << "," << format_double(r.train_loss) << "," << format_double(r.val_nll_t)
      << "," << format_double(r.val_nll_s) << "\n";
}

}  // namespace stpp

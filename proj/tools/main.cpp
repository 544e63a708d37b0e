#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "stpp/analysis.hpp"
#include "stpp/eval.hpp"
#include "stpp/events.hpp"
#include "stpp/simulate.hpp"
#include "stpp/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace stpp;

namespace {

// --out is resolved against STPP_OUTPUT_ROOT when relative.
fs::path resolve_out(const std::string& out) {
  fs::path p(out);
  if (p.is_relative()) {
    if (const char* root = std::getenv("STPP_OUTPUT_ROOT")) p = fs::path(root) / p;
  }
  fs::create_directories(p);
  return p;
}

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  json j;
  f >> j;
  return j;
}

// Config-file value wins over the default but loses to an explicit flag.
template <typename T>
void overlay(const json& cfg, const CLI::App& app, const std::string& flag,
             const std::string& key, T& value) {
  if (!cfg.contains(key)) return;
  const CLI::Option* opt = app.get_option(flag);
  if (opt != nullptr && opt->count() > 0) return;
  value = cfg.at(key).get<T>();
}

void echo_config(const fs::path& out, const json& resolved) {
  std::ofstream f(out / "config.json", std::ios::binary);
  f << resolved.dump(1) << "\n";
}

HawkesParams parse_kernels(const std::string& text, double mu, double horizon) {
  HawkesParams p;
  p.mu = mu;
  p.horizon = horizon;
  std::string cur;
  auto flush = [&]() {
    if (cur.empty()) return;
    const auto colon = cur.find(':');
    if (colon == std::string::npos)
      throw std::runtime_error("kernel term must be weight:decay, got '" + cur + "'");
    p.kernels.push_back({std::stod(cur.substr(0, colon)), std::stod(cur.substr(colon + 1))});
    cur.clear();
  };
  for (char ch : text) {
    if (ch == ',')
      flush();
    else
      cur.push_back(ch);
  }
  flush();
  return p;
}

GmmSpatialParams default_gmm3() {
  // three well-separated components
  GmmSpatialParams g;
  g.components = {
      {0.4, {0.0, 0.0}, {{0.5, 0.0}, {0.0, 0.5}}},
      {0.35, {6.0, 0.0}, {{0.5, 0.0}, {0.0, 0.5}}},
      {0.25, {0.0, 6.0}, {{0.5, 0.0}, {0.0, 0.5}}},
  };
  return g;
}

GmmSpatialParams gmm_from_json(const json& arr) {
  GmmSpatialParams g;
  for (const json& jc : arr) {
    GmmComponent c;
    c.weight = jc.at("weight");
    c.mean = jc.at("mean").get<std::vector<double>>();
    c.cov = jc.at("cov").get<std::vector<std::vector<double>>>();
    g.components.push_back(std::move(c));
  }
  return g;
}

void patch_manifest(const fs::path& dir, const json& generator) {
  const fs::path mf = dir / "manifest.json";
  json j;
  {
    std::ifstream f(mf);
    f >> j;
  }
  j["generator"] = generator;
  std::ofstream f(mf, std::ios::binary);
  f << j.dump(1) << "\n";
}

struct SplitCounts {
  int train = 1000, val = 100, test = 100;
};

std::vector<EventSequence> renumber(std::vector<EventSequence> seqs) {
  for (std::size_t i = 0; i < seqs.size(); ++i) seqs[i].id = static_cast<std::int64_t>(i);
  return seqs;
}

int cmd_simulate(const std::string& gen, const json& cfg_extra, std::uint64_t seed,
                 const fs::path& out, double rate, double mu, double alpha, double horizon,
                 const std::string& kernels, double affinity, const SplitCounts& counts) {
  Dataset ds;
  json gen_info{{"name", gen}, {"seed", seed}};

  auto gen_temporal_split = [&](auto&& one, int n, std::uint64_t tag) {
    std::vector<EventSequence> seqs;
    for (int i = 0; i < n; ++i) {
      EventSequence s = one(derive_seed(seed, tag, i));
      if (!s.events.empty()) seqs.push_back(std::move(s));
    }
    return renumber(std::move(seqs));
  };

  if (gen == "poisson") {
    ds.space = SpaceSpec::temporal();
    auto one = [&](std::uint64_t s) { return simulate_poisson(rate, horizon, s); };
    ds.train = gen_temporal_split(one, counts.train, 1);
    ds.val = gen_temporal_split(one, counts.val, 2);
    ds.test = gen_temporal_split(one, counts.test, 3);
    gen_info["rate"] = rate;
    gen_info["horizon"] = horizon;
  } else if (gen == "hawkes") {
    HawkesParams p =
        kernels.empty() ? reference_hawkes_params(horizon) : parse_kernels(kernels, mu, horizon);
    p.mu = mu;
    p.horizon = horizon;
    ds.space = SpaceSpec::temporal();
    auto one = [&](std::uint64_t s) { return simulate_hawkes(p, s); };
    ds.train = gen_temporal_split(one, counts.train, 1);
    ds.val = gen_temporal_split(one, counts.val, 2);
    ds.test = gen_temporal_split(one, counts.test, 3);
    gen_info["mu"] = p.mu;
    gen_info["horizon"] = p.horizon;
    json ks = json::array();
    for (const auto& k : p.kernels) ks.push_back({{"weight", k.weight}, {"decay", k.decay}});
    gen_info["kernels"] = std::move(ks);
  } else if (gen == "self_correcting") {
    ds.space = SpaceSpec::temporal();
    auto one = [&](std::uint64_t s) { return simulate_self_correcting(mu, alpha, horizon, s); };
    ds.train = gen_temporal_split(one, counts.train, 1);
    ds.val = gen_temporal_split(one, counts.val, 2);
    ds.test = gen_temporal_split(one, counts.test, 3);
    gen_info["mu"] = mu;
    gen_info["alpha"] = alpha;
    gen_info["horizon"] = horizon;
  } else if (gen == "hawkes_gmm") {
    HawkesGmmParams p;
    p.temporal = kernels.empty() ? HawkesParams{0.5, {{0.8, 1.6}}, horizon}
                                 : parse_kernels(kernels, mu, horizon);
    p.temporal.mu = mu;
    p.temporal.horizon = horizon;
    p.spatial = cfg_extra.contains("gmm") ? gmm_from_json(cfg_extra.at("gmm")) : default_gmm3();
    p.affinity = affinity;
    ds.space = SpaceSpec::continuous(p.spatial.dim());
    auto one = [&](std::uint64_t s) { return simulate_hawkes_gmm(p, s); };
    ds.train = gen_temporal_split(one, counts.train, 1);
    ds.val = gen_temporal_split(one, counts.val, 2);
    ds.test = gen_temporal_split(one, counts.test, 3);
    gen_info["mu"] = p.temporal.mu;
    gen_info["horizon"] = p.temporal.horizon;
    gen_info["affinity"] = p.affinity;
  } else if (gen == "independent") {
    IndependentConfig c = IndependentConfig::defaults();
    c.temporal.horizon = horizon;
    c.n_train = counts.train;
    c.n_val = counts.val;
    c.n_test = counts.test;
    ds = simulate_independent(c, seed);
    gen_info["horizon"] = horizon;
  } else {
    std::cerr << "unknown generator: " << gen << "\n";
    return 2;
  }

  if (!ds.space.is_temporal() && !ds.train.empty())
    ds.stats = compute_stats(ds.train, ds.space);
  save_dataset(ds, out.string());
  patch_manifest(out, gen_info);
  std::cout << "wrote dataset to " << out.string() << " (train " << ds.train.size() << ", val "
            << ds.val.size() << ", test " << ds.test.size() << " sequences)\n";
  return 0;
}

int cmd_train(const std::string& data, const TrainConfig& tc, const fs::path& out) {
  Dataset ds = load_dataset(data);
  ModelCheckpoint ckpt = train(ds, tc);
  save_checkpoint(ckpt, (out / "checkpoint.json").string());
  save_train_log(ckpt.log, (out / "train_log.csv").string());
  std::cout << "best epoch " << ckpt.best_epoch << ": val nll_t "
            << format_double(ckpt.val_nll_temporal) << ", val nll_s "
            << format_double(ckpt.val_nll_spatial) << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data,
                 const std::string& split, int samples, std::uint64_t seed,
                 const std::string& dataset_name, const fs::path& out) {
  ModelCheckpoint ckpt = load_checkpoint(ckpt_path);
  Dataset ds = load_dataset(data);
  EvalOptions opt;
  opt.n_samples = samples;
  opt.seed = seed;
  MetricsReport r = evaluate(ckpt.model, ds.split(split), opt);
  save_metrics_json(r, (out / "metrics.json").string());
  const std::string name = dataset_name.empty() ? fs::path(data).filename().string() : dataset_name;
  append_results_row(r, name, split, ckpt.model.config.diffusion_steps, seed,
                     (out / "results.csv").string());
  std::cout << "nll_t " << format_double(r.nll_temporal) << ", nll_s "
            << format_double(r.nll_spatial) << ", rmse " << format_double(r.rmse_time);
  if (r.euclid_space) std::cout << ", euclid " << format_double(*r.euclid_space);
  if (r.accuracy) std::cout << ", accuracy " << format_double(*r.accuracy);
  std::cout << ", n_events " << r.n_events << "\n";
  return 0;
}

int cmd_sample(const std::string& ckpt_path, const std::string& data, const std::string& split,
               int n, std::uint64_t seed, const fs::path& out) {
  ModelCheckpoint ckpt = load_checkpoint(ckpt_path);
  const Model& model = ckpt.model;
  Dataset ds = load_dataset(data);
  NoGradScope ng;
  std::ofstream f(out / "samples.csv", std::ios::binary);
  f << "seq_id,draw_id,tau";
  if (model.space.is_discrete())
    f << ",loc_id";
  else
    for (int j = 1; j <= model.space.dim; ++j) f << ",s" << j;
  f << "\n";
  for (const EventSequence& seq : ds.split(split)) {
    const EncoderInput input = make_encoder_input(seq, model.space, model.stats);
    const EncoderOutput enc = encode(model.encoder, model.space, input);
    const HiddenRep h = history_rep(enc, static_cast<int>(seq.events.size()));
    Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(seq.id)));
    const auto draws = sample_event(model, h, n, rng);
    for (int i = 0; i < n; ++i) {
      f << seq.id << "," << i << "," << format_double(draws[i].tau);
      if (model.space.is_discrete())
        f << "," << draws[i].location_id;
      else
        for (double c : draws[i].coords) f << "," << format_double(c);
      f << "\n";
    }
  }
  std::cout << "wrote " << (out / "samples.csv").string() << "\n";
  return 0;
}

int cmd_trace(const std::string& ckpt_path, const std::string& data, const std::string& split,
              int snapshot_samples, std::uint64_t seed, const fs::path& out) {
  ModelCheckpoint ckpt = load_checkpoint(ckpt_path);
  const Model& model = ckpt.model;
  Dataset ds = load_dataset(data);
  const auto& seqs = ds.split(split);

  std::vector<int> all_steps(model.schedule.steps);
  for (int k = 1; k <= model.schedule.steps; ++k) all_steps[k - 1] = k;
  const auto rows = attention_trace(model, seqs, all_steps, derive_seed(seed, 0x77));
  save_attention_trace(rows, (out / "attention_trace.csv").string());

  const auto snap_steps = default_snapshot_steps(model.schedule.steps);
  const auto snaps =
      denoising_snapshots(model, seqs, snap_steps, snapshot_samples, derive_seed(seed, 0x78));
  save_snapshots(snaps, model.space_value_dim(), (out / "denoise_snapshots.csv").string());
  std::cout << "wrote " << (out / "attention_trace.csv").string() << " and "
            << (out / "denoise_snapshots.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatio-temporal diffusion point processes"};
  app.require_subcommand(1);

  std::string config_path, out = "out";
  std::uint64_t seed = 1;
  app.add_option("--config", config_path, "JSON config file; flags override its values");

  // simulate
  auto* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  std::string gen = "independent", kernels;
  double rate = 1.0, mu = 0.2, alpha = 0.5, horizon = 10.0, affinity = 0.85;
  SplitCounts counts;
  sim->add_option("--gen", gen, "poisson|hawkes|self_correcting|hawkes_gmm|independent");
  sim->add_option("--seed", seed);
  sim->add_option("--out", out);
  sim->add_option("--rate", rate, "poisson rate");
  sim->add_option("--mu", mu, "base rate");
  sim->add_option("--alpha", alpha, "self-correcting inhibition");
  sim->add_option("--horizon", horizon, "window length");
  sim->add_option("--kernels", kernels, "hawkes terms weight:decay[,weight:decay...]");
  sim->add_option("--affinity", affinity, "hawkes_gmm component self-excitation share");
  sim->add_option("--n-train", counts.train);
  sim->add_option("--n-val", counts.val);
  sim->add_option("--n-test", counts.test);

  // train
  auto* tr = app.add_subcommand("train", "fit a model");
  std::string data;
  TrainConfig tc;
  bool no_clip = false;
  tr->add_option("--data", data)->required();
  tr->add_option("--out", out);
  tr->add_option("--seed", tc.seed);
  tr->add_option("--lr", tc.learning_rate);
  tr->add_option("--batch", tc.batch_size);
  tr->add_option("--epochs", tc.epochs);
  tr->add_option("--K", tc.diffusion_steps);
  tr->add_option("--validate-every", tc.validation_every);
  tr->add_option("--embed-dim", tc.embed_dim);
  tr->add_option("--vlb-draws", tc.vlb_draws);
  tr->add_flag("--no-clip", no_clip, "disable gradient clipping");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "metrics on a split");
  std::string ckpt_path, split = "test", dataset_name;
  int samples = 30;
  ev->add_option("--ckpt", ckpt_path)->required();
  ev->add_option("--data", data)->required();
  ev->add_option("--split", split);
  ev->add_option("--samples", samples);
  ev->add_option("--seed", seed);
  ev->add_option("--out", out);
  ev->add_option("--dataset-name", dataset_name);

  // sample
  auto* sa = app.add_subcommand("sample", "draw next events after each sequence");
  int n_draws = 10;
  sa->add_option("--ckpt", ckpt_path)->required();
  sa->add_option("--data", data)->required();
  sa->add_option("--split", split);
  sa->add_option("--n", n_draws);
  sa->add_option("--seed", seed);
  sa->add_option("--out", out);

  // trace
  auto* tc_cmd = app.add_subcommand("trace", "attention weights and denoising snapshots");
  int snapshot_samples = 1;
  tc_cmd->add_option("--ckpt", ckpt_path)->required();
  tc_cmd->add_option("--data", data)->required();
  tc_cmd->add_option("--split", split);
  tc_cmd->add_option("--snapshot-samples", snapshot_samples);
  tc_cmd->add_option("--seed", seed);
  tc_cmd->add_option("--out", out);

  // reproduce-synthetic
  auto* rep = app.add_subcommand("reproduce-synthetic",
                                 "simulate independent data, train, evaluate, trace");
  rep->add_option("--out", out);
  rep->add_option("--seed", seed);
  rep->add_option("--horizon", horizon);
  rep->add_option("--n-train", counts.train);
  rep->add_option("--n-val", counts.val);
  rep->add_option("--n-test", counts.test);
  rep->add_option("--epochs", tc.epochs);
  rep->add_option("--K", tc.diffusion_steps);
  rep->add_option("--embed-dim", tc.embed_dim);
  rep->add_option("--batch", tc.batch_size);
  rep->add_option("--samples", samples);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    const json cfg = load_config_file(config_path);

    if (sim->parsed()) {
      overlay(cfg, *sim, "--gen", "gen", gen);
      overlay(cfg, *sim, "--seed", "seed", seed);
      overlay(cfg, *sim, "--out", "out", out);
      overlay(cfg, *sim, "--rate", "rate", rate);
      overlay(cfg, *sim, "--mu", "mu", mu);
      overlay(cfg, *sim, "--alpha", "alpha", alpha);
      overlay(cfg, *sim, "--horizon", "horizon", horizon);
      overlay(cfg, *sim, "--kernels", "kernels", kernels);
      overlay(cfg, *sim, "--affinity", "affinity", affinity);
      overlay(cfg, *sim, "--n-train", "n_train", counts.train);
      overlay(cfg, *sim, "--n-val", "n_val", counts.val);
      overlay(cfg, *sim, "--n-test", "n_test", counts.test);
      const fs::path o = resolve_out(out);
      echo_config(o, json{{"command", "simulate"},
                          {"gen", gen},
                          {"seed", seed},
                          {"rate", rate},
                          {"mu", mu},
                          {"alpha", alpha},
                          {"horizon", horizon},
                          {"kernels", kernels},
                          {"affinity", affinity},
                          {"n_train", counts.train},
                          {"n_val", counts.val},
                          {"n_test", counts.test}});
      return cmd_simulate(gen, cfg, seed, o, rate, mu, alpha, horizon, kernels, affinity,
                          counts);
    }

    if (tr->parsed()) {
      overlay(cfg, *tr, "--data", "data", data);
      overlay(cfg, *tr, "--out", "out", out);
      overlay(cfg, *tr, "--seed", "seed", tc.seed);
      overlay(cfg, *tr, "--lr", "learning_rate", tc.learning_rate);
      overlay(cfg, *tr, "--batch", "batch_size", tc.batch_size);
      overlay(cfg, *tr, "--epochs", "epochs", tc.epochs);
      overlay(cfg, *tr, "--K", "diffusion_steps", tc.diffusion_steps);
      overlay(cfg, *tr, "--validate-every", "validation_every", tc.validation_every);
      overlay(cfg, *tr, "--embed-dim", "embed_dim", tc.embed_dim);
      overlay(cfg, *tr, "--vlb-draws", "vlb_draws", tc.vlb_draws);
      if (no_clip) tc.grad_clip_norm = 0.0;
      const fs::path o = resolve_out(out);
      echo_config(o, json{{"command", "train"},
                          {"data", data},
                          {"seed", tc.seed},
                          {"learning_rate", tc.learning_rate},
                          {"batch_size", tc.batch_size},
                          {"epochs", tc.epochs},
                          {"diffusion_steps", tc.diffusion_steps},
                          {"validation_every", tc.validation_every},
                          {"embed_dim", tc.embed_dim},
                          {"vlb_draws", tc.vlb_draws},
                          {"grad_clip_norm", tc.grad_clip_norm}});
      return cmd_train(data, tc, o);
    }

    if (ev->parsed()) {
      overlay(cfg, *ev, "--split", "split", split);
      overlay(cfg, *ev, "--samples", "samples", samples);
      overlay(cfg, *ev, "--seed", "seed", seed);
      const fs::path o = resolve_out(out);
      echo_config(o, json{{"command", "evaluate"},
                          {"ckpt", ckpt_path},
                          {"data", data},
                          {"split", split},
                          {"samples", samples},
                          {"seed", seed}});
      return cmd_evaluate(ckpt_path, data, split, samples, seed, dataset_name, o);
    }

    if (sa->parsed()) {
      const fs::path o = resolve_out(out);
      echo_config(o, json{{"command", "sample"},
                          {"ckpt", ckpt_path},
                          {"data", data},
                          {"split", split},
                          {"n", n_draws},
                          {"seed", seed}});
      return cmd_sample(ckpt_path, data, split, n_draws, seed, o);
    }

    if (tc_cmd->parsed()) {
      const fs::path o = resolve_out(out);
      echo_config(o, json{{"command", "trace"},
                          {"ckpt", ckpt_path},
                          {"data", data},
                          {"split", split},
                          {"snapshot_samples", snapshot_samples},
                          {"seed", seed}});
      return cmd_trace(ckpt_path, data, split, snapshot_samples, seed, o);
    }

    if (rep->parsed()) {
      const fs::path o = resolve_out(out);
      echo_config(o, json{{"command", "reproduce-synthetic"},
                          {"seed", seed},
                          {"horizon", horizon},
                          {"n_train", counts.train},
                          {"n_val", counts.val},
                          {"n_test", counts.test},
                          {"epochs", tc.epochs},
                          {"diffusion_steps", tc.diffusion_steps},
                          {"embed_dim", tc.embed_dim},
                          {"batch_size", tc.batch_size},
                          {"samples", samples}});
      const fs::path data_dir = o / "data";
      fs::create_directories(data_dir);
      int rc = cmd_simulate("independent", cfg, seed, data_dir, rate, mu, alpha, horizon, "",
                            affinity, counts);
      if (rc != 0) return rc;
      tc.seed = seed;
      rc = cmd_train(data_dir.string(), tc, o);
      if (rc != 0) return rc;
      rc = cmd_evaluate((o / "checkpoint.json").string(), data_dir.string(), "test", samples,
                        seed, "synthetic-independent", o);
      if (rc != 0) return rc;
      return cmd_trace((o / "checkpoint.json").string(), data_dir.string(), "test", 1, seed, o);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

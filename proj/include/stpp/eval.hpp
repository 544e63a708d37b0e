#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stpp/diffusion.hpp"
#include "stpp/model.hpp"

namespace stpp {

struct MetricsReport {
  double nll_temporal = 0.0;  // nats/event
  double nll_spatial = 0.0;
  double rmse_time = 0.0;            // dataset time units
  std::optional<double> euclid_space;  // continuous only
  std::optional<double> accuracy;      // discrete only
  std::size_t n_events = 0;
};

double rmse(const std::vector<double>& truth, const std::vector<double>& pred);
double euclid(const std::vector<std::vector<double>>& truth,
              const std::vector<std::vector<double>>& pred);
double accuracy(const std::vector<int>& truth, const std::vector<int>& pred);

struct Prediction {
  double t = 0.0;              // absolute time of the predicted next event
  double tau = 0.0;            // predicted interval
  std::vector<double> coords;  // continuous
  int location_id = -1;        // discrete (majority vote, ties -> smallest id)
};

// Point prediction of the next event after `history_len` events of `seq`
// (0 = cold start). Sample mean over n_samples draws.
Prediction predict_next(const Model& model, const EventSequence& seq, int history_len,
                        int n_samples, std::uint64_t seed);

struct EvalOptions {
  int n_samples = 30;
  std::uint64_t seed = 7;
};

// Teacher-forced next-event evaluation plus mean per-event VLB over a split.
MetricsReport evaluate(const Model& model, const std::vector<EventSequence>& split,
                       const EvalOptions& options);

void save_metrics_json(const MetricsReport& r, const std::string& file);
// dataset,split,K,nll_t,nll_s,rmse,euclid,accuracy,seed
void append_results_row(const MetricsReport& r, const std::string& dataset,
                        const std::string& split, int diffusion_steps, std::uint64_t seed,
                        const std::string& file);

}  // namespace stpp

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stpp/diffusion.hpp"
#include "stpp/model.hpp"

namespace stpp {

struct TrainConfig {
  double learning_rate = 3e-4;
  int batch_size = 64;        // events per optimizer step
  int epochs = 100;
  int diffusion_steps = 200;  // K
  std::uint64_t seed = 1;
  int validation_every = 10;  // epochs between validation passes
  int embed_dim = 64;
  double grad_clip_norm = 10.0;  // <= 0 disables clipping
  double beta_start = 0.0;       // 0 = default scaled endpoints
  double beta_end = 0.0;
  int vlb_draws = 1;

  void validate() const;
  ModelConfig model_config() const;
};

struct TrainLogRow {
  int epoch = 0;
  double train_loss = 0.0;
  double val_nll_t = 0.0;
  double val_nll_s = 0.0;
};

struct ModelCheckpoint {
  Model model;                   // best-validation parameters
  TrainConfig config;
  double val_nll_temporal = 0.0;
  double val_nll_spatial = 0.0;
  int best_epoch = 0;
  std::vector<TrainLogRow> log;
};

// Thrown when the loss goes non-finite; carries step diagnostics.
struct TrainDivergence : std::runtime_error {
  explicit TrainDivergence(const std::string& what) : std::runtime_error(what) {}
};

// Noise-prediction training over the train split with checkpoint selection by
// validation VLB. Only the train and val splits are ever read.
ModelCheckpoint train(const Dataset& dataset, const TrainConfig& config);

// Mean per-event VLB over a split.
EventNll mean_vlb(const Model& model, const std::vector<EventSequence>& split,
                  std::uint64_t seed);

// Asserts that one probe pass puts a nonzero gradient on every parameter.
void verify_grad_flow(Model& model, const Dataset& dataset, std::uint64_t seed);

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& file);
ModelCheckpoint load_checkpoint(const std::string& file);

void save_train_log(const std::vector<TrainLogRow>& log, const std::string& file);

// Adam with standard moment coefficients; updates leaf data in place.
class AdamOptimizer {
 public:
  AdamOptimizer(std::vector<Tensor> params, double lr);
  void step();
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_;
  long t_ = 0;
};

// Global-norm gradient clipping; returns the pre-clip norm.
double clip_gradients(const std::vector<Tensor>& params, double max_norm);

}  // namespace stpp

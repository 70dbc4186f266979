#pragma once

// Optimization loop: AdamW with decoupled weight decay, global-norm gradient
// clipping, CSV loss logging, and bit-exact resumability. All per-step
// randomness (batch sampling, dropout masks) is seeded from (run seed, step
// index), never from mutable generator state, so a run resumed from the
// checkpoint at step k replays steps k+1.. exactly as the uninterrupted run
// would have.

#include <cstdint>
#include <string>
#include <vector>

#include "hoidet/model.hpp"
#include "hoidet/scenegen.hpp"
#include "hoidet/uncertainty.hpp"
#include "json.hpp"

namespace hoidet::train {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int batch_size = 4;
  int steps = 1000;
  std::uint64_t seed = 0;
  double lambda_o = 1.0;        // Gaussian box term weight
  double lambda_a = 1.0;        // verb term weight
  double dropout_rate = 0.5;    // folded into the model config by callers
  double grad_clip_norm = 0.1;  // global L2 clip threshold; 0 disables
  bool box_uncertainty = true;    // train with the Gaussian box term
  bool inter_uncertainty = true;  // train with divergence-weighted verb loss
  int checkpoint_every = 0;       // extra checkpoint cadence; 0: first/last only

  // Enforced by fit(); train_step itself accepts degenerate settings such as
  // lr = 0 so optimizer behaviour can be probed in isolation.
  void validate() const;  // throws InvalidConfig
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::ordered_json& j);
  LossWeights loss_weights() const;
};

// First/second moment estimates parallel to model.params(), plus the count
// of completed optimizer steps (the bias-correction clock).
struct AdamWState {
  std::int64_t step = 0;
  std::vector<std::vector<double>> m, v;

  AdamWState() = default;
  explicit AdamWState(const model::HoiModel& model);
};

// Batch-mean loss components from one step, in plain numbers (the tape they
// were computed on is gone by the time the step returns). l_box and l_inter
// are unweighted; total carries the lambda weighting.
struct StepLosses {
  double l_loc_h = 0.0, l_loc_o = 0.0, l_box = 0.0, l_inter = 0.0, total = 0.0;
  double grad_norm = 0.0;  // pre-clip global L2 norm
};

// One decoupled-weight-decay Adam update from per-parameter gradients,
// clipped to cfg.grad_clip_norm by global L2 norm. Advances opt.step and
// returns the pre-clip norm. Exposed so the optimizer algebra (zero-gradient
// decay, lr = 0 identity) is testable without a forward pass.
double adamw_apply(model::HoiModel& model, AdamWState& opt,
                   const std::vector<std::vector<double>>& grads, const TrainConfig& cfg);

// One optimizer step over a batch of scenes: render, dual-pass forward
// (dropout-on and dropout-off verb passes), Hungarian matching and loss per
// scene, one backward over the batch mean, clipped AdamW update. Throws
// NonFiniteLoss naming the offending scene seed before any weight changes.
StepLosses train_step(model::HoiModel& model, AdamWState& opt,
                      const std::vector<const scenes::SceneRecord*>& batch,
                      const TrainConfig& cfg);

// Batch-mean loss over a scene list without touching the weights. Each scene
// gets a fixed tape seed derived from (cfg.seed, scene seed), so per-scene
// contributions do not depend on evaluation order.
StepLosses eval_loss(const model::HoiModel& model,
                     const std::vector<scenes::SceneRecord>& records, const TrainConfig& cfg);

// File name fit() gives the checkpoint written at a given step, so callers
// can locate artifacts of finished runs without rerunning them.
std::string checkpoint_name(std::int64_t step);

// Weights, optimizer moments ("opt.m.<param>" / "opt.v.<param>" entries) and
// the step counter in one checkpoint; HoiModel::from_checkpoint can read the
// weights back out of it directly.
void save_train_checkpoint(const std::string& path, const model::HoiModel& model,
                           const AdamWState& opt, const TrainConfig& cfg);

struct TrainState {
  model::HoiModel model;
  AdamWState opt;
  TrainConfig cfg;
};
TrainState load_train_checkpoint(const std::string& path);  // throws IoError

struct FitResult {
  std::vector<StepLosses> rows;  // one per optimizer step run by this call
  double val_initial = 0.0;      // batch-mean val total at entry/exit; 0 when
  double val_final = 0.0;        // no validation set was given
  std::string csv_path;
  std::string final_checkpoint;
};

// Run optimizer steps opt.step+1 .. cfg.steps, sampling each batch uniformly
// (with replacement) from the training set. Writes checkpoint_dir/ckpt-N.ckpt
// at step 0, every checkpoint_every steps, and at the final step, plus a
// train_log.csv with columns step,l_loc_h,l_loc_o,l_box,l_inter,total. With
// steps = 0 only the initial checkpoint is produced.
FitResult fit(model::HoiModel& model, const scenes::Dataset& train_set,
              const scenes::Dataset* val_set, AdamWState& opt, const TrainConfig& cfg,
              const std::string& checkpoint_dir);

}  // namespace hoidet::train

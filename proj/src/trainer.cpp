#include "hoidet/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hoidet/checkpoint.hpp"
#include "hoidet/errors.hpp"
#include "hoidet/rng.hpp"

namespace hoidet::train {

namespace {

// shortest decimal that round-trips a double, for the CSV log
std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string ckpt_path(const std::string& dir, std::int64_t step) {
  return dir + "/" + checkpoint_name(step);
}

bool all_finite(const Tensor& t) {
  for (double v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

// Matching rejects non-finite cost matrices, so a diverged forward has to be
// caught before loss assembly to surface as NonFiniteLoss with its scene.
void require_finite_forward(const model::ForwardResult& fwd, const std::string& where,
                            std::uint64_t scene_seed) {
  const bool ok = all_finite(fwd.human_logits) && all_finite(fwd.object_logits) &&
                  all_finite(fwd.verb_logits) && all_finite(fwd.verb_logits_sto) &&
                  all_finite(fwd.ref_h) && all_finite(fwd.off_h) && all_finite(fwd.var_h) &&
                  all_finite(fwd.ref_o) && all_finite(fwd.off_o) && all_finite(fwd.var_o);
  if (!ok)
    throw NonFiniteLoss(where + ", scene seed " + std::to_string(scene_seed) +
                        ": forward pass produced non-finite outputs");
}

}  // namespace

std::string checkpoint_name(std::int64_t step) {
  char name[40];
  std::snprintf(name, sizeof(name), "ckpt-%06lld.ckpt", static_cast<long long>(step));
  return name;
}

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw InvalidConfig("lr must be > 0");
  if (!(weight_decay >= 0.0)) throw InvalidConfig("weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw InvalidConfig("adam betas must lie in [0,1)");
  if (!(eps > 0.0)) throw InvalidConfig("adam eps must be > 0");
  if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
  if (steps < 0) throw InvalidConfig("steps must be >= 0");
  if (!(lambda_o >= 0.0 && lambda_a >= 0.0)) throw InvalidConfig("lambdas must be >= 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw InvalidConfig("dropout_rate must lie in [0,1)");
  if (!(grad_clip_norm >= 0.0)) throw InvalidConfig("grad_clip_norm must be >= 0");
  if (checkpoint_every < 0) throw InvalidConfig("checkpoint_every must be >= 0");
}

nlohmann::ordered_json TrainConfig::to_json() const {
  return nlohmann::ordered_json{{"lr", lr},
                                {"weight_decay", weight_decay},
                                {"beta1", beta1},
                                {"beta2", beta2},
                                {"eps", eps},
                                {"batch_size", batch_size},
                                {"steps", steps},
                                {"seed", seed},
                                {"lambda_o", lambda_o},
                                {"lambda_a", lambda_a},
                                {"dropout_rate", dropout_rate},
                                {"grad_clip_norm", grad_clip_norm},
                                {"box_uncertainty", box_uncertainty},
                                {"inter_uncertainty", inter_uncertainty},
                                {"checkpoint_every", checkpoint_every}};
}

TrainConfig TrainConfig::from_json(const nlohmann::ordered_json& j) {
  TrainConfig c;
  c.lr = j.at("lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.beta1 = j.at("beta1").get<double>();
  c.beta2 = j.at("beta2").get<double>();
  c.eps = j.at("eps").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.steps = j.at("steps").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.lambda_o = j.at("lambda_o").get<double>();
  c.lambda_a = j.at("lambda_a").get<double>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.grad_clip_norm = j.at("grad_clip_norm").get<double>();
  c.box_uncertainty = j.at("box_uncertainty").get<bool>();
  c.inter_uncertainty = j.at("inter_uncertainty").get<bool>();
  c.checkpoint_every = j.at("checkpoint_every").get<int>();
  c.validate();
  return c;
}

LossWeights TrainConfig::loss_weights() const {
  LossWeights w;
  w.lambda_o = lambda_o;
  w.lambda_a = lambda_a;
  w.box_uncertainty = box_uncertainty;
  w.inter_uncertainty = inter_uncertainty;
  return w;
}

// ------------------------------------------------------------- optimizer

AdamWState::AdamWState(const model::HoiModel& model) {
  m.reserve(model.params().size());
  v.reserve(model.params().size());
  for (const auto& p : model.params()) {
    m.emplace_back(p.values->size(), 0.0);
    v.emplace_back(p.values->size(), 0.0);
  }
}

double adamw_apply(model::HoiModel& model, AdamWState& opt,
                   const std::vector<std::vector<double>>& grads, const TrainConfig& cfg) {
  const auto& params = model.params();
  if (grads.size() != params.size() || opt.m.size() != params.size() ||
      opt.v.size() != params.size())
    throw ShapeMismatch("adamw_apply: gradient/state layout does not match the model");

  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm))
    throw NonFiniteLoss("gradient norm is not finite at step " + std::to_string(opt.step + 1));
  double clip = 1.0;
  if (cfg.grad_clip_norm > 0.0 && norm > cfg.grad_clip_norm) clip = cfg.grad_clip_norm / norm;

  opt.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(opt.step));
  for (size_t i = 0; i < params.size(); ++i) {
    std::vector<double>& w = *params[i].values;
    const std::vector<double>& g = grads[i];
    if (g.size() != w.size())
      throw ShapeMismatch("adamw_apply: gradient size for '" + params[i].name + "'");
    std::vector<double>& mi = opt.m[i];
    std::vector<double>& vi = opt.v[i];
    for (size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] * clip;
      mi[j] = cfg.beta1 * mi[j] + (1.0 - cfg.beta1) * gj;
      vi[j] = cfg.beta2 * vi[j] + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = mi[j] / bc1;
      const double vhat = vi[j] / bc2;
      // decay is decoupled: it scales the weight directly instead of being
      // folded into the gradient, so a zero-gradient step still shrinks w
      w[j] -= cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * w[j]);
    }
  }
  return norm;
}

// ------------------------------------------------------------- steps

StepLosses train_step(model::HoiModel& model, AdamWState& opt,
                      const std::vector<const scenes::SceneRecord*>& batch,
                      const TrainConfig& cfg) {
  if (batch.empty()) throw Error("train_step: empty batch");
  if (opt.m.size() != model.params().size())
    throw ShapeMismatch("train_step: optimizer state does not match the model");

  const std::int64_t step = opt.step + 1;
  GradTape tape(mix_seed(cfg.seed, static_cast<std::uint64_t>(step), hash_string("tape")));
  const std::vector<Tensor> bound = model.bind(tape);
  const int s = model.config().image_size;
  const LossWeights w = cfg.loss_weights();

  StepLosses out;
  std::vector<Tensor> totals;
  totals.reserve(batch.size());
  for (const scenes::SceneRecord* rec : batch) {
    Tensor image({3, s, s}, scenes::render_scene(*rec, s));
    const model::ForwardResult fwd = model.forward(tape, bound, image, /*stochastic=*/true);
    require_finite_forward(fwd, "step " + std::to_string(step), rec->seed);
    LossBreakdown b = total_loss(tape, fwd, scenes::gt_triplets(*rec), w);
    if (!std::isfinite(b.total.value()))
      throw NonFiniteLoss("step " + std::to_string(step) + ", scene seed " +
                          std::to_string(rec->seed) + ": total=" + std::to_string(b.total.value()) +
                          " (loc_h=" + std::to_string(b.l_loc_h.value()) +
                          " loc_o=" + std::to_string(b.l_loc_o.value()) +
                          " box=" + std::to_string(b.l_box.value()) +
                          " inter=" + std::to_string(b.l_inter.value()) + ")");
    out.l_loc_h += b.l_loc_h.value();
    out.l_loc_o += b.l_loc_o.value();
    out.l_box += b.l_box.value();
    out.l_inter += b.l_inter.value();
    totals.push_back(b.total);
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.l_loc_h *= inv;
  out.l_loc_o *= inv;
  out.l_box *= inv;
  out.l_inter *= inv;

  Tensor batch_total = totals[0];
  for (size_t i = 1; i < totals.size(); ++i) batch_total = tape.add(batch_total, totals[i]);
  if (totals.size() > 1) batch_total = tape.scale(batch_total, inv);
  out.total = batch_total.value();
  tape.backward(batch_total);

  std::vector<std::vector<double>> grads;
  grads.reserve(bound.size());
  for (const Tensor& b : bound) grads.push_back(tape.grad(b));
  out.grad_norm = adamw_apply(model, opt, grads, cfg);
  return out;
}

StepLosses eval_loss(const model::HoiModel& model,
                     const std::vector<scenes::SceneRecord>& records, const TrainConfig& cfg) {
  if (records.empty()) throw Error("eval_loss: empty scene list");
  const int s = model.config().image_size;
  const LossWeights w = cfg.loss_weights();

  StepLosses out;
  for (const scenes::SceneRecord& rec : records) {
    GradTape tape(mix_seed(cfg.seed, rec.seed, hash_string("val")));
    const std::vector<Tensor> bound = model.bind(tape);
    Tensor image({3, s, s}, scenes::render_scene(rec, s));
    const model::ForwardResult fwd = model.forward(tape, bound, image, /*stochastic=*/true);
    require_finite_forward(fwd, "validation", rec.seed);
    LossBreakdown b = total_loss(tape, fwd, scenes::gt_triplets(rec), w);
    out.l_loc_h += b.l_loc_h.value();
    out.l_loc_o += b.l_loc_o.value();
    out.l_box += b.l_box.value();
    out.l_inter += b.l_inter.value();
    out.total += b.total.value();
  }
  const double inv = 1.0 / static_cast<double>(records.size());
  out.l_loc_h *= inv;
  out.l_loc_o *= inv;
  out.l_box *= inv;
  out.l_inter *= inv;
  out.total *= inv;
  return out;
}

// ------------------------------------------------------------ checkpoints

void save_train_checkpoint(const std::string& path, const model::HoiModel& model,
                           const AdamWState& opt, const TrainConfig& cfg) {
  const auto& params = model.params();
  if (opt.m.size() != params.size() || opt.v.size() != params.size())
    throw ShapeMismatch("save_train_checkpoint: optimizer state does not match the model");

  std::vector<CheckpointEntry> entries = model.entries();
  entries.reserve(3 * params.size());
  for (size_t i = 0; i < params.size(); ++i)
    entries.push_back({"opt.m." + params[i].name, params[i].shape, opt.m[i]});
  for (size_t i = 0; i < params.size(); ++i)
    entries.push_back({"opt.v." + params[i].name, params[i].shape, opt.v[i]});

  nlohmann::ordered_json config{
      {"model", model.config().to_json()}, {"train", cfg.to_json()}, {"step", opt.step}};
  save_checkpoint(path, config, entries);
}

TrainState load_train_checkpoint(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  model::HoiModel m = model::HoiModel::from_checkpoint(ckpt);
  if (!ckpt.config.contains("train") || !ckpt.config.contains("step"))
    throw IoError("not a training checkpoint (no optimizer section): " + path);
  TrainConfig cfg;
  try {
    cfg = TrainConfig::from_json(ckpt.config.at("train"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("bad training config in checkpoint: " + std::string(e.what()));
  }
  AdamWState opt(m);
  opt.step = ckpt.config.at("step").get<std::int64_t>();
  for (size_t i = 0; i < m.params().size(); ++i) {
    const auto& p = m.params()[i];
    const CheckpointEntry& em = ckpt.at("opt.m." + p.name);
    const CheckpointEntry& ev = ckpt.at("opt.v." + p.name);
    if (em.shape != p.shape || ev.shape != p.shape)
      throw IoError("optimizer entries for '" + p.name + "' have the wrong shape");
    opt.m[i] = em.data;
    opt.v[i] = ev.data;
  }
  return {std::move(m), std::move(opt), std::move(cfg)};
}

// ------------------------------------------------------------------- fit

FitResult fit(model::HoiModel& model, const scenes::Dataset& train_set,
              const scenes::Dataset* val_set, AdamWState& opt, const TrainConfig& cfg,
              const std::string& checkpoint_dir) {
  cfg.validate();
  if (train_set.records.empty()) throw Error("fit: training set is empty");
  if (opt.step > cfg.steps)
    throw InvalidConfig("fit: checkpoint is at step " + std::to_string(opt.step) +
                        ", beyond the configured " + std::to_string(cfg.steps));

  std::error_code ec;
  std::filesystem::create_directories(checkpoint_dir, ec);
  if (ec) throw IoError("cannot create checkpoint dir '" + checkpoint_dir + "': " + ec.message());

  FitResult res;
  res.csv_path = checkpoint_dir + "/train_log.csv";
  const bool fresh = opt.step == 0;
  std::ofstream csv(res.csv_path, fresh ? std::ios::trunc : std::ios::app);
  if (!csv) throw IoError("cannot open for writing: " + res.csv_path);
  if (fresh) csv << "step,l_loc_h,l_loc_o,l_box,l_inter,total\n";

  std::int64_t last_saved = -1;
  if (fresh) {
    save_train_checkpoint(ckpt_path(checkpoint_dir, 0), model, opt, cfg);
    last_saved = 0;
  }
  if (val_set != nullptr && !val_set->records.empty())
    res.val_initial = eval_loss(model, val_set->records, cfg).total;

  const std::int64_t n = static_cast<std::int64_t>(train_set.records.size());
  while (opt.step < cfg.steps) {
    Rng batch_rng(
        mix_seed(cfg.seed, static_cast<std::uint64_t>(opt.step + 1), hash_string("batch")));
    std::vector<const scenes::SceneRecord*> batch;
    batch.reserve(static_cast<size_t>(cfg.batch_size));
    for (int b = 0; b < cfg.batch_size; ++b)
      batch.push_back(&train_set.records[static_cast<size_t>(batch_rng.uniform_int(0, n - 1))]);

    const StepLosses row = train_step(model, opt, batch, cfg);
    res.rows.push_back(row);
    csv << opt.step << ',' << g17(row.l_loc_h) << ',' << g17(row.l_loc_o) << ','
        << g17(row.l_box) << ',' << g17(row.l_inter) << ',' << g17(row.total) << '\n';

    if (cfg.checkpoint_every > 0 && opt.step % cfg.checkpoint_every == 0) {
      save_train_checkpoint(ckpt_path(checkpoint_dir, opt.step), model, opt, cfg);
      last_saved = opt.step;
    }
  }
  if (last_saved != opt.step)
    save_train_checkpoint(ckpt_path(checkpoint_dir, opt.step), model, opt, cfg);
  res.final_checkpoint = ckpt_path(checkpoint_dir, opt.step);

  if (val_set != nullptr && !val_set->records.empty())
    res.val_final = eval_loss(model, val_set->records, cfg).total;

  csv.flush();
  if (!csv) throw IoError("write failed: " + res.csv_path);
  return res;
}

}  // namespace hoidet::train

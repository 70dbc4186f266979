#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "hoidet/errors.hpp"
#include "hoidet/model.hpp"
#include "hoidet/rng.hpp"
#include "hoidet/scenegen.hpp"
#include "hoidet/trainer.hpp"

using namespace hoidet;
using model::HoiModel;
using model::ModelConfig;
using train::AdamWState;
using train::FitResult;
using train::StepLosses;
using train::TrainConfig;

namespace {

ModelConfig mini_cfg() {
  ModelConfig c;
  c.image_size = 16;
  c.d_model = 8;
  c.n_heads = 2;
  c.encoder_layers = 1;
  c.decoder_layers = 1;
  c.n_queries = 2;
  c.stem_channels = 4;
  c.verb_head_depth = 1;
  c.dropout_rate = 0.5;
  return c;
}

// scenes that fit the two-slot mini model (matching needs slots >= triplets)
scenes::SceneProfile mini_profile() {
  scenes::SceneProfile p;
  p.max_triplets = 2;
  p.distractors = false;
  return p;
}

scenes::Dataset mini_dataset(std::uint64_t seed, int n, const std::string& split) {
  scenes::Dataset ds;
  ds.dataset_seed = seed;
  ds.split = split;
  ds.profile = mini_profile();
  ds.records = scenes::generate(seed, n, ds.profile, split);
  return ds;
}

std::vector<std::vector<double>> zero_grads(const HoiModel& m) {
  std::vector<std::vector<double>> g;
  for (const auto& p : m.params()) g.emplace_back(p.values->size(), 0.0);
  return g;
}

std::vector<std::vector<double>> snapshot(const HoiModel& m) {
  std::vector<std::vector<double>> s;
  for (const auto& p : m.params()) s.push_back(*p.values);
  return s;
}

bool bitwise_equal(const std::vector<std::vector<double>>& a,
                   const std::vector<std::vector<double>>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].size() != b[i].size()) return false;
    for (size_t j = 0; j < a[i].size(); ++j)
      if (std::memcmp(&a[i][j], &b[i][j], sizeof(double)) != 0) return false;
  }
  return true;
}

// the same update algebra, maintained separately so a drift in either copy
// shows up; operates on flat copies and applies no clipping
void reference_adamw(std::vector<double>& w, std::vector<double>& m, std::vector<double>& v,
                     const std::vector<double>& g, std::int64_t t, const TrainConfig& c) {
  for (size_t j = 0; j < w.size(); ++j) {
    m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
    v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
    const double mhat = m[j] / (1.0 - std::pow(c.beta1, static_cast<double>(t)));
    const double vhat = v[j] / (1.0 - std::pow(c.beta2, static_cast<double>(t)));
    w[j] -= c.lr * (mhat / (std::sqrt(vhat) + c.eps) + c.weight_decay * w[j]);
  }
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

// fresh working directory for a fit run; wiped so reruns start clean
std::string fit_dir(const std::string& name) {
  const std::string dir = "test_trainer_" + name;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

// ----------------------------------------------------------------- config

TEST_CASE("train config: validation rejects out-of-range fields") {
  CHECK_NOTHROW(TrainConfig{}.validate());

  auto reject = [](auto&& tweak) {
    TrainConfig c;
    tweak(c);
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
  };
  reject([](TrainConfig& c) { c.lr = 0.0; });
  reject([](TrainConfig& c) { c.lr = -1e-4; });
  reject([](TrainConfig& c) { c.weight_decay = -1e-6; });
  reject([](TrainConfig& c) { c.beta1 = 1.0; });
  reject([](TrainConfig& c) { c.beta2 = -0.1; });
  reject([](TrainConfig& c) { c.eps = 0.0; });
  reject([](TrainConfig& c) { c.batch_size = 0; });
  reject([](TrainConfig& c) { c.steps = -1; });
  reject([](TrainConfig& c) { c.lambda_o = -0.5; });
  reject([](TrainConfig& c) { c.lambda_a = -2.0; });
  reject([](TrainConfig& c) { c.dropout_rate = 1.0; });
  reject([](TrainConfig& c) { c.grad_clip_norm = -0.1; });
  reject([](TrainConfig& c) { c.checkpoint_every = -3; });
}

TEST_CASE("train config: json round trip and missing keys") {
  TrainConfig c;
  c.lr = 3e-3;
  c.weight_decay = 2e-5;
  c.batch_size = 7;
  c.steps = 42;
  c.seed = 123456789012345ULL;
  c.lambda_o = 0.25;
  c.lambda_a = 1.75;
  c.dropout_rate = 0.7;
  c.grad_clip_norm = 0.0;
  c.box_uncertainty = false;
  c.inter_uncertainty = false;
  c.checkpoint_every = 5;

  const nlohmann::ordered_json j = c.to_json();
  const TrainConfig back = TrainConfig::from_json(j);
  CHECK(back.to_json() == j);
  CHECK(back.lr == c.lr);
  CHECK(back.seed == c.seed);
  CHECK(back.box_uncertainty == c.box_uncertainty);
  CHECK(back.checkpoint_every == c.checkpoint_every);

  nlohmann::ordered_json missing = j;
  missing.erase("grad_clip_norm");
  CHECK_THROWS(TrainConfig::from_json(missing));

  const LossWeights w = c.loss_weights();
  CHECK(w.lambda_o == c.lambda_o);
  CHECK(w.lambda_a == c.lambda_a);
  CHECK(w.box_uncertainty == c.box_uncertainty);
  CHECK(w.inter_uncertainty == c.inter_uncertainty);
}

// -------------------------------------------------------------- optimizer

TEST_CASE("adamw: zero-gradient step decays weights by exactly lr*wd") {
  HoiModel m(mini_cfg(), 11);
  const auto before = snapshot(m);
  AdamWState opt(m);
  TrainConfig cfg;  // lr 1e-4, wd 1e-4

  const double norm = train::adamw_apply(m, opt, zero_grads(m), cfg);
  CHECK(norm == 0.0);
  CHECK(opt.step == 1);

  for (size_t i = 0; i < m.params().size(); ++i) {
    const auto& now = *m.params()[i].values;
    for (size_t j = 0; j < now.size(); ++j) {
      const double expect = before[i][j] - cfg.lr * (cfg.weight_decay * before[i][j]);
      CHECK(now[j] == expect);
      // moments stay identically zero: nothing entered the running averages
      CHECK(opt.m[i][j] == 0.0);
      CHECK(opt.v[i][j] == 0.0);
    }
  }
}

TEST_CASE("adamw: lr=0 leaves weights bitwise unchanged but advances state") {
  HoiModel m(mini_cfg(), 12);
  const auto before = snapshot(m);
  AdamWState opt(m);
  TrainConfig cfg;
  cfg.lr = 0.0;
  cfg.grad_clip_norm = 0.0;

  Rng rng(99);
  auto grads = zero_grads(m);
  for (auto& g : grads)
    for (double& x : g) x = rng.uniform(-1.0, 1.0);

  train::adamw_apply(m, opt, grads, cfg);
  CHECK(bitwise_equal(snapshot(m), before));
  CHECK(opt.step == 1);
  double mmax = 0.0;
  for (const auto& mi : opt.m)
    for (double x : mi) mmax = std::max(mmax, std::abs(x));
  CHECK(mmax > 0.0);
}

TEST_CASE("adamw: matches a reference implementation over several steps") {
  HoiModel m(mini_cfg(), 13);
  AdamWState opt(m);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.grad_clip_norm = 0.0;  // clipping off: raw gradients flow through

  auto ref_w = snapshot(m);
  auto ref_m = zero_grads(m);
  auto ref_v = zero_grads(m);

  Rng rng(7);
  for (int t = 1; t <= 3; ++t) {
    auto grads = zero_grads(m);
    for (auto& g : grads)
      for (double& x : g) x = rng.uniform(-0.5, 0.5);

    train::adamw_apply(m, opt, grads, cfg);
    for (size_t i = 0; i < grads.size(); ++i)
      reference_adamw(ref_w[i], ref_m[i], ref_v[i], grads[i], t, cfg);
  }
  CHECK(opt.step == 3);
  CHECK(bitwise_equal(snapshot(m), ref_w));
  CHECK(bitwise_equal(opt.m, ref_m));
  CHECK(bitwise_equal(opt.v, ref_v));
}

TEST_CASE("adamw: clipping rescales the whole gradient to the threshold norm") {
  HoiModel m(mini_cfg(), 14);
  HoiModel m2(mini_cfg(), 14);
  AdamWState opt(m), opt2(m2);
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.grad_clip_norm = 0.25;

  Rng rng(8);
  auto grads = zero_grads(m);
  for (auto& g : grads)
    for (double& x : g) x = rng.uniform(-1.0, 1.0);

  // norm accumulated in the same order the implementation uses
  double sq = 0.0;
  for (const auto& g : grads)
    for (double x : g) sq += x * x;
  const double norm = std::sqrt(sq);
  REQUIRE(norm > cfg.grad_clip_norm);

  const double reported = train::adamw_apply(m, opt, grads, cfg);
  CHECK(reported == norm);  // pre-clip norm is what gets reported

  // manually pre-scaled gradients with clipping disabled give the same step
  auto scaled = grads;
  for (auto& g : scaled)
    for (double& x : g) x = x * (cfg.grad_clip_norm / norm);
  TrainConfig unclipped = cfg;
  unclipped.grad_clip_norm = 0.0;
  train::adamw_apply(m2, opt2, scaled, unclipped);
  CHECK(bitwise_equal(snapshot(m), snapshot(m2)));
}

TEST_CASE("adamw: gradient layout mismatch throws") {
  HoiModel m(mini_cfg(), 15);
  AdamWState opt(m);
  TrainConfig cfg;
  auto grads = zero_grads(m);
  grads.pop_back();
  CHECK_THROWS_AS(train::adamw_apply(m, opt, grads, cfg), ShapeMismatch);

  auto bad = zero_grads(m);
  bad.front().push_back(0.0);
  CHECK_THROWS_AS(train::adamw_apply(m, opt, bad, cfg), ShapeMismatch);

  AdamWState empty;
  CHECK_THROWS_AS(train::adamw_apply(m, empty, zero_grads(m), cfg), ShapeMismatch);
}

// ------------------------------------------------------------- train_step

TEST_CASE("train_step: empty batch throws") {
  HoiModel m(mini_cfg(), 20);
  AdamWState opt(m);
  CHECK_THROWS_AS(train::train_step(m, opt, {}, TrainConfig{}), Error);
}

TEST_CASE("train_step: lr=0 changes optimizer state only") {
  HoiModel m(mini_cfg(), 21);
  const auto before = snapshot(m);
  AdamWState opt(m);
  TrainConfig cfg;
  cfg.lr = 0.0;

  const auto ds = mini_dataset(300, 2, "train");
  const StepLosses row = train::train_step(m, opt, {&ds.records[0], &ds.records[1]}, cfg);

  CHECK(std::isfinite(row.total));
  CHECK(row.grad_norm > 0.0);
  CHECK(opt.step == 1);
  CHECK(bitwise_equal(snapshot(m), before));
  double mmax = 0.0;
  for (const auto& mi : opt.m)
    for (double x : mi) mmax = std::max(mmax, std::abs(x));
  CHECK(mmax > 0.0);
}

TEST_CASE("train_step: same seed and config reproduce losses and weights bitwise") {
  const auto ds = mini_dataset(301, 3, "train");
  TrainConfig cfg;
  cfg.lr = 1e-3;
  cfg.seed = 77;

  auto run = [&](int init_seed) {
    HoiModel m(mini_cfg(), static_cast<std::uint64_t>(init_seed));
    AdamWState opt(m);
    std::vector<StepLosses> rows;
    for (int s = 0; s < 3; ++s)
      rows.push_back(train::train_step(m, opt, {&ds.records[0], &ds.records[2]}, cfg));
    return std::pair{rows, snapshot(m)};
  };
  const auto [rows_a, w_a] = run(5);
  const auto [rows_b, w_b] = run(5);

  REQUIRE(rows_a.size() == rows_b.size());
  for (size_t i = 0; i < rows_a.size(); ++i) {
    CHECK(rows_a[i].l_loc_h == rows_b[i].l_loc_h);
    CHECK(rows_a[i].l_loc_o == rows_b[i].l_loc_o);
    CHECK(rows_a[i].l_box == rows_b[i].l_box);
    CHECK(rows_a[i].l_inter == rows_b[i].l_inter);
    CHECK(rows_a[i].total == rows_b[i].total);
    CHECK(rows_a[i].grad_norm == rows_b[i].grad_norm);
  }
  CHECK(bitwise_equal(w_a, w_b));

  // consecutive steps draw fresh dropout masks, so losses are not constant
  CHECK(rows_a[0].total != rows_a[1].total);
}

TEST_CASE("train_step: poisoned weights raise NonFiniteLoss naming the scene") {
  HoiModel m(mini_cfg(), 22);
  // the verb head registers last, so its bias feeds the logits with no
  // intervening relu that could swallow the NaN
  for (double& v : *m.params().back().values) v = std::nan("");
  AdamWState opt(m);
  const auto ds = mini_dataset(302, 1, "train");

  try {
    train::train_step(m, opt, {&ds.records[0]}, TrainConfig{});
    FAIL("expected NonFiniteLoss");
  } catch (const NonFiniteLoss& e) {
    const std::string msg = e.what();
    CHECK(msg.find("step 1") != std::string::npos);
    CHECK(msg.find(std::to_string(ds.records[0].seed)) != std::string::npos);
  }
}

// -------------------------------------------------------------- eval_loss

TEST_CASE("eval_loss: reproducible, per-scene seeded, weights untouched") {
  HoiModel m(mini_cfg(), 23);
  const auto before = snapshot(m);
  const auto ds = mini_dataset(303, 4, "val");
  TrainConfig cfg;
  cfg.seed = 5;

  const StepLosses a = train::eval_loss(m, ds.records, cfg);
  const StepLosses b = train::eval_loss(m, ds.records, cfg);
  CHECK(a.total == b.total);
  CHECK(a.l_inter == b.l_inter);
  CHECK(bitwise_equal(snapshot(m), before));
  CHECK(std::isfinite(a.total));

  // every scene contributes a value independent of its position in the list
  double acc = 0.0;
  for (const auto& rec : ds.records)
    acc += train::eval_loss(m, {rec}, cfg).total;
  CHECK(a.total == doctest::Approx(acc / 4.0).epsilon(1e-12));

  CHECK_THROWS_AS(train::eval_loss(m, {}, cfg), Error);
}

// ------------------------------------------------------------ checkpoints

TEST_CASE("training checkpoint: round trip preserves weights, moments, step, config") {
  HoiModel m(mini_cfg(), 24);
  AdamWState opt(m);
  TrainConfig cfg;
  cfg.lr = 2e-3;
  cfg.seed = 9;
  cfg.lambda_o = 0.5;
  const auto ds = mini_dataset(304, 2, "train");
  train::train_step(m, opt, {&ds.records[0]}, cfg);
  train::train_step(m, opt, {&ds.records[1]}, cfg);

  const std::string path = "test_trainer_state.ckpt";
  train::save_train_checkpoint(path, m, opt, cfg);
  train::TrainState st = train::load_train_checkpoint(path);

  CHECK(st.opt.step == 2);
  CHECK(st.cfg.to_json() == cfg.to_json());
  CHECK(st.model.config().to_json() == m.config().to_json());
  CHECK(bitwise_equal(snapshot(st.model), snapshot(m)));
  CHECK(bitwise_equal(st.opt.m, opt.m));
  CHECK(bitwise_equal(st.opt.v, opt.v));

  // the plain model loader reads the same file, ignoring optimizer entries
  HoiModel weights_only = HoiModel::load(path);
  CHECK(bitwise_equal(snapshot(weights_only), snapshot(m)));
}

TEST_CASE("training checkpoint: plain model checkpoint is rejected") {
  HoiModel m(mini_cfg(), 25);
  const std::string path = "test_trainer_weights_only.ckpt";
  m.save(path);
  CHECK_THROWS_AS(train::load_train_checkpoint(path), IoError);
}

// -------------------------------------------------------------------- fit

TEST_CASE("fit: steps=0 writes the initial checkpoint only") {
  HoiModel m(mini_cfg(), 26);
  const auto before = snapshot(m);
  AdamWState opt(m);
  TrainConfig cfg;
  cfg.steps = 0;
  const auto ds = mini_dataset(305, 2, "train");
  const std::string dir = fit_dir("steps0");

  const FitResult res = train::fit(m, ds, nullptr, opt, cfg, dir);
  CHECK(res.rows.empty());
  CHECK(res.final_checkpoint == dir + "/ckpt-000000.ckpt");
  CHECK(bitwise_equal(snapshot(m), before));

  int ckpts = 0;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.path().extension() == ".ckpt") ++ckpts;
  CHECK(ckpts == 1);

  const auto lines = read_lines(res.csv_path);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0] == "step,l_loc_h,l_loc_o,l_box,l_inter,total");
}

TEST_CASE("fit: csv rows mirror the returned losses and checkpoints appear") {
  HoiModel m(mini_cfg(), 27);
  AdamWState opt(m);
  TrainConfig cfg;
  cfg.steps = 4;
  cfg.batch_size = 2;
  cfg.lr = 1e-3;
  cfg.seed = 31;
  const auto ds = mini_dataset(306, 5, "train");
  const std::string dir = fit_dir("csv");

  const FitResult res = train::fit(m, ds, nullptr, opt, cfg, dir);
  REQUIRE(res.rows.size() == 4);
  CHECK(opt.step == 4);
  CHECK(std::filesystem::exists(dir + "/ckpt-000000.ckpt"));
  CHECK(std::filesystem::exists(res.final_checkpoint));
  CHECK(res.final_checkpoint == dir + "/ckpt-000004.ckpt");

  const auto lines = read_lines(res.csv_path);
  REQUIRE(lines.size() == 5);
  for (int i = 0; i < 4; ++i) {
    std::istringstream ss(lines[static_cast<size_t>(i) + 1]);
    std::string field;
    std::getline(ss, field, ',');
    CHECK(field == std::to_string(i + 1));
    double vals[5];
    for (double& v : vals) {
      std::getline(ss, field, ',');
      v = std::strtod(field.c_str(), nullptr);
    }
    // %.17g round-trips doubles, so parsed values are bitwise equal
    CHECK(vals[0] == res.rows[static_cast<size_t>(i)].l_loc_h);
    CHECK(vals[1] == res.rows[static_cast<size_t>(i)].l_loc_o);
    CHECK(vals[2] == res.rows[static_cast<size_t>(i)].l_box);
    CHECK(vals[3] == res.rows[static_cast<size_t>(i)].l_inter);
    CHECK(vals[4] == res.rows[static_cast<size_t>(i)].total);
  }
}

TEST_CASE("fit: identical runs produce byte-identical logs and checkpoints") {
  const auto ds = mini_dataset(307, 6, "train");
  TrainConfig cfg;
  cfg.steps = 3;
  cfg.batch_size = 2;
  cfg.lr = 1e-3;
  cfg.seed = 99;

  auto run = [&](const std::string& name) {
    HoiModel m(mini_cfg(), 4);
    AdamWState opt(m);
    const std::string dir = fit_dir(name);
    return train::fit(m, ds, nullptr, opt, cfg, dir);
  };
  const FitResult a = run("ident_a");
  const FitResult b = run("ident_b");
  CHECK(slurp(a.csv_path) == slurp(b.csv_path));
  CHECK(slurp(a.final_checkpoint) == slurp(b.final_checkpoint));
}

TEST_CASE("fit: resume from a mid-run checkpoint is bit-exact") {
  const auto ds = mini_dataset(308, 5, "train");
  TrainConfig cfg;
  cfg.steps = 6;
  cfg.checkpoint_every = 3;
  cfg.batch_size = 2;
  cfg.lr = 1e-3;
  cfg.seed = 21;

  HoiModel full(mini_cfg(), 9);
  AdamWState full_opt(full);
  const std::string dir_a = fit_dir("resume_full");
  const FitResult res_a = train::fit(full, ds, nullptr, full_opt, cfg, dir_a);
  REQUIRE(res_a.rows.size() == 6);

  train::TrainState st = train::load_train_checkpoint(dir_a + "/ckpt-000003.ckpt");
  CHECK(st.opt.step == 3);
  const std::string dir_b = fit_dir("resume_tail");
  const FitResult res_b = train::fit(st.model, ds, nullptr, st.opt, st.cfg, dir_b);
  REQUIRE(res_b.rows.size() == 3);

  for (size_t i = 0; i < 3; ++i) {
    CHECK(res_b.rows[i].total == res_a.rows[i + 3].total);
    CHECK(res_b.rows[i].grad_norm == res_a.rows[i + 3].grad_norm);
  }
  CHECK(bitwise_equal(snapshot(st.model), snapshot(full)));
  CHECK(slurp(dir_b + "/ckpt-000006.ckpt") == slurp(dir_a + "/ckpt-000006.ckpt"));

  // the resumed log carries exactly the tail rows, same bytes as the full log
  const auto lines_a = read_lines(res_a.csv_path);
  const auto lines_b = read_lines(res_b.csv_path);
  REQUIRE(lines_a.size() == 7);
  REQUIRE(lines_b.size() == 3);
  for (size_t i = 0; i < 3; ++i) CHECK(lines_b[i] == lines_a[i + 4]);

  // a checkpoint past the configured horizon refuses to resume
  train::TrainState done = train::load_train_checkpoint(dir_a + "/ckpt-000006.ckpt");
  done.cfg.steps = 3;
  CHECK_THROWS_AS(train::fit(done.model, ds, nullptr, done.opt, done.cfg, fit_dir("past")),
                  InvalidConfig);
}

TEST_CASE("fit: validation loss is measured at entry and exit") {
  HoiModel m(mini_cfg(), 28);
  AdamWState opt(m);
  TrainConfig cfg;
  cfg.steps = 2;
  cfg.batch_size = 1;
  cfg.lr = 1e-3;
  cfg.seed = 55;
  const auto ds = mini_dataset(309, 3, "train");
  const auto val = mini_dataset(310, 2, "val");

  const FitResult res = train::fit(m, ds, &val, opt, cfg, fit_dir("val"));
  CHECK(res.val_initial > 0.0);
  CHECK(res.val_final > 0.0);
  CHECK(res.val_final == train::eval_loss(m, val.records, cfg).total);
}

TEST_CASE("fit: single-scene overfit drives the loss down") {
  HoiModel m(mini_cfg(), 29);
  AdamWState opt(m);
  TrainConfig cfg;
  cfg.steps = 250;
  cfg.batch_size = 1;
  cfg.lr = 2e-3;
  cfg.seed = 1;
  const auto ds = mini_dataset(311, 1, "train");

  const FitResult res = train::fit(m, ds, nullptr, opt, cfg, fit_dir("overfit"));
  REQUIRE(res.rows.size() == 250);
  const double initial = res.rows.front().total;
  const double final = res.rows.back().total;
  CHECK(final < 0.5 * initial);
}

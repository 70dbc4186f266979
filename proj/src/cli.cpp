#include "hoidet/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "hoidet/errors.hpp"
#include "hoidet/evaluator.hpp"
#include "hoidet/geometry.hpp"
#include "hoidet/matching.hpp"
#include "hoidet/rng.hpp"
#include "hoidet/scenegen.hpp"
#include "hoidet/tensor.hpp"
#include "hoidet/uncertainty.hpp"

namespace hoidet::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << body;
  if (!out) throw IoError("write failed: " + path);
}

void make_dirs(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

}  // namespace

nlohmann::ordered_json RunManifest::to_json() const {
  return nlohmann::ordered_json{{"command", command},
                                {"config_hash", config_hash},
                                {"dataset_seed", dataset_seed},
                                {"checkpoint_hash", checkpoint_hash},
                                {"outputs", outputs},
                                {"wall_clock_sec", wall_clock_sec}};
}

std::string hash_hex(const std::string& bytes) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash_bytes(bytes.data(), bytes.size())));
  return buf;
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return hash_hex(ss.str());
}

model::ModelConfig ablation_model_config() {
  model::ModelConfig c;
  c.image_size = 32;
  c.d_model = 32;
  c.n_heads = 4;
  c.encoder_layers = 2;
  c.decoder_layers = 2;
  c.n_queries = 8;
  c.stem_channels = 8;
  c.verb_head_depth = 1;
  c.dropout_rate = 0.5;
  return c;
}

train::TrainConfig ablation_train_config() {
  train::TrainConfig t;
  t.steps = 400;
  t.batch_size = 4;
  return t;
}

namespace {

void write_manifest(RunManifest& man, const std::string& path, Clock::time_point t0) {
  man.wall_clock_sec = seconds_since(t0);
  write_text(path, man.to_json().dump(2) + "\n");
}

// ------------------------------------------------------------------- gen

struct GenArgs {
  std::uint64_t seed = 0;
  int scenes = 0;
  std::string profile = "default";
  std::string split = "train";
  std::string out;
};

void run_gen(const GenArgs& a) {
  const auto t0 = Clock::now();
  if (a.scenes < 1) throw InvalidConfig("gen needs --scenes >= 1");
  const scenes::SceneProfile profile = scenes::SceneProfile::named(a.profile);

  scenes::Dataset ds;
  ds.dataset_seed = a.seed;
  ds.split = a.split;
  ds.profile = profile;
  ds.records = scenes::generate(a.seed, a.scenes, profile, a.split);
  scenes::save_jsonl(ds, a.out);

  RunManifest man;
  man.command = "gen";
  man.config_hash = hash_hex(nlohmann::ordered_json{{"seed", a.seed},
                                                    {"scenes", a.scenes},
                                                    {"profile", a.profile},
                                                    {"split", a.split}}
                                 .dump());
  man.dataset_seed = a.seed;
  man.outputs = {a.out};
  write_manifest(man, a.out + ".manifest.json", t0);
  std::printf("wrote %s: %d scenes, profile %s, seed %llu\n", a.out.c_str(), a.scenes,
              a.profile.c_str(), static_cast<unsigned long long>(a.seed));
}

// ----------------------------------------------------------------- train

struct TrainArgs {
  std::string data, config, out;
};

void run_train(const TrainArgs& a) {
  const auto t0 = Clock::now();
  const scenes::Dataset ds = scenes::load_jsonl(a.data);

  model::ModelConfig mc;
  train::TrainConfig tc;
  if (!a.config.empty()) {
    std::ifstream in(a.config);
    if (!in) throw IoError("cannot read config: " + a.config);
    try {
      const auto j = nlohmann::json::parse(in);
      if (j.contains("model")) mc = model::ModelConfig::from_json(j.at("model"));
      if (j.contains("train")) tc = train::TrainConfig::from_json(j.at("train"));
    } catch (const nlohmann::json::exception& e) {
      throw InvalidConfig("config file " + a.config + ": " + e.what());
    }
  }
  // the dropout knob lives in the train config; the model carries it out
  mc.dropout_rate = tc.dropout_rate;

  make_dirs(a.out);
  const nlohmann::ordered_json effective{{"model", mc.to_json()}, {"train", tc.to_json()}};
  // the effective config is itself a valid --config input for reruns
  write_text(a.out + "/config.json", effective.dump(2) + "\n");

  model::HoiModel m(mc, tc.seed);
  train::AdamWState opt(m);
  const train::FitResult fr = train::fit(m, ds, nullptr, opt, tc, a.out);

  RunManifest man;
  man.command = "train";
  man.config_hash = hash_hex(effective.dump());
  man.dataset_seed = ds.dataset_seed;
  man.checkpoint_hash = file_hash_hex(fr.final_checkpoint);
  man.outputs = {a.out + "/config.json", fr.csv_path};
  std::vector<std::string> ckpts;
  for (const auto& entry : std::filesystem::directory_iterator(a.out)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("ckpt-", 0) == 0 && name.size() > 5 && entry.path().extension() == ".ckpt")
      ckpts.push_back(entry.path().string());
  }
  std::sort(ckpts.begin(), ckpts.end());
  man.outputs.insert(man.outputs.end(), ckpts.begin(), ckpts.end());
  write_manifest(man, a.out + "/manifest.json", t0);

  const double last = fr.rows.empty() ? 0.0 : fr.rows.back().total;
  std::printf("trained %d steps on %zu scenes; final loss %s; checkpoint %s\n", tc.steps,
              ds.records.size(), g17(last).c_str(), fr.final_checkpoint.c_str());
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
  std::string data, checkpoint, out;
  std::string mode = "adaptive";
  int passes = 8;
};

void run_eval(const EvalArgs& a) {
  const auto t0 = Clock::now();
  const scenes::Dataset ds = scenes::load_jsonl(a.data);
  const model::HoiModel m = model::HoiModel::load(a.checkpoint);
  if (a.passes < 1) throw InvalidConfig("eval needs --passes >= 1");

  const std::uint64_t probe_seed = mix_seed(ds.dataset_seed, hash_string("probe"));
  const auto slots = eval::infer_dataset(m, ds, a.passes, probe_seed);
  const auto gts = eval::dataset_gts(ds);
  const auto rare = eval::rare_verbs(ds.profile);

  eval::EvalReport report;
  eval::AblationRow summary;
  summary.label = a.mode;
  if (a.mode == "fixed") {
    const eval::FixedBaseline fb = eval::best_fixed_threshold(slots, gts, 0.5, rare);
    report = fb.report;
    summary.map_fixed = report.map_full;
    summary.best_threshold = fb.best_threshold;
  } else {
    std::vector<std::vector<eval::ScoredTriplet>> preds;
    preds.reserve(slots.size());
    for (size_t s = 0; s < slots.size(); ++s)
      preds.push_back(eval::expand_predictions(static_cast<int>(s), slots[s], true));
    report = eval::hoi_map(preds, gts, 0.5, rare);
    summary.map_adaptive = report.map_full;
  }
  summary.map_primary = report.map_full;
  summary.map_rare = report.map_rare;
  summary.map_common = report.map_common;
  summary.provenance = nlohmann::ordered_json{
      {"mode", a.mode}, {"mc_passes", a.passes}, {"probe_seed", probe_seed}};
  report.ablation_rows.push_back(summary);

  make_dirs(a.out);
  RunManifest man;
  man.command = "eval";
  man.config_hash = hash_hex(
      nlohmann::ordered_json{{"mode", a.mode}, {"passes", a.passes}, {"iou_thresh", 0.5}}
          .dump());
  man.dataset_seed = ds.dataset_seed;
  man.checkpoint_hash = file_hash_hex(a.checkpoint);
  man.outputs = eval::write_report_files(report, a.out + "/eval");
  write_manifest(man, a.out + "/manifest.json", t0);

  std::printf("%s mAP %s (rare %s, common %s, known-object %s) on %zu scenes\n",
              a.mode.c_str(), g17(report.map_full).c_str(), g17(report.map_rare).c_str(),
              g17(report.map_common).c_str(), g17(report.map_known_object).c_str(),
              gts.size());
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  std::string suite, out;
  int scenes = 0;  // train-scene override; 0 keeps the built-in scale
  int steps = 0;
  int seeds = 0;  // number of seeds (1..n); 0 keeps {1, 2, 3}
};

void run_ablate(const AblateArgs& a) {
  const auto t0 = Clock::now();

  eval::AblationContext ctx;
  ctx.model = ablation_model_config();
  ctx.train = ablation_train_config();
  if (a.steps > 0) ctx.train.steps = a.steps;
  if (a.seeds > 0) {
    ctx.seeds.clear();
    for (int i = 1; i <= a.seeds; ++i) ctx.seeds.push_back(static_cast<std::uint64_t>(i));
  }
  const int train_n = a.scenes > 0 ? a.scenes : 400;
  const int test_n = a.scenes > 0 ? std::max(1, a.scenes / 2) : 150;

  const scenes::SceneProfile profile;
  scenes::Dataset train_set;
  train_set.dataset_seed = 101;
  train_set.split = "train";
  train_set.profile = profile;
  train_set.records = scenes::generate(101, train_n, profile, "train");
  scenes::Dataset test_set;
  test_set.dataset_seed = 202;
  test_set.split = "test";
  test_set.profile = profile;
  test_set.records = scenes::generate(202, test_n, profile, "test");
  ctx.train_set = &train_set;
  ctx.test_set = &test_set;
  ctx.work_dir = a.out + "/runs";
  make_dirs(a.out);

  std::vector<eval::AblationRow> rows;
  if (a.suite == "components")
    rows = eval::threshold_ablation(ctx);
  else if (a.suite == "dropout")
    rows = eval::dropout_ablation(ctx);
  else
    rows = eval::lambda_sweep(ctx, {0.01, 0.1, 0.5, 1.0, 2.0});

  nlohmann::ordered_json doc{{"suite", a.suite},
                             {"model", ctx.model.to_json()},
                             {"train", ctx.train.to_json()},
                             {"train_scenes", train_n},
                             {"test_scenes", test_n},
                             {"rows", nlohmann::ordered_json::array()}};
  std::string csv = "label,map_fixed,best_threshold,map_adaptive,map_primary,map_rare,map_common\n";
  for (const eval::AblationRow& row : rows) {
    doc["rows"].push_back(row.to_json());
    csv += row.label + "," + g17(row.map_fixed) + "," + g17(row.best_threshold) + "," +
           g17(row.map_adaptive) + "," + g17(row.map_primary) + "," + g17(row.map_rare) + "," +
           g17(row.map_common) + "\n";
  }
  const std::string json_path = a.out + "/" + a.suite + ".json";
  const std::string csv_path = a.out + "/" + a.suite + ".csv";
  write_text(json_path, doc.dump(2) + "\n");
  write_text(csv_path, csv);

  RunManifest man;
  man.command = "ablate";
  man.config_hash = hash_hex(nlohmann::ordered_json{{"suite", a.suite},
                                                    {"model", ctx.model.to_json()},
                                                    {"train", ctx.train.to_json()},
                                                    {"train_scenes", train_n},
                                                    {"test_scenes", test_n},
                                                    {"seeds", ctx.seeds}}
                                 .dump());
  man.dataset_seed = train_set.dataset_seed;
  man.outputs = {json_path, csv_path};
  write_manifest(man, a.out + "/manifest.json", t0);

  std::printf("suite %s: %zu rows\n", a.suite.c_str(), rows.size());
  for (const eval::AblationRow& row : rows)
    std::printf("  %-18s primary mAP %s\n", row.label.c_str(), g17(row.map_primary).c_str());
}

// ----------------------------------------------------------------- check

// relative error with a floor so near-zero gradients compare absolutely
double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1e-2, std::fabs(a), std::fabs(b)});
}

// exhaustive minimum over all injective column -> row maps
double assignment_brute_force(const CostMatrix& cost) {
  const int rows = static_cast<int>(cost.size());
  const int cols = rows > 0 ? static_cast<int>(cost[0].size()) : 0;
  std::vector<char> used(static_cast<size_t>(rows), 0);
  std::function<double(int)> go = [&](int c) -> double {
    if (c == cols) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < rows; ++r) {
      if (used[static_cast<size_t>(r)]) continue;
      used[static_cast<size_t>(r)] = 1;
      best = std::min(best, cost[static_cast<size_t>(r)][static_cast<size_t>(c)] + go(c + 1));
      used[static_cast<size_t>(r)] = 0;
    }
    return best;
  };
  return go(0);
}

model::ModelConfig check_model_config() {
  model::ModelConfig c;
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

scenes::SceneProfile check_profile() {
  scenes::SceneProfile p;
  p.max_triplets = 2;  // the check model has two prediction slots
  p.distractors = false;
  return p;
}

int run_check() {
  const auto t0 = Clock::now();
  int failures = 0;
  auto report = [&](const char* name, bool ok, const std::string& detail = "") {
    if (ok) {
      std::printf("ok   %s\n", name);
    } else {
      std::printf("FAIL %s%s%s\n", name, detail.empty() ? "" : ": ", detail.c_str());
      ++failures;
    }
  };

  {  // closed forms the loss terms lean on
    GradTape t(0);
    const double v = t.softplus(t.watch(Tensor({1}, {0.0}))).value();
    report("softplus at zero equals log 2", std::fabs(v - std::log(2.0)) <= 1e-12);
  }

  {  // divergence identities
    Rng rng(1);
    bool self_zero = true, nonneg = true;
    for (int i = 0; i < 100; ++i) {
      std::vector<double> y(9), z(9);
      double sy = 0, sz = 0;
      for (size_t k = 0; k < y.size(); ++k) {
        y[k] = rng.uniform(0.01, 1.0);
        z[k] = rng.uniform(0.01, 1.0);
        sy += y[k];
        sz += z[k];
      }
      for (size_t k = 0; k < y.size(); ++k) {
        y[k] /= sy;
        z[k] /= sz;
      }
      if (!(std::fabs(interaction_kl(y, y)) <= 1e-9)) self_zero = false;
      if (!(interaction_kl(y, z) >= 0.0)) nonneg = false;
    }
    report("divergence of a distribution with itself is zero", self_zero);
    report("divergence is never negative", nonneg);
  }

  {  // overlap against an exact unit-cell count on integer boxes
    Rng rng(2);
    bool ok = true;
    double worst = 0.0;
    for (int i = 0; i < 300 && ok; ++i) {
      auto make = [&] {
        const double x = static_cast<double>(rng.uniform_int(0, 10));
        const double y = static_cast<double>(rng.uniform_int(0, 10));
        return Box{x, y, x + static_cast<double>(rng.uniform_int(1, 8)),
                   y + static_cast<double>(rng.uniform_int(1, 8))};
      };
      const Box a = make(), b = make();
      long long ia = 0, ib = 0, both = 0;
      for (int cx = 0; cx < 20; ++cx)
        for (int cy = 0; cy < 20; ++cy) {
          const double px = cx + 0.5, py = cy + 0.5;
          const bool in_a = px > a.x1 && px < a.x2 && py > a.y1 && py < a.y2;
          const bool in_b = px > b.x1 && px < b.x2 && py > b.y1 && py < b.y2;
          ia += in_a;
          ib += in_b;
          both += in_a && in_b;
        }
      const double want =
          static_cast<double>(both) / static_cast<double>(ia + ib - both);
      const double got = iou(a, b);
      worst = std::max(worst, std::fabs(got - want));
      if (std::fabs(got - want) > 1e-12) ok = false;
    }
    report("overlap matches a unit-cell count on integer boxes", ok,
           ok ? "" : "max deviation " + g17(worst));
  }

  {  // assignment against the exhaustive minimum
    Rng rng(3);
    bool ok = true;
    for (int i = 0; i < 300 && ok; ++i) {
      const int rows = static_cast<int>(rng.uniform_int(1, 6));
      const int cols = static_cast<int>(rng.uniform_int(1, rows));
      CostMatrix m(static_cast<size_t>(rows), std::vector<double>(static_cast<size_t>(cols)));
      for (auto& row : m)
        for (auto& v : row) v = rng.uniform(-5.0, 5.0);
      const double want = assignment_brute_force(m);
      const double got = hungarian(m).total_cost;
      if (std::fabs(got - want) > 1e-9 * std::max(1.0, std::fabs(want))) ok = false;
    }
    report("matcher equals the exhaustive minimum", ok);
  }

  {  // end-to-end gradient of the total loss on the miniature model
    const model::ModelConfig cfg = check_model_config();
    const scenes::SceneProfile profile = check_profile();
    double max_rel = 0.0;
    for (std::uint64_t seed = 5; seed <= 7; ++seed) {
      const model::HoiModel m(cfg, seed);
      const auto rec = scenes::generate(seed, 1, profile, "train")[0];
      const auto img = scenes::render_scene(rec, cfg.image_size);
      const auto gts = scenes::gt_triplets(rec);
      const LossWeights w;

      // move every parameter off the symmetric init point so no probe
      // straddles a relu kink
      Rng jitter(seed * 7 + 1);
      for (const auto& p : m.params())
        for (double& v : *p.values) v += jitter.uniform(-0.05, 0.05);

      LossConstants frozen;
      std::vector<std::vector<double>> analytic;
      {
        GradTape t(seed);
        const auto bound = m.bind(t);
        const auto fwd =
            m.forward(t, bound, Tensor({3, cfg.image_size, cfg.image_size}, img), true);
        const LossBreakdown lb = total_loss(t, fwd, gts, w);
        frozen = lb.constants;
        t.backward(lb.total);
        for (const Tensor& leaf : bound) analytic.push_back(t.grad(leaf));
      }
      auto eval_loss = [&] {
        GradTape t(seed);
        const auto bound = m.bind(t);
        const auto fwd =
            m.forward(t, bound, Tensor({3, cfg.image_size, cfg.image_size}, img), true);
        return total_loss(t, fwd, gts, w, &frozen).total.value();
      };
      const double h = 1e-5;
      for (size_t i = 0; i < m.params().size(); ++i) {
        auto& storage = *m.params()[i].values;
        // three probes per tensor keep the battery fast while still touching
        // every layer of the network
        const size_t picks[3] = {0, storage.size() / 2, storage.size() - 1};
        for (size_t j : picks) {
          const double orig = storage[j];
          storage[j] = orig + h;
          const double up = eval_loss();
          storage[j] = orig - h;
          const double down = eval_loss();
          storage[j] = orig;
          max_rel = std::max(max_rel, rel_err(analytic[i][j], (up - down) / (2.0 * h)));
        }
      }
    }
    report("loss gradient matches central differences", max_rel < 1e-3,
           "max relative error " + g17(max_rel));
  }

  const std::string tmp =
      (std::filesystem::temp_directory_path() / "hoidet-check").string();
  std::filesystem::remove_all(tmp);
  make_dirs(tmp);

  {  // dataset generation is a pure function of its seed
    const scenes::SceneProfile profile;
    auto emit = [&](const std::string& name) {
      scenes::Dataset ds;
      ds.dataset_seed = 123;
      ds.split = "train";
      ds.profile = profile;
      ds.records = scenes::generate(123, 40, profile, "train");
      scenes::save_jsonl(ds, tmp + "/" + name);
      std::ifstream in(tmp + "/" + name, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    report("identical seeds give byte-identical datasets", emit("a.jsonl") == emit("b.jsonl"));
  }

  {  // training and inference are pure functions of their seeds
    const model::ModelConfig cfg = check_model_config();
    train::TrainConfig tc;
    tc.steps = 3;
    tc.batch_size = 2;
    const scenes::Dataset ds = [&] {
      scenes::Dataset d;
      d.dataset_seed = 9;
      d.split = "train";
      d.profile = check_profile();
      d.records = scenes::generate(9, 4, d.profile, "train");
      return d;
    }();
    auto run = [&](const std::string& dir) {
      model::HoiModel m(cfg, 17);
      train::AdamWState opt(m);
      const train::FitResult fr = train::fit(m, ds, nullptr, opt, tc, tmp + "/" + dir);
      std::string tail;
      for (const auto& row : fr.rows) tail += g17(row.total) + "\n";
      return tail;
    };
    report("identical seeds give identical training traces", run("t1") == run("t2"));

    const model::HoiModel m(cfg, 17);
    const auto img = scenes::render_scene(ds.records[0], cfg.image_size);
    const auto p1 = run_inference(m, img, 4, 31);
    const auto p2 = run_inference(m, img, 4, 31);
    bool same = p1.size() == p2.size();
    for (size_t i = 0; same && i < p1.size(); ++i)
      same = p1[i].verb_probs == p2[i].verb_probs && p1[i].inter_var == p2[i].inter_var;
    report("identical seeds give identical inference outputs", same);
  }

  std::filesystem::remove_all(tmp);
  std::printf("%s in %.1f s\n", failures == 0 ? "all checks passed" : "CHECKS FAILED",
              seconds_since(t0));
  return failures == 0 ? kExitOk : kExitVerification;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"uncertainty-aware human-object interaction detection on synthetic scenes"};
  app.name("hoidet");
  app.require_subcommand(1);

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen", "generate a synthetic scene dataset");
  gen->add_option("--seed", gen_args.seed, "dataset seed (all randomness derives from it)");
  gen->add_option("--scenes", gen_args.scenes, "number of scenes")->required();
  gen->add_option("--profile", gen_args.profile, "default | no-subtle | noisy")
      ->capture_default_str();
  gen->add_option("--split", gen_args.split, "split label folded into scene seeds")
      ->capture_default_str();
  gen->add_option("--out", gen_args.out, "output JSON-lines path")->required();

  TrainArgs train_args;
  auto* tr = app.add_subcommand("train", "fit a model on a generated dataset");
  tr->add_option("--data", train_args.data, "dataset JSON-lines path")->required();
  tr->add_option("--config", train_args.config,
                 "JSON file with optional \"model\" and \"train\" sections");
  tr->add_option("--out", train_args.out, "output directory")->required();

  EvalArgs eval_args;
  auto* ev = app.add_subcommand("eval", "score a checkpoint on a dataset");
  ev->add_option("--data", eval_args.data, "dataset JSON-lines path")->required();
  ev->add_option("--checkpoint", eval_args.checkpoint, "model checkpoint")->required();
  ev->add_option("--mode", eval_args.mode, "fixed | adaptive")
      ->check(CLI::IsMember({"fixed", "adaptive"}))
      ->capture_default_str();
  ev->add_option("--passes", eval_args.passes, "stochastic probe passes per scene")
      ->capture_default_str();
  ev->add_option("--out", eval_args.out, "output directory")->required();

  AblateArgs ablate_args;
  auto* ab = app.add_subcommand("ablate", "train and compare model variants");
  ab->add_option("--suite", ablate_args.suite, "components | dropout | lambda")
      ->check(CLI::IsMember({"components", "dropout", "lambda"}))
      ->required();
  ab->add_option("--out", ablate_args.out, "output directory")->required();
  ab->add_option("--scenes", ablate_args.scenes, "override training-scene count");
  ab->add_option("--steps", ablate_args.steps, "override training steps");
  ab->add_option("--seeds", ablate_args.seeds, "override seed count (uses 1..n)");

  auto* ck = app.add_subcommand("check", "run the built-in verification battery");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitBadArgs;
  }

  try {
    if (gen->parsed()) {
      run_gen(gen_args);
    } else if (tr->parsed()) {
      run_train(train_args);
    } else if (ev->parsed()) {
      run_eval(eval_args);
    } else if (ab->parsed()) {
      run_ablate(ablate_args);
    } else if (ck->parsed()) {
      return run_check();
    }
    return kExitOk;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitIo;
  } catch (const InvalidConfig& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadArgs;
  } catch (const InvalidProfile& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadArgs;
  } catch (const EmptyTestSet& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitBadArgs;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitVerification;
  }
}

}  // namespace hoidet::cli

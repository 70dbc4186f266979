#include "hoidet/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "hoidet/errors.hpp"
#include "hoidet/rng.hpp"
#include "hoidet/uncertainty.hpp"

namespace hoidet::eval {

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// short form for row labels (0.7 stays "0.7", not its 17-digit expansion)
std::string label_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

// a flattened candidate after ranking and greedy matching
struct Flat {
  int scene = 0, slot = 0, verb = -1, cls = -1;
  double score = 0.0;
  Box hb, ob;
  bool tp = false;
};

// Flatten per-scene candidates, sort by (score desc, scene, slot, verb) and
// greedily consume ground truth. The tie-break makes the ranking a function
// of the candidate set alone, so input order never matters.
std::vector<Flat> rank_and_match(const std::vector<std::vector<ScoredTriplet>>& preds,
                                 const std::vector<std::vector<scenes::GtTriplet>>& gts,
                                 double iou_thresh) {
  if (preds.size() != gts.size())
    throw ShapeMismatch("hoi_map: " + std::to_string(preds.size()) + " prediction scenes vs " +
                        std::to_string(gts.size()) + " ground-truth scenes");

  std::vector<Flat> flats;
  for (size_t s = 0; s < preds.size(); ++s)
    for (const ScoredTriplet& c : preds[s]) {
      if (c.scene != static_cast<int>(s))
        throw ShapeMismatch("hoi_map: candidate carries scene " + std::to_string(c.scene) +
                            " but sits in scene list " + std::to_string(s));
      if (!std::isfinite(c.score)) throw Error("hoi_map: non-finite candidate score");
      flats.push_back({c.scene, c.slot, c.verb, c.object_class, c.score, c.human_box,
                       c.object_box, false});
    }

  std::sort(flats.begin(), flats.end(), [](const Flat& a, const Flat& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.scene != b.scene) return a.scene < b.scene;
    if (a.slot != b.slot) return a.slot < b.slot;
    if (a.verb != b.verb) return a.verb < b.verb;
    return a.cls < b.cls;
  });

  std::vector<std::vector<char>> used(gts.size());
  for (size_t s = 0; s < gts.size(); ++s) used[s].assign(gts[s].size(), 0);

  for (Flat& f : flats) {
    const auto& scene_gts = gts[static_cast<size_t>(f.scene)];
    int best = -1;
    double best_quality = -1.0;
    for (size_t g = 0; g < scene_gts.size(); ++g) {
      const scenes::GtTriplet& gt = scene_gts[g];
      if (used[static_cast<size_t>(f.scene)][g] || gt.verb != f.verb ||
          gt.object_class != f.cls)
        continue;
      const double ih = iou(f.hb, gt.human_box);
      const double io = iou(f.ob, gt.object_box);
      if (ih < iou_thresh || io < iou_thresh) continue;
      const double quality = std::min(ih, io);
      if (quality > best_quality) {
        best_quality = quality;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      used[static_cast<size_t>(f.scene)][static_cast<size_t>(best)] = 1;
      f.tp = true;
    }
  }
  return flats;
}

// all-point interpolation: each true positive contributes the best precision
// achieved at its recall or beyond
double envelope_ap(const std::vector<char>& tp_flags, std::int64_t n_pos) {
  const size_t n = tp_flags.size();
  std::vector<double> prec(n);
  std::int64_t tp = 0;
  for (size_t i = 0; i < n; ++i) {
    tp += tp_flags[i];
    prec[i] = static_cast<double>(tp) / static_cast<double>(i + 1);
  }
  double ap = 0.0, env = 0.0;
  for (size_t i = n; i-- > 0;) {
    env = std::max(env, prec[i]);
    if (tp_flags[i]) ap += env;
  }
  return ap / static_cast<double>(n_pos);
}

double mean_over(const std::map<int, double>& per_verb, const std::vector<int>& verbs) {
  double acc = 0.0;
  int n = 0;
  for (int v : verbs) {
    const auto it = per_verb.find(v);
    if (it == per_verb.end()) continue;
    acc += it->second;
    ++n;
  }
  return n > 0 ? acc / n : 0.0;
}

}  // namespace

// ------------------------------------------------------------- candidates

std::vector<ScoredTriplet> expand_predictions(int scene,
                                              const std::vector<model::HoiPrediction>& slots,
                                              bool adaptive, double min_score) {
  std::vector<ScoredTriplet> out;
  for (size_t k = 0; k < slots.size(); ++k) {
    const model::HoiPrediction& p = slots[k];
    const double person = p.human_probs.at(0);

    // slot object class: argmax over foreground columns
    const int n_cls = static_cast<int>(p.object_probs.size()) - 1;
    int cls = 0;
    for (int c = 1; c < n_cls; ++c)
      if (p.object_probs[static_cast<size_t>(c)] > p.object_probs[static_cast<size_t>(cls)])
        cls = c;
    const double p_obj = p.object_probs[static_cast<size_t>(cls)];

    const std::vector<double> verb_probs =
        adaptive ? adaptive_score(p.verb_probs, p.inter_var) : p.verb_probs;
    const int n_verbs = static_cast<int>(verb_probs.size()) - 1;
    for (int v = 0; v < n_verbs; ++v) {
      const double score = person * p_obj * verb_probs[static_cast<size_t>(v)];
      if (score < min_score) continue;
      out.push_back({scene, static_cast<int>(k), p.human_box, p.object_box, cls, v, score});
    }
  }
  return out;
}

std::vector<int> rare_verbs(const scenes::SceneProfile& profile) {
  const int n = static_cast<int>(profile.verb_freq.size());
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double fa = profile.verb_freq[static_cast<size_t>(a)];
    const double fb = profile.verb_freq[static_cast<size_t>(b)];
    if (fa != fb) return fa < fb;
    return a < b;
  });
  order.resize(static_cast<size_t>(n / 3));
  std::sort(order.begin(), order.end());
  return order;
}

// ------------------------------------------------------------------- mAP

EvalReport hoi_map(const std::vector<std::vector<ScoredTriplet>>& preds,
                   const std::vector<std::vector<scenes::GtTriplet>>& gts, double iou_thresh,
                   const std::vector<int>& rare) {
  std::int64_t total_gt = 0;
  for (const auto& scene : gts)
    for (const scenes::GtTriplet& gt : scene) {
      if (gt.verb < 0 || gt.verb >= scenes::kNumVerbs)
        throw Error("hoi_map: ground-truth verb " + std::to_string(gt.verb) +
                    " outside the taxonomy");
      ++total_gt;
    }
  if (gts.empty() || total_gt == 0)
    throw EmptyTestSet("hoi_map: no ground-truth triplets to evaluate against");

  const std::vector<Flat> flats = rank_and_match(preds, gts, iou_thresh);

  EvalReport r;
  for (const auto& scene : gts)
    for (const scenes::GtTriplet& gt : scene) r.per_verb_gt[gt.verb] += 1;

  // which scenes qualify for the Known-Object restriction, per verb
  std::map<int, std::vector<char>> ko_scene;
  for (const auto& [verb, count] : r.per_verb_gt) {
    std::vector<char> q(gts.size(), 0);
    const std::vector<int>& admissible = scenes::admissible_objects(verb);
    for (size_t s = 0; s < gts.size(); ++s)
      for (const scenes::GtTriplet& gt : gts[s])
        if (std::find(admissible.begin(), admissible.end(), gt.object_class) !=
            admissible.end()) {
          q[s] = 1;
          break;
        }
    ko_scene[verb] = std::move(q);
  }

  double ko_acc = 0.0;
  int ko_n = 0;
  for (const auto& [verb, n_pos] : r.per_verb_gt) {
    std::vector<char> tps, ko_tps;
    std::vector<std::pair<double, double>> pr;
    std::int64_t tp = 0;
    const std::vector<char>& qualifies = ko_scene[verb];
    for (const Flat& f : flats) {
      if (f.verb != verb) continue;
      tps.push_back(f.tp ? 1 : 0);
      tp += f.tp;
      pr.emplace_back(static_cast<double>(tp) / static_cast<double>(n_pos),
                      static_cast<double>(tp) / static_cast<double>(tps.size()));
      if (qualifies[static_cast<size_t>(f.scene)]) ko_tps.push_back(f.tp ? 1 : 0);
    }
    r.per_verb_ap[verb] = envelope_ap(tps, n_pos);
    r.per_verb_pr[verb] = std::move(pr);

    std::int64_t ko_pos = 0;
    for (size_t s = 0; s < gts.size(); ++s)
      if (qualifies[s])
        for (const scenes::GtTriplet& gt : gts[s]) ko_pos += gt.verb == verb;
    if (ko_pos > 0) {
      ko_acc += envelope_ap(ko_tps, ko_pos);
      ++ko_n;
    }
  }

  double acc = 0.0;
  for (const auto& [verb, ap] : r.per_verb_ap) acc += ap;
  r.map_full = acc / static_cast<double>(r.per_verb_ap.size());
  r.map_known_object = ko_n > 0 ? ko_acc / ko_n : 0.0;

  std::vector<int> common;
  for (const auto& [verb, ap] : r.per_verb_ap)
    if (std::find(rare.begin(), rare.end(), verb) == rare.end()) common.push_back(verb);
  r.map_rare = mean_over(r.per_verb_ap, rare);
  r.map_common = mean_over(r.per_verb_ap, common);

  // calibration: same true-positive labels, binned by score
  constexpr int kBins = 10;
  std::vector<std::int64_t> count(kBins, 0), hits(kBins, 0);
  for (const Flat& f : flats) {
    const int b = std::clamp(static_cast<int>(f.score * kBins), 0, kBins - 1);
    count[static_cast<size_t>(b)] += 1;
    hits[static_cast<size_t>(b)] += f.tp;
  }
  for (int b = 0; b < kBins; ++b) {
    CalibrationBin bin;
    bin.lo = static_cast<double>(b) / kBins;
    bin.hi = static_cast<double>(b + 1) / kBins;
    bin.count = count[static_cast<size_t>(b)];
    bin.precision = bin.count > 0 ? static_cast<double>(hits[static_cast<size_t>(b)]) /
                                        static_cast<double>(bin.count)
                                  : 0.0;
    r.calibration_curve.push_back(bin);
  }
  return r;
}

// -------------------------------------------------------------- inference

std::vector<std::vector<model::HoiPrediction>> infer_dataset(const model::HoiModel& m,
                                                             const scenes::Dataset& ds,
                                                             int mc_passes,
                                                             std::uint64_t probe_seed) {
  const auto n = static_cast<std::int64_t>(ds.records.size());
  std::vector<std::vector<model::HoiPrediction>> out(static_cast<size_t>(n));
  const int s = m.config().image_size;
  // scenes are independent and each probe is seeded from its own record, so
  // thread order cannot leak into the results
  std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const scenes::SceneRecord& rec = ds.records[static_cast<size_t>(i)];
      out[static_cast<size_t>(i)] = run_inference(m, scenes::render_scene(rec, s), mc_passes,
                                                  mix_seed(probe_seed, rec.seed));
    } catch (...) {
#pragma omp critical
      if (failure == nullptr) failure = std::current_exception();
    }
  }
  if (failure != nullptr) std::rethrow_exception(failure);
  return out;
}

std::vector<std::vector<scenes::GtTriplet>> dataset_gts(const scenes::Dataset& ds) {
  std::vector<std::vector<scenes::GtTriplet>> gts;
  gts.reserve(ds.records.size());
  for (const scenes::SceneRecord& rec : ds.records) gts.push_back(scenes::gt_triplets(rec));
  return gts;
}

FixedBaseline best_fixed_threshold(const std::vector<std::vector<model::HoiPrediction>>& slots,
                                   const std::vector<std::vector<scenes::GtTriplet>>& gts,
                                   double iou_thresh, const std::vector<int>& rare) {
  FixedBaseline best;
  bool have = false;
  for (double tau : kThresholdGrid) {
    std::vector<std::vector<ScoredTriplet>> preds;
    preds.reserve(slots.size());
    for (size_t s = 0; s < slots.size(); ++s)
      preds.push_back(expand_predictions(static_cast<int>(s), slots[s], false, tau));
    EvalReport r = hoi_map(preds, gts, iou_thresh, rare);
    if (!have || r.map_full > best.report.map_full) {
      best.best_threshold = tau;
      best.report = std::move(r);
      have = true;
    }
  }
  return best;
}

SubtleRecall subtle_recall(const std::vector<std::vector<model::HoiPrediction>>& slots,
                           const std::vector<std::vector<scenes::GtTriplet>>& gts,
                           double iou_thresh) {
  auto candidates = [&](bool adaptive) {
    std::vector<std::vector<ScoredTriplet>> preds;
    preds.reserve(slots.size());
    for (size_t s = 0; s < slots.size(); ++s)
      preds.push_back(expand_predictions(static_cast<int>(s), slots[s], adaptive));
    return preds;
  };
  const std::vector<Flat> raw = rank_and_match(candidates(false), gts, iou_thresh);
  const std::vector<Flat> cal = rank_and_match(candidates(true), gts, iou_thresh);

  // at each grid threshold the raw ranking keeps a prefix; greedy decisions
  // in a prefix are unaffected by dropping the tail, so flags carry over
  SubtleRecall out;
  bool have = false;
  for (double tau : kThresholdGrid) {
    std::int64_t kept = 0, subtle = 0;
    for (const Flat& f : raw) {
      if (f.score < tau) break;
      ++kept;
      subtle += f.tp && scenes::verb_is_subtle(f.verb);
    }
    if (!have || subtle > out.fixed_tp) {
      out.threshold = tau;
      out.kept = kept;
      out.fixed_tp = subtle;
      have = true;
    }
  }
  std::int64_t adaptive = 0;
  for (std::int64_t i = 0; i < out.kept && i < static_cast<std::int64_t>(cal.size()); ++i) {
    const Flat& f = cal[static_cast<size_t>(i)];
    adaptive += f.tp && scenes::verb_is_subtle(f.verb);
  }
  out.adaptive_tp = adaptive;
  return out;
}

// --------------------------------------------------------------- ablation

AblationRow evaluate_variant(const std::string& label, const model::HoiModel& m,
                             const scenes::Dataset& test, bool adaptive_primary, int mc_passes,
                             std::uint64_t probe_seed) {
  const auto slots = infer_dataset(m, test, mc_passes, probe_seed);
  const auto gts = dataset_gts(test);
  const std::vector<int> rare = rare_verbs(test.profile);

  const FixedBaseline fb = best_fixed_threshold(slots, gts, 0.5, rare);
  std::vector<std::vector<ScoredTriplet>> adaptive;
  adaptive.reserve(slots.size());
  for (size_t s = 0; s < slots.size(); ++s)
    adaptive.push_back(expand_predictions(static_cast<int>(s), slots[s], true));
  const EvalReport ar = hoi_map(adaptive, gts, 0.5, rare);

  AblationRow row;
  row.label = label;
  row.map_fixed = fb.report.map_full;
  row.best_threshold = fb.best_threshold;
  row.map_adaptive = ar.map_full;
  const EvalReport& primary = adaptive_primary ? ar : fb.report;
  row.map_primary = primary.map_full;
  row.map_rare = primary.map_rare;
  row.map_common = primary.map_common;
  row.provenance = nlohmann::ordered_json{{"adaptive_primary", adaptive_primary},
                                          {"mc_passes", mc_passes},
                                          {"probe_seed", probe_seed}};
  return row;
}

namespace {

// one table row before seed averaging: the full train-time configuration
struct VariantPlan {
  std::string label;
  bool adaptive_primary = true;
  bool box_u = true, inter_u = true;
  double lambda_o = 1.0, lambda_a = 1.0;
  double rate = 0.5;
  int depth = 1;
  bool aux = false;
};

// checkpoint directory name derived from the full configuration (seed set
// separately), so identical variants reuse each other's runs across suites
std::string variant_slug(const model::ModelConfig& mc, train::TrainConfig tc) {
  tc.seed = 0;
  const std::string blob = mc.to_json().dump() + "|" + tc.to_json().dump();
  char buf[24];
  std::snprintf(buf, sizeof(buf), "v-%016llx",
                static_cast<unsigned long long>(hash_string(blob)));
  return buf;
}

model::HoiModel train_or_reuse(const model::ModelConfig& mc, const train::TrainConfig& tc,
                               const scenes::Dataset& train_set, const std::string& dir) {
  const std::string final_path = dir + "/" + train::checkpoint_name(tc.steps);
  if (std::filesystem::exists(final_path)) {
    train::TrainState st = train::load_train_checkpoint(final_path);
    if (st.cfg.to_json() == tc.to_json() && st.model.config().to_json() == mc.to_json())
      return std::move(st.model);
  }
  model::HoiModel m(mc, tc.seed);
  train::AdamWState opt(m);
  train::fit(m, train_set, nullptr, opt, tc, dir);
  return m;
}

AblationRow run_plan(const AblationContext& ctx, const VariantPlan& p) {
  if (ctx.train_set == nullptr || ctx.test_set == nullptr)
    throw InvalidConfig("ablation context needs train and test sets");
  if (ctx.seeds.empty()) throw InvalidConfig("ablation context needs at least one seed");

  model::ModelConfig mc = ctx.model;
  mc.dropout_rate = p.rate;
  mc.verb_head_depth = p.depth;
  mc.aux_verb_head = p.aux;
  train::TrainConfig tc = ctx.train;
  tc.lambda_o = p.lambda_o;
  tc.lambda_a = p.lambda_a;
  tc.box_uncertainty = p.box_u;
  tc.inter_uncertainty = p.inter_u;
  tc.dropout_rate = p.rate;

  const std::string slug = variant_slug(mc, tc);
  AblationRow avg;
  avg.label = p.label;
  nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
  for (std::uint64_t seed : ctx.seeds) {
    tc.seed = seed;
    const std::string dir = ctx.work_dir + "/" + slug + "-s" + std::to_string(seed);
    const model::HoiModel m = train_or_reuse(mc, tc, *ctx.train_set, dir);
    const AblationRow one = evaluate_variant(p.label, m, *ctx.test_set, p.adaptive_primary,
                                             ctx.mc_passes, mix_seed(ctx.probe_seed, seed));
    avg.map_fixed += one.map_fixed;
    avg.best_threshold += one.best_threshold;
    avg.map_adaptive += one.map_adaptive;
    avg.map_primary += one.map_primary;
    avg.map_rare += one.map_rare;
    avg.map_common += one.map_common;
    per_seed.push_back(nlohmann::ordered_json{{"seed", seed},
                                              {"map_fixed", one.map_fixed},
                                              {"best_threshold", one.best_threshold},
                                              {"map_adaptive", one.map_adaptive},
                                              {"map_primary", one.map_primary},
                                              {"map_rare", one.map_rare},
                                              {"map_common", one.map_common}});
  }
  const double inv = 1.0 / static_cast<double>(ctx.seeds.size());
  avg.map_fixed *= inv;
  avg.best_threshold *= inv;
  avg.map_adaptive *= inv;
  avg.map_primary *= inv;
  avg.map_rare *= inv;
  avg.map_common *= inv;
  avg.provenance = nlohmann::ordered_json{{"seeds", ctx.seeds},
                                          {"lambda_o", p.lambda_o},
                                          {"lambda_a", p.lambda_a},
                                          {"dropout_rate", p.rate},
                                          {"verb_head_depth", p.depth},
                                          {"aux_verb_head", p.aux},
                                          {"box_uncertainty", p.box_u},
                                          {"inter_uncertainty", p.inter_u},
                                          {"adaptive_primary", p.adaptive_primary},
                                          {"mc_passes", ctx.mc_passes},
                                          {"variant", slug},
                                          {"per_seed", per_seed}};
  return avg;
}

}  // namespace

std::vector<AblationRow> threshold_ablation(const AblationContext& ctx) {
  const double rate = ctx.model.dropout_rate;
  const int depth = ctx.model.verb_head_depth;
  std::vector<VariantPlan> plans{
      {"fixed-threshold", false, false, false, ctx.train.lambda_o, ctx.train.lambda_a, rate,
       depth, false},
      {"+localization", false, true, false, ctx.train.lambda_o, ctx.train.lambda_a, rate, depth,
       false},
      {"+interaction", true, false, true, ctx.train.lambda_o, ctx.train.lambda_a, rate, depth,
       false},
      {"+both", true, true, true, ctx.train.lambda_o, ctx.train.lambda_a, rate, depth, false},
  };
  std::vector<AblationRow> rows;
  rows.reserve(plans.size());
  for (const VariantPlan& p : plans) rows.push_back(run_plan(ctx, p));
  return rows;
}

std::vector<AblationRow> dropout_ablation(const AblationContext& ctx) {
  std::vector<VariantPlan> plans;
  for (double rate : {0.5, 0.7, 0.9}) {
    VariantPlan p;
    p.label = "rate=" + label_num(rate);
    p.rate = rate;
    p.lambda_o = ctx.train.lambda_o;
    p.lambda_a = ctx.train.lambda_a;
    plans.push_back(p);
  }
  {
    VariantPlan p;
    p.label = "depth=2";
    p.rate = ctx.model.dropout_rate;
    p.depth = 2;
    p.lambda_o = ctx.train.lambda_o;
    p.lambda_a = ctx.train.lambda_a;
    plans.push_back(p);
  }
  {
    VariantPlan p;
    p.label = "aux-classifier";
    p.rate = ctx.model.dropout_rate;
    p.aux = true;
    p.lambda_o = ctx.train.lambda_o;
    p.lambda_a = ctx.train.lambda_a;
    plans.push_back(p);
  }
  std::vector<AblationRow> rows;
  rows.reserve(plans.size());
  for (const VariantPlan& p : plans) rows.push_back(run_plan(ctx, p));
  return rows;
}

std::vector<AblationRow> lambda_sweep(const AblationContext& ctx,
                                      const std::vector<double>& grid) {
  std::vector<VariantPlan> plans;
  auto add = [&](double lo, double la, const std::string& label) {
    VariantPlan p;
    p.label = label;
    p.lambda_o = lo;
    p.lambda_a = la;
    p.rate = ctx.model.dropout_rate;
    p.depth = ctx.model.verb_head_depth;
    plans.push_back(p);
  };
  bool unity_done = false;
  for (double l : grid) {
    if (l == 1.0) {
      if (!unity_done) add(1.0, 1.0, "lambda_o=1 lambda_a=1");
      unity_done = true;
      continue;
    }
    add(l, 1.0, "lambda_o=" + label_num(l));
  }
  for (double l : grid) {
    if (l == 1.0) continue;
    add(1.0, l, "lambda_a=" + label_num(l));
  }
  std::vector<AblationRow> rows;
  rows.reserve(plans.size());
  for (const VariantPlan& p : plans) rows.push_back(run_plan(ctx, p));
  return rows;
}

// ---------------------------------------------------------------- outputs

nlohmann::ordered_json AblationRow::to_json() const {
  return nlohmann::ordered_json{{"label", label},
                                {"map_fixed", map_fixed},
                                {"best_threshold", best_threshold},
                                {"map_adaptive", map_adaptive},
                                {"map_primary", map_primary},
                                {"map_rare", map_rare},
                                {"map_common", map_common},
                                {"provenance", provenance}};
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json per_verb = nlohmann::ordered_json::array();
  for (const auto& [verb, ap] : per_verb_ap) {
    nlohmann::ordered_json pr = nlohmann::ordered_json::array();
    const auto it = per_verb_pr.find(verb);
    if (it != per_verb_pr.end())
      for (const auto& [recall, precision] : it->second)
        pr.push_back(nlohmann::ordered_json::array({recall, precision}));
    per_verb.push_back(nlohmann::ordered_json{{"verb", verb},
                                              {"name", scenes::kVerbNames[static_cast<size_t>(verb)]},
                                              {"gt", per_verb_gt.at(verb)},
                                              {"ap", ap},
                                              {"pr", std::move(pr)}});
  }
  nlohmann::ordered_json calib = nlohmann::ordered_json::array();
  for (const CalibrationBin& b : calibration_curve)
    calib.push_back(nlohmann::ordered_json{
        {"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"precision", b.precision}});
  nlohmann::ordered_json ablation = nlohmann::ordered_json::array();
  for (const AblationRow& row : ablation_rows) ablation.push_back(row.to_json());
  return nlohmann::ordered_json{{"map_full", map_full},
                                {"map_rare", map_rare},
                                {"map_common", map_common},
                                {"map_known_object", map_known_object},
                                {"per_verb", std::move(per_verb)},
                                {"calibration", std::move(calib)},
                                {"ablation", std::move(ablation)}};
}

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                    "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

// plot frame: unit square mapped into a margined canvas, y up
struct Frame {
  double w = 640, h = 480, ml = 56, mr = 168, mt = 32, mb = 48;
  double px(double x) const { return ml + x * (w - ml - mr); }
  double py(double y) const { return h - mb - y * (h - mt - mb); }
};

void svg_open(std::ofstream& out, const Frame& f, const std::string& title) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.w << "\" height=\"" << f.h
      << "\" viewBox=\"0 0 " << f.w << " " << f.h << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << f.px(0.5) << "\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">"
      << title << "</text>\n";
  // axes with quarter ticks
  out << "<g stroke=\"#444\" stroke-width=\"1\" font-family=\"sans-serif\" font-size=\"10\">\n";
  out << "<line x1=\"" << f.px(0) << "\" y1=\"" << f.py(0) << "\" x2=\"" << f.px(1) << "\" y2=\""
      << f.py(0) << "\"/>\n";
  out << "<line x1=\"" << f.px(0) << "\" y1=\"" << f.py(0) << "\" x2=\"" << f.px(0) << "\" y2=\""
      << f.py(1) << "\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double t = i / 4.0;
    out << "<line x1=\"" << f.px(t) << "\" y1=\"" << f.py(0) << "\" x2=\"" << f.px(t) << "\" y2=\""
        << f.py(0) + 4 << "\"/>\n"
        << "<text x=\"" << f.px(t) << "\" y=\"" << f.py(0) + 16
        << "\" text-anchor=\"middle\" stroke=\"none\" fill=\"#444\">" << t << "</text>\n";
    out << "<line x1=\"" << f.px(0) - 4 << "\" y1=\"" << f.py(t) << "\" x2=\"" << f.px(0)
        << "\" y2=\"" << f.py(t) << "\"/>\n"
        << "<text x=\"" << f.px(0) - 8 << "\" y=\"" << f.py(t) + 3
        << "\" text-anchor=\"end\" stroke=\"none\" fill=\"#444\">" << t << "</text>\n";
  }
  out << "</g>\n";
}

}  // namespace

void write_pr_svg(const EvalReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  Frame f;
  svg_open(out, f, "precision vs recall per verb");
  int color = 0;
  for (const auto& [verb, pr] : r.per_verb_pr) {
    const char* c = kPalette[static_cast<size_t>(color % 8)];
    out << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
    out << f.px(0) << "," << f.py(pr.empty() ? 0.0 : pr.front().second) << " ";
    for (const auto& [recall, precision] : pr) out << f.px(recall) << "," << f.py(precision) << " ";
    out << "\"/>\n";
    out << "<text x=\"" << f.w - f.mr + 12 << "\" y=\"" << f.mt + 16 + 16 * color
        << "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"" << c << "\">"
        << scenes::kVerbNames[static_cast<size_t>(verb)] << "  AP="
        << g17(r.per_verb_ap.at(verb)).substr(0, 6)
        << "</text>\n";
    ++color;
  }
  out << "<text x=\"" << f.px(0.5) << "\" y=\"" << f.h - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">recall</text>\n";
  out << "</svg>\n";
  if (!out) throw IoError("write failed: " + path);
}

void write_calibration_svg(const EvalReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  Frame f;
  f.mr = 56;
  svg_open(out, f, "empirical precision per score bin");
  out << "<line x1=\"" << f.px(0) << "\" y1=\"" << f.py(0) << "\" x2=\"" << f.px(1) << "\" y2=\""
      << f.py(1) << "\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
  for (const CalibrationBin& b : r.calibration_curve) {
    if (b.count == 0) continue;
    const double x0 = f.px(b.lo) + 1, x1 = f.px(b.hi) - 1;
    out << "<rect x=\"" << x0 << "\" y=\"" << f.py(b.precision) << "\" width=\"" << x1 - x0
        << "\" height=\"" << f.py(0) - f.py(b.precision)
        << "\" fill=\"#1f77b4\" fill-opacity=\"0.7\"/>\n";
    out << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << f.py(b.precision) - 4
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"9\" fill=\"#333\">"
        << b.count << "</text>\n";
  }
  out << "<text x=\"" << f.px(0.5) << "\" y=\"" << f.h - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">score</text>\n";
  out << "</svg>\n";
  if (!out) throw IoError("write failed: " + path);
}

std::vector<std::string> write_report_files(const EvalReport& r, const std::string& prefix) {
  std::vector<std::string> written;
  auto emit = [&](const std::string& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << body;
    if (!out) throw IoError("write failed: " + path);
    written.push_back(path);
  };

  emit(prefix + ".json", r.to_json().dump(2) + "\n");

  std::string pv = "verb,name,gt,ap\n";
  for (const auto& [verb, ap] : r.per_verb_ap)
    pv += std::to_string(verb) + "," + scenes::kVerbNames[static_cast<size_t>(verb)] + "," +
          std::to_string(r.per_verb_gt.at(verb)) + "," + g17(ap) + "\n";
  emit(prefix + "_per_verb.csv", pv);

  std::string cal = "lo,hi,count,precision\n";
  for (const CalibrationBin& b : r.calibration_curve)
    cal += g17(b.lo) + "," + g17(b.hi) + "," + std::to_string(b.count) + "," + g17(b.precision) +
           "\n";
  emit(prefix + "_calibration.csv", cal);

  if (!r.ablation_rows.empty()) {
    std::string ab = "label,map_fixed,best_threshold,map_adaptive,map_primary,map_rare,map_common\n";
    for (const AblationRow& row : r.ablation_rows)
      ab += row.label + "," + g17(row.map_fixed) + "," + g17(row.best_threshold) + "," +
            g17(row.map_adaptive) + "," + g17(row.map_primary) + "," + g17(row.map_rare) + "," +
            g17(row.map_common) + "\n";
    emit(prefix + "_ablation.csv", ab);
  }

  write_pr_svg(r, prefix + "_pr.svg");
  written.push_back(prefix + "_pr.svg");
  write_calibration_svg(r, prefix + "_calibration.svg");
  written.push_back(prefix + "_calibration.svg");
  return written;
}

}  // namespace hoidet::eval

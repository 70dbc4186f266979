#pragma once

// Detection metrics and the ablation harness. Per-verb average precision is
// computed by greedy matching in descending score order (ties broken by
// scene index, then slot, then verb, so any input permutation yields the
// same report) followed by all-point precision-envelope integration. The
// report carries the full/rare/common splits, a Known-Object restriction,
// and a score-calibration curve; the ablation ops train model variants and
// tabulate them into labeled rows.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hoidet/geometry.hpp"
#include "hoidet/model.hpp"
#include "hoidet/scenegen.hpp"
#include "hoidet/trainer.hpp"
#include "json.hpp"

namespace hoidet::eval {

// One candidate <human, verb, object> detection with its ranking score.
struct ScoredTriplet {
  int scene = 0;  // index into the evaluation scene list
  int slot = 0;   // prediction slot the candidate came from
  Box human_box, object_box;
  int object_class = -1;
  int verb = -1;
  double score = 0.0;
};

// Expand decoded slots into candidates: each slot contributes one candidate
// per foreground verb, scored person-prob * object-class-prob * verb-prob
// (object class by slot argmax). With `adaptive` the verb vector is first
// recalibrated by exp(-inter_var); min_score drops candidates below the cut
// (the fixed-threshold baseline).
std::vector<ScoredTriplet> expand_predictions(int scene,
                                              const std::vector<model::HoiPrediction>& slots,
                                              bool adaptive, double min_score = 0.0);

struct CalibrationBin {
  double lo = 0.0, hi = 0.0;  // score interval [lo, hi)
  std::int64_t count = 0;     // candidates landing in the bin
  double precision = 0.0;     // true-positive fraction among them
};

// One labeled table row; metrics may be single-run values or seed averages
// (provenance records which).
struct AblationRow {
  std::string label;
  nlohmann::ordered_json provenance;  // seeds, lambdas, rate, depth, aux, ...
  double map_fixed = 0.0;       // best full mAP over the threshold grid
  double best_threshold = 0.0;  // the grid value that achieved it
  double map_adaptive = 0.0;    // calibrated ranking, no threshold
  double map_primary = 0.0;     // the mode this variant is defined to use
  double map_rare = 0.0, map_common = 0.0;  // at the primary mode

  nlohmann::ordered_json to_json() const;
};

struct EvalReport {
  std::map<int, double> per_verb_ap;        // only verbs with >= 1 gt instance
  std::map<int, std::int64_t> per_verb_gt;  // positives per verb (all verbs seen)
  double map_full = 0.0;          // mean of per_verb_ap values
  double map_rare = 0.0;          // mean over the rare split
  double map_common = 0.0;        // mean over the remaining verbs
  double map_known_object = 0.0;  // per-verb AP restricted to scenes holding
                                  // an admissible object for that verb
  std::vector<CalibrationBin> calibration_curve;
  std::map<int, std::vector<std::pair<double, double>>> per_verb_pr;  // (recall, precision)
  std::vector<AblationRow> ablation_rows;

  nlohmann::ordered_json to_json() const;
};

// Verbs in the bottom frequency tercile of a generator profile (lowest
// floor(V/3) frequencies, ties broken by verb id).
std::vector<int> rare_verbs(const scenes::SceneProfile& profile);

// Per-verb AP over per-scene candidate lists. A candidate is a true positive
// iff both boxes reach `iou_thresh` against an unused ground-truth triplet
// of the same verb and object class; among eligible triplets the one with
// the largest min(human IoU, object IoU) is consumed. Throws EmptyTestSet
// when no scene carries any ground truth.
EvalReport hoi_map(const std::vector<std::vector<ScoredTriplet>>& preds,
                   const std::vector<std::vector<scenes::GtTriplet>>& gts,
                   double iou_thresh = 0.5,
                   const std::vector<int>& rare = rare_verbs(scenes::SceneProfile()));

// ------------------------------------------------------------- inference

// Full inference over a dataset: deterministic forward plus the stochastic
// divergence probe per scene (probe tape seeded from (probe_seed, scene
// seed), so results do not depend on scene order).
std::vector<std::vector<model::HoiPrediction>> infer_dataset(const model::HoiModel& m,
                                                             const scenes::Dataset& ds,
                                                             int mc_passes,
                                                             std::uint64_t probe_seed);

std::vector<std::vector<scenes::GtTriplet>> dataset_gts(const scenes::Dataset& ds);

// the declared fixed-threshold grid the baseline gets to pick its best from
inline constexpr double kThresholdGrid[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

struct FixedBaseline {
  double best_threshold = 0.0;
  EvalReport report;  // the report at that threshold
};

// Evaluate raw-score candidates at every grid threshold and keep the best
// full mAP (ties: lowest threshold).
FixedBaseline best_fixed_threshold(const std::vector<std::vector<model::HoiPrediction>>& slots,
                                   const std::vector<std::vector<scenes::GtTriplet>>& gts,
                                   double iou_thresh = 0.5,
                                   const std::vector<int>& rare = rare_verbs(scenes::SceneProfile()));

// How many subtle-verb ground truths each scoring mode recovers at equal
// prediction count: the raw-score baseline picks the grid threshold keeping
// the most subtle true positives, and the calibrated ranking is cut to the
// same number of candidates.
struct SubtleRecall {
  double threshold = 0.0;       // grid value the baseline chose
  std::int64_t kept = 0;        // candidates retained at that threshold
  std::int64_t fixed_tp = 0;    // subtle-verb true positives, raw scores
  std::int64_t adaptive_tp = 0; // same count for the calibrated top-`kept`
};
SubtleRecall subtle_recall(const std::vector<std::vector<model::HoiPrediction>>& slots,
                           const std::vector<std::vector<scenes::GtTriplet>>& gts,
                           double iou_thresh = 0.5);

// --------------------------------------------------------------- ablation

// Evaluate one trained model on a test set under both scoring modes and fold
// the results into a row (map_primary picks the mode the variant stands for).
AblationRow evaluate_variant(const std::string& label, const model::HoiModel& m,
                             const scenes::Dataset& test, bool adaptive_primary, int mc_passes,
                             std::uint64_t probe_seed);

// Shared input for the training-driven suites: base configs, datasets, the
// seeds each row is averaged over, and a working directory for checkpoints.
// Finished runs found under work_dir with matching configs are reused
// instead of retrained, so repeated invocations are idempotent.
struct AblationContext {
  model::ModelConfig model;
  train::TrainConfig train;
  const scenes::Dataset* train_set = nullptr;
  const scenes::Dataset* test_set = nullptr;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  int mc_passes = 8;
  std::uint64_t probe_seed = 1234;
  std::string work_dir;
};

// Component table: rows fixed-threshold / +localization / +interaction /
// +both, each trained with the matching uncertainty terms and read out in
// its own inference mode, averaged over ctx.seeds.
std::vector<AblationRow> threshold_ablation(const AblationContext& ctx);

// Robustness table: dropout rate {0.5, 0.7, 0.9} at depth 1, verb-head
// depth 2, and the auxiliary-classifier variant.
std::vector<AblationRow> dropout_ablation(const AblationContext& ctx);

// Sensitivity table: one row per grid value for lambda_o (lambda_a = 1) and
// for lambda_a (lambda_o = 1); the (1,1) point is emitted once.
std::vector<AblationRow> lambda_sweep(const AblationContext& ctx,
                                      const std::vector<double>& grid);

// ---------------------------------------------------------------- outputs

void write_pr_svg(const EvalReport& r, const std::string& path);
void write_calibration_svg(const EvalReport& r, const std::string& path);
// <prefix>.json plus per-verb/calibration(/ablation) CSV tables and both SVGs
std::vector<std::string> write_report_files(const EvalReport& r, const std::string& prefix);

}  // namespace hoidet::eval

#pragma once

// Training objective and uncertainty machinery. Three loss families feed one
// total: (1) localization — classification cross-entropy plus L1/GIoU box
// regression on Hungarian-matched slots; (2) an IoU-weighted Gaussian
// negative log-likelihood that lets the box heads report per-edge variance;
// (3) a verb loss where the divergence between the deterministic and a
// stochastic (dropout or aux-head) pass scales the cross-entropy and is
// itself penalized. At inference the same divergence, averaged over repeated
// stochastic passes, becomes a per-slot uncertainty that rescales confidence.
//
// Scalar overloads exist alongside the tape forms so tests can recompute
// every quantity independently of the autodiff graph.

#include <cstdint>
#include <vector>

#include "hoidet/geometry.hpp"
#include "hoidet/matching.hpp"
#include "hoidet/model.hpp"
#include "hoidet/scenegen.hpp"
#include "hoidet/tensor.hpp"

namespace hoidet {

// ------------------------------------------------------------ scalar forms

// Σ over the four edges of iou_weight · [½·log(2π·σ²) + (target−μ)²/(2σ²)].
// iou_weight acts as a fixed scale. Throws NonPositiveVariance.
double gaussian_box_nll(const GaussianBox& g, const BoxOffsets& target, double iou_weight);

// Σ_k y_k·log(y_k/ŷ_k), log arguments clamped to ≥ 1e-12, floored at zero.
double interaction_kl(const std::vector<double>& y, const std::vector<double>& y_hat);

struct InteractionPair {
  std::vector<double> y;      // deterministic-pass distribution
  std::vector<double> y_hat;  // stochastic-branch distribution
  double d_kl = 0.0;
};
InteractionPair make_interaction_pair(std::vector<double> y, std::vector<double> y_hat);

// mean over slots of exp(−d_kl)·ce + d_kl
double interaction_loss(const std::vector<double>& ce, const std::vector<double>& d_kl);

// Confidence calibration: every verb probability scaled by exp(−inter_var).
// Scaling is uniform per slot, so the argmax verb never changes.
std::vector<double> adaptive_score(const std::vector<double>& verb_probs, double inter_var);

// -------------------------------------------------------------- tape forms

// mu_row/var_row are [1,4] slices of a forward result.
Tensor gaussian_box_nll(GradTape& t, const Tensor& mu_row, const Tensor& var_row,
                        const BoxOffsets& target, double iou_weight);

// Verb loss over all slots. The deterministic pass enters as a constant
// reference distribution (no gradient); the stochastic branch carries the
// gradient. With divergence_weighted off this is plain mean cross-entropy of
// the branch. aux_extra_ce additionally trains the deterministic head with
// its own cross-entropy (used when the branch is a separate aux head, which
// would otherwise leave the primary head unsupervised). `ref_dist`, when
// given, replaces the reference distribution that would be derived from the
// deterministic logits (row-major [slots, verbs+1]).
Tensor interaction_loss(GradTape& t, const Tensor& verb_logits_det,
                        const Tensor& verb_logits_branch, const std::vector<int>& slot_targets,
                        bool divergence_weighted, bool aux_extra_ce,
                        const std::vector<double>* ref_dist = nullptr);

struct LossWeights {
  double lambda_o = 1.0;  // Gaussian box term weight
  double lambda_a = 1.0;  // verb term weight
  double w_l1 = 5.0;      // matched-box L1 weight
  double w_giou = 2.0;    // matched-box (1−GIoU) weight
  bool box_uncertainty = true;    // enable the Gaussian box term
  bool inter_uncertainty = true;  // enable divergence weighting in the verb loss
  MatchWeights match{};           // Hungarian cost weights
};

// Everything the loss deliberately treats as data rather than as part of the
// differentiated graph: the matching, the offset-space regression targets
// (anchored at the predicted reference points), the IoU scales on the
// likelihood term, and the reference verb distribution in the divergence.
// A finite-difference probe of the loss must re-inject these so it
// differentiates the same function the analytic gradient describes.
struct LossConstants {
  Assignment assignment;
  std::vector<BoxOffsets> tgt_h, tgt_o;  // aligned with assignment.pairs
  std::vector<double> iou_h, iou_o;      // aligned with assignment.pairs
  std::vector<double> ref_dist;          // row-major [n_queries, n_verbs+1]
};

struct LossBreakdown {
  Tensor l_loc_h, l_loc_o, l_box, l_inter, total;  // scalar tensors on the step tape
  double lambda_o = 1.0, lambda_a = 1.0;
  Assignment assignment;    // slot -> ground-truth pairing used for the targets
  LossConstants constants;  // the detached quantities the terms were built on
};

// Match prediction slots to ground truth, then assemble all four components.
// total = l_loc_h + l_loc_o + lambda_o·l_box + lambda_a·l_inter. With
// `frozen` the detached constants are taken as given instead of recomputed
// from the forward pass (same fwd shapes and gts as the capturing call).
LossBreakdown total_loss(GradTape& t, const model::ForwardResult& fwd,
                         const std::vector<scenes::GtTriplet>& gts, const LossWeights& w,
                         const LossConstants* frozen = nullptr);

// --------------------------------------------------------- inference probe

// Per-slot mean divergence between the deterministic verb distribution and
// `passes` stochastic re-runs of the verb head (or the aux head, which is
// deterministic, when the forward used one).
std::vector<double> estimate_inter_var(GradTape& t, const model::HoiModel& m,
                                       const std::vector<Tensor>& bound,
                                       const model::ForwardResult& fwd, int passes);

// Deterministic forward plus uncertainty probe on one rendered scene.
std::vector<model::HoiPrediction> run_inference(const model::HoiModel& m,
                                                const std::vector<double>& image, int passes,
                                                std::uint64_t seed);

}  // namespace hoidet

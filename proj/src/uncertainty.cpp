#include "hoidet/uncertainty.hpp"

#include <cmath>
#include <numbers>

#include "hoidet/errors.hpp"
#include "hoidet/kernels.hpp"

namespace hoidet {

namespace {
constexpr double kClamp = 1e-12;

double kl_row(const double* y, const double* q, int n) {
  double s = 0.0;
  for (int k = 0; k < n; ++k)
    s += y[k] * (std::log(std::max(y[k], kClamp)) - std::log(std::max(q[k], kClamp)));
  return std::max(0.0, s);
}
}  // namespace

// ------------------------------------------------------------ scalar forms

double gaussian_box_nll(const GaussianBox& g, const BoxOffsets& target, double iou_weight) {
  g.validate();
  const double tgt[4] = {target.l, target.r, target.t, target.b};
  double s = 0.0;
  for (int c = 0; c < 4; ++c) {
    const double r = tgt[c] - g.mu[static_cast<size_t>(c)];
    const double var = g.var[static_cast<size_t>(c)];
    s += iou_weight * (0.5 * std::log(2.0 * std::numbers::pi * var) + r * r / (2.0 * var));
  }
  return s;
}

double interaction_kl(const std::vector<double>& y, const std::vector<double>& y_hat) {
  if (y.size() != y_hat.size()) throw ShapeMismatch("interaction_kl distribution sizes");
  return kl_row(y.data(), y_hat.data(), static_cast<int>(y.size()));
}

InteractionPair make_interaction_pair(std::vector<double> y, std::vector<double> y_hat) {
  InteractionPair p;
  p.d_kl = interaction_kl(y, y_hat);
  p.y = std::move(y);
  p.y_hat = std::move(y_hat);
  return p;
}

double interaction_loss(const std::vector<double>& ce, const std::vector<double>& d_kl) {
  if (ce.size() != d_kl.size()) throw ShapeMismatch("interaction_loss term counts");
  if (ce.empty()) return 0.0;
  double s = 0.0;
  for (size_t i = 0; i < ce.size(); ++i) s += std::exp(-d_kl[i]) * ce[i] + d_kl[i];
  return s / static_cast<double>(ce.size());
}

std::vector<double> adaptive_score(const std::vector<double>& verb_probs, double inter_var) {
  const double scale = std::exp(-inter_var);
  std::vector<double> out(verb_probs.size());
  for (size_t k = 0; k < out.size(); ++k) out[k] = verb_probs[k] * scale;
  return out;
}

// -------------------------------------------------------------- tape forms

Tensor gaussian_box_nll(GradTape& t, const Tensor& mu_row, const Tensor& var_row,
                        const BoxOffsets& target, double iou_weight) {
  const Tensor tgt({1, 4}, {target.l, target.r, target.t, target.b});
  const Tensor resid = t.sub(tgt, mu_row);
  const Tensor quad = t.div(t.mul(resid, resid), t.scale(var_row, 2.0));
  const Tensor logs = t.scale(t.log(t.scale(var_row, 2.0 * std::numbers::pi)), 0.5);
  return t.scale(t.sum(t.add(logs, quad)), iou_weight);
}

Tensor interaction_loss(GradTape& t, const Tensor& verb_logits_det,
                        const Tensor& verb_logits_branch, const std::vector<int>& slot_targets,
                        bool divergence_weighted, bool aux_extra_ce,
                        const std::vector<double>* ref_dist) {
  const Tensor ce = t.cross_entropy(verb_logits_branch, slot_targets);  // [n,1]
  Tensor loss;
  if (divergence_weighted) {
    const int n = verb_logits_det.dim(0), v = verb_logits_det.dim(1);
    // deterministic distribution as a constant reference; Σ y·log y is
    // precomputed so only log ŷ lives on the tape — the gradient flows
    // through the stochastic branch alone
    std::vector<double> y(static_cast<size_t>(n) * v);
    if (ref_dist) {
      if (ref_dist->size() != y.size())
        throw ShapeMismatch("interaction_loss reference distribution size");
      y = *ref_dist;
    } else {
      kernels::softmax_rows(verb_logits_det.data().data(), y.data(), n, v);
    }
    std::vector<double> ylogy(static_cast<size_t>(n), 0.0);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < v; ++k) {
        const double yk = y[static_cast<size_t>(i) * v + k];
        ylogy[static_cast<size_t>(i)] += yk * std::log(std::max(yk, kClamp));
      }
    const Tensor y_const({n, v}, std::move(y));
    const Tensor ylogy_col({n, 1}, std::move(ylogy));
    const Tensor yhat = t.softmax(verb_logits_branch, 1);
    const Tensor cross = t.sum_rows(t.mul(y_const, t.log(yhat)));
    const Tensor kl = t.relu(t.sub(ylogy_col, cross));  // relu guards clamp-induced dips
    loss = t.mean(t.add(t.mul(t.exp(t.neg(kl)), ce), kl));
  } else {
    loss = t.mean(ce);
  }
  if (aux_extra_ce)
    loss = t.add(loss, t.mean(t.cross_entropy(verb_logits_det, slot_targets)));
  return loss;
}

// ----------------------------------------------------- matched-box helpers

namespace {

// scalar [1,1] tensors; min/max built from relu so they differentiate
Tensor max_c(GradTape& t, const Tensor& x, double c) {  // max(x, c)
  return t.add(x, t.relu(t.neg(t.add_scalar(x, -c))));
}
Tensor min_c(GradTape& t, const Tensor& x, double c) {  // min(x, c)
  return t.sub(x, t.relu(t.add_scalar(x, -c)));
}
Tensor max_t(GradTape& t, const Tensor& a, const Tensor& b) {
  return t.add(a, t.relu(t.sub(b, a)));
}
Tensor clamp01(GradTape& t, const Tensor& x) { return min_c(t, max_c(t, x, 0.0), 1.0); }

struct DiffBox {
  Tensor x1, y1, x2, y2;  // [1,1] each
};

// mirror of offsets_to_box: clamp both corners into the frame, then force
// the max corner past the min corner
DiffBox decode_box(GradTape& t, const Tensor& ref_row, const Tensor& off_row) {
  const Tensor rx = t.slice(ref_row, 1, 0, 1), ry = t.slice(ref_row, 1, 1, 1);
  const Tensor l = t.slice(off_row, 1, 0, 1), r = t.slice(off_row, 1, 1, 1);
  const Tensor tp = t.slice(off_row, 1, 2, 1), b = t.slice(off_row, 1, 3, 1);
  DiffBox d;
  d.x1 = clamp01(t, t.sub(rx, l));
  d.y1 = clamp01(t, t.sub(ry, tp));
  d.x2 = max_t(t, clamp01(t, t.add(rx, r)), d.x1);
  d.y2 = max_t(t, clamp01(t, t.add(ry, b)), d.y1);
  return d;
}

Tensor abs_c(GradTape& t, const Tensor& x, double c) {  // |x − c|
  const Tensor d = t.add_scalar(x, -c);
  return t.add(t.relu(d), t.relu(t.neg(d)));
}

Tensor l1_term(GradTape& t, const DiffBox& p, const Box& g) {
  return t.add(t.add(abs_c(t, p.x1, g.x1), abs_c(t, p.y1, g.y1)),
               t.add(abs_c(t, p.x2, g.x2), abs_c(t, p.y2, g.y2)));
}

Tensor giou_term(GradTape& t, const DiffBox& p, const Box& g) {
  const Tensor iw = t.relu(t.sub(min_c(t, p.x2, g.x2), max_c(t, p.x1, g.x1)));
  const Tensor ih = t.relu(t.sub(min_c(t, p.y2, g.y2), max_c(t, p.y1, g.y1)));
  const Tensor inter = t.mul(iw, ih);
  const Tensor area_p = t.mul(t.sub(p.x2, p.x1), t.sub(p.y2, p.y1));
  const Tensor uni = t.sub(t.add_scalar(area_p, box_area(g)), inter);
  const Tensor overlap = t.div(inter, uni);
  const Tensor hw = t.sub(max_c(t, p.x2, g.x2), min_c(t, p.x1, g.x1));
  const Tensor hh = t.sub(max_c(t, p.y2, g.y2), min_c(t, p.y1, g.y1));
  const Tensor hull = t.mul(hw, hh);
  return t.sub(overlap, t.div(t.sub(hull, uni), hull));
}

}  // namespace

LossBreakdown total_loss(GradTape& t, const model::ForwardResult& fwd,
                         const std::vector<scenes::GtTriplet>& gts, const LossWeights& w,
                         const LossConstants* frozen) {
  const int n_slots = fwd.human_logits.dim(0);
  const int obj_bg = fwd.object_logits.dim(1) - 1;
  const int verb_bg = fwd.verb_logits.dim(1) - 1;

  LossBreakdown out;
  out.lambda_o = w.lambda_o;
  out.lambda_a = w.lambda_a;

  if (frozen) {
    out.constants = *frozen;
  } else {
    const auto preds = model::decode_predictions(fwd);

    CostMatrix cost(static_cast<size_t>(n_slots), std::vector<double>(gts.size()));
    for (int slot = 0; slot < n_slots; ++slot)
      for (size_t g = 0; g < gts.size(); ++g) {
        const auto& p = preds[static_cast<size_t>(slot)];
        const auto& gt = gts[g];
        cost[static_cast<size_t>(slot)][g] = hoi_match_cost(
            p.object_probs[static_cast<size_t>(gt.object_class)],
            p.verb_probs[static_cast<size_t>(gt.verb)], p.human_box, p.object_box, gt.human_box,
            gt.object_box, w.match);
      }
    out.constants.assignment = hungarian(cost);

    // detached anchors for the likelihood term: offset-space targets seen
    // from the predicted reference points and the IoU of the decoded boxes
    for (const auto& [slot, g] : out.constants.assignment.pairs) {
      const auto& gt = gts[static_cast<size_t>(g)];
      const auto& p = preds[static_cast<size_t>(slot)];
      const Point rh{fwd.ref_h.at(slot, 0), fwd.ref_h.at(slot, 1)};
      const Point ro{fwd.ref_o.at(slot, 0), fwd.ref_o.at(slot, 1)};
      out.constants.tgt_h.push_back(box_to_offsets(gt.human_box, rh));
      out.constants.tgt_o.push_back(box_to_offsets(gt.object_box, ro));
      out.constants.iou_h.push_back(iou(p.human_box, gt.human_box));
      out.constants.iou_o.push_back(iou(p.object_box, gt.object_box));
    }

    const int n_verb_cols = fwd.verb_logits.dim(1);
    out.constants.ref_dist.resize(static_cast<size_t>(n_slots) * n_verb_cols);
    kernels::softmax_rows(fwd.verb_logits.data().data(), out.constants.ref_dist.data(), n_slots,
                          n_verb_cols);
  }
  const LossConstants& c = out.constants;
  out.assignment = c.assignment;

  std::vector<int> h_tgt(static_cast<size_t>(n_slots), 1);  // background
  std::vector<int> o_tgt(static_cast<size_t>(n_slots), obj_bg);
  std::vector<int> v_tgt(static_cast<size_t>(n_slots), verb_bg);
  for (const auto& [slot, g] : c.assignment.pairs) {
    h_tgt[static_cast<size_t>(slot)] = 0;  // person present
    o_tgt[static_cast<size_t>(slot)] = gts[static_cast<size_t>(g)].object_class;
    v_tgt[static_cast<size_t>(slot)] = gts[static_cast<size_t>(g)].verb;
  }

  out.l_loc_h = t.mean(t.cross_entropy(fwd.human_logits, h_tgt));
  out.l_loc_o = t.mean(t.cross_entropy(fwd.object_logits, o_tgt));
  out.l_box = Tensor::scalar(0.0);

  for (size_t k = 0; k < c.assignment.pairs.size(); ++k) {
    const auto& [slot, g] = c.assignment.pairs[k];
    const auto& gt = gts[static_cast<size_t>(g)];

    struct Role {
      const Tensor &ref, &off, &var;
      const Box& gt_box;
      const BoxOffsets& tgt;
      double iou_w;
      Tensor* l_loc;
    };
    const Role roles[2] = {{fwd.ref_h, fwd.off_h, fwd.var_h, gt.human_box, c.tgt_h[k], c.iou_h[k],
                            &out.l_loc_h},
                           {fwd.ref_o, fwd.off_o, fwd.var_o, gt.object_box, c.tgt_o[k],
                            c.iou_o[k], &out.l_loc_o}};
    for (const Role& role : roles) {
      const Tensor ref_row = t.slice(role.ref, 0, slot, 1);
      const Tensor off_row = t.slice(role.off, 0, slot, 1);
      const DiffBox db = decode_box(t, ref_row, off_row);
      const Tensor reg =
          t.add(t.scale(t.sum(l1_term(t, db, role.gt_box)), w.w_l1),
                t.scale(t.sum(t.add_scalar(t.neg(giou_term(t, db, role.gt_box)), 1.0)), w.w_giou));
      *role.l_loc = t.add(*role.l_loc, reg);

      if (w.box_uncertainty) {
        // the reference anchor and the IoU scale are held fixed, so the
        // likelihood term trains only the extents and their variances
        const Tensor var_row = t.slice(role.var, 0, slot, 1);
        out.l_box = t.add(out.l_box, gaussian_box_nll(t, off_row, var_row, role.tgt, role.iou_w));
      }
    }
  }

  out.l_inter = interaction_loss(t, fwd.verb_logits, fwd.verb_logits_sto, v_tgt,
                                 w.inter_uncertainty, fwd.aux_branch,
                                 w.inter_uncertainty ? &c.ref_dist : nullptr);
  out.total = t.add(t.add(out.l_loc_h, out.l_loc_o),
                    t.add(t.scale(out.l_box, w.lambda_o), t.scale(out.l_inter, w.lambda_a)));
  return out;
}

// --------------------------------------------------------- inference probe

std::vector<double> estimate_inter_var(GradTape& t, const model::HoiModel& m,
                                       const std::vector<Tensor>& bound,
                                       const model::ForwardResult& fwd, int passes) {
  if (passes < 1) throw Error("estimate_inter_var needs at least one pass");
  const int n = fwd.verb_logits.dim(0), v = fwd.verb_logits.dim(1);
  std::vector<double> y(static_cast<size_t>(n) * v);
  kernels::softmax_rows(fwd.verb_logits.data().data(), y.data(), n, v);

  std::vector<double> acc(static_cast<size_t>(n), 0.0);
  std::vector<double> q(static_cast<size_t>(n) * v);
  for (int pass = 0; pass < passes; ++pass) {
    const Tensor logits =
        fwd.aux_branch ? fwd.verb_logits_sto : m.verb_head(t, bound, fwd.inter_emb, true);
    kernels::softmax_rows(logits.data().data(), q.data(), n, v);
    for (int i = 0; i < n; ++i)
      acc[static_cast<size_t>(i)] +=
          kl_row(y.data() + static_cast<size_t>(i) * v, q.data() + static_cast<size_t>(i) * v, v);
  }
  for (double& a : acc) a /= static_cast<double>(passes);
  return acc;
}

std::vector<model::HoiPrediction> run_inference(const model::HoiModel& m,
                                                const std::vector<double>& image, int passes,
                                                std::uint64_t seed) {
  GradTape tape(seed);
  const auto bound = m.bind(tape);
  const int s = m.config().image_size;
  const Tensor img({3, s, s}, image);
  const auto fwd = m.forward(tape, bound, img, false);
  auto preds = model::decode_predictions(fwd);
  const auto var = estimate_inter_var(tape, m, bound, fwd, passes);
  for (size_t i = 0; i < preds.size(); ++i) preds[i].inter_var = var[i];
  return preds;
}

}  // namespace hoidet

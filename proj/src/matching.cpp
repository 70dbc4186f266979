#include "hoidet/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hoidet/errors.hpp"

namespace hoidet {

// Potential-based shortest augmenting path version of the Hungarian method.
// Columns play the role of the smaller side: each iteration augments the
// matching by one column along a minimal path, updating dual potentials so
// reduced costs stay nonnegative.
Assignment hungarian(const CostMatrix& cost) {
  const int rows = static_cast<int>(cost.size());
  const int cols = rows > 0 ? static_cast<int>(cost[0].size()) : 0;
  if (cols > rows)
    throw InfeasibleMatrix("need rows >= cols, got " + std::to_string(rows) + "x" +
                           std::to_string(cols));
  for (const auto& row : cost) {
    if (static_cast<int>(row.size()) != cols) throw InfeasibleMatrix("ragged cost matrix");
    for (double v : row)
      if (!std::isfinite(v)) throw InfeasibleMatrix("non-finite cost entry");
  }

  Assignment out;
  if (cols == 0) {
    out.unmatched_rows.resize(static_cast<size_t>(rows));
    for (int i = 0; i < rows; ++i) out.unmatched_rows[static_cast<size_t>(i)] = i;
    return out;
  }

  const double inf = std::numeric_limits<double>::infinity();
  // 1-based: u over columns, v over rows; match[row] = column occupying it
  std::vector<double> u(static_cast<size_t>(cols) + 1, 0.0);
  std::vector<double> v(static_cast<size_t>(rows) + 1, 0.0);
  std::vector<int> match(static_cast<size_t>(rows) + 1, 0);
  std::vector<int> way(static_cast<size_t>(rows) + 1, 0);

  for (int c = 1; c <= cols; ++c) {
    match[0] = c;
    int r0 = 0;
    std::vector<double> minv(static_cast<size_t>(rows) + 1, inf);
    std::vector<char> used(static_cast<size_t>(rows) + 1, 0);
    do {
      used[static_cast<size_t>(r0)] = 1;
      const int c0 = match[static_cast<size_t>(r0)];
      double delta = inf;
      int r1 = 0;
      for (int r = 1; r <= rows; ++r) {
        if (used[static_cast<size_t>(r)]) continue;
        const double cur =
            cost[static_cast<size_t>(r - 1)][static_cast<size_t>(c0 - 1)] -
            u[static_cast<size_t>(c0)] - v[static_cast<size_t>(r)];
        if (cur < minv[static_cast<size_t>(r)]) {
          minv[static_cast<size_t>(r)] = cur;
          way[static_cast<size_t>(r)] = r0;
        }
        if (minv[static_cast<size_t>(r)] < delta) {
          delta = minv[static_cast<size_t>(r)];
          r1 = r;
        }
      }
      for (int r = 0; r <= rows; ++r) {
        if (used[static_cast<size_t>(r)]) {
          u[static_cast<size_t>(match[static_cast<size_t>(r)])] += delta;
          v[static_cast<size_t>(r)] -= delta;
        } else {
          minv[static_cast<size_t>(r)] -= delta;
        }
      }
      r0 = r1;
    } while (match[static_cast<size_t>(r0)] != 0);
    // unwind the augmenting path
    while (r0 != 0) {
      const int r1 = way[static_cast<size_t>(r0)];
      match[static_cast<size_t>(r0)] = match[static_cast<size_t>(r1)];
      r0 = r1;
    }
  }

  std::vector<char> row_used(static_cast<size_t>(rows), 0);
  for (int r = 1; r <= rows; ++r) {
    const int c = match[static_cast<size_t>(r)];
    if (c == 0) continue;
    out.pairs.emplace_back(r - 1, c - 1);
    out.total_cost += cost[static_cast<size_t>(r - 1)][static_cast<size_t>(c - 1)];
    row_used[static_cast<size_t>(r - 1)] = 1;
  }
  std::sort(out.pairs.begin(), out.pairs.end());
  for (int r = 0; r < rows; ++r)
    if (!row_used[static_cast<size_t>(r)]) out.unmatched_rows.push_back(r);
  return out;
}

double hoi_match_cost(double p_obj, double p_verb, const Box& pred_h, const Box& pred_o,
                      const Box& gt_h, const Box& gt_o, const MatchWeights& w) {
  return w.cls * (1.0 - p_obj) + w.verb * (1.0 - p_verb) +
         w.l1 * (l1_box(pred_h, gt_h) + l1_box(pred_o, gt_o)) +
         w.giou * (2.0 - giou(pred_h, gt_h) - giou(pred_o, gt_o));
}

}  // namespace hoidet

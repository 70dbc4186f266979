#pragma once

// Optimal one-to-one assignment between predicted slots (rows) and ground
// truth triplets (columns), plus the pairwise matching cost that fills the
// matrix. Every column must receive a distinct row, so rows >= cols.

#include <utility>
#include <vector>

#include "hoidet/geometry.hpp"

namespace hoidet {

using CostMatrix = std::vector<std::vector<double>>;  // [rows][cols]

struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (row, col), sorted by row
  std::vector<int> unmatched_rows;         // ascending
  double total_cost = 0.0;
};

// exact minimum-cost assignment covering all columns; O(cols^2 * rows)
// throws InfeasibleMatrix when cols > rows or any entry is non-finite
Assignment hungarian(const CostMatrix& cost);

struct MatchWeights {
  double cls = 1.0;
  double verb = 1.0;
  double l1 = 5.0;
  double giou = 2.0;
};

// p_obj / p_verb are the predicted probabilities of the ground-truth object
// class and verb. Lower is better; a perfect prediction scores 0.
double hoi_match_cost(double p_obj, double p_verb, const Box& pred_h, const Box& pred_o,
                      const Box& gt_h, const Box& gt_o, const MatchWeights& w);

}  // namespace hoidet

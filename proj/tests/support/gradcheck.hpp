#pragma once

// Finite-difference oracle for the reverse-mode engine. A check rebuilds the
// graph from scratch for every probe with the same tape seed, so stochastic
// ops (dropout) see identical masks in the analytic and numeric passes.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "hoidet/tensor.hpp"

namespace gradcheck {

// builds a scalar loss from watched copies of the inputs
using BuildFn =
    std::function<hoidet::Tensor(hoidet::GradTape&, const std::vector<hoidet::Tensor>&)>;

struct Report {
  double max_rel_err = 0.0;
  int elements = 0;
};

// relative error with a floor so near-zero gradients compare absolutely
inline double rel_err(double a, double b) {
  return std::fabs(a - b) / std::max({1e-2, std::fabs(a), std::fabs(b)});
}

inline double eval(std::uint64_t tape_seed, const std::vector<hoidet::Tensor>& inputs,
                   const BuildFn& f) {
  hoidet::GradTape tape(tape_seed);
  std::vector<hoidet::Tensor> leaves;
  leaves.reserve(inputs.size());
  for (const auto& in : inputs) leaves.push_back(tape.watch(in));
  return f(tape, leaves).value();
}

inline Report check(std::uint64_t tape_seed, const std::vector<hoidet::Tensor>& inputs,
                    const BuildFn& f, double h = 1e-5) {
  Report rep;

  // analytic gradients
  std::vector<std::vector<double>> analytic;
  {
    hoidet::GradTape tape(tape_seed);
    std::vector<hoidet::Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const auto& in : inputs) leaves.push_back(tape.watch(in));
    hoidet::Tensor loss = f(tape, leaves);
    tape.backward(loss);
    for (const auto& leaf : leaves) analytic.push_back(tape.grad(leaf));
  }

  // central differences, one element at a time
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (size_t j = 0; j < inputs[i].data().size(); ++j) {
      std::vector<hoidet::Tensor> probe = inputs;
      std::vector<double> bumped = inputs[i].data();

      bumped[j] += h;
      probe[i] = hoidet::Tensor(inputs[i].shape(), bumped);
      const double up = eval(tape_seed, probe, f);

      bumped[j] -= 2.0 * h;
      probe[i] = hoidet::Tensor(inputs[i].shape(), bumped);
      const double down = eval(tape_seed, probe, f);

      const double numeric = (up - down) / (2.0 * h);
      rep.max_rel_err = std::max(rep.max_rel_err, rel_err(analytic[i][j], numeric));
      ++rep.elements;
    }
  }
  return rep;
}

}  // namespace gradcheck

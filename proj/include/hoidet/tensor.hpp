#pragma once

// Reverse-mode autodiff over dense row-major double arrays. The tape is
// define-by-run: every operation appends a node holding the backward rule,
// and backward() walks the nodes in reverse. Tapes are rebuilt per training
// step, which keeps stochastic branches (dropout on/off) trivially correct.
//
// A Tensor is either a constant (no tape) or tracked (tape + node id).
// Operations are methods on GradTape; mixing tensors from two live tapes is
// an error.

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "hoidet/rng.hpp"

namespace hoidet {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);

class GradTape;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);  // constant

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor scalar(double v);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  std::int64_t size() const;

  const std::vector<double>& data() const { return *data_; }
  double value() const;           // size-1 tensors only
  double at(int i) const { return (*data_)[static_cast<size_t>(i)]; }
  double at(int i, int j) const;  // rank-2 only

  bool tracked() const { return tape_ != nullptr; }
  GradTape* tape() const { return tape_; }
  int node() const { return node_; }

  // drop the tape link; shares the same buffer
  Tensor detached() const;

 private:
  friend class GradTape;
  Shape shape_{};
  std::shared_ptr<std::vector<double>> data_{};
  GradTape* tape_ = nullptr;
  int node_ = -1;
};

class GradTape {
 public:
  explicit GradTape(std::uint64_t seed = 0);
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  // Differentiable leaf over external storage (model parameters). Gradients
  // accumulate on the tape and are read back with grad().
  Tensor leaf(const Shape& shape, std::shared_ptr<std::vector<double>> storage);
  // Copy a constant in as a differentiable leaf (gradient-check harnesses).
  Tensor watch(const Tensor& constant);

  // elementwise; shapes must match exactly
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor div(const Tensor& a, const Tensor& b);  // denominator clamped to >= 1e-12
  Tensor neg(const Tensor& a);
  Tensor scale(const Tensor& a, double s);
  Tensor add_scalar(const Tensor& a, double s);
  Tensor exp(const Tensor& a);
  Tensor log(const Tensor& a);  // input clamped to >= 1e-12
  Tensor relu(const Tensor& a);
  Tensor softplus(const Tensor& a);
  Tensor sigmoid(const Tensor& a);

  // matrix ops (rank-2)
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
  Tensor transpose(const Tensor& a);
  Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x*w + b per row
  Tensor softmax(const Tensor& a, int axis);
  Tensor layernorm(const Tensor& a);  // rows normalized to zero mean, unit variance
  Tensor row_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta);
  // per-row -log softmax(logits)[target]; returns [n,1]
  Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets);

  // rate in [0,1); inverted dropout, mask drawn from the tape rng
  Tensor dropout(const Tensor& a, double rate, bool active);

  // reductions / shape ops
  Tensor sum(const Tensor& a);
  Tensor mean(const Tensor& a);
  Tensor sum_rows(const Tensor& a);  // [n,m] -> [n,1]
  Tensor concat(const std::vector<Tensor>& parts, int axis);
  Tensor slice(const Tensor& a, int axis, int start, int count);
  Tensor reshape(const Tensor& a, Shape shape);
  // [c,h,w] -> [(oh*ow), c*k*k]
  Tensor im2col(const Tensor& a, int k, int stride, int pad);

  void backward(const Tensor& loss);
  // gradient of the last backward() w.r.t. t; zeros if t never received one
  std::vector<double> grad(const Tensor& t) const;

  Rng& rng() { return rng_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    std::int64_t size = 0;
    std::function<void()> back;  // may be empty (leaves)
  };

  Tensor make(Shape shape, std::vector<double> data, std::function<void()> back);
  std::vector<double>& grad_buf(int node);
  void check_same_tape(const Tensor& t) const;

  std::vector<Node> nodes_;
  std::vector<std::vector<double>> grads_;
  Rng rng_;
  std::uint64_t seed_;
};

}  // namespace hoidet

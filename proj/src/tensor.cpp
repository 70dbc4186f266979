#include "hoidet/tensor.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "hoidet/errors.hpp"
#include "hoidet/kernels.hpp"

namespace hoidet {

namespace {
constexpr double kClamp = 1e-12;
constexpr double kLnEps = 1e-12;

std::string shape_str(const Shape& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) r += ",";
    r += std::to_string(s[i]);
  }
  return r + "]";
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

// ------------------------------------------------------------------ Tensor

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  for (int d : shape_)
    if (d <= 0) throw BadShape("extent must be positive, got " + shape_str(shape_));
  if (numel(shape_) != static_cast<std::int64_t>(data.size()))
    throw BadShape("shape " + shape_str(shape_) + " does not cover " +
                   std::to_string(data.size()) + " elements");
  data_ = std::make_shared<std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) {
  auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0));
}

Tensor Tensor::full(Shape shape, double v) {
  auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(static_cast<size_t>(n), v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

std::int64_t Tensor::size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

double Tensor::value() const {
  if (size() != 1) throw BadShape("value() needs a size-1 tensor, got " + shape_str(shape_));
  return (*data_)[0];
}

double Tensor::at(int i, int j) const {
  return (*data_)[static_cast<size_t>(i) * static_cast<size_t>(shape_[1]) + static_cast<size_t>(j)];
}

Tensor Tensor::detached() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

// ---------------------------------------------------------------- GradTape

GradTape::GradTape(std::uint64_t seed) : rng_(seed), seed_(seed) {}

Tensor GradTape::make(Shape shape, std::vector<double> data, std::function<void()> back) {
  Tensor t(std::move(shape), std::move(data));
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{t.size(), std::move(back)});
  return t;
}

std::vector<double>& GradTape::grad_buf(int node) {
  auto& g = grads_[static_cast<size_t>(node)];
  if (g.empty()) g.assign(static_cast<size_t>(nodes_[static_cast<size_t>(node)].size), 0.0);
  return g;
}

void GradTape::check_same_tape(const Tensor& t) const {
  if (t.tracked() && t.tape() != this) throw Error("tensor belongs to a different tape");
}

Tensor GradTape::leaf(const Shape& shape, std::shared_ptr<std::vector<double>> storage) {
  if (numel(shape) != static_cast<std::int64_t>(storage->size()))
    throw BadShape("leaf storage does not match shape " + shape_str(shape));
  Tensor t;
  t.shape_ = shape;
  t.data_ = std::move(storage);
  t.tape_ = this;
  t.node_ = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{t.size(), nullptr});
  return t;
}

Tensor GradTape::watch(const Tensor& constant) {
  auto copy = std::make_shared<std::vector<double>>(constant.data());
  return leaf(constant.shape(), std::move(copy));
}

// -------------------------------------------------------------- elementwise

namespace {
template <class F>
std::vector<double> map1(const std::vector<double>& a, F f) {
  std::vector<double> r(a.size());
  for (size_t i = 0; i < a.size(); ++i) r[i] = f(a[i]);
  return r;
}
}  // namespace

Tensor GradTape::add(const Tensor& a, const Tensor& b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.shape() != b.shape())
    throw ShapeMismatch("add " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
  if (!a.tracked() && !b.tracked()) return Tensor(a.shape(), std::move(out));
  Tensor r = make(a.shape(), std::move(out), nullptr);
  const int an = a.node(), bn = b.node(), rn = r.node();
  nodes_[static_cast<size_t>(rn)].back = [this, an, bn, rn] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    if (an >= 0) {
      auto& ga = grad_buf(an);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (bn >= 0) {
      auto& gb = grad_buf(bn);
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  };
  return r;
}

Tensor GradTape::sub(const Tensor& a, const Tensor& b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.shape() != b.shape())
    throw ShapeMismatch("sub " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
  if (!a.tracked() && !b.tracked()) return Tensor(a.shape(), std::move(out));
  Tensor r = make(a.shape(), std::move(out), nullptr);
  const int an = a.node(), bn = b.node(), rn = r.node();
  nodes_[static_cast<size_t>(rn)].back = [this, an, bn, rn] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    if (an >= 0) {
      auto& ga = grad_buf(an);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (bn >= 0) {
      auto& gb = grad_buf(bn);
      for (size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  };
  return r;
}

Tensor GradTape::mul(const Tensor& a, const Tensor& b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.shape() != b.shape())
    throw ShapeMismatch("mul " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.data());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
  if (!a.tracked() && !b.tracked()) return Tensor(a.shape(), std::move(out));
  Tensor r = make(a.shape(), std::move(out), nullptr);
  const int an = a.node(), bn = b.node(), rn = r.node();
  auto ad = a.data_, bd = b.data_;
  nodes_[static_cast<size_t>(rn)].back = [this, an, bn, rn, ad, bd] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    if (an >= 0) {
      auto& ga = grad_buf(an);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*bd)[i];
    }
    if (bn >= 0) {
      auto& gb = grad_buf(bn);
      for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * (*ad)[i];
    }
  };
  return r;
}

Tensor GradTape::div(const Tensor& a, const Tensor& b) {
  check_same_tape(a);
  check_same_tape(b);
  if (a.shape() != b.shape())
    throw ShapeMismatch("div " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(a.size() > 0 ? a.data().size() : 0);
  for (size_t i = 0; i < out.size(); ++i)
    out[i] = a.data()[i] / std::max(b.data()[i], kClamp);
  if (!a.tracked() && !b.tracked()) return Tensor(a.shape(), std::move(out));
  Tensor r = make(a.shape(), std::move(out), nullptr);
  const int an = a.node(), bn = b.node(), rn = r.node();
  auto ad = a.data_, bd = b.data_;
  nodes_[static_cast<size_t>(rn)].back = [this, an, bn, rn, ad, bd] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    if (an >= 0) {
      auto& ga = grad_buf(an);
      for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / std::max((*bd)[i], kClamp);
    }
    if (bn >= 0) {
      auto& gb = grad_buf(bn);
      for (size_t i = 0; i < g.size(); ++i) {
        const double bc = (*bd)[i];
        if (bc > kClamp) gb[i] -= g[i] * (*ad)[i] / (bc * bc);
      }
    }
  };
  return r;
}

Tensor GradTape::neg(const Tensor& a) { return scale(a, -1.0); }

Tensor GradTape::scale(const Tensor& a, double s) {
  check_same_tape(a);
  std::vector<double> out = map1(a.data(), [s](double x) { return x * s; });
  if (!a.tracked()) return Tensor(a.shape(), std::move(out));
  Tensor r = make(a.shape(), std::move(out), nullptr);
  const int an = a.node(), rn = r.node();
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn, s] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& ga = grad_buf(an);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  };
  return r;
}

Tensor GradTape::add_scalar(const Tensor& a, double s) {
  check_same_tape(a);
  std::vector<double> out = map1(a.data(), [s](double x) { return x + s; });
  if (!a.tracked()) return Tensor(a.shape(), std::move(out));
  Tensor r = make(a.shape(), std::move(out), nullptr);
  const int an = a.node(), rn = r.node();
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& ga = grad_buf(an);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return r;
}

Tensor GradTape::exp(const Tensor& a) {
  check_same_tape(a);
  std::vector<double> out = map1(a.data(), [](double x) { return std::exp(x); });
  if (!a.tracked()) return Tensor(a.shape(), std::move(out));
  Tensor r = make(a.shape(), std::move(out), nullptr);
  const int an = a.node(), rn = r.node();
  auto yd = r.data_;
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn, yd] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& ga = grad_buf(an);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*yd)[i];
  };
  return r;
}

Tensor GradTape::log(const Tensor& a) {
  check_same_tape(a);
  std::vector<double> out = map1(a.data(), [](double x) { return std::log(std::max(x, kClamp)); });
  if (!a.tracked()) return Tensor(a.shape(), std::move(out));
  Tensor r = make(a.shape(), std::move(out), nullptr);
  const int an = a.node(), rn = r.node();
  auto ad = a.data_;
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn, ad] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& ga = grad_buf(an);
    for (size_t i = 0; i < g.size(); ++i)
      if ((*ad)[i] > kClamp) ga[i] += g[i] / (*ad)[i];
  };
  return r;
}

Tensor GradTape::relu(const Tensor& a) {
  check_same_tape(a);
  std::vector<double> out = map1(a.data(), [](double x) { return x > 0.0 ? x : 0.0; });
  if (!a.tracked()) return Tensor(a.shape(), std::move(out));
  Tensor r = make(a.shape(), std::move(out), nullptr);
  const int an = a.node(), rn = r.node();
  auto ad = a.data_;
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn, ad] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& ga = grad_buf(an);
    for (size_t i = 0; i < g.size(); ++i)
      if ((*ad)[i] > 0.0) ga[i] += g[i];
  };
  return r;
}

Tensor GradTape::softplus(const Tensor& a) {
  check_same_tape(a);
  std::vector<double> out = map1(a.data(), [](double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x)));
  });
  if (!a.tracked()) return Tensor(a.shape(), std::move(out));
  Tensor r = make(a.shape(), std::move(out), nullptr);
  const int an = a.node(), rn = r.node();
  auto ad = a.data_;
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn, ad] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& ga = grad_buf(an);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * stable_sigmoid((*ad)[i]);
  };
  return r;
}

Tensor GradTape::sigmoid(const Tensor& a) {
  check_same_tape(a);
  std::vector<double> out = map1(a.data(), stable_sigmoid);
  if (!a.tracked()) return Tensor(a.shape(), std::move(out));
  Tensor r = make(a.shape(), std::move(out), nullptr);
  const int an = a.node(), rn = r.node();
  auto yd = r.data_;
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn, yd] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& ga = grad_buf(an);
    for (size_t i = 0; i < g.size(); ++i) {
      const double y = (*yd)[i];
      ga[i] += g[i] * y * (1.0 - y);
    }
  };
  return r;
}

// ------------------------------------------------------------------ matrix

namespace {
void require_rank2(const Tensor& t, const char* who) {
  if (t.rank() != 2) throw ShapeMismatch(std::string(who) + " needs rank-2 input");
}
}  // namespace

Tensor GradTape::matmul(const Tensor& a, const Tensor& b) {
  check_same_tape(a);
  check_same_tape(b);
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k)
    throw ShapeMismatch("matmul inner dims " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(m) * n);
  kernels::matmul_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  if (!a.tracked() && !b.tracked()) return Tensor({m, n}, std::move(out));
  Tensor r = make({m, n}, std::move(out), nullptr);
  const int an = a.node(), bn = b.node(), rn = r.node();
  auto ad = a.data_, bd = b.data_;
  nodes_[static_cast<size_t>(rn)].back = [this, an, bn, rn, ad, bd, m, k, n] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    if (an >= 0) {
      std::vector<double> da(static_cast<size_t>(m) * k);
      kernels::matmul_nt(g.data(), bd->data(), da.data(), m, n, k);
      auto& ga = grad_buf(an);
      for (size_t i = 0; i < da.size(); ++i) ga[i] += da[i];
    }
    if (bn >= 0) {
      std::vector<double> db(static_cast<size_t>(k) * n);
      kernels::matmul_tn(ad->data(), g.data(), db.data(), k, m, n);
      auto& gb = grad_buf(bn);
      for (size_t i = 0; i < db.size(); ++i) gb[i] += db[i];
    }
  };
  return r;
}

Tensor GradTape::matmul_nt(const Tensor& a, const Tensor& b) {
  check_same_tape(a);
  check_same_tape(b);
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw ShapeMismatch("matmul_nt inner dims " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(m) * n);
  kernels::matmul_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  if (!a.tracked() && !b.tracked()) return Tensor({m, n}, std::move(out));
  Tensor r = make({m, n}, std::move(out), nullptr);
  const int an = a.node(), bn = b.node(), rn = r.node();
  auto ad = a.data_, bd = b.data_;
  nodes_[static_cast<size_t>(rn)].back = [this, an, bn, rn, ad, bd, m, k, n] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    if (an >= 0) {
      std::vector<double> da(static_cast<size_t>(m) * k);
      kernels::matmul_nn(g.data(), bd->data(), da.data(), m, n, k);
      auto& ga = grad_buf(an);
      for (size_t i = 0; i < da.size(); ++i) ga[i] += da[i];
    }
    if (bn >= 0) {
      std::vector<double> db(static_cast<size_t>(n) * k);
      kernels::matmul_tn(g.data(), ad->data(), db.data(), n, m, k);
      auto& gb = grad_buf(bn);
      for (size_t i = 0; i < db.size(); ++i) gb[i] += db[i];
    }
  };
  return r;
}

Tensor GradTape::transpose(const Tensor& a) {
  check_same_tape(a);
  require_rank2(a, "transpose");
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(j) * m + i] = a.data()[static_cast<size_t>(i) * n + j];
  if (!a.tracked()) return Tensor({n, m}, std::move(out));
  Tensor r = make({n, m}, std::move(out), nullptr);
  const int an = a.node(), rn = r.node();
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn, m, n] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& ga = grad_buf(an);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i)
        ga[static_cast<size_t>(i) * n + j] += g[static_cast<size_t>(j) * m + i];
  };
  return r;
}

Tensor GradTape::linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_same_tape(x);
  check_same_tape(w);
  check_same_tape(b);
  require_rank2(x, "linear");
  require_rank2(w, "linear");
  const int n = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  if (w.dim(0) != in)
    throw ShapeMismatch("linear weight " + shape_str(w.shape()) + " vs input " + shape_str(x.shape()));
  if (b.size() != out_dim) throw ShapeMismatch("linear bias size");
  std::vector<double> out(static_cast<size_t>(n) * out_dim);
  kernels::matmul_nn(x.data().data(), w.data().data(), out.data(), n, in, out_dim);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < out_dim; ++j) out[static_cast<size_t>(i) * out_dim + j] += b.data()[static_cast<size_t>(j)];
  if (!x.tracked() && !w.tracked() && !b.tracked()) return Tensor({n, out_dim}, std::move(out));
  Tensor r = make({n, out_dim}, std::move(out), nullptr);
  const int xn = x.node(), wn = w.node(), bn = b.node(), rn = r.node();
  auto xd = x.data_, wd = w.data_;
  nodes_[static_cast<size_t>(rn)].back = [this, xn, wn, bn, rn, xd, wd, n, in, out_dim] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    if (xn >= 0) {
      std::vector<double> dx(static_cast<size_t>(n) * in);
      kernels::matmul_nt(g.data(), wd->data(), dx.data(), n, out_dim, in);
      auto& gx = grad_buf(xn);
      for (size_t i = 0; i < dx.size(); ++i) gx[i] += dx[i];
    }
    if (wn >= 0) {
      std::vector<double> dw(static_cast<size_t>(in) * out_dim);
      kernels::matmul_tn(xd->data(), g.data(), dw.data(), in, n, out_dim);
      auto& gw = grad_buf(wn);
      for (size_t i = 0; i < dw.size(); ++i) gw[i] += dw[i];
    }
    if (bn >= 0) {
      auto& gb = grad_buf(bn);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < out_dim; ++j) gb[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * out_dim + j];
    }
  };
  return r;
}

Tensor GradTape::softmax(const Tensor& a, int axis) {
  check_same_tape(a);
  require_rank2(a, "softmax");
  if (axis != 0 && axis != 1) throw ShapeMismatch("softmax axis must be 0 or 1");
  if (axis == 0) return transpose(softmax(transpose(a), 1));
  const int rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(static_cast<size_t>(rows) * cols);
  kernels::softmax_rows(a.data().data(), out.data(), rows, cols);
  if (!a.tracked()) return Tensor(a.shape(), std::move(out));
  Tensor r = make(a.shape(), std::move(out), nullptr);
  const int an = a.node(), rn = r.node();
  auto yd = r.data_;
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn, yd, rows, cols] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& ga = grad_buf(an);
    for (int i = 0; i < rows; ++i) {
      const double* y = yd->data() + static_cast<size_t>(i) * cols;
      const double* gr = g.data() + static_cast<size_t>(i) * cols;
      double dot = 0.0;
      for (int j = 0; j < cols; ++j) dot += gr[j] * y[j];
      double* out_g = ga.data() + static_cast<size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) out_g[j] += y[j] * (gr[j] - dot);
    }
  };
  return r;
}

Tensor GradTape::layernorm(const Tensor& a) {
  check_same_tape(a);
  require_rank2(a, "layernorm");
  const int rows = a.dim(0), cols = a.dim(1);
  std::vector<double> out(static_cast<size_t>(rows) * cols);
  auto rstd = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
  kernels::layernorm_rows(a.data().data(), out.data(), rstd->data(), rows, cols, kLnEps);
  if (!a.tracked()) return Tensor(a.shape(), std::move(out));
  Tensor r = make(a.shape(), std::move(out), nullptr);
  const int an = a.node(), rn = r.node();
  auto yd = r.data_;
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn, yd, rstd, rows, cols] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& ga = grad_buf(an);
    for (int i = 0; i < rows; ++i) {
      const double* y = yd->data() + static_cast<size_t>(i) * cols;
      const double* gr = g.data() + static_cast<size_t>(i) * cols;
      double gmean = 0.0, gymean = 0.0;
      for (int j = 0; j < cols; ++j) {
        gmean += gr[j];
        gymean += gr[j] * y[j];
      }
      gmean /= cols;
      gymean /= cols;
      const double r_ = (*rstd)[static_cast<size_t>(i)];
      double* out_g = ga.data() + static_cast<size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) out_g[j] += r_ * (gr[j] - gmean - y[j] * gymean);
    }
  };
  return r;
}

Tensor GradTape::row_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  check_same_tape(x);
  check_same_tape(gamma);
  check_same_tape(beta);
  require_rank2(x, "row_affine");
  const int rows = x.dim(0), cols = x.dim(1);
  if (gamma.size() != cols || beta.size() != cols)
    throw ShapeMismatch("row_affine params must match column count");
  std::vector<double> out(static_cast<size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const size_t idx = static_cast<size_t>(i) * cols + j;
      out[idx] = x.data()[idx] * gamma.data()[static_cast<size_t>(j)] + beta.data()[static_cast<size_t>(j)];
    }
  if (!x.tracked() && !gamma.tracked() && !beta.tracked()) return Tensor(x.shape(), std::move(out));
  Tensor r = make(x.shape(), std::move(out), nullptr);
  const int xn = x.node(), gn = gamma.node(), bn = beta.node(), rn = r.node();
  auto xd = x.data_, gd = gamma.data_;
  nodes_[static_cast<size_t>(rn)].back = [this, xn, gn, bn, rn, xd, gd, rows, cols] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    if (xn >= 0) {
      auto& gx = grad_buf(xn);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
          const size_t idx = static_cast<size_t>(i) * cols + j;
          gx[idx] += g[idx] * (*gd)[static_cast<size_t>(j)];
        }
    }
    if (gn >= 0) {
      auto& gg = grad_buf(gn);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) {
          const size_t idx = static_cast<size_t>(i) * cols + j;
          gg[static_cast<size_t>(j)] += g[idx] * (*xd)[idx];
        }
    }
    if (bn >= 0) {
      auto& gb = grad_buf(bn);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) gb[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * cols + j];
    }
  };
  return r;
}

Tensor GradTape::cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
  check_same_tape(logits);
  require_rank2(logits, "cross_entropy");
  const int n = logits.dim(0), c = logits.dim(1);
  if (static_cast<int>(targets.size()) != n)
    throw ShapeMismatch("cross_entropy needs one target per row");
  for (int t : targets)
    if (t < 0 || t >= c) throw Error("cross_entropy target out of range");
  std::vector<double> out(static_cast<size_t>(n));
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(n) * c);
  kernels::softmax_rows(logits.data().data(), probs->data(), n, c);
  for (int i = 0; i < n; ++i) {
    const double* row = logits.data().data() + static_cast<size_t>(i) * c;
    double mx = row[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    double lse = 0.0;
    for (int j = 0; j < c; ++j) lse += std::exp(row[j] - mx);
    out[static_cast<size_t>(i)] = mx + std::log(lse) - row[targets[static_cast<size_t>(i)]];
  }
  if (!logits.tracked()) return Tensor({n, 1}, std::move(out));
  Tensor r = make({n, 1}, std::move(out), nullptr);
  const int ln = logits.node(), rn = r.node();
  auto tgt = std::make_shared<std::vector<int>>(targets);
  nodes_[static_cast<size_t>(rn)].back = [this, ln, rn, probs, tgt, n, c] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& gl = grad_buf(ln);
    for (int i = 0; i < n; ++i) {
      const double gi = g[static_cast<size_t>(i)];
      const double* p = probs->data() + static_cast<size_t>(i) * c;
      double* out_g = gl.data() + static_cast<size_t>(i) * c;
      for (int j = 0; j < c; ++j) out_g[j] += gi * p[j];
      out_g[(*tgt)[static_cast<size_t>(i)]] -= gi;
    }
  };
  return r;
}

Tensor GradTape::dropout(const Tensor& a, double rate, bool active) {
  check_same_tape(a);
  if (rate < 0.0 || rate >= 1.0)
    throw InvalidRate("dropout rate must lie in [0,1), got " + std::to_string(rate));
  if (!active || rate == 0.0) return a;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mask = std::make_shared<std::vector<double>>(a.data().size());
  for (size_t i = 0; i < mask->size(); ++i)
    (*mask)[i] = rng_.uniform01() < rate ? 0.0 : keep_scale;
  std::vector<double> out(a.data().size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * (*mask)[i];
  if (!a.tracked()) return Tensor(a.shape(), std::move(out));
  Tensor r = make(a.shape(), std::move(out), nullptr);
  const int an = a.node(), rn = r.node();
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn, mask] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& ga = grad_buf(an);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (*mask)[i];
  };
  return r;
}

// -------------------------------------------------------------- reductions

Tensor GradTape::sum(const Tensor& a) {
  check_same_tape(a);
  double s = 0.0;
  for (double v : a.data()) s += v;
  if (!a.tracked()) return Tensor::scalar(s);
  Tensor r = make({1}, {s}, nullptr);
  const int an = a.node(), rn = r.node();
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn] {
    const double g = grads_[static_cast<size_t>(rn)][0];
    auto& ga = grad_buf(an);
    for (double& v : ga) v += g;
  };
  return r;
}

Tensor GradTape::mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor GradTape::sum_rows(const Tensor& a) {
  check_same_tape(a);
  require_rank2(a, "sum_rows");
  const int n = a.dim(0), m = a.dim(1);
  std::vector<double> out(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out[static_cast<size_t>(i)] += a.data()[static_cast<size_t>(i) * m + j];
  if (!a.tracked()) return Tensor({n, 1}, std::move(out));
  Tensor r = make({n, 1}, std::move(out), nullptr);
  const int an = a.node(), rn = r.node();
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn, n, m] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& ga = grad_buf(an);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < m; ++j) ga[static_cast<size_t>(i) * m + j] += g[static_cast<size_t>(i)];
  };
  return r;
}

Tensor GradTape::concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeMismatch("concat of nothing");
  if (axis != 0 && axis != 1) throw ShapeMismatch("concat axis must be 0 or 1");
  for (const auto& p : parts) {
    check_same_tape(p);
    require_rank2(p, "concat");
  }
  const int fixed_axis = 1 - axis;
  const int fixed = parts[0].dim(fixed_axis);
  int total = 0;
  bool tracked = false;
  for (const auto& p : parts) {
    if (p.dim(fixed_axis) != fixed) throw ShapeMismatch("concat extents disagree");
    total += p.dim(axis);
    tracked |= p.tracked();
  }
  Shape shp = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
  std::vector<double> out(static_cast<size_t>(total) * fixed);
  const int out_cols = shp[1];
  int off = 0;
  for (const auto& p : parts) {
    const int pr = p.dim(0), pc = p.dim(1);
    for (int i = 0; i < pr; ++i)
      for (int j = 0; j < pc; ++j) {
        const int oi = axis == 0 ? i + off : i;
        const int oj = axis == 0 ? j : j + off;
        out[static_cast<size_t>(oi) * out_cols + oj] = p.data()[static_cast<size_t>(i) * pc + j];
      }
    off += p.dim(axis);
  }
  if (!tracked) return Tensor(std::move(shp), std::move(out));
  Tensor r = make(std::move(shp), std::move(out), nullptr);
  const int rn = r.node();
  struct Piece {
    int node, rows, cols, offset;
  };
  auto pieces = std::make_shared<std::vector<Piece>>();
  off = 0;
  for (const auto& p : parts) {
    pieces->push_back({p.node(), p.dim(0), p.dim(1), off});
    off += p.dim(axis);
  }
  nodes_[static_cast<size_t>(rn)].back = [this, rn, pieces, axis, out_cols] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    for (const auto& pc : *pieces) {
      if (pc.node < 0) continue;
      auto& gp = grad_buf(pc.node);
      for (int i = 0; i < pc.rows; ++i)
        for (int j = 0; j < pc.cols; ++j) {
          const int oi = axis == 0 ? i + pc.offset : i;
          const int oj = axis == 0 ? j : j + pc.offset;
          gp[static_cast<size_t>(i) * pc.cols + j] += g[static_cast<size_t>(oi) * out_cols + oj];
        }
    }
  };
  return r;
}

Tensor GradTape::slice(const Tensor& a, int axis, int start, int count) {
  check_same_tape(a);
  require_rank2(a, "slice");
  if (axis != 0 && axis != 1) throw ShapeMismatch("slice axis must be 0 or 1");
  if (start < 0 || count <= 0 || start + count > a.dim(axis))
    throw ShapeMismatch("slice range out of bounds");
  const int rows = axis == 0 ? count : a.dim(0);
  const int cols = axis == 1 ? count : a.dim(1);
  const int in_cols = a.dim(1);
  std::vector<double> out(static_cast<size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) {
      const int si = axis == 0 ? i + start : i;
      const int sj = axis == 1 ? j + start : j;
      out[static_cast<size_t>(i) * cols + j] = a.data()[static_cast<size_t>(si) * in_cols + sj];
    }
  if (!a.tracked()) return Tensor({rows, cols}, std::move(out));
  Tensor r = make({rows, cols}, std::move(out), nullptr);
  const int an = a.node(), rn = r.node();
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn, axis, start, rows, cols, in_cols] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& ga = grad_buf(an);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) {
        const int si = axis == 0 ? i + start : i;
        const int sj = axis == 1 ? j + start : j;
        ga[static_cast<size_t>(si) * in_cols + sj] += g[static_cast<size_t>(i) * cols + j];
      }
  };
  return r;
}

Tensor GradTape::reshape(const Tensor& a, Shape shape) {
  check_same_tape(a);
  if (numel(shape) != a.size())
    throw ShapeMismatch("reshape to " + shape_str(shape) + " changes element count");
  std::vector<double> out(a.data());
  if (!a.tracked()) return Tensor(std::move(shape), std::move(out));
  Tensor r = make(std::move(shape), std::move(out), nullptr);
  const int an = a.node(), rn = r.node();
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& ga = grad_buf(an);
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return r;
}

Tensor GradTape::im2col(const Tensor& a, int k, int stride, int pad) {
  check_same_tape(a);
  if (a.rank() != 3) throw ShapeMismatch("im2col needs a [c,h,w] input");
  const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
  const int oh = kernels::conv_out_extent(h, k, stride, pad);
  const int ow = kernels::conv_out_extent(w, k, stride, pad);
  std::vector<double> out(static_cast<size_t>(oh) * ow * c * k * k);
  kernels::im2col(a.data().data(), c, h, w, k, stride, pad, out.data());
  if (!a.tracked()) return Tensor({oh * ow, c * k * k}, std::move(out));
  Tensor r = make({oh * ow, c * k * k}, std::move(out), nullptr);
  const int an = a.node(), rn = r.node();
  nodes_[static_cast<size_t>(rn)].back = [this, an, rn, c, h, w, k, stride, pad] {
    const auto& g = grads_[static_cast<size_t>(rn)];
    auto& ga = grad_buf(an);
    kernels::col2im_add(g.data(), c, h, w, k, stride, pad, ga.data());
  };
  return r;
}

// -------------------------------------------------------------- backward

void GradTape::backward(const Tensor& loss) {
  if (!loss.tracked() || loss.tape() != this) throw Error("backward target is not on this tape");
  if (loss.size() != 1) throw BadShape("backward target must be a scalar");
  grads_.assign(nodes_.size(), {});
  grad_buf(loss.node())[0] = 1.0;
  for (int i = loss.node(); i >= 0; --i) {
    if (grads_[static_cast<size_t>(i)].empty()) continue;
    if (nodes_[static_cast<size_t>(i)].back) nodes_[static_cast<size_t>(i)].back();
  }
}

std::vector<double> GradTape::grad(const Tensor& t) const {
  if (!t.tracked() || t.tape() != this)
    return std::vector<double>(static_cast<size_t>(t.size()), 0.0);
  const auto& g = grads_[static_cast<size_t>(t.node())];
  if (g.empty()) return std::vector<double>(static_cast<size_t>(t.size()), 0.0);
  return g;
}

}  // namespace hoidet

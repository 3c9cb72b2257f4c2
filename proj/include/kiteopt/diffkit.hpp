#pragma once

// Derivative engine: dense gradients, compressed sparse Jacobians, and
// gradient-difference Hessians built on forward-mode dual numbers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "kiteopt/dual.hpp"

namespace kiteopt::diff {

// Directions propagated per forward pass.
inline constexpr int kSeedWidth = 8;
using SeedDual = Dual<kSeedWidth>;

class StructuralError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// g : R^n -> R^m, evaluable on plain values and on seeded duals.
class VectorFunction {
 public:
  virtual ~VectorFunction() = default;
  virtual int num_inputs() const = 0;
  virtual int num_outputs() const = 0;
  virtual void evaluate(std::span<const double> z, std::span<double> out) const = 0;
  virtual void evaluate(std::span<const SeedDual> z, std::span<SeedDual> out) const = 0;
};

class ScalarFunction {
 public:
  virtual ~ScalarFunction() = default;
  virtual int num_inputs() const = 0;
  virtual double evaluate(std::span<const double> z) const = 0;
  virtual SeedDual evaluate(std::span<const SeedDual> z) const = 0;
};

// Structurally nonzero entries, row-major sorted and unique.
struct SparsityPattern {
  int rows = 0;
  int cols = 0;
  std::vector<int> row;
  std::vector<int> col;

  std::size_t nnz() const { return row.size(); }
  void add(int r, int c) {
    row.push_back(r);
    col.push_back(c);
  }
  // Sorts row-major and removes duplicates.
  void canonicalize();
  bool operator==(const SparsityPattern& o) const = default;

  static SparsityPattern dense(int rows, int cols);
  static SparsityPattern identity(int n);
};

// Column partition such that no two columns of one color share a row.
struct ColumnColoring {
  std::vector<int> color;  // per column
  int num_colors = 0;
};
ColumnColoring color_columns(const SparsityPattern& pattern);

struct JacobianOptions {
  // Reject compressed entries that land on rows no seeded column touches.
  bool check_pattern = false;
  double pattern_tolerance = 1e-12;
};

struct JacobianStats {
  int seed_directions = 0;  // colors, i.e. directional derivatives taken
  int forward_passes = 0;   // evaluations of g on SeedDual inputs
};

// Values aligned with pattern entries.
std::vector<double> jacobian(const VectorFunction& g, std::span<const double> z,
                             const SparsityPattern& pattern, const ColumnColoring& coloring,
                             const JacobianOptions& options = {}, JacobianStats* stats = nullptr);
std::vector<double> jacobian(const VectorFunction& g, std::span<const double> z,
                             const SparsityPattern& pattern, const JacobianOptions& options = {},
                             JacobianStats* stats = nullptr);

// Dense forward-mode gradient (kSeedWidth directions per pass).
std::vector<double> gradient(const ScalarFunction& f, std::span<const double> z);

// Pattern found by perturbing each input by `step` and flagging outputs that move.
SparsityPattern detect_pattern(const VectorFunction& g, std::span<const double> z, double step = 1e-3,
                               double threshold = 1e-14);

// Dense central-difference Jacobian; test oracle.
std::vector<std::vector<double>> finite_difference_jacobian(const VectorFunction& g,
                                                            std::span<const double> z,
                                                            double step = 1e-6);

// Gradient of a small scalar element via one dual pass. `f` is a generic
// callable taking std::array<S, M> and returning S.
template <int M, class F>
std::array<double, M> local_gradient(const F& f, const std::array<double, M>& v) {
  std::array<Dual<M>, M> arg;
  for (int i = 0; i < M; ++i) arg[i] = Dual<M>(v[i], i);
  const Dual<M> y = f(arg);
  return y.tangents();
}

// Symmetric Hessian of a small scalar element by central differences of its
// exact dual gradient. Column k uses step h_k = rel_step * max(1, |v_k|).
template <int M, class F>
std::array<std::array<double, M>, M> local_hessian(const F& f, const std::array<double, M>& v,
                                                   double rel_step = 1e-5) {
  std::array<std::array<double, M>, M> h{};
  for (int k = 0; k < M; ++k) {
    const double step = rel_step * std::max(1.0, std::fabs(v[k]));
    std::array<double, M> vp = v;
    std::array<double, M> vm = v;
    vp[k] += step;
    vm[k] -= step;
    const auto gp = local_gradient<M>(f, vp);
    const auto gm = local_gradient<M>(f, vm);
    for (int j = 0; j < M; ++j) h[j][k] = (gp[j] - gm[j]) / (2.0 * step);
  }
  for (int j = 0; j < M; ++j) {
    for (int k = 0; k < j; ++k) {
      const double s = 0.5 * (h[j][k] + h[k][j]);
      h[j][k] = s;
      h[k][j] = s;
    }
  }
  return h;
}

// Adapters from generic lambdas `f(span<const S>, span<S>)`.
template <class F>
class LambdaVectorFunction final : public VectorFunction {
 public:
  LambdaVectorFunction(int n, int m, F f) : n_(n), m_(m), f_(std::move(f)) {}
  int num_inputs() const override { return n_; }
  int num_outputs() const override { return m_; }
  void evaluate(std::span<const double> z, std::span<double> out) const override { f_(z, out); }
  void evaluate(std::span<const SeedDual> z, std::span<SeedDual> out) const override { f_(z, out); }

 private:
  int n_;
  int m_;
  F f_;
};

template <class F>
class LambdaScalarFunction final : public ScalarFunction {
 public:
  LambdaScalarFunction(int n, F f) : n_(n), f_(std::move(f)) {}
  int num_inputs() const override { return n_; }
  double evaluate(std::span<const double> z) const override { return f_(z); }
  SeedDual evaluate(std::span<const SeedDual> z) const override { return f_(z); }

 private:
  int n_;
  F f_;
};

template <class F>
LambdaVectorFunction<F> make_vector_function(int n, int m, F f) {
  return LambdaVectorFunction<F>(n, m, std::move(f));
}
template <class F>
LambdaScalarFunction<F> make_scalar_function(int n, F f) {
  return LambdaScalarFunction<F>(n, std::move(f));
}

}  // namespace kiteopt::diff

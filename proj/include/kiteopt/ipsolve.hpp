#pragma once

// Primal-dual interior-point solver for
//
//   min f(z)  s.t.  c_E(z) = 0,  c_I(z) >= 0,  z_lo <= z <= z_hi.
//
// Inequalities are turned into c_I(z) - s = 0 with s >= 0; all bounds are
// handled by a log barrier whose parameter decreases monotonically. Each
// iteration solves the condensed primal-dual Newton system with a sparse
// LDL^T factorization, correcting its inertia by diagonal regularization, and
// steps along an l1 merit function with a fraction-to-the-boundary rule.

#include <chrono>
#include <iosfwd>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kiteopt/diffkit.hpp"

namespace kiteopt::ip {

// Bounds at or beyond this magnitude are treated as absent.
inline constexpr double kInfiniteBound = 1e19;

class NlpProblem {
 public:
  virtual ~NlpProblem() = default;

  virtual int num_variables() const = 0;
  virtual int num_equalities() const = 0;
  virtual int num_inequalities() const = 0;

  virtual void bounds(std::span<double> lower, std::span<double> upper) const = 0;
  virtual double objective(std::span<const double> z) const = 0;
  virtual void gradient(std::span<const double> z, std::span<double> grad) const = 0;
  // Equalities first, then inequalities.
  virtual void constraints(std::span<const double> z, std::span<double> values) const = 0;
  virtual const diff::SparsityPattern& jacobian_pattern() const = 0;
  virtual void jacobian(std::span<const double> z, std::span<double> values) const = 0;

  // Hessian of  objective_factor * f + sum_i multipliers_i * c_i,  lower triangle.
  virtual bool has_hessian() const { return false; }
  virtual const diff::SparsityPattern& hessian_pattern() const;
  virtual void hessian(std::span<const double> z, double objective_factor, std::span<const double> multipliers,
                       std::span<double> values) const;

  // Scaling hint: the solver minimizes objective_scale() * f.
  virtual double objective_scale() const { return 1.0; }
};

enum class SolveStatus { optimal, acceptable, max_iter, infeasible, error };
const char* to_string(SolveStatus status);
inline bool converged(SolveStatus s) { return s == SolveStatus::optimal || s == SolveStatus::acceptable; }

enum class HessianMode {
  automatic,  // problem Hessian when provided, else limited-memory BFGS
  problem,
  lbfgs,
};

struct SolverOptions {
  double tol_opt = 1e-6;
  double tol_feas = 1e-6;
  int max_iter = 500;
  double acceptable_tol = 1e-4;
  int acceptable_iter = 15;

  double mu_init = 0.1;
  double mu_linear_factor = 0.2;
  double mu_superlinear_power = 1.5;
  double barrier_tol_factor = 10.0;
  double bound_push = 1e-2;
  double fraction_to_boundary = 0.995;

  HessianMode hessian = HessianMode::automatic;
  int lbfgs_memory = 20;
  // Dense n x n limited-memory matrices are built only up to this size.
  int lbfgs_max_dim = 400;

  // Warm starts.
  double warm_mu_init = 1e-4;
  double warm_bound_push = 1e-6;
  bool reuse_multipliers = false;

  // Dense LDL^T fallback when the sparse factorization breaks down.
  int dense_threshold = 2000;

  double max_wall_time = std::numeric_limits<double>::infinity();  // [s]
  bool verbose = false;
  std::ostream* log = nullptr;  // defaults to std::cerr when verbose
};

struct KktError {
  double stationarity = 0.0;     // || grad f + J^T y - z_lo + z_hi ||_inf, with slack rows
  double feasibility = 0.0;      // || c_E ||_inf and || max(0, -c_I) ||_inf
  double complementarity = 0.0;  // max bound/slack product
  double scaled = 0.0;           // overall scaled error used for termination
};

struct NlpSolution {
  std::vector<double> z;
  std::vector<double> multipliers;  // [equalities; inequalities], for L = f + y^T c
  std::vector<double> bound_lower;  // z_lo multipliers, >= 0
  std::vector<double> bound_upper;  // z_hi multipliers, >= 0
  std::vector<double> slacks;       // inequality slacks s = c_I at convergence
  SolveStatus status = SolveStatus::error;
  KktError kkt;
  double objective = 0.0;
  double constraint_violation = 0.0;
  int iterations = 0;
  double wall_time = 0.0;
  std::string message;
};

class LayoutError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

NlpSolution solve(const NlpProblem& nlp, std::span<const double> z0, const SolverOptions& options = {});

// Restarts from prior.z with a small initial barrier parameter.
NlpSolution warm_solve(const NlpProblem& nlp, const NlpSolution& prior, const SolverOptions& options = {});

// KKT residuals recomputed from callbacks for the reported point and multipliers.
KktError kkt_certificate(const NlpProblem& nlp, const NlpSolution& solution);

// Max violation of equalities, inequalities and bounds at z.
double constraint_violation(const NlpProblem& nlp, std::span<const double> z);

}  // namespace kiteopt::ip

#include "kiteopt/ipsolve.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <iostream>
#include <limits>

#include "kiteopt/errors.hpp"

namespace kiteopt::ip {

const diff::SparsityPattern& NlpProblem::hessian_pattern() const {
  static const diff::SparsityPattern empty;
  return empty;
}

void NlpProblem::hessian(std::span<const double>, double, std::span<const double>, std::span<double>) const {
  throw std::logic_error("NlpProblem::hessian called on a problem without a Hessian");
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::acceptable: return "acceptable";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::error: return "error";
  }
  return "error";
}

namespace {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;

constexpr double kDeltaC = 1e-8;         // constant constraint regularization
constexpr double kDeltaWInit = 1e-4;
constexpr double kDeltaWMin = 1e-20;
constexpr double kDeltaWMax = 1e40;
constexpr double kShortStep = 0.1;
constexpr double kDampingInit = 1e-4;
constexpr double kDampingGrow = 4.0;
constexpr double kDampingShrink = 4.0;
constexpr double kDampingMax = 1e4;
constexpr int kMaxSoc = 4;
constexpr double kSocDecrease = 0.99;
constexpr double kDamping = 1e-5;         // linear damping on single-bounded variables
constexpr double kKappaSigma = 1e10;
constexpr double kArmijo = 1e-8;
constexpr double kPenaltyRho = 0.1;
constexpr int kNonmonotoneMemory = 4;
constexpr double kScaleMax = 100.0;

bool finite_bound(double b) { return std::isfinite(b) && std::fabs(b) < kInfiniteBound; }

struct Bounds {
  Vec lo;
  Vec hi;
  std::vector<char> has_lo;
  std::vector<char> has_hi;
  std::vector<char> fixed;
  int num_bounded = 0;
};

Bounds read_bounds(const NlpProblem& nlp) {
  const int n = nlp.num_variables();
  std::vector<double> lo(n), hi(n);
  nlp.bounds(lo, hi);
  Bounds b;
  b.lo = Eigen::Map<Vec>(lo.data(), n);
  b.hi = Eigen::Map<Vec>(hi.data(), n);
  b.has_lo.assign(n, 0);
  b.has_hi.assign(n, 0);
  b.fixed.assign(n, 0);
  for (int j = 0; j < n; ++j) {
    if (finite_bound(lo[j]) && finite_bound(hi[j]) && lo[j] > hi[j]) {
      throw InputError("ipsolve: lower bound exceeds upper bound for variable " + std::to_string(j));
    }
    if (finite_bound(lo[j]) && finite_bound(hi[j]) &&
        hi[j] - lo[j] <= 1e-14 * std::max(1.0, std::fabs(lo[j]))) {
      b.fixed[j] = 1;
      continue;
    }
    b.has_lo[j] = finite_bound(lo[j]);
    b.has_hi[j] = finite_bound(hi[j]);
    b.num_bounded += b.has_lo[j] + b.has_hi[j];
  }
  return b;
}

// Limited-memory BFGS approximation kept as stored pairs; materialized densely.
class Lbfgs {
 public:
  explicit Lbfgs(int memory) : memory_(memory) {}

  void update(const Vec& s, const Vec& y) {
    const double sy = s.dot(y);
    if (!(sy > 1e-10 * s.norm() * y.norm()) || !std::isfinite(sy)) return;
    pairs_.emplace_back(s, y);
    if (static_cast<int>(pairs_.size()) > memory_) pairs_.pop_front();
  }

  Eigen::MatrixXd dense(int n) const {
    double sigma = 1.0;
    if (!pairs_.empty()) {
      const auto& [s, y] = pairs_.back();
      sigma = std::clamp(y.squaredNorm() / s.dot(y), 1e-8, 1e8);
    }
    Eigen::MatrixXd b = sigma * Eigen::MatrixXd::Identity(n, n);
    for (const auto& [s, y] : pairs_) {
      const Vec bs = b * s;
      const double sbs = s.dot(bs);
      const double sy = s.dot(y);
      if (!(sbs > 0.0) || !(sy > 0.0)) continue;
      b -= bs * bs.transpose() / sbs;
      b += y * y.transpose() / sy;
    }
    return b;
  }

 private:
  int memory_;
  std::deque<std::pair<Vec, Vec>> pairs_;
};

struct Inertia {
  int positive = 0;
  int negative = 0;
  int zero = 0;
};

// Condensed primal-dual matrix
//   [ W + Sigma_x + delta_w I        J^T           ]
//   [ J                       -diag(D_c) - delta_c ]
// assembled once structurally and refactorized each iteration.
class KktSystem {
 public:
  KktSystem(int n, int m, const diff::SparsityPattern& jac, const std::vector<char>& fixed,
            const diff::SparsityPattern* hess, bool dense_hessian, int dense_threshold)
      : n_(n), m_(m), fixed_(fixed), dense_threshold_(dense_threshold) {
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < n + m; ++i) trip.emplace_back(i, i, 0.0);
    if (dense_hessian) {
      for (int c = 0; c < n; ++c) {
        for (int r = c + 1; r < n; ++r) {
          if (!fixed[r] && !fixed[c]) trip.emplace_back(r, c, 0.0);
        }
      }
    } else if (hess) {
      for (std::size_t k = 0; k < hess->nnz(); ++k) {
        const int r = hess->row[k];
        const int c = hess->col[k];
        if (r != c && !fixed[r] && !fixed[c]) trip.emplace_back(std::max(r, c), std::min(r, c), 0.0);
      }
    }
    for (std::size_t k = 0; k < jac.nnz(); ++k) {
      if (!fixed[jac.col[k]]) trip.emplace_back(n + jac.row[k], jac.col[k], 0.0);
    }
    k_.resize(n + m, n + m);
    k_.setFromTriplets(trip.begin(), trip.end());
    k_.makeCompressed();
    diag_pos_.resize(n + m);
    for (int i = 0; i < n + m; ++i) diag_pos_[i] = position(i, i);
    if (hess && !dense_hessian) {
      hess_pos_.resize(hess->nnz(), -1);
      for (std::size_t k = 0; k < hess->nnz(); ++k) {
        const int r = hess->row[k];
        const int c = hess->col[k];
        if (fixed[r] || fixed[c]) continue;
        hess_pos_[k] = position(std::max(r, c), std::min(r, c));
      }
    }
    jac_pos_.resize(jac.nnz(), -1);
    for (std::size_t k = 0; k < jac.nnz(); ++k) {
      if (!fixed[jac.col[k]]) jac_pos_[k] = position(n + jac.row[k], jac.col[k]);
    }
    ldlt_.analyzePattern(k_);
  }

  // Fills values; `base_diag` holds Sigma_x on x rows and -D_c on constraint rows.
  void assemble(const std::vector<double>* hess_values, const Eigen::MatrixXd* dense_hess,
                const std::vector<double>& jac_values, const Vec& base_diag) {
    double* val = k_.valuePtr();
    std::fill(val, val + k_.nonZeros(), 0.0);
    for (int i = 0; i < n_ + m_; ++i) val[diag_pos_[i]] = base_diag[i];
    if (dense_hess) {
      for (int c = 0; c < n_; ++c) {
        if (fixed_[c]) continue;
        val[diag_pos_[c]] += (*dense_hess)(c, c);
        for (int r = c + 1; r < n_; ++r) {
          if (!fixed_[r]) k_.coeffRef(r, c) = (*dense_hess)(r, c);
        }
      }
    } else if (hess_values) {
      for (std::size_t k = 0; k < hess_pos_.size(); ++k) {
        if (hess_pos_[k] >= 0) val[hess_pos_[k]] += (*hess_values)[k];
      }
    }
    for (std::size_t k = 0; k < jac_pos_.size(); ++k) {
      if (jac_pos_[k] >= 0) val[jac_pos_[k]] += jac_values[k];
    }
    for (int j = 0; j < n_; ++j) {
      if (fixed_[j]) val[diag_pos_[j]] = 1.0;
    }
    assembled_ = Eigen::Map<const Eigen::VectorXd>(val, k_.nonZeros());
  }

  // Factorizes with delta_w added to the free primal diagonal.
  bool factorize(double delta_w, Inertia& inertia) {
    double* val = k_.valuePtr();
    Eigen::Map<Eigen::VectorXd>(val, k_.nonZeros()) = assembled_;
    for (int j = 0; j < n_; ++j) {
      if (!fixed_[j]) val[diag_pos_[j]] += delta_w;
    }
    use_dense_ = false;
    ldlt_.factorize(k_);
    Vec d;
    bool ok = ldlt_.info() == Eigen::Success;
    if (ok) {
      d = ldlt_.vectorD();
      ok = d.allFinite();
    }
    if (!ok && n_ + m_ <= dense_threshold_) {
      const SpMat sym = SpMat(k_.selfadjointView<Eigen::Lower>());
      const Eigen::MatrixXd full = Eigen::MatrixXd(sym);
      dense_.compute(full);
      if (dense_.info() != Eigen::Success) return false;
      d = dense_.vectorD();
      if (!d.allFinite()) return false;
      use_dense_ = true;
      ok = true;
    }
    if (!ok) return false;
    inertia = {};
    const double tiny = 1e-300;
    for (int i = 0; i < d.size(); ++i) {
      if (d[i] > tiny) ++inertia.positive;
      else if (d[i] < -tiny) ++inertia.negative;
      else ++inertia.zero;
    }
    return true;
  }

  Vec solve(const Vec& rhs) const {
    Vec x = use_dense_ ? Vec(dense_.solve(rhs)) : Vec(ldlt_.solve(rhs));
    // Two rounds of iterative refinement against the regularized matrix.
    for (int it = 0; it < 2; ++it) {
      const Vec r = rhs - k_.selfadjointView<Eigen::Lower>() * x;
      if (r.lpNorm<Eigen::Infinity>() <= 1e-14 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>())) break;
      x += use_dense_ ? Vec(dense_.solve(r)) : Vec(ldlt_.solve(r));
    }
    return x;
  }

 private:
  int position(int r, int c) const {
    const int* outer = k_.outerIndexPtr();
    const int* inner = k_.innerIndexPtr();
    const int* begin = inner + outer[c];
    const int* end = inner + outer[c + 1];
    const int* it = std::lower_bound(begin, end, r);
    if (it == end || *it != r) throw std::logic_error("KktSystem: missing structural entry");
    return static_cast<int>(it - inner);
  }

  int n_;
  int m_;
  std::vector<char> fixed_;
  int dense_threshold_;
  SpMat k_;
  Eigen::VectorXd assembled_;
  std::vector<int> diag_pos_;
  std::vector<int> hess_pos_;
  std::vector<int> jac_pos_;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  Eigen::LDLT<Eigen::MatrixXd> dense_;
  bool use_dense_ = false;
};

struct Evaluation {
  double f = 0.0;
  Vec grad;
  Vec c;
  std::vector<double> jac;
};

class InteriorPoint {
 public:
  InteriorPoint(const NlpProblem& nlp, const SolverOptions& opt)
      : nlp_(nlp),
        opt_(opt),
        n_(nlp.num_variables()),
        me_(nlp.num_equalities()),
        mi_(nlp.num_inequalities()),
        m_(me_ + mi_),
        pattern_(nlp.jacobian_pattern()),
        bounds_(read_bounds(nlp)),
        sf_(nlp.objective_scale()),
        log_(opt.log ? opt.log : &std::cerr) {
    if (pattern_.rows != m_ || pattern_.cols != n_) {
      throw LayoutError("ipsolve: Jacobian pattern does not match problem dimensions");
    }
    use_problem_hessian_ = opt.hessian == HessianMode::problem ||
                           (opt.hessian == HessianMode::automatic && nlp.has_hessian());
    if (use_problem_hessian_ && !nlp.has_hessian()) {
      throw InputError("ipsolve: Hessian mode 'problem' requested but the problem provides none");
    }
    if (!use_problem_hessian_ && n_ > opt.lbfgs_max_dim) {
      throw InputError("ipsolve: limited-memory Hessian limited to " + std::to_string(opt.lbfgs_max_dim) +
                       " variables; provide a problem Hessian");
    }
  }

  NlpSolution run(std::span<const double> z0, const NlpSolution* warm) {
    const auto t_start = std::chrono::steady_clock::now();
    NlpSolution out;
    if (static_cast<int>(z0.size()) != n_) throw LayoutError("ipsolve: initial point has wrong dimension");
    for (double v : z0) {
      if (!std::isfinite(v)) throw InputError("ipsolve: initial point is not finite");
    }

    KktSystem kkt(n_, m_, pattern_, bounds_.fixed, use_problem_hessian_ ? &nlp_.hessian_pattern() : nullptr,
                  !use_problem_hessian_, opt_.dense_threshold);
    Lbfgs lbfgs(opt_.lbfgs_memory);

    mu_ = warm ? opt_.warm_mu_init : opt_.mu_init;
    const double push = warm ? opt_.warm_bound_push : opt_.bound_push;
    x_ = Eigen::Map<const Vec>(z0.data(), n_);
    push_into_bounds(push);

    Evaluation ev;
    if (!evaluate(x_, ev, true)) {
      out.status = SolveStatus::error;
      out.message = "callbacks not finite at the initial point";
      return finish(out, ev, t_start);
    }
    s_ = ev.c.tail(mi_);
    for (int i = 0; i < mi_; ++i) s_[i] = std::max(s_[i], push * std::max(1.0, std::fabs(s_[i])));
    init_bound_multipliers(warm != nullptr);
    init_constraint_multipliers(ev, warm, kkt);

    double delta_w_last = 0.0;
    int acceptable_count = 0;
    int ls_failures = 0;
    // Levenberg damping raised after short steps and relaxed after full ones.
    double damping = 0.0;
    std::deque<std::pair<double, double>> history;  // (barrier phi, theta)
    const double mu_min = opt_.tol_opt / 10.0;

    std::vector<double> hess_values;
    if (use_problem_hessian_) hess_values.resize(nlp_.hessian_pattern().nnz());
    Eigen::MatrixXd dense_b;

    for (int iter = 0;; ++iter) {
      out.iterations = iter;
      Errors err = errors(ev, 0.0);
      if (err.total <= opt_.tol_opt && err.primal <= opt_.tol_feas) {
        out.status = SolveStatus::optimal;
        break;
      }
      acceptable_count = acceptable(err) ? acceptable_count + 1 : 0;
      if (acceptable_count >= opt_.acceptable_iter) {
        out.status = SolveStatus::acceptable;
        break;
      }
      if (iter >= opt_.max_iter) {
        out.status = fallback_status(err, SolveStatus::max_iter);
        out.message = "iteration limit reached";
        break;
      }
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
      if (elapsed > opt_.max_wall_time) {
        out.status = fallback_status(err, SolveStatus::max_iter);
        out.message = "wall time limit reached";
        break;
      }

      bool mu_changed = false;
      while (mu_ > mu_min && errors(ev, mu_).total <= opt_.barrier_tol_factor * mu_) {
        mu_ = std::max(mu_min, std::min(opt_.mu_linear_factor * mu_, std::pow(mu_, opt_.mu_superlinear_power)));
        mu_changed = true;
      }
      if (mu_changed) history.clear();

      // Hessian of the Lagrangian.
      if (use_problem_hessian_) {
        std::vector<double> y(y_.data(), y_.data() + m_);
        nlp_.hessian(std::span<const double>(x_.data(), n_), sf_, y, hess_values);
      } else {
        dense_b = lbfgs.dense(n_);
        for (int j = 0; j < n_; ++j) {
          if (bounds_.fixed[j]) {
            dense_b.row(j).setZero();
            dense_b.col(j).setZero();
          }
        }
      }

      // Condensed system.
      Vec base(n_ + m_);
      for (int j = 0; j < n_; ++j) base[j] = sigma_x(j);
      for (int i = 0; i < me_; ++i) base[n_ + i] = -kDeltaC;
      for (int i = 0; i < mi_; ++i) base[n_ + me_ + i] = -s_[i] / v_[i] - kDeltaC;
      kkt.assemble(use_problem_hessian_ ? &hess_values : nullptr, use_problem_hessian_ ? nullptr : &dense_b,
                   ev.jac, base);

      double delta_w = damping;
      Inertia inertia;
      bool factored = kkt.factorize(delta_w, inertia) && inertia_ok(inertia);
      if (!factored) {
        delta_w = std::max(damping, delta_w_last == 0.0 ? kDeltaWInit : std::max(kDeltaWMin, delta_w_last / 3.0));
        while (true) {
          factored = kkt.factorize(delta_w, inertia) && inertia_ok(inertia);
          if (factored) break;
          delta_w *= delta_w_last == 0.0 ? 100.0 : 8.0;
          if (delta_w > kDeltaWMax) break;
        }
        if (!factored) {
          out.status = fallback_status(err, SolveStatus::error);
          out.message = "KKT system could not be factorized with correct inertia";
          break;
        }
        delta_w_last = delta_w;
      }

      const Vec gphi = barrier_gradient(ev);
      const Vec jty = jac_transpose_times(ev.jac, y_);
      Vec primal_residual(m_);
      primal_residual.head(me_) = ev.c.head(me_);
      primal_residual.tail(mi_) = ev.c.tail(mi_) - s_;
      Step d;
      if (!newton_step(kkt, gphi, jty, primal_residual, d)) {
        out.status = fallback_status(err, SolveStatus::error);
        out.message = "non-finite Newton step";
        break;
      }
      const double tau = std::max(opt_.fraction_to_boundary, 1.0 - mu_);
      const double alpha_max = primal_step_max(d, tau);

      // Penalty parameter of the l1 merit function.
      const double theta0 = theta(ev.c, s_);
      double dphi = gphi.dot(d.x);
      for (int i = 0; i < mi_; ++i) dphi += (-mu_ / s_[i]) * d.s[i];
      if (theta0 > 0.0) {
        double quad = 0.0;
        if (use_problem_hessian_) {
          quad = hessian_quadratic(hess_values, d.x);
        } else {
          quad = d.x.dot(dense_b * d.x);
        }
        for (int j = 0; j < n_; ++j) quad += (sigma_x(j) + (bounds_.fixed[j] ? 0.0 : delta_w)) * d.x[j] * d.x[j];
        for (int i = 0; i < mi_; ++i) quad += v_[i] / s_[i] * d.s[i] * d.s[i];
        const double nu_trial = (dphi + 0.5 * std::max(0.0, quad)) / ((1.0 - kPenaltyRho) * theta0);
        if (nu_ < nu_trial) nu_ = 1.1 * nu_trial + 1e-8;
      }
      const double phi0 = barrier_value(ev.f, x_, s_);
      const double merit0 = phi0 + nu_ * theta0;
      const double slope = dphi - nu_ * theta0;
      double reference = merit0;
      for (const auto& [phi_k, theta_k] : history) reference = std::max(reference, phi_k + nu_ * theta_k);

      double alpha = alpha_max;
      bool accepted = false;
      Evaluation trial;
      Vec x_trial;
      Vec s_trial;
      Step d_taken = d;
      auto acceptable_merit = [&](const Evaluation& e, const Vec& xt, const Vec& st, double a) {
        const double merit = barrier_value(e.f, xt, st) + nu_ * theta(e.c, st);
        const double tol_round = 1e-14 * std::max(1.0, std::fabs(merit0));
        return std::isfinite(merit) && (merit <= reference + kArmijo * a * std::min(slope, 0.0) + tol_round ||
                                        (slope > -1e-300 && merit <= merit0 + tol_round));
      };
      const double alpha_min = 1e-12 * std::max(1.0, alpha_max);
      bool first_trial = true;
      while (alpha >= alpha_min) {
        x_trial = x_ + alpha * d.x;
        s_trial = s_ + alpha * d.s;
        const bool finite = evaluate(x_trial, trial, false);
        if (finite && acceptable_merit(trial, x_trial, s_trial, alpha)) {
          accepted = true;
          d_taken = d;
          break;
        }
        if (finite && first_trial && theta(trial.c, s_trial) >= theta0) {
          // Second-order correction of the constraint curvature, reusing the factorization.
          Vec c_soc = alpha * primal_residual;
          double theta_prev = std::numeric_limits<double>::infinity();
          double theta_trial = theta(trial.c, s_trial);
          for (int k = 0; k < kMaxSoc && theta_trial < kSocDecrease * theta_prev; ++k) {
            c_soc.head(me_) += trial.c.head(me_);
            c_soc.tail(mi_) += trial.c.tail(mi_) - s_trial;
            Step dc;
            if (!newton_step(kkt, gphi, jty, c_soc, dc)) break;
            const double alpha_soc = primal_step_max(dc, tau);
            const Vec x_soc = x_ + alpha_soc * dc.x;
            const Vec s_soc = s_ + alpha_soc * dc.s;
            Evaluation trial_soc;
            if (!evaluate(x_soc, trial_soc, false)) break;
            if (acceptable_merit(trial_soc, x_soc, s_soc, alpha)) {
              accepted = true;
              trial = std::move(trial_soc);
              x_trial = x_soc;
              s_trial = s_soc;
              d_taken = dc;
              alpha = alpha_soc;
              break;
            }
            theta_prev = theta_trial;
            theta_trial = theta(trial_soc.c, s_soc);
            trial = std::move(trial_soc);
            x_trial = x_soc;
            s_trial = s_soc;
            c_soc *= alpha_soc;
          }
          if (accepted) break;
        }
        first_trial = false;
        alpha *= 0.5;
      }
      if (!accepted) {
        ++ls_failures;
        if (ls_failures >= 5) {
          out.status = fallback_status(err, SolveStatus::error);
          out.message = "line search failed repeatedly";
          break;
        }
        // Take a tiny step to escape and push the regularization up.
        alpha = std::min(alpha_max, 1e-4);
        x_trial = x_ + alpha * d.x;
        s_trial = s_ + alpha * d.s;
        delta_w_last = std::max(delta_w_last * 10.0, kDeltaWInit);
      } else {
        ls_failures = 0;
      }
      if (alpha < kShortStep) {
        damping = damping == 0.0 ? kDampingInit : std::min(kDampingMax, kDampingGrow * damping);
      } else if (alpha >= 0.5) {
        damping /= kDampingShrink;
        if (damping < kDampingInit * 1e-4) damping = 0.0;
      }

      history.emplace_back(phi0, theta0);
      if (static_cast<int>(history.size()) > kNonmonotoneMemory) history.pop_front();

      // Accept the primal-dual step.
      const Vec x_old = x_;
      const Vec grad_old = ev.grad;
      const std::vector<double> jac_old = ev.jac;
      x_ = x_trial;
      s_ = s_trial;
      if (!accepted) d_taken = d;
      y_ += alpha * d_taken.y;
      const double alpha_z = std::min(dual_step_max(d_taken, tau), 1.0);
      zl_ += alpha_z * d_taken.zl;
      zu_ += alpha_z * d_taken.zu;
      v_ += alpha_z * d_taken.v;
      for (int i = 0; i < mi_; ++i) s_[i] = std::max(s_[i], 1e-300);
      if (!evaluate(x_, ev, true)) {
        out.status = SolveStatus::error;
        out.message = "callbacks not finite at accepted point";
        break;
      }
      safeguard_bound_multipliers();

      if (!use_problem_hessian_) {
        const Vec gl_old = sf_ * grad_old + jac_transpose_times(jac_old, y_);
        const Vec gl_new = sf_ * ev.grad + jac_transpose_times(ev.jac, y_);
        Vec sx = x_ - x_old;
        Vec yx = gl_new - gl_old;
        for (int j = 0; j < n_; ++j) {
          if (bounds_.fixed[j]) sx[j] = yx[j] = 0.0;
        }
        lbfgs.update(sx, yx);
      }

      if (opt_.verbose) {
        char line[256];
        std::snprintf(line, sizeof line,
                      "iter %4d  mu %9.2e  f %+.10e  merit %+.6e  inf_pr %9.2e  inf_du %9.2e  |dx| %9.2e  "
                      "a_p %8.2e  a_d %8.2e  dw %8.1e  kkt %9.2e\n",
                      iter, mu_, ev.f, merit0, err.primal, err.dual, d.x.lpNorm<Eigen::Infinity>(), alpha,
                      alpha_z, delta_w, err.total);
        *log_ << line;
      }
    }
    return finish(out, ev, t_start);
  }

 private:
  struct Step {
    Vec x, y, s, v, zl, zu;
  };

  // Primal-dual step for the given primal residual [c_E; c_I - s].
  bool newton_step(const KktSystem& kkt, const Vec& gphi, const Vec& jty, const Vec& primal_residual, Step& d) const {
    Vec rhs(n_ + m_);
    for (int j = 0; j < n_; ++j) rhs[j] = bounds_.fixed[j] ? 0.0 : -(gphi[j] + jty[j]);
    rhs.segment(n_, me_) = -primal_residual.head(me_);
    for (int i = 0; i < mi_; ++i) {
      rhs[n_ + me_ + i] = -primal_residual[me_ + i] + (s_[i] / v_[i]) * (y_[me_ + i] + mu_ / s_[i]);
    }
    const Vec sol = kkt.solve(rhs);
    if (!sol.allFinite()) return false;
    d.x = sol.head(n_);
    d.y = sol.tail(m_);
    d.s.resize(mi_);
    d.v.resize(mi_);
    for (int i = 0; i < mi_; ++i) {
      const double sig = v_[i] / s_[i];
      d.s[i] = (d.y[me_ + i] + y_[me_ + i] + mu_ / s_[i]) / sig;
      d.v[i] = mu_ / s_[i] - v_[i] - sig * d.s[i];
    }
    d.zl = Vec::Zero(n_);
    d.zu = Vec::Zero(n_);
    for (int j = 0; j < n_; ++j) {
      if (bounds_.has_lo[j]) {
        const double gap = x_[j] - bounds_.lo[j];
        d.zl[j] = mu_ / gap - zl_[j] - zl_[j] / gap * d.x[j];
      }
      if (bounds_.has_hi[j]) {
        const double gap = bounds_.hi[j] - x_[j];
        d.zu[j] = mu_ / gap - zu_[j] + zu_[j] / gap * d.x[j];
      }
    }
    return true;
  }
  struct Errors {
    double dual = 0.0;
    double primal = 0.0;
    double compl_ = 0.0;
    double total = 0.0;
    double dual_raw = 0.0;
    double compl_raw = 0.0;
  };

  bool evaluate(const Vec& x, Evaluation& ev, bool derivatives) const {
    const std::span<const double> z(x.data(), n_);
    try {
      ev.f = nlp_.objective(z);
      ev.c.resize(m_);
      nlp_.constraints(z, std::span<double>(ev.c.data(), m_));
      if (!std::isfinite(ev.f) || !ev.c.allFinite()) return false;
      if (derivatives) {
        ev.grad.resize(n_);
        nlp_.gradient(z, std::span<double>(ev.grad.data(), n_));
        ev.jac.resize(pattern_.nnz());
        nlp_.jacobian(z, ev.jac);
        if (!ev.grad.allFinite()) return false;
        for (double v : ev.jac) {
          if (!std::isfinite(v)) return false;
        }
      }
    } catch (const EvaluationError&) {
      return false;
    } catch (const diff::DiffError&) {
      return false;
    }
    return true;
  }

  void push_into_bounds(double push) {
    for (int j = 0; j < n_; ++j) {
      if (bounds_.fixed[j]) {
        x_[j] = bounds_.lo[j];
        continue;
      }
      const bool lo = bounds_.has_lo[j];
      const bool hi = bounds_.has_hi[j];
      if (lo && hi) {
        const double width = bounds_.hi[j] - bounds_.lo[j];
        const double pl = std::min(push * std::max(1.0, std::fabs(bounds_.lo[j])), push * width);
        const double pu = std::min(push * std::max(1.0, std::fabs(bounds_.hi[j])), push * width);
        x_[j] = std::clamp(x_[j], bounds_.lo[j] + pl, bounds_.hi[j] - pu);
        if (!(x_[j] > bounds_.lo[j] && x_[j] < bounds_.hi[j])) x_[j] = 0.5 * (bounds_.lo[j] + bounds_.hi[j]);
      } else if (lo) {
        x_[j] = std::max(x_[j], bounds_.lo[j] + push * std::max(1.0, std::fabs(bounds_.lo[j])));
      } else if (hi) {
        x_[j] = std::min(x_[j], bounds_.hi[j] - push * std::max(1.0, std::fabs(bounds_.hi[j])));
      }
    }
  }

  void init_bound_multipliers(bool warm) {
    zl_ = Vec::Zero(n_);
    zu_ = Vec::Zero(n_);
    v_ = Vec::Ones(mi_);
    for (int j = 0; j < n_; ++j) {
      if (bounds_.has_lo[j]) zl_[j] = warm ? mu_ / (x_[j] - bounds_.lo[j]) : 1.0;
      if (bounds_.has_hi[j]) zu_[j] = warm ? mu_ / (bounds_.hi[j] - x_[j]) : 1.0;
    }
    if (warm) {
      for (int i = 0; i < mi_; ++i) v_[i] = mu_ / s_[i];
    }
  }

  void init_constraint_multipliers(const Evaluation& ev, const NlpSolution* warm, KktSystem& kkt) {
    y_ = Vec::Zero(m_);
    if (warm && opt_.reuse_multipliers && static_cast<int>(warm->multipliers.size()) == m_) {
      for (int i = 0; i < m_; ++i) y_[i] = warm->multipliers[i] * sf_;
      for (int i = 0; i < mi_; ++i) v_[i] = std::max(-y_[me_ + i], mu_ / s_[i]);
      for (int j = 0; j < n_ && static_cast<int>(warm->bound_lower.size()) == n_; ++j) {
        if (bounds_.has_lo[j]) zl_[j] = std::max(warm->bound_lower[j] * sf_, mu_ / (x_[j] - bounds_.lo[j]));
        if (bounds_.has_hi[j]) zu_[j] = std::max(warm->bound_upper[j] * sf_, mu_ / (bounds_.hi[j] - x_[j]));
      }
      return;
    }
    if (m_ == 0) return;
    // Least-squares multipliers: [I J^T; J -delta] [w; y] = [-(grad f - zl + zu); 0].
    Vec base(n_ + m_);
    base.head(n_).setOnes();
    base.tail(m_).setConstant(-kDeltaC);
    const std::vector<double> no_hess(use_problem_hessian_ ? nlp_.hessian_pattern().nnz() : 0, 0.0);
    const Eigen::MatrixXd zero_dense = use_problem_hessian_ ? Eigen::MatrixXd() : Eigen::MatrixXd::Zero(n_, n_);
    kkt.assemble(use_problem_hessian_ ? &no_hess : nullptr, use_problem_hessian_ ? nullptr : &zero_dense, ev.jac, base);
    Inertia inertia;
    if (!kkt.factorize(0.0, inertia)) return;
    Vec rhs = Vec::Zero(n_ + m_);
    for (int j = 0; j < n_; ++j) {
      if (!bounds_.fixed[j]) rhs[j] = -(sf_ * ev.grad[j] - zl_[j] + zu_[j]);
    }
    const Vec sol = kkt.solve(rhs);
    const Vec y = sol.tail(m_);
    if (y.allFinite() && y.lpNorm<Eigen::Infinity>() <= 1e3) y_ = y;
  }

  double sigma_x(int j) const {
    if (bounds_.fixed[j]) return 0.0;
    double s = 0.0;
    if (bounds_.has_lo[j]) s += zl_[j] / (x_[j] - bounds_.lo[j]);
    if (bounds_.has_hi[j]) s += zu_[j] / (bounds_.hi[j] - x_[j]);
    return s;
  }

  bool inertia_ok(const Inertia& in) const { return in.positive == n_ && in.negative == m_ && in.zero == 0; }

  Vec jac_transpose_times(const std::vector<double>& jac, const Vec& y) const {
    Vec out = Vec::Zero(n_);
    for (std::size_t k = 0; k < pattern_.nnz(); ++k) out[pattern_.col[k]] += jac[k] * y[pattern_.row[k]];
    return out;
  }

  double hessian_quadratic(const std::vector<double>& h, const Vec& dx) const {
    const auto& p = nlp_.hessian_pattern();
    double q = 0.0;
    for (std::size_t k = 0; k < p.nnz(); ++k) {
      const int r = p.row[k];
      const int c = p.col[k];
      if (bounds_.fixed[r] || bounds_.fixed[c]) continue;
      q += (r == c ? 1.0 : 2.0) * h[k] * dx[r] * dx[c];
    }
    return q;
  }

  // Gradient of the barrier objective in x (fixed entries zero).
  Vec barrier_gradient(const Evaluation& ev) const {
    Vec g = sf_ * ev.grad;
    for (int j = 0; j < n_; ++j) {
      if (bounds_.fixed[j]) {
        g[j] = 0.0;
        continue;
      }
      const bool lo = bounds_.has_lo[j];
      const bool hi = bounds_.has_hi[j];
      if (lo) g[j] -= mu_ / (x_[j] - bounds_.lo[j]);
      if (hi) g[j] += mu_ / (bounds_.hi[j] - x_[j]);
      if (lo && !hi) g[j] += kDamping * mu_;
      if (hi && !lo) g[j] -= kDamping * mu_;
    }
    return g;
  }

  double barrier_value(double f, const Vec& x, const Vec& s) const {
    double phi = sf_ * f;
    for (int j = 0; j < n_; ++j) {
      if (bounds_.fixed[j]) continue;
      const bool lo = bounds_.has_lo[j];
      const bool hi = bounds_.has_hi[j];
      if (lo) phi -= mu_ * std::log(x[j] - bounds_.lo[j]);
      if (hi) phi -= mu_ * std::log(bounds_.hi[j] - x[j]);
      if (lo && !hi) phi += kDamping * mu_ * (x[j] - bounds_.lo[j]);
      if (hi && !lo) phi += kDamping * mu_ * (bounds_.hi[j] - x[j]);
    }
    for (int i = 0; i < mi_; ++i) phi -= mu_ * std::log(s[i]);
    return phi;
  }

  double theta(const Vec& c, const Vec& s) const {
    double t = c.head(me_).lpNorm<1>();
    for (int i = 0; i < mi_; ++i) t += std::fabs(c[me_ + i] - s[i]);
    return t;
  }

  double primal_step_max(const Step& d, double tau) const {
    double a = 1.0;
    for (int j = 0; j < n_; ++j) {
      if (bounds_.fixed[j]) continue;
      if (bounds_.has_lo[j] && d.x[j] < 0.0) a = std::min(a, -tau * (x_[j] - bounds_.lo[j]) / d.x[j]);
      if (bounds_.has_hi[j] && d.x[j] > 0.0) a = std::min(a, tau * (bounds_.hi[j] - x_[j]) / d.x[j]);
    }
    for (int i = 0; i < mi_; ++i) {
      if (d.s[i] < 0.0) a = std::min(a, -tau * s_[i] / d.s[i]);
    }
    return a;
  }

  double dual_step_max(const Step& d, double tau) const {
    double a = 1.0;
    for (int j = 0; j < n_; ++j) {
      if (bounds_.has_lo[j] && d.zl[j] < 0.0) a = std::min(a, -tau * zl_[j] / d.zl[j]);
      if (bounds_.has_hi[j] && d.zu[j] < 0.0) a = std::min(a, -tau * zu_[j] / d.zu[j]);
    }
    for (int i = 0; i < mi_; ++i) {
      if (d.v[i] < 0.0) a = std::min(a, -tau * v_[i] / d.v[i]);
    }
    return a;
  }

  void safeguard_bound_multipliers() {
    for (int j = 0; j < n_; ++j) {
      if (bounds_.has_lo[j]) {
        const double gap = x_[j] - bounds_.lo[j];
        zl_[j] = std::clamp(zl_[j], mu_ / (kKappaSigma * gap), kKappaSigma * mu_ / gap);
      }
      if (bounds_.has_hi[j]) {
        const double gap = bounds_.hi[j] - x_[j];
        zu_[j] = std::clamp(zu_[j], mu_ / (kKappaSigma * gap), kKappaSigma * mu_ / gap);
      }
    }
    for (int i = 0; i < mi_; ++i) v_[i] = std::clamp(v_[i], mu_ / (kKappaSigma * s_[i]), kKappaSigma * mu_ / s_[i]);
  }

  Errors errors(const Evaluation& ev, double mu) const {
    Errors e;
    const Vec jty = jac_transpose_times(ev.jac, y_);
    for (int j = 0; j < n_; ++j) {
      if (bounds_.fixed[j]) continue;
      e.dual_raw = std::max(e.dual_raw, std::fabs(sf_ * ev.grad[j] + jty[j] - zl_[j] + zu_[j]));
    }
    for (int i = 0; i < mi_; ++i) e.dual_raw = std::max(e.dual_raw, std::fabs(-y_[me_ + i] - v_[i]));
    if (me_ > 0) e.primal = ev.c.head(me_).lpNorm<Eigen::Infinity>();
    for (int i = 0; i < mi_; ++i) e.primal = std::max(e.primal, std::fabs(ev.c[me_ + i] - s_[i]));
    for (int j = 0; j < n_; ++j) {
      if (bounds_.has_lo[j]) e.compl_raw = std::max(e.compl_raw, std::fabs((x_[j] - bounds_.lo[j]) * zl_[j] - mu));
      if (bounds_.has_hi[j]) e.compl_raw = std::max(e.compl_raw, std::fabs((bounds_.hi[j] - x_[j]) * zu_[j] - mu));
    }
    for (int i = 0; i < mi_; ++i) e.compl_raw = std::max(e.compl_raw, std::fabs(s_[i] * v_[i] - mu));

    const double zsum = zl_.lpNorm<1>() + zu_.lpNorm<1>() + v_.lpNorm<1>();
    const int nb = bounds_.num_bounded + mi_;
    const double sd = std::max(kScaleMax, (y_.lpNorm<1>() + zsum) / std::max(1, m_ + nb)) / kScaleMax;
    const double sc = std::max(kScaleMax, zsum / std::max(1, nb)) / kScaleMax;
    e.dual = e.dual_raw / sd;
    e.compl_ = e.compl_raw / sc;
    e.total = std::max({e.dual, e.primal, e.compl_});
    return e;
  }

  bool acceptable(const Errors& e) const {
    return e.dual <= opt_.acceptable_tol && e.compl_ <= opt_.acceptable_tol && e.primal <= opt_.tol_feas;
  }

  SolveStatus fallback_status(const Errors& e, SolveStatus otherwise) const {
    if (acceptable(e)) return SolveStatus::acceptable;
    if (e.primal > opt_.tol_feas && otherwise != SolveStatus::error) return SolveStatus::infeasible;
    return otherwise;
  }

  NlpSolution finish(NlpSolution& out, const Evaluation& ev,
                     std::chrono::steady_clock::time_point t_start) const {
    out.z.assign(x_.data(), x_.data() + n_);
    out.multipliers.resize(m_);
    for (int i = 0; i < m_; ++i) out.multipliers[i] = y_.size() == m_ ? y_[i] / sf_ : 0.0;
    out.bound_lower.assign(n_, 0.0);
    out.bound_upper.assign(n_, 0.0);
    for (int j = 0; j < n_ && zl_.size() == n_; ++j) {
      out.bound_lower[j] = zl_[j] / sf_;
      out.bound_upper[j] = zu_[j] / sf_;
    }
    out.slacks.assign(s_.data(), s_.data() + s_.size());
    out.objective = ev.f;
    out.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (out.status != SolveStatus::error || ev.c.size() == m_) {
      out.constraint_violation = constraint_violation(nlp_, out.z);
      out.kkt = kkt_certificate(nlp_, out);
    }
    if (opt_.verbose) {
      *log_ << "status " << to_string(out.status) << " after " << out.iterations << " iterations, f "
            << out.objective << ", violation " << out.constraint_violation << ", kkt " << out.kkt.scaled << '\n';
    }
    return out;
  }

  const NlpProblem& nlp_;
  const SolverOptions& opt_;
  int n_, me_, mi_, m_;
  const diff::SparsityPattern& pattern_;
  Bounds bounds_;
  double sf_;
  std::ostream* log_;
  bool use_problem_hessian_ = false;

  double mu_ = 0.1;
  double nu_ = 1.0;
  Vec x_, s_, y_, zl_, zu_, v_;
};

}  // namespace

NlpSolution solve(const NlpProblem& nlp, std::span<const double> z0, const SolverOptions& options) {
  InteriorPoint ip(nlp, options);
  return ip.run(z0, nullptr);
}

NlpSolution warm_solve(const NlpProblem& nlp, const NlpSolution& prior, const SolverOptions& options) {
  if (static_cast<int>(prior.z.size()) != nlp.num_variables()) {
    throw LayoutError("warm_solve: prior has " + std::to_string(prior.z.size()) + " variables, problem has " +
                      std::to_string(nlp.num_variables()));
  }
  if (options.reuse_multipliers &&
      static_cast<int>(prior.multipliers.size()) != nlp.num_equalities() + nlp.num_inequalities()) {
    throw LayoutError("warm_solve: prior multipliers do not match the constraint count");
  }
  InteriorPoint ip(nlp, options);
  return ip.run(prior.z, &prior);
}

double constraint_violation(const NlpProblem& nlp, std::span<const double> z) {
  const int n = nlp.num_variables();
  const int me = nlp.num_equalities();
  const int mi = nlp.num_inequalities();
  std::vector<double> c(me + mi);
  nlp.constraints(z, c);
  double v = 0.0;
  for (int i = 0; i < me; ++i) v = std::max(v, std::fabs(c[i]));
  for (int i = 0; i < mi; ++i) v = std::max(v, -c[me + i]);
  std::vector<double> lo(n), hi(n);
  nlp.bounds(lo, hi);
  for (int j = 0; j < n; ++j) {
    if (finite_bound(lo[j])) v = std::max(v, lo[j] - z[j]);
    if (finite_bound(hi[j])) v = std::max(v, z[j] - hi[j]);
  }
  if (!std::isfinite(v)) return std::numeric_limits<double>::infinity();
  return v;
}

KktError kkt_certificate(const NlpProblem& nlp, const NlpSolution& sol) {
  const int n = nlp.num_variables();
  const int me = nlp.num_equalities();
  const int mi = nlp.num_inequalities();
  KktError e;
  std::vector<double> grad(n);
  std::vector<double> c(me + mi);
  try {
    nlp.gradient(sol.z, grad);
    nlp.constraints(sol.z, c);
  } catch (const std::exception&) {
    e.stationarity = e.feasibility = e.complementarity = e.scaled = std::numeric_limits<double>::infinity();
    return e;
  }
  const auto& p = nlp.jacobian_pattern();
  std::vector<double> jac(p.nnz());
  nlp.jacobian(sol.z, jac);
  std::vector<double> r = grad;
  for (std::size_t k = 0; k < p.nnz(); ++k) r[p.col[k]] += jac[k] * sol.multipliers[p.row[k]];
  std::vector<double> lo(n), hi(n);
  nlp.bounds(lo, hi);
  for (int j = 0; j < n; ++j) {
    const bool fixed = finite_bound(lo[j]) && finite_bound(hi[j]) &&
                       hi[j] - lo[j] <= 1e-14 * std::max(1.0, std::fabs(lo[j]));
    if (fixed) continue;
    e.stationarity = std::max(e.stationarity, std::fabs(r[j] - sol.bound_lower[j] + sol.bound_upper[j]));
    if (finite_bound(lo[j])) e.complementarity = std::max(e.complementarity, (sol.z[j] - lo[j]) * sol.bound_lower[j]);
    if (finite_bound(hi[j])) e.complementarity = std::max(e.complementarity, (hi[j] - sol.z[j]) * sol.bound_upper[j]);
  }
  for (int i = 0; i < mi; ++i) {
    // Inequality multipliers are non-positive for c_I >= 0 under L = f + y^T c.
    e.stationarity = std::max(e.stationarity, std::max(0.0, sol.multipliers[me + i]));
    e.complementarity = std::max(e.complementarity, std::fabs(sol.multipliers[me + i]) * std::max(0.0, c[me + i]));
  }
  for (int i = 0; i < me; ++i) e.feasibility = std::max(e.feasibility, std::fabs(c[i]));
  for (int i = 0; i < mi; ++i) e.feasibility = std::max(e.feasibility, std::max(0.0, -c[me + i]));
  e.scaled = std::max({e.stationarity, e.feasibility, e.complementarity});
  return e;
}

}  // namespace kiteopt::ip

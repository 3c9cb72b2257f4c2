#pragma once

// Trapezoidal direct collocation of the periodic cycle problem.
//
// The cycle is mapped to tau in [0, 1] with t = T * tau. States and controls
// live at the N+1 mesh nodes (controls piecewise linear) and the duration T is
// a decision variable multiplying every defect. The decision vector holds
// scaled values:
//
//   [ x_0 .. x_N | u_0 .. u_N | T | slacks of relaxed constraints, node-major ]
//
// Equalities are the 5N defects followed by one periodicity row per periodic
// state; inequalities are the enabled path constraints, node-major.

#include <array>
#include <span>
#include <string>
#include <vector>

#include "kiteopt/diffkit.hpp"
#include "kiteopt/ipsolve.hpp"
#include "kiteopt/ocp.hpp"

namespace kiteopt {

class Mesh {
 public:
  // Strictly increasing grid from 0 to 1. Throws InputError otherwise.
  explicit Mesh(std::vector<double> tau);
  static Mesh uniform(int intervals);

  int intervals() const { return static_cast<int>(tau_.size()) - 1; }
  int nodes() const { return static_cast<int>(tau_.size()); }
  double tau(int i) const { return tau_[i]; }
  double step(int i) const { return tau_[i + 1] - tau_[i]; }
  // Trapezoid weight of node i on [0, 1].
  double weight(int i) const;
  const std::vector<double>& grid() const { return tau_; }

 private:
  std::vector<double> tau_;
};

// One trapezoid defect row: x_next - x - (T dtau / 2)(f + f_next).
template <class S>
S trapezoid_defect(const S& x, const S& x_next, const S& f, const S& f_next, const S& duration, double dtau) {
  return x_next - x - (0.5 * dtau) * duration * (f + f_next);
}

class DecisionLayout {
 public:
  enum class Kind { state, control, time, slack };
  struct Slot {
    Kind kind;
    int node;       // -1 for time
    int component;  // state/control index or relaxed-constraint ordinal
  };

  DecisionLayout(int intervals, int num_relaxed);

  int nodes() const { return nodes_; }
  int num_relaxed() const { return relaxed_; }
  int size() const { return time() + 1 + relaxed_ * nodes_; }

  int state(int node, int k) const { return node * kNumStates + k; }
  int control(int node, int k) const { return nodes_ * kNumStates + node * kNumControls + k; }
  int time() const { return nodes_ * (kNumStates + kNumControls); }
  int slack(int relaxed, int node) const { return time() + 1 + node * relaxed_ + relaxed; }

  // Inverse of the index maps. Throws LayoutError when out of range.
  Slot locate(int index) const;

 private:
  int nodes_;
  int relaxed_;
};

struct ConstraintResidual {
  std::string name;
  double max_violation = 0.0;  // scaled units, 0 when satisfied
};

struct SolverDiagnostics {
  ip::SolveStatus status = ip::SolveStatus::error;
  int iterations = 0;
  double kkt_error = 0.0;
  double wall_time = 0.0;  // [s]
  std::string message;
  std::string log;  // per-iteration solver output when captured
};

// Physical trajectory recovered from a decision vector.
struct CycleResult {
  double wind_ref = 0.0;
  std::vector<double> t;  // node times [s]
  std::vector<KiteState<double>> states;
  std::vector<KiteControl<double>> controls;
  std::vector<FlowState<double>> flow;
  std::vector<char> reel_out;  // phase label per node
  double cycle_time = 0.0;
  CycleEnergy energy;
  double objective = 0.0;
  std::vector<ConstraintResidual> residuals;
  double max_violation = 0.0;         // max over residuals, scaled
  double periodicity_residual = 0.0;  // max |x_0 - x_N| over periodic states, scaled
  double peak_force = 0.0;            // [N]
  double peak_elec_power = 0.0;       // [W]
  bool feasible = false;              // converged solve and max_violation <= tol_feas

  SolverDiagnostics solver;
  ip::NlpSolution solution;  // raw solver output, for warm starts
  std::vector<double> z;     // scaled decision vector
  int seed = 0;              // provenance of the initial guess
  int start_index = 0;
};

struct Evaluation {
  double objective = 0.0;
  std::vector<double> constraints;  // [equalities; inequalities]
};

class CollocationNlp final : public ip::NlpProblem {
 public:
  CollocationNlp(ScaledOcp ocp, Mesh mesh);

  const OcpProblem& problem() const { return ocp_.problem; }
  const ScaleMap& map() const { return ocp_.map; }
  const Mesh& mesh() const { return mesh_; }
  const DecisionLayout& layout() const { return layout_; }
  int num_periodic() const { return static_cast<int>(periodic_.size()); }
  int num_path() const { return static_cast<int>(ocp_.problem.path.size()); }

  int num_variables() const override { return layout_.size(); }
  int num_equalities() const override;
  int num_inequalities() const override;
  void bounds(std::span<double> lower, std::span<double> upper) const override;
  double objective(std::span<const double> z) const override;
  void gradient(std::span<const double> z, std::span<double> grad) const override;
  void constraints(std::span<const double> z, std::span<double> values) const override;
  const diff::SparsityPattern& jacobian_pattern() const override { return jac_pattern_; }
  void jacobian(std::span<const double> z, std::span<double> values) const override;
  bool has_hessian() const override { return true; }
  // Node weights sum to one, so per-variable gradients are O(1/N) unscaled.
  double objective_scale() const override { return static_cast<double>(mesh_.intervals()); }
  const diff::SparsityPattern& hessian_pattern() const override { return hess_pattern_; }
  void hessian(std::span<const double> z, double objective_factor, std::span<const double> multipliers,
               std::span<double> values) const override;

  // Objective and constraints with the node of the first non-finite entry
  // reported through EvaluationError.
  Evaluation evaluate(std::span<const double> z) const;
  CycleResult extract(std::span<const double> z) const;

  // Builds a scaled decision vector from physical node values. Slacks start at zero.
  std::vector<double> pack(std::span<const std::array<double, kNumStates>> states,
                           std::span<const std::array<double, kNumControls>> controls, double duration) const;

  // Row names for diagnostics: "defect[i].k", "periodicity.k", "<path>[i]".
  std::string row_name(int row) const;

  template <class S>
  void eval_constraints(std::span<const S> z, std::span<S> out) const;
  template <class S>
  S eval_objective(std::span<const S> z) const;

 private:
  template <class S>
  void node_values(std::span<const S> z, int i, KiteState<S>& x, KiteControl<S>& u) const;
  template <class S>
  S node_cost(const KiteState<S>& x, const KiteControl<S>& u, double weight) const;
  template <class S>
  S interval_cost(const S& steer0, const S& steer1, const S& reel0, const S& reel1, double dtau) const;

  void build_jacobian_pattern();
  void build_hessian_pattern();
  void check_finite(std::span<const double> values, double objective) const;

  ScaledOcp ocp_;
  Mesh mesh_;
  DecisionLayout layout_;
  std::vector<int> periodic_;        // periodic state indices
  std::vector<int> relaxed_ordinal_; // per path constraint, ordinal among relaxed or -1
  diff::SparsityPattern jac_pattern_;
  diff::ColumnColoring coloring_;
  diff::SparsityPattern hess_pattern_;
  // Hessian value slots: per node a 9x9 lower block over (x_i, u_i, T), per
  // interval a 5x5 lower block over (steer_i, steer_i+1, reel_i, reel_i+1, T).
  std::vector<int> node_slots_;
  std::vector<int> interval_slots_;
};

// Constraint vector of a CollocationNlp as a differentiable function of z.
class CollocationConstraints final : public diff::VectorFunction {
 public:
  explicit CollocationConstraints(const CollocationNlp& nlp) : nlp_(nlp) {}
  int num_inputs() const override { return nlp_.num_variables(); }
  int num_outputs() const override { return nlp_.num_equalities() + nlp_.num_inequalities(); }
  void evaluate(std::span<const double> z, std::span<double> out) const override;
  void evaluate(std::span<const diff::SeedDual> z, std::span<diff::SeedDual> out) const override;

 private:
  const CollocationNlp& nlp_;
};

CollocationNlp transcribe(const ScaledOcp& ocp, const Mesh& mesh);
Evaluation evaluate(const CollocationNlp& nlp, std::span<const double> z);
CycleResult extract(const CollocationNlp& nlp, std::span<const double> z);

// Half the number of sign changes of the azimuth between consecutive reel-out nodes.
double count_lobes(const CycleResult& result);

}  // namespace kiteopt

#include "kiteopt/transcribe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "kiteopt/errors.hpp"

namespace kiteopt {

Mesh::Mesh(std::vector<double> tau) : tau_(std::move(tau)) {
  if (tau_.size() < 2) throw InputError("mesh: need at least one interval");
  if (tau_.front() != 0.0 || tau_.back() != 1.0) throw InputError("mesh: grid must start at 0 and end at 1");
  for (std::size_t i = 1; i < tau_.size(); ++i) {
    if (!(tau_[i] > tau_[i - 1])) throw InputError("mesh: grid not strictly increasing at " + std::to_string(i));
  }
}

Mesh Mesh::uniform(int intervals) {
  if (intervals < 1) throw InputError("mesh: need at least one interval");
  std::vector<double> tau(intervals + 1);
  for (int i = 0; i <= intervals; ++i) tau[i] = static_cast<double>(i) / intervals;
  tau.back() = 1.0;
  return Mesh(std::move(tau));
}

double Mesh::weight(int i) const {
  double w = 0.0;
  if (i > 0) w += 0.5 * step(i - 1);
  if (i < intervals()) w += 0.5 * step(i);
  return w;
}

DecisionLayout::DecisionLayout(int intervals, int num_relaxed) : nodes_(intervals + 1), relaxed_(num_relaxed) {
  if (intervals < 1 || num_relaxed < 0) throw ip::LayoutError("layout: invalid dimensions");
}

DecisionLayout::Slot DecisionLayout::locate(int index) const {
  if (index < 0 || index >= size()) throw ip::LayoutError("layout: index " + std::to_string(index) + " out of range");
  if (index < nodes_ * kNumStates) return {Kind::state, index / kNumStates, index % kNumStates};
  if (index < time()) {
    const int j = index - nodes_ * kNumStates;
    return {Kind::control, j / kNumControls, j % kNumControls};
  }
  if (index == time()) return {Kind::time, -1, 0};
  const int j = index - time() - 1;
  return {Kind::slack, j / relaxed_, j % relaxed_};
}

namespace {

constexpr int kNodeVars = kNumStates + kNumControls;
constexpr int kNodeElem = kNodeVars + 1;  // with T
constexpr int kIntervalElem = 5;

// Which of (state, control) components a path constraint depends on.
std::array<bool, kNodeVars> path_dependence(PathKind kind, bool sheared) {
  std::array<bool, kNodeVars> d{};
  auto flow = [&](bool with_trim) {
    d[kTether] = sheared;
    d[kElevation] = true;
    d[kAzimuth] = true;
    d[kTrim] = with_trim;
    d[kNumStates + kReelSpeed] = true;
  };
  switch (kind) {
    case PathKind::height:
      d[kTether] = true;
      d[kElevation] = true;
      break;
    case PathKind::force_hi:
    case PathKind::force_lo:
    case PathKind::power_cap: flow(true); break;
    case PathKind::effective_wind: flow(false); break;
  }
  return d;
}

std::array<bool, kNodeVars> rate_dependence(int k, bool frozen) {
  std::array<bool, kNodeVars> d{};
  switch (k) {
    case kTether: d[kNumStates + kReelSpeed] = true; break;
    case kTrim: d[kNumStates + kTrimRate] = true; break;
    default:
      if (frozen) break;
      for (int j : {static_cast<int>(kTether), static_cast<int>(kElevation), static_cast<int>(kAzimuth),
                    static_cast<int>(kHeading), static_cast<int>(kTrim)}) {
        d[j] = true;
      }
      d[kNumStates + kReelSpeed] = true;
      if (k == kHeading) d[kNumStates + kSteer] = true;
      break;
  }
  return d;
}

int pattern_index(const diff::SparsityPattern& p, int r, int c) {
  // Canonical patterns are row-major sorted.
  std::size_t lo = 0;
  std::size_t hi = p.nnz();
  while (lo < hi) {
    const std::size_t mid = (lo + hi) / 2;
    if (p.row[mid] < r || (p.row[mid] == r && p.col[mid] < c)) lo = mid + 1;
    else hi = mid;
  }
  if (lo == p.nnz() || p.row[lo] != r || p.col[lo] != c) throw std::logic_error("pattern entry missing");
  return static_cast<int>(lo);
}

template <std::size_t M>
void lower_slots(const diff::SparsityPattern& p, const std::array<int, M>& vars, std::vector<int>& slots) {
  for (std::size_t a = 0; a < M; ++a) {
    for (std::size_t b = 0; b <= a; ++b) {
      const int r = std::max(vars[a], vars[b]);
      const int c = std::min(vars[a], vars[b]);
      slots.push_back(pattern_index(p, r, c));
    }
  }
}

}  // namespace

CollocationNlp::CollocationNlp(ScaledOcp ocp, Mesh mesh)
    : ocp_(std::move(ocp)), mesh_(std::move(mesh)), layout_(mesh_.intervals(), ocp_.problem.num_relaxed()) {
  for (int k = 0; k < kNumStates; ++k) {
    if (ocp_.problem.options.periodic[k]) periodic_.push_back(k);
  }
  int ordinal = 0;
  for (const auto& c : ocp_.problem.path) relaxed_ordinal_.push_back(c.relaxed ? ordinal++ : -1);
  build_jacobian_pattern();
  coloring_ = diff::color_columns(jac_pattern_);
  build_hessian_pattern();
}

int CollocationNlp::num_equalities() const { return kNumStates * mesh_.intervals() + num_periodic(); }
int CollocationNlp::num_inequalities() const { return num_path() * mesh_.nodes(); }

void CollocationNlp::bounds(std::span<double> lower, std::span<double> upper) const {
  const auto& p = ocp_.problem;
  const auto& sc = ocp_.map.scaling;
  for (int i = 0; i < mesh_.nodes(); ++i) {
    for (int k = 0; k < kNumStates; ++k) {
      lower[layout_.state(i, k)] = p.state_bounds[k].lo / sc.state[k];
      upper[layout_.state(i, k)] = p.state_bounds[k].hi / sc.state[k];
    }
    for (int k = 0; k < kNumControls; ++k) {
      lower[layout_.control(i, k)] = p.control_bounds[k].lo / sc.control[k];
      upper[layout_.control(i, k)] = p.control_bounds[k].hi / sc.control[k];
    }
    for (int j = 0; j < layout_.num_relaxed(); ++j) {
      lower[layout_.slack(j, i)] = 0.0;
      upper[layout_.slack(j, i)] = std::numeric_limits<double>::infinity();
    }
  }
  lower[layout_.time()] = p.time_bounds.lo / sc.time;
  upper[layout_.time()] = p.time_bounds.hi / sc.time;
}

template <class S>
void CollocationNlp::node_values(std::span<const S> z, int i, KiteState<S>& x, KiteControl<S>& u) const {
  const auto& sc = ocp_.map.scaling;
  const S* xs = z.data() + layout_.state(i, 0);
  const S* us = z.data() + layout_.control(i, 0);
  x = {xs[0] * sc.state[0], xs[1] * sc.state[1], xs[2] * sc.state[2], xs[3] * sc.state[3], xs[4] * sc.state[4]};
  u = {us[0] * sc.control[0], us[1] * sc.control[1], us[2] * sc.control[2]};
}

template <class S>
S CollocationNlp::node_cost(const KiteState<S>& x, const KiteControl<S>& u, double weight) const {
  const auto& p = ocp_.problem;
  const FlowState<S> f = flow_state(p.params, x, u);
  const S trim = u.trim_rate / p.params.trim_rate_max;
  return weight * (-f.elec_power / p.scaling.power + p.options.eps_reg * trim * trim);
}

template <class S>
S CollocationNlp::interval_cost(const S& steer0, const S& steer1, const S& reel0, const S& reel1, double dtau) const {
  const auto& p = ocp_.problem;
  // int rate^2 dtau over one interval, rates per unit of normalized time.
  const S ds = steer1 - steer0;
  const S dv = (reel1 - reel0) / p.params.reel_speed_max;
  return p.options.eps_reg * (ds * ds + dv * dv) / dtau;
}

template <class S>
S CollocationNlp::eval_objective(std::span<const S> z) const {
  const auto& p = ocp_.problem;
  S total(0.0);
  KiteState<S> x;
  KiteControl<S> u;
  for (int i = 0; i < mesh_.nodes(); ++i) {
    node_values(z, i, x, u);
    total += node_cost(x, u, mesh_.weight(i));
  }
  if (p.options.eps_reg > 0.0) {
    const auto& sc = ocp_.map.scaling;
    for (int i = 0; i < mesh_.intervals(); ++i) {
      total += interval_cost(z[layout_.control(i, kSteer)] * sc.control[kSteer],
                             z[layout_.control(i + 1, kSteer)] * sc.control[kSteer],
                             z[layout_.control(i, kReelSpeed)] * sc.control[kReelSpeed],
                             z[layout_.control(i + 1, kReelSpeed)] * sc.control[kReelSpeed], mesh_.step(i));
    }
  }
  for (std::size_t c = 0; c < p.path.size(); ++c) {
    if (relaxed_ordinal_[c] < 0) continue;
    for (int i = 0; i < mesh_.nodes(); ++i) {
      total += p.path[c].relax_weight * mesh_.weight(i) * z[layout_.slack(relaxed_ordinal_[c], i)];
    }
  }
  return total;
}

template <class S>
void CollocationNlp::eval_constraints(std::span<const S> z, std::span<S> out) const {
  const auto& p = ocp_.problem;
  const auto& sc = ocp_.map.scaling;
  const int n_nodes = mesh_.nodes();
  const S duration = z[layout_.time()] * sc.time;

  std::vector<std::array<S, kNumStates>> rates(n_nodes);
  std::vector<FlowState<S>> flows(n_nodes);
  KiteState<S> x;
  KiteControl<S> u;
  for (int i = 0; i < n_nodes; ++i) {
    node_values(z, i, x, u);
    rates[i] = p.rhs(x, u);
    flows[i] = flow_state(p.params, x, u);
  }
  int row = 0;
  for (int i = 0; i < mesh_.intervals(); ++i) {
    for (int k = 0; k < kNumStates; ++k) {
      out[row++] = trapezoid_defect(z[layout_.state(i, k)], z[layout_.state(i + 1, k)], rates[i][k] / sc.state[k],
                                    rates[i + 1][k] / sc.state[k], duration, mesh_.step(i));
    }
  }
  for (int k : periodic_) out[row++] = z[layout_.state(0, k)] - z[layout_.state(n_nodes - 1, k)];
  for (int i = 0; i < n_nodes; ++i) {
    node_values(z, i, x, u);
    for (std::size_t c = 0; c < p.path.size(); ++c) {
      S v = p.path_value(p.path[c], x, flows[i]) / p.path_scale(p.path[c]);
      if (relaxed_ordinal_[c] >= 0) v += z[layout_.slack(relaxed_ordinal_[c], i)];
      out[row++] = v;
    }
  }
}

template double CollocationNlp::eval_objective<double>(std::span<const double>) const;
template diff::SeedDual CollocationNlp::eval_objective<diff::SeedDual>(std::span<const diff::SeedDual>) const;
template void CollocationNlp::eval_constraints<double>(std::span<const double>, std::span<double>) const;
template void CollocationNlp::eval_constraints<diff::SeedDual>(std::span<const diff::SeedDual>,
                                                               std::span<diff::SeedDual>) const;

void CollocationConstraints::evaluate(std::span<const double> z, std::span<double> out) const {
  nlp_.eval_constraints(z, out);
}
void CollocationConstraints::evaluate(std::span<const diff::SeedDual> z, std::span<diff::SeedDual> out) const {
  nlp_.eval_constraints(z, out);
}

void CollocationNlp::build_jacobian_pattern() {
  const auto& p = ocp_.problem;
  const bool sheared = p.params.wind.shear_exp != 0.0;
  const bool frozen = p.options.freeze_kinematics;
  diff::SparsityPattern pat;
  pat.rows = num_equalities() + num_inequalities();
  pat.cols = num_variables();
  auto add_node = [&](int row, int node, const std::array<bool, kNodeVars>& dep) {
    for (int j = 0; j < kNumStates; ++j) {
      if (dep[j]) pat.add(row, layout_.state(node, j));
    }
    for (int j = 0; j < kNumControls; ++j) {
      if (dep[kNumStates + j]) pat.add(row, layout_.control(node, j));
    }
  };
  int row = 0;
  for (int i = 0; i < mesh_.intervals(); ++i) {
    for (int k = 0; k < kNumStates; ++k) {
      const auto dep = rate_dependence(k, frozen);
      pat.add(row, layout_.state(i, k));
      pat.add(row, layout_.state(i + 1, k));
      add_node(row, i, dep);
      add_node(row, i + 1, dep);
      if (std::any_of(dep.begin(), dep.end(), [](bool b) { return b; })) pat.add(row, layout_.time());
      ++row;
    }
  }
  for (int k : periodic_) {
    pat.add(row, layout_.state(0, k));
    pat.add(row, layout_.state(mesh_.intervals(), k));
    ++row;
  }
  for (int i = 0; i < mesh_.nodes(); ++i) {
    for (std::size_t c = 0; c < p.path.size(); ++c) {
      add_node(row, i, path_dependence(p.path[c].kind, sheared));
      if (relaxed_ordinal_[c] >= 0) pat.add(row, layout_.slack(relaxed_ordinal_[c], i));
      ++row;
    }
  }
  pat.canonicalize();
  jac_pattern_ = std::move(pat);
}

void CollocationNlp::build_hessian_pattern() {
  diff::SparsityPattern pat;
  pat.rows = pat.cols = num_variables();
  auto node_vars = [&](int i) {
    std::array<int, kNodeElem> v{};
    for (int k = 0; k < kNumStates; ++k) v[k] = layout_.state(i, k);
    for (int k = 0; k < kNumControls; ++k) v[kNumStates + k] = layout_.control(i, k);
    v[kNodeVars] = layout_.time();
    return v;
  };
  auto interval_vars = [&](int i) {
    return std::array<int, kIntervalElem>{layout_.control(i, kSteer), layout_.control(i + 1, kSteer),
                                          layout_.control(i, kReelSpeed), layout_.control(i + 1, kReelSpeed),
                                          layout_.time()};
  };
  auto add_lower = [&](const auto& vars) {
    for (std::size_t a = 0; a < vars.size(); ++a) {
      for (std::size_t b = 0; b <= a; ++b) pat.add(std::max(vars[a], vars[b]), std::min(vars[a], vars[b]));
    }
  };
  const bool regularized = ocp_.problem.options.eps_reg > 0.0;
  for (int i = 0; i < mesh_.nodes(); ++i) add_lower(node_vars(i));
  if (regularized) {
    for (int i = 0; i < mesh_.intervals(); ++i) add_lower(interval_vars(i));
  }
  pat.canonicalize();
  hess_pattern_ = std::move(pat);
  for (int i = 0; i < mesh_.nodes(); ++i) lower_slots(hess_pattern_, node_vars(i), node_slots_);
  if (regularized) {
    for (int i = 0; i < mesh_.intervals(); ++i) lower_slots(hess_pattern_, interval_vars(i), interval_slots_);
  }
}

std::string CollocationNlp::row_name(int row) const {
  const int n_def = kNumStates * mesh_.intervals();
  if (row < n_def) return "defect[" + std::to_string(row / kNumStates) + "]." + std::to_string(row % kNumStates);
  row -= n_def;
  if (row < num_periodic()) return "periodicity." + std::to_string(periodic_[row]);
  row -= num_periodic();
  const int np = num_path();
  return ocp_.problem.path[row % np].name + "[" + std::to_string(row / np) + "]";
}

void CollocationNlp::check_finite(std::span<const double> values, double objective) const {
  const int n_def = kNumStates * mesh_.intervals();
  for (std::size_t r = 0; r < values.size(); ++r) {
    if (std::isfinite(values[r])) continue;
    const int row = static_cast<int>(r);
    int node = 0;
    if (row < n_def) node = row / kNumStates;
    else if (row >= n_def + num_periodic()) node = (row - n_def - num_periodic()) / num_path();
    throw EvaluationError("non-finite value in " + row_name(row), node);
  }
  if (!std::isfinite(objective)) throw EvaluationError("non-finite objective", -1);
}

double CollocationNlp::objective(std::span<const double> z) const {
  const double f = eval_objective(z);
  if (!std::isfinite(f)) {
    KiteState<double> x;
    KiteControl<double> u;
    for (int i = 0; i < mesh_.nodes(); ++i) {
      node_values(z, i, x, u);
      if (!std::isfinite(node_cost(x, u, mesh_.weight(i)))) {
        throw EvaluationError("non-finite objective at node " + std::to_string(i), i);
      }
    }
    throw EvaluationError("non-finite objective", -1);
  }
  return f;
}

void CollocationNlp::constraints(std::span<const double> z, std::span<double> values) const {
  eval_constraints(z, values);
  check_finite(values, 0.0);
}

void CollocationNlp::gradient(std::span<const double> z, std::span<double> grad) const {
  std::fill(grad.begin(), grad.end(), 0.0);
  const auto& p = ocp_.problem;
  const auto& sc = ocp_.map.scaling;
  for (int i = 0; i < mesh_.nodes(); ++i) {
    std::array<double, kNodeVars> v{};
    for (int k = 0; k < kNumStates; ++k) v[k] = z[layout_.state(i, k)];
    for (int k = 0; k < kNumControls; ++k) v[kNumStates + k] = z[layout_.control(i, k)];
    const double w = mesh_.weight(i);
    const auto g = diff::local_gradient<kNodeVars>(
        [&](const auto& a) {
          using S = std::decay_t<decltype(a[0])>;
          const KiteState<S> x{a[0] * sc.state[0], a[1] * sc.state[1], a[2] * sc.state[2], a[3] * sc.state[3],
                               a[4] * sc.state[4]};
          const KiteControl<S> u{a[5] * sc.control[0], a[6] * sc.control[1], a[7] * sc.control[2]};
          return node_cost(x, u, w);
        },
        v);
    for (int k = 0; k < kNumStates; ++k) grad[layout_.state(i, k)] += g[k];
    for (int k = 0; k < kNumControls; ++k) grad[layout_.control(i, k)] += g[kNumStates + k];
  }
  if (p.options.eps_reg > 0.0) {
    for (int i = 0; i < mesh_.intervals(); ++i) {
      const std::array<double, kIntervalElem> v{z[layout_.control(i, kSteer)], z[layout_.control(i + 1, kSteer)],
                                                z[layout_.control(i, kReelSpeed)],
                                                z[layout_.control(i + 1, kReelSpeed)], z[layout_.time()]};
      const double dtau = mesh_.step(i);
      const auto g = diff::local_gradient<kIntervalElem>(
          [&](const auto& a) {
            return interval_cost(a[0] * sc.control[kSteer], a[1] * sc.control[kSteer],
                                 a[2] * sc.control[kReelSpeed], a[3] * sc.control[kReelSpeed], dtau);
          },
          v);
      grad[layout_.control(i, kSteer)] += g[0];
      grad[layout_.control(i + 1, kSteer)] += g[1];
      grad[layout_.control(i, kReelSpeed)] += g[2];
      grad[layout_.control(i + 1, kReelSpeed)] += g[3];
      grad[layout_.time()] += g[4];
    }
  }
  for (std::size_t c = 0; c < p.path.size(); ++c) {
    if (relaxed_ordinal_[c] < 0) continue;
    for (int i = 0; i < mesh_.nodes(); ++i) {
      grad[layout_.slack(relaxed_ordinal_[c], i)] += p.path[c].relax_weight * mesh_.weight(i);
    }
  }
}

void CollocationNlp::jacobian(std::span<const double> z, std::span<double> values) const {
  const CollocationConstraints fn(*this);
  const auto v = diff::jacobian(fn, z, jac_pattern_, coloring_);
  std::copy(v.begin(), v.end(), values.begin());
}

void CollocationNlp::hessian(std::span<const double> z, double objective_factor, std::span<const double> y,
                             std::span<double> values) const {
  std::fill(values.begin(), values.end(), 0.0);
  const auto& p = ocp_.problem;
  const auto& sc = ocp_.map.scaling;
  const int n_int = mesh_.intervals();
  const int path_base = kNumStates * n_int + num_periodic();
  const int np = num_path();
  int slot = 0;
  for (int i = 0; i < mesh_.nodes(); ++i) {
    std::array<double, kNodeElem> v{};
    for (int k = 0; k < kNumStates; ++k) v[k] = z[layout_.state(i, k)];
    for (int k = 0; k < kNumControls; ++k) v[kNumStates + k] = z[layout_.control(i, k)];
    v[kNodeVars] = z[layout_.time()];
    // Defect multipliers weighting f(x_i, u_i): -(dtau/2) T f_k / scale_k.
    std::array<double, kNumStates> rate_weight{};
    for (int k = 0; k < kNumStates; ++k) {
      double acc = 0.0;
      if (i > 0) acc += mesh_.step(i - 1) * y[(i - 1) * kNumStates + k];
      if (i < n_int) acc += mesh_.step(i) * y[i * kNumStates + k];
      rate_weight[k] = -0.5 * acc / sc.state[k];
    }
    const double w = mesh_.weight(i);
    const auto h = diff::local_hessian<kNodeElem>(
        [&](const auto& a) {
          using S = std::decay_t<decltype(a[0])>;
          const KiteState<S> x{a[0] * sc.state[0], a[1] * sc.state[1], a[2] * sc.state[2], a[3] * sc.state[3],
                               a[4] * sc.state[4]};
          const KiteControl<S> u{a[5] * sc.control[0], a[6] * sc.control[1], a[7] * sc.control[2]};
          const S duration = a[kNodeVars] * sc.time;
          S lag = objective_factor * node_cost(x, u, w);
          const auto rates = p.rhs(x, u);
          S weighted(0.0);
          for (int k = 0; k < kNumStates; ++k) {
            if (rate_weight[k] != 0.0) weighted += rate_weight[k] * rates[k];
          }
          lag += duration * weighted;
          const FlowState<S> f = flow_state(p.params, x, u);
          for (int c = 0; c < np; ++c) {
            const double mult = y[path_base + i * np + c];
            if (mult != 0.0) lag += mult * p.path_value(p.path[c], x, f) / p.path_scale(p.path[c]);
          }
          return lag;
        },
        v);
    for (int a = 0; a < kNodeElem; ++a) {
      for (int b = 0; b <= a; ++b) values[node_slots_[slot++]] += h[a][b];
    }
  }
  if (p.options.eps_reg > 0.0) {
    slot = 0;
    for (int i = 0; i < n_int; ++i) {
      const std::array<double, kIntervalElem> v{z[layout_.control(i, kSteer)], z[layout_.control(i + 1, kSteer)],
                                                z[layout_.control(i, kReelSpeed)],
                                                z[layout_.control(i + 1, kReelSpeed)], z[layout_.time()]};
      const double dtau = mesh_.step(i);
      const auto h = diff::local_hessian<kIntervalElem>(
          [&](const auto& a) {
            return objective_factor * interval_cost(a[0] * sc.control[kSteer], a[1] * sc.control[kSteer],
                                                    a[2] * sc.control[kReelSpeed], a[3] * sc.control[kReelSpeed],
                                                    dtau);
          },
          v);
      for (int a = 0; a < kIntervalElem; ++a) {
        for (int b = 0; b <= a; ++b) values[interval_slots_[slot++]] += h[a][b];
      }
    }
  }
}

Evaluation CollocationNlp::evaluate(std::span<const double> z) const {
  if (static_cast<int>(z.size()) != num_variables()) throw ip::LayoutError("evaluate: wrong decision vector size");
  Evaluation e;
  e.constraints.resize(num_equalities() + num_inequalities());
  eval_constraints(z, std::span<double>(e.constraints));
  e.objective = eval_objective(z);
  check_finite(e.constraints, e.objective);
  return e;
}

std::vector<double> CollocationNlp::pack(std::span<const std::array<double, kNumStates>> states,
                                         std::span<const std::array<double, kNumControls>> controls,
                                         double duration) const {
  if (static_cast<int>(states.size()) != mesh_.nodes() || static_cast<int>(controls.size()) != mesh_.nodes()) {
    throw ip::LayoutError("pack: node count mismatch");
  }
  std::vector<double> z(num_variables(), 0.0);
  for (int i = 0; i < mesh_.nodes(); ++i) {
    const auto xs = ocp_.map.state_to_scaled(states[i]);
    const auto us = ocp_.map.control_to_scaled(controls[i]);
    for (int k = 0; k < kNumStates; ++k) z[layout_.state(i, k)] = xs[k];
    for (int k = 0; k < kNumControls; ++k) z[layout_.control(i, k)] = us[k];
  }
  z[layout_.time()] = ocp_.map.time_to_scaled(duration);
  return z;
}

CycleResult CollocationNlp::extract(std::span<const double> z) const {
  if (static_cast<int>(z.size()) != num_variables()) throw ip::LayoutError("extract: wrong decision vector size");
  const auto& p = ocp_.problem;
  const int n_nodes = mesh_.nodes();
  CycleResult r;
  r.wind_ref = p.params.wind.w_ref;
  r.z.assign(z.begin(), z.end());
  r.cycle_time = ocp_.map.time_to_physical(z[layout_.time()]);
  std::vector<PowerSample> samples;
  for (int i = 0; i < n_nodes; ++i) {
    KiteState<double> x;
    KiteControl<double> u;
    node_values(z, i, x, u);
    const FlowState<double> f = flow_state(p.params, x, u);
    r.t.push_back(r.cycle_time * mesh_.tau(i));
    r.states.push_back(x);
    r.controls.push_back(u);
    r.flow.push_back(f);
    r.reel_out.push_back(is_reel_out(u.reel_speed) ? 1 : 0);
    r.peak_force = std::max(r.peak_force, f.tether_force);
    r.peak_elec_power = i == 0 ? f.elec_power : std::max(r.peak_elec_power, f.elec_power);
    samples.push_back({r.t.back(), f.tether_force, u.reel_speed, f.elec_power});
  }
  r.energy = cycle_energy(samples);
  r.objective = eval_objective(z);

  std::vector<double> c(num_equalities() + num_inequalities());
  eval_constraints(z, std::span<double>(c));
  const int n_def = kNumStates * mesh_.intervals();
  double defect = 0.0;
  for (int row = 0; row < n_def; ++row) defect = std::max(defect, std::fabs(c[row]));
  r.residuals.push_back({"defects", defect});
  double periodic = 0.0;
  for (int j = 0; j < num_periodic(); ++j) periodic = std::max(periodic, std::fabs(c[n_def + j]));
  r.residuals.push_back({"periodicity", periodic});
  r.periodicity_residual = periodic;
  const int np = num_path();
  for (int cidx = 0; cidx < np; ++cidx) {
    double worst = 0.0;
    for (int i = 0; i < n_nodes; ++i) worst = std::max(worst, -c[n_def + num_periodic() + i * np + cidx]);
    r.residuals.push_back({p.path[cidx].name, worst});
  }
  std::vector<double> lo(num_variables()), hi(num_variables());
  bounds(lo, hi);
  auto box_violation = [&](int index) { return std::max({0.0, lo[index] - z[index], z[index] - hi[index]}); };
  for (const auto& box : p.boxes) {
    double worst = 0.0;
    using T = BoxConstraint::Target;
    if (box.target == T::time) {
      worst = box_violation(layout_.time());
    } else {
      for (int i = 0; i < n_nodes; ++i) {
        const int index = box.target == T::state ? layout_.state(i, box.index) : layout_.control(i, box.index);
        worst = std::max(worst, box_violation(index));
      }
    }
    r.residuals.push_back({box.name, worst});
  }
  if (layout_.num_relaxed() > 0) {
    double worst = 0.0;
    for (int j = 0; j < layout_.num_relaxed(); ++j) {
      for (int i = 0; i < n_nodes; ++i) worst = std::max(worst, box_violation(layout_.slack(j, i)));
    }
    r.residuals.push_back({"slack_box", worst});
  }
  for (const auto& res : r.residuals) r.max_violation = std::max(r.max_violation, res.max_violation);
  return r;
}

CollocationNlp transcribe(const ScaledOcp& ocp, const Mesh& mesh) { return CollocationNlp(ocp, mesh); }
Evaluation evaluate(const CollocationNlp& nlp, std::span<const double> z) { return nlp.evaluate(z); }
CycleResult extract(const CollocationNlp& nlp, std::span<const double> z) { return nlp.extract(z); }

double count_lobes(const CycleResult& result) {
  int crossings = 0;
  for (std::size_t i = 0; i + 1 < result.states.size(); ++i) {
    if (!result.reel_out[i] || !result.reel_out[i + 1]) continue;
    if ((result.states[i].phi < 0.0) != (result.states[i + 1].phi < 0.0)) ++crossings;
  }
  return 0.5 * crossings;
}

}  // namespace kiteopt

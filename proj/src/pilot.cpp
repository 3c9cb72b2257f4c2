#include "kiteopt/pilot.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <sstream>
#include <thread>

#include "kiteopt/errors.hpp"

namespace kiteopt {

CollocationNlp make_nlp(const SystemParams& params, double w_ref, const PilotOptions& opts) {
  SystemParams p = params;
  p.wind.w_ref = w_ref;
  p.validate();
  return transcribe(scale(build_ocp(p, opts.ocp)), Mesh::uniform(opts.intervals));
}

CycleResult finish(const CollocationNlp& nlp, ip::NlpSolution solution, double tol_feas) {
  CycleResult r = nlp.extract(solution.z);
  r.solver.status = solution.status;
  r.solver.iterations = solution.iterations;
  r.solver.kkt_error = solution.kkt.scaled;
  r.solver.wall_time = solution.wall_time;
  r.solver.message = solution.message;
  r.feasible = ip::converged(solution.status) && r.max_violation <= tol_feas;
  r.solution = std::move(solution);
  return r;
}

namespace {

CycleResult solve_start(const SystemParams& params, double w_ref, const PilotOptions& opts, std::uint64_t seed,
                        int index) {
  const CollocationNlp nlp = make_nlp(params, w_ref, opts);
  std::vector<double> z0 = synth_guess(nlp, opts.guess);
  if (index > 0) z0 = perturb(nlp, z0, seed, opts.perturb_magnitude);
  ip::SolverOptions solver = opts.solver;
  std::ostringstream log;
  if (opts.capture_log) {
    solver.verbose = true;
    solver.log = &log;
  }
  CycleResult r;
  try {
    r = finish(nlp, ip::solve(nlp, z0, solver), opts.solver.tol_feas);
  } catch (const EvaluationError& e) {
    r = nlp.extract(z0);
    r.solver.status = ip::SolveStatus::error;
    r.solver.message = e.what();
    r.feasible = false;
  }
  r.solver.log = log.str();
  r.seed = index > 0 ? static_cast<int>(seed) : 0;
  r.start_index = index;
  return r;
}

bool better(const CycleResult& a, const CycleResult& b) {
  if (a.energy.p_mean != b.energy.p_mean) return a.energy.p_mean > b.energy.p_mean;
  return a.peak_force < b.peak_force;
}

}  // namespace

CycleResult optimize_once(const SystemParams& params, double w_ref, const PilotOptions& opts) {
  return solve_start(params, w_ref, opts, 0, 0);
}

std::uint64_t start_seed(std::uint64_t seed, int k) {
  // splitmix64 finalizer over (seed, k); small and stable across platforms.
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + static_cast<std::uint64_t>(k);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return (z ^ (z >> 31)) & 0x7FFFFFFFULL;
}

std::optional<int> select_best(const std::vector<CycleResult>& results) {
  std::optional<int> best;
  for (int i = 0; i < static_cast<int>(results.size()); ++i) {
    if (!results[i].feasible) continue;
    if (!best || better(results[i], results[*best])) best = i;
  }
  return best;
}

MultiStartResult multi_start(const SystemParams& params, double w_ref, int starts, std::uint64_t seed,
                             const PilotOptions& opts) {
  if (starts < 1) throw InputError("multi_start: need at least one start");
  MultiStartResult out;
  out.starts.resize(starts);
  auto run = [&](int k) { out.starts[k] = solve_start(params, w_ref, opts, start_seed(seed, k), k); };
  const int workers = std::clamp(opts.threads, 1, starts);
  if (workers == 1) {
    for (int k = 0; k < starts; ++k) run(k);
  } else {
    std::atomic<int> next{0};
    std::vector<std::jthread> pool;
    std::vector<std::exception_ptr> errors(starts);
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (int k = next++; k < starts; k = next++) {
          try {
            run(k);
          } catch (...) {
            errors[k] = std::current_exception();
          }
        }
      });
    }
    pool.clear();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  const auto best = select_best(out.starts);
  if (!best) {
    std::vector<SolverDiagnostics> diags;
    std::string what = "multi_start: no feasible start at w = " + std::to_string(w_ref) + " m/s:";
    for (const auto& r : out.starts) {
      diags.push_back(r.solver);
      what += std::string(" [") + ip::to_string(r.solver.status) + "]";
    }
    throw AllStartsFailed(what, std::move(diags));
  }
  out.best_index = *best;
  out.best = out.starts[*best];
  return out;
}

void RunPlan::validate() const {
  if (winds.empty()) throw InputError("run plan: empty wind grid");
  for (std::size_t i = 0; i < winds.size(); ++i) {
    if (!(winds[i] > 0.0)) throw InputError("run plan: wind speeds must be positive");
    if (i > 0 && !(winds[i] > winds[i - 1])) throw InputError("run plan: wind grid not strictly increasing");
  }
  if (starts < 1) throw InputError("run plan: starts must be >= 1");
  if (refresh_every < 1) throw InputError("run plan: refresh_every must be >= 1");
}

std::vector<double> wind_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo) || !std::isfinite(hi)) throw InputError("wind grid: need lo <= hi and step > 0");
  const long n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  std::vector<double> out;
  for (long k = 0; k <= n; ++k) out.push_back(lo + static_cast<double>(k) * step);
  return out;
}

PowerCurve sweep(const RunPlan& plan, const SystemParams& params) {
  plan.validate();
  const PilotOptions& opts = plan.options;
  PowerCurve curve;
  std::optional<CycleResult> previous;
  for (std::size_t j = 0; j < plan.winds.size(); ++j) {
    const double w = plan.winds[j];
    std::vector<CycleResult> candidates;
    std::vector<char> warm;
    std::string failure;
    if (plan.continuation && previous) {
      const CollocationNlp nlp = make_nlp(params, w, opts);
      try {
        CycleResult r = finish(nlp, ip::warm_solve(nlp, previous->solution, opts.solver), opts.solver.tol_feas);
        r.seed = previous->seed;
        r.start_index = previous->start_index;
        candidates.push_back(std::move(r));
        warm.push_back(1);
      } catch (const EvaluationError& e) {
        failure = e.what();
      }
    }
    const bool refresh = !plan.continuation || !previous || j % static_cast<std::size_t>(plan.refresh_every) == 0 ||
                         candidates.empty() || !candidates.front().feasible;
    if (refresh) {
      try {
        MultiStartResult ms = multi_start(params, w, plan.starts, plan.seed, opts);
        candidates.push_back(std::move(ms.best));
        warm.push_back(0);
      } catch (const AllStartsFailed& e) {
        failure = e.what();
      }
    }
    const auto best = select_best(candidates);
    std::cerr << "sweep: w = " << w << " m/s";
    if (!best) {
      if (failure.empty() && !candidates.empty()) {
        failure = std::string("no feasible candidate (") + ip::to_string(candidates.front().solver.status) + ")";
      }
      std::cerr << " failed: " << failure << "\n";
      curve.failures.push_back({w, failure});
      continue;
    }
    CycleResult& r = candidates[*best];
    std::cerr << " P_mean = " << r.energy.p_mean << " W (" << ip::to_string(r.solver.status) << ")\n";
    PowerCurvePoint pt;
    pt.wind = w;
    pt.p_mean = r.energy.p_mean;
    pt.status = r.solver.status;
    pt.reel_in_fraction = r.energy.reel_in_fraction;
    pt.peak_force = r.peak_force;
    pt.peak_elec_power = r.peak_elec_power;
    pt.seed = static_cast<std::uint64_t>(r.seed);
    pt.start_index = r.start_index;
    pt.warm_started = warm[*best] != 0;
    previous = r;
    pt.trajectory = std::move(r);
    curve.points.push_back(std::move(pt));
  }
  return curve;
}

SensitivityTable sensitivity(const SystemParams& params, double w_ref, const std::vector<std::string>& names,
                             double rel_step, const PilotOptions& opts) {
  if (!(rel_step > 0.0)) throw InputError("sensitivity: rel_step must be positive");
  for (const auto& name : names) {
    SystemParams probe = params;
    if (find_system_param(probe, name) == nullptr) throw ConfigError("sensitivity: unknown parameter '" + name + "'");
  }
  const CycleResult nominal = optimize_once(params, w_ref, opts);
  if (!nominal.feasible) {
    throw AllStartsFailed(std::string("sensitivity: nominal solve not feasible (") +
                              ip::to_string(nominal.solver.status) + ")",
                          {nominal.solver});
  }
  SensitivityTable table;
  table.wind = w_ref;
  table.p_mean_nominal = nominal.energy.p_mean;
  for (const auto& name : names) {
    SensitivityEntry e;
    e.name = name;
    SystemParams base = params;
    base.wind.w_ref = w_ref;
    e.value = *find_system_param(base, name);
    e.step = rel_step * std::fabs(e.value);
    if (e.step == 0.0) {
      e.message = "parameter is zero; relative step degenerate";
      table.entries.push_back(e);
      continue;
    }
    auto solve_at = [&](double value) -> std::optional<double> {
      SystemParams p = base;
      *find_system_param(p, name) = value;
      try {
        const CollocationNlp nlp = make_nlp(p, p.wind.w_ref, opts);
        const CycleResult r = finish(nlp, ip::warm_solve(nlp, nominal.solution, opts.solver), opts.solver.tol_feas);
        if (r.feasible) return r.energy.p_mean;
        e.message = std::string("re-optimization ") + ip::to_string(r.solver.status);
      } catch (const ConfigError& err) {
        e.message = err.what();
      } catch (const EvaluationError& err) {
        e.message = err.what();
      }
      return std::nullopt;
    };
    const auto minus = solve_at(e.value - e.step);
    const auto plus = solve_at(e.value + e.step);
    if (minus && plus) {
      e.p_mean_minus = *minus;
      e.p_mean_plus = *plus;
      e.derivative = (*plus - *minus) / (2.0 * e.step);
      e.available = true;
      e.message.clear();
    }
    table.entries.push_back(e);
  }
  return table;
}

}  // namespace kiteopt

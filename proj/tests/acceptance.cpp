// Acceptance run: one PASS/FAIL line per criterion, evidence alongside.
// Exit status is 0 when every criterion was evaluated; --strict turns any
// FAIL into exit status 1.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "kiteopt/diffkit.hpp"
#include "kiteopt/flightsim.hpp"
#include "kiteopt/guessgen.hpp"
#include "kiteopt/kitecli.hpp"
#include "kiteopt/lambda_nlp.hpp"
#include "kiteopt/pilot.hpp"

using namespace kiteopt;
namespace fs = std::filesystem;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

// Shared sweep products: the first cmd_sweep run feeds criteria 5 to 7.
struct SweepRun {
  fs::path dir;
  int exit_code = -1;
  double wall = 0.0;
};

struct CurveRow {
  double wind = 0.0;
  double p_mean = 0.0;
  std::string status;
  double reel_in = 0.0;
  double peak_elec = 0.0;
};

std::vector<CurveRow> read_curve(const fs::path& dir) {
  std::vector<CurveRow> rows;
  std::istringstream in(slurp(dir / "power_curve.csv"));
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string cell;
    CurveRow r;
    std::getline(ls, cell, ',');
    r.wind = std::stod(cell);
    std::getline(ls, cell, ',');
    r.p_mean = std::stod(cell);
    std::getline(ls, r.status, ',');
    std::getline(ls, cell, ',');
    r.reel_in = std::stod(cell);
    char name[32];
    std::snprintf(name, sizeof name, "w_%06.2f", r.wind);
    const auto summary = nlohmann::json::parse(slurp(dir / name / "summary.json"));
    r.peak_elec = summary["P_elec_peak_W"].get<double>();
    rows.push_back(r);
  }
  return rows;
}

fs::path point_dir(const fs::path& dir, double w) {
  char name[32];
  std::snprintf(name, sizeof name, "w_%06.2f", w);
  return dir / name;
}

// 1 -------------------------------------------------------------------------
Outcome loyd_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const double w = 10.0;
  const RestrictedSetup setup = loyd_restricted_setup(SystemParams{}, w);
  const CollocationNlp nlp = transcribe(scale(build_ocp(setup.params, setup.options)), Mesh::uniform(20));
  const int n = nlp.mesh().nodes();
  std::vector<std::array<double, kNumStates>> xs(n);
  std::vector<std::array<double, kNumControls>> us(n);
  const double t_guess = 100.0;
  const double v_guess = 2.0;
  for (int i = 0; i < n; ++i) {
    xs[i] = {250.0 + v_guess * t_guess * nlp.mesh().tau(i), 1e-6, 0.0, 0.0, 1.0};
    us[i] = {0.0, v_guess, 0.0};
  }
  const auto sol = ip::solve(nlp, nlp.pack(xs, us, t_guess));
  const CycleResult r = nlp.extract(sol.z);
  double worst_f = 0.0;
  for (const auto& u : r.controls) worst_f = std::max(worst_f, std::fabs(u.reel_speed / w - 1.0 / 3.0));
  double p_mech = 0.0;
  for (int i = 0; i < n; ++i) p_mech += nlp.mesh().weight(i) * r.flow[i].mech_power;
  const auto c = aero_coeffs(setup.params.aero, 1.0);
  const double oracle = 0.5 * setup.params.air_density * setup.params.area * c.resultant *
                        (1.0 + c.glide * c.glide) * w * w * w * 4.0 / 27.0;
  const double rel = std::fabs(p_mech / oracle - 1.0);
  const double wall = seconds_since(t0);
  const bool pass = ip::converged(sol.status) && worst_f <= 1e-3 && rel <= 1e-3 && wall < 10.0;
  return {pass, fmt("status %s, max |f - 1/3| %.2e, P_mech %.6g W vs %.6g W (rel %.2e), %.2f s",
                    ip::to_string(sol.status), worst_f, p_mech, oracle, rel, wall)};
}

// 2 -------------------------------------------------------------------------
Outcome derivative_check() {
  const auto t0 = std::chrono::steady_clock::now();
  PilotOptions opts;
  opts.intervals = 20;
  const CollocationNlp nlp = make_nlp(SystemParams{}, 8.0, opts);
  const int nv = nlp.num_variables();
  std::vector<double> lo(nv), hi(nv);
  nlp.bounds(lo, hi);
  const CollocationConstraints fn(nlp);
  const auto& pattern = nlp.jacobian_pattern();
  std::mt19937_64 rng(20240601);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst = 0.0;
  std::string worst_where;
  const double h = 1e-6;
  for (int point = 0; point < 100; ++point) {
    std::vector<double> z(nv);
    for (int i = 0; i < nv; ++i) {
      const double a = std::isfinite(lo[i]) ? lo[i] : -3.0;
      const double b = std::isfinite(hi[i]) ? hi[i] : 3.0;
      z[i] = a + (b - a) * unit(rng);
    }
    std::vector<double> jac(pattern.nnz());
    nlp.jacobian(z, jac);
    const auto fd = diff::finite_difference_jacobian(fn, z, h);
    std::vector<double> dense(static_cast<std::size_t>(pattern.rows) * nv, 0.0);
    for (std::size_t e = 0; e < pattern.nnz(); ++e) dense[pattern.row[e] * nv + pattern.col[e]] = jac[e];
    for (int r = 0; r < pattern.rows; ++r) {
      for (int col = 0; col < nv; ++col) {
        const double a = dense[r * nv + col];
        const double b = fd[r][col];
        const double err = std::fabs(a - b) / std::max(1.0, std::fabs(b));
        if (err > worst) {
          worst = err;
          worst_where = nlp.row_name(r) + fmt(" / z[%d]", col);
        }
      }
    }
    std::vector<double> grad(nv);
    nlp.gradient(z, grad);
    for (int i = 0; i < nv; ++i) {
      std::vector<double> zp = z, zm = z;
      zp[i] += h;
      zm[i] -= h;
      const double g = (nlp.objective(zp) - nlp.objective(zm)) / (2.0 * h);
      const double err = std::fabs(grad[i] - g) / std::max(1.0, std::fabs(g));
      if (err > worst) {
        worst = err;
        worst_where = fmt("objective / z[%d]", i);
      }
    }
  }
  const double wall = seconds_since(t0);
  return {worst < 1e-6 && wall < 30.0,
          fmt("100 points, N=20 (%d vars, %d rows), worst rel err %.2e at %s, %.2f s", nv, pattern.rows, worst,
              worst_where.c_str(), wall)};
}

// 3 -------------------------------------------------------------------------
Outcome analytic_nlps() {
  std::string detail;
  bool pass = true;
  auto note = [&](const char* name, bool ok, double err, const ip::KktError& cert) {
    pass = pass && ok;
    detail += fmt("%s%s err %.1e, kkt %.1e", detail.empty() ? "" : "; ", name, err, cert.scaled);
  };
  auto none = [](auto, auto) {};
  {
    auto nlp = ip::make_lambda_nlp(
        1, 0, 0, {3.0}, {kInf}, [](auto z) { return (z[0] - 2.0) * (z[0] - 2.0); }, none);
    const auto sol = ip::solve(nlp, std::vector<double>{5.0});
    const auto cert = ip::kkt_certificate(nlp, sol);
    const double err = std::max(std::fabs(sol.z[0] - 3.0), std::fabs(sol.bound_lower[0] - 2.0));
    note("bound QP", sol.status == ip::SolveStatus::optimal && err <= 1e-6 && cert.stationarity <= 1e-5 &&
                         cert.complementarity <= 1e-5,
         err, cert);
  }
  {
    auto nlp = ip::make_lambda_nlp(
        2, 1, 0, {-kInf, -kInf}, {kInf, kInf}, [](auto z) { return z[0] * z[0] + z[1] * z[1]; },
        [](auto z, auto c) { c[0] = z[0] + z[1] - 1.0; });
    const auto sol = ip::solve(nlp, std::vector<double>{3.0, -1.0});
    const auto cert = ip::kkt_certificate(nlp, sol);
    const double err = std::max({std::fabs(sol.z[0] - 0.5), std::fabs(sol.z[1] - 0.5),
                                 std::fabs(sol.multipliers[0] + 1.0)});
    note("equality QP", sol.status == ip::SolveStatus::optimal && err <= 1e-6 && cert.stationarity <= 1e-5, err,
         cert);
  }
  {
    auto nlp = ip::make_lambda_nlp(
        2, 0, 1, {-kInf, -kInf}, {kInf, kInf},
        [](auto z) {
          const auto a = 1.0 - z[0];
          const auto b = z[1] - z[0] * z[0];
          return a * a + 100.0 * b * b;
        },
        [](auto z, auto c) { c[0] = 2.0 - z[0] * z[0] - z[1] * z[1]; });
    ip::SolverOptions o;
    o.tol_opt = 1e-12;
    o.acceptable_iter = 1000;
    const auto sol = ip::solve(nlp, std::vector<double>{-1.2, 1.0}, o);
    const auto cert = ip::kkt_certificate(nlp, sol);
    const double err = std::max({std::fabs(sol.z[0] - 1.0), std::fabs(sol.z[1] - 1.0), std::fabs(sol.objective)});
    note("disk Rosenbrock", sol.status == ip::SolveStatus::optimal && err <= 1e-6 && cert.stationarity <= 1e-5 &&
                                cert.complementarity <= 1e-5,
         err, cert);
  }
  return {pass, detail};
}

// 4 -------------------------------------------------------------------------
struct CycleRun {
  MultiStartResult ms;
  double wall = 0.0;
};

CycleRun full_cycle(int intervals) {
  PilotOptions opts;
  opts.intervals = intervals;
  const auto t0 = std::chrono::steady_clock::now();
  CycleRun run{multi_start(SystemParams{}, 8.0, 5, 1, opts), 0.0};
  run.wall = seconds_since(t0);
  return run;
}

Outcome full_cycle_check(const CycleRun& run) {
  const CycleResult& r = run.ms.best;
  const bool pass = ip::converged(r.solver.status) && r.max_violation <= 1e-6 && r.energy.p_mean > 0.0 &&
                    r.periodicity_residual <= 1e-6 && run.wall < 60.0;
  return {pass, fmt("status %s, violation %.1e, P_mean %.1f W, periodicity %.1e, %.1f s (5 starts)",
                    ip::to_string(r.solver.status), r.max_violation, r.energy.p_mean, r.periodicity_residual,
                    run.wall)};
}

// 5 -------------------------------------------------------------------------
Outcome reel_in_check(const std::vector<CurveRow>& curve) {
  if (curve.empty()) return {false, "no feasible sweep points"};
  bool all = true;
  std::string bad;
  double at8 = std::nan("");
  for (const auto& p : curve) {
    if (!(p.reel_in < 1.0 - p.reel_in)) {
      all = false;
      bad += fmt(" %g", p.wind);
    }
    if (p.wind == 8.0) at8 = p.reel_in;
  }
  const bool pass = all && at8 < 0.40;
  std::string d = fmt("reel-in fraction at 8 m/s %.3f (limit 0.40)", at8);
  d += all ? "; shorter than reel-out everywhere" : "; not shorter than reel-out at w =" + bad;
  return {pass, d};
}

// 6 -------------------------------------------------------------------------
Outcome power_curve_check(const std::vector<CurveRow>& curve) {
  const double cap = SystemParams{}.rated_power;
  if (curve.size() != 14u) return {false, fmt("%zu of 14 sweep points feasible", curve.size())};
  std::size_t bind = curve.size();
  for (std::size_t i = 0; i < curve.size(); ++i) {
    if (curve[i].peak_elec >= cap * (1.0 - 5e-3)) {
      bind = i;
      break;
    }
  }
  bool pass = true;
  std::string d = bind < curve.size() ? fmt("cap binds from %g m/s", curve[bind].wind) : "cap never binds";
  for (std::size_t i = 0; i + 1 < curve.size() && i + 1 <= bind; ++i) {
    if (curve[i + 1].p_mean < curve[i].p_mean - 0.01 * std::fabs(curve[i].p_mean)) {
      pass = false;
      d += fmt("; P_mean drops %g -> %g m/s", curve[i].wind, curve[i + 1].wind);
    }
  }
  double worst = 0.0;
  for (std::size_t i = bind; i < curve.size(); ++i) worst = std::max(worst, std::fabs(curve[i].peak_elec / cap - 1.0));
  if (worst > 5e-3) pass = false;
  d += fmt("; max |P_elec,max / cap - 1| once bound %.1e", worst);
  d += fmt("; P_mean %.1f kW at %g m/s .. %.1f kW at %g m/s", curve.front().p_mean / 1e3, curve.front().wind,
           curve.back().p_mean / 1e3, curve.back().wind);
  return {pass, d};
}

// 7 -------------------------------------------------------------------------
Outcome lobe_check(const fs::path& sweep_dir) {
  const SystemParams params;
  const double tol = 1e-6 * default_scaling(params).length;
  double lobes[2] = {0.0, 0.0};
  double low[2] = {kInf, kInf};
  const double winds[2] = {6.0, 16.0};
  for (int k = 0; k < 2; ++k) {
    const fs::path file = point_dir(sweep_dir, winds[k]) / "trajectory.csv";
    if (!fs::exists(file)) return {false, fmt("no trajectory at %g m/s", winds[k])};
    const auto rows = cli::read_trajectory(file);
    lobes[k] = cli::table_lobes(rows);
    for (const auto& r : rows) low[k] = std::min(low[k], r.x[kTether] * std::sin(r.x[kElevation]));
  }
  const bool floor_ok = low[0] >= params.height_min - tol && low[1] >= params.height_min - tol;
  return {lobes[0] > lobes[1] && floor_ok, fmt("lobes %.1f at 6 m/s vs %.1f at 16 m/s; lowest heights %.2f m, %.2f m "
                                               "(floor %.0f m)",
                                               lobes[0], lobes[1], low[0], low[1], params.height_min)};
}

// 8 -------------------------------------------------------------------------
Outcome replay_check(const CycleRun& coarse, const CycleRun& fine) {
  SystemParams params;
  params.wind.w_ref = 8.0;
  const OcpProblem problem = build_ocp(params);
  auto report = [&](const CycleResult& r) { return sim::validate(r, problem); };
  const auto a = report(coarse.ms.best);
  const auto b = report(fine.ms.best);
  const bool pass = a.max_state_deviation < 0.05 && b.max_state_deviation < a.max_state_deviation &&
                    a.p_mean_rel_error <= 0.03;
  return {pass, fmt("scaled deviation %.3g at N=120 (node %d), %.3g at N=240; replayed P_mean rel err %.3g",
                    a.max_state_deviation, a.worst_node, b.max_state_deviation, a.p_mean_rel_error)};
}

// 9 -------------------------------------------------------------------------
Outcome multistart_check(const CycleRun& seed1) {
  bool pass = true;
  double lo = kInf, hi = -kInf;
  int singles = 0;
  int infeasible = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const MultiStartResult ms = seed == 1 ? seed1.ms : multi_start(SystemParams{}, 8.0, 5, seed, PilotOptions{});
    double seed_lo = kInf, seed_hi = -kInf;
    for (const auto& r : ms.starts) {
      if (!r.feasible) {
        ++infeasible;
        continue;
      }
      ++singles;
      if (ms.best.energy.p_mean < r.energy.p_mean) pass = false;
      seed_lo = std::min(seed_lo, r.energy.p_mean);
      seed_hi = std::max(seed_hi, r.energy.p_mean);
    }
    lo = std::min(lo, seed_lo);
    hi = std::max(hi, seed_hi);
    per_seed += fmt("%s%llu:%.1f/%.1f", per_seed.empty() ? "" : " ", static_cast<unsigned long long>(seed),
                    ms.best.energy.p_mean / 1e3, (seed_hi - seed_lo) / 1e3);
  }
  return {pass, fmt("%d feasible single starts (%d infeasible); spread max-min %.1f W (%.1f .. %.1f kW); "
                    "seed:best/spread kW %s",
                    singles, infeasible, hi - lo, lo / 1e3, hi / 1e3, per_seed.c_str())};
}

// 10 ------------------------------------------------------------------------
Outcome determinism_check(const SweepRun& a, const SweepRun& b) {
  if (a.exit_code != 0 || b.exit_code != 0) return {false, fmt("sweep exit codes %d, %d", a.exit_code, b.exit_code)};
  const std::string first = slurp(a.dir / "power_curve.csv");
  const std::string second = slurp(b.dir / "power_curve.csv");
  return {!first.empty() && first == second,
          fmt("power_curve.csv %zu bytes, %s; runs %.1f s and %.1f s", first.size(),
              first == second ? "byte-identical" : "differs", a.wall, b.wall)};
}

SweepRun run_sweep(const fs::path& dir) {
  cli::CommandArgs args;
  args.out = dir;
  std::ostringstream err;
  const auto t0 = std::chrono::steady_clock::now();
  SweepRun run{dir, cli::cmd_sweep(args, err), 0.0};
  run.wall = seconds_since(t0);
  return run;
}

}  // namespace

int main(int argc, char** argv) {
  bool strict = false;
  for (int i = 1; i < argc; ++i) strict = strict || std::strcmp(argv[i], "--strict") == 0;

  const fs::path scratch = fs::temp_directory_path() / ("kiteopt_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(scratch);
  fs::create_directories(scratch);

  int failed = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& check) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << "criterion " << id << " [" << (o.pass ? "PASS" : "FAIL") << "] " << name << ": " << o.detail
              << std::endl;
  };

  report(1, "Loyd oracle", loyd_oracle);
  report(2, "derivatives vs central differences", derivative_check);
  report(3, "analytic NLPs", analytic_nlps);

  std::optional<CycleRun> coarse;
  report(4, "full cycle at 8 m/s", [&] {
    coarse = full_cycle(120);
    return full_cycle_check(*coarse);
  });

  std::cerr << "acceptance: running two default sweeps\n";
  const SweepRun first = run_sweep(scratch / "sweep_a");
  const SweepRun second = run_sweep(scratch / "sweep_b");
  std::vector<CurveRow> curve;
  try {
    if (first.exit_code == 0) curve = read_curve(first.dir);
  } catch (const std::exception& e) {
    std::cerr << "acceptance: cannot read sweep output: " << e.what() << '\n';
  }
  report(5, "short reel-in", [&] { return reel_in_check(curve); });
  report(6, "power curve shape", [&] { return power_curve_check(curve); });
  report(7, "lobe trend", [&] { return lobe_check(first.dir); });

  report(8, "replay consistency", [&] {
    if (!coarse) throw std::runtime_error("no N=120 solution");
    return replay_check(*coarse, full_cycle(240));
  });
  report(9, "multi-start dominance", [&] {
    if (!coarse) throw std::runtime_error("no seed-1 run");
    return multistart_check(*coarse);
  });
  report(10, "sweep determinism", [&] { return determinism_check(first, second); });

  fs::remove_all(scratch);
  std::cout << "acceptance: " << 10 - failed << "/10 criteria pass" << std::endl;
  return strict && failed > 0 ? 1 : 0;
}

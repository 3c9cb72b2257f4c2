#pragma once

// Runs of the full pipeline: single solves, seeded multi-starts, wind sweeps
// with continuation, and finite-difference parameter sensitivities.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kiteopt/guessgen.hpp"
#include "kiteopt/ipsolve.hpp"
#include "kiteopt/ocp.hpp"
#include "kiteopt/transcribe.hpp"

namespace kiteopt {

struct PilotOptions {
  OcpOptions ocp;
  int intervals = 120;
  ip::SolverOptions solver;
  GuessRecipe guess;
  double perturb_magnitude = 0.05;  // scaled units, starts after the first
  int threads = 1;                  // concurrent solves in multi_start
  bool capture_log = false;         // keep the solver iteration log in each result
};

// Builds, scales and transcribes the cycle problem at wind speed w_ref.
CollocationNlp make_nlp(const SystemParams& params, double w_ref, const PilotOptions& opts);

// Converts a finished solve on `nlp` into a result with diagnostics and the
// feasibility gate applied.
CycleResult finish(const CollocationNlp& nlp, ip::NlpSolution solution, double tol_feas);

// Solve from the unperturbed synthetic guess.
CycleResult optimize_once(const SystemParams& params, double w_ref, const PilotOptions& opts);

// Seed of start k (k >= 1) for base seed `seed`. Start 0 is never perturbed.
std::uint64_t start_seed(std::uint64_t seed, int k);

struct MultiStartResult {
  CycleResult best;
  int best_index = 0;
  std::vector<CycleResult> starts;  // in start order
};

class AllStartsFailed : public std::runtime_error {
 public:
  AllStartsFailed(const std::string& what, std::vector<SolverDiagnostics> per_start)
      : std::runtime_error(what), per_start_(std::move(per_start)) {}
  const std::vector<SolverDiagnostics>& per_start() const { return per_start_; }

 private:
  std::vector<SolverDiagnostics> per_start_;
};

// Best among feasible results by mean power, then by lower peak force, then by
// lower index. Returns nothing when none is feasible.
std::optional<int> select_best(const std::vector<CycleResult>& results);

// K starts: the synthetic guess, then K - 1 seeded perturbations of it.
// Throws InputError for K < 1 and AllStartsFailed when no start is feasible.
MultiStartResult multi_start(const SystemParams& params, double w_ref, int starts, std::uint64_t seed,
                             const PilotOptions& opts);

struct RunPlan {
  std::vector<double> winds{5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18};  // [m/s]
  int starts = 5;
  std::uint64_t seed = 1;
  bool continuation = true;
  int refresh_every = 3;  // full multi-start every this many grid points
  PilotOptions options;
  std::string output_dir;

  // Throws InputError unless winds are positive and strictly increasing and starts >= 1.
  void validate() const;
};

// lo:hi:step, both ends inclusive up to rounding. Throws InputError on a bad range.
std::vector<double> wind_grid(double lo, double hi, double step);

struct PowerCurvePoint {
  double wind = 0.0;  // [m/s]
  double p_mean = 0.0;  // [W]
  ip::SolveStatus status = ip::SolveStatus::error;
  double reel_in_fraction = 0.0;
  double peak_force = 0.0;       // [N]
  double peak_elec_power = 0.0;  // [W]
  std::uint64_t seed = 0;
  int start_index = 0;
  bool warm_started = false;
  CycleResult trajectory;
};

struct SweepFailure {
  double wind = 0.0;
  std::string message;
};

struct PowerCurve {
  std::vector<PowerCurvePoint> points;  // feasible only, ascending wind
  std::vector<SweepFailure> failures;
};

PowerCurve sweep(const RunPlan& plan, const SystemParams& params);

struct SensitivityEntry {
  std::string name;
  double value = 0.0;  // nominal parameter value
  double step = 0.0;   // absolute half-step
  double p_mean_minus = 0.0;  // [W]
  double p_mean_plus = 0.0;
  double derivative = 0.0;  // dP_mean / dp
  bool available = false;
  std::string message;
};

struct SensitivityTable {
  double wind = 0.0;
  double p_mean_nominal = 0.0;
  std::vector<SensitivityEntry> entries;
};

// Central differences of the optimized mean power, re-solving warm from the
// nominal optimum at p (1 +- rel_step). Throws InputError for rel_step <= 0,
// ConfigError for an unknown name, and AllStartsFailed when the nominal solve fails.
SensitivityTable sensitivity(const SystemParams& params, double w_ref, const std::vector<std::string>& names,
                             double rel_step, const PilotOptions& opts);

}  // namespace kiteopt

#pragma once

// Configuration files, result files and the command implementations behind
// the kitecli tool.
//
// Exit codes: 0 success, 1 usage/config/input error, 2 no feasible result.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "kiteopt/flightsim.hpp"
#include "kiteopt/pilot.hpp"

namespace kiteopt::cli {

inline constexpr const char* kToolVersion = "0.3.0";

struct ToolConfig {
  SystemParams params;
  RunPlan plan;  // plan.options holds ocp, mesh, solver and guess settings
  double validate_h_step = 0.0;  // [s], 0 selects T/2000
  std::vector<std::string> sensitivity_params{"A", "F_max"};
  double sensitivity_rel_step = 0.02;
};

// Keys are grouped into sections system, aero, wind, ocp, mesh, solver, guess,
// plan. Missing keys keep their defaults, unknown keys throw ConfigError, keys
// starting with '_' are comments.
ToolConfig parse_config(const nlohmann::ordered_json& doc);
ToolConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json to_json(const ToolConfig& config);
// Canonical text: every key in schema order, two-space indent, trailing newline.
std::string canonical_text(const ToolConfig& config);
// FNV-1a 64 of the canonical text, as 16 hex digits.
std::string config_hash(const ToolConfig& config);

// One row of the trajectory table.
struct TrajectoryRow {
  double t = 0.0;
  std::array<double, kNumStates> x{};    // r, beta, phi, psi, trim
  std::array<double, kNumControls> u{};  // steer, reel speed, trim rate
  double tether_force = 0.0;
  double elec_power = 0.0;
  bool reel_out = false;
};

inline constexpr const char* kTrajectoryHeader =
    "t_s,r_m,beta_rad,phi_rad,psi_rad,alpha,u_s,v_reel_mps,u_trim,F_t_N,P_elec_W,phase";
inline constexpr const char* kPowerCurveHeader = "w_mps,P_mean_W,status,reelin_frac,F_peak_N";

std::vector<TrajectoryRow> trajectory_rows(const CycleResult& result);
void write_trajectory(std::ostream& out, const CycleResult& result);
// Throws InputError on a wrong header, column count, unparsable value or a
// non-increasing time column. An empty table is an error.
std::vector<TrajectoryRow> read_trajectory(std::istream& in);
std::vector<TrajectoryRow> read_trajectory(const std::filesystem::path& path);
CycleEnergy table_energy(const std::vector<TrajectoryRow>& rows);
// Half the azimuth sign changes between consecutive reel-out rows.
double table_lobes(const std::vector<TrajectoryRow>& rows);
// Result with states and controls from the table, for replay.
CycleResult result_from_rows(const std::vector<TrajectoryRow>& rows, double wind_ref);

struct StartRecord {
  int index = 0;
  std::uint64_t seed = 0;
  std::string status;
  bool feasible = false;
  double p_mean = 0.0;
  int iterations = 0;
};

// Deterministic summary document; wall times are kept out of it.
nlohmann::ordered_json summary_json(const CycleResult& result, const OcpProblem& problem, const ToolConfig& config,
                                    const std::vector<StartRecord>& starts,
                                    const std::optional<sim::ValidationReport>& validation);
nlohmann::ordered_json validation_json(const sim::ValidationReport& report);

void write_power_curve(std::ostream& out, const PowerCurve& curve);

struct PlotInfo {
  double lobes = 0.0;
  int green_points = 0;
  int total_points = 0;
};
// 3D-projected path (reel-out green, reel-in red) and time series of r, F_t,
// P_elec and alpha. Throws InputError on an empty table.
PlotInfo write_svg(std::ostream& out, const std::vector<TrajectoryRow>& rows, const std::string& title);

// Command arguments after flag parsing. Unset optionals keep config values.
struct CommandArgs {
  std::filesystem::path config;  // empty selects built-in defaults
  std::optional<double> wind;
  std::optional<int> starts;
  std::optional<std::uint64_t> seed;
  std::optional<int> intervals;
  std::optional<std::string> grid;  // lo:hi:step
  std::filesystem::path out;        // empty: $KITEOPT_OUT_DIR, then plan.output_dir, then ./kiteopt_out
  std::filesystem::path result;     // result directory for plot/validate
  std::vector<std::string> params;  // sensitivity parameter names
  std::optional<double> rel_step;
  bool verbose = false;
};

// lo:hi:step. Throws InputError on malformed text.
std::vector<double> parse_grid(const std::string& text);

int cmd_optimize(const CommandArgs& args, std::ostream& err);
int cmd_sweep(const CommandArgs& args, std::ostream& err);
int cmd_plot(const CommandArgs& args, std::ostream& err);
int cmd_validate(const CommandArgs& args, std::ostream& err);
int cmd_sensitivity(const CommandArgs& args, std::ostream& err);
int cmd_guess(const CommandArgs& args, std::ostream& err);
int cmd_config(const CommandArgs& args, std::ostream& out, std::ostream& err);

}  // namespace kiteopt::cli

#include "kiteopt/kitecli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>

#include "kiteopt/errors.hpp"

namespace kiteopt::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

const char* hessian_name(ip::HessianMode m) {
  switch (m) {
    case ip::HessianMode::automatic: return "automatic";
    case ip::HessianMode::problem: return "problem";
    case ip::HessianMode::lbfgs: return "lbfgs";
  }
  return "automatic";
}

ip::HessianMode hessian_from(const std::string& s) {
  if (s == "automatic") return ip::HessianMode::automatic;
  if (s == "problem") return ip::HessianMode::problem;
  if (s == "lbfgs") return ip::HessianMode::lbfgs;
  throw ConfigError("config: solver.hessian must be automatic, problem or lbfgs, got '" + s + "'");
}

// Calls v(section, key, field) for every configurable value in schema order.
template <class Config, class Visitor>
void visit_fields(Config& c, Visitor&& v) {
  auto& s = c.params;
  v("system", "area_m2", s.area);
  v("system", "air_density_kg_m3", s.air_density);
  v("system", "steer_gain_rad_m", s.steer_gain);
  v("system", "gen_efficiency", s.gen_efficiency);
  v("system", "motor_efficiency", s.motor_efficiency);
  v("system", "force_min_N", s.force_min);
  v("system", "force_max_N", s.force_max);
  v("system", "rated_power_W", s.rated_power);
  v("system", "tether_min_m", s.tether_min);
  v("system", "tether_max_m", s.tether_max);
  v("system", "height_min_m", s.height_min);
  v("system", "reel_speed_min_mps", s.reel_speed_min);
  v("system", "reel_speed_max_mps", s.reel_speed_max);
  v("system", "trim_rate_max_per_s", s.trim_rate_max);
  v("system", "eff_wind_min_mps", s.eff_wind_min);
  v("system", "power_blend_W", s.power_blend);

  v("aero", "c_L_min", s.aero.c_L_min);
  v("aero", "c_L_max", s.aero.c_L_max);
  v("aero", "c_D0", s.aero.c_D0);
  v("aero", "k_ind", s.aero.k_ind);

  v("wind", "w_ref_mps", s.wind.w_ref);
  v("wind", "h_ref_m", s.wind.h_ref);
  v("wind", "shear_exp", s.wind.shear_exp);
  v("wind", "h_floor_m", s.wind.h_floor);

  auto& o = c.plan.options.ocp;
  v("ocp", "eps_reg", o.eps_reg);
  v("ocp", "cycle_time_min_s", o.cycle_time.lo);
  v("ocp", "cycle_time_max_s", o.cycle_time.hi);
  v("ocp", "elevation_min_rad", o.elevation.lo);
  v("ocp", "elevation_max_rad", o.elevation.hi);
  v("ocp", "azimuth_max_rad", o.azimuth_max);
  v("ocp", "trim_min", o.trim.lo);
  v("ocp", "trim_max", o.trim.hi);
  v("ocp", "steer_min", o.steer.lo);
  v("ocp", "steer_max", o.steer.hi);
  v("ocp", "periodic", o.periodic);
  v("ocp", "freeze_kinematics", o.freeze_kinematics);
  v("ocp", "disabled_constraints", o.disabled);

  v("mesh", "intervals", c.plan.options.intervals);

  auto& so = c.plan.options.solver;
  v("solver", "tol_opt", so.tol_opt);
  v("solver", "tol_feas", so.tol_feas);
  v("solver", "max_iter", so.max_iter);
  v("solver", "acceptable_tol", so.acceptable_tol);
  v("solver", "acceptable_iter", so.acceptable_iter);
  v("solver", "mu_init", so.mu_init);
  v("solver", "mu_linear_factor", so.mu_linear_factor);
  v("solver", "mu_superlinear_power", so.mu_superlinear_power);
  v("solver", "barrier_tol_factor", so.barrier_tol_factor);
  v("solver", "bound_push", so.bound_push);
  v("solver", "fraction_to_boundary", so.fraction_to_boundary);
  v("solver", "hessian", so.hessian);
  v("solver", "lbfgs_memory", so.lbfgs_memory);
  v("solver", "lbfgs_max_dim", so.lbfgs_max_dim);
  v("solver", "warm_mu_init", so.warm_mu_init);
  v("solver", "warm_bound_push", so.warm_bound_push);
  v("solver", "dense_threshold", so.dense_threshold);

  auto& g = c.plan.options.guess;
  v("guess", "n_eights", g.n_eights);
  v("guess", "beta_center_rad", g.beta_center);
  v("guess", "phi_amp_rad", g.phi_amp);
  v("guess", "beta_amp_rad", g.beta_amp);
  v("guess", "reel_out_fraction", g.reel_out_fraction);
  v("guess", "retract_phi_amp_rad", g.retract_phi_amp);
  v("guess", "retract_climb_rad", g.retract_climb);
  v("guess", "cycle_time_at_8_s", g.cycle_time_at_8);
  v("guess", "cycle_time_slope_s_per_mps", g.cycle_time_slope);
  v("guess", "perturb_magnitude", c.plan.options.perturb_magnitude);

  v("plan", "winds_mps", c.plan.winds);
  v("plan", "starts", c.plan.starts);
  v("plan", "seed", c.plan.seed);
  v("plan", "continuation", c.plan.continuation);
  v("plan", "refresh_every", c.plan.refresh_every);
  v("plan", "threads", c.plan.options.threads);
  v("plan", "output_dir", c.plan.output_dir);
  v("plan", "validate_h_step_s", c.validate_h_step);
  v("plan", "sensitivity_params", c.sensitivity_params);
  v("plan", "sensitivity_rel_step", c.sensitivity_rel_step);
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_number(std::string_view text, int line, int column) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw InputError("trajectory: bad number '" + std::string(text) + "' at line " + std::to_string(line) +
                     ", column " + std::to_string(column + 1));
  }
  return v;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot write " + path.string());
  f << text;
  if (!f) throw InputError("write failed: " + path.string());
}

ordered_json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open " + path.string());
  try {
    return ordered_json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

std::string dump(const ordered_json& j) { return j.dump(2) + "\n"; }

}  // namespace

ToolConfig parse_config(const ordered_json& doc) {
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  ToolConfig cfg;
  std::map<std::string, std::set<std::string>> known;
  visit_fields(cfg, [&](const char* section, const char* key, auto&) { known[section].insert(key); });
  for (const auto& [section, body] : doc.items()) {
    if (section.starts_with("_")) continue;
    const auto it = known.find(section);
    if (it == known.end()) throw ConfigError("config: unknown section '" + section + "'");
    if (!body.is_object()) throw ConfigError("config: section '" + section + "' must be an object");
    for (const auto& [key, value] : body.items()) {
      if (key.starts_with("_")) continue;
      if (!it->second.contains(key)) throw ConfigError("config: unknown key '" + section + "." + key + "'");
    }
  }
  visit_fields(cfg, [&](const char* section, const char* key, auto& field) {
    if (!doc.contains(section) || !doc[section].contains(key)) return;
    const auto& value = doc[section][key];
    using Field = std::decay_t<decltype(field)>;
    try {
      if constexpr (std::is_same_v<Field, ip::HessianMode>) {
        field = hessian_from(value.template get<std::string>());
      } else if constexpr (std::is_same_v<Field, double>) {
        if (!value.is_number()) throw ConfigError("expected a number");
        field = value.template get<double>();
      } else {
        field = value.template get<Field>();
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("config: ") + section + "." + key + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("config: ") + section + "." + key + ": " + e.what());
    }
  });
  cfg.params.validate();
  if (cfg.plan.options.intervals < 10) throw ConfigError("config: mesh.intervals must be >= 10");
  if (cfg.plan.options.threads < 1) throw ConfigError("config: plan.threads must be >= 1");
  if (!(cfg.plan.options.perturb_magnitude >= 0.0 && cfg.plan.options.perturb_magnitude <= 0.2)) {
    throw ConfigError("config: guess.perturb_magnitude must lie in [0, 0.2]");
  }
  if (!(cfg.sensitivity_rel_step > 0.0)) throw ConfigError("config: plan.sensitivity_rel_step must be positive");
  cfg.plan.options.guess.validate();
  try {
    cfg.plan.validate();
  } catch (const InputError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  (void)build_ocp(cfg.params, cfg.plan.options.ocp);
  return cfg;
}

ToolConfig load_config(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open '" + path.string() + "'");
  ordered_json doc;
  try {
    doc = ordered_json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

ordered_json to_json(const ToolConfig& config) {
  ordered_json out = ordered_json::object();
  ToolConfig copy = config;
  visit_fields(copy, [&](const char* section, const char* key, auto& field) {
    using Field = std::decay_t<decltype(field)>;
    if constexpr (std::is_same_v<Field, ip::HessianMode>) {
      out[section][key] = hessian_name(field);
    } else {
      out[section][key] = field;
    }
  });
  return out;
}

std::string canonical_text(const ToolConfig& config) { return dump(to_json(config)); }

std::string config_hash(const ToolConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_text(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<TrajectoryRow> trajectory_rows(const CycleResult& result) {
  std::vector<TrajectoryRow> rows;
  for (std::size_t i = 0; i < result.t.size(); ++i) {
    TrajectoryRow row;
    row.t = result.t[i];
    row.x = result.states[i].as_array();
    row.u = result.controls[i].as_array();
    row.tether_force = result.flow[i].tether_force;
    row.elec_power = result.flow[i].elec_power;
    row.reel_out = result.reel_out[i] != 0;
    rows.push_back(row);
  }
  return rows;
}

void write_trajectory(std::ostream& out, const CycleResult& result) {
  out << kTrajectoryHeader << '\n';
  for (const auto& row : trajectory_rows(result)) {
    out << num(row.t);
    for (double v : row.x) out << ',' << num(v);
    for (double v : row.u) out << ',' << num(v);
    out << ',' << num(row.tether_force) << ',' << num(row.elec_power) << ',' << (row.reel_out ? "out" : "in") << '\n';
  }
}

std::vector<TrajectoryRow> read_trajectory(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("trajectory: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kTrajectoryHeader) throw InputError("trajectory: unexpected header '" + line + "'");
  constexpr int kColumns = 12;
  std::vector<TrajectoryRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string_view> cells;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (static_cast<int>(cells.size()) != kColumns) {
      throw InputError("trajectory: line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                       " columns, expected 12");
    }
    TrajectoryRow row;
    row.t = parse_number(cells[0], line_no, 0);
    for (int k = 0; k < kNumStates; ++k) row.x[k] = parse_number(cells[1 + k], line_no, 1 + k);
    for (int k = 0; k < kNumControls; ++k) row.u[k] = parse_number(cells[6 + k], line_no, 6 + k);
    row.tether_force = parse_number(cells[9], line_no, 9);
    row.elec_power = parse_number(cells[10], line_no, 10);
    if (cells[11] == "out") {
      row.reel_out = true;
    } else if (cells[11] != "in") {
      throw InputError("trajectory: phase must be out or in at line " + std::to_string(line_no));
    }
    if (!rows.empty() && !(row.t > rows.back().t)) {
      throw InputError("trajectory: times not strictly increasing at line " + std::to_string(line_no));
    }
    rows.push_back(row);
  }
  if (rows.empty()) throw InputError("trajectory: table has no rows");
  return rows;
}

std::vector<TrajectoryRow> read_trajectory(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw InputError("cannot open " + path.string());
  return read_trajectory(f);
}

CycleEnergy table_energy(const std::vector<TrajectoryRow>& rows) {
  std::vector<PowerSample> samples;
  samples.reserve(rows.size());
  for (const auto& r : rows) samples.push_back({r.t, r.tether_force, r.u[kReelSpeed], r.elec_power});
  return cycle_energy(samples);
}

double table_lobes(const std::vector<TrajectoryRow>& rows) {
  int crossings = 0;
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    if (!rows[i].reel_out || !rows[i + 1].reel_out) continue;
    if ((rows[i].x[kAzimuth] < 0.0) != (rows[i + 1].x[kAzimuth] < 0.0)) ++crossings;
  }
  return 0.5 * crossings;
}

CycleResult result_from_rows(const std::vector<TrajectoryRow>& rows, double wind_ref) {
  if (rows.size() < 2) throw InputError("trajectory: need at least two rows");
  CycleResult r;
  r.wind_ref = wind_ref;
  for (const auto& row : rows) {
    r.t.push_back(row.t);
    r.states.push_back(KiteState<double>::from(row.x));
    r.controls.push_back(KiteControl<double>::from(row.u));
    r.reel_out.push_back(row.reel_out ? 1 : 0);
    r.peak_force = std::max(r.peak_force, row.tether_force);
  }
  r.cycle_time = rows.back().t - rows.front().t;
  r.energy = table_energy(rows);
  return r;
}

ordered_json validation_json(const sim::ValidationReport& report) {
  ordered_json j;
  j["max_dev_scaled"] = report.max_state_deviation;
  j["worst_node"] = report.worst_node;
  j["periodicity_gap_scaled"] = report.periodicity_gap;
  j["P_mean_replay_W"] = report.p_mean_replay;
  j["P_mean_optimized_W"] = report.p_mean_optimized;
  j["P_mean_rel_error"] = report.p_mean_rel_error;
  j["path_violations"] = report.path_violations;
  j["h_step_s"] = report.h_step;
  return j;
}

ordered_json summary_json(const CycleResult& result, const OcpProblem& problem, const ToolConfig& config,
                          const std::vector<StartRecord>& starts,
                          const std::optional<sim::ValidationReport>& validation) {
  ordered_json j;
  j["tool"] = "kitecli";
  j["tool_version"] = kToolVersion;
  j["config_hash"] = config_hash(config);
  j["wind_mps"] = result.wind_ref;
  j["status"] = ip::to_string(result.solver.status);
  j["feasible"] = result.feasible;
  j["P_mean_W"] = result.energy.p_mean;
  j["W_reel_out_J"] = result.energy.w_out;
  j["W_reel_in_J"] = result.energy.w_in;
  j["T_cycle_s"] = result.energy.t_cycle;
  j["reel_out_fraction"] = result.energy.reel_out_fraction;
  j["reel_in_fraction"] = result.energy.reel_in_fraction;
  j["F_peak_N"] = result.peak_force;
  j["P_elec_peak_W"] = result.peak_elec_power;
  j["lobes"] = count_lobes(result);
  j["objective"] = result.objective;
  j["max_violation_scaled"] = result.max_violation;
  j["periodicity_residual_scaled"] = result.periodicity_residual;
  ordered_json res = ordered_json::object();
  for (const auto& r : result.residuals) res[r.name] = r.max_violation;
  j["residuals"] = res;
  ordered_json cons;
  ordered_json path = ordered_json::array();
  for (const auto& c : problem.path) path.push_back(c.name);
  cons["path"] = path;
  ordered_json boxes = ordered_json::array();
  for (const auto& b : problem.boxes) boxes.push_back({{"name", b.name}, {"lo", b.bounds.lo}, {"hi", b.bounds.hi}});
  cons["boxes"] = boxes;
  j["constraints"] = cons;
  j["solver"] = {{"iterations", result.solver.iterations},
                 {"kkt_error", result.solver.kkt_error},
                 {"message", result.solver.message}};
  j["mesh_intervals"] = static_cast<int>(result.t.size()) - 1;
  ordered_json seeds = ordered_json::array();
  ordered_json runs = ordered_json::array();
  for (const auto& s : starts) {
    seeds.push_back(s.seed);
    runs.push_back({{"index", s.index},
                    {"seed", s.seed},
                    {"status", s.status},
                    {"feasible", s.feasible},
                    {"P_mean_W", s.p_mean},
                    {"iterations", s.iterations}});
  }
  j["seeds"] = seeds;
  j["best_start"] = result.start_index;
  j["starts"] = runs;
  if (validation) j["validation"] = validation_json(*validation);
  return j;
}

void write_power_curve(std::ostream& out, const PowerCurve& curve) {
  out << kPowerCurveHeader << '\n';
  for (const auto& p : curve.points) {
    out << num(p.wind) << ',' << num(p.p_mean) << ',' << ip::to_string(p.status) << ',' << num(p.reel_in_fraction)
        << ',' << num(p.peak_force) << '\n';
  }
}

PlotInfo write_svg(std::ostream& out, const std::vector<TrajectoryRow>& rows, const std::string& title) {
  if (rows.empty()) throw InputError("plot: empty trajectory");
  PlotInfo info;
  info.total_points = static_cast<int>(rows.size());
  for (const auto& r : rows) info.green_points += r.reel_out ? 1 : 0;
  info.lobes = table_lobes(rows);

  constexpr double kWidth = 1000.0;
  constexpr double kHeight = 640.0;
  char buf[256];
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                kWidth, kHeight, kWidth, kHeight);
  out << buf;
  ordered_json meta;
  meta["lobes"] = info.lobes;
  meta["green_points"] = info.green_points;
  meta["total_points"] = info.total_points;
  out << "<metadata>" << meta.dump() << "</metadata>\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"20\" y=\"28\" font-family=\"sans-serif\" font-size=\"16\">" << title << "</text>\n";

  // Orthographic view from behind and above the ground station.
  const double az = -30.0 * std::numbers::pi / 180.0;
  const double el = 20.0 * std::numbers::pi / 180.0;
  std::vector<std::array<double, 2>> proj;
  for (const auto& r : rows) {
    const double rr = r.x[kTether];
    const double beta = r.x[kElevation];
    const double phi = r.x[kAzimuth];
    const double xd = rr * std::cos(beta) * std::cos(phi);
    const double yc = rr * std::cos(beta) * std::sin(phi);
    const double zh = rr * std::sin(beta);
    const double u = -xd * std::sin(az) + yc * std::cos(az);
    const double v = zh * std::cos(el) - (xd * std::cos(az) + yc * std::sin(az)) * std::sin(el);
    proj.push_back({u, v});
  }
  double umin = 0.0, umax = 0.0, vmin = 0.0, vmax = 0.0;  // include the ground station
  for (const auto& p : proj) {
    umin = std::min(umin, p[0]);
    umax = std::max(umax, p[0]);
    vmin = std::min(vmin, p[1]);
    vmax = std::max(vmax, p[1]);
  }
  const double box_x = 20.0, box_y = 50.0, box_w = 560.0, box_h = 560.0;
  const double span = std::max({umax - umin, vmax - vmin, 1e-9});
  const double k = 0.92 * box_w / span;
  auto sx = [&](double u) { return box_x + 0.5 * box_w + k * (u - 0.5 * (umin + umax)); };
  auto sy = [&](double v) { return box_y + 0.5 * box_h - k * (v - 0.5 * (vmin + vmax)); };
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#999\"/>\n", box_x,
                box_y, box_w, box_h);
  out << buf;
  out << "<polyline fill=\"none\" stroke=\"#bbbbbb\" stroke-width=\"0.8\" points=\"";
  for (const auto& p : proj) {
    std::snprintf(buf, sizeof buf, "%.2f,%.2f ", sx(p[0]), sy(p[1]));
    out << buf;
  }
  out << "\"/>\n";
  std::snprintf(buf, sizeof buf, "<rect x=\"%.2f\" y=\"%.2f\" width=\"6\" height=\"6\" fill=\"black\"/>\n",
                sx(0.0) - 3.0, sy(0.0) - 3.0);
  out << buf;
  out << "<g class=\"samples\">\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.2\" fill=\"%s\"/>\n", sx(proj[i][0]),
                  sy(proj[i][1]), rows[i].reel_out ? "green" : "red");
    out << buf;
  }
  out << "</g>\n";

  struct Series {
    const char* label;
    double (*value)(const TrajectoryRow&);
  };
  const Series series[] = {
      {"r [m]", [](const TrajectoryRow& r) { return r.x[kTether]; }},
      {"F_t [kN]", [](const TrajectoryRow& r) { return r.tether_force / 1e3; }},
      {"P_elec [kW]", [](const TrajectoryRow& r) { return r.elec_power / 1e3; }},
      {"alpha [-]", [](const TrajectoryRow& r) { return r.x[kTrim]; }},
  };
  const double px = 620.0, pw = 360.0, ph = 120.0;
  const double t0 = rows.front().t;
  const double t1 = std::max(rows.back().t, t0 + 1e-9);
  for (int s = 0; s < 4; ++s) {
    const double py = 50.0 + s * (ph + 20.0);
    double lo = series[s].value(rows.front());
    double hi = lo;
    for (const auto& r : rows) {
      lo = std::min(lo, series[s].value(r));
      hi = std::max(hi, series[s].value(r));
    }
    if (hi - lo < 1e-12) {
      lo -= 0.5;
      hi += 0.5;
    }
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"#999\"/>\n", px,
                  py, pw, ph);
    out << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\">%s  [%.4g, %.4g]</text>\n",
                  px + 4.0, py + 12.0, series[s].label, lo, hi);
    out << buf;
    out << "<polyline fill=\"none\" stroke=\"#1f4e9a\" stroke-width=\"1\" points=\"";
    for (const auto& r : rows) {
      const double x = px + pw * (r.t - t0) / (t1 - t0);
      const double y = py + ph - ph * (series[s].value(r) - lo) / (hi - lo);
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x, y);
      out << buf;
    }
    out << "\"/>\n";
  }
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\">t [s], 0 to %.1f</text>\n",
                px, 50.0 + 4 * (ph + 20.0), t1);
  out << buf;
  out << "</svg>\n";
  return info;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> parts;
  std::string_view rest(text);
  for (int k = 0; k < 3; ++k) {
    const auto colon = rest.find(':');
    if ((k < 2) == (colon == std::string_view::npos)) throw InputError("grid: expected lo:hi:step, got '" + text + "'");
    const std::string_view cell = rest.substr(0, colon);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
      throw InputError("grid: bad number '" + std::string(cell) + "' in '" + text + "'");
    }
    parts.push_back(v);
    if (colon != std::string_view::npos) rest.remove_prefix(colon + 1);
  }
  if (!(parts[0] > 0.0)) throw InputError("grid: wind speeds must be positive");
  return wind_grid(parts[0], parts[1], parts[2]);
}

namespace {

ToolConfig config_for(const CommandArgs& args) {
  ToolConfig cfg = args.config.empty() ? ToolConfig{} : load_config(args.config);
  if (args.wind) {
    if (!(*args.wind > 0.0)) throw InputError("--wind must be positive");
    cfg.params.wind.w_ref = *args.wind;
  }
  if (args.starts) {
    if (*args.starts < 1) throw InputError("--starts must be >= 1");
    cfg.plan.starts = *args.starts;
  }
  if (args.seed) cfg.plan.seed = *args.seed;
  if (args.intervals) {
    if (*args.intervals < 10) throw InputError("--n-intervals must be >= 10");
    cfg.plan.options.intervals = *args.intervals;
  }
  if (args.grid) cfg.plan.winds = parse_grid(*args.grid);
  if (args.rel_step) cfg.sensitivity_rel_step = *args.rel_step;
  if (!args.params.empty()) cfg.sensitivity_params = args.params;
  return cfg;
}

fs::path output_dir(const CommandArgs& args, const ToolConfig& cfg) {
  fs::path dir = args.out;
  if (dir.empty()) {
    if (const char* env = std::getenv("KITEOPT_OUT_DIR"); env && *env) dir = env;
  }
  if (dir.empty()) dir = cfg.plan.output_dir;
  if (dir.empty()) dir = "kiteopt_out";
  fs::create_directories(dir);
  return dir;
}

StartRecord record_of(const CycleResult& r) {
  return {r.start_index, static_cast<std::uint64_t>(r.seed), ip::to_string(r.solver.status), r.feasible,
          r.energy.p_mean, r.solver.iterations};
}

SystemParams at_wind(SystemParams p, double w) {
  p.wind.w_ref = w;
  return p;
}

// Runs `body`, mapping exceptions onto the exit-code contract.
template <class Body>
int guarded(const char* name, std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << name << ": " << e.what() << '\n';
  } catch (const InputError& e) {
    err << name << ": " << e.what() << '\n';
  } catch (const fs::filesystem_error& e) {
    err << name << ": " << e.what() << '\n';
  } catch (const AllStartsFailed& e) {
    err << name << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << name << ": " << e.what() << '\n';
  }
  return 1;
}

}  // namespace

int cmd_optimize(const CommandArgs& args, std::ostream& err) {
  return guarded("optimize", err, [&] {
    const ToolConfig cfg = config_for(args);
    const fs::path dir = output_dir(args, cfg);
    PilotOptions opts = cfg.plan.options;
    opts.capture_log = true;
    const double w = cfg.params.wind.w_ref;
    const auto started = std::chrono::steady_clock::now();
    std::vector<CycleResult> starts;
    std::optional<CycleResult> best;
    try {
      MultiStartResult ms = multi_start(cfg.params, w, cfg.plan.starts, cfg.plan.seed, opts);
      starts = std::move(ms.starts);
      best = std::move(ms.best);
    } catch (const AllStartsFailed& e) {
      // No trajectory for an infeasible run; keep the diagnostics.
      fs::remove(dir / "trajectory.csv");
      ordered_json j;
      j["tool"] = "kitecli";
      j["tool_version"] = kToolVersion;
      j["config_hash"] = config_hash(cfg);
      j["wind_mps"] = w;
      j["status"] = "no_feasible_start";
      j["feasible"] = false;
      ordered_json runs = ordered_json::array();
      std::string log;
      int k = 0;
      for (const auto& d : e.per_start()) {
        runs.push_back({{"index", k},
                        {"seed", k == 0 ? 0 : start_seed(cfg.plan.seed, k)},
                        {"status", ip::to_string(d.status)},
                        {"iterations", d.iterations},
                        {"message", d.message}});
        log += "# start " + std::to_string(k) + "\n" + d.log;
        ++k;
      }
      j["starts"] = runs;
      write_text(dir / "summary.json", dump(j));
      write_text(dir / "iterations.log", log);
      throw;
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::vector<StartRecord> records;
    std::string log;
    ordered_json diag;
    diag["wall_time_s"] = elapsed;
    ordered_json per = ordered_json::array();
    for (const auto& r : starts) {
      records.push_back(record_of(r));
      log += "# start " + std::to_string(r.start_index) + " seed " + std::to_string(r.seed) + "\n" + r.solver.log;
      per.push_back({{"index", r.start_index}, {"wall_time_s", r.solver.wall_time}});
      if (args.verbose) {
        err << "optimize: start " << r.start_index << " " << ip::to_string(r.solver.status) << " P_mean "
            << r.energy.p_mean << " W\n";
      }
    }
    diag["starts"] = per;
    const OcpProblem problem = build_ocp(at_wind(cfg.params, w), opts.ocp);
    const sim::ValidationReport rep = sim::validate(*best, problem, cfg.validate_h_step);
    std::ostringstream table;
    write_trajectory(table, *best);
    write_text(dir / "trajectory.csv", table.str());
    write_text(dir / "summary.json", dump(summary_json(*best, problem, cfg, records, rep)));
    write_text(dir / "diagnostics.json", dump(diag));
    write_text(dir / "iterations.log", log);
    err << "optimize: " << ip::to_string(best->solver.status) << ", P_mean " << best->energy.p_mean << " W, wrote "
        << dir.string() << '\n';
    return 0;
  });
}

int cmd_sweep(const CommandArgs& args, std::ostream& err) {
  return guarded("sweep", err, [&] {
    const ToolConfig cfg = config_for(args);
    const fs::path dir = output_dir(args, cfg);
    const auto started = std::chrono::steady_clock::now();
    const PowerCurve curve = sweep(cfg.plan, cfg.params);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::ostringstream table;
    write_power_curve(table, curve);
    write_text(dir / "power_curve.csv", table.str());
    ordered_json points = ordered_json::array();
    for (const auto& p : curve.points) {
      char name[32];
      std::snprintf(name, sizeof name, "w_%06.2f", p.wind);
      const fs::path sub = dir / name;
      fs::create_directories(sub);
      std::ostringstream traj;
      write_trajectory(traj, p.trajectory);
      write_text(sub / "trajectory.csv", traj.str());
      const OcpProblem problem = build_ocp(at_wind(cfg.params, p.wind), cfg.plan.options.ocp);
      write_text(sub / "summary.json", dump(summary_json(p.trajectory, problem, cfg, {record_of(p.trajectory)}, {})));
      points.push_back({{"wind_mps", p.wind}, {"dir", name}, {"warm_started", p.warm_started}});
    }
    ordered_json failures = ordered_json::array();
    for (const auto& f : curve.failures) failures.push_back({{"wind_mps", f.wind}, {"message", f.message}});
    ordered_json index;
    index["tool_version"] = kToolVersion;
    index["config_hash"] = config_hash(cfg);
    index["points"] = points;
    index["failures"] = failures;
    write_text(dir / "sweep.json", dump(index));
    write_text(dir / "diagnostics.json", dump(ordered_json{{"wall_time_s", elapsed}}));
    err << "sweep: " << curve.points.size() << " feasible points, " << curve.failures.size() << " failures\n";
    return curve.points.empty() ? 2 : 0;
  });
}

int cmd_plot(const CommandArgs& args, std::ostream& err) {
  return guarded("plot", err, [&] {
    if (args.result.empty()) throw InputError("plot: result directory required");
    const auto rows = read_trajectory(args.result / "trajectory.csv");
    std::string title = "trajectory";
    if (fs::exists(args.result / "summary.json")) {
      const auto s = read_json(args.result / "summary.json");
      if (s.contains("wind_mps")) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "w = %.3g m/s", s["wind_mps"].get<double>());
        title = buf;
      }
    }
    const fs::path file = args.out.empty() ? args.result / "trajectory.svg" : args.out;
    if (file.has_parent_path()) fs::create_directories(file.parent_path());
    std::ostringstream svg;
    const PlotInfo info = write_svg(svg, rows, title);
    write_text(file, svg.str());
    err << "plot: " << info.lobes << " lobes, " << info.green_points << "/" << info.total_points
        << " reel-out samples, wrote " << file.string() << '\n';
    return 0;
  });
}

int cmd_validate(const CommandArgs& args, std::ostream& err) {
  return guarded("validate", err, [&] {
    if (args.result.empty()) throw InputError("validate: result directory required");
    const ToolConfig cfg = config_for(args);
    const auto rows = read_trajectory(args.result / "trajectory.csv");
    double w = cfg.params.wind.w_ref;
    if (!args.wind && fs::exists(args.result / "summary.json")) {
      const auto s = read_json(args.result / "summary.json");
      if (s.contains("wind_mps")) w = s["wind_mps"].get<double>();
    }
    const OcpProblem problem = build_ocp(at_wind(cfg.params, w), cfg.plan.options.ocp);
    const sim::ValidationReport rep = sim::validate(result_from_rows(rows, w), problem, cfg.validate_h_step);
    const bool pass = rep.max_state_deviation < 0.05 && rep.p_mean_rel_error < 0.03;
    const fs::path dir = args.out.empty() ? args.result : args.out;
    fs::create_directories(dir);
    std::ostringstream t;
    t << "max_dev_scaled,worst_node,periodicity_gap_scaled,P_mean_replay_W,P_mean_opt_W,P_mean_rel_err,"
         "path_violations,h_step_s,pass\n";
    t << num(rep.max_state_deviation) << ',' << rep.worst_node << ',' << num(rep.periodicity_gap) << ','
      << num(rep.p_mean_replay) << ',' << num(rep.p_mean_optimized) << ',' << num(rep.p_mean_rel_error) << ','
      << rep.path_violations << ',' << num(rep.h_step) << ',' << (pass ? "yes" : "no") << '\n';
    write_text(dir / "validation.csv", t.str());
    err << "validate: max_dev_scaled " << rep.max_state_deviation << ", P_mean rel error " << rep.p_mean_rel_error
        << (pass ? " (pass)\n" : " (fail)\n");
    return pass ? 0 : 2;
  });
}

int cmd_sensitivity(const CommandArgs& args, std::ostream& err) {
  return guarded("sensitivity", err, [&] {
    const ToolConfig cfg = config_for(args);
    const fs::path dir = output_dir(args, cfg);
    const SensitivityTable table = sensitivity(cfg.params, cfg.params.wind.w_ref, cfg.sensitivity_params,
                                               cfg.sensitivity_rel_step, cfg.plan.options);
    std::ostringstream t;
    t << "param,value,step,P_mean_minus_W,P_mean_plus_W,dP_mean_dp_W_per_unit,available\n";
    for (const auto& e : table.entries) {
      t << e.name << ',' << num(e.value) << ',' << num(e.step) << ',' << num(e.p_mean_minus) << ','
        << num(e.p_mean_plus) << ',' << num(e.derivative) << ',' << (e.available ? "yes" : "no") << '\n';
      if (!e.available) err << "sensitivity: " << e.name << " unavailable: " << e.message << '\n';
    }
    write_text(dir / "sensitivity.csv", t.str());
    err << "sensitivity: nominal P_mean " << table.p_mean_nominal << " W, wrote " << (dir / "sensitivity.csv").string()
        << '\n';
    return 0;
  });
}

int cmd_guess(const CommandArgs& args, std::ostream& err) {
  return guarded("guess", err, [&] {
    const ToolConfig cfg = config_for(args);
    const fs::path dir = output_dir(args, cfg);
    const CollocationNlp nlp = make_nlp(cfg.params, cfg.params.wind.w_ref, cfg.plan.options);
    std::vector<double> z = synth_guess(nlp, cfg.plan.options.guess);
    if (args.seed) z = perturb(nlp, z, *args.seed, cfg.plan.options.perturb_magnitude);
    const CycleResult g = nlp.extract(z);
    std::ostringstream t;
    write_trajectory(t, g);
    write_text(dir / "trajectory.csv", t.str());
    err << "guess: P_mean " << g.energy.p_mean << " W, max violation " << g.max_violation << ", wrote "
        << (dir / "trajectory.csv").string() << '\n';
    return 0;
  });
}

int cmd_config(const CommandArgs& args, std::ostream& out, std::ostream& err) {
  return guarded("config", err, [&] {
    out << canonical_text(config_for(args));
    return 0;
  });
}

}  // namespace kiteopt::cli

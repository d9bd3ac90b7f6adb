#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "csv_table.hpp"
#include "ionkerr/experiment.hpp"
#include "ionkerr/fitting.hpp"
#include "ionkerr/oracle.hpp"
#include "ionkerr/perturbation.hpp"
#include "ionkerr/trap_model.hpp"
#include "ionkerr/version.hpp"
#include "json.hpp"
#include "manifest.hpp"

namespace ionkerr::cli {
namespace {

using Json = nlohmann::ordered_json;

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct TrapArgs {
  double mass_amu = kCalcium40MassAmu;
  double fz_khz = 1716.0;
  double fperp_mhz = 4.0;

  TrapConfig config() const {
    detail::require(std::isfinite(mass_amu) && mass_amu > 0.0, "--mass-amu must be positive");
    return TrapConfig::from_amu(mass_amu, khz_to_rad_s(fz_khz), mhz_to_rad_s(fperp_mhz));
  }
};

struct Common {
  std::string config_file;
  bool stamp = false;
};

void add_trap_options(CLI::App* sub, TrapArgs& t) {
  sub->add_option("--mass-amu", t.mass_amu, "Ion mass in atomic mass units (default: 40Ca)")
      ->default_str(fmt(t.mass_amu));
  sub->add_option("--fz-khz", t.fz_khz, "Axial COM trap frequency omega_z/2pi in kHz")->capture_default_str();
  sub->add_option("--fperp-mhz", t.fperp_mhz, "Radial trap frequency omega_perp/2pi in MHz; must exceed fz")
      ->capture_default_str();
}

void add_common_options(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_file,
                  "Flat key = value file mirroring the long flags of this subcommand; flags given on the command "
                  "line take precedence");
  sub->add_flag("--stamp", c.stamp, "Add a wall-clock UTC timestamp to the manifest (breaks byte-identical reruns)");
}

void emit(const Json& j) { std::cout << j.dump(2) << '\n'; }

Json trap_json(const TrapArgs& a, const TrapConfig& c) {
  Json j;
  j["mass_amu"] = a.mass_amu;
  j["mass_kg"] = c.ion_mass;
  j["fz_hz"] = a.fz_khz * 1e3;
  j["omega_z_rad_s"] = c.omega_z;
  j["fperp_hz"] = a.fperp_mhz * 1e6;
  j["omega_perp_rad_s"] = c.omega_perp;
  return j;
}

Json validity_json(const ValidityReport& v) {
  Json j;
  j["ratio_a"] = v.ratio_a;
  j["ratio_b"] = v.ratio_b;
  j["resonance_detuning_rad_s"] = v.resonance_detuning;
  j["threshold"] = v.threshold;
  j["ok"] = v.ok;
  return j;
}

/// "LO:HI" or "LO:HI:STEP" (numbers only).
std::vector<double> parse_range(const std::string& text, std::size_t parts_min, std::size_t parts_max,
                                const std::string& flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string tok;
  while (std::getline(ss, tok, ':')) {
    const std::string t = trim(tok);
    double v = 0.0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(v))
      throw InvalidInput(flag + ": '" + text + "' is not a valid range");
    out.push_back(v);
  }
  if (out.size() < parts_min || out.size() > parts_max) throw InvalidInput(flag + ": '" + text + "' is not a valid range");
  return out;
}

// ---------------------------------------------------------------------------
// spectrum

struct SpectrumArgs {
  TrapArgs trap;
  Common common;
  double threshold = kDefaultValidityThreshold;
};

void run_spectrum(const CLI::App& sub, const SpectrumArgs& a) {
  const TrapConfig c = a.trap.config();
  const ModeSpectrum s = normal_modes(c);
  const NonlinearCoefficients k = nonlinear_coefficients(s, c);
  Json j;
  j["input"] = trap_json(a.trap, c);
  j["omega_s_rad_s"] = s.omega_s;
  j["fs_hz"] = rad_s_to_hz(s.omega_s);
  j["omega_r_rad_s"] = s.omega_r;
  j["fr_hz"] = rad_s_to_hz(s.omega_r);
  j["z0_m"] = s.z0;
  j["u0_m"] = s.u0;
  j["x0_m"] = s.x0;
  j["c3_j_per_m3"] = k.c3;
  j["c4_j_per_m4"] = k.c4;
  j["validity"] = validity_json(validity_check(s, a.threshold));
  j["manifest"] = make_manifest(sub, {{}, false, 0, a.common.stamp});
  emit(j);
}

// ---------------------------------------------------------------------------
// chi

struct ChiArgs {
  TrapArgs trap;
  Common common;
  bool oracle = false;
  unsigned nmax = 12;
  bool three_mode = false;
  double guard = kDefaultResonanceGuard;
};

void run_chi(const CLI::App& sub, const ChiArgs& a) {
  const TrapConfig c = a.trap.config();
  const ModeSpectrum s = normal_modes(c);
  const NonlinearCoefficients k = nonlinear_coefficients(s, c);
  check_resonance_guard(s, a.guard);
  const KerrCoupling closed = chi_closed_form(c, s);
  const double pt = chi_perturbative(s, k, codata2018_constants(), {}, a.guard);
  Json j;
  j["input"] = trap_json(a.trap, c);
  j["chi_closed_form_rad_s"] = closed.chi;
  j["chi_closed_form_hz"] = rad_s_to_hz(closed.chi);
  j["chi_perturbative_rad_s"] = pt;
  j["chi_perturbative_hz"] = rad_s_to_hz(pt);
  j["chi_quartic_only_hz"] = rad_s_to_hz(chi_quartic_only(c, s));
  Json rel;
  rel["perturbative_vs_closed_form"] = std::abs(pt - closed.chi) / std::abs(closed.chi);
  if (a.oracle) {
    const Truncation t = a.three_mode ? Truncation::three_mode(a.nmax) : Truncation::two_mode(a.nmax);
    const double num = chi_numeric(c, s, k, t);
    j["chi_numeric_rad_s"] = num;
    j["chi_numeric_hz"] = rad_s_to_hz(num);
    j["oracle_basis_dimension"] = t.dimension();
    rel["numeric_vs_closed_form"] = std::abs(num - closed.chi) / std::abs(closed.chi);
  }
  j["relative_errors"] = rel;
  j["validity"] = validity_json(closed.validity);
  j["manifest"] = make_manifest(sub, {{}, false, 0, a.common.stamp});
  emit(j);
}

// ---------------------------------------------------------------------------
// scan

struct ScanArgs {
  TrapArgs trap;
  Common common;
  std::string fz_range = "860:1720";
  unsigned points = 10;
  bool oracle = false;
  unsigned nmax = 12;
  std::string out;
};

void run_scan(const CLI::App& sub, const ScanArgs& a) {
  const auto r = parse_range(a.fz_range, 2, 2, "--fz-range");
  detail::require(a.points >= 1, "--points must be >= 1");
  detail::require(r[0] > 0.0 && r[1] >= r[0], "--fz-range: need 0 < LO <= HI (kHz)");
  const unsigned n = r[1] == r[0] ? 1u : a.points;

  std::ostringstream buf;
  CsvWriter w(buf);
  std::vector<std::string> header{"fz_khz", "omega_z_rad_s", "fr_khz", "shift_hz_closed", "shift_hz_quartic_only",
                                  "validity_ok"};
  if (a.oracle) header.push_back("shift_hz_numeric");
  w.row(header);
  for (unsigned i = 0; i < n; ++i) {
    TrapArgs t = a.trap;
    t.fz_khz = n == 1 ? r[0] : r[0] + (r[1] - r[0]) * i / (n - 1);
    const TrapConfig c = t.config();
    const ModeSpectrum s = normal_modes(c);
    const KerrCoupling k = chi_closed_form(c, s);
    std::vector<std::string> row{fmt(t.fz_khz), fmt(c.omega_z), fmt(rad_s_to_hz(s.omega_r) / 1e3),
                                 fmt(k.shift_per_phonon_hz), fmt(rad_s_to_hz(chi_quartic_only(c, s))),
                                 fmt(k.validity.ok)};
    if (a.oracle) {
      row.push_back(fmt(rad_s_to_hz(chi_numeric(c, s, nonlinear_coefficients(s, c), Truncation::two_mode(a.nmax)))));
    }
    w.row(row);
  }
  const Json manifest = make_manifest(sub, {{}, false, 0, a.common.stamp});
  if (a.out.empty()) {
    std::cout << buf.str();
    return;
  }
  std::ofstream(a.out) << buf.str();
  Json j;
  j["output"] = a.out;
  j["rows"] = n;
  j["manifest"] = manifest;
  std::ofstream(a.out + ".manifest.json") << j["manifest"].dump(2) << '\n';
  emit(j);
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateArgs {
  TrapArgs trap;
  Common common;
  std::string protocol = "ramsey";
  std::vector<double> tau_ms;
  std::string tau_grid_ms;
  double nbar_x = 0.0;
  double nbar_y = 0.0;
  unsigned shots = 500;
  unsigned phases = 8;
  unsigned long long seed = 1;
  double heating_rate = 0.0;
  std::optional<double> shift_hz;
  double contrast = 1.0;
  double gamma = 0.0;
  double detuning_hz = 0.0;
  double inject_prob = 0.5;
  std::string out_prefix;
  bool no_shots = false;
};

std::vector<double> resolve_taus(const SimulateArgs& a) {
  std::vector<double> taus;
  for (double t : a.tau_ms) taus.push_back(t * 1e-3);
  if (!a.tau_grid_ms.empty()) {
    const auto g = parse_range(a.tau_grid_ms, 3, 3, "--tau-grid-ms");
    detail::require(g[2] > 0.0 && g[1] >= g[0], "--tau-grid-ms: need LO <= HI and STEP > 0");
    const auto count = static_cast<long long>(std::floor((g[1] - g[0]) / g[2] + 1e-9)) + 1;
    detail::require(count <= 1000000, "--tau-grid-ms: too many points");
    for (long long i = 0; i < count; ++i) taus.push_back((g[0] + g[2] * static_cast<double>(i)) * 1e-3);
  }
  detail::require(!taus.empty(), "simulate: give --tau-ms and/or --tau-grid-ms");
  for (double t : taus) detail::require(t >= 0.0, "simulate: tau must be non-negative");
  return taus;
}

void write_curve_rows(CsvWriter& w, const ContrastCurve& curve, const std::string& cls, SequenceKind kind,
                      const KerrCoupling& kerr, const ThermalOccupation& tx, const ThermalOccupation& ty,
                      const SimulationOptions& opt) {
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const bool injected = cls == "1";
    const auto e = expected_fringe(kind, curve.taus[i], kerr, tx, ty, opt, injected);
    w.row(curve.taus[i], cls, curve.contrast[i], curve.contrast_err[i], curve.phase[i], curve.phase_err[i],
          static_cast<bool>(curve.degenerate[i]), std::abs(e), std::arg(e));
  }
}

void run_simulate(const CLI::App& sub, const SimulateArgs& a) {
  const SequenceKind kind = parse_sequence_kind(a.protocol);
  const auto taus = resolve_taus(a);
  detail::require(!a.out_prefix.empty(), "simulate: --out-prefix is required");
  detail::require(a.phases >= 4, "simulate: --phases must be >= 4 for the fringe fit");
  detail::require(a.shots >= 1, "simulate: --shots must be >= 1");

  KerrCoupling kerr;
  if (a.shift_hz) {
    kerr = make_kerr_coupling(hz_to_rad_s(*a.shift_hz));
  } else {
    const TrapConfig c = a.trap.config();
    kerr = chi_closed_form(c, normal_modes(c));
  }
  const ThermalOccupation tx{a.nbar_x}, ty{a.nbar_y};
  SimulationOptions opt;
  opt.initial_contrast = a.contrast;
  opt.gamma = a.gamma;
  opt.static_detuning = hz_to_rad_s(a.detuning_hz);
  opt.heating_rate_x = a.heating_rate;
  opt.heating_rate_y = a.heating_rate;

  const std::string shots_path = a.out_prefix + "_shots.csv";
  const std::string contrast_path = a.out_prefix + "_contrast.csv";
  const std::string manifest_path = a.out_prefix + "_manifest.json";
  std::ofstream shots_file;
  std::optional<CsvWriter> shots;
  if (!a.no_shots) {
    shots_file.open(shots_path);
    if (!shots_file) throw InvalidInput("cannot write '" + shots_path + "'");
    shots.emplace(shots_file);
    shots->row(std::vector<std::string>{"tau_s", "phase_index", "analysis_phase_rad", "shot", "n_rx", "n_ry",
                                        "spectator", "outcome"});
  }

  const auto phases = uniform_phases(a.phases);
  std::vector<ShotRecord> all;
  for (double tau : taus) {
    const SequenceSpec spec{kind, tau, phases, a.inject_prob};
    auto recs = simulate_sequence(spec, kerr, tx, ty, a.shots, a.seed, opt);
    if (shots) {
      for (std::size_t i = 0; i < recs.size(); ++i) {
        const auto& r = recs[i];
        shots->row(r.tau, static_cast<unsigned>(i / a.shots), r.analysis_phase, static_cast<unsigned>(i % a.shots),
                   r.sampled_n_rx, r.sampled_n_ry, r.spectator_outcome, r.primary_outcome);
      }
    }
    all.insert(all.end(), recs.begin(), recs.end());
  }

  const bool split = kind == SequenceKind::SpinEchoInjection;
  const ContrastAnalysis analysis = contrast_from_shots(all, split);
  std::ofstream contrast_file(contrast_path);
  if (!contrast_file) throw InvalidInput("cannot write '" + contrast_path + "'");
  CsvWriter cw(contrast_file);
  cw.row(std::vector<std::string>{"tau_s", "class", "contrast", "contrast_err", "phase_rad", "phase_err_rad",
                                  "degenerate", "analytic_contrast", "analytic_phase_rad"});
  write_curve_rows(cw, analysis.all, "all", kind, kerr, tx, ty, opt);
  if (split) {
    write_curve_rows(cw, *analysis.class0, "0", kind, kerr, tx, ty, opt);
    write_curve_rows(cw, *analysis.class1, "1", kind, kerr, tx, ty, opt);
  }

  Json j;
  Json files;
  if (!a.no_shots) files["shots"] = shots_path;
  files["contrast"] = contrast_path;
  files["manifest"] = manifest_path;
  j["files"] = files;
  j["chi_rad_s"] = kerr.chi;
  j["shift_hz"] = kerr.shift_per_phonon_hz;
  j["revival_time_s"] = kerr.chi != 0.0 ? Json(revival_time(kerr)) : Json(nullptr);
  j["tau_points"] = taus.size();
  j["shots_total"] = all.size();
  j["manifest"] = make_manifest(sub, {{}, true, a.seed, a.common.stamp});
  std::ofstream(manifest_path) << j["manifest"].dump(2) << '\n';
  emit(j);
}

// ---------------------------------------------------------------------------
// fit

struct FitArgs {
  Common common;
  std::string model;
  std::string input;
  std::string column = "shift_hz_closed";
  double protocol_factor = 2.0;
  std::string cls = "all";
};

/// Rows of a contrast CSV belonging to one class; files without a class column are taken whole.
std::vector<std::size_t> class_rows(const CsvTable& t, const std::string& cls) {
  std::vector<std::size_t> rows;
  const auto c = t.find("class");
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    if (!c || t.rows[r][*c] == cls) rows.push_back(r);
  if (rows.empty()) throw InvalidInput(t.source + ": no rows with class '" + cls + "'");
  return rows;
}

Json fit_revival_json(const CsvTable& t, const std::string& cls) {
  const auto tc = t.column("tau_s"), cc = t.column("contrast"), ec = t.column("contrast_err");
  ContrastCurve curve;
  for (std::size_t r : class_rows(t, cls)) curve.push_back(t.number(r, tc), t.number(r, cc), t.number(r, ec), 0.0, 0.0);
  const RevivalFit f = fit_revival(curve);
  Json j;
  j["tau_star_s"] = f.tau_star;
  j["tau_star_err_s"] = f.param_errors.tau_star;
  j["nbar"] = f.nbar;
  j["nbar_err"] = f.param_errors.nbar;
  j["gamma_per_s"] = f.gamma;
  j["gamma_err_per_s"] = f.param_errors.gamma;
  j["scale"] = f.scale;
  j["scale_err"] = f.param_errors.scale;
  j["shift_hz_per_phonon_abs"] = 1.0 / f.tau_star;
  j["residual_norm"] = f.residual_norm;
  j["converged"] = f.converged;
  j["at_bound"] = f.at_bound;
  j["tau_star_identified"] = f.tau_star_identified;
  j["starts"] = f.starts;
  j["starts_converged"] = f.starts_converged;
  j["points"] = curve.size();
  return j;
}

Json fit_sinusoid_json(const CsvTable& t) {
  std::vector<double> phases, fractions, weights;
  if (t.has("outcome")) {
    // Shot records: aggregate per analysis phase, one tau only.
    const auto taus = t.numbers("tau_s");
    const auto ph = t.numbers("analysis_phase_rad");
    const auto out = t.numbers("outcome");
    for (double v : taus)
      if (v != taus.front()) throw InvalidInput(t.source + ": shot file holds several tau values; filter to one");
    std::map<double, std::pair<double, double>> by;
    for (std::size_t i = 0; i < ph.size(); ++i) {
      by[ph[i]].first += out[i];
      by[ph[i]].second += 1.0;
    }
    for (const auto& [p, c] : by) {
      phases.push_back(p);
      fractions.push_back(c.first / c.second);
      weights.push_back(c.second);
    }
  } else {
    phases = t.numbers("phase_rad");
    fractions = t.numbers("fraction");
    if (t.has("weight")) weights = t.numbers("weight");
  }
  const SinusoidFit f = fit_sinusoid(phases, fractions, weights);
  Json j;
  j["contrast"] = f.contrast;
  j["contrast_err"] = f.contrast_err;
  j["phase_rad"] = f.phase;
  j["phase_err_rad"] = f.phase_err;
  j["offset"] = f.offset;
  j["offset_err"] = f.offset_err;
  j["degenerate"] = f.degenerate;
  j["points"] = phases.size();
  return j;
}

Json fit_slope_json(const CsvTable& t, double factor) {
  std::vector<double> taus, delta, err;
  if (t.has("delta_phase_rad")) {
    taus = t.numbers("tau_s");
    delta = t.numbers("delta_phase_rad");
    if (t.has("delta_phase_err_rad")) err = t.numbers("delta_phase_err_rad");
  } else {
    // Contrast CSV from the injection protocol: class 1 minus class 0 per tau.
    const auto tc = t.column("tau_s"), pc = t.column("phase_rad"), ec = t.column("phase_err_rad");
    const auto cls = t.column("class");
    std::map<double, std::array<std::optional<std::pair<double, double>>, 2>> by;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
      const std::string& c = t.rows[r][cls];
      if (c != "0" && c != "1") continue;
      by[t.number(r, tc)][c == "1"] = std::pair{t.number(r, pc), t.number(r, ec)};
    }
    for (const auto& [tau, pair] : by) {
      if (!pair[0] || !pair[1]) throw InvalidInput(t.source + ": tau " + fmt(tau) + " lacks one spectator class");
      taus.push_back(tau);
      delta.push_back(wrap_phase(pair[1]->first - pair[0]->first));
      err.push_back(std::hypot(pair[0]->second, pair[1]->second));
    }
    if (taus.empty()) throw InvalidInput(t.source + ": no class 0/1 rows; expected injection contrast output");
  }
  const PhaseSlopeFit f = fit_phase_slope(taus, delta, err, factor);
  Json j;
  j["slope_rad_s"] = f.line.slope;
  j["slope_err_rad_s"] = f.line.slope_err;
  j["intercept_rad"] = f.line.intercept;
  j["intercept_err_rad"] = f.line.intercept_err;
  j["protocol_factor"] = f.protocol_factor;
  j["shift_hz_per_phonon"] = f.shift_per_phonon_hz;
  j["shift_err_hz_per_phonon"] = f.shift_err_hz;
  j["residual_norm"] = f.line.residual_norm;
  j["points"] = taus.size();
  return j;
}

Json fit_powerlaw_json(const CsvTable& t, const std::string& column) {
  std::vector<double> omegas;
  if (t.has("omega_z_rad_s")) {
    omegas = t.numbers("omega_z_rad_s");
  } else {
    for (double f : t.numbers("fz_khz")) omegas.push_back(khz_to_rad_s(f));
  }
  std::vector<double> shifts = t.numbers(column);
  for (double& s : shifts) s = std::abs(s);
  const PowerLawFit f = fit_power_law(omegas, shifts);
  Json j;
  j["beta"] = f.beta;
  j["beta_err"] = f.beta_err;
  j["amplitude_hz"] = f.amplitude_hz;
  j["amplitude_err_hz"] = f.amplitude_err;
  j["reference_omega_rad_s"] = f.reference_omega;
  j["reference_hz"] = rad_s_to_hz(f.reference_omega);
  j["residual_norm"] = f.residual_norm;
  j["column"] = column;
  j["points"] = omegas.size();
  return j;
}

void run_fit(const CLI::App& sub, const FitArgs& a) {
  const CsvTable t = read_csv(a.input);
  Json j;
  j["model"] = a.model;
  if (a.model == "revival") {
    j["fit"] = fit_revival_json(t, a.cls);
  } else if (a.model == "sinusoid") {
    j["fit"] = fit_sinusoid_json(t);
  } else if (a.model == "slope") {
    j["fit"] = fit_slope_json(t, a.protocol_factor);
  } else {
    j["fit"] = fit_powerlaw_json(t, a.column);
  }
  j["manifest"] = make_manifest(sub, {{a.input}, false, 0, a.common.stamp});
  emit(j);
}

// ---------------------------------------------------------------------------
// --config handling

/// Reads `key = value` lines and appends `--key value` for every key the
/// command line does not already set. Boolean values switch flags on or off.
std::vector<std::string> apply_config(std::vector<std::string> args) {
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw InvalidInput("--config: cannot open '" + path + "'");
  std::set<std::string> given;
  for (const auto& s : args)
    if (s.rfind("--", 0) == 0) given.insert(s.substr(2, s.find('=') == std::string::npos ? std::string::npos : s.find('=') - 2));
  std::string line;
  std::size_t lineno = 0;
  std::vector<std::string> extra;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto eq = s.find('=');
    if (eq == std::string::npos)
      throw InvalidInput(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(s.substr(0, eq));
    const std::string value = trim(s.substr(eq + 1));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    if (key.empty() || key == "config")
      throw InvalidInput(path + ":" + std::to_string(lineno) + ": invalid key '" + key + "'");
    if (given.count(key)) continue;
    if (value == "true") {
      extra.push_back("--" + key);
    } else if (value == "false") {
      continue;
    } else {
      extra.push_back("--" + key);
      extra.push_back(value);
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

int main_impl(int argc, char** argv) {
  CLI::App app{
      "ionkerr: Coulomb-induced cross-Kerr coupling between the stretch and rocking modes of a two-ion crystal.\n"
      "Units: trap frequencies are given in kHz (axial) and MHz (radial), converted to rad/s internally;\n"
      "times in the CSV files are seconds, phases radians, shifts Hz per phonon (chi / 2 pi)."};
  app.set_version_flag("--version", std::string("ionkerr ") + kVersion);
  app.require_subcommand(1);

  SpectrumArgs spectrum_args;
  auto* spectrum = app.add_subcommand("spectrum", "Mode frequencies, length scales and nonlinear coefficients (JSON)");
  add_trap_options(spectrum, spectrum_args.trap);
  add_common_options(spectrum, spectrum_args.common);
  spectrum->add_option("--validity-threshold", spectrum_args.threshold,
                       "Minimum scale-separation ratio for validity.ok (dimensionless)")
      ->capture_default_str();

  ChiArgs chi_args;
  auto* chi = app.add_subcommand("chi", "Cross-Kerr constant: closed form, perturbation theory, optional oracle (JSON); "
                                        "shifts in Hz per phonon, chi in rad/s");
  add_trap_options(chi, chi_args.trap);
  add_common_options(chi, chi_args.common);
  chi->add_flag("--oracle", chi_args.oracle, "Also diagonalize the truncated Fock-space Hamiltonian");
  chi->add_option("--nmax", chi_args.nmax, "Fock cutoff per included mode for --oracle")->capture_default_str();
  chi->add_flag("--three-mode", chi_args.three_mode, "Include the y rocking mode in the oracle basis");
  chi->add_option("--resonance-guard", chi_args.guard,
                  "Reject |omega_s - 2 omega_r| below this fraction of omega_s (dimensionless)")
      ->capture_default_str();

  ScanArgs scan_args;
  auto* scan = app.add_subcommand("scan", "Shift per phonon against the axial frequency (CSV: fz in kHz, shifts in Hz)");
  add_trap_options(scan, scan_args.trap);
  add_common_options(scan, scan_args.common);
  scan->add_option("--fz-range", scan_args.fz_range, "Axial frequency range LO:HI in kHz")->capture_default_str();
  scan->add_option("--points", scan_args.points, "Number of equally spaced points (1 if LO == HI)")
      ->capture_default_str();
  scan->add_flag("--oracle", scan_args.oracle, "Add the exact-diagonalization column");
  scan->add_option("--nmax", scan_args.nmax, "Fock cutoff per mode for --oracle")->capture_default_str();
  scan->add_option("--out", scan_args.out, "Write the CSV here (plus OUT.manifest.json) instead of stdout");

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "Seeded shot-by-shot Ramsey / spin-echo / injection simulation (CSV + JSON)");
  add_trap_options(sim, sim_args.trap);
  add_common_options(sim, sim_args.common);
  sim->add_option("--protocol", sim_args.protocol, "ramsey, echo or inject")
      ->check(CLI::IsMember({"ramsey", "echo", "inject"}))
      ->capture_default_str();
  sim->add_option("--tau-ms", sim_args.tau_ms, "Free-evolution times in ms (comma separated or repeated)")
      ->delimiter(',');
  sim->add_option("--tau-grid-ms", sim_args.tau_grid_ms, "Free-evolution grid LO:HI:STEP in ms");
  sim->add_option("--nbar-x", sim_args.nbar_x, "Mean thermal occupation of the x rocking mode")->capture_default_str();
  sim->add_option("--nbar-y", sim_args.nbar_y, "Mean thermal occupation of the y rocking mode")->capture_default_str();
  sim->add_option("--shots", sim_args.shots, "Shots per analysis phase and tau")->capture_default_str();
  sim->add_option("--phases", sim_args.phases, "Analysis phases, equally spaced over 2 pi")->capture_default_str();
  sim->add_option("--seed", sim_args.seed, "RNG seed (64-bit unsigned)")->capture_default_str();
  sim->add_option("--heating-rate", sim_args.heating_rate, "Heating rate of each rocking mode in phonons/s")
      ->capture_default_str();
  sim->add_option("--shift-hz", sim_args.shift_hz,
                  "Signed shift per phonon chi/2pi in Hz; default is the closed form for the trap flags");
  sim->add_option("--contrast", sim_args.contrast, "Initial fringe contrast in [0, 1]")->capture_default_str();
  sim->add_option("--gamma", sim_args.gamma, "Contrast decay rate in 1/s")->capture_default_str();
  sim->add_option("--detuning-hz", sim_args.detuning_hz, "Static stretch-mode detuning in Hz")->capture_default_str();
  sim->add_option("--inject-prob", sim_args.inject_prob, "Success probability of the phonon injection (inject only)")
      ->capture_default_str();
  sim->add_option("--out-prefix", sim_args.out_prefix, "Writes PREFIX_shots.csv, PREFIX_contrast.csv, PREFIX_manifest.json")
      ->required();
  sim->add_flag("--no-shots", sim_args.no_shots, "Skip the per-shot CSV");

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "Fit a CSV produced by simulate or scan (JSON report)");
  add_common_options(fit, fit_args.common);
  fit->add_option("--model", fit_args.model, "revival, sinusoid, slope or powerlaw")
      ->check(CLI::IsMember({"revival", "sinusoid", "slope", "powerlaw"}))
      ->required();
  fit->add_option("--input", fit_args.input, "Input CSV")->required();
  fit->add_option("--column", fit_args.column, "powerlaw: shift column in Hz (absolute value is used)")
      ->capture_default_str();
  fit->add_option("--protocol-factor", fit_args.protocol_factor,
                  "slope: shift per phonon = factor * slope / 2pi (2 for the half-time injection)")
      ->capture_default_str();
  fit->add_option("--class", fit_args.cls, "revival: contrast class to fit (all, 0 or 1)")->capture_default_str();

  std::vector<std::string> args;
  for (int i = argc - 1; i >= 1; --i) args.emplace_back(argv[i]);
  std::reverse(args.begin(), args.end());
  try {
    args = apply_config(args);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitUsage;
  }

  if (spectrum->parsed()) run_spectrum(*spectrum, spectrum_args);
  if (chi->parsed()) run_chi(*chi, chi_args);
  if (scan->parsed()) run_scan(*scan, scan_args);
  if (sim->parsed()) run_simulate(*sim, sim_args);
  if (fit->parsed()) run_fit(*fit, fit_args);
  return 0;
}

}  // namespace
}  // namespace ionkerr::cli

int main(int argc, char** argv) {
  try {
    return ionkerr::cli::main_impl(argc, argv);
  } catch (const ionkerr::InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return ionkerr::cli::kExitUsage;
  } catch (const ionkerr::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return ionkerr::cli::kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

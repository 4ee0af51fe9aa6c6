#pragma once

// Quench-protocol orchestration and file export. Parameters enter as the
// dimensionless ratios chi/J, N Gamma/J and t J.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dwtraj/classical_model.hpp"
#include "dwtraj/csv.hpp"
#include "dwtraj/errors.hpp"
#include "dwtraj/fock_space.hpp"
#include "dwtraj/master_oracle.hpp"
#include "dwtraj/rng.hpp"
#include "dwtraj/trajectory_engine.hpp"

namespace dwtraj {

inline std::string to_string(MeasurementKind k) { return k == MeasurementKind::linear ? "linear" : "quadratic"; }
inline std::string to_string(Algorithm a) { return a == Algorithm::first_order ? "first_order" : "event_driven"; }

inline MeasurementKind parse_measurement(const std::string& s) {
  if (s == "linear") return MeasurementKind::linear;
  if (s == "quadratic") return MeasurementKind::quadratic;
  throw ConfigError("unknown measurement model '" + s + "'");
}

inline Algorithm parse_algorithm(const std::string& s) {
  if (s == "first_order" || s == "first-order") return Algorithm::first_order;
  if (s == "event_driven" || s == "event-driven") return Algorithm::event_driven;
  throw ConfigError("unknown algorithm '" + s + "'");
}

struct ExperimentConfig {
  int n_atoms = 100;
  double j_tunnel = 1.0;
  std::optional<double> chi_over_j_prepare;  // defaults to |chi_over_j|
  double chi_over_j = -1.5;                  // after the quench
  double n_gamma_over_j = 0.0;
  MeasurementKind model = MeasurementKind::linear;
  double g2_over_j = 0.0;  // quadratic model: N^2 Gamma2 / J
  Algorithm algorithm = Algorithm::event_driven;
  double dt_j = 0.0;  // first_order step; 0 picks 0.01 / (N Gamma) capped at the sample spacing
  double t_max_j = 100.0;
  std::size_t sample_count = 5000;
  std::uint64_t seed = 0;
  std::uint64_t trajectory_index = 0;
  std::size_t n_traj = 1;
  double tol = 1e-10;
  unsigned threads = 0;
  std::filesystem::path out_dir = ".";

  // classical runs
  double z0 = 0.0;
  double phi0 = 0.0;
  double noise = kDefaultNoiseAmplitude;

  // portraits
  std::size_t grid_z = 201;
  std::size_t grid_phi = 201;
  std::size_t separatrix_points = 400;

  double prepare_ratio() const { return chi_over_j_prepare.value_or(std::abs(chi_over_j)); }

  void validate_quench() const {
    if (n_atoms < 1) throw ConfigError("n_atoms must be >= 1");
    if (!(j_tunnel > 0.0)) throw ConfigError("j_tunnel must be > 0");
    if (!(prepare_ratio() > 1.0))
      throw ConfigError("the quench is prepared with repulsive interactions: chi_over_j_prepare must exceed 1");
    if (!(n_gamma_over_j >= 0.0)) throw ConfigError("n_gamma_over_j must be >= 0");
    if (!(t_max_j > 0.0)) throw ConfigError("t_max_j must be > 0");
    if (sample_count < 2) throw ConfigError("sample_count must be >= 2");
  }

  ModelParams run_params() const {
    return ModelParams::from_ratios(n_atoms, j_tunnel, chi_over_j, n_gamma_over_j);
  }
  ModelParams prepare_params() const { return ModelParams::from_ratios(n_atoms, j_tunnel, prepare_ratio(), 0.0); }
  MeanFieldParams mean_field() const { return {j_tunnel, chi_over_j * j_tunnel}; }
  MeasurementModel measurement() const {
    return model == MeasurementKind::linear ? MeasurementModel::linear()
                                            : MeasurementModel::quadratic(g2_over_j * j_tunnel);
  }
  double t_max() const { return t_max_j / j_tunnel; }

  double step_dt() const {
    if (dt_j > 0.0) return dt_j / j_tunnel;
    const double spacing = t_max() / static_cast<double>(sample_count - 1);
    const double rate = model == MeasurementKind::linear ? n_gamma_over_j * j_tunnel : g2_over_j * j_tunnel;
    return rate > 0.0 ? std::min(spacing, 0.01 / rate) : spacing;
  }

  TrajectoryConfig trajectory() const {
    TrajectoryConfig c;
    c.params = run_params();
    c.model = measurement();
    c.algorithm = algorithm;
    c.t_max = t_max();
    c.sample_count = sample_count;
    c.dt = step_dt();
    c.seed = seed;
    c.trajectory_index = trajectory_index;
    c.tol = tol;
    return c;
  }

  nlohmann::json to_json(const std::string& kind) const {
    return {{"kind", kind},
            {"n_atoms", n_atoms},
            {"j_tunnel", j_tunnel},
            {"chi_over_j_prepare", prepare_ratio()},
            {"chi_over_j", chi_over_j},
            {"n_gamma_over_j", n_gamma_over_j},
            {"model", to_string(model)},
            {"g2_over_j", g2_over_j},
            {"algorithm", to_string(algorithm)},
            {"dt_j", step_dt() * j_tunnel},
            {"t_max_j", t_max_j},
            {"sample_count", sample_count},
            {"seed", seed},
            {"trajectory_index", trajectory_index},
            {"n_traj", n_traj},
            {"tol", tol}};
  }
};

// Ground state with repulsive interaction chi_prepare; the run then uses the
// sign-flipped interaction chi_over_j.
inline QuantumState prepare_quench_initial(const ExperimentConfig& cfg) {
  cfg.validate_quench();
  return ground_state(cfg.prepare_params()).state;
}

namespace detail {

inline void add_manifest(csv::OutputSet& out, const ExperimentConfig& cfg, const std::string& kind) {
  out.add("manifest.json", cfg.to_json(kind).dump(2) + "\n");
}

inline std::string trajectory_csv(const TrajectoryRecord& rec) {
  csv::TableBuilder tb({"t", "z", "phi", "phi_defined", "n_right_counts_cum", "n_left_counts_cum"});
  std::size_t j = 0, right = 0, left = 0;
  for (std::size_t i = 0; i < rec.sample_times.size(); ++i) {
    const double t = rec.sample_times[i];
    while (j < rec.jumps.size() && rec.jumps[j].time <= t) {
      (rec.jumps[j].detector == Detector::right ? right : left)++;
      ++j;
    }
    tb.row(t, rec.z_series[i], rec.phi_series[i], static_cast<int>(rec.phi_defined[i]), right, left);
  }
  return std::move(tb).str();
}

inline std::string jumps_csv(const TrajectoryRecord& rec) {
  csv::TableBuilder tb({"t", "detector"});
  for (const auto& ev : rec.jumps) tb.row(ev.time, detector_code(ev.detector));
  return std::move(tb).str();
}

}  // namespace detail

inline std::vector<std::filesystem::path> run_portrait(const ExperimentConfig& cfg) {
  const auto mf = cfg.mean_field();
  if (cfg.grid_z < 2 || cfg.grid_phi < 2) throw ConfigError("portrait grids need at least 2 points");
  std::vector<double> zs, phis;
  for (std::size_t i = 0; i < cfg.grid_z; ++i) zs.push_back(-1.0 + 2.0 * static_cast<double>(i) / (cfg.grid_z - 1));
  for (std::size_t i = 0; i < cfg.grid_phi; ++i)
    phis.push_back(2.0 * std::numbers::pi * static_cast<double>(i) / (cfg.grid_phi - 1));
  const auto grid = phase_portrait(mf, zs, phis);

  csv::TableBuilder portrait({"z", "phi", "H"});
  for (std::size_t i = 0; i < zs.size(); ++i) {
    for (std::size_t k = 0; k < phis.size(); ++k) portrait.row(zs[i], phis[k], grid.energy[i * phis.size() + k]);
  }
  csv::TableBuilder sep({"lobe", "z", "phi"});
  bool hyperbolic = false;
  for (const auto& f : fixed_points(mf)) hyperbolic |= f.classification == FixedPointKind::hyperbolic;
  if (hyperbolic) {
    for (const auto& lobe : separatrix(mf, cfg.separatrix_points)) {
      for (const auto& pt : lobe.points) sep.row(lobe.lobe, pt.z, pt.phi);
    }
  } else {
    std::cerr << "warning: |chi|/J <= 1, no hyperbolic fixed point; separatrix.csv is empty\n";
  }

  csv::OutputSet out(cfg.out_dir);
  out.add("portrait.csv", std::move(portrait).str());
  out.add("separatrix.csv", std::move(sep).str());
  detail::add_manifest(out, cfg, "portrait");
  return out.commit();
}

inline std::vector<std::filesystem::path> run_classical(const ExperimentConfig& cfg) {
  const auto mf = cfg.mean_field();
  StreamRng rng(cfg.seed, cfg.trajectory_index);
  const auto s0 = perturb(ClassicalState::make(cfg.z0, cfg.phi0), cfg.noise, rng);
  const auto tr = integrate_classical(s0, mf, cfg.t_max(), cfg.sample_count, cfg.tol);
  csv::TableBuilder tb({"t", "z", "phi", "energy"});
  for (std::size_t i = 0; i < tr.t.size(); ++i) tb.row(tr.t[i], tr.states[i].z, tr.states[i].phi, tr.energy[i]);
  csv::OutputSet out(cfg.out_dir);
  out.add("classical.csv", std::move(tb).str());
  detail::add_manifest(out, cfg, "classical");
  return out.commit();
}

inline std::vector<std::filesystem::path> run_single_trajectory(const ExperimentConfig& cfg) {
  const auto initial = prepare_quench_initial(cfg);
  const auto rec = run_trajectory(cfg.trajectory(), initial);
  csv::OutputSet out(cfg.out_dir);
  out.add("trajectory.csv", detail::trajectory_csv(rec));
  out.add("jumps.csv", detail::jumps_csv(rec));
  detail::add_manifest(out, cfg, "trajectory");
  return out.commit();
}

inline std::vector<std::filesystem::path> run_ensemble_experiment(const ExperimentConfig& cfg) {
  const auto initial = prepare_quench_initial(cfg);
  EnsembleOptions opt;
  opt.threads = cfg.threads;
  const auto res = run_ensemble(cfg.trajectory(), initial, cfg.n_traj, opt);
  csv::TableBuilder tb({"t", "z_mean", "z_sem", "z2_mean", "z2_sem"});
  const auto& s = res.stats;
  for (std::size_t i = 0; i < s.t.size(); ++i) tb.row(s.t[i], s.z_mean[i], s.z_sem[i], s.z2_mean[i], s.z2_sem[i]);
  csv::OutputSet out(cfg.out_dir);
  out.add("ensemble_mean.csv", std::move(tb).str());
  detail::add_manifest(out, cfg, "ensemble");
  return out.commit();
}

inline std::vector<std::filesystem::path> run_master_experiment(const ExperimentConfig& cfg) {
  const auto initial = prepare_quench_initial(cfg);
  MasterOptions opt;
  opt.keep_rho = false;
  const auto series =
      propagate_master(pure_density(initial), cfg.run_params(), cfg.measurement(), cfg.t_max(), cfg.sample_count,
                       cfg.tol, opt);
  csv::TableBuilder tb({"t", "z", "z2", "purity"});
  for (std::size_t i = 0; i < series.t.size(); ++i) tb.row(series.t[i], series.z[i], series.z2[i], series.purity[i]);
  csv::OutputSet out(cfg.out_dir);
  out.add("master.csv", std::move(tb).str());
  detail::add_manifest(out, cfg, "master");
  return out.commit();
}

// Mean curves from either an ensemble run (with error bars) or a master run (exact).
struct MeanCurves {
  nlohmann::json manifest;
  std::vector<double> t, z, z_sem, z2, z2_sem;
};

inline MeanCurves load_mean_curves(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  MeanCurves m;
  const fs::path manifest = dir / "manifest.json";
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open", manifest.string());
  try {
    m.manifest = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed manifest " + manifest.string() + ": " + e.what());
  }
  if (fs::exists(dir / "ensemble_mean.csv")) {
    const auto t = csv::read(dir / "ensemble_mean.csv");
    m.t = t.numbers("t");
    m.z = t.numbers("z_mean");
    m.z_sem = t.numbers("z_sem");
    m.z2 = t.numbers("z2_mean");
    m.z2_sem = t.numbers("z2_sem");
  } else if (fs::exists(dir / "master.csv")) {
    const auto t = csv::read(dir / "master.csv");
    m.t = t.numbers("t");
    m.z = t.numbers("z");
    m.z2 = t.numbers("z2");
    m.z_sem.assign(m.t.size(), 0.0);
    m.z2_sem.assign(m.t.size(), 0.0);
  } else {
    throw IoError("neither ensemble_mean.csv nor master.csv found", dir.string());
  }
  return m;
}

struct CompareReport {
  double max_dz = 0.0;
  double max_dz2 = 0.0;
  double worst_ratio_z = 0.0;   // max over t of |dz| / allowed
  double worst_ratio_z2 = 0.0;
  double sigma_factor = 3.0;
  double abs_floor = 0.02;
  bool pass = true;

  nlohmann::json to_json() const {
    return {{"max_abs_dz", max_dz},       {"max_abs_dz2", max_dz2},   {"worst_ratio_z", worst_ratio_z},
            {"worst_ratio_z2", worst_ratio_z2}, {"sigma_factor", sigma_factor}, {"abs_floor", abs_floor},
            {"pass", pass}};
  }
};

// Pointwise |a(t) - b(t)| <= max(k * sqrt(sem_a^2 + sem_b^2), floor) for both <z> and <z^2>.
inline CompareReport compare_curves(const MeanCurves& a, const MeanCurves& b, double sigma_factor = 3.0,
                                    double abs_floor = 0.02) {
  for (const char* key : {"n_atoms", "j_tunnel", "chi_over_j_prepare", "chi_over_j", "n_gamma_over_j", "model",
                          "g2_over_j", "t_max_j", "sample_count"}) {
    if (!a.manifest.contains(key) || !b.manifest.contains(key) || a.manifest[key] != b.manifest[key])
      throw ConfigError(std::string("refusing to compare runs with different '") + key + "'");
  }
  if (a.t.size() != b.t.size()) throw ConfigError("refusing to compare runs with different sample grids");
  CompareReport r;
  r.sigma_factor = sigma_factor;
  r.abs_floor = abs_floor;
  for (std::size_t i = 0; i < a.t.size(); ++i) {
    if (std::abs(a.t[i] - b.t[i]) > 1e-12 * std::max(1.0, std::abs(a.t[i])))
      throw ConfigError("refusing to compare runs with different sample times");
    const double dz = std::abs(a.z[i] - b.z[i]);
    const double dz2 = std::abs(a.z2[i] - b.z2[i]);
    const double allow_z = std::max(sigma_factor * std::hypot(a.z_sem[i], b.z_sem[i]), abs_floor);
    const double allow_z2 = std::max(sigma_factor * std::hypot(a.z2_sem[i], b.z2_sem[i]), abs_floor);
    r.max_dz = std::max(r.max_dz, dz);
    r.max_dz2 = std::max(r.max_dz2, dz2);
    r.worst_ratio_z = std::max(r.worst_ratio_z, dz / allow_z);
    r.worst_ratio_z2 = std::max(r.worst_ratio_z2, dz2 / allow_z2);
  }
  r.pass = r.worst_ratio_z <= 1.0 && r.worst_ratio_z2 <= 1.0;
  return r;
}

inline CompareReport compare_ensemble_to_master(const std::filesystem::path& ensemble_dir,
                                                const std::filesystem::path& master_dir) {
  return compare_curves(load_mean_curves(ensemble_dir), load_mean_curves(master_dir));
}

}  // namespace dwtraj

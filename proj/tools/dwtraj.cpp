// dwtraj: command-line front end for the double-well simulations.
//
//   dwtraj portrait   --chi-over-j -1.5
//   dwtraj classical  --chi-over-j -1.5 --z0 1e-6
//   dwtraj trajectory --n-atoms 10000 --chi-over-j -1.5 --n-gamma-over-j 100 --seed 7
//   dwtraj ensemble   --n-atoms 6 --n-traj 2000 --n-gamma-over-j 1 --t-max-j 20
//   dwtraj master     --n-atoms 6 --n-gamma-over-j 1 --t-max-j 20
//   dwtraj compare    --ensemble runs/ens --master runs/master
//
// Every subcommand accepts --config <file> with "key = value" lines; keys are
// option names with '-' or '_'. Flags given on the command line win.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical tolerance
// failure (or failed comparison), 4 I/O error.

#include <algorithm>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dwtraj/dwtraj.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct ConfigEntry {
  std::string key;
  std::string value;
};

std::vector<ConfigEntry> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dwtraj::IoError("cannot open config file", path);
  std::vector<ConfigEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw dwtraj::ConfigError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'') && value.back() == value.front())
      value = value.substr(1, value.size() - 2);
    std::replace(key.begin(), key.end(), '_', '-');
    out.push_back({key, value});
  }
  return out;
}

// Pulls "--config FILE" out of argv and splices the file's entries in right
// after the subcommand name, so later command-line flags override them.
std::vector<std::string> expand_config(std::vector<std::string> args, const CLI::App& app) {
  std::string config_path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config_path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      config_path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (config_path.empty()) return args;

  std::size_t sub_pos = 0;
  const CLI::App* sub = nullptr;
  for (std::size_t i = 1; i < args.size() && !sub; ++i) {
    for (const auto* s : app.get_subcommands({})) {
      if (s->get_name() == args[i]) {
        sub = s;
        sub_pos = i;
      }
    }
  }
  if (!sub) throw dwtraj::ConfigError("--config needs a subcommand");

  std::vector<std::string> injected;
  for (const auto& e : read_config_file(config_path)) {
    const std::string flag = "--" + e.key;
    if (!sub->get_option_no_throw(flag) && !app.get_option_no_throw(flag)) {
      std::cerr << "note: config key '" << e.key << "' does not apply to '" << sub->get_name() << "', ignored\n";
      continue;
    }
    injected.push_back(flag);
    injected.push_back(e.value);
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, injected.begin(), injected.end());
  return args;
}

void add_quantum_options(CLI::App* sub, dwtraj::ExperimentConfig& cfg, std::string& model, std::string& algorithm) {
  sub->add_option("--n-atoms", cfg.n_atoms, "Total atom number N");
  sub->add_option("--j-tunnel", cfg.j_tunnel, "Tunneling amplitude J (sets the time unit)");
  sub->add_option("--chi-over-j", cfg.chi_over_j, "Interaction chi/J = NU/J after the quench");
  sub->add_option("--chi-over-j-prepare", cfg.chi_over_j_prepare,
                  "Repulsive chi/J used to prepare the ground state (default |chi/J|)");
  sub->add_option("--n-gamma-over-j", cfg.n_gamma_over_j, "Detection rate N Gamma / J");
  sub->add_option("--model", model, "Measurement model: linear | quadratic");
  sub->add_option("--g2-over-j", cfg.g2_over_j, "Quadratic model rate N^2 Gamma2 / J");
  sub->add_option("--algorithm", algorithm, "Unraveling: event_driven | first_order");
  sub->add_option("--dt-j", cfg.dt_j, "First-order time step in units of 1/J (0: automatic)");
  sub->add_option("--t-max-j", cfg.t_max_j, "Duration in units of 1/J");
  sub->add_option("--sample-count", cfg.sample_count, "Number of uniform time samples");
  sub->add_option("--tol", cfg.tol, "Propagation tolerance");
  sub->add_option("--trajectory-index", cfg.trajectory_index, "Index of the first random stream");
}

}  // namespace

int main(int argc, char** argv) {
  dwtraj::ExperimentConfig cfg;
  std::string model = "linear";
  std::string algorithm = "event_driven";
  std::string ensemble_dir, master_dir;
  double sigma_factor = 3.0, abs_floor = 0.02;

  CLI::App app{"Double-well condensate: classical, quantum and measurement-conditioned dynamics"};
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  app.fallthrough();
  std::string out_dir = ".";
  app.add_option("--seed", cfg.seed, "Random seed");
  auto* out_opt = app.add_option("--out-dir", out_dir, "Output directory");
  app.add_option("--config", "Key-value configuration file (handled before parsing)");

  auto* portrait = app.add_subcommand("portrait", "Phase portrait and separatrix of the classical model");
  portrait->add_option("--chi-over-j", cfg.chi_over_j, "Interaction chi/J");
  portrait->add_option("--j-tunnel", cfg.j_tunnel, "Tunneling amplitude J");
  portrait->add_option("--grid-z", cfg.grid_z, "Grid points in z");
  portrait->add_option("--grid-phi", cfg.grid_phi, "Grid points in phi");
  portrait->add_option("--separatrix-points", cfg.separatrix_points, "Points per separatrix lobe");

  auto* classical = app.add_subcommand("classical", "Integrate the mean-field model from a noisy initial state");
  classical->add_option("--chi-over-j", cfg.chi_over_j, "Interaction chi/J");
  classical->add_option("--j-tunnel", cfg.j_tunnel, "Tunneling amplitude J");
  classical->add_option("--z0", cfg.z0, "Initial population imbalance");
  classical->add_option("--phi0", cfg.phi0, "Initial relative phase");
  classical->add_option("--noise", cfg.noise, "Gaussian noise amplitude added to (z0, phi0)");
  classical->add_option("--t-max-j", cfg.t_max_j, "Duration in units of 1/J");
  classical->add_option("--sample-count", cfg.sample_count, "Number of uniform time samples");
  classical->add_option("--tol", cfg.tol, "Relative energy-conservation tolerance");
  classical->add_option("--trajectory-index", cfg.trajectory_index, "Random stream index for the noise");

  auto* trajectory = app.add_subcommand("trajectory", "One measurement-conditioned quantum trajectory after the quench");
  add_quantum_options(trajectory, cfg, model, algorithm);

  auto* ensemble = app.add_subcommand("ensemble", "Ensemble of trajectories: mean and SEM of z and z^2");
  add_quantum_options(ensemble, cfg, model, algorithm);
  ensemble->add_option("--n-traj", cfg.n_traj, "Number of trajectories");
  ensemble->add_option("--threads", cfg.threads, "Worker threads (0: all cores)");

  auto* master = app.add_subcommand("master", "Dense master-equation reference (small N)");
  add_quantum_options(master, cfg, model, algorithm);

  auto* compare = app.add_subcommand("compare", "Compare ensemble averages against the master equation");
  compare->add_option("--ensemble", ensemble_dir, "Directory of an ensemble (or master) run")->required();
  compare->add_option("--master", master_dir, "Directory of a master run")->required();
  compare->add_option("--sigma", sigma_factor, "Allowed deviation in standard errors");
  compare->add_option("--floor", abs_floor, "Absolute tolerance floor");

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = expand_config(std::move(args), app);
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  } catch (const dwtraj::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const dwtraj::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  }

  try {
    cfg.out_dir = out_dir;
    cfg.model = dwtraj::parse_measurement(model);
    cfg.algorithm = dwtraj::parse_algorithm(algorithm);

    std::vector<std::filesystem::path> written;
    if (*portrait) {
      written = dwtraj::run_portrait(cfg);
    } else if (*classical) {
      written = dwtraj::run_classical(cfg);
    } else if (*trajectory) {
      written = dwtraj::run_single_trajectory(cfg);
    } else if (*ensemble) {
      written = dwtraj::run_ensemble_experiment(cfg);
    } else if (*master) {
      written = dwtraj::run_master_experiment(cfg);
    } else if (*compare) {
      const auto report = dwtraj::compare_curves(dwtraj::load_mean_curves(ensemble_dir),
                                                 dwtraj::load_mean_curves(master_dir), sigma_factor, abs_floor);
      const std::string text = report.to_json().dump(2) + "\n";
      std::cout << text;
      if (out_opt->count() > 0) {
        dwtraj::csv::OutputSet out(cfg.out_dir);
        out.add("compare.json", text);
        out.commit();
      }
      return report.pass ? 0 : kExitNumerical;
    }
    for (const auto& p : written) std::cout << p.string() << "\n";
    return 0;
  } catch (const dwtraj::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const dwtraj::NumericalError& e) {
    std::cerr << "numerical error at t = " << e.time() << ": " << e.what() << "\n";
    return kExitNumerical;
  } catch (const dwtraj::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

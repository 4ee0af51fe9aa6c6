#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "dwtraj/master_oracle.hpp"
#include "dwtraj/statistics.hpp"
#include "dwtraj/trajectory_engine.hpp"
#include "oracles.hpp"

using namespace dwtraj;
using Catch::Approx;

namespace {

TrajectoryConfig small_config(int n, double chi_over_j, double n_gamma_over_j, double t_max, std::size_t samples) {
  TrajectoryConfig c;
  c.params = ModelParams::from_ratios(n, 1.0, chi_over_j, n_gamma_over_j);
  c.t_max = t_max;
  c.sample_count = samples;
  c.seed = 42;
  return c;
}

QuantumState quench_start(int n) { return ground_state(ModelParams::from_ratios(n, 1.0, 1.5, 0.0)).state; }

// Pointwise agreement of ensemble means with the exact master-equation curves.
void check_against_master(const EnsembleResult& ens, const MasterSeries& master, double k_sigma) {
  const auto& s = ens.stats;
  REQUIRE(s.t.size() == master.t.size());
  for (std::size_t i = 0; i < s.t.size(); ++i) {
    CHECK(s.t[i] == Approx(master.t[i]).margin(1e-12));
    CHECK(std::abs(s.z_mean[i] - master.z[i]) <= std::max(k_sigma * s.z_sem[i], 1e-9));
    CHECK(std::abs(s.z2_mean[i] - master.z2[i]) <= std::max(k_sigma * s.z2_sem[i], 1e-9));
  }
}

}  // namespace

TEST_CASE("jump operators", "[trajectory]") {
  const auto p = ModelParams::from_ratios(4, 1.0, 0.0, 2.0);  // Gamma = 0.5
  const auto r = jump_operator_diagonal(MeasurementModel::linear(), p, Detector::right);
  const auto l = jump_operator_diagonal(MeasurementModel::linear(), p, Detector::left);
  for (int k = 0; k <= 4; ++k) {
    CHECK(r[static_cast<std::size_t>(k)] == Approx(std::sqrt(0.25 * k)));
    CHECK(l[static_cast<std::size_t>(k)] == Approx(std::sqrt(0.25 * (4 - k))));
  }
  // Quadratic: sqrt(Gamma2 / 2) n with Gamma2 = g2_total / N^2.
  const auto q = jump_operator_diagonal(MeasurementModel::quadratic(8.0), p, Detector::right);
  for (int k = 0; k <= 4; ++k) CHECK(q[static_cast<std::size_t>(k)] == Approx(0.5 * k));
}

TEST_CASE("conditional propagator rates", "[trajectory]") {
  const auto p = ModelParams::from_ratios(10, 1.0, -1.5, 3.0);
  std::mt19937_64 rng(2);
  const QuantumState s(oracle::random_state(10, rng));
  ConditionalPropagator lin(p, MeasurementModel::linear(), 1e-10);
  const auto r = lin.rates(s);
  const auto ref = jump_rates(s, p);
  CHECK(r.right == Approx(ref.right).epsilon(1e-14));
  CHECK(r.left == Approx(ref.left).epsilon(1e-14));

  ConditionalPropagator quad(p, MeasurementModel::quadratic(3.0), 1e-10);
  const auto q = quad.rates(QuantumState::number_state(10, 10));
  CHECK(q.right == Approx(3.0));
  CHECK(q.left == 0.0);
}

TEST_CASE("without measurement a trajectory is the unitary evolution", "[trajectory]") {
  auto c = small_config(20, -1.5, 0.0, 5.0, 11);
  const auto psi0 = quench_start(20);
  for (auto alg : {Algorithm::event_driven, Algorithm::first_order}) {
    c.algorithm = alg;
    c.dt = 0.01;
    const auto rec = run_trajectory(c, psi0);
    CHECK(rec.jumps.empty());
    const auto ref = evolve_unitary(psi0, c.params, 5.0, 1e-12);
    CHECK(fidelity(rec.final_state, ref) == Approx(1.0).margin(1e-9));
    for (double z : rec.z_series) CHECK(std::abs(z) < 1e-10);
  }
}

TEST_CASE("trajectories are deterministic per stream", "[trajectory]") {
  auto c = small_config(30, -1.5, 5.0, 4.0, 41);
  const auto psi0 = quench_start(30);
  for (auto alg : {Algorithm::event_driven, Algorithm::first_order}) {
    c.algorithm = alg;
    c.dt = 0.001;
    const auto a = run_trajectory(c, psi0);
    const auto b = run_trajectory(c, psi0);
    REQUIRE(a.jumps.size() == b.jumps.size());
    for (std::size_t i = 0; i < a.jumps.size(); ++i) {
      CHECK(a.jumps[i].time == b.jumps[i].time);
      CHECK(a.jumps[i].detector == b.jumps[i].detector);
    }
    CHECK(a.z_series == b.z_series);
    c.trajectory_index = 1;
    const auto other = run_trajectory(c, psi0);
    CHECK(other.z_series != a.z_series);
    c.trajectory_index = 0;
  }
}

TEST_CASE("record layout and bounds", "[trajectory]") {
  auto c = small_config(50, -1.5, 20.0, 3.0, 301);
  const auto rec = run_trajectory(c, quench_start(50));
  REQUIRE(rec.sample_times.size() == 301);
  CHECK(rec.sample_times.front() == 0.0);
  CHECK(rec.sample_times.back() == 3.0);
  for (std::size_t i = 0; i < rec.sample_times.size(); ++i) {
    CHECK(std::abs(rec.z_series[i]) <= 1.0);
    CHECK(rec.z2_series[i] >= rec.z_series[i] * rec.z_series[i] - 1e-12);
    CHECK(rec.z2_series[i] <= 1.0 + 1e-12);
    if (rec.phi_defined[i]) {
      CHECK((rec.phi_series[i] >= 0.0 && rec.phi_series[i] < 2 * std::numbers::pi));
    } else {
      CHECK(std::isnan(rec.phi_series[i]));
    }
  }
  for (std::size_t i = 1; i < rec.jumps.size(); ++i) CHECK(rec.jumps[i].time >= rec.jumps[i - 1].time);
  CHECK(rec.final_state.norm_squared() == Approx(1.0).margin(1e-12));
}

TEST_CASE("count-rate law and waiting times", "[trajectory]") {
  auto c = small_config(8, -1.5, 2.0, 10.0, 11);
  EnsembleOptions opt;
  opt.keep_waiting_times = true;
  opt.threads = 1;
  std::mt19937_64 rng(7);
  const QuantumState start(oracle::random_state(8, rng));
  const auto ens = run_ensemble(c, start, 400, opt);
  MeanAccumulator total;
  for (std::size_t i = 0; i < 400; ++i) {
    total.add(static_cast<double>(ens.right_counts[i] + ens.left_counts[i]));
  }
  CHECK(std::abs(total.mean() - 20.0) <= 3 * total.sem());
  CHECK(ks_test_exponential(ens.waiting_times, 2.0).p_value > 0.01);
}

TEST_CASE("right-left count difference is symmetric for a symmetric start", "[trajectory][property]") {
  auto c = small_config(10, -1.5, 2.0, 5.0, 6);
  EnsembleOptions opt;
  opt.threads = 1;
  const auto ens = run_ensemble(c, quench_start(10), 600, opt);
  MeanAccumulator d;
  std::size_t pos = 0, neg = 0;
  for (std::size_t i = 0; i < 600; ++i) {
    const double x = static_cast<double>(ens.right_counts[i]) - static_cast<double>(ens.left_counts[i]);
    d.add(x);
    pos += x > 0;
    neg += x < 0;
  }
  CHECK(std::abs(d.mean()) <= 3 * d.sem());
  const double m = static_cast<double>(pos + neg);
  CHECK(std::abs(static_cast<double>(pos) - 0.5 * m) <= 3 * 0.5 * std::sqrt(m));
}

TEST_CASE("first-order step probabilities", "[trajectory]") {
  const auto p = ModelParams::from_ratios(6, 1.0, -1.5, 1.0);
  ConditionalPropagator prop(p, MeasurementModel::linear(), 1e-10);
  const QuantumState s = QuantumState::number_state(6, 4);
  StreamRng rng(9, 0);
  const double dt = 0.05;
  std::size_t right = 0, left = 0;
  const int trials = 20000;
  for (int i = 0; i < trials; ++i) {
    QuantumState x = s;
    if (auto ev = step_first_order(x, 0.0, dt, prop, rng)) (ev->detector == Detector::right ? right : left)++;
  }
  // Rates Gamma n_r = 4/6 and Gamma n_l = 2/6.
  const double pr = 4.0 / 6.0 * dt, pl = 2.0 / 6.0 * dt;
  CHECK(std::abs(static_cast<double>(right) / trials - pr) <= 4 * std::sqrt(pr * (1 - pr) / trials));
  CHECK(std::abs(static_cast<double>(left) / trials - pl) <= 4 * std::sqrt(pl * (1 - pl) / trials));

  QuantumState x = s;
  CHECK_THROWS_AS(step_first_order(x, 0.0, 0.2, prop, rng), ConfigError);
}

TEST_CASE("ensembles reproduce the master equation", "[trajectory]") {
  const int n = 4;
  const std::size_t samples = 21;
  const auto psi0 = quench_start(n);
  EnsembleOptions opt;
  opt.threads = 2;

  SECTION("linear model, event-driven") {
    const auto c = small_config(n, -1.5, 1.0, 6.0, samples);
    const auto ens = run_ensemble(c, psi0, 1500, opt);
    const auto m = propagate_master(pure_density(psi0), c.params, c.model, c.t_max, samples, 1e-10);
    check_against_master(ens, m, 4.0);
  }
  SECTION("quadratic model, event-driven") {
    auto c = small_config(n, -1.5, 0.0, 6.0, samples);
    c.model = MeasurementModel::quadratic(1.5);
    const auto ens = run_ensemble(c, psi0, 1500, opt);
    const auto m = propagate_master(pure_density(psi0), c.params, c.model, c.t_max, samples, 1e-10);
    check_against_master(ens, m, 4.0);
  }
  SECTION("quadratic model, first-order") {
    auto c = small_config(n, -1.5, 0.0, 6.0, samples);
    c.model = MeasurementModel::quadratic(1.5);
    c.algorithm = Algorithm::first_order;
    c.dt = 0.002;
    const auto ens = run_ensemble(c, psi0, 1000, opt);
    const auto m = propagate_master(pure_density(psi0), c.params, c.model, c.t_max, samples, 1e-10);
    check_against_master(ens, m, 4.0);
  }
}

TEST_CASE("ensemble results do not depend on the thread count", "[trajectory]") {
  const auto c = small_config(6, -1.5, 1.0, 4.0, 21);
  const auto psi0 = quench_start(6);
  EnsembleOptions one, three;
  one.threads = 1;
  three.threads = 3;
  const auto a = run_ensemble(c, psi0, 37, one);
  const auto b = run_ensemble(c, psi0, 37, three);
  CHECK(a.stats.z_mean == b.stats.z_mean);
  CHECK(a.stats.z2_sem == b.stats.z2_sem);
  CHECK(a.right_counts == b.right_counts);

  EnsembleOptions keep;
  keep.keep_records = true;
  const auto single = run_ensemble(c, psi0, 1, keep);
  CHECK(single.stats.z_mean == single.records[0].z_series);
}

TEST_CASE("trajectory configuration checks", "[trajectory]") {
  auto c = small_config(6, -1.5, 1.0, 4.0, 21);
  c.algorithm = Algorithm::first_order;
  c.dt = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.dt = 0.2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.dt = 0.01;
  CHECK_NOTHROW(c.validate());
  c.sample_count = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.sample_count = 21;
  CHECK_THROWS_AS(run_trajectory(c, QuantumState::binomial(5)), ConfigError);
  std::vector<Complex> unnormalized(7, Complex(1.0, 0.0));
  CHECK_THROWS_AS(run_trajectory(c, QuantumState(unnormalized)), ConfigError);
}

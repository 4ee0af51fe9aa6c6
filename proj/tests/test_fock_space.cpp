#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "dwtraj/fock_space.hpp"
#include "oracles.hpp"

using namespace dwtraj;
using Catch::Approx;

namespace {

ModelParams params(int n, double j, double u, double gamma = 0.0) {
  ModelParams p;
  p.n_atoms = n;
  p.j_tunnel = j;
  p.u_int = u;
  p.gamma_atom = gamma;
  return p;
}

Eigen::VectorXcd to_eigen(const QuantumState& s) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(s.dim()));
  for (std::size_t k = 0; k < s.dim(); ++k) v(static_cast<Eigen::Index>(k)) = s[k];
  return v;
}

}  // namespace

TEST_CASE("ModelParams derived knobs and validation", "[fock_space]") {
  const auto p = ModelParams::from_ratios(10000, 1.0, -1.5, 100.0);
  CHECK(p.chi() == p.n_atoms * p.u_int);
  CHECK(p.g_total() == p.n_atoms * p.gamma_atom);
  CHECK(p.chi() == Approx(-1.5));
  CHECK(p.g_total() == Approx(100.0));
  CHECK_THROWS_AS(params(0, 1, 0).validate(), ConfigError);
  CHECK_THROWS_AS(params(2, 0, 0).validate(), ConfigError);
  CHECK_THROWS_AS(params(2, 1, 0, -1).validate(), ConfigError);
}

TEST_CASE("build_hamiltonian matches ladder-operator algebra", "[fock_space]") {
  SECTION("N=2, J=1, U=0.5") {
    const auto h = build_hamiltonian(params(2, 1.0, 0.5));
    CHECK(h.diag == std::vector<double>{1.0, 0.0, 1.0});
    REQUIRE(h.offdiag.size() == 2);
    CHECK(h.offdiag[0] == Approx(-std::sqrt(2.0)).epsilon(1e-15));
    CHECK(h.offdiag[1] == Approx(-std::sqrt(2.0)).epsilon(1e-15));
  }
  SECTION("single atom has no interaction energy") {
    const auto h = build_hamiltonian(params(1, 1.0, 3.7));
    CHECK(h.diag == std::vector<double>{0.0, 0.0});
    CHECK(h.offdiag == std::vector<double>{-1.0});
  }
  SECTION("N=4 interaction diagonal") {
    // Diagonal does not depend on J.
    const auto h = build_hamiltonian(params(4, 1.0, 1.0));
    CHECK(h.diag == std::vector<double>{12, 6, 4, 6, 12});
  }
  SECTION("random parameters against the product-space oracle") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uj(0.1, 2.0), uu(-2.0, 2.0);
    for (int n = 1; n <= 7; ++n) {
      const double j = uj(rng), u = uu(rng);
      const auto h = build_hamiltonian(params(n, j, u));
      const auto ref = oracle::two_mode_hamiltonian(n, j, u);
      for (int k = 0; k <= n; ++k) {
        for (int m = 0; m <= n; ++m) {
          double v = 0.0;
          if (k == m) v = h.diag[static_cast<std::size_t>(k)];
          if (m == k + 1) v = h.offdiag[static_cast<std::size_t>(k)];
          if (k == m + 1) v = h.offdiag[static_cast<std::size_t>(m)];
          CHECK(v == Approx(ref(k, m)).margin(1e-12));
        }
      }
    }
  }
}

TEST_CASE("Hamiltonian commutes with the well exchange", "[fock_space][property]") {
  std::mt19937_64 rng(3);
  for (int n : {1, 2, 5, 16, 101}) {
    const auto h = build_hamiltonian(params(n, 0.7, -0.3));
    const auto psi = QuantumState(oracle::random_state(n, rng));
    const auto a = h.apply(psi.reflected().amplitudes());
    const auto b = h.apply(psi.amplitudes());
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(std::abs(a[k] - b[b.size() - 1 - k]) <= 1e-13 * (1 + std::abs(a[k])));
  }
}

TEST_CASE("ground_state", "[fock_space]") {
  SECTION("N=2 noninteracting is binomial") {
    const auto g = ground_state(params(2, 1.0, 0.0));
    CHECK(g.energy == Approx(-2.0).epsilon(1e-13));
    CHECK(g.state[0].real() == Approx(0.5).epsilon(1e-12));
    CHECK(g.state[1].real() == Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(g.state[2].real() == Approx(0.5).epsilon(1e-12));
  }
  SECTION("N=4 noninteracting is binomial") {
    const auto g = ground_state(params(4, 1.0, 0.0));
    const double expect[] = {0.25, 0.5, std::sqrt(6.0) / 4, 0.5, 0.25};
    CHECK(g.energy == Approx(-4.0).epsilon(1e-13));
    for (int k = 0; k <= 4; ++k) CHECK(g.state[static_cast<std::size_t>(k)].real() == Approx(expect[k]).epsilon(1e-12));
  }
  SECTION("eigenresidual and phase convention") {
    for (double u : {-0.5, 0.0, 0.02, 3.0}) {
      const auto p = params(60, 1.0, u);
      const auto g = ground_state(p);
      const auto h = build_hamiltonian(p);
      const auto hpsi = h.apply(g.state.amplitudes());
      double res = 0;
      for (std::size_t k = 0; k < hpsi.size(); ++k) res += std::norm(hpsi[k] - g.energy * g.state[k]);
      const auto [lo, hi] = h.gershgorin();
      CHECK(std::sqrt(res) <= 1e-10 * std::max(std::abs(lo), std::abs(hi)));
      CHECK(g.state.norm_squared() == Approx(1.0).margin(1e-12));
      std::size_t imax = 0;
      for (std::size_t k = 0; k < g.state.dim(); ++k)
        if (std::abs(g.state[k]) > std::abs(g.state[imax])) imax = k;
      CHECK(g.state[imax].real() > 0);
      CHECK(g.state[imax].imag() == 0);
    }
  }
  SECTION("energy agrees with dense diagonalization") {
    const auto ref = oracle::two_mode_hamiltonian(12, 0.8, 0.3);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ref);
    CHECK(ground_state(params(12, 0.8, 0.3)).energy == Approx(es.eigenvalues()(0)).epsilon(1e-12));
  }
  SECTION("strong repulsion approaches the half-half number state") {
    const auto g = ground_state(ModelParams::from_ratios(20, 1.0, 1e5, 0.0));
    CHECK(std::norm(g.state[10]) > 0.999);
  }
}

TEST_CASE("ground energy is nonincreasing in J at fixed U >= 0", "[fock_space][property]") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> uj(0.05, 3.0), uu(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 40);
    const double u = uu(rng);
    double j1 = uj(rng), j2 = uj(rng);
    if (j1 > j2) std::swap(j1, j2);
    CHECK(ground_state(params(n, j2, u)).energy <= ground_state(params(n, j1, u)).energy + 1e-12);
  }
}

TEST_CASE("evolve_unitary", "[fock_space]") {
  const auto p = params(30, 1.0, -0.05);
  std::mt19937_64 rng(9);
  const QuantumState psi(oracle::random_state(30, rng));

  SECTION("zero duration is the identity") {
    const auto out = evolve_unitary(psi, p, 0.0, 1e-12);
    for (std::size_t k = 0; k < psi.dim(); ++k) CHECK(out[k] == psi[k]);
  }
  SECTION("eigenstate acquires only a phase") {
    const auto g = ground_state(p);
    const auto out = evolve_unitary(g.state, p, 7.3, 1e-12);
    CHECK(fidelity(g.state, out) == Approx(1.0).margin(1e-11));
    const Complex overlap = inner_product(g.state, out);
    CHECK(std::arg(overlap) == Approx(std::arg(std::polar(1.0, -g.energy * 7.3))).margin(1e-9));
  }
  SECTION("matches dense diagonalization") {
    const auto ref = oracle::evolve_dense(oracle::two_mode_hamiltonian(30, 1.0, -0.05), to_eigen(psi), 13.0);
    const auto out = evolve_unitary(psi, p, 13.0, 1e-12);
    double err = 0;
    for (std::size_t k = 0; k < psi.dim(); ++k) err = std::max(err, std::abs(out[k] - ref(static_cast<Eigen::Index>(k))));
    CHECK(err < 1e-10);
  }
  SECTION("exchange-symmetric state keeps z = 0") {
    const auto sym = ground_state(params(30, 1.0, 0.05)).state;
    UnitaryPropagator prop(p, 1e-12);
    QuantumState s = sym;
    for (int i = 0; i < 20; ++i) {
      prop.evolve(s, 0.5);
      CHECK(std::abs(z_of_state(s)) <= 1e-11);
    }
  }
  SECTION("norm, energy and overlaps are conserved") {
    const QuantumState other(oracle::random_state(30, rng));
    const double tol = 1e-11;
    const auto h = build_hamiltonian(p);
    const double e0 = energy_expectation(psi, h);
    const double f0 = fidelity(psi, other);
    UnitaryPropagator prop(p, tol);
    QuantumState a = psi, b = other;
    for (int i = 0; i < 10; ++i) {
      // Propagate without the renormalization the public API applies.
      auto raw_a = a;
      ChebyshevPropagator cheb(h, tol);
      cheb.propagate(raw_a.amplitudes(), 2.0);
      CHECK(raw_a.norm_squared() == Approx(1.0).margin(10 * tol));
      prop.evolve(a, 2.0);
      prop.evolve(b, 2.0);
      CHECK(energy_expectation(a, h) == Approx(e0).epsilon(10 * tol));
      CHECK(fidelity(a, b) == Approx(f0).margin(10 * tol));
    }
  }
  SECTION("argument errors") {
    CHECK_THROWS_AS(evolve_unitary(psi, p, -1.0, 1e-10), ConfigError);
    CHECK_THROWS_AS(evolve_unitary(psi, p, 1.0, 0.0), ConfigError);
    CHECK_THROWS_AS(evolve_unitary(psi, params(31, 1, 0), 1.0, 1e-10), ConfigError);
  }
}

TEST_CASE("z_of_state", "[fock_space]") {
  CHECK(z_of_state(QuantumState::number_state(7, 7)) == 1.0);
  CHECK(z_of_state(QuantumState::number_state(7, 0)) == -1.0);
  CHECK(std::abs(z_of_state(QuantumState::binomial(40))) < 1e-15);
  const QuantumState s({0.0, 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0)});
  CHECK(z_of_state(s) == Approx(0.5).epsilon(1e-15));
}

TEST_CASE("phi_of_state", "[fock_space]") {
  const auto b = QuantumState::binomial(10);
  REQUIRE(phi_of_state(b).has_value());
  CHECK(*phi_of_state(b) == Approx(0.0).margin(1e-14));

  QuantumState alt = b;
  for (std::size_t k = 0; k < alt.dim(); ++k) alt[k] *= std::polar(1.0, std::numbers::pi * static_cast<double>(k));
  REQUIRE(phi_of_state(alt).has_value());
  CHECK(*phi_of_state(alt) == Approx(std::numbers::pi).epsilon(1e-12));

  CHECK_FALSE(phi_of_state(QuantumState::number_state(10, 4)).has_value());

  // Coherence against the ladder-operator matrix b_r b_l^+.
  std::mt19937_64 rng(17);
  const int n = 6;
  const QuantumState r(oracle::random_state(n, rng));
  const Eigen::MatrixXd bo = oracle::annihilation(n);
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(n + 1, n + 1);
  const Eigen::MatrixXd op = oracle::kron(bo, id) * oracle::kron(id, bo).transpose();
  Eigen::VectorXcd full = Eigen::VectorXcd::Zero((n + 1) * (n + 1));
  for (int k = 0; k <= n; ++k) full(k * (n + 1) + (n - k)) = r[static_cast<std::size_t>(k)];
  const Complex ref = full.dot(op.cast<Complex>() * full);
  CHECK(std::abs(coherence(r) - ref) < 1e-13);
}

TEST_CASE("jump_rates", "[fock_space]") {
  const auto p = params(12, 1.0, 0.0, 0.25);
  auto r = jump_rates(QuantumState::number_state(12, 12), p);
  CHECK(r.right == Approx(3.0));
  CHECK(r.left == 0.0);
  r = jump_rates(QuantumState::binomial(12), p);
  CHECK(r.right == Approx(1.5).epsilon(1e-14));
  CHECK(r.left == Approx(1.5).epsilon(1e-14));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 20; ++i) {
    const auto q = jump_rates(QuantumState(oracle::random_state(12, rng)), p);
    CHECK(q.right + q.left == Approx(p.g_total()).epsilon(1e-14));
  }
}

TEST_CASE("apply_jump", "[fock_space]") {
  const auto b = QuantumState::binomial(2);
  const auto j = apply_jump(b, Detector::right);
  CHECK(std::abs(j[0]) == 0.0);
  CHECK(j[1].real() == Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(j[2].real() == Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(z_of_state(b) == Approx(0.0).margin(1e-16));
  CHECK(z_of_state(j) == Approx(0.5).epsilon(1e-15));

  const auto all_right = QuantumState::number_state(5, 5);
  const auto same = apply_jump(all_right, Detector::right);
  CHECK(same[5] == Complex(1.0, 0.0));
  CHECK_THROWS_AS(apply_jump(all_right, Detector::left), std::logic_error);
}

TEST_CASE("a right count never lowers <n_r>", "[fock_space][property]") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 30);
    const QuantumState s(oracle::random_state(n, rng));
    CHECK(z_of_state(apply_jump(s, Detector::right)) >= z_of_state(s) - 1e-14);
    CHECK(z_of_state(apply_jump(s, Detector::left)) <= z_of_state(s) + 1e-14);
  }
}

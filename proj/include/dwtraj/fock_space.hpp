#pragma once

// Two-mode Bose-Hubbard model on the fixed-N sector. Basis state k is
// |n_r = k, n_l = N - k>, so the amplitude index is the right-well occupation.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dwtraj/errors.hpp"
#include "dwtraj/tridiagonal.hpp"

namespace dwtraj {

enum class Detector { left, right };

inline char detector_code(Detector d) { return d == Detector::right ? 'R' : 'L'; }

// hbar = 1; J sets the unit of time.
struct ModelParams {
  int n_atoms = 1;
  double j_tunnel = 1.0;
  double u_int = 0.0;
  double gamma_atom = 0.0;

  double chi() const { return n_atoms * u_int; }
  double g_total() const { return n_atoms * gamma_atom; }

  void validate() const {
    if (n_atoms < 1) throw ConfigError("n_atoms must be >= 1");
    if (!(j_tunnel > 0.0)) throw ConfigError("j_tunnel must be > 0");
    if (!std::isfinite(u_int)) throw ConfigError("u_int must be finite");
    if (!(gamma_atom >= 0.0) || !std::isfinite(gamma_atom)) throw ConfigError("gamma_atom must be >= 0");
  }

  // The single place where the dimensionless knobs chi/J and N*Gamma/J are
  // turned into per-atom couplings.
  static ModelParams from_ratios(int n_atoms, double j_tunnel, double chi_over_j, double n_gamma_over_j) {
    ModelParams p;
    p.n_atoms = n_atoms;
    p.j_tunnel = j_tunnel;
    if (n_atoms >= 1) {
      p.u_int = chi_over_j * j_tunnel / n_atoms;
      p.gamma_atom = n_gamma_over_j * j_tunnel / n_atoms;
    }
    p.validate();
    return p;
  }
};

class QuantumState {
 public:
  QuantumState() = default;
  explicit QuantumState(std::vector<Complex> amplitudes) : amps_(std::move(amplitudes)) {
    if (amps_.empty()) throw ConfigError("a quantum state needs at least one amplitude");
  }

  static QuantumState number_state(int n_atoms, int n_right) {
    if (n_right < 0 || n_right > n_atoms) throw ConfigError("number state occupation out of range");
    std::vector<Complex> a(static_cast<std::size_t>(n_atoms) + 1, 0.0);
    a[static_cast<std::size_t>(n_right)] = 1.0;
    return QuantumState(std::move(a));
  }

  // All atoms in the symmetric single-particle orbital, (b_r^+ + b_l^+)^N |0>.
  static QuantumState binomial(int n_atoms) {
    std::vector<Complex> a(static_cast<std::size_t>(n_atoms) + 1);
    const double n = n_atoms;
    for (int k = 0; k <= n_atoms; ++k) {
      const double log_c = std::lgamma(n + 1) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1) - n * std::log(2.0);
      a[static_cast<std::size_t>(k)] = std::exp(0.5 * log_c);
    }
    QuantumState s(std::move(a));
    s.normalize();
    return s;
  }

  int n_atoms() const { return static_cast<int>(amps_.size()) - 1; }
  std::size_t dim() const { return amps_.size(); }

  std::span<const Complex> amplitudes() const { return amps_; }
  std::span<Complex> amplitudes() { return amps_; }
  const Complex& operator[](std::size_t k) const { return amps_[k]; }
  Complex& operator[](std::size_t k) { return amps_[k]; }

  double norm_squared() const {
    double s = 0.0;
    for (const Complex& c : amps_) s += std::norm(c);
    return s;
  }

  // Rescales by a positive real, so the phase of every amplitude is kept.
  void normalize() {
    const double n2 = norm_squared();
    if (!(n2 > 0.0) || !std::isfinite(n2)) throw NumericalError("cannot normalize a zero or non-finite state");
    const double inv = 1.0 / std::sqrt(n2);
    for (Complex& c : amps_) c *= inv;
  }

  // Mirror k <-> N - k (exchange of the well labels).
  QuantumState reflected() const {
    std::vector<Complex> r(amps_.rbegin(), amps_.rend());
    return QuantumState(std::move(r));
  }

 private:
  std::vector<Complex> amps_;
};

inline Complex inner_product(const QuantumState& a, const QuantumState& b) {
  Complex s = 0.0;
  for (std::size_t k = 0; k < a.dim(); ++k) s += std::conj(a[k]) * b[k];
  return s;
}

inline double fidelity(const QuantumState& a, const QuantumState& b) { return std::abs(inner_product(a, b)); }

// H = -J (b_r^+ b_l + b_l^+ b_r) + U (b_r^+ b_r^+ b_r b_r + b_l^+ b_l^+ b_l b_l)
inline SymTridiagonal build_hamiltonian(const ModelParams& p) {
  p.validate();
  const std::int64_t n = p.n_atoms;
  SymTridiagonal h;
  h.diag.resize(static_cast<std::size_t>(n) + 1);
  h.offdiag.resize(static_cast<std::size_t>(n));
  for (std::int64_t k = 0; k <= n; ++k) {
    const std::int64_t pairs = k * (k - 1) + (n - k) * (n - k - 1);
    h.diag[static_cast<std::size_t>(k)] = p.u_int * static_cast<double>(pairs);
  }
  for (std::int64_t k = 0; k < n; ++k) {
    // The integer product is symmetric under k <-> N-1-k, so the matrix is
    // exactly exchange symmetric in floating point.
    h.offdiag[static_cast<std::size_t>(k)] = -p.j_tunnel * std::sqrt(static_cast<double>((k + 1) * (n - k)));
  }
  return h;
}

inline double energy_expectation(const QuantumState& s, const SymTridiagonal& h) {
  const auto hs = h.apply(s.amplitudes());
  Complex e = 0.0;
  for (std::size_t k = 0; k < s.dim(); ++k) e += std::conj(s[k]) * hs[k];
  return e.real() / s.norm_squared();
}

struct GroundState {
  QuantumState state;
  double energy;
};

// Lowest eigenvector, phase fixed so the largest-magnitude amplitude is real positive.
inline GroundState ground_state(const ModelParams& p) {
  const auto h = build_hamiltonian(p);
  auto pair = lowest_eigenpair(h, 1e-11);
  std::size_t imax = 0;
  for (std::size_t k = 1; k < pair.vector.size(); ++k) {
    if (std::abs(pair.vector[k]) > std::abs(pair.vector[imax])) imax = k;
  }
  const double sign = pair.vector[imax] < 0 ? -1.0 : 1.0;
  std::vector<Complex> a(pair.vector.size());
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = sign * pair.vector[k];
  QuantumState s(std::move(a));
  s.normalize();
  return {std::move(s), pair.value};
}

// Reusable exp(-iHt) for one parameter set.
class UnitaryPropagator {
 public:
  UnitaryPropagator(const ModelParams& p, double tol) : cheb_(build_hamiltonian(p), tol) {}

  void evolve(QuantumState& s, double duration) {
    cheb_.propagate(s.amplitudes(), duration);
    s.normalize();
  }

  const SymTridiagonal& hamiltonian() const { return cheb_.hamiltonian(); }
  std::size_t matvec_count() const { return cheb_.matvec_count(); }

 private:
  ChebyshevPropagator cheb_;
};

inline QuantumState evolve_unitary(QuantumState state, const ModelParams& p, double duration, double tol) {
  if (duration < 0.0) throw ConfigError("duration must be nonnegative");
  if (state.n_atoms() != p.n_atoms) throw ConfigError("state dimension does not match n_atoms");
  if (duration == 0.0) return state;
  UnitaryPropagator prop(p, tol);
  prop.evolve(state, duration);
  return state;
}

// Population imbalance (<n_r> - <n_l>) / N.
inline double z_of_state(const QuantumState& s) {
  const int n = s.n_atoms();
  double acc = 0.0;
  double norm = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double w = std::norm(s[static_cast<std::size_t>(k)]);
    acc += (2.0 * k - n) * w;
    norm += w;
  }
  return std::clamp(acc / (n * norm), -1.0, 1.0);
}

// <((n_r - n_l)/N)^2>
inline double z2_of_state(const QuantumState& s) {
  const int n = s.n_atoms();
  double acc = 0.0;
  double norm = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double w = std::norm(s[static_cast<std::size_t>(k)]);
    const double zk = (2.0 * k - n) / n;
    acc += zk * zk * w;
    norm += w;
  }
  return acc / norm;
}

// <b_r b_l^+>
inline Complex coherence(const QuantumState& s) {
  const int n = s.n_atoms();
  Complex acc = 0.0;
  for (int k = 1; k <= n; ++k) {
    acc += std::sqrt(static_cast<double>(k) * (n - k + 1)) * std::conj(s[static_cast<std::size_t>(k - 1)]) *
           s[static_cast<std::size_t>(k)];
  }
  return acc / s.norm_squared();
}

inline constexpr double kCoherenceFloor = 1e-14;

inline double wrap_phase(double phi) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(phi, two_pi);
  if (w < 0.0) w += two_pi;
  if (w >= two_pi) w = 0.0;
  return w;
}

// arg <b_r b_l^+> in [0, 2pi); empty when the coherence vanishes.
inline std::optional<double> phi_of_state(const QuantumState& s) {
  const Complex c = coherence(s);
  if (std::abs(c) < kCoherenceFloor) return std::nullopt;
  return wrap_phase(std::arg(c));
}

struct JumpRates {
  double right;
  double left;
};

inline JumpRates jump_rates(const QuantumState& s, const ModelParams& p) {
  const int n = s.n_atoms();
  double nr = 0.0;
  double norm = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double w = std::norm(s[static_cast<std::size_t>(k)]);
    nr += k * w;
    norm += w;
  }
  nr /= norm;
  return {p.gamma_atom * nr, p.gamma_atom * (n - nr)};
}

// Conditional state after a count on the given detector: sqrt(n_i) |psi>, renormalized.
inline QuantumState apply_jump(QuantumState s, Detector d) {
  const int n = s.n_atoms();
  for (int k = 0; k <= n; ++k) {
    const int occ = d == Detector::right ? k : n - k;
    s[static_cast<std::size_t>(k)] *= std::sqrt(static_cast<double>(occ));
  }
  if (s.norm_squared() == 0.0) {
    throw std::logic_error(std::string("jump on the ") + (d == Detector::right ? "right" : "left") +
                           " detector annihilates the state");
  }
  s.normalize();
  return s;
}

}  // namespace dwtraj

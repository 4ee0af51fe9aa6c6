#pragma once

// Mean-field (c-number) two-mode model in the canonical pair (z, phi):
//   H(z, phi) = -2J sqrt(1 - z^2) cos(phi) + chi (1 + z^2)
// with z = (|b_r|^2 - |b_l|^2)/N and phi = arg(b_r conj(b_l)). The flow
//   dz/dt = +dH/dphi,  dphi/dt = -dH/dz
// is the one generated by i db_r/dt = -J b_l + 2U |b_r|^2 b_r.

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "dwtraj/errors.hpp"
#include "dwtraj/fock_space.hpp"

namespace dwtraj {

struct MeanFieldParams {
  double j_tunnel = 1.0;
  double chi = 0.0;

  void validate() const {
    if (!(j_tunnel > 0.0)) throw ConfigError("j_tunnel must be > 0");
    if (!std::isfinite(chi)) throw ConfigError("chi must be finite");
  }
};

struct ClassicalState {
  double z = 0.0;
  double phi = 0.0;  // wrapped to [0, 2pi)

  static ClassicalState make(double z, double phi) { return {std::clamp(z, -1.0, 1.0), wrap_phase(phi)}; }
};

// Complex-amplitude chart, |b_r|^2 + |b_l|^2 = N. Regular at z = +-1.
struct AmplitudeState {
  Complex b_r;
  Complex b_l;

  double population() const { return std::norm(b_r) + std::norm(b_l); }
};

inline AmplitudeState to_amplitudes(const ClassicalState& s, double n_atoms) {
  return {std::polar(std::sqrt(0.5 * n_atoms * (1.0 + s.z)), s.phi),
          Complex(std::sqrt(0.5 * n_atoms * (1.0 - s.z)), 0.0)};
}

inline ClassicalState to_classical(const AmplitudeState& a) {
  const double nr = std::norm(a.b_r);
  const double nl = std::norm(a.b_l);
  return ClassicalState::make((nr - nl) / (nr + nl), std::arg(a.b_r * std::conj(a.b_l)));
}

inline double classical_energy(const ClassicalState& s, const MeanFieldParams& p) {
  return -2.0 * p.j_tunnel * std::sqrt(std::max(0.0, 1.0 - s.z * s.z)) * std::cos(s.phi) + p.chi * (1.0 + s.z * s.z);
}

// The (z, phi) chart breaks down at the poles z = +-1.
class ChartSingularity : public NumericalError {
 public:
  explicit ChartSingularity(double z)
      : NumericalError("(z, phi) chart singular at |z| = " + std::to_string(std::abs(z)) +
                       "; use the amplitude chart") {}
};

inline constexpr double kPoleMargin = 1e-9;

struct FlowVector {
  double dz;
  double dphi;
};

inline FlowVector mean_field_rhs(const ClassicalState& s, const MeanFieldParams& p, double pole_margin = kPoleMargin) {
  if (std::abs(s.z) >= 1.0 - pole_margin) throw ChartSingularity(s.z);
  const double root = std::sqrt(1.0 - s.z * s.z);
  const double j = p.j_tunnel;
  return {2.0 * j * root * std::sin(s.phi), -2.0 * j * s.z * std::cos(s.phi) / root - 2.0 * p.chi * s.z};
}

// (db_r/dt, db_l/dt) from i db_r/dt = -J b_l + 2U |b_r|^2 b_r and the mirror equation.
inline std::pair<Complex, Complex> amplitude_rhs(const AmplitudeState& a, double j_tunnel, double u_int) {
  constexpr Complex i{0.0, 1.0};
  const Complex dr = i * (j_tunnel * a.b_l - 2.0 * u_int * std::norm(a.b_r) * a.b_r);
  const Complex dl = i * (j_tunnel * a.b_r - 2.0 * u_int * std::norm(a.b_l) * a.b_l);
  return {dr, dl};
}

struct ClassicalTrajectory {
  std::vector<double> t;
  std::vector<ClassicalState> states;
  std::vector<double> energy;
};

namespace detail {

using ZPhiVec = std::array<double, 2>;
using AmpVec = std::array<double, 4>;  // Re b_r, Im b_r, Re b_l, Im b_l with unit population

inline AmpVec pack(const ClassicalState& s) {
  const auto a = to_amplitudes(s, 1.0);
  return {a.b_r.real(), a.b_r.imag(), a.b_l.real(), a.b_l.imag()};
}

inline AmplitudeState unpack(const AmpVec& v) { return {{v[0], v[1]}, {v[2], v[3]}}; }

// Continuous (unwrapped) phase near a reference value.
inline double unwrap_near(double wrapped, double reference) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  return wrapped + two_pi * std::round((reference - wrapped) / two_pi);
}

}  // namespace detail

struct ClassicalOptions {
  // Switch to the amplitude chart above this |z| and back below the lower value.
  double enter_amplitude_chart = 0.99;
  double leave_amplitude_chart = 0.95;
  std::size_t max_steps = 50'000'000;
};

// Uniform samples t_i = i * t_max / (sample_count - 1). Energy drift is
// checked at every sample against tol * (1 + |H(0)|).
inline ClassicalTrajectory integrate_classical(const ClassicalState& s0, const MeanFieldParams& p, double t_max,
                                               std::size_t sample_count, double tol,
                                               const ClassicalOptions& opt = {}) {
  namespace ode = boost::numeric::odeint;
  p.validate();
  if (!(t_max > 0.0)) throw ConfigError("t_max must be > 0");
  if (!(tol > 0.0)) throw ConfigError("tol must be > 0");
  if (sample_count < 2) throw ConfigError("sample_count must be >= 2");

  const double j = p.j_tunnel;
  const double chi = p.chi;
  auto zphi_system = [j, chi](const detail::ZPhiVec& x, detail::ZPhiVec& dx, double) {
    const double root = std::sqrt(std::max(1.0 - x[0] * x[0], 1e-300));
    dx[0] = 2.0 * j * root * std::sin(x[1]);
    dx[1] = -2.0 * j * x[0] * std::cos(x[1]) / root - 2.0 * chi * x[0];
  };
  auto amp_system = [j, chi](const detail::AmpVec& x, detail::AmpVec& dx, double) {
    const auto [dr, dl] = amplitude_rhs(detail::unpack(x), j, chi);
    dx = {dr.real(), dr.imag(), dl.real(), dl.imag()};
  };

  const double step_tol = 1e-3 * tol;
  auto zphi_stepper = ode::make_controlled(step_tol, step_tol, ode::runge_kutta_fehlberg78<detail::ZPhiVec>());
  auto amp_stepper = ode::make_controlled(step_tol, step_tol, ode::runge_kutta_fehlberg78<detail::AmpVec>());

  ClassicalTrajectory out;
  out.t.reserve(sample_count);
  out.states.reserve(sample_count);
  out.energy.reserve(sample_count);

  bool amp_chart = std::abs(s0.z) > opt.enter_amplitude_chart;
  detail::ZPhiVec xz{s0.z, s0.phi};
  detail::AmpVec xa = detail::pack(s0);
  double phi_unwrapped = s0.phi;

  auto current = [&]() -> ClassicalState {
    if (amp_chart) return to_classical(detail::unpack(xa));
    return ClassicalState::make(xz[0], xz[1]);
  };

  const double e0 = classical_energy(s0, p);
  const double e_tol = tol * (1.0 + std::abs(e0));
  out.t.push_back(0.0);
  out.states.push_back(ClassicalState::make(s0.z, s0.phi));
  out.energy.push_back(e0);

  double t = 0.0;
  double dt = std::min(1e-3 / j, t_max / static_cast<double>(sample_count - 1));
  std::size_t steps = 0;
  for (std::size_t i = 1; i < sample_count; ++i) {
    const double target = t_max * static_cast<double>(i) / static_cast<double>(sample_count - 1);
    while (t < target) {
      if (++steps > opt.max_steps) throw NumericalError("classical integration exceeded the step budget", t);
      const bool clipped = t + dt >= target;
      double trial = clipped ? target - t : dt;
      const double t_before = t;
      ode::controlled_step_result r;
      if (amp_chart) {
        r = amp_stepper.try_step(amp_system, xa, t, trial);
      } else {
        const auto saved = xz;
        r = zphi_stepper.try_step(zphi_system, xz, t, trial);
        if (r == ode::success && std::abs(xz[0]) >= 1.0 - 1e-6) {
          xz = saved;
          t = t_before;
          dt = 0.25 * (clipped ? target - t : dt);
          continue;
        }
      }
      if (r != ode::success) {
        dt = trial;
        if (dt < 1e-15 * std::max(1.0, t_max)) throw NumericalError("classical step size underflow", t);
        continue;
      }
      if (clipped) {
        t = target;
      } else {
        dt = trial;
      }

      // Chart bookkeeping.
      if (amp_chart) {
        // Renormalize the population drift away.
        const double pop = detail::unpack(xa).population();
        for (double& v : xa) v /= std::sqrt(pop);
        const auto cs = to_classical(detail::unpack(xa));
        phi_unwrapped = detail::unwrap_near(cs.phi, phi_unwrapped);
        if (std::abs(cs.z) < opt.leave_amplitude_chart) {
          amp_chart = false;
          xz = {cs.z, phi_unwrapped};
        }
      } else {
        phi_unwrapped = xz[1];
        if (std::abs(xz[0]) > opt.enter_amplitude_chart) {
          amp_chart = true;
          xa = detail::pack(ClassicalState{xz[0], wrap_phase(xz[1])});
        }
      }
    }
    const auto s = current();
    const double e = classical_energy(s, p);
    if (!std::isfinite(e) || std::abs(e - e0) > e_tol) {
      throw NumericalError("classical energy drift " + std::to_string(std::abs(e - e0)) + " exceeds tolerance",
                           target);
    }
    out.t.push_back(target);
    out.states.push_back(s);
    out.energy.push_back(e);
  }
  return out;
}

enum class FixedPointKind { center, hyperbolic };

struct FixedPointReport {
  ClassicalState location;
  FixedPointKind classification;
  double exponent;  // Lyapunov exponent if hyperbolic, small-oscillation frequency if center
};

// The two equilibria (0, 0) and (0, pi) with their linear stability.
inline std::vector<FixedPointReport> fixed_points(const MeanFieldParams& p) {
  p.validate();
  const double j = p.j_tunnel;
  const double chi = p.chi;
  std::vector<FixedPointReport> out;
  const double a = -j * (j + chi);  // lambda^2 / 4 at (0, 0)
  out.push_back({{0.0, 0.0}, a > 0 ? FixedPointKind::hyperbolic : FixedPointKind::center,
                 2.0 * std::sqrt(std::abs(a))});
  const double b = j * (chi - j);  // lambda^2 / 4 at (0, pi)
  out.push_back({{0.0, std::numbers::pi}, b > 0 ? FixedPointKind::hyperbolic : FixedPointKind::center,
                 2.0 * std::sqrt(std::abs(b))});
  return out;
}

struct SeparatrixLobe {
  int lobe;  // +1: z > 0, -1: z < 0
  std::vector<ClassicalState> points;
};

// Homoclinic orbits: the level set H = H(hyperbolic point). With s = sqrt(1 - z^2)
// the level set is the quadratic chi s^2 + 2J cos(phi) s + H_sep - 2 chi = 0,
// so each lobe is two explicit branches over a phi interval around the fixed point.
inline std::vector<SeparatrixLobe> separatrix(const MeanFieldParams& p, std::size_t n_points) {
  p.validate();
  if (n_points < 4) throw ConfigError("separatrix needs at least 4 points per lobe");
  const auto fps = fixed_points(p);
  const FixedPointReport* hyper = nullptr;
  for (const auto& f : fps) {
    if (f.classification == FixedPointKind::hyperbolic) hyper = &f;
  }
  if (!hyper) throw ConfigError("no separatrix in this regime (no hyperbolic fixed point)");

  const double j = p.j_tunnel;
  const double chi = p.chi;
  const double phi0 = hyper->location.phi;
  const double h_sep = classical_energy(hyper->location, p);
  const double c0 = h_sep - 2.0 * chi;

  // Roots in s for a phase offset psi from the fixed point.
  auto roots = [&](double psi) {
    const double cphi = std::cos(phi0 + psi);
    const double disc = std::max(0.0, j * j * cphi * cphi - chi * c0);
    const double sq = std::sqrt(disc);
    // Stable quadratic formula.
    const double q = -(j * cphi + std::copysign(sq, j * cphi));
    double s1 = q / chi;
    double s2 = q != 0.0 ? c0 / q : s1;
    if (s1 > s2) std::swap(s1, s2);
    return std::pair{s1, s2};  // s1: outer branch (large |z|), s2: inner branch
  };

  // Half-width of the lobe in phi, where the two branches merge.
  const double merge_cos2 = chi * c0 / (j * j);
  double half_width = std::numbers::pi;
  bool closed = false;
  if (merge_cos2 > 0.0 && merge_cos2 < 1.0) {
    const double c = std::sqrt(merge_cos2);
    half_width = std::acos(c);
    closed = true;
  }

  std::vector<SeparatrixLobe> out;
  for (int lobe : {+1, -1}) {
    SeparatrixLobe curve{lobe, {}};
    // Odd, so the apex psi = 0 is sampled exactly.
    const std::size_t half = (n_points / 2) | 1u;
    auto psi_at = [&](std::size_t i) {
      const double u = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(half - 1);
      return closed ? half_width * std::sin(0.5 * std::numbers::pi * u) : half_width * u;
    };
    auto emit = [&](double psi, double s) {
      if (!(s >= 0.0 && s <= 1.0)) return;
      const double z = lobe * std::sqrt(std::max(0.0, 1.0 - s * s));
      curve.points.push_back(ClassicalState::make(z, phi0 + psi));
    };
    for (std::size_t i = 0; i < half; ++i) emit(psi_at(i), roots(psi_at(i)).first);
    for (std::size_t i = half; i-- > 0;) {
      // Skip the duplicated merge points at the ends of a closed lobe.
      if (closed && (i == 0 || i == half - 1)) continue;
      emit(psi_at(i), roots(psi_at(i)).second);
    }
    out.push_back(std::move(curve));
  }
  return out;
}

inline double separatrix_energy(const MeanFieldParams& p) {
  for (const auto& f : fixed_points(p)) {
    if (f.classification == FixedPointKind::hyperbolic) return classical_energy(f.location, p);
  }
  throw ConfigError("no separatrix in this regime (no hyperbolic fixed point)");
}

struct PortraitGrid {
  std::vector<double> z;
  std::vector<double> phi;
  std::vector<double> energy;  // energy[i * phi.size() + k] = H(z[i], phi[k])
};

inline PortraitGrid phase_portrait(const MeanFieldParams& p, std::vector<double> z_grid, std::vector<double> phi_grid) {
  p.validate();
  PortraitGrid g{std::move(z_grid), std::move(phi_grid), {}};
  g.energy.reserve(g.z.size() * g.phi.size());
  for (double z : g.z) {
    if (z < -1.0 || z > 1.0) throw ConfigError("portrait z grid outside [-1, 1]");
    for (double phi : g.phi) g.energy.push_back(classical_energy({z, phi}, p));
  }
  return g;
}

// Independent zero-mean Gaussian kicks of the given standard deviation on z and phi.
template <class Rng>
ClassicalState perturb(const ClassicalState& s, double amplitude, Rng& rng) {
  if (!(amplitude >= 0.0)) throw ConfigError("perturbation amplitude must be >= 0");
  if (amplitude == 0.0) return s;
  std::normal_distribution<double> kick(0.0, amplitude);
  const double dz = kick(rng);
  const double dphi = kick(rng);
  return ClassicalState::make(s.z + dz, s.phi + dphi);
}

inline constexpr double kDefaultNoiseAmplitude = 1e-6;

// Least-squares slope of log|z| over the first stretch of samples with
// lo <= |z| <= hi. Returns NaN if fewer than three samples qualify.
inline double fit_growth_rate(const ClassicalTrajectory& tr, double lo, double hi) {
  double st = 0, sy = 0, stt = 0, sty = 0;
  std::size_t n = 0;
  bool started = false;
  for (std::size_t i = 0; i < tr.t.size(); ++i) {
    const double a = std::abs(tr.states[i].z);
    if (a >= lo && a <= hi) {
      started = true;
      const double y = std::log(a);
      st += tr.t[i];
      sy += y;
      stt += tr.t[i] * tr.t[i];
      sty += tr.t[i] * y;
      ++n;
    } else if (started) {
      break;
    }
  }
  if (n < 3) return std::numeric_limits<double>::quiet_NaN();
  const double dn = static_cast<double>(n);
  return (dn * sty - st * sy) / (dn * stt - st * st);
}

}  // namespace dwtraj

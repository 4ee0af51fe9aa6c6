#pragma once

// Quantum trajectories conditioned on photon counts from two detectors.
//
// Jump operators are diagonal in the Fock basis:
//   linear:    L_i = sqrt(Gamma/2)  sqrt(n_i)
//   quadratic: L_i = sqrt(Gamma2/2) n_i
// Between counts the state follows d|psi>/dt = (-iH - sum_i L_i^+ L_i)|psi>,
// and a count on detector i happens at rate 2 <L_i^+ L_i>.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <boost/numeric/odeint.hpp>

#include "dwtraj/errors.hpp"
#include "dwtraj/fock_space.hpp"
#include "dwtraj/rng.hpp"
#include "dwtraj/statistics.hpp"

namespace dwtraj {

enum class MeasurementKind { linear, quadratic };
enum class Algorithm { first_order, event_driven };

struct MeasurementModel {
  MeasurementKind kind = MeasurementKind::linear;
  // Quadratic model only: N^2 * Gamma2, so the initial total count rate is
  // comparable to N * Gamma of the linear model.
  double g2_total = 0.0;

  static MeasurementModel linear() { return {}; }
  static MeasurementModel quadratic(double g2_total) { return {MeasurementKind::quadratic, g2_total}; }
};

// Diagonal of L_i in the Fock basis.
inline std::vector<double> jump_operator_diagonal(const MeasurementModel& m, const ModelParams& p, Detector d) {
  const int n = p.n_atoms;
  std::vector<double> l(static_cast<std::size_t>(n) + 1);
  if (m.kind == MeasurementKind::quadratic && !(m.g2_total >= 0.0)) throw ConfigError("g2_total must be >= 0");
  const double gamma2 = m.g2_total / (static_cast<double>(n) * n);
  for (int k = 0; k <= n; ++k) {
    const double occ = d == Detector::right ? k : n - k;
    l[static_cast<std::size_t>(k)] = m.kind == MeasurementKind::linear ? std::sqrt(0.5 * p.gamma_atom * occ)
                                                                       : std::sqrt(0.5 * gamma2) * occ;
  }
  return l;
}

struct JumpEvent {
  double time;
  Detector detector;
};

struct TrajectoryConfig {
  ModelParams params;
  MeasurementModel model;
  Algorithm algorithm = Algorithm::event_driven;
  double t_max = 1.0;
  std::size_t sample_count = 5000;
  double dt = 0.0;  // first_order only
  std::uint64_t seed = 0;
  std::uint64_t trajectory_index = 0;
  double tol = 1e-10;  // local propagation tolerance

  void validate() const {
    params.validate();
    if (!(t_max > 0.0)) throw ConfigError("t_max must be > 0");
    if (sample_count < 2) throw ConfigError("sample_count must be >= 2");
    if (!(tol > 0.0)) throw ConfigError("tol must be > 0");
    if (model.kind == MeasurementKind::quadratic && !(model.g2_total >= 0.0))
      throw ConfigError("g2_total must be >= 0");
    if (algorithm == Algorithm::first_order) {
      if (!(dt > 0.0)) throw ConfigError("first_order algorithm requires dt > 0");
      if (max_total_rate() * dt >= 0.1)
        throw ConfigError("dt too large: total count probability per step must stay below 0.1");
    }
  }

  // Upper bound of the total count rate over the whole sector.
  double max_total_rate() const {
    return model.kind == MeasurementKind::linear ? params.g_total() : model.g2_total;
  }
};

struct TrajectoryRecord {
  std::vector<double> sample_times;
  std::vector<double> z_series;
  std::vector<double> z2_series;  // <z^2> in the conditional state
  std::vector<double> phi_series;  // NaN where the phase is undefined
  std::vector<std::uint8_t> phi_defined;
  std::vector<JumpEvent> jumps;
  QuantumState final_state;
  TrajectoryConfig config;
};

// Propagator for the conditional evolution between counts. For the linear
// model sum_i L_i^+ L_i = Gamma N / 2 is a constant on the fixed-N sector, so
// the evolution is unitary up to a scalar; the quadratic model needs the full
// non-Hermitian generator.
class ConditionalPropagator {
 public:
  ConditionalPropagator(const ModelParams& p, const MeasurementModel& m, double tol)
      : params_(p), model_(m), tol_(tol) {
    l_right_ = jump_operator_diagonal(m, p, Detector::right);
    l_left_ = jump_operator_diagonal(m, p, Detector::left);
    if (m.kind == MeasurementKind::linear) {
      unitary_.emplace(p, tol);
    } else {
      h_ = build_hamiltonian(p);
      damping_.resize(l_right_.size());
      for (std::size_t k = 0; k < damping_.size(); ++k)
        damping_[k] = l_right_[k] * l_right_[k] + l_left_[k] * l_left_[k];
    }
  }

  bool is_linear() const { return model_.kind == MeasurementKind::linear; }

  // Count rates 2 <L_i^+ L_i> in the normalized state.
  JumpRates rates(const QuantumState& s) const {
    double r = 0.0, l = 0.0, norm = 0.0;
    for (std::size_t k = 0; k < s.dim(); ++k) {
      const double w = std::norm(s[k]);
      r += l_right_[k] * l_right_[k] * w;
      l += l_left_[k] * l_left_[k] * w;
      norm += w;
    }
    return {2.0 * r / norm, 2.0 * l / norm};
  }

  QuantumState jump(QuantumState s, Detector d) const {
    const auto& l = d == Detector::right ? l_right_ : l_left_;
    for (std::size_t k = 0; k < s.dim(); ++k) s[k] *= l[k];
    if (s.norm_squared() == 0.0) throw std::logic_error("count on a detector whose rate vanishes");
    s.normalize();
    return s;
  }

  // Hamiltonian part only (linear model).
  void evolve_unitary(QuantumState& s, double dt) {
    if (!unitary_) throw std::logic_error("unitary evolution requested for the quadratic model");
    unitary_->evolve(s, dt);
  }

  // No-count evolution over dt. The linear model applies the exact scalar
  // damping exp(-N Gamma dt / 2); the state is NOT renormalized.
  void evolve_unnormalized(QuantumState& s, double dt) {
    if (dt == 0.0) return;
    if (unitary_) {
      const double n2 = s.norm_squared();
      unitary_->evolve(s, dt);
      const double damp = std::exp(-0.5 * params_.g_total() * dt) * std::sqrt(n2);
      for (Complex& c : s.amplitudes()) c *= damp;
      return;
    }
    auto x = pack(s);
    integrate(x, dt);
    unpack(x, s);
  }

  const std::vector<double>& damping() const { return damping_; }
  const SymTridiagonal& hamiltonian() const { return h_; }

  // Raw access for the norm-tracking sampler.
  using Vec = std::vector<double>;
  using Stepper = boost::numeric::odeint::controlled_runge_kutta<boost::numeric::odeint::runge_kutta_fehlberg78<Vec>>;

  static Vec pack(const QuantumState& s) {
    Vec x(2 * s.dim());
    for (std::size_t k = 0; k < s.dim(); ++k) {
      x[2 * k] = s[k].real();
      x[2 * k + 1] = s[k].imag();
    }
    return x;
  }
  static void unpack(const Vec& x, QuantumState& s) {
    for (std::size_t k = 0; k < s.dim(); ++k) s[k] = Complex(x[2 * k], x[2 * k + 1]);
  }
  static double norm_squared(const Vec& x) {
    double s = 0.0;
    for (double v : x) s += v * v;
    return s;
  }

  // dx/dt = (-iH - D) x on interleaved real storage.
  void rhs(const Vec& x, Vec& dx) const {
    const std::size_t n = damping_.size();
    for (std::size_t k = 0; k < n; ++k) {
      double hr = h_.diag[k] * x[2 * k];
      double hi = h_.diag[k] * x[2 * k + 1];
      if (k > 0) {
        hr += h_.offdiag[k - 1] * x[2 * k - 2];
        hi += h_.offdiag[k - 1] * x[2 * k - 1];
      }
      if (k + 1 < n) {
        hr += h_.offdiag[k] * x[2 * k + 2];
        hi += h_.offdiag[k] * x[2 * k + 3];
      }
      // -i (hr + i hi) = hi - i hr
      dx[2 * k] = hi - damping_[k] * x[2 * k];
      dx[2 * k + 1] = -hr - damping_[k] * x[2 * k + 1];
    }
  }

  Stepper make_stepper() const {
    return boost::numeric::odeint::make_controlled(1e-2 * tol_, 1e-2 * tol_,
                                                   boost::numeric::odeint::runge_kutta_fehlberg78<Vec>());
  }

  // Attempts one adaptive step; returns true and advances t on success.
  bool try_step(Stepper& stepper, Vec& x, double& t, double& dt) const {
    auto sys = [this](const Vec& xs, Vec& dxs, double) { rhs(xs, dxs); };
    return stepper.try_step(sys, x, t, dt) == boost::numeric::odeint::success;
  }

  void integrate(Vec& x, double duration) const {
    auto stepper = make_stepper();
    double t = 0.0;
    double dt = std::min(duration, initial_step());
    while (t < duration) {
      const bool clipped = t + dt >= duration;
      double trial = clipped ? duration - t : dt;
      if (try_step(stepper, x, t, trial)) {
        if (clipped) t = duration;
        else dt = trial;
      } else {
        dt = trial;
        if (dt < 1e-14 * std::max(1.0, duration))
          throw NumericalError("non-Hermitian propagation step size underflow");
      }
    }
  }

  double initial_step() const {
    const auto [lo, hi] = h_.gershgorin();
    double dmax = 0.0;
    for (double d : damping_) dmax = std::max(dmax, d);
    return 0.1 / (std::max(std::abs(lo), std::abs(hi)) + dmax + 1e-300);
  }

 private:
  ModelParams params_;
  MeasurementModel model_;
  double tol_;
  std::vector<double> l_right_;
  std::vector<double> l_left_;
  std::optional<UnitaryPropagator> unitary_;
  SymTridiagonal h_;
  std::vector<double> damping_;
};

namespace detail {

inline void record_sample(TrajectoryRecord& rec, double t, const QuantumState& s) {
  rec.sample_times.push_back(t);
  rec.z_series.push_back(z_of_state(s));
  rec.z2_series.push_back(z2_of_state(s));
  const auto phi = phi_of_state(s);
  rec.phi_series.push_back(phi.value_or(std::numeric_limits<double>::quiet_NaN()));
  rec.phi_defined.push_back(phi.has_value() ? 1 : 0);
}

inline double sample_time(const TrajectoryConfig& c, std::size_t i) {
  return c.t_max * static_cast<double>(i) / static_cast<double>(c.sample_count - 1);
}

inline Detector pick_detector(const JumpRates& r, double u) {
  return u * (r.right + r.left) < r.right ? Detector::right : Detector::left;
}

}  // namespace detail

// One step of the first-order unraveling: count probabilities from the
// current state, one uniform draw, at most one count per step.
inline std::optional<JumpEvent> step_first_order(QuantumState& state, double t, double dt,
                                                 ConditionalPropagator& prop, StreamRng& rng) {
  const auto rates = prop.rates(state);
  const double dp_r = rates.right * dt;
  const double dp_l = rates.left * dt;
  if (dp_r + dp_l >= 0.1) throw ConfigError("dt too large: count probability per step reached 0.1");
  const double u = rng.uniform();
  if (u < dp_r) {
    state = prop.jump(std::move(state), Detector::right);
    return JumpEvent{t + dt, Detector::right};
  }
  if (u < dp_r + dp_l) {
    state = prop.jump(std::move(state), Detector::left);
    return JumpEvent{t + dt, Detector::left};
  }
  prop.evolve_unnormalized(state, dt);
  state.normalize();
  return std::nullopt;
}

// Convenience overload with a freshly built propagator.
inline std::optional<JumpEvent> step_first_order(QuantumState& state, double t, const TrajectoryConfig& config,
                                                 StreamRng& rng) {
  config.validate();
  ConditionalPropagator prop(config.params, config.model, config.tol);
  return step_first_order(state, t, config.dt, prop, rng);
}

namespace detail {

inline TrajectoryRecord start_record(const TrajectoryConfig& config, const QuantumState& initial) {
  TrajectoryRecord rec;
  rec.config = config;
  rec.sample_times.reserve(config.sample_count);
  rec.z_series.reserve(config.sample_count);
  rec.z2_series.reserve(config.sample_count);
  rec.phi_series.reserve(config.sample_count);
  rec.phi_defined.reserve(config.sample_count);
  record_sample(rec, 0.0, initial);
  return rec;
}

inline void run_first_order(const TrajectoryConfig& config, QuantumState& psi, TrajectoryRecord& rec,
                            ConditionalPropagator& prop, StreamRng& rng) {
  // Steps land exactly on the sample grid.
  const double spacing = sample_time(config, 1);
  const auto substeps = static_cast<std::size_t>(std::ceil(spacing / config.dt - 1e-12));
  const double dt = spacing / static_cast<double>(substeps);
  double t = 0.0;
  for (std::size_t i = 1; i < config.sample_count; ++i) {
    const double t0 = sample_time(config, i - 1);
    for (std::size_t s = 0; s < substeps; ++s) {
      t = t0 + dt * static_cast<double>(s);
      if (auto ev = step_first_order(psi, t, dt, prop, rng)) {
        if (s + 1 == substeps) ev->time = sample_time(config, i);
        rec.jumps.push_back(*ev);
      }
    }
    record_sample(rec, sample_time(config, i), psi);
  }
}

// Linear model: the total count rate N Gamma is state independent, so count
// times form a Poisson process and the evolution between counts is unitary.
inline void run_poisson(const TrajectoryConfig& config, QuantumState& psi, TrajectoryRecord& rec,
                        ConditionalPropagator& prop, StreamRng& rng) {
  const double total = config.params.g_total();
  double t = 0.0;
  double next = total > 0.0 ? rng.exponential(total) : std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < config.sample_count; ++i) {
    const double target = sample_time(config, i);
    while (next <= target) {
      prop.evolve_unitary(psi, next - t);
      t = next;
      const Detector d = pick_detector(prop.rates(psi), rng.uniform());
      psi = prop.jump(std::move(psi), d);
      rec.jumps.push_back({t, d});
      next = t + rng.exponential(total);
    }
    prop.evolve_unitary(psi, target - t);
    t = target;
    record_sample(rec, t, psi);
  }
}

// State-dependent total rate: integrate the non-Hermitian evolution until the
// squared norm falls to a uniform threshold, bisecting the crossing time.
inline void run_norm_tracking(const TrajectoryConfig& config, QuantumState& psi, TrajectoryRecord& rec,
                              ConditionalPropagator& prop, StreamRng& rng) {
  using Vec = ConditionalPropagator::Vec;
  const double time_tol = 1e-10 * config.t_max;
  auto stepper = prop.make_stepper();
  Vec x = ConditionalPropagator::pack(psi);
  double threshold = rng.uniform();
  double t = 0.0;
  double dt = prop.initial_step();

  auto normalized = [&](const Vec& v) {
    QuantumState s = psi;
    ConditionalPropagator::unpack(v, s);
    s.normalize();
    return s;
  };

  for (std::size_t i = 1; i < config.sample_count; ++i) {
    const double target = sample_time(config, i);
    std::size_t guard = 0;
    while (t < target) {
      if (++guard > 100'000'000) throw NumericalError("norm-tracking sampler exceeded its step budget", t);
      const Vec x_prev = x;
      const double t_prev = t;
      const bool clipped = t + dt >= target;
      double trial = clipped ? target - t : dt;
      if (!prop.try_step(stepper, x, t, trial)) {
        dt = trial;
        if (dt < 1e-14 * config.t_max) throw NumericalError("norm-tracking step size underflow", t);
        continue;
      }
      if (clipped) t = target;
      else dt = trial;

      if (ConditionalPropagator::norm_squared(x) > threshold) continue;

      // Bracket [lo, hi] around the crossing.
      double lo = t_prev, hi = t;
      Vec x_lo = x_prev, x_hi = x;
      while (hi - lo > time_tol) {
        const double mid = 0.5 * (lo + hi);
        Vec x_mid = x_lo;
        prop.integrate(x_mid, mid - lo);
        if (ConditionalPropagator::norm_squared(x_mid) <= threshold) {
          hi = mid;
          x_hi = std::move(x_mid);
        } else {
          lo = mid;
          x_lo = std::move(x_mid);
        }
      }
      QuantumState s = normalized(x_hi);
      const Detector d = pick_detector(prop.rates(s), rng.uniform());
      s = prop.jump(std::move(s), d);
      rec.jumps.push_back({hi, d});
      x = ConditionalPropagator::pack(s);
      t = hi;
      threshold = rng.uniform();
    }
    record_sample(rec, t, normalized(x));
  }
  psi = normalized(x);
}

}  // namespace detail

inline TrajectoryRecord run_trajectory(const TrajectoryConfig& config, const QuantumState& initial) {
  config.validate();
  if (initial.n_atoms() != config.params.n_atoms) throw ConfigError("initial state dimension does not match n_atoms");
  if (std::abs(initial.norm_squared() - 1.0) > 1e-10) throw ConfigError("initial state must be normalized");

  StreamRng rng(config.seed, config.trajectory_index);
  QuantumState psi = initial;
  TrajectoryRecord rec = detail::start_record(config, psi);
  ConditionalPropagator prop(config.params, config.model, config.tol);

  if (config.algorithm == Algorithm::first_order) {
    detail::run_first_order(config, psi, rec, prop, rng);
  } else if (config.model.kind == MeasurementKind::linear) {
    detail::run_poisson(config, psi, rec, prop, rng);
  } else {
    detail::run_norm_tracking(config, psi, rec, prop, rng);
  }
  rec.final_state = std::move(psi);
  return rec;
}

struct EnsembleStats {
  std::vector<double> t;
  std::vector<double> z_mean, z_sem;
  std::vector<double> z2_mean, z2_sem;
  std::size_t n_traj = 0;
};

struct EnsembleResult {
  std::vector<TrajectoryRecord> records;  // filled only when requested
  std::vector<std::size_t> right_counts;
  std::vector<std::size_t> left_counts;
  std::vector<double> waiting_times;  // filled only when requested; gaps opening before t_max / 2
  EnsembleStats stats;
};

struct EnsembleOptions {
  bool keep_records = false;
  bool keep_waiting_times = false;
  unsigned threads = 0;  // 0: hardware concurrency
};

// Trajectory i uses stream (seed, trajectory_index + i). Results are reduced
// in index order, so they do not depend on the thread count.
inline EnsembleResult run_ensemble(const TrajectoryConfig& config, const QuantumState& initial, std::size_t n_traj,
                                   const EnsembleOptions& opt = {}) {
  if (n_traj < 1) throw ConfigError("n_traj must be >= 1");
  config.validate();
  unsigned threads = opt.threads ? opt.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n_traj));

  const std::size_t samples = config.sample_count;
  std::vector<MeanAccumulator> z_acc(samples), z2_acc(samples);
  EnsembleResult out;
  out.right_counts.reserve(n_traj);
  out.left_counts.reserve(n_traj);

  const std::size_t block = static_cast<std::size_t>(threads) * 8;
  for (std::size_t start = 0; start < n_traj; start += block) {
    const std::size_t count = std::min(block, n_traj - start);
    std::vector<std::optional<TrajectoryRecord>> slot(count);
    std::vector<std::exception_ptr> errors(count);
    auto work = [&](unsigned w) {
      for (std::size_t j = w; j < count; j += threads) {
        try {
          TrajectoryConfig c = config;
          c.trajectory_index = config.trajectory_index + start + j;
          slot[j] = run_trajectory(c, initial);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      }
    };
    if (threads == 1) {
      work(0);
    } else {
      std::vector<std::jthread> pool;
      for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w);
    }
    for (std::size_t j = 0; j < count; ++j) {
      if (errors[j]) std::rethrow_exception(errors[j]);
      auto& rec = *slot[j];
      for (std::size_t i = 0; i < samples; ++i) {
        z_acc[i].add(rec.z_series[i]);
        z2_acc[i].add(rec.z2_series[i]);
      }
      std::size_t right = 0;
      for (const auto& ev : rec.jumps) right += ev.detector == Detector::right;
      out.right_counts.push_back(right);
      out.left_counts.push_back(rec.jumps.size() - right);
      if (opt.keep_waiting_times) {
        // Only gaps that open before t_max / 2: the choice depends on the past
        // alone, so the kept gaps are unbiased, unlike "all completed gaps",
        // which drops the censored last one.
        double prev = 0.0;
        for (const auto& ev : rec.jumps) {
          if (prev > 0.5 * config.t_max) break;
          out.waiting_times.push_back(ev.time - prev);
          prev = ev.time;
        }
      }
      if (opt.keep_records) out.records.push_back(std::move(rec));
    }
  }

  auto& st = out.stats;
  st.n_traj = n_traj;
  for (std::size_t i = 0; i < samples; ++i) {
    st.t.push_back(detail::sample_time(config, i));
    st.z_mean.push_back(z_acc[i].mean());
    st.z_sem.push_back(z_acc[i].sem());
    st.z2_mean.push_back(z2_acc[i].mean());
    st.z2_sem.push_back(z2_acc[i].sem());
  }
  return out;
}

}  // namespace dwtraj

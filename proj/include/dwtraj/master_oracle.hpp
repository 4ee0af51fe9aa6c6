#pragma once

// Dense Lindblad propagation on the fixed-N sector, for validating trajectory
// averages at small N.

#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>

#include "dwtraj/errors.hpp"
#include "dwtraj/fock_space.hpp"
#include "dwtraj/trajectory_engine.hpp"

namespace dwtraj {

using DensityMatrix = Eigen::MatrixXcd;

inline constexpr int kMaxMasterAtoms = 256;

inline DensityMatrix pure_density(const QuantumState& s) {
  Eigen::VectorXcd v(static_cast<Eigen::Index>(s.dim()));
  for (std::size_t k = 0; k < s.dim(); ++k) v(static_cast<Eigen::Index>(k)) = s[k];
  return v * v.adjoint();
}

// Conjugation by the well-exchange reflection k <-> N - k.
inline DensityMatrix reflect(const DensityMatrix& rho) { return rho.reverse(); }

inline Eigen::MatrixXd dense_hamiltonian(const ModelParams& p) {
  const auto h = build_hamiltonian(p);
  const auto n = static_cast<Eigen::Index>(h.size());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index k = 0; k < n; ++k) m(k, k) = h.diag[static_cast<std::size_t>(k)];
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    m(k, k + 1) = h.offdiag[static_cast<std::size_t>(k)];
    m(k + 1, k) = h.offdiag[static_cast<std::size_t>(k)];
  }
  return m;
}

// Generator pieces, assembled once per propagation.
class Lindbladian {
 public:
  Lindbladian(const ModelParams& p, const MeasurementModel& m) {
    p.validate();
    h_ = dense_hamiltonian(p).cast<Complex>();
    for (Detector d : {Detector::right, Detector::left}) {
      const auto diag = jump_operator_diagonal(m, p, d);
      Eigen::VectorXd v(static_cast<Eigen::Index>(diag.size()));
      for (std::size_t k = 0; k < diag.size(); ++k) v(static_cast<Eigen::Index>(k)) = diag[k];
      jumps_.push_back(v.asDiagonal().toDenseMatrix().cast<Complex>());
    }
  }

  // -i[H, rho] + sum_i (2 L rho L^+ - L^+ L rho - rho L^+ L)
  DensityMatrix operator()(const DensityMatrix& rho) const {
    constexpr Complex i{0.0, 1.0};
    DensityMatrix out = -i * (h_ * rho - rho * h_);
    for (const auto& l : jumps_) {
      const DensityMatrix ll = l.adjoint() * l;
      out += 2.0 * l * rho * l.adjoint() - ll * rho - rho * ll;
    }
    return out;
  }

 private:
  Eigen::MatrixXcd h_;
  std::vector<Eigen::MatrixXcd> jumps_;
};

inline DensityMatrix lindblad_rhs(const DensityMatrix& rho, const ModelParams& p, const MeasurementModel& m) {
  return Lindbladian(p, m)(rho);
}

struct DensityDiagnostics {
  double hermiticity_error;
  double trace_error;
  double min_eigenvalue;
};

inline DensityDiagnostics diagnose(const DensityMatrix& rho) {
  const double herm = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  const double tr = std::abs(rho.trace() - Complex(1.0, 0.0));
  const DensityMatrix hermitian = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(hermitian, Eigen::EigenvaluesOnly);
  return {herm, tr, es.eigenvalues().minCoeff()};
}

inline double z_of_density(const DensityMatrix& rho) {
  const auto n = rho.rows() - 1;
  double z = 0.0;
  for (Eigen::Index k = 0; k <= n; ++k) z += (2.0 * k - n) / n * rho(k, k).real();
  return z;
}

inline double z2_of_density(const DensityMatrix& rho) {
  const auto n = rho.rows() - 1;
  double z2 = 0.0;
  for (Eigen::Index k = 0; k <= n; ++k) {
    const double zk = (2.0 * k - n) / static_cast<double>(n);
    z2 += zk * zk * rho(k, k).real();
  }
  return z2;
}

inline double purity(const DensityMatrix& rho) { return rho.cwiseAbs2().sum(); }

inline std::optional<double> phi_of_density(const DensityMatrix& rho) {
  const auto n = rho.rows() - 1;
  Complex c = 0.0;
  for (Eigen::Index k = 1; k <= n; ++k) c += std::sqrt(static_cast<double>(k * (n - k + 1))) * rho(k, k - 1);
  if (std::abs(c) < kCoherenceFloor) return std::nullopt;
  return wrap_phase(std::arg(c));
}

struct MasterSeries {
  std::vector<double> t;
  std::vector<double> z;
  std::vector<double> z2;
  std::vector<double> purity;
  std::vector<std::optional<double>> phi;
  std::vector<DensityMatrix> rho;  // filled only when requested
};

struct MasterOptions {
  bool keep_rho = true;
  double drift_tol = 1e-10;  // allowed trace and Hermiticity drift per accepted step
};

// Adaptive propagation; after each accepted step the matrix is re-Hermitized,
// and steps that drift in trace or Hermiticity are rejected.
inline MasterSeries propagate_master(const DensityMatrix& rho0, const ModelParams& p, const MeasurementModel& m,
                                     double t_max, std::size_t sample_count, double tol,
                                     const MasterOptions& opt = {}) {
  namespace ode = boost::numeric::odeint;
  p.validate();
  if (p.n_atoms > kMaxMasterAtoms)
    throw ConfigError("master equation oracle is limited to n_atoms <= " + std::to_string(kMaxMasterAtoms));
  const auto dim = static_cast<Eigen::Index>(p.n_atoms) + 1;
  if (rho0.rows() != dim || rho0.cols() != dim) throw ConfigError("density matrix dimension does not match n_atoms");
  if (!(t_max > 0.0)) throw ConfigError("t_max must be > 0");
  if (sample_count < 2) throw ConfigError("sample_count must be >= 2");
  if (!(tol > 0.0)) throw ConfigError("tol must be > 0");

  using Vec = std::vector<double>;
  const Lindbladian gen(p, m);
  auto as_matrix = [dim](Vec& x) {
    return Eigen::Map<DensityMatrix>(reinterpret_cast<Complex*>(x.data()), dim, dim);
  };
  auto as_const_matrix = [dim](const Vec& x) {
    return Eigen::Map<const DensityMatrix>(reinterpret_cast<const Complex*>(x.data()), dim, dim);
  };
  auto system = [&](const Vec& x, Vec& dx, double) {
    dx.resize(x.size());
    as_matrix(dx) = gen(as_const_matrix(x));
  };

  Vec x(static_cast<std::size_t>(2 * dim * dim));
  as_matrix(x) = rho0;

  MasterSeries out;
  auto record = [&](double t) {
    const DensityMatrix rho = as_const_matrix(x);
    out.t.push_back(t);
    out.z.push_back(z_of_density(rho));
    out.z2.push_back(z2_of_density(rho));
    out.purity.push_back(purity(rho));
    out.phi.push_back(phi_of_density(rho));
    if (opt.keep_rho) out.rho.push_back(rho);
  };
  record(0.0);

  auto stepper = ode::make_controlled(tol, tol, ode::runge_kutta_fehlberg78<Vec>());
  const double h_scale = std::max(1.0, dense_hamiltonian(p).cwiseAbs().rowwise().sum().maxCoeff());
  double dt = 0.1 / h_scale;
  double t = 0.0;
  for (std::size_t i = 1; i < sample_count; ++i) {
    const double target = t_max * static_cast<double>(i) / static_cast<double>(sample_count - 1);
    while (t < target) {
      const Vec saved = x;
      const double t_before = t;
      const bool clipped = t + dt >= target;
      double trial = clipped ? target - t : dt;
      if (stepper.try_step(system, x, t, trial) != ode::success) {
        dt = trial;
        if (dt < 1e-14 * t_max) throw NumericalError("master equation step size underflow", t);
        continue;
      }
      auto rho = as_matrix(x);
      const double trace_drift = std::abs(rho.trace() - as_const_matrix(saved).trace());
      const double herm_drift = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
      if (trace_drift > opt.drift_tol || herm_drift > opt.drift_tol) {
        x = saved;
        t = t_before;
        dt = 0.5 * (clipped ? target - t : trial);
        if (dt < 1e-14 * t_max) throw NumericalError("master equation cannot hold trace and Hermiticity", t);
        continue;
      }
      const DensityMatrix sym = 0.5 * (DensityMatrix(rho) + DensityMatrix(rho.adjoint()));
      rho = sym;
      if (clipped) t = target;
      else dt = trial;
    }
    record(target);
  }
  return out;
}

}  // namespace dwtraj

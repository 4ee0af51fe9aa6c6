#pragma once

// Real symmetric tridiagonal matrices: Sturm-sequence eigenvalues, inverse
// iteration for eigenvectors, and Chebyshev propagation of exp(-iHt).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dwtraj/errors.hpp"

namespace dwtraj {

using Complex = std::complex<double>;

struct SymTridiagonal {
  std::vector<double> diag;
  std::vector<double> offdiag;  // offdiag[k] couples k and k+1

  std::size_t size() const { return diag.size(); }

  // y = T x
  void apply(std::span<const Complex> x, std::span<Complex> y) const {
    const std::size_t n = diag.size();
    if (n == 1) {
      y[0] = diag[0] * x[0];
      return;
    }
    y[0] = diag[0] * x[0] + offdiag[0] * x[1];
    for (std::size_t i = 1; i + 1 < n; ++i) {
      y[i] = offdiag[i - 1] * x[i - 1] + diag[i] * x[i] + offdiag[i] * x[i + 1];
    }
    y[n - 1] = offdiag[n - 2] * x[n - 2] + diag[n - 1] * x[n - 1];
  }

  std::vector<Complex> apply(std::span<const Complex> x) const {
    std::vector<Complex> y(x.size());
    apply(x, y);
    return y;
  }

  // Gershgorin enclosure of the spectrum.
  std::pair<double, double> gershgorin() const {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < diag.size(); ++i) {
      double r = 0.0;
      if (i > 0) r += std::abs(offdiag[i - 1]);
      if (i < offdiag.size()) r += std::abs(offdiag[i]);
      lo = std::min(lo, diag[i] - r);
      hi = std::max(hi, diag[i] + r);
    }
    return {lo, hi};
  }
};

// Number of eigenvalues strictly less than x.
inline std::size_t sturm_count(const SymTridiagonal& t, double x) {
  const auto [glo, ghi] = t.gershgorin();
  const double pivmin = std::numeric_limits<double>::min() / std::numeric_limits<double>::epsilon() +
                        std::numeric_limits<double>::epsilon() * std::max(std::abs(glo), std::abs(ghi));
  std::size_t count = 0;
  double q = t.diag[0] - x;
  if (std::abs(q) < pivmin) q = -pivmin;
  if (q < 0) ++count;
  for (std::size_t i = 1; i < t.size(); ++i) {
    const double e = t.offdiag[i - 1];
    q = t.diag[i] - x - e * e / q;
    if (std::abs(q) < pivmin) q = -pivmin;
    if (q < 0) ++count;
  }
  return count;
}

// k-th smallest eigenvalue (k = 0 is the lowest) by bisection to full precision.
inline double eigenvalue_by_bisection(const SymTridiagonal& t, std::size_t k) {
  auto [lo, hi] = t.gershgorin();
  const double scale = std::max({std::abs(lo), std::abs(hi), std::numeric_limits<double>::min()});
  lo -= 1e-14 * scale;
  hi += 1e-14 * scale;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (hi - lo <= 2.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi)))
      break;
    if (sturm_count(t, mid) > k) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Lowest and highest eigenvalue, padded outward so they safely enclose the spectrum.
inline std::pair<double, double> spectral_bounds(const SymTridiagonal& t) {
  const double lo = eigenvalue_by_bisection(t, 0);
  const double hi = eigenvalue_by_bisection(t, t.size() - 1);
  const double pad = 1e-10 * std::max({std::abs(lo), std::abs(hi), hi - lo}) + 1e-300;
  return {lo - pad, hi + pad};
}

struct EigenPair {
  double value;
  std::vector<double> vector;
};

// Lowest eigenpair. The eigenvalue comes from bisection; the eigenvector from
// inverse iteration with a shift just below it, so T - shift is positive
// definite and the LDL^T sweep needs no pivoting.
inline EigenPair lowest_eigenpair(const SymTridiagonal& t, double residual_tol = 1e-10) {
  const std::size_t n = t.size();
  if (n == 1) return {t.diag[0], {1.0}};

  const double lambda0 = eigenvalue_by_bisection(t, 0);
  const double lambda1 = eigenvalue_by_bisection(t, 1);
  const auto [glo, ghi] = t.gershgorin();
  const double norm = std::max(std::abs(glo), std::abs(ghi));
  const double gap = lambda1 - lambda0;
  const double delta = std::max(1e-3 * gap, 1e-13 * norm);
  const double shift = lambda0 - delta;

  // Factor T - shift = L D L^T once.
  std::vector<double> d(n), l(n - 1);
  d[0] = t.diag[0] - shift;
  for (std::size_t i = 1; i < n; ++i) {
    l[i - 1] = t.offdiag[i - 1] / d[i - 1];
    d[i] = t.diag[i] - shift - l[i - 1] * t.offdiag[i - 1];
  }

  std::vector<double> x(n, 1.0);
  std::vector<double> hx(n);
  auto normalize = [](std::vector<double>& v) {
    double s = 0.0;
    for (double a : v) s += a * a;
    s = std::sqrt(s);
    for (double& a : v) a /= s;
  };
  normalize(x);

  const int max_iter = 200;
  for (int it = 0; it < max_iter; ++it) {
    // Solve L D L^T y = x in place.
    for (std::size_t i = 1; i < n; ++i) x[i] -= l[i - 1] * x[i - 1];
    for (std::size_t i = 0; i < n; ++i) x[i] /= d[i];
    for (std::size_t i = n - 1; i-- > 0;) x[i] -= l[i] * x[i + 1];
    normalize(x);

    // Rayleigh quotient and residual.
    double rq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double v = t.diag[i] * x[i];
      if (i > 0) v += t.offdiag[i - 1] * x[i - 1];
      if (i + 1 < n) v += t.offdiag[i] * x[i + 1];
      hx[i] = v;
      rq += x[i] * v;
    }
    double res = 0.0;
    for (std::size_t i = 0; i < n; ++i) res += (hx[i] - rq * x[i]) * (hx[i] - rq * x[i]);
    if (std::sqrt(res) <= residual_tol * norm && it >= 1) return {rq, x};
  }
  throw NumericalError("inverse iteration did not reach the eigenresidual bound");
}

// Bessel functions J_0(a) .. J_K(a) by Miller's backward recurrence,
// truncated once the terms beyond order a fall below tol.
inline std::vector<double> bessel_j_sequence(double a, double tol) {
  if (a == 0.0) return {1.0};
  const auto top = static_cast<std::size_t>(a + 20.0 * std::cbrt(a) + 40.0) | 1u;
  std::vector<double> j(top + 2, 0.0);
  j[top] = 1e-300;
  for (std::size_t k = top; k >= 1; --k) {
    j[k - 1] = (2.0 * static_cast<double>(k) / a) * j[k] - j[k + 1];
    if (std::abs(j[k - 1]) > 1e250) {
      for (std::size_t m = k - 1; m <= top; ++m) j[m] *= 1e-250;
    }
  }
  double norm = j[0];
  for (std::size_t k = 2; k <= top; k += 2) norm += 2.0 * j[k];
  for (double& v : j) v /= norm;

  std::size_t last = 0;
  for (std::size_t k = 0; k <= top; ++k) {
    if (std::abs(j[k]) > 0.125 * tol || static_cast<double>(k) <= a) last = k;
  }
  j.resize(last + 2);
  return j;
}

// exp(-i H t) for a fixed real symmetric tridiagonal H. The spectrum is mapped
// to [-1, 1] and the exponential expanded in Chebyshev polynomials; long
// intervals are split so the Bessel argument per segment stays bounded.
class ChebyshevPropagator {
 public:
  ChebyshevPropagator(SymTridiagonal h, double tol) : h_(std::move(h)), tol_(tol) {
    if (!(tol > 0.0)) throw ConfigError("propagation tolerance must be positive");
    const auto [lo, hi] = spectral_bounds(h_);
    center_ = 0.5 * (hi + lo);
    radius_ = std::max(0.5 * (hi - lo), 1e-300);
    const double s = 2.0 / radius_;
    scaled_diag_.resize(h_.size());
    scaled_off_.resize(h_.offdiag.size());
    for (std::size_t i = 0; i < h_.size(); ++i) scaled_diag_[i] = s * (h_.diag[i] - center_);
    for (std::size_t i = 0; i < h_.offdiag.size(); ++i) scaled_off_[i] = s * h_.offdiag[i];
    work_.resize(3 * h_.size());
  }

  const SymTridiagonal& hamiltonian() const { return h_; }
  double tolerance() const { return tol_; }
  double spectral_radius() const { return radius_; }

  // Number of matrix-vector products performed so far.
  std::size_t matvec_count() const { return matvecs_; }

  // psi <- exp(-i H dt) psi. Not thread-safe on a shared instance (scratch
  // buffers are members); copy the propagator per thread.
  void propagate(std::span<Complex> psi, double dt) {
    if (dt < 0.0) throw ConfigError("propagation duration must be nonnegative");
    if (dt == 0.0) return;
    const double total_arg = radius_ * dt;
    const auto segments = static_cast<std::size_t>(std::ceil(total_arg / kMaxArgument));
    const double seg_dt = dt / static_cast<double>(std::max<std::size_t>(segments, 1));
    for (std::size_t s = 0; s < std::max<std::size_t>(segments, 1); ++s) segment(psi, seg_dt);
    for (const Complex& c : psi) {
      if (!std::isfinite(c.real()) || !std::isfinite(c.imag()))
        throw NumericalError("non-finite amplitude during Chebyshev propagation");
    }
  }

 private:
  static constexpr double kMaxArgument = 250.0;

  // acc += coeff * (-i)^k * v
  static void accumulate(Complex& acc, double coeff, std::size_t k, const Complex& v) {
    switch (k & 3u) {
      case 0: acc += coeff * v; break;
      case 1: acc += Complex(coeff * v.imag(), -coeff * v.real()); break;
      case 2: acc -= coeff * v; break;
      default: acc += Complex(-coeff * v.imag(), coeff * v.real()); break;
    }
  }

  void segment(std::span<Complex> psi, double dt) {
    const std::size_t n = h_.size();
    const auto coeffs = bessel_j_sequence(radius_ * dt, tol_);
    Complex* prev = work_.data();
    Complex* curr = work_.data() + n;
    Complex* acc = work_.data() + 2 * n;
    const double* d = scaled_diag_.data();
    const double* e = scaled_off_.data();

    for (std::size_t i = 0; i < n; ++i) {
      prev[i] = psi[i];
      acc[i] = coeffs[0] * psi[i];
    }
    if (coeffs.size() > 1) {
      // T_1(X) psi = X psi, with the scaled matrix holding 2X.
      mat_step(d, e, prev, nullptr, curr, 0.5, n);
      ++matvecs_;
      for (std::size_t i = 0; i < n; ++i) accumulate(acc[i], 2.0 * coeffs[1], 1, curr[i]);
      for (std::size_t k = 2; k < coeffs.size(); ++k) {
        // prev <- 2X curr - prev, then swap roles.
        mat_step(d, e, curr, prev, prev, 1.0, n);
        ++matvecs_;
        std::swap(prev, curr);
        const double c = 2.0 * coeffs[k];
        for (std::size_t i = 0; i < n; ++i) accumulate(acc[i], c, k, curr[i]);
      }
    }
    const Complex phase = std::polar(1.0, -center_ * dt);
    for (std::size_t i = 0; i < n; ++i) psi[i] = phase * acc[i];
  }

  // out = scale * (2X) x - sub, where sub may alias out.
  static void mat_step(const double* d, const double* e, const Complex* x, const Complex* sub,
                       Complex* out, double scale, std::size_t n) {
    if (n == 1) {
      const Complex v = scale * d[0] * x[0];
      out[0] = sub ? v - sub[0] : v;
      return;
    }
    for (std::size_t i = 0; i < n; ++i) {
      Complex v = d[i] * x[i];
      if (i > 0) v += e[i - 1] * x[i - 1];
      if (i + 1 < n) v += e[i] * x[i + 1];
      v *= scale;
      out[i] = sub ? v - sub[i] : v;
    }
  }

  SymTridiagonal h_;
  double tol_;
  double center_ = 0.0;
  double radius_ = 1.0;
  std::vector<double> scaled_diag_;
  std::vector<double> scaled_off_;
  std::vector<Complex> work_;
  std::size_t matvecs_ = 0;
};

}  // namespace dwtraj

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace dwtraj {

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// Mean and standard error of the mean from accumulated first and second moments.
class MeanAccumulator {
 public:
  void add(double x) {
    s1_.add(x);
    s2_.add(x * x);
    ++n_;
  }
  std::size_t count() const { return n_; }
  double mean() const { return n_ ? s1_.value() / static_cast<double>(n_) : 0.0; }
  double variance() const {
    if (n_ < 2) return 0.0;
    const double m = mean();
    const double v = (s2_.value() - static_cast<double>(n_) * m * m) / static_cast<double>(n_ - 1);
    return std::max(v, 0.0);
  }
  double sem() const { return n_ ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

 private:
  CompensatedSum s1_;
  CompensatedSum s2_;
  std::size_t n_ = 0;
};

// Asymptotic Kolmogorov survival function Q(lambda) = 2 sum (-1)^(k-1) exp(-2 k^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum)) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic;
  double p_value;
};

// One-sample KS test of the samples against Exponential(rate).
inline KsResult ks_test_exponential(std::vector<double> samples, double rate) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = 1.0 - std::exp(-rate * samples[i]);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_q((sn + 0.12 + 0.11 / sn) * d)};
}

}  // namespace dwtraj

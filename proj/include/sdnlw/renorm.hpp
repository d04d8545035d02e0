#pragma once

// Renormalization constants of the truncated model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sdnlw/spectral.hpp"

namespace sdnlw {

enum class Regime { strong, weak };

inline std::string to_string(Regime r) { return r == Regime::strong ? "strong" : "weak"; }

/// Lattice points of the ball |n| <= N grouped by |n|^2.
class BallShells {
 public:
  explicit BallShells(int N) : N_(N) {
    if (N < 0) throw std::invalid_argument("BallShells: N must be >= 0");
    const std::int64_t R2 = std::int64_t{N} * N;
    std::vector<std::uint32_t> count(static_cast<std::size_t>(R2) + 1, 0);
    for (std::int64_t a = 0; a <= N; ++a) {
      const std::int64_t a2 = a * a;
      const std::int64_t bmax = static_cast<std::int64_t>(std::sqrt(static_cast<double>(R2 - a2))) + 1;
      for (std::int64_t b = 0; b <= bmax; ++b) {
        const std::int64_t r = a2 + b * b;
        if (r > R2) break;
        // (a, b) with both signs; axes counted once per sign
        count[r] += (a == 0 ? 1u : 2u) * (b == 0 ? 1u : 2u);
      }
    }
    for (std::int64_t r = 0; r <= R2; ++r)
      if (count[r] != 0) shells_.emplace_back(static_cast<double>(r), static_cast<double>(count[r]));
    for (const auto& s : shells_) modes_ += static_cast<std::int64_t>(s.second);
  }

  int N() const { return N_; }
  std::int64_t mode_count() const { return modes_; }
  const std::vector<std::pair<double, double>>& shells() const { return shells_; }

  /// sum over the ball of f(|n|^2), Neumaier-compensated, largest shells first.
  template <class F>
  double sum(F&& f) const {
    double s = 0.0, c = 0.0;
    for (auto it = shells_.rbegin(); it != shells_.rend(); ++it) {
      const double t = it->second * f(it->first);
      const double u = s + t;
      c += std::abs(s) >= std::abs(t) ? (s - u) + t : (t - u) + s;
      s = u;
    }
    return s + c;
  }

 private:
  int N_;
  std::int64_t modes_ = 0;
  std::vector<std::pair<double, double>> shells_;
};

inline double mode_sum(double lambda, const BallShells& ball) {
  if (!(lambda > 0.0)) throw std::invalid_argument("mode_sum: lambda must be > 0");
  return ball.sum([lambda](double r2) { return 1.0 / (lambda + r2); });
}

/// sum_{|n| <= N} 1/(lambda + |n|^2).
inline double mode_sum(double lambda, int N) { return mode_sum(lambda, BallShells(N)); }

/// 3 alpha^2 / (8 pi^2), the prefactor of the fixed-point equation.
inline double lambda_prefactor(double alpha) { return 3.0 * alpha * alpha / (8.0 * kPi * kPi); }

struct LambdaSolution {
  double lambda = 0.0;
  double residual = 0.0;
  int iterations = 0;
};

/// Bisection for lambda = c * sum 1/(lambda + |n|^2), c = 3 alpha^2 / 8pi^2.
/// Every term is below 1/lambda, so lambda^2 <= c * #modes; the lower end
/// uses lambda + |n|^2 <= hi + N^2.
inline LambdaSolution solve_lambda_detailed(double alpha, const BallShells& ball) {
  if (alpha == 0.0 || !std::isfinite(alpha)) throw std::invalid_argument("solve_lambda: alpha must be nonzero");
  if (ball.N() < 1) throw std::invalid_argument("solve_lambda: N must be >= 1");
  const double c = lambda_prefactor(alpha);
  const double cm = c * static_cast<double>(ball.mode_count());
  const double n2 = static_cast<double>(ball.N()) * ball.N();
  auto g = [&](double l) { return l - c * mode_sum(l, ball); };

  double hi = std::sqrt(cm);
  double lo = cm / (hi + n2);
  if (g(lo) > 0.0 || g(hi) < 0.0) throw std::runtime_error("solve_lambda: bracket does not enclose the root");

  constexpr int kMaxIter = 200;
  int it = 0;
  for (; it < kMaxIter; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    (g(mid) > 0.0 ? hi : lo) = mid;
  }
  if (it == kMaxIter) throw std::runtime_error("solve_lambda: no convergence");
  const double glo = g(lo), ghi = g(hi);
  LambdaSolution out;
  out.lambda = std::abs(glo) <= std::abs(ghi) ? lo : hi;
  out.residual = std::min(std::abs(glo), std::abs(ghi));
  out.iterations = it;
  return out;
}

inline double solve_lambda(double alpha, int N) {
  return solve_lambda_detailed(alpha, BallShells(N)).lambda;
}

struct RenormConstants {
  int N = 0;
  double alpha = 0.0;
  double lambda = 0.0;  // mass in the linear flow
  double sigma = 0.0;   // pointwise variance of the stationary z_N
  Regime regime = Regime::strong;
  double damping = 1.0;
};

/// (alpha^2 / 8pi^2) sum 1/<n>_N^2 with <n>_N^2 = lambda + |n|^2.
inline double sigma_strong(const RenormConstants& rc) {
  return rc.alpha * rc.alpha / (8.0 * kPi * kPi * rc.damping) * mode_sum(rc.lambda, rc.N);
}

/// (alpha^2 / 8pi^2) sum 1/<n>^2.
inline double sigma_weak(double alpha, int N) {
  if (N < 0) throw std::invalid_argument("sigma_weak: N must be >= 0");
  if (alpha == 0.0) return 0.0;
  return alpha * alpha / (8.0 * kPi * kPi) * mode_sum(1.0, N);
}

/// Strong regime. With damping a the stationary variance carries 1/a, so
/// lambda solves the usual equation with alpha^2 replaced by alpha^2 / a.
inline RenormConstants strong_constants(double alpha, int N, double damping = 1.0) {
  if (!(damping > 0.0)) throw std::invalid_argument("strong_constants: damping must be > 0");
  RenormConstants rc{N, alpha, 0.0, 0.0, Regime::strong, damping};
  if (alpha == 0.0) return rc;
  rc.lambda = solve_lambda(alpha / std::sqrt(damping), N);
  rc.sigma = rc.lambda / 3.0;
  return rc;
}

/// Weak regime: lambda = 1 in the flow, sigma from the untouched symbol <n>.
inline RenormConstants weak_constants(double alpha, int N, double damping = 1.0) {
  if (!(damping > 0.0)) throw std::invalid_argument("weak_constants: damping must be > 0");
  return RenormConstants{N, alpha, 1.0, sigma_weak(alpha, N) / damping, Regime::weak, damping};
}

/// (3/4pi) alpha^2 log N.
inline double asymptotic_reference(double alpha, int N) {
  if (N < 2) throw std::invalid_argument("asymptotic_reference: N must be >= 2");
  return 3.0 / (4.0 * kPi) * alpha * alpha * std::log(static_cast<double>(N));
}

struct LogSumBound {
  double lhs = 0.0;
  double rhs = 0.0;
};

/// |sum 1/(a + |n|^2) - pi log(1 + N^2/a)| against a^{-1/2} min(1, N a^{-1/2}).
inline LogSumBound log_sum_bound_check(double a, int N) {
  if (a < 1.0 || N < 1) throw std::invalid_argument("log_sum_bound_check: need a >= 1, N >= 1");
  const double n = static_cast<double>(N);
  LogSumBound out;
  out.lhs = std::abs(mode_sum(a, N) - kPi * std::log1p(n * n / a));
  out.rhs = std::min(1.0, n / std::sqrt(a)) / std::sqrt(a);
  return out;
}

inline double beta_n(double sigma, double kappa) { return 3.0 * (sigma - kappa * kappa / (4.0 * kPi)); }

/// H_k(x; sigma) from H_{k+1} = x H_k - k sigma H_{k-1}.
inline double hermite(int k, double x, double sigma) {
  if (k < 0) throw std::invalid_argument("hermite: k must be >= 0");
  double hm = 1.0;
  if (k == 0) return hm;
  double h = x;
  for (int j = 1; j < k; ++j) {
    const double next = x * h - j * sigma * hm;
    hm = h;
    h = next;
  }
  return h;
}

struct WickCoefficients {
  int k = 1;
  std::vector<double> coeffs;
};

/// c_j = binom(2k+1, 2j) (2j-1)!!, so that u^{2k+1} = sum_j c_j sigma^j H_{2k+1-2j}(u; sigma).
inline WickCoefficients wick_coefficients(int k) {
  if (k < 1) throw std::invalid_argument("wick_coefficients: k must be >= 1");
  WickCoefficients w{k, {}};
  const int n = 2 * k + 1;
  double binom = 1.0;  // binom(n, i)
  double dfact = 1.0;  // (2j-1)!!
  for (int i = 0; i <= 2 * k; ++i) {
    if (i % 2 == 0) {
      const int j = i / 2;
      if (j > 0) dfact *= 2 * j - 1;
      w.coeffs.push_back(binom * dfact);
    }
    binom = binom * (n - i) / (i + 1);
  }
  return w;
}

}  // namespace sdnlw

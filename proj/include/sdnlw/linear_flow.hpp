#pragma once

// Mode-wise solution of the modified damped wave flow
//   u'' + a u' + (lambda + |n|^2) u = alpha dbeta_n / dt
// and exact Gaussian sampling of its transition over a step.
//
// With j^2 = lambda + |n|^2 and mu = j^2 - a^2/4 the homogeneous kernel is
//   g(t) = exp(-a t/2) S(t),  S(t) = sin(sqrt(mu) t) / sqrt(mu)
// (sinh for mu < 0, t for mu = 0), g(0) = 0, g'(0) = 1.

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sdnlw/noise.hpp"
#include "sdnlw/renorm.hpp"
#include "sdnlw/spectral.hpp"

namespace sdnlw {

struct ModeSymbols {
  int N = 0;
  double lambda = 0.0;
  double damping = 1.0;

  /// <n>_N^2 = lambda + |n|^2.
  double jn2(std::int64_t norm2) const { return lambda + static_cast<double>(norm2); }
  double jn(Mode m) const { return std::sqrt(jn2(m.norm2())); }
  /// D_N(n)^2 = <n>_N^2 - a^2/4; negative means the mode is overdamped.
  double dn2(std::int64_t norm2) const { return jn2(norm2) - 0.25 * damping * damping; }
  /// D_N(n) when real, else the growth rate of the overdamped branch (as a negative number).
  double dN(Mode m) const {
    const double d2 = dn2(m.norm2());
    return d2 >= 0.0 ? std::sqrt(d2) : -std::sqrt(-d2);
  }
};

inline ModeSymbols propagator_symbols(const RenormConstants& rc) { return {rc.N, rc.lambda, rc.damping}; }

/// g(t) and g'(t) for one mode.
struct Kernel {
  double g = 0.0;
  double dg = 1.0;
};

inline Kernel kernel(double j2, double a, double t) {
  const double mu = j2 - 0.25 * a * a;
  const double x = mu * t * t;
  double S, C;
  if (std::abs(x) < 1e-2) {
    // S = t sum (-x)^k/(2k+1)!, C = sum (-x)^k/(2k)!
    double ts = 1.0, tc = 1.0;
    S = 1.0;
    C = 1.0;
    for (int k = 1; k <= 8; ++k) {
      tc *= -x / ((2.0 * k - 1.0) * (2.0 * k));
      ts *= -x / ((2.0 * k) * (2.0 * k + 1.0));
      C += tc;
      S += ts;
    }
    S *= t;
  } else if (mu > 0.0) {
    const double w = std::sqrt(mu);
    S = std::sin(w * t) / w;
    C = std::cos(w * t);
  } else {
    const double w = std::sqrt(-mu);
    S = std::sinh(w * t) / w;
    C = std::cosh(w * t);
  }
  const double e = std::exp(-0.5 * a * t);
  return {e * S, e * (C - 0.5 * a * S)};
}

using Mat2 = std::array<double, 4>;  // row-major

/// E(t): (u, u') at time 0 to the homogeneous solution at time t.
inline Mat2 flow_matrix(double j2, double a, double t) {
  const Kernel k = kernel(j2, a, t);
  return {k.dg + a * k.g, k.g, -j2 * k.g, k.dg};
}

inline Mat2 mat_mul(const Mat2& A, const Mat2& B) {
  return {A[0] * B[0] + A[1] * B[2], A[0] * B[1] + A[1] * B[3], A[2] * B[0] + A[3] * B[2],
          A[2] * B[1] + A[3] * B[3]};
}

/// Symmetric 2x2 stored as (pp, pv, vv).
struct Cov2 {
  double pp = 0.0;
  double pv = 0.0;
  double vv = 0.0;
};

/// E Q E^T.
inline Cov2 congruence(const Mat2& E, const Cov2& Q) {
  const double a = E[0], b = E[1], c = E[2], d = E[3];
  return {a * a * Q.pp + 2 * a * b * Q.pv + b * b * Q.vv,
          a * c * Q.pp + (a * d + b * c) * Q.pv + b * d * Q.vv,
          c * c * Q.pp + 2 * c * d * Q.pv + d * d * Q.vv};
}

namespace detail {

// int_0^h k k^T ds from the Taylor series of g (used when |mu| h^2 is small).
inline Cov2 kernel_gram_series(double j2, double a, double h) {
  constexpr int K = 60;
  std::array<double, K + 2> c{};  // g(s) = sum c_k s^k
  c[0] = 0.0;
  c[1] = 1.0;
  for (int k = 0; k + 2 <= K + 1; ++k) c[k + 2] = -(a * (k + 1) * c[k + 1] + j2 * c[k]) / ((k + 2.0) * (k + 1.0));
  std::array<double, K + 1> d{};  // g'(s) = sum d_k s^k
  for (int k = 0; k <= K; ++k) d[k] = (k + 1) * c[k + 1];
  // scale by powers of h up front to keep the products well-conditioned
  std::array<double, K + 1> cs{}, ds{};
  double hp = 1.0;
  for (int k = 0; k <= K; ++k) {
    cs[k] = c[k] * hp;
    ds[k] = d[k] * hp;
    hp *= h;
  }
  Cov2 q;
  for (int i = 0; i <= K; ++i)
    for (int j = 0; i + j <= K; ++j) {
      const double w = h / (i + j + 1.0);
      q.pp += cs[i] * cs[j] * w;
      q.pv += cs[i] * ds[j] * w;
      q.vv += ds[i] * ds[j] * w;
    }
  return q;
}

// Closed form through trigonometric antiderivatives with a complex frequency.
inline Cov2 kernel_gram_closed(double j2, double a, double h) {
  using std::exp;
  const double mu = j2 - 0.25 * a * a;
  const std::complex<double> w = std::sqrt(std::complex<double>(mu, 0.0));
  const std::complex<double> b = 2.0 * w;
  const double ea = exp(-a * h);
  const double A0 = a == 0.0 ? h : -std::expm1(-a * h) / a;
  const std::complex<double> denom = a * a + b * b;  // = 4 j^2
  const std::complex<double> P = (a - ea * (a * std::cos(b * h) - b * std::sin(b * h))) / denom;
  const std::complex<double> R = (b - ea * (a * std::sin(b * h) + b * std::cos(b * h))) / denom;
  const double ISS = ((A0 - P) / (2.0 * mu)).real();
  const double ICC = (0.5 * (A0 + P)).real();
  const double ISC = (R / (2.0 * w)).real();
  const Kernel k = kernel(j2, a, h);
  return {ISS, 0.5 * k.g * k.g, ICC - a * ISC + 0.25 * a * a * ISS};
}

}  // namespace detail

/// int_0^h k(s) k(s)^T ds with k = (g, g').
inline Cov2 kernel_gram(double j2, double a, double h) {
  if (h == 0.0) return {};
  const double mu = j2 - 0.25 * a * a;
  if (std::abs(mu) * h * h >= 1e-2) return detail::kernel_gram_closed(j2, a, h);
  if (std::max(a, std::sqrt(std::abs(j2))) * h <= 1.0) return detail::kernel_gram_series(j2, a, h);
  // Q(2s) = E(s) Q(s) E(s)^T + Q(s)
  const Cov2 q = kernel_gram(j2, a, 0.5 * h);
  const Cov2 r = congruence(flow_matrix(j2, a, 0.5 * h), q);
  return {r.pp + q.pp, r.pv + q.pv, r.vv + q.vv};
}

/// Per-shell step data for a fixed h: flow matrix E(h), kernel k(h), and the
/// Cholesky factor of the stochastic-convolution covariance Q(h).
class TransitionOperator {
 public:
  struct Shell {
    Mat2 E{1, 0, 0, 1};
    Kernel k;
    Cov2 Q;
    double l11 = 0.0, l21 = 0.0, l22 = 0.0;
  };

  TransitionOperator() = default;
  TransitionOperator(const ModeSymbols& syms, double alpha, double h) : syms_(syms), alpha_(alpha), h_(h) {
    if (!(h >= 0.0)) throw std::invalid_argument("TransitionOperator: h must be >= 0");
    const int N = syms.N;
    const std::int64_t R2 = std::int64_t{N} * N;
    shells_.resize(static_cast<std::size_t>(R2) + 1);
    const double a = syms.damping;
    for (std::int64_t r = 0; r <= R2; ++r) {
      Shell& s = shells_[r];
      const double j2 = syms.jn2(r);
      s.k = kernel(j2, a, h);
      s.E = {s.k.dg + a * s.k.g, s.k.g, -j2 * s.k.g, s.k.dg};
      if (alpha != 0.0 && h > 0.0) {
        const Cov2 G = kernel_gram(j2, a, h);
        const double a2 = alpha * alpha;
        s.Q = {a2 * G.pp, a2 * G.pv, a2 * G.vv};
        if (s.Q.pp > 0.0) {
          s.l11 = std::sqrt(s.Q.pp);
          s.l21 = s.Q.pv / s.l11;
        }
        s.l22 = std::sqrt(std::max(0.0, s.Q.vv - s.l21 * s.l21));
      }
    }
  }

  /// Same flow over step h without noise (Q is left zero).
  static TransitionOperator deterministic(const ModeSymbols& syms, double h) { return {syms, 0.0, h}; }

  double h() const { return h_; }
  double alpha() const { return alpha_; }
  int N() const { return syms_.N; }
  const ModeSymbols& symbols() const { return syms_; }
  const Shell& shell(std::int64_t norm2) const { return shells_.at(static_cast<std::size_t>(norm2)); }
  const Shell& shell(Mode m) const { return shell(m.norm2()); }

 private:
  ModeSymbols syms_;
  double alpha_ = 0.0;
  double h_ = 0.0;
  std::vector<Shell> shells_;
};

inline TransitionOperator transition_covariance(const ModeSymbols& syms, double alpha, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("transition_covariance: h must be > 0");
  return {syms, alpha, h};
}

/// Calls f(a, b, norm2) for every mode of the ball |n| <= N.
template <class F>
void for_each_in_ball(int N, F&& f) {
  const std::int64_t R2 = std::int64_t{N} * N;
  for (int a = -N; a <= N; ++a) {
    const int bmax = static_cast<int>(std::sqrt(static_cast<double>(R2 - std::int64_t{a} * a)));
    for (int b = -bmax; b <= bmax; ++b) {
      const std::int64_t r = std::int64_t{a} * a + std::int64_t{b} * b;
      if (r <= R2) f(a, b, r);
    }
  }
}

/// Visits one mode of each Hermitian pair (a > 0, or a = 0 and b >= 0) of the ball.
template <class F>
void for_each_representative(int N, F&& f) {
  const std::int64_t R2 = std::int64_t{N} * N;
  for (int a = 0; a <= N; ++a) {
    const int bmax = static_cast<int>(std::sqrt(static_cast<double>(R2 - std::int64_t{a} * a)));
    for (int b = a == 0 ? 0 : -bmax; b <= bmax; ++b) {
      const std::int64_t r = std::int64_t{a} * a + std::int64_t{b} * b;
      if (r <= R2) f(a, b, r);
    }
  }
}

/// Exact homogeneous evolution over time t (any sign) on |n| <= N of the state band.
inline PairState propagate(const PairState& s, const ModeSymbols& syms, double t) {
  const int N = std::min(s.band(), syms.N);
  PairState out(s.band());
  const double a = syms.damping;
  std::vector<Mat2> cache(static_cast<std::size_t>(std::int64_t{N} * N) + 1);
  std::vector<char> have(cache.size(), 0);
  for_each_in_ball(N, [&](int n1, int n2, std::int64_t r) {
    if (!have[r]) {
      cache[r] = flow_matrix(syms.jn2(r), a, t);
      have[r] = 1;
    }
    const Mat2& E = cache[r];
    const cplx p = s.pos(n1, n2), v = s.vel(n1, n2);
    out.pos(n1, n2) = E[0] * p + E[1] * v;
    out.vel(n1, n2) = E[2] * p + E[3] * v;
  });
  return out;
}

inline PairState homogeneous_step(const PairState& s, const ModeSymbols& syms, double h) {
  if (!(h >= 0.0)) throw std::invalid_argument("homogeneous_step: h must be >= 0");
  return propagate(s, syms, h);
}

/// Applies E(h) of a precomputed operator.
inline PairState apply_flow(const PairState& s, const TransitionOperator& op) {
  PairState out(s.band());
  for_each_representative(std::min(s.band(), op.N()), [&](int n1, int n2, std::int64_t r) {
    const Mat2& E = op.shell(r).E;
    const cplx p = s.pos(n1, n2), v = s.vel(n1, n2);
    out.pos.set_pair({n1, n2}, E[0] * p + E[1] * v);
    out.vel.set_pair({n1, n2}, E[2] * p + E[3] * v);
  });
  return out;
}

/// One exact step of the stationary linear solution: E(h) state + G with
/// G ~ N(0, Q(h)). `step` indexes the Wiener path; successive calls must use
/// distinct values.
inline PairState zN_step(const PairState& s, const TransitionOperator& op, const NoiseStream& stream,
                         std::uint32_t step) {
  PairState out = apply_flow(s, op);
  if (op.alpha() == 0.0 || op.h() == 0.0) return out;
  const NoiseStream w = stream.with_role(StreamRole::wiener);
  const int N = std::min(s.band(), op.N());
  for (int a = 0; a <= N; ++a)
    for (int b = -N; b <= N; ++b) {
      const Mode m{a, b};
      if (!is_representative(m) || !m.in_ball(N)) continue;
      const auto& sh = op.shell(m);
      cplx x1, x2;
      if (a == 0 && b == 0) {
        const auto p = w.normal_pair(m, step, 0);
        x1 = p[0];
        x2 = p[1];
      } else {
        x1 = w.complex_normal(m, step, 0);
        x2 = w.complex_normal(m, step, 1);
      }
      const cplx gp = sh.l11 * x1;
      const cplx gv = sh.l21 * x1 + sh.l22 * x2;
      out.pos.set_pair(m, out.pos[m] + gp);
      out.vel.set_pair(m, out.vel[m] + gv);
    }
  return out;
}

}  // namespace sdnlw

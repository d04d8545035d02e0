#pragma once

// Da Prato-Debussche time stepping: u_N = z_N + v_N, with z_N advanced
// exactly and v_N by a two-stage exponential integrator.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdnlw/linear_flow.hpp"
#include "sdnlw/noise.hpp"
#include "sdnlw/renorm.hpp"
#include "sdnlw/spectral.hpp"

namespace sdnlw {

struct WickPowers {
  SpectralField z2;  // z^2 - sigma, band 2N
  SpectralField z3;  // z^3 - 3 sigma z, band 3N
};

inline WickPowers wick_powers(const SpectralField& z, double sigma) {
  const int N = z.band();
  const SpectralField* in[] = {&z};
  const int M = 6 * N + 2;
  auto z2 = pointwise(in, 2 * N, M, [sigma](std::span<const double> x) { return x[0] * x[0] - sigma; });
  auto z3 = pointwise(in, 3 * N, M, [sigma](std::span<const double> x) {
    return x[0] * x[0] * x[0] - 3.0 * sigma * x[0];
  });
  return {std::move(z2), std::move(z3)};
}

/// P_N[v^3 + 3 v^2 z + 3 v z2 + z3] with N the band of v.
inline SpectralField nonlinearity_strong(const SpectralField& v, const SpectralField& z, const SpectralField& z2,
                                         const SpectralField& z3) {
  const SpectralField* in[] = {&v, &z, &z2, &z3};
  int top = 0;
  for (auto* f : in) top = std::max(top, f->band());
  return pointwise(in, v.band(), 2 * top + 2, [](std::span<const double> x) {
    const double v = x[0];
    return v * v * v + 3.0 * v * v * x[1] + 3.0 * v * x[2] + x[3];
  });
}

/// Pointwise form of the residual forcing
///   F = sum_j coef_j :u^{2k+1-2j}: + shift * u,   u = v + z,
/// where :u^m: = sum_i binom(m, i) v^{m-i} H_i(z; sigma).
struct NonlinearModel {
  int k = 1;
  std::vector<double> coef{1.0, 0.0};
  double sigma = 0.0;
  double shift = 0.0;

  /// Strong regime, cubic: F = :u^3: (lambda = 3 sigma in the flow).
  static NonlinearModel strong(double sigma) { return {1, {1.0, 0.0}, sigma, 0.0}; }

  /// Weak-type regimes: F = u^{2k+1} - lambda u with lambda the flow mass,
  /// expanded through the Wick coefficients.
  static NonlinearModel weak(double sigma, double lambda, int k = 1) {
    const auto w = wick_coefficients(k);
    NonlinearModel m{k, {}, sigma, -lambda};
    for (int j = 0; j <= k; ++j) m.coef.push_back(w.coeffs[j] * std::pow(sigma, j));
    return m;
  }

  /// Deterministic limit with mass m = kappa^2/4pi: the j = k term is
  /// carried by the flow, the rest is F = sum_{j<k} c_j m^j w^{2k+1-2j}.
  static NonlinearModel deterministic(double mass_m, int k = 1) {
    const auto w = wick_coefficients(k);
    NonlinearModel m{k, {}, 0.0, 0.0};
    for (int j = 0; j <= k; ++j) m.coef.push_back(j < k ? w.coeffs[j] * std::pow(mass_m, j) : 0.0);
    return m;
  }

  /// Flow mass of the deterministic limit, c_k m^k.
  static double limit_mass(double mass_m, int k = 1) { return wick_coefficients(k).coeffs[k] * std::pow(mass_m, k); }

  double operator()(double v, double z) const {
    const int top = 2 * k + 1;
    double H[16], vp[16];
    H[0] = 1.0;
    H[1] = z;
    for (int i = 1; i < top; ++i) H[i + 1] = z * H[i] - i * sigma * H[i - 1];
    vp[0] = 1.0;
    for (int i = 1; i <= top; ++i) vp[i] = vp[i - 1] * v;
    double out = shift * (v + z);
    for (int j = 0; j <= k; ++j) {
      if (coef[j] == 0.0) continue;
      const int m = top - 2 * j;
      double acc = 0.0, binom = 1.0;
      for (int i = 0; i <= m; ++i) {
        acc += binom * vp[m - i] * H[i];
        binom = binom * (m - i) / (i + 1);
      }
      out += coef[j] * acc;
    }
    return out;
  }

  /// Degree of F as a polynomial in (v, z).
  int degree() const { return 2 * k + 1; }

  /// Monomial coefficients of F as a polynomial in u = v + z alone, using
  /// the Appell identity sum_i binom(m, i) v^{m-i} H_i(z) = H_m(v + z).
  std::vector<double> polynomial() const {
    const int top = degree();
    std::vector<std::vector<double>> H(top + 1, std::vector<double>(top + 1, 0.0));
    H[0][0] = 1.0;
    if (top >= 1) H[1][1] = 1.0;
    for (int i = 1; i < top; ++i)
      for (int d = 0; d <= top; ++d) {
        double c = (d > 0 ? H[i][d - 1] : 0.0) - i * sigma * H[i - 1][d];
        H[i + 1][d] = c;
      }
    std::vector<double> p(top + 1, 0.0);
    for (int j = 0; j <= k; ++j)
      for (int d = 0; d <= top; ++d) p[d] += coef[j] * H[top - 2 * j][d];
    p[1] += shift;
    return p;
  }
};

/// General odd-power nonlinearity: sum_j c_j sigma^j :u^{2k+1-2j}:
/// projected onto the band of v. Equals P_N (v+z)^{2k+1} pointwise.
inline SpectralField general_power_nonlinearity(const SpectralField& v, const SpectralField& z, double sigma, int k) {
  if (k < 1 || k > 3) throw std::invalid_argument("general_power_nonlinearity: k must be in {1, 2, 3}");
  NonlinearModel model = NonlinearModel::weak(sigma, 0.0, k);
  const SpectralField* in[] = {&v, &z};
  const int top = std::max(v.band(), z.band());
  return pointwise(in, v.band(), (2 * k + 2) * top + 2,
                   [&model](std::span<const double> x) { return model(x[0], x[1]); });
}

/// Evaluates F(v, z) on |n| <= N on the smallest exact grid.
class ForcingEvaluator {
 public:
  ForcingEvaluator(int N, NonlinearModel model)
      : N_(N), model_(std::move(model)), poly_(model_.polynomial()), M_(fft_size((model_.degree() + 1) * N + 2)) {}

  int grid_size() const { return M_; }
  const NonlinearModel& model() const { return model_; }

  SpectralField operator()(const SpectralField& v, const SpectralField* z) const {
    auto& tr = grid_transform(M_);
    return tr.map_polynomial(v, z, N_, poly_);
  }

 private:
  int N_;
  NonlinearModel model_;
  std::vector<double> poly_;
  int M_;
};

/// One step of the exponential trapezoidal predictor-corrector for
///   v'' + a v' + (lambda - Delta) v = -F(v, z).
/// `op` holds E(h) and k(h) = (g(h), g'(h)).
inline PairState step_vN(const PairState& v, const SpectralField* z_now, const SpectralField* z_next,
                         const TransitionOperator& op, const ForcingEvaluator& force) {
  const double h = op.h();
  const int N = v.band();
  const SpectralField F0 = force(v.pos, z_now);
  // real symbols map Hermitian data to Hermitian data, so half the ball suffices
  PairState pred(N);
  for_each_representative(N, [&](int a, int b, std::int64_t r) {
    const auto& s = op.shell(r);
    const cplx p = v.pos(a, b), q = v.vel(a, b), f = F0(a, b);
    pred.pos.set_pair({a, b}, s.E[0] * p + s.E[1] * q - h * s.k.g * f);
    pred.vel.set_pair({a, b}, s.E[2] * p + s.E[3] * q - h * s.k.dg * f);
  });
  const SpectralField F1 = force(pred.pos, z_next);
  PairState out(N);
  for_each_representative(N, [&](int a, int b, std::int64_t r) {
    const auto& s = op.shell(r);
    const cplx p = v.pos(a, b), q = v.vel(a, b), f0 = F0(a, b), f1 = F1(a, b);
    out.pos.set_pair({a, b}, s.E[0] * p + s.E[1] * q - 0.5 * h * s.k.g * f0);
    out.vel.set_pair({a, b}, s.E[2] * p + s.E[3] * q - 0.5 * h * (s.k.dg * f0 + f1));
  });
  return out;
}

/// E(v) = 1/2 ||grad v||^2 + 1/2 ||v_t||^2 + 1/4 ||v||_{L^4}^4 + lambda/2 ||v||^2.
inline double energy(const PairState& v, double lambda) {
  const int N = v.band();
  double grad = 0.0, kin = 0.0, mass = 0.0;
  for (int a = -N; a <= N; ++a)
    for (int b = -N; b <= N; ++b) {
      const double p2 = std::norm(v.pos(a, b));
      grad += static_cast<double>(Mode{a, b}.norm2()) * p2;
      mass += p2;
      kin += std::norm(v.vel(a, b));
    }
  const int M = fft_size(4 * N + 2);
  const auto g = to_physical(v.pos, M);
  double q = 0.0;
  for (double x : g.values) q += x * x * x * x;
  q *= (kTwoPi / M) * (kTwoPi / M);
  return 0.5 * grad + 0.5 * kin + 0.25 * q + 0.5 * lambda * mass;
}

enum class SimRegime { strong, weak, deterministic, tuned_damping };

inline std::string to_string(SimRegime r) {
  switch (r) {
    case SimRegime::strong: return "strong";
    case SimRegime::weak: return "weak";
    case SimRegime::deterministic: return "deterministic";
    case SimRegime::tuned_damping: return "tuned_damping";
  }
  return "?";
}

inline SimRegime parse_regime(const std::string& s) {
  if (s == "strong") return SimRegime::strong;
  if (s == "weak") return SimRegime::weak;
  if (s == "deterministic") return SimRegime::deterministic;
  if (s == "tuned_damping" || s == "tuned") return SimRegime::tuned_damping;
  throw std::invalid_argument("unknown regime: " + s);
}

/// h = 1/(20 m) with m the smallest integer making h <= min(0.05, 0.5/N),
/// so that every multiple of 0.05 is a step boundary.
inline double default_step(int N) {
  const int m = std::max(1, (std::max(20, 2 * N) + 19) / 20);
  return 1.0 / (20.0 * m);
}

struct SimConfig {
  int N = 8;
  SimRegime regime = SimRegime::strong;
  double alpha = 1.0;  // resolved alpha_N
  double kappa = 0.0;  // deterministic regime only
  double T = 1.0;
  double h = 0.0;      // 0 selects default_step(N)
  double t_end = 0.0;  // integration horizon, 0 means T
  std::uint64_t seed = 0;
  int mc_replicas = 1;
  double damping = 1.0;
  int power_k = 1;
  double epsilon = 0.25;
  double record_dt = 0.05;
  bool record_tail = false;
  double blowup_threshold = 1e8;

  double step() const { return h > 0.0 ? h : default_step(N); }
  double horizon() const { return t_end > 0.0 ? t_end : T; }

  void validate() const {
    if (N < 1) throw std::invalid_argument("SimConfig: N must be >= 1");
    if (!(step() > 0.0) || horizon() < step()) throw std::invalid_argument("SimConfig: need h > 0 and T >= h");
    if (mc_replicas < 1) throw std::invalid_argument("SimConfig: mc_replicas must be >= 1");
    if (power_k < 1 || power_k > 3) throw std::invalid_argument("SimConfig: power_k must be in {1, 2, 3}");
    if (!(damping >= 0.0)) throw std::invalid_argument("SimConfig: damping must be >= 0");
    if (regime != SimRegime::deterministic && !(damping > 0.0))
      throw std::invalid_argument("SimConfig: stochastic regimes need damping > 0");
    if (regime == SimRegime::strong && power_k != 1)
      throw std::invalid_argument("SimConfig: strong regime is cubic only");
  }
};

/// Constants the flow is built from for a given configuration.
inline RenormConstants make_constants(const SimConfig& c) {
  switch (c.regime) {
    case SimRegime::strong: return strong_constants(c.alpha, c.N, c.damping);
    case SimRegime::weak:
    case SimRegime::tuned_damping: return weak_constants(c.alpha, c.N, c.damping);
    case SimRegime::deterministic: {
      const double m = c.kappa * c.kappa / (4.0 * kPi);
      return RenormConstants{c.N, 0.0, NonlinearModel::limit_mass(m, c.power_k), 0.0, Regime::weak, c.damping};
    }
  }
  throw std::logic_error("make_constants");
}

inline NonlinearModel make_model(const SimConfig& c, const RenormConstants& rc) {
  switch (c.regime) {
    case SimRegime::strong: return NonlinearModel::strong(rc.sigma);
    case SimRegime::weak:
    case SimRegime::tuned_damping: return NonlinearModel::weak(rc.sigma, rc.lambda, c.power_k);
    case SimRegime::deterministic: return NonlinearModel::deterministic(c.kappa * c.kappa / (4.0 * kPi), c.power_k);
  }
  throw std::logic_error("make_model");
}

struct TrajectoryRecord {
  std::vector<double> times;
  std::map<std::string, std::vector<double>> series;
  std::vector<PairState> snapshots;  // u at the record times when requested
  bool blew_up = false;
  double blowup_time = std::numeric_limits<double>::quiet_NaN();
  long steps = 0;
};

/// Observer called at t = 0 and after every step: (step, t, v, z).
using StepObserver = std::function<void(long, double, const PairState&, const PairState&)>;

struct SimOptions {
  bool keep_snapshots = false;
  StepObserver observer;
};

namespace detail {

inline bool finite_field(const SpectralField& f) {
  for (const cplx& c : f.data())
    if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
  return true;
}

}  // namespace detail

/// Co-evolves z_N (two exact half steps per step) and v_N. Records at every
/// multiple of record_dt: H^{-eps} norms of u and z, H^{1-eps} of v, and
/// (optionally) the H^{-eps} norm of the discarded forcing tail above N.
inline TrajectoryRecord simulate(const SimConfig& cfg, const RenormConstants& rc, const PairState& v0v1,
                                 const NoiseStream& stream, const SimOptions& opt = {}) {
  cfg.validate();
  const int N = cfg.N;
  const double h = cfg.step();
  const long steps = std::lround(cfg.horizon() / h);
  const long stride = std::max(1L, std::lround(cfg.record_dt / h));
  const ModeSymbols syms = propagator_symbols(rc);
  const bool noisy = rc.alpha != 0.0 && cfg.regime != SimRegime::deterministic;
  const TransitionOperator op_full = TransitionOperator::deterministic(syms, h);
  const TransitionOperator op_half = noisy ? TransitionOperator(syms, rc.alpha, 0.5 * h) : TransitionOperator();
  const NonlinearModel model = make_model(cfg, rc);
  const ForcingEvaluator force(N, model);
  const double eps = cfg.epsilon;

  PairState v = project(PairState(v0v1.pos.with_band(N), v0v1.vel.with_band(N)), N);
  PairState z(N);
  if (noisy) {
    auto g = sample_initial(rc, stream);
    z = PairState(std::move(g.z0), std::move(g.z1));
  }

  TrajectoryRecord rec;
  auto record = [&](long n, double t) {
    rec.times.push_back(t);
    const SpectralField u = v.pos + z.pos;
    rec.series["u_hm_eps"].push_back(sobolev_norm(u, -eps));
    rec.series["z_hm_eps"].push_back(sobolev_norm(z.pos, -eps));
    rec.series["v_h1m_eps"].push_back(sobolev_norm(v.pos, 1.0 - eps));
    if (cfg.record_tail) {
      const SpectralField* in[] = {&v.pos, noisy ? &z.pos : &v.pos};
      const int full = model.degree() * N;
      const NonlinearModel& mdl = model;
      auto Ffull = pointwise(in, full, 2 * full + 2, [&mdl, noisy](std::span<const double> x) {
        return mdl(x[0], noisy ? x[1] : 0.0);
      });
      rec.series["forcing_tail_hm_eps"].push_back(sobolev_distance(Ffull, project(Ffull, N), -eps));
    }
    if (opt.keep_snapshots) rec.snapshots.push_back(PairState(u, v.vel + z.vel));
    (void)n;
  };

  auto at_record = [&](long n) { return n % stride == 0; };
  if (opt.observer) opt.observer(0, 0.0, v, z);
  record(0, 0.0);
  for (long n = 0; n < steps; ++n) {
    PairState z_next = z;
    if (noisy) {
      const PairState mid = zN_step(z, op_half, stream, static_cast<std::uint32_t>(2 * n));
      z_next = zN_step(mid, op_half, stream, static_cast<std::uint32_t>(2 * n + 1));
    }
    v = step_vN(v, noisy ? &z.pos : nullptr, noisy ? &z_next.pos : nullptr, op_full, force);
    z = std::move(z_next);
    const double t = (n + 1) * h;
    ++rec.steps;
    if (!detail::finite_field(v.pos) || sobolev_norm(v.pos, 0.0) > cfg.blowup_threshold) {
      rec.blew_up = true;
      rec.blowup_time = t;
      break;
    }
    if (opt.observer) opt.observer(n + 1, t, v, z);
    if (at_record(n + 1)) record(n + 1, t);
  }
  return rec;
}

/// Deterministic damped NLW with mass (3/4pi) kappa^2 (general k: c_k m^k).
inline TrajectoryRecord solve_deterministic_limit(double kappa, const PairState& v0v1, double T, double h,
                                                  double damping = 1.0, int k = 1, double record_dt = 0.05,
                                                  const SimOptions& opt = {}) {
  SimConfig c;
  c.N = v0v1.band();
  c.regime = SimRegime::deterministic;
  c.alpha = 0.0;
  c.kappa = kappa;
  c.T = T;
  c.h = h;
  c.damping = damping;
  c.power_k = k;
  c.record_dt = record_dt;
  return simulate(c, make_constants(c), v0v1, NoiseStream{}, opt);
}

}  // namespace sdnlw

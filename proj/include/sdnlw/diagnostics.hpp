#pragma once

// Norms over time and Monte-Carlo reductions.

#include <fftw3.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdnlw/integrator.hpp"
#include "sdnlw/linear_flow.hpp"
#include "sdnlw/noise.hpp"
#include "sdnlw/renorm.hpp"
#include "sdnlw/spectral.hpp"

namespace sdnlw {

/// C-infinity step: 0 for x <= 0, 1 for x >= 1.
inline double smooth_step(double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  auto f = [](double y) { return y > 0.0 ? std::exp(-1.0 / y) : 0.0; };
  const double a = f(x), b = f(1.0 - x);
  return a / (a + b);
}

/// chi_T: 1 on [0, T], supported in (-T/2, 3T/2).
inline double time_window(double t, double T) {
  const double pad = 0.5 * T;
  if (t >= 0.0 && t <= T) return 1.0;
  if (t < 0.0) return smooth_step((t + pad) / pad);
  return smooth_step((T + pad - t) / pad);
}

/// Snapshots on t_j = -T/2 + j h, j = 0..K-1, covering one period L = 2T.
struct SpaceTimeSample {
  double T = 1.0;
  double h = 0.05;
  std::vector<SpectralField> frames;
  std::vector<double> window;

  double t0() const { return -0.5 * T; }
  double time(std::size_t j) const { return t0() + static_cast<double>(j) * h; }
  std::size_t size() const { return frames.size(); }
};

/// Number of samples in the padded window; h must divide T/2.
inline std::size_t window_samples(double T, double h) {
  const double k = 2.0 * T / h;
  const long K = std::lround(k);
  if (K < 4 || std::abs(k - K) > 1e-9 * k || std::abs(0.5 * T / h - std::round(0.5 * T / h)) > 1e-9 * k)
    throw std::invalid_argument("spacetime sample: h must divide T/2");
  return static_cast<std::size_t>(K);
}

/// Builds a sample from frame(t) evaluated on the padded grid.
inline SpaceTimeSample make_spacetime_sample(double T, double h, const std::function<SpectralField(double)>& frame) {
  SpaceTimeSample s;
  s.T = T;
  s.h = h;
  const std::size_t K = window_samples(T, h);
  for (std::size_t j = 0; j < K; ++j) {
    const double t = s.time(j);
    s.window.push_back(time_window(t, T));
    s.frames.push_back(frame(t));
  }
  return s;
}

namespace detail {

inline std::vector<double> time_weights(const SpaceTimeSample& s, double b) {
  const std::size_t K = s.size();
  const double L = static_cast<double>(K) * s.h;
  std::vector<double> w(K);
  for (std::size_t k = 0; k < K; ++k) {
    const long kk = k <= K / 2 ? static_cast<long>(k) : static_cast<long>(k) - static_cast<long>(K);
    const double tau = kTwoPi * static_cast<double>(kk) / L;
    w[k] = std::pow(1.0 + tau * tau, b) / L;
  }
  return w;
}

}  // namespace detail

/// Norm of chi_T u in H^b(R; H^s): time DFT over the padded period, then
///   sum_k sum_n <tau_k>^{2b} <n>^{2s} |c_k(n)|^2 / L,  c_k = h sum_j w_j e^{-2 pi i k j / K}.
inline double spacetime_norm(const SpaceTimeSample& s, double b, double sp) {
  if (b > 0.0) throw std::invalid_argument("spacetime_norm: b must be <= 0");
  const std::size_t K = s.size();
  if (K == 0) return 0.0;
  for (std::size_t j = 0; j < K; ++j) {
    const double t = s.time(j);
    if (t >= -1e-12 && t <= s.T + 1e-12 && std::abs(s.window[j] - 1.0) > 1e-15)
      throw std::invalid_argument("spacetime_norm: window is not 1 on [0, T]");
  }
  int N = 0;
  for (const auto& f : s.frames) N = std::max(N, f.band());
  std::vector<Mode> reps;
  for_each_in_ball(N, [&](int a, int bb, std::int64_t) {
    if (is_representative({a, bb})) reps.push_back({a, bb});
  });
  const auto tw = detail::time_weights(s, b);

  constexpr std::size_t kBlock = 256;
  const int Ki = static_cast<int>(K);
  fftw_complex* buf = fftw_alloc_complex(K * kBlock);
  fftw_plan plan;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan = fftw_plan_many_dft(1, &Ki, static_cast<int>(kBlock), buf, nullptr, 1, Ki, buf, nullptr, 1, Ki,
                              FFTW_FORWARD, FFTW_ESTIMATE);
  }
  double total = 0.0;
  for (std::size_t start = 0; start < reps.size(); start += kBlock) {
    const std::size_t cnt = std::min(kBlock, reps.size() - start);
    std::memset(buf, 0, sizeof(fftw_complex) * K * kBlock);
    for (std::size_t m = 0; m < cnt; ++m) {
      const Mode md = reps[start + m];
      for (std::size_t j = 0; j < K; ++j) {
        const cplx c = s.frames[j].get(md.n1, md.n2) * (s.window[j] * s.h);
        buf[m * K + j][0] = c.real();
        buf[m * K + j][1] = c.imag();
      }
    }
    fftw_execute(plan);
    for (std::size_t m = 0; m < cnt; ++m) {
      const Mode md = reps[start + m];
      double acc = 0.0;
      for (std::size_t k = 0; k < K; ++k)
        acc += tw[k] * (buf[m * K + k][0] * buf[m * K + k][0] + buf[m * K + k][1] * buf[m * K + k][1]);
      const double mult = (md.n1 == 0 && md.n2 == 0) ? 1.0 : 2.0;
      total += mult * bracket_pow(md.norm2(), 2.0 * sp) * acc;
    }
  }
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  return std::sqrt(total);
}

/// Exact homogeneous evolution on the padded grid. Negative times use the
/// backward flow, so the extension solves the same linear equation.
inline SpaceTimeSample vlin_trajectory(const PairState& v0v1, const RenormConstants& rc, double T, double h) {
  const ModeSymbols syms = propagator_symbols(rc);
  const PairState d = project(PairState(v0v1.pos.with_band(rc.N), v0v1.vel.with_band(rc.N)), rc.N);
  return make_spacetime_sample(T, h, [&](double t) { return propagate(d, syms, t).pos; });
}

/// Sample from frames at t = 0, h, 2h, ... (at least up to 3T/2 - h),
/// extended to negative times by even reflection u(-t) = u(t).
inline SpaceTimeSample reflected_sample(const std::vector<SpectralField>& forward, double T, double h) {
  const std::size_t K = window_samples(T, h);
  const long pad = std::lround(0.5 * T / h);
  if (forward.size() + pad < K) throw std::invalid_argument("reflected_sample: trajectory too short");
  SpaceTimeSample s;
  s.T = T;
  s.h = h;
  for (std::size_t j = 0; j < K; ++j) {
    const long idx = std::labs(static_cast<long>(j) - pad);
    s.window.push_back(time_window(s.time(j), T));
    s.frames.push_back(forward[static_cast<std::size_t>(idx)]);
  }
  return s;
}

/// Statistics of one scalar over replicas.
struct SummaryStat {
  double mean = 0.0;
  double se = 0.0;
  bool se_defined = false;  // false for a single replica
  double median = 0.0;
  double q90 = 0.0;
  int count = 0;
};

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& x, double q) {
  if (x.empty()) throw std::invalid_argument("quantile: empty input");
  const double pos = q * static_cast<double>(x.size() - 1);
  const std::size_t i = static_cast<std::size_t>(std::floor(pos));
  if (i + 1 >= x.size()) return x.back();
  return x[i] + (pos - static_cast<double>(i)) * (x[i + 1] - x[i]);
}

inline SummaryStat summarize(std::vector<double> x) {
  if (x.empty()) throw std::invalid_argument("summarize: empty input");
  SummaryStat s;
  s.count = static_cast<int>(x.size());
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  s.mean = m;
  if (x.size() > 1) {
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    s.se = std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()));
    s.se_defined = true;
  }
  std::sort(x.begin(), x.end());
  s.median = quantile_sorted(x, 0.5);
  s.q90 = quantile_sorted(x, 0.9);
  return s;
}

struct McSummary {
  std::vector<double> times;
  std::map<std::string, std::vector<SummaryStat>> series;  // per record time
  int replicas = 0;
  int blowups = 0;
};

/// Per-series, per-time statistics; blown-up replicas are counted and excluded.
inline McSummary aggregate(const std::vector<TrajectoryRecord>& records) {
  if (records.empty()) throw std::invalid_argument("aggregate: empty input");
  McSummary out;
  out.replicas = static_cast<int>(records.size());
  std::vector<const TrajectoryRecord*> good;
  for (const auto& r : records) {
    if (r.blew_up)
      ++out.blowups;
    else
      good.push_back(&r);
  }
  if (good.empty()) return out;
  out.times = good.front()->times;
  for (const auto& [name, vals] : good.front()->series) {
    auto& dst = out.series[name];
    for (std::size_t t = 0; t < vals.size(); ++t) {
      std::vector<double> x;
      for (const auto* r : good) {
        const auto it = r->series.find(name);
        if (it == r->series.end() || it->second.size() != vals.size())
          throw std::invalid_argument("aggregate: records differ in shape");
        x.push_back(it->second[t]);
      }
      dst.push_back(summarize(std::move(x)));
    }
  }
  return out;
}

/// L^2 in time (trapezoid) of W^{-eps,inf} norms of :z^l:, l = 1..3, and
/// the sup over the same times of ||z||_{H^{-eps}}, for one replica.
struct WickNorms {
  std::array<double, 3> l2_winf{};
  double sup_hm = 0.0;
};

struct WickSampling {
  double T = 1.0;
  int time_samples = 11;  // including both endpoints
  double epsilon = 0.25;
  int oversample = 2;
};

/// W^{s,inf} norm of H_l(z; sigma) via an exact grid for the band lN.
inline double wick_winfty(const SpectralField& z, double sigma, int l, double s, int oversample) {
  const int N = z.band();
  const int band = l * N;
  const int M = fft_size(oversample * (2 * band + 2));
  auto& tr = grid_transform(M);
  std::vector<double> g(static_cast<std::size_t>(M) * M);
  tr.to_grid(z, g);
  for (double& x : g) x = hermite(l, x, sigma);
  const SpectralField w = tr.from_grid(g, band);
  tr.to_grid(apply_bessel(w, s), g);
  double m = 0.0;
  for (double x : g) m = std::max(m, std::abs(x));
  return m;
}

inline WickNorms wick_norms_replica(const RenormConstants& rc, const WickSampling& ws, const NoiseStream& stream) {
  if (ws.time_samples < 2) throw std::invalid_argument("wick_norms: need at least two time samples");
  const double dt = ws.T / (ws.time_samples - 1);
  const TransitionOperator op(propagator_symbols(rc), rc.alpha, dt);
  auto g = sample_initial(rc, stream);
  PairState z(std::move(g.z0), std::move(g.z1));
  WickNorms out;
  std::array<double, 3> acc{};
  for (int j = 0; j < ws.time_samples; ++j) {
    if (j > 0) z = zN_step(z, op, stream, static_cast<std::uint32_t>(j - 1));
    const double w = (j == 0 || j == ws.time_samples - 1) ? 0.5 * dt : dt;
    for (int l = 1; l <= 3; ++l) {
      const double v = wick_winfty(z.pos, rc.sigma, l, -ws.epsilon, ws.oversample);
      acc[l - 1] += w * v * v;
    }
    out.sup_hm = std::max(out.sup_hm, sobolev_norm(z.pos, -ws.epsilon));
  }
  for (int l = 0; l < 3; ++l) out.l2_winf[l] = std::sqrt(acc[l]);
  return out;
}

/// Least-squares slope of log y against log x.
inline double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("loglog_slope: need >= 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(x.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

inline bool strictly_decreasing(const std::vector<double>& y) {
  for (std::size_t i = 1; i < y.size(); ++i)
    if (!(y[i] < y[i - 1])) return false;
  return true;
}

}  // namespace sdnlw

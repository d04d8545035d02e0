#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "sdnlw/integrator.hpp"

using namespace sdnlw;
using Catch::Approx;

namespace {

SpectralField cube(const SpectralField& f) { return oracle::convolve(oracle::convolve(f, f), f); }

PairState smooth_data(int N, double amp) {
  PairState s(N);
  s.pos.set_pair({0, 0}, amp * 2.0);
  s.pos.set_pair({1, 0}, cplx(amp, 0.3 * amp));
  s.pos.set_pair({1, 1}, -0.5 * amp);
  s.pos.set_pair({0, 2}, cplx(0.0, 0.25 * amp));
  s.vel.set_pair({2, 1}, 0.4 * amp);
  return s;
}

// sup over recorded states of ||a - b||_{H^1} (position) on the common times
double sup_h1_gap(const TrajectoryRecord& a, const TrajectoryRecord& b) {
  REQUIRE(a.snapshots.size() == b.snapshots.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.snapshots.size(); ++i)
    worst = std::max(worst, sobolev_distance(a.snapshots[i].pos, b.snapshots[i].pos, 1.0));
  return worst;
}

TrajectoryRecord deterministic_run(double h, const PairState& d, double T = 1.0, double kappa = 0.0) {
  SimOptions opt;
  opt.keep_snapshots = true;
  return solve_deterministic_limit(kappa, d, T, h, 1.0, 1, 0.1, opt);
}

}  // namespace

TEST_CASE("wick_powers") {
  const SpectralField z0(3);
  const auto w = wick_powers(z0, 0.37);
  CHECK(w.z2(0, 0).real() == Approx(-0.37 * kTwoPi).epsilon(1e-14));
  CHECK(oracle::max_abs(project(w.z2, 0) - w.z2) <= 1e-14);
  CHECK(oracle::max_abs(w.z3) <= 1e-14);

  std::mt19937_64 rng(1);
  const auto z = oracle::random_field(3, rng);
  const auto p = wick_powers(z, 0.0);
  const auto sq = oracle::convolve(z, z);
  CHECK(oracle::max_gap(p.z2, sq, 6) <= 1e-12 * oracle::max_abs(sq));
  CHECK(oracle::max_gap(p.z3, cubic_dealiased(z), 9) <= 1e-12 * oracle::max_abs(p.z3));
  CHECK(oracle::max_gap(p.z3, cube(z), 9) <= 1e-12 * oracle::max_abs(p.z3));
}

TEST_CASE("nonlinearity_strong special cases") {
  std::mt19937_64 rng(2);
  const int N = 3;
  const auto v = oracle::random_field(N, rng);
  const SpectralField zero(N), zero2(2 * N), zero3(3 * N);
  const auto a = nonlinearity_strong(v, zero, zero2, zero3);
  const auto ref = cube(v);
  CHECK(a.band() == N);
  CHECK(oracle::max_gap(a, ref, N) <= 1e-12 * oracle::max_abs(ref));

  const auto z = oracle::random_field(N, rng);
  const auto w = wick_powers(z, 0.4);
  const auto b = nonlinearity_strong(zero, z, w.z2, w.z3);
  CHECK(oracle::max_gap(b, project(w.z3, N), N) <= 1e-12 * oracle::max_abs(w.z3));
}

TEST_CASE("Hermite recombination") {
  std::mt19937_64 rng(3);
  for (int N : {2, 4}) {
    const auto v = oracle::random_field(N, rng), z = oracle::random_field(N, rng);
    const double sigma = 0.3, lambda = 3 * sigma;
    const auto w = wick_powers(z, sigma);
    const SpectralField u = v + z;
    const auto lhs = nonlinearity_strong(v, z, w.z2, w.z3) + lambda * u;
    const auto rhs = cube(u);
    CHECK(oracle::max_gap(lhs, rhs, N) <= 1e-10 * oracle::max_abs(rhs));
  }
}

TEST_CASE("general_power_nonlinearity") {
  std::mt19937_64 rng(4);
  const auto v = oracle::random_field(2, rng), z = oracle::random_field(2, rng);
  const double sigma = 0.2;
  const auto w = wick_powers(z, sigma);
  const auto strong = nonlinearity_strong(v, z, w.z2, w.z3);
  // k = 1 with the Wick sum: :u^3: + 3 sigma u
  const auto g1 = general_power_nonlinearity(v, z, sigma, 1);
  const auto s1 = strong + 3 * sigma * (v + z);
  CHECK(oracle::max_gap(g1, s1, 2) <= 1e-10 * oracle::max_abs(s1));

  const auto g2 = general_power_nonlinearity(v, SpectralField(2), sigma, 2);
  const auto v5 = oracle::convolve(cube(v), oracle::convolve(v, v));
  CHECK(oracle::max_gap(g2, v5, 2) <= 1e-12 * oracle::max_abs(v5));
  CHECK_THROWS_AS(general_power_nonlinearity(v, z, sigma, 4), std::invalid_argument);

  std::uniform_real_distribution<double> U(-2, 2), S(0, 1.5);
  for (int k = 1; k <= 3; ++k)
    for (int t = 0; t < 20; ++t) {
      const double c = U(rng), s = S(rng);
      const auto wc = wick_coefficients(k);
      double acc = 0.0;
      for (int j = 0; j <= k; ++j) acc += wc.coeffs[j] * std::pow(s, j) * hermite(2 * k + 1 - 2 * j, c, s);
      CHECK(acc == Approx(std::pow(c, 2 * k + 1)).epsilon(1e-12).margin(1e-12));
    }
}

TEST_CASE("ForcingEvaluator agrees with the binomial expansion") {
  std::mt19937_64 rng(5);
  const int N = 5;
  const auto v = oracle::random_field(N, rng, 0.5), z = oracle::random_field(N, rng, 0.5);
  for (const auto& model : {NonlinearModel::strong(0.3), NonlinearModel::weak(0.2, 1.0, 1),
                            NonlinearModel::weak(0.1, 1.0, 2), NonlinearModel::weak(0.05, 1.0, 3),
                            NonlinearModel::deterministic(0.4, 2)}) {
    const SpectralField* in[] = {&v, &z};
    const auto ref = pointwise(in, N, (model.degree() + 1) * N + 2,
                               [&](std::span<const double> x) { return model(x[0], x[1]); });
    const ForcingEvaluator F(N, model);
    const auto fast = F(v, &z);
    CHECK(oracle::max_gap(fast, ref, N) <= 1e-11 * oracle::max_abs(ref));
    const auto no_z = F(v, nullptr);
    const SpectralField* in0[] = {&v};
    const auto ref0 = pointwise(in0, N, (model.degree() + 1) * N + 2,
                                [&](std::span<const double> x) { return model(x[0], 0.0); });
    CHECK(oracle::max_gap(no_z, ref0, N) <= 1e-11 * oracle::max_abs(ref0));
  }
}

TEST_CASE("step_vN without forcing is the homogeneous step") {
  std::mt19937_64 rng(6);
  const PairState v(oracle::random_field(4, rng), oracle::random_field(4, rng));
  const ModeSymbols syms{4, 1.0, 1.0};
  const NonlinearModel none{1, {0.0, 0.0}, 0.0, 0.0};
  const auto a = step_vN(v, nullptr, nullptr, TransitionOperator::deterministic(syms, 0.05), ForcingEvaluator(4, none));
  const auto b = homogeneous_step(v, syms, 0.05);
  CHECK(oracle::max_gap(a.pos, b.pos, 4) == 0.0);
  CHECK(oracle::max_gap(a.vel, b.vel, 4) == 0.0);
}

TEST_CASE("linear mass term against the closed-form mode solution") {
  // F = -mu u moves the flow mass from lambda to lambda - mu
  const double lambda = 2.0, mu = 1.5, h = 1e-3;
  const ModeSymbols syms{2, lambda, 1.0};
  const NonlinearModel lin{1, {0.0, 0.0}, 0.0, -mu};
  const ForcingEvaluator F(2, lin);
  const auto op = TransitionOperator::deterministic(syms, h);
  PairState v(2);
  v.pos.set_pair({1, 0}, 1.0);
  v.vel.set_pair({1, 0}, cplx(0.0, 0.5));
  const PairState v0 = v;
  for (int n = 0; n < 1000; ++n) v = step_vN(v, nullptr, nullptr, op, F);
  const auto exact = propagate(v0, ModeSymbols{2, lambda - mu, 1.0}, 1.0);
  CHECK(std::abs(v.pos(1, 0) - exact.pos(1, 0)) <= 1e-6);
  CHECK(std::abs(v.vel(1, 0) - exact.vel(1, 0)) <= 1e-6);
}

TEST_CASE("Richardson self-convergence is second order") {
  const PairState d = smooth_data(6, 1.5);
  const auto a = deterministic_run(0.02, d), b = deterministic_run(0.01, d), c = deterministic_run(0.005, d);
  const double e1 = sup_h1_gap(a, b), e2 = sup_h1_gap(b, c);
  INFO("e1=" << e1 << " e2=" << e2);
  CHECK(std::log2(e1 / e2) == Approx(2.0).margin(0.3));
}

TEST_CASE("energy") {
  CHECK(energy(PairState(3), 1.0) == 0.0);
  PairState c(2);
  const double val = 0.7, lam = 1.3;
  c.pos(0, 0) = kTwoPi * val;
  CHECK(energy(c, lam) == Approx(kTwoPi * kTwoPi * (std::pow(val, 4) / 4 + lam * val * val / 2)).epsilon(1e-13));

  // the unforced deterministic flow dissipates energy up to O(h^2)
  const PairState d = smooth_data(6, 1.5);
  auto worst_rise = [&](double h) {
    double prev = energy(d, 0.0), worst = -1e300;
    SimOptions opt;
    opt.observer = [&](long n, double, const PairState& v, const PairState&) {
      if (n == 0) return;
      const double e = energy(v, 0.0);
      worst = std::max(worst, e - prev);
      prev = e;
    };
    solve_deterministic_limit(0.0, d, 1.0, h, 1.0, 1, 0.1, opt);
    return worst;
  };
  const double r1 = worst_rise(0.02), r2 = worst_rise(0.01);
  INFO("rise " << r1 << " " << r2);
  CHECK(r1 <= 0.02 * 0.02 * energy(d, 0.0));
  CHECK(r2 <= 0.01 * 0.01 * energy(d, 0.0));
}

TEST_CASE("simulate basics") {
  SimConfig cfg;
  cfg.N = 4;
  cfg.alpha = 0.0;
  cfg.regime = SimRegime::weak;
  cfg.T = 0.5;
  const auto rc = make_constants(cfg);
  const auto rec = simulate(cfg, rc, PairState(4), NoiseStream{1});
  for (const auto& [name, xs] : rec.series)
    for (double x : xs) CHECK(x == 0.0);
  CHECK(rec.steps == std::lround(0.5 / cfg.step()));
  CHECK(rec.times.size() == 11);

  SimConfig s;
  s.N = 6;
  s.alpha = 1.0;
  s.T = 0.3;
  s.seed = 4;
  const auto rs = make_constants(s);
  const auto d = smooth_data(6, 1.0);
  const auto r1 = simulate(s, rs, d, NoiseStream{4, StreamRole::wiener, 2});
  const auto r2 = simulate(s, rs, d, NoiseStream{4, StreamRole::wiener, 2});
  CHECK(r1.series == r2.series);
  CHECK(r1.times == r2.times);
  const auto r3 = simulate(s, rs, d, NoiseStream{4, StreamRole::wiener, 3});
  CHECK(r1.series.at("u_hm_eps") != r3.series.at("u_hm_eps"));

  s.blowup_threshold = 1e-3;
  const auto rb = simulate(s, rs, d, NoiseStream{4});
  CHECK(rb.blew_up);
  CHECK(rb.blowup_time == Approx(s.step()));

  s.mc_replicas = 0;
  CHECK_THROWS_AS(simulate(s, rs, d, NoiseStream{4}), std::invalid_argument);
}

TEST_CASE("weak regime without noise approaches the massless limit") {
  // alpha = 0 weak: flow mass 1 and shift -1; limit kappa = 0: flow mass 0.
  // Same equation, different splitting, so agreement is to time-step accuracy.
  const PairState d = smooth_data(6, 1.0);
  SimConfig cfg;
  cfg.N = 6;
  cfg.alpha = 0.0;
  cfg.regime = SimRegime::weak;
  cfg.h = 0.005;
  SimOptions opt;
  opt.keep_snapshots = true;
  const auto weak = simulate(cfg, make_constants(cfg), d, NoiseStream{}, opt);
  const auto lim = solve_deterministic_limit(0.0, d, 1.0, 0.005, 1.0, 1, 0.05, opt);
  CHECK(sup_h1_gap(weak, lim) <= 1e-4);
}

TEST_CASE("deterministic limit") {
  const auto z = solve_deterministic_limit(0.0, PairState(4), 1.0, 0.05);
  for (const auto& [name, xs] : z.series)
    for (double x : xs) CHECK(x == 0.0);

  // small amplitude: each mode oscillates at sqrt((3/4pi) kappa^2 + |n|^2 - 1/4)
  const double kappa = 2.0, amp = 1e-6;
  PairState d(2);
  d.pos.set_pair({1, 0}, amp);
  SimOptions opt;
  opt.keep_snapshots = true;
  const auto rec = solve_deterministic_limit(kappa, d, 2.0, 1e-3, 1.0, 1, 0.1, opt);
  const double w = std::sqrt(3 * kappa * kappa / (4 * kPi) + 1.0 - 0.25);
  for (std::size_t i = 0; i < rec.times.size(); ++i) {
    const double t = rec.times[i];
    const double exact = amp * std::exp(-t / 2) * (std::cos(w * t) + std::sin(w * t) / (2 * w));
    CHECK(std::abs(rec.snapshots[i].pos(1, 0).real() - exact) <= 1e-4 * amp);
  }
}

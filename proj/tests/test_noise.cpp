#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "sdnlw/noise.hpp"

using namespace sdnlw;
using Catch::Approx;

TEST_CASE("Philox4x32-10 known-answer vectors") {
  using B = Philox4x32::block;
  CHECK(Philox4x32(0)({0, 0, 0, 0}) == B{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  CHECK(Philox4x32(0xffffffffffffffffull)({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}) ==
        B{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  CHECK(Philox4x32(0x299f31d0a4093822ull)({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}) ==
        B{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("streams are pure functions of their indices") {
  const NoiseStream s{42, StreamRole::wiener, 3};
  const auto a = s.normal_pair({2, -1}, 17, 1);
  (void)s.normal_pair({0, 0}, 0, 0);
  CHECK(s.normal_pair({2, -1}, 17, 1) == a);
  CHECK(NoiseStream{43, StreamRole::wiener, 3}.normal_pair({2, -1}, 17, 1) != a);
  CHECK(NoiseStream{42, StreamRole::wiener, 4}.normal_pair({2, -1}, 17, 1) != a);
  CHECK(s.with_role(StreamRole::initial_g).normal_pair({2, -1}, 17, 1) != a);
  CHECK(s.normal_pair({2, -1}, 18, 1) != a);
  CHECK(s.normal_pair({2, -1}, 17, 2) != a);
  CHECK(s.normal_pair({-1, 2}, 17, 1) != a);
  CHECK_THROWS_AS(s.normal_pair({40000, 0}, 0), std::out_of_range);
}

TEST_CASE("standard normal moments") {
  const NoiseStream s{5, StreamRole::wiener, 0};
  std::vector<double> x, x2, x4;
  for (std::uint32_t k = 0; k < 100000; ++k) {
    const auto p = s.normal_pair({1, 1}, k);
    for (double v : p) {
      x.push_back(v);
      x2.push_back(v * v);
      x4.push_back(v * v * v * v);
    }
  }
  const auto m1 = oracle::moments(x), m2 = oracle::moments(x2), m4 = oracle::moments(x4);
  CHECK(std::abs(m1.mean) <= 3 * m1.se);
  CHECK(std::abs(m2.mean - 1.0) <= 3 * m2.se);
  CHECK(std::abs(m4.mean - 3.0) <= 3 * m4.se);
}

TEST_CASE("wiener_increment covariance") {
  const NoiseStream s{9, StreamRole::wiener, 0};
  const Mode n{1, 0}, m{0, 1};
  for (double dt : {1e-1, 1e-2, 1e-3}) {
    std::vector<double> var_n, var_0, cross_re, cross_im;
    for (std::uint32_t k = 0; k < 100000; ++k) {
      const auto w = wiener_increment(1, dt, s, k);
      var_n.push_back(std::norm(w[n]) / dt);
      var_0.push_back(std::norm(w[{0, 0}]) / dt);
      const cplx c = w[n] * std::conj(w[m]) / dt;
      cross_re.push_back(c.real());
      cross_im.push_back(c.imag());
      if (k == 0) CHECK(w.hermitian_defect() == 0.0);
    }
    const auto a = oracle::moments(var_n), b = oracle::moments(var_0);
    CHECK(std::abs(a.mean - 1.0) <= 3 * a.se);
    CHECK(std::abs(b.mean - 1.0) <= 3 * b.se);
    const auto cr = oracle::moments(cross_re), ci = oracle::moments(cross_im);
    CHECK(std::abs(cr.mean) <= 3 * cr.se);
    CHECK(std::abs(ci.mean) <= 3 * ci.se);
  }
  CHECK_THROWS_AS(wiener_increment(1, 0.0, s, 0), std::invalid_argument);
}

TEST_CASE("sample_initial") {
  const auto zero = sample_initial(strong_constants(0.0, 4), NoiseStream{1});
  CHECK(zero.z0.is_zero());
  CHECK(zero.z1.is_zero());

  // N = 0: one real mode with variance alpha^2 / (2 lambda)
  const auto rc0 = strong_constants(1.0, 0 + 1);
  RenormConstants single = rc0;
  single.N = 0;
  std::vector<double> v, w;
  for (std::uint32_t r = 0; r < 100000; ++r) {
    const auto g = sample_initial(single, NoiseStream{77, StreamRole::wiener, r});
    CHECK(g.z0(0, 0).imag() == 0.0);
    v.push_back(std::norm(g.z0(0, 0)));
    w.push_back(std::norm(g.z1(0, 0)));
  }
  const auto mv = oracle::moments(v), mw = oracle::moments(w);
  CHECK(std::abs(mv.mean - 1.0 / (2 * single.lambda)) <= 3 * mv.se);
  CHECK(std::abs(mw.mean - 0.5) <= 3 * mw.se);

  // E ||z0||_{L^2}^2 = alpha^2/2 sum 1/<n>_N^2
  const auto rc = strong_constants(1.3, 6);
  std::vector<double> l2;
  for (std::uint32_t r = 0; r < 20000; ++r) {
    const double s = sobolev_norm(sample_initial(rc, NoiseStream{3, StreamRole::wiener, r}).z0, 0.0);
    l2.push_back(s * s);
  }
  const auto ml = oracle::moments(l2);
  CHECK(std::abs(ml.mean - 0.5 * 1.3 * 1.3 * mode_sum(rc.lambda, 6)) <= 3 * ml.se);
}

#pragma once

// Counter-based Gaussian sampling for initial data and Wiener increments.
//
// Every Gaussian is a pure function of (seed, role, replica, step, mode):
// the Philox4x32-10 block cipher is keyed by the seed and fed a counter
// that encodes the rest. Draws are keyed by mode coordinates rather than a
// running index, so two truncations N < N' see the same numbers on the
// shared modes.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "sdnlw/renorm.hpp"
#include "sdnlw/spectral.hpp"

namespace sdnlw {

class Philox4x32 {
 public:
  using block = std::array<std::uint32_t, 4>;

  explicit Philox4x32(std::uint64_t key)
      : key_{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32)} {}

  block operator()(block ctr) const {
    std::array<std::uint32_t, 2> k = key_;
    for (int r = 0; r < 10; ++r) {
      ctr = round(ctr, k);
      k[0] += kW0;
      k[1] += kW1;
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kM0 = 0xD2511F53u;
  static constexpr std::uint32_t kM1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kW0 = 0x9E3779B9u;
  static constexpr std::uint32_t kW1 = 0xBB67AE85u;

  static block round(const block& c, const std::array<std::uint32_t, 2>& k) {
    const std::uint64_t p0 = std::uint64_t{kM0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kM1} * c[2];
    return {static_cast<std::uint32_t>(p1 >> 32) ^ c[1] ^ k[0], static_cast<std::uint32_t>(p1),
            static_cast<std::uint32_t>(p0 >> 32) ^ c[3] ^ k[1], static_cast<std::uint32_t>(p0)};
  }

  std::array<std::uint32_t, 2> key_;
};

enum class StreamRole : std::uint32_t { initial_g = 1, initial_h = 2, wiener = 3, initial_aux = 4 };

inline std::string to_string(StreamRole r) {
  switch (r) {
    case StreamRole::initial_g: return "initial_g";
    case StreamRole::initial_h: return "initial_h";
    case StreamRole::wiener: return "wiener";
    case StreamRole::initial_aux: return "initial_aux";
  }
  return "?";
}

struct NoiseStream {
  std::uint64_t seed = 0;
  StreamRole role = StreamRole::wiener;
  std::uint32_t replica = 0;

  NoiseStream with_role(StreamRole r) const { return {seed, r, replica}; }

  /// Two independent standard normals for (mode, step, draw).
  std::array<double, 2> normal_pair(Mode m, std::uint32_t step, std::uint32_t draw = 0) const {
    if (std::abs(m.n1) >= 32768 || std::abs(m.n2) >= 32768 || draw >= (1u << 24))
      throw std::out_of_range("NoiseStream: index out of range");
    const std::uint32_t mode_word = (static_cast<std::uint32_t>(m.n1 + 32768) << 16) |
                                    static_cast<std::uint32_t>(m.n2 + 32768);
    const std::uint32_t tag = (static_cast<std::uint32_t>(role) << 24) | draw;
    const auto r = Philox4x32(seed)({mode_word, step, replica, tag});
    const double u1 = to_unit_open(r[0], r[1]);
    const double u2 = to_unit_open(r[2], r[3]);
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = kTwoPi * u2;
    return {rad * std::cos(ang), rad * std::sin(ang)};
  }

  /// Standard complex Gaussian: E|g|^2 = 1, real and imaginary parts N(0, 1/2).
  cplx complex_normal(Mode m, std::uint32_t step, std::uint32_t draw = 0) const {
    const auto p = normal_pair(m, step, draw);
    return {p[0] * std::sqrt(0.5), p[1] * std::sqrt(0.5)};
  }

 private:
  // 53-bit uniform in (0, 1].
  static double to_unit_open(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((std::uint64_t{hi} << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
  }
};

/// Hermitian field whose representatives carry a standard Gaussian:
/// complex with E|g|^2 = 1 for n != 0, real N(0, 1) at n = 0.
template <class Scale>
SpectralField gaussian_field(int N, const NoiseStream& s, std::uint32_t step, std::uint32_t draw,
                             Scale&& scale) {
  SpectralField f(N);
  for (int a = 0; a <= N; ++a)
    for (int b = -N; b <= N; ++b) {
      const Mode m{a, b};
      if (!is_representative(m) || !m.in_ball(N)) continue;
      cplx g;
      if (a == 0 && b == 0)
        g = s.normal_pair(m, step, draw)[0];
      else
        g = s.complex_normal(m, step, draw);
      f.set_pair(m, g * scale(m));
    }
  return f;
}

struct GaussianPair {
  SpectralField z0;
  SpectralField z1;
};

/// A draw from the invariant Gaussian measure of the linear flow:
/// z0(n) = alpha / sqrt(2 a) g_n / <n>_N,  z1(n) = alpha / sqrt(2 a) h_n.
inline GaussianPair sample_initial(const RenormConstants& rc, const NoiseStream& stream) {
  const int N = rc.N;
  const double amp = rc.alpha / std::sqrt(2.0 * rc.damping);
  if (rc.alpha == 0.0) return {SpectralField(N), SpectralField(N)};
  const double lam = rc.lambda;
  auto g = gaussian_field(N, stream.with_role(StreamRole::initial_g), 0, 0, [&](Mode m) {
    return amp / std::sqrt(lam + static_cast<double>(m.norm2()));
  });
  auto h = gaussian_field(N, stream.with_role(StreamRole::initial_h), 0, 0, [&](Mode) { return amp; });
  return {std::move(g), std::move(h)};
}

/// Increment of the projected cylindrical Wiener process over a step of
/// length dt: E|dW(n)|^2 = dt, Hermitian-paired.
inline SpectralField wiener_increment(int N, double dt, const NoiseStream& stream, std::uint32_t step,
                                      std::uint32_t draw = 0) {
  if (!(dt > 0.0)) throw std::invalid_argument("wiener_increment: dt must be > 0");
  const double sd = std::sqrt(dt);
  return gaussian_field(N, stream.with_role(StreamRole::wiener), step, draw, [sd](Mode) { return sd; });
}

}  // namespace sdnlw

#pragma once

// Fourier representation of real fields on the torus (R/2piZ)^2.
//
// Coefficients are taken against the orthonormal basis
//   e_n(x) = (2pi)^{-1} exp(i n.x),
// so f(x) = sum_n fhat(n) e_n(x) and ||f||_{L^2}^2 = sum_n |fhat(n)|^2.
// A field with band limit N stores the full square [-N, N]^2 of
// coefficients; modes outside the ball |n| <= N are structural zeros.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sdnlw {

using cplx = std::complex<double>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Mode {
  int n1 = 0;
  int n2 = 0;

  constexpr std::int64_t norm2() const {
    return std::int64_t{n1} * n1 + std::int64_t{n2} * n2;
  }
  constexpr bool in_ball(int N) const {
    return N >= 0 && norm2() <= std::int64_t{N} * N;
  }
  /// Japanese bracket <n> = (1 + |n|^2)^{1/2}.
  double bracket() const { return std::sqrt(1.0 + static_cast<double>(norm2())); }
  constexpr Mode operator-() const { return {-n1, -n2}; }
  constexpr bool operator==(const Mode&) const = default;
};

/// Representative of the pair {n, -n}: the lexicographically larger one.
/// The zero mode is its own representative.
constexpr bool is_representative(Mode m) {
  return m.n1 > 0 || (m.n1 == 0 && m.n2 >= 0);
}

inline double bracket_pow(std::int64_t norm2, double s) {
  return std::pow(1.0 + static_cast<double>(norm2), 0.5 * s);
}

class SpectralField {
 public:
  SpectralField() = default;
  explicit SpectralField(int band) : band_(band) {
    if (band < 0) throw std::invalid_argument("SpectralField: negative band");
    coeffs_.assign(static_cast<std::size_t>(width()) * width(), cplx{});
  }

  int band() const { return band_; }
  int width() const { return 2 * band_ + 1; }

  cplx& operator()(int n1, int n2) { return coeffs_[index(n1, n2)]; }
  const cplx& operator()(int n1, int n2) const { return coeffs_[index(n1, n2)]; }
  cplx& operator[](Mode m) { return (*this)(m.n1, m.n2); }
  const cplx& operator[](Mode m) const { return (*this)(m.n1, m.n2); }

  /// Coefficient at n, zero if n lies outside the stored square.
  cplx get(int n1, int n2) const {
    if (std::abs(n1) > band_ || std::abs(n2) > band_) return {};
    return (*this)(n1, n2);
  }

  /// Sets fhat(n) and fhat(-n) = conj(fhat(n)) together.
  void set_pair(Mode m, cplx value) {
    if (m.n1 == 0 && m.n2 == 0) value = cplx(value.real(), 0.0);
    (*this)[m] = value;
    (*this)[-m] = std::conj(value);
  }

  std::span<cplx> data() { return coeffs_; }
  std::span<const cplx> data() const { return coeffs_; }

  bool is_zero() const {
    return std::all_of(coeffs_.begin(), coeffs_.end(),
                       [](cplx c) { return c == cplx{}; });
  }

  /// Largest |fhat(-n) - conj(fhat(n))| over the stored square.
  double hermitian_defect() const {
    double worst = 0.0;
    for (int a = -band_; a <= band_; ++a)
      for (int b = -band_; b <= band_; ++b)
        worst = std::max(worst, std::abs((*this)(-a, -b) - std::conj((*this)(a, b))));
    return worst;
  }

  SpectralField& operator+=(const SpectralField& o) {
    if (o.band_ == band_) {
      for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += o.coeffs_[i];
      return *this;
    }
    const int b = std::min(band_, o.band_);
    for (int a = -b; a <= b; ++a)
      for (int c = -b; c <= b; ++c) (*this)(a, c) += o(a, c);
    return *this;
  }
  SpectralField& operator-=(const SpectralField& o) {
    if (o.band_ == band_) {
      for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] -= o.coeffs_[i];
      return *this;
    }
    const int b = std::min(band_, o.band_);
    for (int a = -b; a <= b; ++a)
      for (int c = -b; c <= b; ++c) (*this)(a, c) -= o(a, c);
    return *this;
  }
  SpectralField& operator*=(double s) {
    for (auto& c : coeffs_) c *= s;
    return *this;
  }
  /// this += s * o (o must share the band).
  void axpy(double s, const SpectralField& o) {
    if (o.band_ != band_) throw std::invalid_argument("axpy: band mismatch");
    for (std::size_t i = 0; i < coeffs_.size(); ++i) coeffs_[i] += s * o.coeffs_[i];
  }

  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }

  /// Copy onto a new band: truncates to the square [-band, band]^2 or pads with zeros.
  SpectralField with_band(int band) const {
    SpectralField out(band);
    const int b = std::min(band, band_);
    for (int a = -b; a <= b; ++a)
      for (int c = -b; c <= b; ++c) out(a, c) = (*this)(a, c);
    return out;
  }

 private:
  std::size_t index(int n1, int n2) const {
    return static_cast<std::size_t>(n1 + band_) * width() + static_cast<std::size_t>(n2 + band_);
  }

  int band_ = 0;
  std::vector<cplx> coeffs_{cplx{}};
};

/// Phase-space state (u, d_t u).
struct PairState {
  SpectralField pos;
  SpectralField vel;

  PairState() = default;
  explicit PairState(int band) : pos(band), vel(band) {}
  PairState(SpectralField p, SpectralField v) : pos(std::move(p)), vel(std::move(v)) {
    if (pos.band() != vel.band()) throw std::invalid_argument("PairState: band mismatch");
  }
  int band() const { return pos.band(); }
};

/// Real samples on the collocation grid x_j = 2 pi j / M, row-major (j1, j2).
struct PhysicalGrid {
  int size = 0;
  std::vector<double> values;

  PhysicalGrid() = default;
  explicit PhysicalGrid(int m) : size(m), values(static_cast<std::size_t>(m) * m, 0.0) {}
  double& operator()(int j1, int j2) { return values[static_cast<std::size_t>(j1) * size + j2]; }
  double operator()(int j1, int j2) const { return values[static_cast<std::size_t>(j1) * size + j2]; }
  double max_abs() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
};

/// Smallest even 2^a 3^b that is >= min_size. Factors of 5 are left out:
/// FFTW_ESTIMATE plans for them are markedly slower (540 vs 576).
inline int fft_size(int min_size) {
  int m = std::max(2, min_size);
  for (;; ++m) {
    if (m % 2 != 0) continue;
    int r = m;
    for (int p : {2, 3})
      while (r % p == 0) r /= p;
    if (r == 1) return m;
  }
}

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

/// Owns aligned buffers and r2c/c2r plans for one square grid size.
/// Not shared across threads; see grid_transform().
///
/// The 2D transforms are split into a row pass over all M rows and a column
/// pass over the b-columns that can be nonzero: on input only b <= band, on
/// output only b <= N are read back. For N ~ M/4 this skips more than half of
/// the column work and FFTW's internal 2D transposition copies.
class GridTransform {
 public:
  explicit GridTransform(int m) : m_(m), half_(m / 2 + 1) {
    real_ = fftw_alloc_real(static_cast<std::size_t>(m) * m);
    spec_ = fftw_alloc_complex(static_cast<std::size_t>(m) * half_);
    if (real_ == nullptr || spec_ == nullptr) throw std::bad_alloc();
    std::lock_guard lock(fftw_planner_mutex());
    rows_r2c_ = fftw_plan_many_dft_r2c(1, &m_, m_, real_, nullptr, 1, m_, spec_, nullptr, 1, half_, FFTW_ESTIMATE);
    rows_c2r_ = fftw_plan_many_dft_c2r(1, &m_, m_, spec_, nullptr, 1, half_, real_, nullptr, 1, m_, FFTW_ESTIMATE);
  }
  GridTransform(const GridTransform&) = delete;
  GridTransform& operator=(const GridTransform&) = delete;
  ~GridTransform() {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(rows_r2c_);
    fftw_destroy_plan(rows_c2r_);
    for (auto& [k, p] : columns_) fftw_destroy_plan(p);
    fftw_free(real_);
    fftw_free(spec_);
  }

  int size() const { return m_; }

  /// Writes f onto the grid: out(x_j) = sum_n fhat(n) e_n(x_j).
  void to_grid(const SpectralField& f, std::span<double> out) {
    backward(f);
    std::copy(real_, real_ + static_cast<std::size_t>(m_) * m_, out.begin());
  }

  /// Exact Fourier coefficients of grid samples on the ball |n| <= N.
  SpectralField from_grid(std::span<const double> in, int N) {
    check_out_band(N);
    std::copy(in.begin(), in.end(), real_);
    forward(N);
    return extract(N);
  }

  /// P_N of op(f(x)) evaluated pointwise, without intermediate copies.
  template <class Op>
  SpectralField map(const SpectralField& f, int N, Op&& op) {
    check_out_band(N);
    backward(f);
    const std::size_t n = static_cast<std::size_t>(m_) * m_;
    for (std::size_t i = 0; i < n; ++i) real_[i] = op(real_[i]);
    forward(N);
    return extract(N);
  }

  /// P_N of p(f(x) + g(x)) with p(u) = sum_i p[i] u^i; g may be null. Horner
  /// runs over blocks of grid points, one coefficient at a time, so the inner
  /// loop vectorizes.
  SpectralField map_polynomial(const SpectralField& f, const SpectralField* g, int N, std::span<const double> p) {
    check_out_band(N);
    if (p.empty()) throw std::invalid_argument("map_polynomial: empty coefficient list");
    if (g != nullptr && g->band() != f.band()) throw std::invalid_argument("map_polynomial: band mismatch");
    backward(f, g);
    constexpr std::size_t kBlock = 512;
    double acc[kBlock];
    const std::size_t n = static_cast<std::size_t>(m_) * m_;
    for (std::size_t lo = 0; lo < n; lo += kBlock) {
      const std::size_t len = std::min(kBlock, n - lo);
      double* u = real_ + lo;
      std::fill_n(acc, len, p.back());
      for (std::size_t i = p.size() - 1; i-- > 0;) {
        const double c = p[i];
        for (std::size_t k = 0; k < len; ++k) acc[k] = acc[k] * u[k] + c;
      }
      std::copy_n(acc, len, u);
    }
    forward(N);
    return extract(N);
  }

 private:
  void check_out_band(int N) const {
    if (N > m_ / 2 - 1) throw std::invalid_argument("to_spectral: band exceeds grid resolution");
  }

  // In-place transforms along a for the columns b = 0..cols-1 of spec_.
  fftw_plan columns(int cols, int sign) {
    auto& p = columns_[{cols, sign}];
    if (p == nullptr) {
      std::lock_guard lock(fftw_planner_mutex());
      p = fftw_plan_many_dft(1, &m_, cols, spec_, nullptr, half_, 1, spec_, nullptr, half_, 1, sign, FFTW_ESTIMATE);
    }
    return p;
  }

  void backward(const SpectralField& f, const SpectralField* g = nullptr) {
    load(f, g);
    fftw_execute(columns(f.band() + 1, FFTW_BACKWARD));
    fftw_execute(rows_c2r_);
  }

  void forward(int N) {
    fftw_execute(rows_r2c_);
    fftw_execute(columns(N + 1, FFTW_FORWARD));
  }

  void load(const SpectralField& f, const SpectralField* g = nullptr) {
    const int N = f.band();
    if (m_ < 2 * N + 2) throw std::invalid_argument("to_physical: grid too small for band limit");
    // the row c2r pass overwrites its input, so every column is reset
    std::memset(spec_, 0, sizeof(fftw_complex) * static_cast<std::size_t>(m_) * half_);
    const double scale = 1.0 / kTwoPi;
    const std::int64_t N2 = std::int64_t{N} * N;
    for (int a = -N; a <= N; ++a) {
      const int row = (a % m_ + m_) % m_;
      for (int b = 0; b <= N; ++b) {
        if (std::int64_t{a} * a + std::int64_t{b} * b > N2) break;
        const cplx c = (g != nullptr ? f(a, b) + (*g)(a, b) : f(a, b)) * scale;
        auto& slot = spec_[static_cast<std::size_t>(row) * half_ + b];
        slot[0] = c.real();
        slot[1] = c.imag();
      }
    }
  }

  SpectralField extract(int N) const {
    SpectralField f(N);
    const double scale = kTwoPi / (static_cast<double>(m_) * m_);
    const std::int64_t N2 = std::int64_t{N} * N;
    for (int a = -N; a <= N; ++a) {
      const int row = (a % m_ + m_) % m_;
      for (int b = 0; b <= N; ++b) {
        if (std::int64_t{a} * a + std::int64_t{b} * b > N2) break;
        const auto& slot = spec_[static_cast<std::size_t>(row) * half_ + b];
        const cplx c(slot[0] * scale, slot[1] * scale);
        f(a, b) = c;
        f(-a, -b) = std::conj(c);
      }
    }
    f(0, 0) = cplx(f(0, 0).real(), 0.0);
    return f;
  }

  int m_;
  int half_;
  double* real_ = nullptr;
  fftw_complex* spec_ = nullptr;
  fftw_plan rows_r2c_ = nullptr;
  fftw_plan rows_c2r_ = nullptr;
  std::map<std::pair<int, int>, fftw_plan> columns_;
};

}  // namespace detail

/// Per-thread transform cache keyed by grid size.
inline detail::GridTransform& grid_transform(int m) {
  thread_local std::map<int, std::unique_ptr<detail::GridTransform>> cache;
  auto& slot = cache[m];
  if (!slot) slot = std::make_unique<detail::GridTransform>(m);
  return *slot;
}

/// Dirichlet projection onto |n| <= N. The output keeps the input's band.
inline SpectralField project(const SpectralField& f, int N) {
  if (N < 0) throw std::invalid_argument("project: N must be >= 0");
  SpectralField out = f;
  const int B = f.band();
  for (int a = -B; a <= B; ++a)
    for (int b = -B; b <= B; ++b)
      if (!Mode{a, b}.in_ball(N)) out(a, b) = cplx{};
  return out;
}

inline PairState project(const PairState& s, int N) {
  return PairState(project(s.pos, N), project(s.vel, N));
}

inline PhysicalGrid to_physical(const SpectralField& f, int M) {
  PhysicalGrid g(M);
  grid_transform(M).to_grid(f, g.values);
  return g;
}

inline SpectralField to_spectral(const PhysicalGrid& g, int N) {
  return grid_transform(g.size).from_grid(g.values, N);
}

/// Fourier multiplier <n>^s.
inline SpectralField apply_bessel(const SpectralField& f, double s) {
  SpectralField out = f;
  const int B = f.band();
  for (int a = -B; a <= B; ++a)
    for (int b = -B; b <= B; ++b) out(a, b) *= bracket_pow(Mode{a, b}.norm2(), s);
  return out;
}

/// Evaluates a pointwise polynomial map of several band-limited fields and
/// returns the coefficients of the result on the ball |n| <= out_band.
/// `grid_min` is the smallest admissible grid; the actual grid is the next
/// FFT-friendly size.
template <class PointwiseOp>
SpectralField pointwise(std::span<const SpectralField* const> inputs, int out_band, int grid_min,
                        PointwiseOp&& op) {
  const int M = fft_size(grid_min);
  auto& tr = grid_transform(M);
  std::vector<std::vector<double>> grids(inputs.size(),
                                         std::vector<double>(static_cast<std::size_t>(M) * M));
  for (std::size_t k = 0; k < inputs.size(); ++k) tr.to_grid(*inputs[k], grids[k]);
  std::vector<double> out(static_cast<std::size_t>(M) * M);
  std::vector<double> args(inputs.size());
  for (std::size_t j = 0; j < out.size(); ++j) {
    for (std::size_t k = 0; k < inputs.size(); ++k) args[k] = grids[k][j];
    out[j] = op(std::span<const double>(args));
  }
  return tr.from_grid(out, out_band);
}

/// Exact coefficients of f^3 on |n| <= 3 N_max.
/// Full-band exactness needs M > 6 N_max; see README ("Dealiasing").
inline SpectralField cubic_dealiased(const SpectralField& f) {
  const SpectralField* in[] = {&f};
  const int N = f.band();
  return pointwise(in, 3 * N, 6 * N + 2, [](std::span<const double> x) { return x[0] * x[0] * x[0]; });
}

/// Coefficients of f*g on |n| <= N_f + N_g.
inline SpectralField multiply(const SpectralField& f, const SpectralField& g) {
  const SpectralField* in[] = {&f, &g};
  const int out_band = f.band() + g.band();
  return pointwise(in, out_band, 2 * out_band + 2,
                   [](std::span<const double> x) { return x[0] * x[1]; });
}

inline double sobolev_norm(const SpectralField& f, double s) {
  double acc = 0.0;
  const int B = f.band();
  for (int a = -B; a <= B; ++a)
    for (int b = -B; b <= B; ++b) {
      const double m = std::norm(f(a, b));
      if (m != 0.0) acc += bracket_pow(Mode{a, b}.norm2(), 2.0 * s) * m;
    }
  return std::sqrt(acc);
}

/// ||f - g||_{H^s} for fields of possibly different bands.
inline double sobolev_distance(const SpectralField& f, const SpectralField& g, double s) {
  const int B = std::max(f.band(), g.band());
  double acc = 0.0;
  for (int a = -B; a <= B; ++a)
    for (int b = -B; b <= B; ++b) {
      const double m = std::norm(f.get(a, b) - g.get(a, b));
      if (m != 0.0) acc += bracket_pow(Mode{a, b}.norm2(), 2.0 * s) * m;
    }
  return std::sqrt(acc);
}

/// Grid maximum of |<nabla>^s f| on M = oversample * (2 N_max + 2) points per
/// dimension (rounded up to an FFT-friendly size). Approximates the
/// W^{s,infinity} norm from below.
inline double winfty_norm(const SpectralField& f, double s, int oversample = 4) {
  if (oversample < 2) throw std::invalid_argument("winfty_norm: oversample must be >= 2");
  const int M = fft_size(oversample * (2 * f.band() + 2));
  return to_physical(apply_bessel(f, s), M).max_abs();
}

}  // namespace sdnlw

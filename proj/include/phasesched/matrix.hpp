#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace phasesched {

/// Dense row-major matrix of 64-bit floats. All public operations keep
/// entries finite; dimension mismatches throw std::invalid_argument.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c); }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
  }

  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  bool same_shape(const Matrix& o) const {
    return rows == o.rows && cols == o.cols;
  }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows, "matmul: inner dimensions do not match");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = a.at(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) {
        out.at(i, j) += aik * b.at(k, j);
      }
    }
  }
  require(out.all_finite(), "matmul: non-finite result");
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

inline Matrix add(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "add: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

inline Matrix sub(const Matrix& a, const Matrix& b) {
  require(a.same_shape(b), "sub: shape mismatch");
  Matrix out = a;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
  return out;
}

inline double frobenius_sq(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data) s += v * v;
  return s;
}

/// Counter-based splittable RNG. The stream is a pure function of
/// (key, counter), so state is two 64-bit words and identical seeds give
/// identical draws on every platform.
struct Rng {
  std::uint64_t key = 0;
  std::uint64_t ctr = 0;

  explicit Rng(std::uint64_t seed = 0) : key(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() { return mix(key + 0x632be59bd9b4e019ull * ++ctr); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller; two uniforms per draw, no carry state.
  double gaussian() {
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  /// Independent child stream; the parent advances by one draw.
  Rng split() {
    Rng child(0);
    child.key = mix(next_u64() ^ 0xd6e8feb86659fd93ull);
    child.ctr = 0;
    return child;
  }
};

inline std::vector<double> draw_gaussian(Rng& rng, std::size_t n) {
  require(n >= 1, "draw_gaussian: n must be >= 1");
  std::vector<double> out(n);
  for (auto& v : out) v = rng.gaussian();
  return out;
}

inline std::uint64_t fnv1a64(const void* bytes, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t hash_matrix(const Matrix& m, std::uint64_t h = 0xcbf29ce484222325ull) {
  h = fnv1a64(&m.rows, sizeof(m.rows), h);
  h = fnv1a64(&m.cols, sizeof(m.cols), h);
  return fnv1a64(m.data.data(), m.data.size() * sizeof(double), h);
}

}  // namespace phasesched

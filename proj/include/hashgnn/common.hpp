#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace hashgnn {

using Rng = std::mt19937_64;

// Error taxonomy. ConfigError: caller misuse (bad flags, shape mismatch).
// DataError: malformed or inconsistent inputs. NumericError: math failure
// at runtime (non-finite values, divergence).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : DataError {
  ParseError(const std::string& msg, std::size_t line_no)
      : DataError("line " + std::to_string(line_no) + ": " + msg), line(line_no) {}
  std::size_t line;
};
struct EmptyGraphError : DataError {
  using DataError::DataError;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix; the only tensor type used by the model.
template <typename T>
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<T> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const T> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
  void fill(T v) { std::fill(data.begin(), data.end(), v); }
  std::size_t size() const { return data.size(); }
};

template <typename T>
Mat<T> randn(std::size_t rows, std::size_t cols, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Mat<T> m(rows, cols);
  for (auto& v : m.data) v = static_cast<T>(dist(rng));
  return m;
}

template <typename T>
bool all_finite(const Mat<T>& m) {
  for (T v : m.data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

// C = A * B
template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  if (a.cols != b.rows) throw ConfigError("matmul: inner dimensions differ");
  Mat<T> c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const T* arow = a.data.data() + i * a.cols;
    T* crow = c.data.data() + i * c.cols;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const T aik = arow[k];
      const T* brow = b.data.data() + k * b.cols;
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

// C += A^T * B
template <typename T>
void add_matmul_tn(Mat<T>& c, const Mat<T>& a, const Mat<T>& b) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols)
    throw ConfigError("add_matmul_tn: dimension mismatch");
  for (std::size_t k = 0; k < a.rows; ++k) {
    const T* arow = a.data.data() + k * a.cols;
    const T* brow = b.data.data() + k * b.cols;
    for (std::size_t i = 0; i < a.cols; ++i) {
      const T aki = arow[i];
      T* crow = c.data.data() + i * c.cols;
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
    }
  }
}

// C = A * B^T
template <typename T>
Mat<T> matmul_nt(const Mat<T>& a, const Mat<T>& b) {
  if (a.cols != b.cols) throw ConfigError("matmul_nt: dimension mismatch");
  Mat<T> c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.rows; ++j) {
      T s = T(0);
      const T* arow = a.data.data() + i * a.cols;
      const T* brow = b.data.data() + j * b.cols;
      for (std::size_t k = 0; k < a.cols; ++k) s += arow[k] * brow[k];
      c(i, j) = s;
    }
  return c;
}

template <typename T>
T dot(std::span<const T> a, std::span<const T> b) {
  T s = T(0);
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

// log sigma(x) = -softplus(-x); stable for large |x|
template <typename T>
T log_sigmoid(T x) {
  return -softplus(-x);
}

inline unsigned default_thread_count() {
  if (const char* env = std::getenv("HASHGNN_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<unsigned>(n);
  }
  return 1;
}

// Static block partition; body(i) calls must write disjoint state so the
// result is identical for any worker count.
template <typename F>
void parallel_for(std::size_t n, unsigned threads, F&& body) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = w * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&body, begin, end] {
      for (std::size_t i = begin; i < end; ++i) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace hashgnn

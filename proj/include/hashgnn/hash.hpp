#pragma once

#include <cstdint>
#include <vector>

#include "hashgnn/common.hpp"

namespace hashgnn {

// Bit-packed binary codes, one row per node: bit k of word k/64 is 1 for a
// +1 code entry and 0 for -1. Little-endian words; padding bits past k_bits
// stay zero so rows compare and hash cleanly.
struct CodeMatrix {
  std::uint32_t n = 0;
  std::uint32_t k_bits = 0;
  std::size_t words_per_row = 0;
  std::vector<std::uint64_t> words;

  CodeMatrix() = default;
  CodeMatrix(std::uint32_t rows, std::uint32_t bits)
      : n(rows), k_bits(bits), words_per_row((bits + 63) / 64), words(std::size_t(rows) * words_per_row, 0) {}

  std::span<const std::uint64_t> row(std::uint32_t r) const {
    return {words.data() + std::size_t(r) * words_per_row, words_per_row};
  }
  std::span<std::uint64_t> row(std::uint32_t r) {
    return {words.data() + std::size_t(r) * words_per_row, words_per_row};
  }

  void set_row(std::uint32_t r, std::span<const float> signs) {
    auto w = row(r);
    std::fill(w.begin(), w.end(), 0);
    for (std::uint32_t k = 0; k < k_bits; ++k)
      if (signs[k] >= 0.0f) w[k / 64] |= std::uint64_t(1) << (k % 64);
  }

  // Extract a sub-block of rows [begin, end).
  CodeMatrix slice_rows(std::uint32_t begin, std::uint32_t end) const {
    CodeMatrix out(end - begin, k_bits);
    std::copy(words.begin() + std::size_t(begin) * words_per_row,
              words.begin() + std::size_t(end) * words_per_row, out.words.begin());
    return out;
  }
};

template <typename T>
std::vector<T> unpack_code_row(const CodeMatrix& codes, std::uint32_t r) {
  std::vector<T> out(codes.k_bits);
  const auto w = codes.row(r);
  for (std::uint32_t k = 0; k < codes.k_bits; ++k)
    out[k] = (w[k / 64] >> (k % 64)) & 1 ? T(1) : T(-1);
  return out;
}

// Fully-connected hash layer: z = tanh(U * W + b), entries strictly inside
// (-1, 1).
template <typename T>
struct HashLayerParams {
  Mat<T> w;  // [in_dim x k_bits]
  Mat<T> b;  // [1 x k_bits]
};

template <typename T>
Mat<T> hash_forward(const HashLayerParams<T>& params, const Mat<T>& u) {
  if (u.cols != params.w.rows) throw ConfigError("hash layer input dimension mismatch");
  if (!all_finite(u)) throw NumericError("hash layer received non-finite input");
  Mat<T> z = matmul(u, params.w);
  for (std::size_t r = 0; r < z.rows; ++r) {
    auto zr = z.row(r);
    for (std::size_t k = 0; k < z.cols; ++k) zr[k] = std::tanh(zr[k] + params.b(0, k));
  }
  return z;
}

template <typename T>
struct HashLayerGrads {
  Mat<T> grad_w;
  Mat<T> grad_b;
  Mat<T> grad_u;
};

template <typename T>
HashLayerGrads<T> hash_backward(const HashLayerParams<T>& params, const Mat<T>& u, const Mat<T>& z,
                                const Mat<T>& grad_z) {
  if (!grad_z.same_shape(z) || u.rows != z.rows) throw ConfigError("hash backward shape mismatch");
  Mat<T> grad_pre = grad_z;  // d tanh = 1 - z^2
  for (std::size_t i = 0; i < grad_pre.data.size(); ++i)
    grad_pre.data[i] *= T(1) - z.data[i] * z.data[i];

  HashLayerGrads<T> grads;
  grads.grad_w = Mat<T>(params.w.rows, params.w.cols);
  add_matmul_tn(grads.grad_w, u, grad_pre);
  grads.grad_b = Mat<T>(1, params.w.cols);
  for (std::size_t r = 0; r < grad_pre.rows; ++r)
    for (std::size_t k = 0; k < grad_pre.cols; ++k) grads.grad_b(0, k) += grad_pre(r, k);
  grads.grad_u = matmul_nt(grad_pre, params.w);
  return grads;
}

// h = sign(z) with sign(0) = +1, as +-1 values.
template <typename T>
Mat<T> binarize(const Mat<T>& z) {
  Mat<T> h(z.rows, z.cols);
  for (std::size_t i = 0; i < z.data.size(); ++i) h.data[i] = z.data[i] >= T(0) ? T(1) : T(-1);
  return h;
}

template <typename T>
CodeMatrix pack_codes(const Mat<T>& z) {
  CodeMatrix codes(static_cast<std::uint32_t>(z.rows), static_cast<std::uint32_t>(z.cols));
  for (std::uint32_t r = 0; r < z.rows; ++r) {
    auto w = codes.row(r);
    const auto zr = z.row(r);
    for (std::uint32_t k = 0; k < codes.k_bits; ++k)
      if (zr[k] >= T(0)) w[k / 64] |= std::uint64_t(1) << (k % 64);
  }
  return codes;
}

// Independent Bernoulli(p) mask selecting continuous entries in the guided
// blend; resampled fresh for every batch.
template <typename T>
Mat<T> sample_guidance_mask(double p, std::size_t rows, std::size_t cols, Rng& rng) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("guidance probability must lie in [0, 1]");
  std::bernoulli_distribution coin(p);
  Mat<T> q(rows, cols);
  for (auto& v : q.data) v = coin(rng) ? T(1) : T(0);
  return q;
}

// h_mixed = Q .* z + (1 - Q) .* h
template <typename T>
Mat<T> guided_mix(const Mat<T>& z, const Mat<T>& h, const Mat<T>& q) {
  if (!z.same_shape(h) || !z.same_shape(q)) throw ConfigError("guided_mix shape mismatch");
  Mat<T> mixed(z.rows, z.cols);
  for (std::size_t i = 0; i < z.data.size(); ++i)
    mixed.data[i] = q.data[i] * z.data[i] + (T(1) - q.data[i]) * h.data[i];
  return mixed;
}

// Straight-through rule: gradients of the mixed code are copied to z
// unchanged. Masked entries genuinely flow through z; unmasked entries copy
// through the sign, so the combined surrogate Jacobian is the identity.
template <typename T>
Mat<T> ste_backward(const Mat<T>& grad_mixed) {
  return grad_mixed;
}

// Exact Jacobian of the blend at a fixed mask: only the Q = 1 entries are
// differentiable in z (sign is locally flat). Used by the gradient checker;
// training uses ste_backward.
template <typename T>
Mat<T> masked_mix_backward(const Mat<T>& grad_mixed, const Mat<T>& q) {
  if (!grad_mixed.same_shape(q)) throw ConfigError("masked_mix_backward shape mismatch");
  Mat<T> grad_z = grad_mixed;
  for (std::size_t i = 0; i < grad_z.data.size(); ++i) grad_z.data[i] *= q.data[i];
  return grad_z;
}

}  // namespace hashgnn

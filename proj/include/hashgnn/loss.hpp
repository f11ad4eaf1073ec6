#pragma once

#include <cstdint>
#include <span>

#include "hashgnn/common.hpp"
#include "hashgnn/graph.hpp"

namespace hashgnn {

// Loss components for one batch. total = cross_entropy + lambda * ranking.
struct LossReport {
  double total = 0.0;
  double cross_entropy = 0.0;
  double ranking = 0.0;
  double lambda = 0.0;
  std::size_t active_triplets = 0;
};

// Likelihood that the link indicator between two codes equals `label`:
// sigma(<a, b>) for an observed link, 1 - sigma(<a, b>) otherwise.
template <typename T>
T pair_likelihood(std::span<const T> code_i, std::span<const T> code_j, int label) {
  if (code_i.size() != code_j.size()) throw ConfigError("pair_likelihood length mismatch");
  const T p = sigmoid(dot(code_i, code_j));
  return label ? p : T(1) - p;
}

// Link-reconstruction cross-entropy over labeled pairs. Pair node values
// index rows of `codes`; callers working in graph node ids remap first.
// Gradients accumulate into `grads` (same shape as codes) when non-null:
// d/d h_i = (sigma(<h_i,h_j>) - label) * h_j and symmetrically for h_j.
template <typename T>
T cross_entropy_loss(const PairBatch& batch, const Mat<T>& codes, Mat<T>* grads = nullptr) {
  if (grads && !grads->same_shape(codes)) throw ConfigError("gradient shape mismatch");
  T loss = T(0);
  for (const auto& pair : batch.pairs) {
    const auto ci = codes.row(pair.node_i);
    const auto cj = codes.row(pair.node_j);
    const T score = dot(ci, cj);
    // -[y log sigma(s) + (1-y) log(1 - sigma(s))], in softplus form
    loss += pair.label ? softplus(-score) : softplus(score);
    if (grads) {
      const T coeff = sigmoid(score) - static_cast<T>(pair.label);
      auto gi = grads->row(pair.node_i);
      auto gj = grads->row(pair.node_j);
      for (std::size_t k = 0; k < ci.size(); ++k) {
        gi[k] += coeff * cj[k];
        gj[k] += coeff * ci[k];
      }
    }
  }
  return loss;
}

// Triplet ranking hinge: sum of max(0, -sigma(<h_a,h_p>) + sigma(<h_a,h_n>)
// + alpha). Triplet members index rows of `codes`. A triplet exactly at the
// hinge boundary contributes zero loss and zero gradient. Returns the loss
// and the number of active triplets.
template <typename T>
std::pair<T, std::size_t> ranking_loss(std::span<const Triplet> triplets, const Mat<T>& codes,
                                       T alpha, Mat<T>* grads = nullptr, T weight = T(1)) {
  if (grads && !grads->same_shape(codes)) throw ConfigError("gradient shape mismatch");
  T loss = T(0);
  std::size_t active = 0;
  for (const auto& t : triplets) {
    const auto ca = codes.row(t.anchor);
    const auto cp = codes.row(t.positive);
    const auto cn = codes.row(t.negative);
    const T s_pos = dot(ca, cp);
    const T s_neg = dot(ca, cn);
    const T value = -sigmoid(s_pos) + sigmoid(s_neg) + alpha;
    if (!(value > T(0))) continue;
    loss += value;
    ++active;
    if (grads) {
      const T sp = sigmoid(s_pos);
      const T sn = sigmoid(s_neg);
      const T dpos = -weight * sp * (T(1) - sp);  // d value / d s_pos, scaled
      const T dneg = weight * sn * (T(1) - sn);
      auto ga = grads->row(t.anchor);
      auto gp = grads->row(t.positive);
      auto gn = grads->row(t.negative);
      for (std::size_t k = 0; k < ca.size(); ++k) {
        ga[k] += dpos * cp[k] + dneg * cn[k];
        gp[k] += dpos * ca[k];
        gn[k] += dneg * ca[k];
      }
    }
  }
  return {loss, active};
}

// Combined objective: cross-entropy plus lambda-weighted ranking hinge.
// grads_out is overwritten with the merged per-row gradients.
template <typename T>
LossReport total_loss(const PairBatch& batch, std::span<const Triplet> triplets,
                      const Mat<T>& codes, T lambda, T alpha, Mat<T>* grads_out = nullptr) {
  if (lambda < T(0)) throw ConfigError("lambda must be non-negative");
  if (grads_out) {
    *grads_out = Mat<T>(codes.rows, codes.cols);
  }
  LossReport report;
  report.lambda = static_cast<double>(lambda);
  report.cross_entropy = static_cast<double>(cross_entropy_loss(batch, codes, grads_out));
  if (lambda > T(0) && !triplets.empty()) {
    const auto [rank, active] = ranking_loss(triplets, codes, alpha, grads_out, lambda);
    report.ranking = static_cast<double>(rank);
    report.active_triplets = active;
  }
  report.total = report.cross_entropy + report.lambda * report.ranking;
  return report;
}

}  // namespace hashgnn

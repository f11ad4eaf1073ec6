#pragma once

// Independent reference implementations used only to verify the library.
// These deliberately recompute results with different algorithms (dense
// matrices, full sorts, scalar loops) than the code under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_set>
#include <vector>

#include "hashgnn/common.hpp"
#include "hashgnn/encoder.hpp"
#include "hashgnn/graph.hpp"

namespace oracle {

// Dense-matrix mean-aggregation forward: builds the row-normalized (A + I)
// matrix over all nodes and applies it before every layer.
template <typename T>
hashgnn::Mat<T> dense_gcn_forward(const hashgnn::GcnParams<T>& params,
                                  const hashgnn::InteractionGraph& graph) {
  using hashgnn::Mat;
  const std::size_t n = graph.total_nodes();

  Mat<T> mean(n, n);
  std::vector<std::uint32_t> nbrs;
  for (std::uint32_t v = 0; v < n; ++v) {
    nbrs.clear();
    graph.neighbors_of(v, nbrs);
    const T share = T(1) / static_cast<T>(nbrs.size() + 1);
    mean(v, v) = share;
    for (std::uint32_t u : nbrs) mean(v, u) = share;
  }

  Mat<T> h = params.features;
  for (std::size_t l = 0; l < params.layer_weights.size(); ++l) {
    Mat<T> aggregated = hashgnn::matmul(mean, h);
    h = hashgnn::matmul(aggregated, params.layer_weights[l]);
    for (auto& v : h.data) v = hashgnn::apply_activation(params.activations[l], v);
  }
  return h;
}

// Scalar Adam, one parameter at a time, following the published update rule.
struct ReferenceAdam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  std::uint64_t t = 0;

  explicit ReferenceAdam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(std::vector<double>& theta, const std::vector<double>& grad, double lr) {
    ++t;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
      const double mhat = m[i] / (1.0 - std::pow(beta1, static_cast<double>(t)));
      const double vhat = v[i] / (1.0 - std::pow(beta2, static_cast<double>(t)));
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
};

// Brute-force scans: score every row, full sort, cut. Tie order matches the
// documented contract (ascending index).
struct ScoredRow {
  double key;  // smaller is better
  std::uint32_t index;
};

inline std::vector<std::uint32_t> brute_force_hamming(
    std::span<const std::uint64_t> query, const hashgnn::CodeMatrix& items, std::size_t top_m,
    const std::unordered_set<std::uint32_t>& exclude = {}) {
  std::vector<ScoredRow> rows;
  for (std::uint32_t i = 0; i < items.n; ++i) {
    if (exclude.count(i)) continue;
    std::uint32_t d = 0;
    const auto r = items.row(i);
    for (std::size_t w = 0; w < r.size(); ++w) {
      std::uint64_t x = query[w] ^ r[w];
      while (x) {
        d += x & 1;
        x >>= 1;
      }
    }
    rows.push_back({static_cast<double>(d), i});
  }
  std::sort(rows.begin(), rows.end(), [](const ScoredRow& a, const ScoredRow& b) {
    return a.key != b.key ? a.key < b.key : a.index < b.index;
  });
  if (rows.size() > top_m) rows.resize(top_m);
  std::vector<std::uint32_t> out;
  for (const auto& r : rows) out.push_back(r.index);
  return out;
}

inline std::vector<std::uint32_t> brute_force_continuous(
    std::span<const float> query, const hashgnn::EmbeddingMatrix& items, std::size_t top_n,
    const std::unordered_set<std::uint32_t>& exclude = {}) {
  std::vector<std::pair<float, std::uint32_t>> rows;
  for (std::uint32_t i = 0; i < items.n; ++i) {
    if (exclude.count(i)) continue;
    float s = 0.0f;
    const auto r = items.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) s += query[k] * r[k];
    rows.push_back({s, i});
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  if (rows.size() > top_n) rows.resize(top_n);
  std::vector<std::uint32_t> out;
  for (const auto& r : rows) out.push_back(r.second);
  return out;
}

// Composition of the two brute-force stages.
inline std::vector<std::uint32_t> brute_force_hierarchical(
    std::span<const std::uint64_t> query_code, std::span<const float> query_embedding,
    const hashgnn::CodeMatrix& codes, const hashgnn::EmbeddingMatrix& embeddings,
    std::size_t shortlist_m, std::size_t top_n,
    const std::unordered_set<std::uint32_t>& exclude = {}) {
  const auto shortlist = brute_force_hamming(query_code, codes, shortlist_m, exclude);
  std::vector<std::pair<float, std::uint32_t>> rows;
  for (std::uint32_t i : shortlist) {
    float s = 0.0f;
    const auto r = embeddings.row(i);
    for (std::size_t k = 0; k < r.size(); ++k) s += query_embedding[k] * r[k];
    rows.push_back({s, i});
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.first != b.first ? a.first > b.first : a.second < b.second;
  });
  if (rows.size() > top_n) rows.resize(top_n);
  std::vector<std::uint32_t> out;
  for (const auto& r : rows) out.push_back(r.second);
  return out;
}

// O(P*N) pairwise AUC.
inline double brute_force_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double num = 0.0;
  for (double p : pos)
    for (double n : neg) num += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  return num / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

}  // namespace oracle

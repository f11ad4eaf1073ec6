#pragma once

#include <chrono>
#include <cstdint>
#include <unordered_set>
#include <vector>

#include "hashgnn/model.hpp"

namespace hashgnn {

// Row-major float embeddings, one row per node, entries in (-1, 1).
struct EmbeddingMatrix {
  std::uint32_t n = 0;
  std::uint32_t k = 0;
  std::vector<float> data;

  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::uint32_t rows, std::uint32_t cols)
      : n(rows), k(cols), data(std::size_t(rows) * cols, 0.0f) {}

  std::span<const float> row(std::uint32_t r) const { return {data.data() + std::size_t(r) * k, k}; }
  std::span<float> row(std::uint32_t r) { return {data.data() + std::size_t(r) * k, k}; }

  EmbeddingMatrix slice_rows(std::uint32_t begin, std::uint32_t end) const {
    EmbeddingMatrix out(end - begin, k);
    std::copy(data.begin() + std::size_t(begin) * k, data.begin() + std::size_t(end) * k,
              out.data.begin());
    return out;
  }
};

enum class RetrievalMode : std::uint8_t { hamming = 0, continuous = 1, hierarchical = 2 };

inline const char* to_string(RetrievalMode mode) {
  switch (mode) {
    case RetrievalMode::hamming: return "hamr";
    case RetrievalMode::continuous: return "ces";
    case RetrievalMode::hierarchical: return "hies";
  }
  return "?";
}

inline RetrievalMode parse_retrieval_mode(const std::string& name) {
  for (RetrievalMode m :
       {RetrievalMode::hamming, RetrievalMode::continuous, RetrievalMode::hierarchical})
    if (name == to_string(m)) return m;
  throw ConfigError("unknown retrieval mode '" + name + "'");
}

// Ranked candidates with their scores: Hamming distance (ascending) or inner
// product (descending), ties broken by ascending index in either case.
struct RetrievalResult {
  std::vector<std::uint32_t> indices;
  std::vector<float> scores;
  RetrievalMode mode = RetrievalMode::hamming;
  double seconds = 0.0;
};

// One inference forward pass per node with the guidance disabled: embeddings
// are the raw tanh outputs and codes their signs, bit-packed.
inline std::pair<CodeMatrix, EmbeddingMatrix> encode_all(const ModelParams<float>& params,
                                                         const InteractionGraph& graph) {
  const std::uint32_t n = graph.total_nodes();
  if (params.gcn.features.rows != n)
    throw ConfigError("model feature table does not match graph node count");
  const auto k = static_cast<std::uint32_t>(params.hash.w.cols);
  CodeMatrix codes(n, k);
  EmbeddingMatrix embeddings(n, k);

  constexpr std::uint32_t kChunk = 512;
  std::vector<std::uint32_t> chunk;
  for (std::uint32_t begin = 0; begin < n; begin += kChunk) {
    const std::uint32_t end = std::min(n, begin + kChunk);
    chunk.resize(end - begin);
    for (std::uint32_t v = begin; v < end; ++v) chunk[v - begin] = v;
    const auto trace = model_forward(params, graph, chunk);
    for (std::uint32_t r = 0; r < chunk.size(); ++r) {
      const auto z = trace.z.row(r);
      std::copy(z.begin(), z.end(), embeddings.row(begin + r).begin());
      codes.set_row(begin + r, z);
    }
  }
  return {std::move(codes), std::move(embeddings)};
}

// Number of differing bits; equals (K - <h_a, h_b>) / 2 for +-1 vectors.
inline std::uint32_t hamming_distance(std::span<const std::uint64_t> a,
                                      std::span<const std::uint64_t> b) {
  if (a.size() != b.size()) throw ConfigError("hamming_distance length mismatch");
  std::uint32_t d = 0;
  for (std::size_t w = 0; w < a.size(); ++w) d += static_cast<std::uint32_t>(std::popcount(a[w] ^ b[w]));
  return d;
}

namespace detail {

// Bounded selection keeping the `limit` best entries under a strict-weak
// order; final output is fully sorted so ties resolve identically to a full
// sort.
template <typename Entry, typename Less>
struct TopK {
  explicit TopK(std::size_t limit, Less less) : limit_(limit), less_(less) { heap_.reserve(limit + 1); }

  void offer(const Entry& e) {
    if (heap_.size() < limit_) {
      heap_.push_back(e);
      std::push_heap(heap_.begin(), heap_.end(), less_);
    } else if (limit_ > 0 && less_(e, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), less_);
      heap_.back() = e;
      std::push_heap(heap_.begin(), heap_.end(), less_);
    }
  }

  std::vector<Entry> take_sorted() {
    std::sort(heap_.begin(), heap_.end(), less_);
    return std::move(heap_);
  }

 private:
  std::size_t limit_;
  Less less_;
  std::vector<Entry> heap_;
};

}  // namespace detail

// Exhaustive linear scan over packed codes; the top_m rows with the smallest
// Hamming distance to the query, excluding the given indices. Requests larger
// than the candidate pool are truncated.
inline RetrievalResult hamming_scan(std::span<const std::uint64_t> query, const CodeMatrix& items,
                                    std::size_t top_m,
                                    const std::unordered_set<std::uint32_t>& exclude = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  using Entry = std::pair<std::uint32_t, std::uint32_t>;  // (distance, index)
  const auto less = [](const Entry& a, const Entry& b) { return a < b; };
  detail::TopK<Entry, decltype(less)> top(top_m, less);
  if (exclude.empty()) {
    for (std::uint32_t i = 0; i < items.n; ++i) top.offer({hamming_distance(query, items.row(i)), i});
  } else {
    for (std::uint32_t i = 0; i < items.n; ++i) {
      if (exclude.count(i)) continue;
      top.offer({hamming_distance(query, items.row(i)), i});
    }
  }
  RetrievalResult result;
  result.mode = RetrievalMode::hamming;
  for (const auto& [d, i] : top.take_sorted()) {
    result.indices.push_back(i);
    result.scores.push_back(static_cast<float>(d));
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// Exhaustive inner-product scan over continuous embeddings, descending score.
inline RetrievalResult continuous_scan(std::span<const float> query, const EmbeddingMatrix& items,
                                       std::size_t top_n,
                                       const std::unordered_set<std::uint32_t>& exclude = {}) {
  if (query.size() != items.k) throw ConfigError("continuous_scan dimension mismatch");
  const auto t0 = std::chrono::steady_clock::now();
  using Entry = std::pair<float, std::uint32_t>;  // (score, index)
  const auto better = [](const Entry& a, const Entry& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  };
  detail::TopK<Entry, decltype(better)> top(top_n, better);
  if (exclude.empty()) {
    for (std::uint32_t i = 0; i < items.n; ++i) top.offer({dot(query, items.row(i)), i});
  } else {
    for (std::uint32_t i = 0; i < items.n; ++i) {
      if (exclude.count(i)) continue;
      top.offer({dot(query, items.row(i)), i});
    }
  }
  RetrievalResult result;
  result.mode = RetrievalMode::continuous;
  for (const auto& [s, i] : top.take_sorted()) {
    result.indices.push_back(i);
    result.scores.push_back(s);
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// Two-stage search: a Hamming shortlist of shortlist_m candidates re-ranked
// by continuous inner product, returning the top_n.
inline RetrievalResult hierarchical_search(std::span<const std::uint64_t> query_code,
                                           std::span<const float> query_embedding,
                                           const CodeMatrix& item_codes,
                                           const EmbeddingMatrix& item_embeddings,
                                           std::size_t shortlist_m, std::size_t top_n,
                                           const std::unordered_set<std::uint32_t>& exclude = {}) {
  if (top_n > shortlist_m) throw ConfigError("hierarchical_search: top_n exceeds shortlist_m");
  if (item_codes.n != item_embeddings.n)
    throw ConfigError("hierarchical_search: code and embedding row counts differ");
  const auto t0 = std::chrono::steady_clock::now();

  const RetrievalResult shortlist = hamming_scan(query_code, item_codes, shortlist_m, exclude);
  using Entry = std::pair<float, std::uint32_t>;
  std::vector<Entry> rerank;
  rerank.reserve(shortlist.indices.size());
  for (std::uint32_t i : shortlist.indices) rerank.emplace_back(dot(query_embedding, item_embeddings.row(i)), i);
  std::sort(rerank.begin(), rerank.end(), [](const Entry& a, const Entry& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  if (rerank.size() > top_n) rerank.resize(top_n);

  RetrievalResult result;
  result.mode = RetrievalMode::hierarchical;
  for (const auto& [s, i] : rerank) {
    result.indices.push_back(i);
    result.scores.push_back(s);
  }
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace hashgnn

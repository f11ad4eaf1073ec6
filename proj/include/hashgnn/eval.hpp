#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "hashgnn/common.hpp"
#include "hashgnn/retrieval.hpp"

namespace hashgnn {

// Recall-style hit rate: |top-n intersection ground truth| / |ground truth|.
inline double hit_rate(std::span<const std::uint32_t> ranked,
                       const std::unordered_set<std::uint32_t>& ground_truth, std::size_t n) {
  if (ground_truth.empty()) throw ConfigError("hit_rate: empty ground truth");
  std::size_t hits = 0;
  const std::size_t limit = std::min(n, ranked.size());
  for (std::size_t i = 0; i < limit; ++i) hits += ground_truth.count(ranked[i]);
  return static_cast<double>(hits) / static_cast<double>(ground_truth.size());
}

// Binary-relevance NDCG with log2 discount and 1-based positions; the ideal
// DCG places min(|ground truth|, n) hits at the top.
inline double ndcg(std::span<const std::uint32_t> ranked,
                   const std::unordered_set<std::uint32_t>& ground_truth, std::size_t n) {
  if (ground_truth.empty()) throw ConfigError("ndcg: empty ground truth");
  double dcg = 0.0;
  const std::size_t limit = std::min(n, ranked.size());
  for (std::size_t i = 0; i < limit; ++i)
    if (ground_truth.count(ranked[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  double idcg = 0.0;
  const std::size_t ideal = std::min(ground_truth.size(), n);
  for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
  return dcg / idcg;
}

// Exact pairwise AUC: P(pos > neg) + 0.5 P(pos == neg), computed by sorting.
inline double auc(std::span<const double> pos_scores, std::span<const double> neg_scores) {
  if (pos_scores.empty() || neg_scores.empty())
    throw DataError("auc undefined: one side has no scores");
  std::vector<std::pair<double, int>> all;  // (score, is_positive)
  all.reserve(pos_scores.size() + neg_scores.size());
  for (double s : pos_scores) all.emplace_back(s, 1);
  for (double s : neg_scores) all.emplace_back(s, 0);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  double num = 0.0;
  std::size_t neg_below = 0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    std::size_t pos_tied = 0, neg_tied = 0;
    while (j < all.size() && all[j].first == all[i].first) {
      pos_tied += all[j].second;
      neg_tied += 1 - all[j].second;
      ++j;
    }
    num += static_cast<double>(pos_tied) * static_cast<double>(neg_below) +
           0.5 * static_cast<double>(pos_tied) * static_cast<double>(neg_tied);
    neg_below += neg_tied;
    i = j;
  }
  return num / (static_cast<double>(pos_scores.size()) * static_cast<double>(neg_scores.size()));
}

// Averaged ranking metrics over users with at least one test item.
struct MetricReport {
  std::string mode;
  std::map<std::size_t, double> hr;
  std::map<std::size_t, double> ndcg;
  double auc = std::numeric_limits<double>::quiet_NaN();
  std::size_t users_evaluated = 0;
  std::size_t users_skipped = 0;
  double seconds = 0.0;
};

// Aggregates per-user rankings against per-user ground truth. Users with an
// empty ground-truth set are skipped and counted.
inline MetricReport evaluate_rankings(std::span<const std::vector<std::uint32_t>> rankings,
                                      std::span<const std::unordered_set<std::uint32_t>> ground_truth,
                                      std::span<const std::size_t> cutoffs,
                                      const std::string& mode = "") {
  if (rankings.size() != ground_truth.size())
    throw ConfigError("evaluate_rankings: user count mismatch");
  const auto t0 = std::chrono::steady_clock::now();
  MetricReport report;
  report.mode = mode;
  for (std::size_t n : cutoffs) {
    report.hr[n] = 0.0;
    report.ndcg[n] = 0.0;
  }
  for (std::size_t u = 0; u < rankings.size(); ++u) {
    if (ground_truth[u].empty()) {
      ++report.users_skipped;
      continue;
    }
    ++report.users_evaluated;
    for (std::size_t n : cutoffs) {
      report.hr[n] += hit_rate(rankings[u], ground_truth[u], n);
      report.ndcg[n] += ndcg(rankings[u], ground_truth[u], n);
    }
  }
  if (report.users_evaluated > 0) {
    for (std::size_t n : cutoffs) {
      report.hr[n] /= static_cast<double>(report.users_evaluated);
      report.ndcg[n] /= static_cast<double>(report.users_evaluated);
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

// One benchmark table line: median wall-clock over repeats for scanning the
// whole query set, and the speedup of this mode relative to the continuous
// scan.
struct BenchRow {
  std::string mode;
  std::uint32_t n_items = 0;
  std::uint32_t k = 0;
  double median_seconds = 0.0;
  double speedup_vs_ces = 0.0;
  std::size_t queries = 0;
  std::size_t repeats = 0;
};

// Times the three retrieval modes over a query set: full scans, repeated
// `repeats` times, median reported. Covers distance computation and sorting
// only; encoding happens upstream.
inline std::vector<BenchRow> bench_retrieval(const CodeMatrix& item_codes,
                                             const EmbeddingMatrix& item_embeddings,
                                             const CodeMatrix& query_codes,
                                             const EmbeddingMatrix& query_embeddings,
                                             std::size_t top_n, std::size_t shortlist_m,
                                             std::size_t repeats) {
  if (item_codes.n != item_embeddings.n || query_codes.n != query_embeddings.n)
    throw ConfigError("bench_retrieval: code/embedding row counts differ");
  if (repeats == 0) throw ConfigError("bench_retrieval: repeats must be positive");

  const auto run_mode = [&](RetrievalMode mode) {
    const auto t0 = std::chrono::steady_clock::now();
    // per-query results feed a checksum so the scans cannot be optimized away
    std::uint64_t sink = 0;
    for (std::uint32_t q = 0; q < query_codes.n; ++q) {
      RetrievalResult r;
      switch (mode) {
        case RetrievalMode::hamming:
          r = hamming_scan(query_codes.row(q), item_codes, top_n);
          break;
        case RetrievalMode::continuous:
          r = continuous_scan(query_embeddings.row(q), item_embeddings, top_n);
          break;
        case RetrievalMode::hierarchical:
          r = hierarchical_search(query_codes.row(q), query_embeddings.row(q), item_codes,
                                  item_embeddings, shortlist_m, top_n);
          break;
      }
      for (std::uint32_t i : r.indices) sink += i;
    }
    volatile std::uint64_t keep = sink;
    (void)keep;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  const auto median_time = [&](RetrievalMode mode) {
    std::vector<double> times;
    times.reserve(repeats);
    for (std::size_t r = 0; r < repeats; ++r) times.push_back(run_mode(mode));
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
  };

  const double ces = median_time(RetrievalMode::continuous);
  const double hies = median_time(RetrievalMode::hierarchical);
  const double hamr = median_time(RetrievalMode::hamming);

  std::vector<BenchRow> rows;
  for (const auto& [mode, seconds] : std::initializer_list<std::pair<const char*, double>>{
           {"ces", ces}, {"hies", hies}, {"hamr", hamr}}) {
    BenchRow row;
    row.mode = mode;
    row.n_items = item_codes.n;
    row.k = item_codes.k_bits;
    row.median_seconds = seconds;
    row.speedup_vs_ces = seconds > 0.0 ? ces / seconds : 0.0;
    row.queries = query_codes.n;
    row.repeats = repeats;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace hashgnn

#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "hashgnn/common.hpp"

namespace hashgnn {

// CSR adjacency over one side of the bipartite graph. Values index the
// opposite side and are sorted and unique within each row.
struct Csr {
  std::vector<std::uint64_t> offsets{0};
  std::vector<std::uint32_t> values;

  std::size_t rows() const { return offsets.size() - 1; }
  std::span<const std::uint32_t> row(std::uint32_t r) const {
    return {values.data() + offsets[r], values.data() + offsets[r + 1]};
  }
  std::size_t degree(std::uint32_t r) const { return offsets[r + 1] - offsets[r]; }
  bool contains(std::uint32_t r, std::uint32_t v) const {
    const auto s = row(r);
    return std::binary_search(s.begin(), s.end(), v);
  }
};

// Bipartite user-item graph with dense indices on both sides. Users occupy
// global node ids [0, num_users); items follow at num_users + item.
// Immutable after construction; safe for concurrent readers.
struct InteractionGraph {
  std::uint32_t num_users = 0;
  std::uint32_t num_items = 0;
  Csr user_adj;  // item index lists per user
  Csr item_adj;  // user index lists per item
  std::vector<std::string> user_ids;  // dense index -> original id
  std::vector<std::string> item_ids;
  std::unordered_map<std::string, std::uint32_t> user_index;
  std::unordered_map<std::string, std::uint32_t> item_index;

  std::uint32_t total_nodes() const { return num_users + num_items; }
  std::uint64_t num_edges() const { return user_adj.values.size(); }
  bool has_edge(std::uint32_t user, std::uint32_t item) const {
    return user_adj.contains(user, item);
  }
  std::uint32_t item_node(std::uint32_t item) const { return num_users + item; }
  bool is_item_node(std::uint32_t node) const { return node >= num_users; }

  // Appends the neighbors of a global node id, as global node ids.
  void neighbors_of(std::uint32_t node, std::vector<std::uint32_t>& out) const {
    if (node < num_users) {
      for (std::uint32_t item : user_adj.row(node)) out.push_back(num_users + item);
    } else {
      for (std::uint32_t user : item_adj.row(node - num_users)) out.push_back(user);
    }
  }
  std::size_t degree_of(std::uint32_t node) const {
    return node < num_users ? user_adj.degree(node) : item_adj.degree(node - num_users);
  }
};

struct TimedEdge {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  std::int64_t time = 0;
};

namespace detail {

inline std::uint64_t pack_edge(std::uint32_t user, std::uint32_t item) {
  return (static_cast<std::uint64_t>(user) << 32) | item;
}

inline Csr build_csr(std::size_t rows, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& pairs) {
  Csr csr;
  csr.offsets.assign(rows + 1, 0);
  for (const auto& [r, v] : pairs) csr.offsets[r + 1]++;
  for (std::size_t r = 0; r < rows; ++r) csr.offsets[r + 1] += csr.offsets[r];
  csr.values.resize(pairs.size());
  std::vector<std::uint64_t> cursor(csr.offsets.begin(), csr.offsets.end() - 1);
  for (const auto& [r, v] : pairs) csr.values[cursor[r]++] = v;
  for (std::size_t r = 0; r < rows; ++r)
    std::sort(csr.values.begin() + csr.offsets[r], csr.values.begin() + csr.offsets[r + 1]);
  return csr;
}

inline InteractionGraph build_graph(std::vector<std::string> user_ids, std::vector<std::string> item_ids,
                                    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges) {
  InteractionGraph g;
  g.num_users = static_cast<std::uint32_t>(user_ids.size());
  g.num_items = static_cast<std::uint32_t>(item_ids.size());
  g.user_ids = std::move(user_ids);
  g.item_ids = std::move(item_ids);
  for (std::uint32_t u = 0; u < g.num_users; ++u) g.user_index.emplace(g.user_ids[u], u);
  for (std::uint32_t i = 0; i < g.num_items; ++i) g.item_index.emplace(g.item_ids[i], i);
  g.user_adj = build_csr(g.num_users, edges);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> flipped;
  flipped.reserve(edges.size());
  for (const auto& [u, i] : edges) flipped.emplace_back(i, u);
  g.item_adj = build_csr(g.num_items, flipped);
  return g;
}

}  // namespace detail

// Parses a UTF-8 edge list: one interaction per line, `user<TAB|,>item` with an
// optional trailing timestamp field; `#` lines and blank lines are skipped.
// Nodes whose degree falls below min_degree are removed iteratively (removal
// can push other nodes under the threshold) and survivors are reindexed
// densely in first-appearance order. When timed_out is given it receives the
// surviving deduplicated edges with their timestamps (first occurrence wins).
inline InteractionGraph load_edge_list(std::istream& in, std::uint32_t min_degree = 0,
                                       std::vector<TimedEdge>* timed_out = nullptr) {
  std::unordered_map<std::string, std::uint32_t> user_index, item_index;
  std::vector<std::string> user_ids, item_ids;
  std::vector<TimedEdge> edges;
  std::unordered_set<std::uint64_t> seen;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;

    const std::size_t sep1 = line.find_first_of("\t,");
    if (sep1 == std::string::npos)
      throw ParseError("expected 'user<TAB|,>item[<sep>timestamp]', got '" + line + "'", line_no);
    const std::string user = line.substr(0, sep1);
    std::size_t sep2 = line.find_first_of("\t,", sep1 + 1);
    const std::string item = line.substr(sep1 + 1, sep2 == std::string::npos ? std::string::npos : sep2 - sep1 - 1);
    if (user.empty() || item.empty()) throw ParseError("empty user or item id", line_no);

    std::int64_t time = 0;
    if (sep2 != std::string::npos) {
      const std::string rest = line.substr(sep2 + 1);
      char* end = nullptr;
      const double t = std::strtod(rest.c_str(), &end);
      if (end == rest.c_str()) throw ParseError("malformed timestamp '" + rest + "'", line_no);
      time = static_cast<std::int64_t>(t);
    }

    auto [uit, unew] = user_index.emplace(user, static_cast<std::uint32_t>(user_ids.size()));
    if (unew) user_ids.push_back(user);
    auto [iit, inew] = item_index.emplace(item, static_cast<std::uint32_t>(item_ids.size()));
    if (inew) item_ids.push_back(item);
    if (seen.insert(detail::pack_edge(uit->second, iit->second)).second)
      edges.push_back({uit->second, iit->second, time});
  }
  if (edges.empty()) throw EmptyGraphError("edge list contains no edges");

  // Iterative degree filter: drop nodes under the threshold, which may expose
  // new low-degree nodes, until the edge set is stable.
  if (min_degree > 0) {
    for (;;) {
      std::vector<std::uint32_t> udeg(user_ids.size(), 0), ideg(item_ids.size(), 0);
      for (const auto& e : edges) {
        udeg[e.user]++;
        ideg[e.item]++;
      }
      const auto before = edges.size();
      std::erase_if(edges, [&](const TimedEdge& e) {
        return udeg[e.user] < min_degree || ideg[e.item] < min_degree;
      });
      if (edges.size() == before) break;
      if (edges.empty()) throw EmptyGraphError("graph is empty after degree filtering");
    }
  }

  // Reindex survivors densely, preserving first-appearance order.
  std::vector<std::uint32_t> user_map(user_ids.size(), UINT32_MAX), item_map(item_ids.size(), UINT32_MAX);
  for (const auto& e : edges) user_map[e.user] = 0, item_map[e.item] = 0;
  std::vector<std::string> kept_users, kept_items;
  for (std::uint32_t u = 0; u < user_ids.size(); ++u)
    if (user_map[u] != UINT32_MAX) {
      user_map[u] = static_cast<std::uint32_t>(kept_users.size());
      kept_users.push_back(std::move(user_ids[u]));
    }
  for (std::uint32_t i = 0; i < item_ids.size(); ++i)
    if (item_map[i] != UINT32_MAX) {
      item_map[i] = static_cast<std::uint32_t>(kept_items.size());
      kept_items.push_back(std::move(item_ids[i]));
    }

  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  pairs.reserve(edges.size());
  for (auto& e : edges) {
    e.user = user_map[e.user];
    e.item = item_map[e.item];
    pairs.emplace_back(e.user, e.item);
  }
  if (timed_out) *timed_out = std::move(edges);
  return detail::build_graph(std::move(kept_users), std::move(kept_items), pairs);
}

// Train/validation/test partition of the edge set. The train member keeps the
// full node universe (same id maps and counts as the source graph) so encoder
// rows stay aligned; only its adjacency is restricted to train edges.
struct SplitDataset {
  InteractionGraph train;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> test_edges;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> valid_edges;
  std::uint64_t rng_seed = 0;
  std::size_t users_without_test = 0;

  bool full_has_edge(std::uint32_t user, std::uint32_t item) const {
    return train.has_edge(user, item) || held_out_.count(detail::pack_edge(user, item)) > 0;
  }
  void rebuild_held_out_index() {
    held_out_.clear();
    held_out_.reserve(test_edges.size() + valid_edges.size());
    for (const auto& [u, i] : test_edges) held_out_.insert(detail::pack_edge(u, i));
    for (const auto& [u, i] : valid_edges) held_out_.insert(detail::pack_edge(u, i));
  }

 private:
  std::unordered_set<std::uint64_t> held_out_;
};

namespace detail {

inline SplitDataset assemble_split(const InteractionGraph& graph,
                                   std::vector<std::pair<std::uint32_t, std::uint32_t>> train_pairs,
                                   std::vector<std::pair<std::uint32_t, std::uint32_t>> valid,
                                   std::vector<std::pair<std::uint32_t, std::uint32_t>> test,
                                   std::uint64_t seed, std::size_t users_without_test) {
  SplitDataset split;
  split.train = build_graph(graph.user_ids, graph.item_ids, train_pairs);
  split.test_edges = std::move(test);
  split.valid_edges = std::move(valid);
  split.rng_seed = seed;
  split.users_without_test = users_without_test;
  std::sort(split.test_edges.begin(), split.test_edges.end());
  std::sort(split.valid_edges.begin(), split.valid_edges.end());
  split.rebuild_held_out_index();
  return split;
}

}  // namespace detail

// Per-user random split: round(train_frac * degree) edges (at least one) stay
// on the train side, the rest become test; a valid_frac_of_train share of the
// train candidates is then held out for validation. Validation edges are
// excluded from the train adjacency as well as from the loss.
inline SplitDataset split_interactions(const InteractionGraph& graph, double train_frac,
                                       double valid_frac_of_train, std::uint64_t seed) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw ConfigError("train_frac must lie in (0, 1)");
  if (!(valid_frac_of_train >= 0.0 && valid_frac_of_train < 1.0))
    throw ConfigError("valid_frac_of_train must lie in [0, 1)");

  Rng rng(seed);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> train_pairs, valid, test;
  std::size_t users_without_test = 0;
  for (std::uint32_t u = 0; u < graph.num_users; ++u) {
    const auto row = graph.user_adj.row(u);
    std::vector<std::uint32_t> items(row.begin(), row.end());
    std::shuffle(items.begin(), items.end(), rng);
    const std::size_t deg = items.size();
    const std::size_t n_cand = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(train_frac * static_cast<double>(deg))), 1, deg);
    if (n_cand == deg) ++users_without_test;
    std::size_t n_valid = static_cast<std::size_t>(
        std::lround(valid_frac_of_train * static_cast<double>(n_cand)));
    n_valid = std::min(n_valid, n_cand - 1);
    for (std::size_t k = 0; k < n_cand - n_valid; ++k) train_pairs.emplace_back(u, items[k]);
    for (std::size_t k = n_cand - n_valid; k < n_cand; ++k) valid.emplace_back(u, items[k]);
    for (std::size_t k = n_cand; k < deg; ++k) test.emplace_back(u, items[k]);
  }
  return detail::assemble_split(graph, std::move(train_pairs), std::move(valid), std::move(test),
                                seed, users_without_test);
}

// Chronological split: per user, the earliest round(train_frac * degree)
// interactions are train candidates and the most recent candidates become the
// validation slice. Mirrors a train-on-past / test-on-future protocol.
inline SplitDataset split_interactions_chrono(const InteractionGraph& graph,
                                              const std::vector<TimedEdge>& timed_edges,
                                              double train_frac, double valid_frac_of_train) {
  if (!(train_frac > 0.0 && train_frac < 1.0))
    throw ConfigError("train_frac must lie in (0, 1)");
  if (!(valid_frac_of_train >= 0.0 && valid_frac_of_train < 1.0))
    throw ConfigError("valid_frac_of_train must lie in [0, 1)");

  std::vector<std::vector<std::pair<std::int64_t, std::uint32_t>>> per_user(graph.num_users);
  for (const auto& e : timed_edges) per_user[e.user].emplace_back(e.time, e.item);

  std::vector<std::pair<std::uint32_t, std::uint32_t>> train_pairs, valid, test;
  std::size_t users_without_test = 0;
  for (std::uint32_t u = 0; u < graph.num_users; ++u) {
    auto& items = per_user[u];
    std::sort(items.begin(), items.end());
    const std::size_t deg = items.size();
    if (deg == 0) continue;
    const std::size_t n_cand = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(train_frac * static_cast<double>(deg))), 1, deg);
    if (n_cand == deg) ++users_without_test;
    std::size_t n_valid = static_cast<std::size_t>(
        std::lround(valid_frac_of_train * static_cast<double>(n_cand)));
    n_valid = std::min(n_valid, n_cand - 1);
    for (std::size_t k = 0; k < n_cand - n_valid; ++k) train_pairs.emplace_back(u, items[k].second);
    for (std::size_t k = n_cand - n_valid; k < n_cand; ++k) valid.emplace_back(u, items[k].second);
    for (std::size_t k = n_cand; k < deg; ++k) test.emplace_back(u, items[k].second);
  }
  return detail::assemble_split(graph, std::move(train_pairs), std::move(valid), std::move(test),
                                /*seed=*/0, users_without_test);
}

// Ranking triplet in global node ids: anchor is closer to positive than to
// negative. (anchor, positive) is a train edge; (anchor, negative) is absent
// from the full edge set.
struct Triplet {
  std::uint32_t anchor = 0;
  std::uint32_t positive = 0;
  std::uint32_t negative = 0;
};

// Mini-batch of labeled node pairs in global node ids; label 1 marks a train
// edge, label 0 a sampled non-edge.
struct PairBatch {
  struct Pair {
    std::uint32_t node_i = 0;
    std::uint32_t node_j = 0;
    std::uint8_t label = 0;
  };
  std::vector<Pair> pairs;
};

namespace detail {

constexpr int kMaxRejectionTries = 10000;

// Uniform sample from the opposite side that is not linked to `node` in the
// full edge set.
inline std::uint32_t sample_negative(const SplitDataset& split, std::uint32_t node, Rng& rng) {
  const auto& g = split.train;
  if (!g.is_item_node(node)) {
    std::uniform_int_distribution<std::uint32_t> pick(0, g.num_items - 1);
    for (int t = 0; t < kMaxRejectionTries; ++t) {
      const std::uint32_t item = pick(rng);
      if (!split.full_has_edge(node, item)) return g.item_node(item);
    }
  } else {
    std::uniform_int_distribution<std::uint32_t> pick(0, g.num_users - 1);
    for (int t = 0; t < kMaxRejectionTries; ++t) {
      const std::uint32_t user = pick(rng);
      if (!split.full_has_edge(user, node - g.num_users)) return user;
    }
  }
  throw DataError("negative sampling failed: node is linked to nearly the whole opposite side");
}

}  // namespace detail

// Samples `count` ranking triplets anchored at a global node: positives
// uniform over its train neighbors, negatives uniform over non-neighbors of
// the full edge set. A node without train neighbors yields an empty list.
inline std::vector<Triplet> sample_triplets(const SplitDataset& split, std::uint32_t node,
                                            std::size_t count, Rng& rng) {
  const auto& g = split.train;
  const bool item_side = g.is_item_node(node);
  const auto neighbors = item_side ? g.item_adj.row(node - g.num_users) : g.user_adj.row(node);
  if (neighbors.empty()) return {};

  std::vector<Triplet> out;
  out.reserve(count);
  std::uniform_int_distribution<std::size_t> pick_pos(0, neighbors.size() - 1);
  for (std::size_t k = 0; k < count; ++k) {
    const std::uint32_t pos_local = neighbors[pick_pos(rng)];
    const std::uint32_t positive = item_side ? pos_local : g.item_node(pos_local);
    out.push_back({node, positive, detail::sample_negative(split, node, rng)});
  }
  return out;
}

// Samples batch_size positive pairs uniformly from train edges, each followed
// by neg_per_pos label-0 pairs for the same user against non-edges.
inline PairBatch sample_edge_batch(const SplitDataset& split, std::size_t batch_size,
                                   std::size_t neg_per_pos, Rng& rng) {
  const auto& g = split.train;
  const std::uint64_t n_edges = g.num_edges();
  if (n_edges == 0) throw EmptyGraphError("train graph has no edges");

  PairBatch batch;
  batch.pairs.reserve(batch_size * (1 + neg_per_pos));
  std::uniform_int_distribution<std::uint64_t> pick(0, n_edges - 1);
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::uint64_t t = pick(rng);
    const auto it = std::upper_bound(g.user_adj.offsets.begin(), g.user_adj.offsets.end(), t);
    const auto user = static_cast<std::uint32_t>(it - g.user_adj.offsets.begin() - 1);
    const std::uint32_t item = g.user_adj.values[t];
    batch.pairs.push_back({user, g.item_node(item), 1});
    for (std::size_t n = 0; n < neg_per_pos; ++n)
      batch.pairs.push_back({user, detail::sample_negative(split, user, rng), 0});
  }
  return batch;
}

}  // namespace hashgnn

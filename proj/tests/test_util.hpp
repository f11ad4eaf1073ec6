#pragma once

#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hashgnn/graph.hpp"

namespace testutil {

inline hashgnn::InteractionGraph graph_from_text(const std::string& text,
                                                 std::uint32_t min_degree = 0) {
  std::istringstream in(text);
  return hashgnn::load_edge_list(in, min_degree);
}

// Random bipartite graph where every user gets `degree` distinct items.
inline std::string random_edge_text(std::uint32_t users, std::uint32_t items, std::uint32_t degree,
                                    std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::ostringstream out;
  std::vector<std::uint32_t> pool(items);
  for (std::uint32_t i = 0; i < items; ++i) pool[i] = i;
  for (std::uint32_t u = 0; u < users; ++u) {
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::uint32_t d = 0; d < degree && d < items; ++d)
      out << "u" << u << "\ti" << pool[d] << "\n";
  }
  return out.str();
}

// Planted block-structured bipartite graph: users and items are divided into
// `blocks` aligned groups; within-block edges appear with probability p_in,
// cross-block edges with p_out.
inline std::string planted_block_edge_text(std::uint32_t users, std::uint32_t items,
                                           std::uint32_t blocks, double p_in, double p_out,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const std::uint32_t users_per_block = users / blocks;
  const std::uint32_t items_per_block = items / blocks;
  std::ostringstream out;
  for (std::uint32_t u = 0; u < users; ++u)
    for (std::uint32_t i = 0; i < items; ++i) {
      const bool same_block = u / users_per_block == i / items_per_block;
      if (coin(rng) < (same_block ? p_in : p_out)) out << "u" << u << "\ti" << i << "\n";
    }
  return out.str();
}

class TempDir {
 public:
  TempDir() {
    const auto base = std::filesystem::temp_directory_path();
    for (int attempt = 0; attempt < 100; ++attempt) {
      auto candidate = base / ("hashgnn_test_" + std::to_string(std::random_device{}()));
      std::error_code ec;
      if (std::filesystem::create_directory(candidate, ec)) {
        path_ = candidate;
        return;
      }
    }
    throw std::runtime_error("could not create temp dir");
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hashgnn/retrieval.hpp"
#include "hashgnn/trainer.hpp"

namespace hashgnn {
namespace detail {

// Explicit little-endian scalar serialization keeps the binary formats
// portable across hosts.
inline void write_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename U>
void write_le(std::ostream& out, U value) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char bytes[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) bytes[i] = static_cast<unsigned char>(value >> (8 * i));
  write_bytes(out, bytes, sizeof(U));
}

template <typename U>
U read_le(std::istream& in) {
  static_assert(std::is_unsigned_v<U>);
  unsigned char bytes[sizeof(U)];
  in.read(reinterpret_cast<char*>(bytes), sizeof(U));
  if (!in) throw DataError("unexpected end of file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

inline void write_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  write_le<std::uint32_t>(out, bits);
}

inline float read_f32(std::istream& in) {
  const std::uint32_t bits = read_le<std::uint32_t>(in);
  float v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

inline void write_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  write_le<std::uint64_t>(out, bits);
}

inline double read_f64(std::istream& in) {
  const std::uint64_t bits = read_le<std::uint64_t>(in);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

inline void expect_magic(std::istream& in, const char (&magic)[5], const char* what) {
  char got[4];
  in.read(got, 4);
  if (!in || std::memcmp(got, magic, 4) != 0)
    throw DataError(std::string(what) + ": bad magic bytes");
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  write_bytes(out, s.data(), s.size());
}

inline std::string read_string(std::istream& in) {
  const std::uint32_t n = read_le<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw DataError("unexpected end of file");
  return s;
}

inline std::ofstream open_output(const std::string& path, std::ios::openmode mode = std::ios::binary) {
  std::ofstream out(path, mode);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  return out;
}

inline std::ifstream open_input(const std::string& path, std::ios::openmode mode = std::ios::binary) {
  std::ifstream in(path, mode);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  return in;
}

}  // namespace detail

// ---- packed code file: "HGNC" v1, u32 n, u32 k, rows of u64 words ----

inline void save_codes(std::ostream& out, const CodeMatrix& codes) {
  detail::write_bytes(out, "HGNC", 4);
  detail::write_le<std::uint8_t>(out, 1);
  detail::write_le<std::uint32_t>(out, codes.n);
  detail::write_le<std::uint32_t>(out, codes.k_bits);
  for (std::uint64_t w : codes.words) detail::write_le<std::uint64_t>(out, w);
}

inline CodeMatrix load_codes(std::istream& in) {
  detail::expect_magic(in, "HGNC", "code file");
  const auto version = detail::read_le<std::uint8_t>(in);
  if (version != 1) throw DataError("code file: unsupported version " + std::to_string(version));
  const auto n = detail::read_le<std::uint32_t>(in);
  const auto k = detail::read_le<std::uint32_t>(in);
  CodeMatrix codes(n, k);
  for (auto& w : codes.words) w = detail::read_le<std::uint64_t>(in);
  return codes;
}

// ---- embedding file: "HGNE" v1, u32 n, u32 k, rows of f32 ----

inline void save_embeddings(std::ostream& out, const EmbeddingMatrix& embeddings) {
  detail::write_bytes(out, "HGNE", 4);
  detail::write_le<std::uint8_t>(out, 1);
  detail::write_le<std::uint32_t>(out, embeddings.n);
  detail::write_le<std::uint32_t>(out, embeddings.k);
  for (float v : embeddings.data) detail::write_f32(out, v);
}

inline EmbeddingMatrix load_embeddings(std::istream& in) {
  detail::expect_magic(in, "HGNE", "embedding file");
  const auto version = detail::read_le<std::uint8_t>(in);
  if (version != 1)
    throw DataError("embedding file: unsupported version " + std::to_string(version));
  const auto n = detail::read_le<std::uint32_t>(in);
  const auto k = detail::read_le<std::uint32_t>(in);
  EmbeddingMatrix embeddings(n, k);
  for (auto& v : embeddings.data) v = detail::read_f32(in);
  return embeddings;
}

// ---- checkpoint: "HGNK" v1, config, counts, iteration, named tensors ----

namespace detail {

inline void write_config(std::ostream& out, const TrainConfig& cfg) {
  write_le<std::uint32_t>(out, cfg.k_bits);
  write_le<std::uint32_t>(out, cfg.feat_dim);
  write_le<std::uint32_t>(out, cfg.hidden1);
  write_le<std::uint32_t>(out, cfg.hidden2);
  write_f64(out, cfg.lambda);
  write_f64(out, cfg.alpha);
  write_f64(out, cfg.lr);
  write_le<std::uint32_t>(out, cfg.batch_size);
  write_le<std::uint32_t>(out, cfg.triplets_per_node);
  write_le<std::uint32_t>(out, cfg.neg_per_pos);
  write_le<std::uint32_t>(out, cfg.epochs);
  write_le<std::uint64_t>(out, cfg.max_iters);
  write_f64(out, cfg.p_init);
  write_f64(out, cfg.p_decay);
  write_le<std::uint32_t>(out, cfg.p_interval_iters);
  write_f64(out, cfg.p_floor);
  write_le<std::uint8_t>(out, cfg.p_additive ? 1 : 0);
  write_f64(out, cfg.init_std);
  write_le<std::uint64_t>(out, cfg.seed);
  write_le<std::uint8_t>(out, static_cast<std::uint8_t>(cfg.mode));
  write_le<std::uint32_t>(out, cfg.min_degree);
  write_f64(out, cfg.train_frac);
  write_f64(out, cfg.valid_frac);
  write_le<std::uint8_t>(out, cfg.chrono_split ? 1 : 0);
  write_le<std::uint32_t>(out, cfg.neighbor_cap);
  write_le<std::uint32_t>(out, cfg.log_interval);
  write_le<std::uint32_t>(out, cfg.val_interval);
}

inline TrainConfig read_config(std::istream& in) {
  TrainConfig cfg;
  cfg.k_bits = read_le<std::uint32_t>(in);
  cfg.feat_dim = read_le<std::uint32_t>(in);
  cfg.hidden1 = read_le<std::uint32_t>(in);
  cfg.hidden2 = read_le<std::uint32_t>(in);
  cfg.lambda = read_f64(in);
  cfg.alpha = read_f64(in);
  cfg.lr = read_f64(in);
  cfg.batch_size = read_le<std::uint32_t>(in);
  cfg.triplets_per_node = read_le<std::uint32_t>(in);
  cfg.neg_per_pos = read_le<std::uint32_t>(in);
  cfg.epochs = read_le<std::uint32_t>(in);
  cfg.max_iters = read_le<std::uint64_t>(in);
  cfg.p_init = read_f64(in);
  cfg.p_decay = read_f64(in);
  cfg.p_interval_iters = read_le<std::uint32_t>(in);
  cfg.p_floor = read_f64(in);
  cfg.p_additive = read_le<std::uint8_t>(in) != 0;
  cfg.init_std = read_f64(in);
  cfg.seed = read_le<std::uint64_t>(in);
  cfg.mode = static_cast<TrainMode>(read_le<std::uint8_t>(in));
  cfg.min_degree = read_le<std::uint32_t>(in);
  cfg.train_frac = read_f64(in);
  cfg.valid_frac = read_f64(in);
  cfg.chrono_split = read_le<std::uint8_t>(in) != 0;
  cfg.neighbor_cap = read_le<std::uint32_t>(in);
  cfg.log_interval = read_le<std::uint32_t>(in);
  cfg.val_interval = read_le<std::uint32_t>(in);
  return cfg;
}

}  // namespace detail

inline void save_checkpoint(std::ostream& out, const TrainedModel& model) {
  detail::write_bytes(out, "HGNK", 4);
  detail::write_le<std::uint8_t>(out, 1);
  detail::write_config(out, model.config);
  detail::write_le<std::uint32_t>(out, model.num_users);
  detail::write_le<std::uint32_t>(out, model.num_items);
  detail::write_le<std::uint64_t>(out, model.iterations);

  std::uint32_t count = 0;
  ModelParams<float>::for_each_tensor(model.params, [&](const char*, const Mat<float>&) { ++count; });
  detail::write_le<std::uint32_t>(out, count);
  ModelParams<float>::for_each_tensor(model.params, [&](const char* name, const Mat<float>& t) {
    detail::write_string(out, name);
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rows));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.cols));
    for (float v : t.data) detail::write_f32(out, v);
  });
}

inline TrainedModel load_checkpoint(std::istream& in) {
  detail::expect_magic(in, "HGNK", "checkpoint");
  const auto version = detail::read_le<std::uint8_t>(in);
  if (version != 1) throw DataError("checkpoint: unsupported version " + std::to_string(version));

  TrainedModel model;
  model.config = detail::read_config(in);
  model.num_users = detail::read_le<std::uint32_t>(in);
  model.num_items = detail::read_le<std::uint32_t>(in);
  model.iterations = detail::read_le<std::uint64_t>(in);

  const auto count = detail::read_le<std::uint32_t>(in);
  std::vector<std::pair<std::string, Mat<float>>> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = detail::read_string(in);
    const auto rows = detail::read_le<std::uint32_t>(in);
    const auto cols = detail::read_le<std::uint32_t>(in);
    Mat<float> t(rows, cols);
    for (auto& v : t.data) v = detail::read_f32(in);
    for (const auto& [existing, unused] : tensors)
      if (existing == name) throw DataError("checkpoint: duplicate tensor '" + name + "'");
    tensors.emplace_back(name, std::move(t));
  }

  const auto take = [&](const std::string& name) -> Mat<float> {
    for (auto& [n, t] : tensors)
      if (n == name) return std::move(t);
    throw DataError("checkpoint: missing tensor '" + name + "'");
  };
  model.params.gcn.features = take("features");
  model.params.gcn.layer_weights.push_back(take("gcn.w1"));
  model.params.gcn.layer_weights.push_back(take("gcn.w2"));
  model.params.gcn.activations = {Activation::Relu, Activation::Relu};
  model.params.hash.w = take("hash.w");
  model.params.hash.b = take("hash.b");
  return model;
}

// ---- text formats ----

inline void write_id_map(std::ostream& out, std::span<const std::string> ids) {
  for (std::size_t i = 0; i < ids.size(); ++i) out << i << '\t' << ids[i] << '\n';
}

inline std::vector<std::string> read_id_map(std::istream& in) {
  std::vector<std::string> ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("id map line lacks a tab", line_no);
    const std::size_t index = std::strtoull(line.substr(0, tab).c_str(), nullptr, 10);
    if (index != ids.size()) throw ParseError("id map indices out of order", line_no);
    ids.push_back(line.substr(tab + 1));
  }
  return ids;
}

inline void write_edge_list(std::ostream& out, const InteractionGraph& graph,
                            std::span<const std::pair<std::uint32_t, std::uint32_t>> edges) {
  for (const auto& [u, i] : edges) out << graph.user_ids[u] << '\t' << graph.item_ids[i] << '\n';
}

inline void write_train_edge_list(std::ostream& out, const InteractionGraph& train) {
  for (std::uint32_t u = 0; u < train.num_users; ++u)
    for (std::uint32_t i : train.user_adj.row(u)) out << train.user_ids[u] << '\t' << train.item_ids[i] << '\n';
}

inline void write_training_log(std::ostream& out, std::span<const TrainLogRow> log) {
  out << "iteration,total,cross_entropy,ranking,p,val_auc,seconds\n";
  out << std::setprecision(10);
  for (const auto& row : log) {
    out << row.iteration << ',' << row.total << ',' << row.cross_entropy << ',' << row.ranking
        << ',' << row.p << ',';
    if (!std::isnan(row.val_auc)) out << row.val_auc;
    out << ',' << row.seconds << '\n';
  }
}

inline void write_metric_report(std::ostream& out, const MetricReport& report) {
  out << "mode,cutoff,hr,ndcg,users,seconds\n";
  out << std::setprecision(10);
  for (const auto& [cutoff, hr] : report.hr)
    out << report.mode << ',' << cutoff << ',' << hr << ',' << report.ndcg.at(cutoff) << ','
        << report.users_evaluated << ',' << report.seconds << '\n';
}

inline void write_bench_table(std::ostream& out, std::span<const BenchRow> rows) {
  out << "mode,n_items,k,median_seconds,speedup_vs_ces\n";
  out << std::setprecision(10);
  for (const auto& row : rows)
    out << row.mode << ',' << row.n_items << ',' << row.k << ',' << row.median_seconds << ','
        << row.speedup_vs_ces << '\n';
}

// Ranked retrieval lists: user_id, 1-based rank, item_id, score.
inline void write_ranked_row(std::ostream& out, const std::string& user_id, std::size_t rank,
                             const std::string& item_id, double score) {
  out << user_id << '\t' << rank << '\t' << item_id << '\t' << std::setprecision(8) << score
      << '\n';
}

struct RankedList {
  std::string user_id;
  std::vector<std::string> item_ids;
  std::vector<double> scores;
};

inline std::vector<RankedList> read_ranked_lists(std::istream& in) {
  std::vector<RankedList> lists;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    std::string user, rank, item, score;
    if (!std::getline(fields, user, '\t') || !std::getline(fields, rank, '\t') ||
        !std::getline(fields, item, '\t') || !std::getline(fields, score, '\t'))
      throw ParseError("ranked list row needs user, rank, item, score", line_no);
    if (lists.empty() || lists.back().user_id != user) lists.push_back({user, {}, {}});
    lists.back().item_ids.push_back(item);
    lists.back().scores.push_back(std::strtod(score.c_str(), nullptr));
  }
  return lists;
}

}  // namespace hashgnn

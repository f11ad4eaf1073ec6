// Command-line driver: train, encode, retrieve, eval, bench.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hashgnn/eval.hpp"
#include "hashgnn/io.hpp"
#include "hashgnn/retrieval.hpp"
#include "hashgnn/trainer.hpp"

namespace {

using namespace hashgnn;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

struct TrainOptions {
  std::string edges;
  std::string out;
  TrainConfig cfg;
};

struct EncodeOptions {
  std::string checkpoint;
  std::string edges;
  std::string out_prefix;
};

struct RetrieveOptions {
  std::string codes;
  std::string embeddings;
  std::string users_map;
  std::string items_map;
  std::string train_edges;
  std::string out;
  std::size_t top_n = 10;
  std::size_t shortlist = 0;  // 0: 10 * top_n
  std::string mode = "hies";
};

struct EvalOptions {
  std::string ranked;
  std::string test_edges;
  std::string users_map;
  std::string items_map;
  std::string out;
  std::vector<std::size_t> cutoffs{10, 50, 100};
  std::string mode_tag;
};

struct BenchOptions {
  std::string codes;
  std::string embeddings;
  std::string users_map;
  std::string out;
  std::size_t queries = 100;
  std::size_t top_n = 10;
  std::size_t shortlist = 0;
  std::size_t repeats = 5;
  std::uint64_t seed = 1;
};

SplitDataset load_and_split(const std::string& edges_path, const TrainConfig& cfg) {
  auto in = detail::open_input(edges_path, std::ios::in);
  std::vector<TimedEdge> timed;
  const auto graph = load_edge_list(in, cfg.min_degree, cfg.chrono_split ? &timed : nullptr);
  return cfg.chrono_split
             ? split_interactions_chrono(graph, timed, cfg.train_frac, cfg.valid_frac)
             : split_interactions(graph, cfg.train_frac, cfg.valid_frac, cfg.seed);
}

// Edge file mapped through existing id maps; unknown ids are data errors.
std::vector<std::pair<std::uint32_t, std::uint32_t>> read_mapped_edges(
    std::istream& in, const std::unordered_map<std::string, std::uint32_t>& user_index,
    const std::unordered_map<std::string, std::uint32_t>& item_index) {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto sep = line.find_first_of("\t,");
    if (sep == std::string::npos) throw ParseError("expected user<TAB|,>item", line_no);
    auto second = line.substr(sep + 1);
    const auto sep2 = second.find_first_of("\t,");
    if (sep2 != std::string::npos) second.resize(sep2);
    const auto uit = user_index.find(line.substr(0, sep));
    const auto iit = item_index.find(second);
    if (uit == user_index.end())
      throw DataError("unknown user id '" + line.substr(0, sep) + "' in edge file");
    if (iit == item_index.end()) throw DataError("unknown item id '" + second + "' in edge file");
    edges.emplace_back(uit->second, iit->second);
  }
  return edges;
}

std::unordered_map<std::string, std::uint32_t> index_of(const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::uint32_t> index;
  index.reserve(ids.size());
  for (std::uint32_t i = 0; i < ids.size(); ++i) index.emplace(ids[i], i);
  return index;
}

int run_train(const TrainOptions& opts) {
  const auto split = load_and_split(opts.edges, opts.cfg);
  std::cerr << "graph: " << split.train.num_users << " users, " << split.train.num_items
            << " items | edges: " << split.train.num_edges() << " train, "
            << split.valid_edges.size() << " valid, " << split.test_edges.size() << " test | "
            << split.users_without_test << " users without test edges (skipped at eval)\n";

  const auto model = train(split, opts.cfg, &std::cerr);

  {
    auto out = detail::open_output(opts.out);
    save_checkpoint(out, model);
  }
  {
    auto out = detail::open_output(opts.out + ".log.csv", std::ios::out);
    write_training_log(out, model.log);
  }
  {
    auto out = detail::open_output(opts.out + ".users.tsv", std::ios::out);
    write_id_map(out, split.train.user_ids);
  }
  {
    auto out = detail::open_output(opts.out + ".items.tsv", std::ios::out);
    write_id_map(out, split.train.item_ids);
  }
  {
    auto out = detail::open_output(opts.out + ".train.edges", std::ios::out);
    write_train_edge_list(out, split.train);
  }
  {
    auto out = detail::open_output(opts.out + ".valid.edges", std::ios::out);
    write_edge_list(out, split.train, split.valid_edges);
  }
  {
    auto out = detail::open_output(opts.out + ".test.edges", std::ios::out);
    write_edge_list(out, split.train, split.test_edges);
  }

  if (model.diverged_at) {
    std::cerr << "training diverged at iteration " << *model.diverged_at
              << "; checkpoint holds the last finite parameters\n";
    return kExitNumeric;
  }
  std::cerr << "wrote " << opts.out << " after " << model.iterations << " iterations\n";
  return kExitOk;
}

int run_encode(const EncodeOptions& opts) {
  TrainedModel model;
  {
    auto in = detail::open_input(opts.checkpoint);
    model = load_checkpoint(in);
  }
  const auto split = load_and_split(opts.edges, model.config);
  if (split.train.num_users != model.num_users || split.train.num_items != model.num_items)
    throw DataError("edge file produces a different node universe than the checkpoint");

  const auto [codes, embeddings] = encode_all(model.params, split.train);
  {
    auto out = detail::open_output(opts.out_prefix + ".hgnc");
    save_codes(out, codes);
  }
  {
    auto out = detail::open_output(opts.out_prefix + ".hgne");
    save_embeddings(out, embeddings);
  }
  std::cerr << "encoded " << codes.n << " nodes at " << codes.k_bits << " bits\n";
  return kExitOk;
}

int run_retrieve(const RetrieveOptions& opts, unsigned threads) {
  CodeMatrix codes;
  EmbeddingMatrix embeddings;
  {
    auto in = detail::open_input(opts.codes);
    codes = load_codes(in);
  }
  {
    auto in = detail::open_input(opts.embeddings);
    embeddings = load_embeddings(in);
  }
  std::vector<std::string> user_ids, item_ids;
  {
    auto in = detail::open_input(opts.users_map, std::ios::in);
    user_ids = read_id_map(in);
  }
  {
    auto in = detail::open_input(opts.items_map, std::ios::in);
    item_ids = read_id_map(in);
  }
  if (codes.n != embeddings.n || codes.k_bits != embeddings.k)
    throw DataError("code and embedding files disagree on shape");
  if (codes.n != user_ids.size() + item_ids.size())
    throw DataError("id maps do not cover the encoded node count");

  const auto num_users = static_cast<std::uint32_t>(user_ids.size());
  const auto num_items = static_cast<std::uint32_t>(item_ids.size());
  const auto user_index = index_of(user_ids);
  const auto item_index = index_of(item_ids);

  std::vector<std::unordered_set<std::uint32_t>> train_items(num_users);
  {
    auto in = detail::open_input(opts.train_edges, std::ios::in);
    for (const auto& [u, i] : read_mapped_edges(in, user_index, item_index))
      train_items[u].insert(i);
  }

  const auto item_codes = codes.slice_rows(num_users, num_users + num_items);
  const auto item_embeddings = embeddings.slice_rows(num_users, num_users + num_items);
  const RetrievalMode mode = parse_retrieval_mode(opts.mode);
  const std::size_t shortlist = opts.shortlist ? opts.shortlist : 10 * opts.top_n;
  if (mode == RetrievalMode::hierarchical && opts.top_n > shortlist)
    throw ConfigError("topn exceeds shortlist");

  std::size_t truncated = 0;
  std::vector<RetrievalResult> results(num_users);
  parallel_for(num_users, threads, [&](std::size_t u) {
    const auto user = static_cast<std::uint32_t>(u);
    const auto& exclude = train_items[user];
    switch (mode) {
      case RetrievalMode::hamming:
        results[user] = hamming_scan(codes.row(user), item_codes, opts.top_n, exclude);
        break;
      case RetrievalMode::continuous:
        results[user] = continuous_scan(embeddings.row(user), item_embeddings, opts.top_n, exclude);
        break;
      case RetrievalMode::hierarchical:
        results[user] = hierarchical_search(codes.row(user), embeddings.row(user), item_codes,
                                            item_embeddings, shortlist, opts.top_n, exclude);
        break;
    }
  });

  auto out = detail::open_output(opts.out, std::ios::out);
  for (std::uint32_t u = 0; u < num_users; ++u) {
    if (results[u].indices.size() < opts.top_n) ++truncated;
    for (std::size_t rank = 0; rank < results[u].indices.size(); ++rank)
      write_ranked_row(out, user_ids[u], rank + 1, item_ids[results[u].indices[rank]],
                       results[u].scores[rank]);
  }
  if (truncated > 0)
    std::cerr << "warning: " << truncated << " users had fewer than " << opts.top_n
              << " candidates; their lists are truncated\n";
  std::cerr << "wrote rankings for " << num_users << " users (" << to_string(mode) << ", workers "
            << threads << ")\n";
  return kExitOk;
}

int run_eval(const EvalOptions& opts) {
  std::vector<std::string> user_ids, item_ids;
  {
    auto in = detail::open_input(opts.users_map, std::ios::in);
    user_ids = read_id_map(in);
  }
  {
    auto in = detail::open_input(opts.items_map, std::ios::in);
    item_ids = read_id_map(in);
  }
  const auto user_index = index_of(user_ids);
  const auto item_index = index_of(item_ids);

  std::vector<std::unordered_set<std::uint32_t>> test_items(user_ids.size());
  {
    auto in = detail::open_input(opts.test_edges, std::ios::in);
    for (const auto& [u, i] : read_mapped_edges(in, user_index, item_index))
      test_items[u].insert(i);
  }

  std::vector<RankedList> lists;
  {
    auto in = detail::open_input(opts.ranked, std::ios::in);
    lists = read_ranked_lists(in);
  }

  std::vector<std::vector<std::uint32_t>> rankings;
  std::vector<std::unordered_set<std::uint32_t>> ground_truth;
  for (const auto& list : lists) {
    const auto uit = user_index.find(list.user_id);
    if (uit == user_index.end())
      throw DataError("ranked list references unknown user '" + list.user_id + "'");
    std::vector<std::uint32_t> items;
    items.reserve(list.item_ids.size());
    for (const auto& id : list.item_ids) {
      const auto iit = item_index.find(id);
      if (iit == item_index.end())
        throw DataError("ranked list references unknown item '" + id + "'");
      items.push_back(iit->second);
    }
    rankings.push_back(std::move(items));
    ground_truth.push_back(test_items[uit->second]);
  }

  auto report = evaluate_rankings(rankings, ground_truth, opts.cutoffs, opts.mode_tag);
  {
    auto out = detail::open_output(opts.out, std::ios::out);
    write_metric_report(out, report);
  }
  std::cout << std::setprecision(6) << std::fixed;
  std::cout << "users evaluated: " << report.users_evaluated << " (skipped "
            << report.users_skipped << ")\n";
  std::cout << "cutoff        HR      NDCG\n";
  for (const auto& [cutoff, hr] : report.hr)
    std::cout << std::setw(6) << cutoff << "  " << std::setw(8) << hr << "  " << std::setw(8)
              << report.ndcg.at(cutoff) << "\n";
  return kExitOk;
}

int run_bench(const BenchOptions& opts) {
  CodeMatrix codes;
  EmbeddingMatrix embeddings;
  {
    auto in = detail::open_input(opts.codes);
    codes = load_codes(in);
  }
  {
    auto in = detail::open_input(opts.embeddings);
    embeddings = load_embeddings(in);
  }
  std::vector<std::string> user_ids;
  {
    auto in = detail::open_input(opts.users_map, std::ios::in);
    user_ids = read_id_map(in);
  }
  if (codes.n != embeddings.n) throw DataError("code and embedding files disagree on shape");
  if (user_ids.size() >= codes.n) throw DataError("user map does not leave any item rows");

  const auto num_users = static_cast<std::uint32_t>(user_ids.size());
  const auto item_codes = codes.slice_rows(num_users, codes.n);
  const auto item_embeddings = embeddings.slice_rows(num_users, codes.n);

  std::vector<std::uint32_t> query_rows(num_users);
  for (std::uint32_t u = 0; u < num_users; ++u) query_rows[u] = u;
  if (opts.queries > 0 && opts.queries < query_rows.size()) {
    Rng rng(opts.seed);
    std::shuffle(query_rows.begin(), query_rows.end(), rng);
    query_rows.resize(opts.queries);
  }
  CodeMatrix query_codes(static_cast<std::uint32_t>(query_rows.size()), codes.k_bits);
  EmbeddingMatrix query_embeddings(static_cast<std::uint32_t>(query_rows.size()), embeddings.k);
  for (std::uint32_t q = 0; q < query_rows.size(); ++q) {
    const auto src = codes.row(query_rows[q]);
    std::copy(src.begin(), src.end(), query_codes.row(q).begin());
    const auto emb = embeddings.row(query_rows[q]);
    std::copy(emb.begin(), emb.end(), query_embeddings.row(q).begin());
  }

  const std::size_t shortlist = opts.shortlist ? opts.shortlist : 10 * opts.top_n;
  const auto rows = bench_retrieval(item_codes, item_embeddings, query_codes, query_embeddings,
                                    opts.top_n, shortlist, opts.repeats);
  {
    auto out = detail::open_output(opts.out, std::ios::out);
    write_bench_table(out, rows);
  }
  std::cout << "mode   n_items        K   median_s   speedup_vs_ces  (queries " << query_rows.size()
            << ", repeats " << opts.repeats << ", workers 1)\n";
  std::cout << std::setprecision(6) << std::fixed;
  for (const auto& row : rows)
    std::cout << std::setw(5) << row.mode << std::setw(9) << row.n_items << std::setw(9) << row.k
              << std::setw(11) << row.median_seconds << std::setw(11) << row.speedup_vs_ces
              << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HashGNN: joint binary-hash and embedding learning on bipartite graphs"};
  app.require_subcommand(1);
  app.set_config("--config");

  unsigned threads = default_thread_count();
  app.add_option("--threads", threads, "worker thread cap (env HASHGNN_THREADS)");

  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "train a model from an edge list");
  train_cmd->add_option("--edges", train_opts.edges, "edge list file")->required();
  train_cmd->add_option("--out", train_opts.out, "checkpoint output path")->required();
  train_cmd->add_option("--bits", train_opts.cfg.k_bits, "hash code length K");
  train_cmd->add_option("--lambda", train_opts.cfg.lambda, "ranking loss weight");
  train_cmd->add_option("--alpha", train_opts.cfg.alpha, "ranking margin");
  train_cmd->add_option("--lr", train_opts.cfg.lr, "learning rate");
  train_cmd->add_option("--batch", train_opts.cfg.batch_size, "positive pairs per batch");
  train_cmd->add_option("--epochs", train_opts.cfg.epochs, "passes over the train edges");
  train_cmd->add_option("--iters", train_opts.cfg.max_iters,
                        "exact iteration count (overrides --epochs)");
  train_cmd->add_option("--triplets", train_opts.cfg.triplets_per_node, "triplets per anchor");
  train_cmd->add_option("--neg-per-pos", train_opts.cfg.neg_per_pos, "negatives per positive");
  train_cmd->add_option("--p-init", train_opts.cfg.p_init, "initial guidance probability");
  train_cmd->add_option("--p-decay", train_opts.cfg.p_decay, "multiplicative decay per interval");
  train_cmd->add_option("--p-interval", train_opts.cfg.p_interval_iters, "iterations per decay");
  train_cmd->add_option("--p-floor", train_opts.cfg.p_floor, "lower bound for p");
  train_cmd->add_flag("--p-additive", train_opts.cfg.p_additive,
                      "subtract (1 - decay) per interval instead of multiplying");
  train_cmd->add_option("--feat-dim", train_opts.cfg.feat_dim, "free embedding width D");
  train_cmd->add_option("--hidden1", train_opts.cfg.hidden1, "first conv layer width");
  train_cmd->add_option("--hidden2", train_opts.cfg.hidden2, "second conv layer width");
  train_cmd->add_option("--init-std", train_opts.cfg.init_std, "weight init stddev");
  train_cmd->add_option("--seed", train_opts.cfg.seed, "rng seed");
  train_cmd
      ->add_option("--mode", [&](const std::vector<std::string>& v) {
        train_opts.cfg.mode = parse_train_mode(v.front());
        return true;
      })
      ->description("hashgnn | hash_ste | hashgnn_nr | continuous")
      ->expected(1);
  train_cmd->add_option("--min-degree", train_opts.cfg.min_degree, "iterative degree filter");
  train_cmd->add_option("--train-frac", train_opts.cfg.train_frac, "train share per user");
  train_cmd->add_option("--valid-frac", train_opts.cfg.valid_frac,
                        "validation share of train candidates");
  train_cmd->add_flag("--chrono", train_opts.cfg.chrono_split,
                      "chronological per-user split (needs timestamps)");
  train_cmd->add_option("--neighbor-cap", train_opts.cfg.neighbor_cap,
                        "uniform neighbor sample cap, 0 = full");
  train_cmd->add_option("--log-interval", train_opts.cfg.log_interval, "iterations between log rows");
  train_cmd->add_option("--val-interval", train_opts.cfg.val_interval,
                        "iterations between validation AUC evaluations");

  EncodeOptions encode_opts;
  auto* encode_cmd = app.add_subcommand("encode", "emit hash codes and embeddings for all nodes");
  encode_cmd->add_option("--checkpoint", encode_opts.checkpoint, "trained checkpoint")->required();
  encode_cmd->add_option("--edges", encode_opts.edges, "edge list used for training")->required();
  encode_cmd->add_option("--out", encode_opts.out_prefix, "output prefix (.hgnc/.hgne)")->required();

  RetrieveOptions retrieve_opts;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "rank items for every user");
  retrieve_cmd->add_option("--codes", retrieve_opts.codes, "HGNC code file")->required();
  retrieve_cmd->add_option("--embeddings", retrieve_opts.embeddings, "HGNE embedding file")
      ->required();
  retrieve_cmd->add_option("--users", retrieve_opts.users_map, "user id map")->required();
  retrieve_cmd->add_option("--items", retrieve_opts.items_map, "item id map")->required();
  retrieve_cmd->add_option("--train", retrieve_opts.train_edges, "train edges to exclude")
      ->required();
  retrieve_cmd->add_option("--out", retrieve_opts.out, "ranked list TSV output")->required();
  retrieve_cmd->add_option("--topn", retrieve_opts.top_n, "results per user");
  retrieve_cmd->add_option("--shortlist", retrieve_opts.shortlist,
                           "hierarchical shortlist size (0 = 10x topn)");
  retrieve_cmd->add_option("--mode", retrieve_opts.mode, "hamr | hies | ces");

  EvalOptions eval_opts;
  auto* eval_cmd = app.add_subcommand("eval", "score ranked lists against test edges");
  eval_cmd->add_option("--ranked", eval_opts.ranked, "ranked list TSV")->required();
  eval_cmd->add_option("--test", eval_opts.test_edges, "test edge list")->required();
  eval_cmd->add_option("--users", eval_opts.users_map, "user id map")->required();
  eval_cmd->add_option("--items", eval_opts.items_map, "item id map")->required();
  eval_cmd->add_option("--out", eval_opts.out, "metric report CSV")->required();
  eval_cmd->add_option("--cutoffs", eval_opts.cutoffs, "cutoff list");
  eval_cmd->add_option("--mode-tag", eval_opts.mode_tag, "mode column value");

  BenchOptions bench_opts;
  auto* bench_cmd = app.add_subcommand("bench", "time the three retrieval modes");
  bench_cmd->add_option("--codes", bench_opts.codes, "HGNC code file")->required();
  bench_cmd->add_option("--embeddings", bench_opts.embeddings, "HGNE embedding file")->required();
  bench_cmd->add_option("--users", bench_opts.users_map, "user id map")->required();
  bench_cmd->add_option("--out", bench_opts.out, "benchmark CSV output")->required();
  bench_cmd->add_option("--queries", bench_opts.queries, "query user count (0 = all)");
  bench_cmd->add_option("--topn", bench_opts.top_n, "results per query");
  bench_cmd->add_option("--shortlist", bench_opts.shortlist, "shortlist size (0 = 10x topn)");
  bench_cmd->add_option("--repeats", bench_opts.repeats, "repeats for the median");
  bench_cmd->add_option("--seed", bench_opts.seed, "query sampling seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train_cmd->parsed()) return run_train(train_opts);
    if (encode_cmd->parsed()) return run_encode(encode_opts);
    if (retrieve_cmd->parsed()) return run_retrieve(retrieve_opts, std::max(1u, threads));
    if (eval_cmd->parsed()) return run_eval(eval_opts);
    if (bench_cmd->parsed()) return run_bench(bench_opts);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

#include "hashgnn/graph.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "test_util.hpp"

using namespace hashgnn;

TEST(LoadEdgeList, BuildsBipartiteGraph) {
  const auto g = testutil::graph_from_text("a\tx\na\ty\nb\tx\nb\ty\n");
  EXPECT_EQ(g.num_users, 2u);
  EXPECT_EQ(g.num_items, 2u);
  EXPECT_EQ(g.num_edges(), 4u);
  EXPECT_TRUE(g.has_edge(0, 0));
  EXPECT_TRUE(g.has_edge(1, 1));
  EXPECT_EQ(g.user_ids[0], "a");
  EXPECT_EQ(g.item_ids[1], "y");
  // both directions share every edge
  for (std::uint32_t u = 0; u < g.num_users; ++u)
    for (std::uint32_t i : g.user_adj.row(u)) EXPECT_TRUE(g.item_adj.contains(i, u));
}

TEST(LoadEdgeList, DeduplicatesRepeatedLines) {
  const auto g = testutil::graph_from_text("a\tx\na\ty\nb\tx\nb\ty\na\tx\n");
  EXPECT_EQ(g.num_edges(), 4u);
}

TEST(LoadEdgeList, AcceptsCommasCommentsAndTimestamps) {
  const auto g = testutil::graph_from_text("# comment\na,x,1593\n\nb\ty\t77\n");
  EXPECT_EQ(g.num_users, 2u);
  EXPECT_EQ(g.num_items, 2u);
  EXPECT_EQ(g.num_edges(), 2u);
}

TEST(LoadEdgeList, MalformedLineReportsLineNumber) {
  std::istringstream in("a\tx\njustonefield\n");
  try {
    load_edge_list(in, 0);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line, 2u);
  }
}

TEST(LoadEdgeList, IterativeDegreeFilterCanEmptyTheGraph) {
  // both users have degree 1 and drop; x then has no edges left
  std::istringstream in("a\tx\nb\tx\n");
  EXPECT_THROW(load_edge_list(in, 2), EmptyGraphError);
}

TEST(LoadEdgeList, DegreeFilterKeepsDenseCore) {
  // core: 2 users x 2 items fully connected; u2 hangs off item x only
  const auto g = testutil::graph_from_text("a\tx\na\ty\nb\tx\nb\ty\nc\tx\n", 2);
  EXPECT_EQ(g.num_users, 2u);
  EXPECT_EQ(g.num_items, 2u);
  EXPECT_EQ(g.num_edges(), 4u);
  EXPECT_EQ(g.user_index.count("c"), 0u);
}

TEST(LoadEdgeList, CapturesTimestamps) {
  std::istringstream in("a\tx\t30\nb\ty\t10\n");
  std::vector<TimedEdge> timed;
  load_edge_list(in, 0, &timed);
  ASSERT_EQ(timed.size(), 2u);
  EXPECT_EQ(timed[0].time, 30);
  EXPECT_EQ(timed[1].time, 10);
}

TEST(SplitInteractions, SeventyPercentPerUser) {
  std::ostringstream text;
  for (int i = 0; i < 10; ++i) text << "u\ti" << i << "\n";
  const auto g = testutil::graph_from_text(text.str());
  const auto split = split_interactions(g, 0.7, 0.0, 7);
  EXPECT_EQ(split.train.num_edges(), 7u);
  EXPECT_EQ(split.test_edges.size(), 3u);
  EXPECT_TRUE(split.valid_edges.empty());
}

TEST(SplitInteractions, ValidationComesOutOfTrainCandidates) {
  std::ostringstream text;
  for (int i = 0; i < 100; ++i) text << "u\ti" << i << "\n";
  const auto g = testutil::graph_from_text(text.str());
  const auto split = split_interactions(g, 0.7, 0.1, 7);
  EXPECT_EQ(split.valid_edges.size(), 7u);
  EXPECT_EQ(split.train.num_edges(), 63u);
  EXPECT_EQ(split.test_edges.size(), 30u);
}

TEST(SplitInteractions, DeterministicGivenSeed) {
  const auto text = testutil::random_edge_text(20, 30, 6, 11);
  const auto g = testutil::graph_from_text(text);
  const auto a = split_interactions(g, 0.7, 0.1, 42);
  const auto b = split_interactions(g, 0.7, 0.1, 42);
  EXPECT_EQ(a.train.user_adj.values, b.train.user_adj.values);
  EXPECT_EQ(a.test_edges, b.test_edges);
  EXPECT_EQ(a.valid_edges, b.valid_edges);
  const auto c = split_interactions(g, 0.7, 0.1, 43);
  EXPECT_NE(a.train.user_adj.values, c.train.user_adj.values);
}

TEST(SplitInteractions, PartitionsTheEdgeSet) {
  const auto g = testutil::graph_from_text(testutil::random_edge_text(15, 25, 5, 3));
  const auto split = split_interactions(g, 0.7, 0.1, 5);
  std::set<std::pair<std::uint32_t, std::uint32_t>> all;
  for (std::uint32_t u = 0; u < split.train.num_users; ++u)
    for (std::uint32_t i : split.train.user_adj.row(u)) all.emplace(u, i);
  const std::size_t train_count = all.size();
  for (const auto& e : split.valid_edges) EXPECT_TRUE(all.insert(e).second) << "valid overlaps";
  for (const auto& e : split.test_edges) EXPECT_TRUE(all.insert(e).second) << "test overlaps";
  EXPECT_EQ(all.size(), g.num_edges());
  EXPECT_EQ(train_count + split.valid_edges.size() + split.test_edges.size(), g.num_edges());
  for (const auto& [u, i] : all) EXPECT_TRUE(g.has_edge(u, i));
}

TEST(SplitInteractions, DegreeOneUserKeepsItsOnlyEdgeInTrain) {
  const auto g = testutil::graph_from_text("a\tx\nb\tx\nb\ty\nb\tz\n");
  const auto split = split_interactions(g, 0.7, 0.0, 1);
  EXPECT_EQ(split.train.user_adj.degree(0), 1u);
  for (const auto& [u, i] : split.test_edges) EXPECT_NE(u, 0u);
  EXPECT_GE(split.users_without_test, 1u);
}

TEST(SplitInteractions, EveryTrainingUserKeepsAnEdge) {
  const auto g = testutil::graph_from_text(testutil::random_edge_text(30, 40, 4, 9));
  const auto split = split_interactions(g, 0.7, 0.1, 2);
  for (std::uint32_t u = 0; u < split.train.num_users; ++u)
    EXPECT_GE(split.train.user_adj.degree(u), 1u);
}

TEST(SplitInteractionsChrono, EarliestEdgesTrain) {
  std::istringstream in("u\ta\t30\nu\tb\t10\nu\tc\t20\nu\td\t40\nu\te\t50\n");
  std::vector<TimedEdge> timed;
  const auto g = load_edge_list(in, 0, &timed);
  const auto split = split_interactions_chrono(g, timed, 0.7, 0.0);
  // deg 5, 4 candidates: times 10,20,30,40 -> train; 50 -> test
  EXPECT_EQ(split.train.num_edges(), 4u);
  ASSERT_EQ(split.test_edges.size(), 1u);
  EXPECT_EQ(g.item_ids[split.test_edges[0].second], "e");
}

TEST(SampleTriplets, RespectsMembershipContracts) {
  const auto g = testutil::graph_from_text("u\ta\nu\tb\nv\tc\nv\td\nv\ta\n");
  const auto split = split_interactions(g, 0.99, 0.0, 1);  // keep everything in train
  Rng rng(5);
  const auto triplets = sample_triplets(split, 0, 50, rng);
  ASSERT_EQ(triplets.size(), 50u);
  for (const auto& t : triplets) {
    EXPECT_EQ(t.anchor, 0u);
    const std::uint32_t pos_item = t.positive - split.train.num_users;
    const std::uint32_t neg_item = t.negative - split.train.num_users;
    EXPECT_TRUE(split.train.has_edge(0, pos_item));
    EXPECT_FALSE(split.full_has_edge(0, neg_item));
  }
}

TEST(SampleTriplets, ExactCountAndItemAnchors) {
  const auto g = testutil::graph_from_text(testutil::random_edge_text(10, 12, 4, 1));
  const auto split = split_interactions(g, 0.7, 0.0, 1);
  Rng rng(9);
  const std::uint32_t item_node = split.train.num_users;  // anchor on the item side
  const auto triplets = sample_triplets(split, item_node, 5, rng);
  EXPECT_EQ(triplets.size(), 5u);
  for (const auto& t : triplets) {
    EXPECT_LT(t.positive, split.train.num_users);  // positives are users
    EXPECT_LT(t.negative, split.train.num_users);
    EXPECT_TRUE(split.train.has_edge(t.positive, item_node - split.train.num_users));
  }
}

TEST(SampleTriplets, ZeroTrainNeighborsYieldsEmpty) {
  // With a 0.5 split each degree-2 user keeps exactly one train edge, so for
  // some seed one of the items ends up with no train neighbors at all.
  Rng rng(3);
  for (std::uint64_t seed = 0; seed < 64; ++seed) {
    const auto g = testutil::graph_from_text("a\tx\na\ty\nb\tx\nb\ty\n");
    const auto split = split_interactions(g, 0.5, 0.0, seed);
    for (std::uint32_t item = 0; item < split.train.num_items; ++item) {
      if (split.train.item_adj.degree(item) != 0) continue;
      EXPECT_TRUE(sample_triplets(split, split.train.item_node(item), 3, rng).empty());
      return;
    }
  }
  FAIL() << "no seed produced an item without train edges";
}

TEST(SampleEdgeBatch, SizesAndLabels) {
  const auto g = testutil::graph_from_text(testutil::random_edge_text(30, 40, 6, 2));
  const auto split = split_interactions(g, 0.7, 0.1, 4);
  Rng rng(17);
  const auto batch = sample_edge_batch(split, 256, 1, rng);
  ASSERT_EQ(batch.pairs.size(), 512u);
  std::size_t positives = 0;
  for (const auto& p : batch.pairs) positives += p.label;
  EXPECT_EQ(positives, 256u);
}

TEST(SampleEdgeBatch, LabelsMatchTrainMembership) {
  const auto g = testutil::graph_from_text(testutil::random_edge_text(20, 25, 5, 8));
  const auto split = split_interactions(g, 0.7, 0.1, 4);
  Rng rng(23);
  const auto batch = sample_edge_batch(split, 200, 2, rng);
  for (const auto& p : batch.pairs) {
    ASSERT_LT(p.node_i, split.train.num_users);
    ASSERT_TRUE(split.train.is_item_node(p.node_j));
    const std::uint32_t item = p.node_j - split.train.num_users;
    if (p.label)
      EXPECT_TRUE(split.train.has_edge(p.node_i, item));
    else
      EXPECT_FALSE(split.full_has_edge(p.node_i, item));
  }
}

TEST(SampleEdgeBatch, DeterministicGivenSeed) {
  const auto g = testutil::graph_from_text(testutil::random_edge_text(10, 15, 4, 5));
  const auto split = split_interactions(g, 0.7, 0.0, 4);
  Rng rng_a(99), rng_b(99);
  const auto a = sample_edge_batch(split, 64, 1, rng_a);
  const auto b = sample_edge_batch(split, 64, 1, rng_b);
  ASSERT_EQ(a.pairs.size(), b.pairs.size());
  for (std::size_t i = 0; i < a.pairs.size(); ++i) {
    EXPECT_EQ(a.pairs[i].node_i, b.pairs[i].node_i);
    EXPECT_EQ(a.pairs[i].node_j, b.pairs[i].node_j);
    EXPECT_EQ(a.pairs[i].label, b.pairs[i].label);
  }
}

// Ten thousand sampled negatives, zero true edges among them.
TEST(Sampling, NegativesAreNeverEdges) {
  const auto g = testutil::graph_from_text(testutil::random_edge_text(25, 30, 6, 21));
  const auto split = split_interactions(g, 0.7, 0.1, 21);
  Rng rng(77);
  std::size_t checked = 0;
  while (checked < 10000) {
    const auto batch = sample_edge_batch(split, 100, 1, rng);
    for (const auto& p : batch.pairs)
      if (!p.label) {
        EXPECT_FALSE(split.full_has_edge(p.node_i, p.node_j - split.train.num_users));
        ++checked;
      }
    for (std::uint32_t u = 0; u < 5; ++u)
      for (const auto& t : sample_triplets(split, u, 10, rng)) {
        EXPECT_FALSE(split.full_has_edge(t.anchor, t.negative - split.train.num_users));
        ++checked;
      }
  }
}

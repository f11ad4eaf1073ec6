#include "hashgnn/encoder.hpp"

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

using namespace hashgnn;

namespace {

Mat<double> identity_matrix(std::size_t n) {
  Mat<double> m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

GcnParams<double> random_params(const InteractionGraph& graph, std::size_t feat_dim,
                                std::vector<std::size_t> dims, Rng& rng, double stddev = 0.5) {
  GcnParams<double> params;
  params.features = randn<double>(graph.total_nodes(), feat_dim, stddev, rng);
  std::size_t in = feat_dim;
  for (std::size_t d : dims) {
    params.layer_weights.push_back(randn<double>(in, d, stddev, rng));
    params.activations.push_back(Activation::Relu);
    in = d;
  }
  return params;
}

}  // namespace

TEST(GcnForward, SingleLayerIdentityIsNeighborhoodMean) {
  // user u0 with neighbors i0, i1; features [1,1], [3,3], [-1,1]
  const auto g = testutil::graph_from_text("a\tx\na\ty\n");
  GcnParams<double> params;
  params.features = Mat<double>(3, 2);
  params.features(0, 0) = 1.0;
  params.features(0, 1) = 1.0;
  params.features(1, 0) = 3.0;
  params.features(1, 1) = 3.0;
  params.features(2, 0) = -1.0;
  params.features(2, 1) = 1.0;
  params.layer_weights.push_back(identity_matrix(2));
  params.activations.push_back(Activation::Identity);

  const std::uint32_t nodes[] = {0};
  const auto trace = gcn_forward(params, g, nodes);
  const auto& out = trace.output();
  ASSERT_EQ(out.rows, 1u);
  EXPECT_NEAR(out(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(out(0, 1), 5.0 / 3.0, 1e-12);
}

TEST(GcnForward, IsolatedNodeKeepsItsFeatureRow) {
  // Take user a's edges out of the adjacency (as a train split can) so the
  // mean collapses to the node's own row.
  const auto g = testutil::graph_from_text("a\tx\nb\tx\nb\ty\n");
  InteractionGraph isolated = g;
  isolated.user_adj.offsets = {0, 0, 2};  // user a loses its edges
  isolated.user_adj.values = {0, 1};
  isolated.item_adj.offsets = {0, 1, 2};
  isolated.item_adj.values = {1, 1};

  GcnParams<double> params;
  Rng rng(1);
  params.features = randn<double>(isolated.total_nodes(), 3, 1.0, rng);
  params.layer_weights.push_back(identity_matrix(3));
  params.activations.push_back(Activation::Identity);

  const std::uint32_t nodes[] = {0};
  const auto trace = gcn_forward(params, isolated, nodes);
  for (std::size_t c = 0; c < 3; ++c)
    EXPECT_DOUBLE_EQ(trace.output()(0, c), params.features(0, c));
}

TEST(GcnForward, MatchesDenseMatrixOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto g = testutil::graph_from_text(testutil::random_edge_text(5, 5, 2, seed + 100));
    Rng rng(seed);
    const auto params = random_params(g, 4, {4, 4}, rng);
    const auto oracle_out = oracle::dense_gcn_forward(params, g);

    std::vector<std::uint32_t> nodes(g.total_nodes());
    for (std::uint32_t v = 0; v < nodes.size(); ++v) nodes[v] = v;
    const auto trace = gcn_forward(params, g, nodes);
    for (std::uint32_t v = 0; v < nodes.size(); ++v)
      for (std::size_t c = 0; c < 4; ++c)
        EXPECT_NEAR(trace.output()(v, c), oracle_out(v, c), 1e-6) << "seed " << seed;
  }
}

TEST(GcnForward, FloatPathTracksDoublePath) {
  const auto g = testutil::graph_from_text(testutil::random_edge_text(8, 8, 3, 5));
  Rng rng_a(3), rng_b(3);
  const auto params64 = random_params(g, 6, {5, 4}, rng_a);
  GcnParams<float> params32;
  params32.features = Mat<float>(params64.features.rows, params64.features.cols);
  for (std::size_t i = 0; i < params64.features.data.size(); ++i)
    params32.features.data[i] = static_cast<float>(params64.features.data[i]);
  for (const auto& w : params64.layer_weights) {
    Mat<float> wf(w.rows, w.cols);
    for (std::size_t i = 0; i < w.data.size(); ++i) wf.data[i] = static_cast<float>(w.data[i]);
    params32.layer_weights.push_back(std::move(wf));
  }
  params32.activations = params64.activations;
  (void)rng_b;

  const std::uint32_t nodes[] = {0, 3, 9};
  const auto t64 = gcn_forward(params64, g, nodes);
  const auto t32 = gcn_forward(params32, g, nodes);
  for (std::size_t i = 0; i < t64.output().data.size(); ++i)
    EXPECT_NEAR(t32.output().data[i], t64.output().data[i], 1e-4);
}

TEST(GcnForward, PermutationOfNeighborListsIsIrrelevant) {
  const auto g = testutil::graph_from_text(testutil::random_edge_text(6, 6, 3, 8));
  Rng rng(2);
  const auto params = random_params(g, 4, {4}, rng);

  InteractionGraph permuted = g;
  for (std::uint32_t u = 0; u < permuted.num_users; ++u) {
    auto begin = permuted.user_adj.values.begin() + permuted.user_adj.offsets[u];
    auto end = permuted.user_adj.values.begin() + permuted.user_adj.offsets[u + 1];
    std::reverse(begin, end);
  }

  std::vector<std::uint32_t> nodes(g.num_users);
  for (std::uint32_t v = 0; v < nodes.size(); ++v) nodes[v] = v;
  const auto a = gcn_forward(params, g, nodes);
  const auto b = gcn_forward(params, permuted, nodes);
  for (std::size_t i = 0; i < a.output().data.size(); ++i)
    EXPECT_NEAR(a.output().data[i], b.output().data[i], 1e-12);
}

TEST(GcnForward, DimensionMismatchThrows) {
  const auto g = testutil::graph_from_text("a\tx\n");
  GcnParams<double> params;
  params.features = Mat<double>(2, 3);
  params.layer_weights.push_back(Mat<double>(4, 2));  // expects 4-dim input
  params.activations.push_back(Activation::Relu);
  const std::uint32_t nodes[] = {0};
  EXPECT_THROW(gcn_forward(params, g, nodes), ConfigError);
}

TEST(GcnBackward, ZeroUpstreamGradientGivesZeroGradients) {
  const auto g = testutil::graph_from_text(testutil::random_edge_text(5, 5, 2, 4));
  Rng rng(6);
  const auto params = random_params(g, 4, {3, 3}, rng);
  const std::uint32_t nodes[] = {1, 4};
  const auto trace = gcn_forward(params, g, nodes);
  const Mat<double> zero(trace.output().rows, trace.output().cols);
  const auto grads = gcn_backward(params, trace, zero);
  for (const auto& w : grads.layer_weight_grads)
    for (double v : w.data) EXPECT_EQ(v, 0.0);
  for (double v : grads.feature_grads.data) EXPECT_EQ(v, 0.0);
}

TEST(GcnBackward, ReverseModeIsLinearInUpstream) {
  const auto g = testutil::graph_from_text(testutil::random_edge_text(5, 6, 2, 14));
  Rng rng(7);
  const auto params = random_params(g, 4, {3}, rng);
  const std::uint32_t nodes[] = {0, 2};
  const auto trace = gcn_forward(params, g, nodes);
  auto grad = randn<double>(trace.output().rows, trace.output().cols, 1.0, rng);
  const auto g1 = gcn_backward(params, trace, grad);
  for (auto& v : grad.data) v *= 2.0;
  const auto g2 = gcn_backward(params, trace, grad);
  for (std::size_t l = 0; l < g1.layer_weight_grads.size(); ++l)
    for (std::size_t i = 0; i < g1.layer_weight_grads[l].data.size(); ++i)
      EXPECT_NEAR(g2.layer_weight_grads[l].data[i], 2.0 * g1.layer_weight_grads[l].data[i], 1e-12);
  for (std::size_t i = 0; i < g1.feature_grads.data.size(); ++i)
    EXPECT_NEAR(g2.feature_grads.data[i], 2.0 * g1.feature_grads.data[i], 1e-12);
}

// Central differences of a scalar readout of the forward pass, checked for
// every weight and every touched feature coordinate, at several points.
TEST(GcnBackward, MatchesFiniteDifferences) {
  const auto g = testutil::graph_from_text(testutil::random_edge_text(6, 6, 3, 30));
  for (std::uint64_t point = 0; point < 5; ++point) {
    Rng rng(point + 10);
    auto params = random_params(g, 4, {4, 3}, rng);
    const std::uint32_t nodes[] = {0, 2, 7};
    const auto readout = randn<double>(3, 3, 1.0, rng);  // fixed projection

    const auto loss = [&] {
      const auto trace = gcn_forward(params, g, nodes);
      double s = 0.0;
      for (std::size_t i = 0; i < trace.output().data.size(); ++i)
        s += trace.output().data[i] * readout.data[i % readout.data.size()];
      return s;
    };

    const auto trace = gcn_forward(params, g, nodes);
    Mat<double> grad_out(trace.output().rows, trace.output().cols);
    for (std::size_t i = 0; i < grad_out.data.size(); ++i)
      grad_out.data[i] = readout.data[i % readout.data.size()];
    const auto analytic = gcn_backward(params, trace, grad_out);

    const double eps = 1e-6;
    for (std::size_t l = 0; l < params.layer_weights.size(); ++l)
      for (std::size_t i = 0; i < params.layer_weights[l].data.size(); ++i) {
        double& coord = params.layer_weights[l].data[i];
        const double orig = coord;
        coord = orig + eps;
        const double hi = loss();
        coord = orig - eps;
        const double lo = loss();
        coord = orig;
        const double numeric = (hi - lo) / (2 * eps);
        EXPECT_NEAR(analytic.layer_weight_grads[l].data[i], numeric, 1e-4)
            << "layer " << l << " coord " << i;
      }
    for (std::uint32_t r = 0; r < analytic.feature_nodes.size(); ++r)
      for (std::size_t c = 0; c < params.features.cols; ++c) {
        double& coord = params.features(analytic.feature_nodes[r], c);
        const double orig = coord;
        coord = orig + eps;
        const double hi = loss();
        coord = orig - eps;
        const double lo = loss();
        coord = orig;
        EXPECT_NEAR(analytic.feature_grads(r, c), (hi - lo) / (2 * eps), 1e-4);
      }
  }
}

// Gradient w.r.t. a feature row is nonzero only within two hops of the batch.
TEST(GcnBackward, GradientsAreLocal) {
  // path: u0 - i0 - u1 - i1 - u2 - i2 (items offset by num_users = 3)
  const auto g = testutil::graph_from_text("u0\ti0\nu1\ti0\nu1\ti1\nu2\ti1\nu2\ti2\n");
  Rng rng(4);
  const auto params = random_params(g, 3, {3, 3}, rng);
  const std::uint32_t nodes[] = {0};  // u0
  const auto trace = gcn_forward(params, g, nodes);
  auto grad = randn<double>(1, 3, 1.0, rng);
  const auto grads = gcn_backward(params, trace, grad);

  // two hops from u0: {u0, i0, u1}; i1 (node 4), u2 (node 2), i2 (node 5)
  // are strictly farther
  for (std::uint32_t r = 0; r < grads.feature_nodes.size(); ++r) {
    const std::uint32_t node = grads.feature_nodes[r];
    EXPECT_TRUE(node == 0 || node == 3 || node == 1) << "unexpected touched node " << node;
  }
}

TEST(GcnBackward, StaleTraceShapeIsRejected) {
  const auto g = testutil::graph_from_text("a\tx\nb\tx\n");
  Rng rng(3);
  const auto params = random_params(g, 3, {3}, rng);
  const std::uint32_t nodes[] = {0, 1};
  const auto trace = gcn_forward(params, g, nodes);
  const Mat<double> wrong(1, 3);
  EXPECT_THROW(gcn_backward(params, trace, wrong), ConfigError);
}

TEST(GcnForward, NeighborCapLimitsAggregation) {
  const auto g = testutil::graph_from_text(testutil::random_edge_text(4, 20, 15, 3));
  Rng rng(8);
  const auto params = random_params(g, 4, {4}, rng);
  Rng sample_rng(5);
  const std::uint32_t nodes[] = {0, 1, 2, 3};
  const auto trace = gcn_forward(params, g, nodes, 6, &sample_rng);
  for (const auto& nbrs : trace.levels.back().neighbors) EXPECT_LE(nbrs.size(), 6u);
}

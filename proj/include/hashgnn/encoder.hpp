#pragma once

#include <cstdint>
#include <iterator>
#include <unordered_map>
#include <vector>

#include "hashgnn/common.hpp"
#include "hashgnn/graph.hpp"

namespace hashgnn {

enum class Activation : std::uint8_t { Relu = 0, Identity = 1 };

template <typename T>
T apply_activation(Activation a, T x) {
  return a == Activation::Relu ? (x > T(0) ? x : T(0)) : x;
}

// Derivative with respect to the pre-activation.
template <typename T>
T activation_grad(Activation a, T pre) {
  return a == Activation::Relu ? (pre > T(0) ? T(1) : T(0)) : T(1);
}

// Mean-aggregating graph convolution: per layer, a node's representation is
// the nonlinearity of W^l applied to the mean of its own previous-layer
// vector and those of its neighbors. Layer 0 representations are rows of the
// learnable feature table.
template <typename T>
struct GcnParams {
  Mat<T> features;                      // [num_nodes x feat_dim]
  std::vector<Mat<T>> layer_weights;    // W^l: [in_dim x out_dim] per layer
  std::vector<Activation> activations;  // one tag per layer

  std::size_t depth() const { return layer_weights.size(); }
  std::size_t out_dim() const { return layer_weights.back().cols; }

  void check() const {
    if (layer_weights.empty()) throw ConfigError("encoder needs at least one layer");
    if (activations.size() != layer_weights.size())
      throw ConfigError("one activation tag per layer required");
    std::size_t dim = features.cols;
    for (const auto& w : layer_weights) {
      if (w.rows != dim) throw ConfigError("layer weight rows do not match input dimension");
      dim = w.cols;
    }
  }
};

// Everything the backward pass needs, recorded exactly as used in forward.
// levels[l] holds the frontier whose layer-(l+1) outputs were computed; the
// top level is the requested batch in request order, lower frontiers are the
// sorted unique unions of the level above and its aggregated neighbors.
template <typename T>
struct GcnTrace {
  struct Level {
    std::vector<std::uint32_t> nodes;  // global node ids
    std::vector<std::vector<std::uint32_t>> neighbors;
    std::unordered_map<std::uint32_t, std::uint32_t> row_of;  // built below the top level
    Mat<T> means;  // aggregated layer inputs [|nodes| x in_dim]
    Mat<T> pre;    // means * W               [|nodes| x out_dim]
    Mat<T> act;    // activation(pre)
  };
  std::vector<Level> levels;

  const Mat<T>& output() const { return levels.back().act; }
};

template <typename T>
struct GcnGrads {
  std::vector<Mat<T>> layer_weight_grads;
  std::vector<std::uint32_t> feature_nodes;  // sorted; rows of feature_grads align
  Mat<T> feature_grads;
};

namespace detail {

// Neighbor list as used by aggregation: full neighborhood, or a uniform
// sample of at most `cap` when a cap is set.
inline std::vector<std::uint32_t> used_neighbors(const InteractionGraph& graph, std::uint32_t node,
                                                 std::uint32_t cap, Rng* rng) {
  std::vector<std::uint32_t> nbrs;
  graph.neighbors_of(node, nbrs);
  if (cap > 0 && nbrs.size() > cap) {
    if (!rng) throw ConfigError("neighbor cap requires an rng");
    std::vector<std::uint32_t> sampled;
    sampled.reserve(cap);
    std::sample(nbrs.begin(), nbrs.end(), std::back_inserter(sampled), cap, *rng);
    return sampled;
  }
  return nbrs;
}

}  // namespace detail

// Forward pass for a batch of global node ids. Returns the full trace; the
// batch output matrix is trace.output(). With neighbor_cap == 0 the full
// neighborhood is aggregated and no rng is consumed.
template <typename T>
GcnTrace<T> gcn_forward(const GcnParams<T>& params, const InteractionGraph& graph,
                        std::span<const std::uint32_t> nodes, std::uint32_t neighbor_cap = 0,
                        Rng* rng = nullptr) {
  params.check();
  for (std::uint32_t v : nodes)
    if (v >= graph.total_nodes()) throw ConfigError("node id out of range");
  if (params.features.rows != graph.total_nodes())
    throw ConfigError("feature table rows do not match node count");

  const std::size_t depth = params.depth();
  GcnTrace<T> trace;
  trace.levels.resize(depth);

  // Frontiers top-down: each layer's inputs come from the level below.
  trace.levels[depth - 1].nodes.assign(nodes.begin(), nodes.end());
  for (std::size_t l = depth; l-- > 0;) {
    auto& level = trace.levels[l];
    level.neighbors.resize(level.nodes.size());
    for (std::size_t r = 0; r < level.nodes.size(); ++r)
      level.neighbors[r] = detail::used_neighbors(graph, level.nodes[r], neighbor_cap, rng);
    if (l == 0) break;
    auto& below = trace.levels[l - 1];
    below.nodes = level.nodes;
    for (const auto& nbrs : level.neighbors)
      below.nodes.insert(below.nodes.end(), nbrs.begin(), nbrs.end());
    std::sort(below.nodes.begin(), below.nodes.end());
    below.nodes.erase(std::unique(below.nodes.begin(), below.nodes.end()), below.nodes.end());
  }
  for (std::size_t l = 0; l + 1 < depth; ++l) {
    auto& level = trace.levels[l];
    level.row_of.reserve(level.nodes.size());
    for (std::uint32_t r = 0; r < level.nodes.size(); ++r) level.row_of.emplace(level.nodes[r], r);
  }

  // Compute bottom-up. Layer 0 inputs are feature rows addressed by node id;
  // higher layers gather from the activation matrix of the level below.
  for (std::size_t l = 0; l < depth; ++l) {
    auto& level = trace.levels[l];
    const Mat<T>* lower_act = l == 0 ? &params.features : &trace.levels[l - 1].act;
    const auto* lower_rows = l == 0 ? nullptr : &trace.levels[l - 1].row_of;
    const std::size_t in_dim = lower_act->cols;

    level.means = Mat<T>(level.nodes.size(), in_dim);
    for (std::size_t r = 0; r < level.nodes.size(); ++r) {
      auto mean = level.means.row(r);
      const auto gather = [&](std::uint32_t v) {
        const std::size_t src = lower_rows ? lower_rows->at(v) : v;
        const auto row = lower_act->row(src);
        for (std::size_t c = 0; c < in_dim; ++c) mean[c] += row[c];
      };
      gather(level.nodes[r]);
      for (std::uint32_t nbr : level.neighbors[r]) gather(nbr);
      const T inv = T(1) / static_cast<T>(1 + level.neighbors[r].size());
      for (std::size_t c = 0; c < in_dim; ++c) mean[c] *= inv;
    }
    level.pre = matmul(level.means, params.layer_weights[l]);
    level.act = level.pre;
    for (auto& v : level.act.data) v = apply_activation(params.activations[l], v);
  }
  return trace;
}

// Reverse-mode pass matching gcn_forward. grad_output rows align with the
// forward batch; returns weight gradients per layer and gradients for every
// feature row touched by the receptive field (all other rows are zero).
template <typename T>
GcnGrads<T> gcn_backward(const GcnParams<T>& params, const GcnTrace<T>& trace,
                         const Mat<T>& grad_output) {
  const std::size_t depth = params.depth();
  if (trace.levels.size() != depth) throw ConfigError("trace depth does not match parameters");
  if (!grad_output.same_shape(trace.output()))
    throw ConfigError("grad shape does not match traced forward output");

  GcnGrads<T> grads;
  grads.layer_weight_grads.reserve(depth);
  for (const auto& w : params.layer_weights) grads.layer_weight_grads.emplace_back(w.rows, w.cols);

  // Feature gradient accumulator over the widest frontier plus its neighbors.
  {
    std::vector<std::uint32_t> touched = trace.levels[0].nodes;
    for (const auto& nbrs : trace.levels[0].neighbors)
      touched.insert(touched.end(), nbrs.begin(), nbrs.end());
    std::sort(touched.begin(), touched.end());
    touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
    grads.feature_nodes = std::move(touched);
  }
  grads.feature_grads = Mat<T>(grads.feature_nodes.size(), params.features.cols);
  std::unordered_map<std::uint32_t, std::uint32_t> feature_row;
  feature_row.reserve(grads.feature_nodes.size());
  for (std::uint32_t r = 0; r < grads.feature_nodes.size(); ++r)
    feature_row.emplace(grads.feature_nodes[r], r);

  Mat<T> grad_act = grad_output;
  for (std::size_t l = depth; l-- > 0;) {
    const auto& level = trace.levels[l];

    Mat<T> grad_pre = grad_act;
    for (std::size_t i = 0; i < grad_pre.data.size(); ++i)
      grad_pre.data[i] *= activation_grad(params.activations[l], level.pre.data[i]);

    add_matmul_tn(grads.layer_weight_grads[l], level.means, grad_pre);
    const Mat<T> grad_means = matmul_nt(grad_pre, params.layer_weights[l]);

    // The mean over self and neighbors routes an equal share of the gradient
    // to every contributor.
    Mat<T>* lower = nullptr;
    if (l > 0) {
      grad_act = Mat<T>(trace.levels[l - 1].nodes.size(), grad_means.cols);
      lower = &grad_act;
    }
    for (std::size_t r = 0; r < level.nodes.size(); ++r) {
      const T share = T(1) / static_cast<T>(1 + level.neighbors[r].size());
      const auto src = grad_means.row(r);
      const auto scatter = [&](std::uint32_t v) {
        auto dst = lower ? lower->row(trace.levels[l - 1].row_of.at(v))
                         : grads.feature_grads.row(feature_row.at(v));
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += share * src[c];
      };
      scatter(level.nodes[r]);
      for (std::uint32_t nbr : level.neighbors[r]) scatter(nbr);
    }
  }
  return grads;
}

}  // namespace hashgnn

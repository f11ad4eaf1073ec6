#pragma once

#include "hashgnn/encoder.hpp"
#include "hashgnn/hash.hpp"

namespace hashgnn {

// All trainable tensors: the graph encoder stack and the hash layer.
template <typename T>
struct ModelParams {
  GcnParams<T> gcn;
  HashLayerParams<T> hash;

  // Uniform tensor walk used by the optimizer and serialization. Order is
  // fixed: features, encoder weights in depth order, hash weight, hash bias.
  template <typename Self, typename Fn>
  static void for_each_tensor(Self& self, Fn&& fn) {
    fn("features", self.gcn.features);
    for (std::size_t l = 0; l < self.gcn.layer_weights.size(); ++l)
      fn(("gcn.w" + std::to_string(l + 1)).c_str(), self.gcn.layer_weights[l]);
    fn("hash.w", self.hash.w);
    fn("hash.b", self.hash.b);
  }

  template <typename U>
  ModelParams<U> cast() const {
    ModelParams<U> out;
    const auto convert = [](const Mat<T>& src) {
      Mat<U> dst(src.rows, src.cols);
      for (std::size_t i = 0; i < src.data.size(); ++i) dst.data[i] = static_cast<U>(src.data[i]);
      return dst;
    };
    out.gcn.features = convert(gcn.features);
    for (const auto& w : gcn.layer_weights) out.gcn.layer_weights.push_back(convert(w));
    out.gcn.activations = gcn.activations;
    out.hash.w = convert(hash.w);
    out.hash.b = convert(hash.b);
    return out;
  }
};

// Weights from a zero-centered normal, biases zero.
template <typename T>
ModelParams<T> init_model_params(std::size_t num_nodes, std::size_t feat_dim,
                                 std::span<const std::size_t> hidden_dims, std::size_t k_bits,
                                 double init_std, Rng& rng) {
  ModelParams<T> params;
  params.gcn.features = randn<T>(num_nodes, feat_dim, init_std, rng);
  std::size_t in_dim = feat_dim;
  for (std::size_t d : hidden_dims) {
    params.gcn.layer_weights.push_back(randn<T>(in_dim, d, init_std, rng));
    params.gcn.activations.push_back(Activation::Relu);
    in_dim = d;
  }
  params.hash.w = randn<T>(in_dim, k_bits, init_std, rng);
  params.hash.b = Mat<T>(1, k_bits);
  return params;
}

template <typename T>
struct ModelTrace {
  GcnTrace<T> gcn;
  Mat<T> z;  // tanh hash-layer output for the batch
};

// Encoder followed by the hash layer for a batch of global node ids.
template <typename T>
ModelTrace<T> model_forward(const ModelParams<T>& params, const InteractionGraph& graph,
                            std::span<const std::uint32_t> nodes, std::uint32_t neighbor_cap = 0,
                            Rng* rng = nullptr) {
  ModelTrace<T> trace;
  trace.gcn = gcn_forward(params.gcn, graph, nodes, neighbor_cap, rng);
  trace.z = hash_forward(params.hash, trace.gcn.output());
  return trace;
}

template <typename T>
struct ModelGrads {
  GcnGrads<T> gcn;
  Mat<T> hash_w;
  Mat<T> hash_b;
};

// Reverse pass from gradients w.r.t. z down to every trainable tensor.
template <typename T>
ModelGrads<T> model_backward(const ModelParams<T>& params, const ModelTrace<T>& trace,
                             const Mat<T>& grad_z) {
  ModelGrads<T> grads;
  auto hash_grads = hash_backward(params.hash, trace.gcn.output(), trace.z, grad_z);
  grads.hash_w = std::move(hash_grads.grad_w);
  grads.hash_b = std::move(hash_grads.grad_b);
  grads.gcn = gcn_backward(params.gcn, trace.gcn, hash_grads.grad_u);
  return grads;
}

}  // namespace hashgnn

#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "vgidm/autodiff.hpp"
#include "vgidm/featurize.hpp"
#include "vgidm/graph.hpp"
#include "vgidm/rng.hpp"

namespace vgidm {

enum class GnnArch { gcn, gat, sage };
enum class Activation { identity, relu, elu };
enum class Pooling { mean, max };

struct GnnConfig {
  GnnArch arch = GnnArch::gat;
  std::size_t n = 32;          ///< input, hidden and output width
  std::size_t heads = 4;       ///< GAT heads; each head has n / heads features
  double leaky_slope = 0.2;    ///< GAT score LeakyReLU slope
  Pooling pooling = Pooling::mean;
};

inline Activation default_activation(GnnArch arch) { return arch == GnnArch::gat ? Activation::elu : Activation::relu; }

inline Var activate(Var x, Activation a) {
  switch (a) {
    case Activation::relu: return ops::relu(x);
    case Activation::elu: return ops::elu(x);
    case Activation::identity: break;
  }
  return x;
}

/// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
inline Tensor gcn_normalized_adjacency(const Tensor& A) {
  const std::size_t m = A.rows();
  Tensor out = A;
  for (std::size_t i = 0; i < m; ++i) out.at(i, i) += 1.0;
  std::vector<double> inv_sqrt(m);
  for (std::size_t i = 0; i < m; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < m; ++j) d += out.at(i, j);
    inv_sqrt[i] = 1.0 / std::sqrt(d);
  }
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) *= inv_sqrt[i] * inv_sqrt[j];
  return out;
}

/// act(Â X W).
inline Var gcn_layer(Var X, const Tensor& A, Var W, Activation act) {
  Tape& t = *X.tape;
  return activate(ops::matmul(ops::matmul(t.constant(gcn_normalized_adjacency(A)), X), W), act);
}

struct GatHead {
  Var weight;  ///< F x F'
  Var a_src;   ///< F' x 1, applied to the receiving vertex i
  Var a_dst;   ///< F' x 1, applied to the neighbour j
};

/// Attention coefficients alpha_ij of one head, softmax over N(i) ∪ {i}.
inline Var gat_attention(Var H, const Tensor& A, const GatHead& head, double slope) {
  const std::size_t m = A.rows();
  Tensor mask = A;
  for (std::size_t i = 0; i < m; ++i) mask.at(i, i) = 1.0;
  Var scores = ops::leaky_relu(ops::outer_sum(ops::matmul(H, head.a_src), ops::matmul(H, head.a_dst)), slope);
  return ops::masked_softmax_rows(scores, mask);
}

/**
 * Multi-head graph attention. Per head: e_ij = LeakyReLU(a^T [W x_i || W x_j]),
 * alpha = softmax_j over N(i) ∪ {i}, output_i = act(sum_j alpha_ij W x_j).
 * Head outputs are concatenated.
 */
inline Var gat_layer(Var X, const Tensor& A, const std::vector<GatHead>& heads, Activation act, double slope = 0.2,
                     std::vector<Tensor>* attention = nullptr) {
  std::vector<Var> outs;
  outs.reserve(heads.size());
  for (const auto& h : heads) {
    Var H = ops::matmul(X, h.weight);
    Var alpha = gat_attention(H, A, h, slope);
    if (attention) attention->push_back(alpha.value());
    outs.push_back(ops::matmul(alpha, H));
  }
  return activate(outs.size() == 1 ? outs.front() : ops::concat_cols(outs), act);
}

/// Row-normalized adjacency D^{-1} A; isolated vertices get a zero row.
inline Tensor mean_aggregator(const Tensor& A) {
  const std::size_t m = A.rows();
  Tensor out = A;
  for (std::size_t i = 0; i < m; ++i) {
    double d = 0.0;
    for (std::size_t j = 0; j < m; ++j) d += A.at(i, j);
    if (d == 0.0) continue;
    for (std::size_t j = 0; j < m; ++j) out.at(i, j) /= d;
  }
  return out;
}

/// GraphSAGE mean aggregator: act([x_i || mean_{j in N(i)} x_j] W).
inline Var sage_layer(Var X, const Tensor& A, Var W, Activation act) {
  Tape& t = *X.tape;
  Var neigh = ops::matmul(t.constant(mean_aggregator(A)), X);
  return activate(ops::matmul(ops::concat_cols({X, neigh}), W), act);
}

/// Registers two layers of parameters under the "gnn." prefix.
inline void init_gnn(ParamSet& params, const GnnConfig& cfg, Rng rng) {
  const std::size_t n = cfg.n;
  for (int l = 1; l <= 2; ++l) {
    const std::string p = "gnn.l" + std::to_string(l);
    switch (cfg.arch) {
      case GnnArch::gcn:
        params.add(p + ".w", uniform_tensor({n, n}, 1.0 / std::sqrt(static_cast<double>(n)), rng));
        break;
      case GnnArch::sage:
        params.add(p + ".w", uniform_tensor({2 * n, n}, 1.0 / std::sqrt(static_cast<double>(2 * n)), rng));
        break;
      case GnnArch::gat: {
        if (cfg.heads == 0 || n % cfg.heads != 0) {
          throw std::invalid_argument("gnn: n=" + std::to_string(n) + " is not divisible by heads=" +
                                      std::to_string(cfg.heads));
        }
        const std::size_t hd = n / cfg.heads;
        for (std::size_t h = 0; h < cfg.heads; ++h) {
          const std::string q = p + ".h" + std::to_string(h);
          params.add(q + ".w", uniform_tensor({n, hd}, 1.0 / std::sqrt(static_cast<double>(n)), rng));
          params.add(q + ".a_src", uniform_tensor({hd, 1}, 1.0 / std::sqrt(static_cast<double>(hd)), rng));
          params.add(q + ".a_dst", uniform_tensor({hd, 1}, 1.0 / std::sqrt(static_cast<double>(hd)), rng));
        }
        break;
      }
    }
  }
}

struct GraphEmbeddings {
  Var vertices;  ///< rho, one row per graph vertex
  Var center;    ///< rho(x) for the graph's center
  Var graph;     ///< g(G^x), pooled over all vertices
};

/// Runs the two configured layers and pools the last layer's vertex outputs.
inline GraphEmbeddings embed_graph(const NeighborhoodGraph& graph, Var node_features, ParamSet& params,
                                   const GnnConfig& cfg) {
  Tape& t = *node_features.tape;
  if (node_features.value().rank() != 2 || node_features.value().rows() != graph.size()) {
    throw ShapeError("embed_graph: node features " + node_features.value().describe() + " for " +
                     std::to_string(graph.size()) + " vertices");
  }
  const Activation act = default_activation(cfg.arch);
  Var x = node_features;
  for (int l = 1; l <= 2; ++l) {
    const std::string p = "gnn.l" + std::to_string(l);
    switch (cfg.arch) {
      case GnnArch::gcn: x = gcn_layer(x, graph.adjacency, t.param(params.at(p + ".w")), act); break;
      case GnnArch::sage: x = sage_layer(x, graph.adjacency, t.param(params.at(p + ".w")), act); break;
      case GnnArch::gat: {
        std::vector<GatHead> heads;
        for (std::size_t h = 0; h < cfg.heads; ++h) {
          const std::string q = p + ".h" + std::to_string(h);
          heads.push_back({t.param(params.at(q + ".w")), t.param(params.at(q + ".a_src")),
                           t.param(params.at(q + ".a_dst"))});
        }
        x = gat_layer(x, graph.adjacency, heads, act, cfg.leaky_slope);
        break;
      }
    }
  }
  Var pooled = cfg.pooling == Pooling::mean ? ops::mean_rows(x) : ops::max_rows(x);
  return {x, ops::row(x, graph.center), pooled};
}

}  // namespace vgidm

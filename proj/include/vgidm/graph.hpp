#pragma once

#include <algorithm>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "vgidm/scene.hpp"
#include "vgidm/tensor.hpp"

namespace vgidm {

/// Clique over a center patch and its spatial nearest neighbours (same frame).
struct NeighborhoodGraph {
  std::vector<std::int64_t> vertices;  ///< patch ids, center first
  std::size_t center = 0;
  Tensor adjacency;                    ///< binary, symmetric, hollow
  std::size_t k = 0;                   ///< requested neighbour count

  std::size_t size() const { return vertices.size(); }
  std::size_t edge_count() const {
    std::size_t e = 0;
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = i + 1; j < size(); ++j) e += adjacency.at(i, j) != 0.0;
    return e;
  }
};

class MissingLocationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline const Vec3& location_of(const Patch& p) {
  if (!p.loc3d) throw MissingLocationError("patch " + std::to_string(p.id) + " has no estimated 3D location");
  return *p.loc3d;
}

/**
 * The K nearest candidates by L2 distance of estimated 3D location, nearest
 * first, ties broken by ascending patch id. Candidates equal to the center
 * (same patch id) are skipped.
 */
inline std::vector<std::int64_t> knn_neighbors(const Patch& center, const std::vector<Patch>& candidates,
                                               std::size_t k) {
  const Vec3& c = location_of(center);
  std::vector<std::pair<double, std::int64_t>> ranked;
  ranked.reserve(candidates.size());
  for (const auto& p : candidates) {
    if (p.id == center.id) continue;
    ranked.emplace_back((location_of(p) - c).norm(), p.id);
  }
  const std::size_t take = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end());
  std::vector<std::int64_t> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(ranked[i].second);
  return out;
}

inline NeighborhoodGraph build_clique(std::int64_t center, const std::vector<std::int64_t>& neighbors,
                                      std::size_t k = 0) {
  NeighborhoodGraph g;
  g.vertices.push_back(center);
  g.vertices.insert(g.vertices.end(), neighbors.begin(), neighbors.end());
  g.center = 0;
  g.k = k ? k : neighbors.size();
  const std::size_t n = g.size();
  g.adjacency = Tensor({n, n}, 1.0);
  for (std::size_t i = 0; i < n; ++i) g.adjacency.at(i, i) = 0.0;
  return g;
}

/// Neighbourhood graph of every patch of a frame, in patch order.
inline std::vector<NeighborhoodGraph> frame_graphs(const Frame& frame, std::size_t k) {
  std::vector<NeighborhoodGraph> out;
  out.reserve(frame.patches.size());
  for (const auto& p : frame.patches) out.push_back(build_clique(p.id, knn_neighbors(p, frame.patches, k), k));
  return out;
}

inline nlohmann::json graph_to_json(const NeighborhoodGraph& g) {
  std::vector<std::vector<int>> adj(g.size(), std::vector<int>(g.size()));
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) adj[i][j] = static_cast<int>(g.adjacency.at(i, j));
  return {{"center", g.vertices[g.center]}, {"vertices", g.vertices}, {"k", g.k}, {"adjacency", adj}};
}

}  // namespace vgidm

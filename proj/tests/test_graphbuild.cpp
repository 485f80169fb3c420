#include <gtest/gtest.h>

#include <algorithm>

#include "vgidm/graph.hpp"
#include "vgidm/rng.hpp"

using namespace vgidm;

namespace {

Patch at(std::int64_t id, double x, double y = 0.0, double z = 10.0) {
  Patch p;
  p.id = id;
  p.loc3d = Vec3{x, y, z};
  return p;
}

}  // namespace

TEST(Knn, NoCandidatesGivesEmptyList) {
  EXPECT_TRUE(knn_neighbors(at(0, 0), {}, 3).empty());
}

TEST(Knn, NearestFirst) {
  const std::vector<Patch> cands{at(3, 3.0), at(1, 1.0), at(2, 2.0)};
  EXPECT_EQ(knn_neighbors(at(0, 0), cands, 2), (std::vector<std::int64_t>{1, 2}));
}

TEST(Knn, TiesBrokenBySmallestId) {
  const std::vector<Patch> cands{at(9, 1.0), at(4, -1.0), at(7, 0.0, 1.0)};
  EXPECT_EQ(knn_neighbors(at(0, 0), cands, 2), (std::vector<std::int64_t>{4, 7}));
}

TEST(Knn, CenterExcludedAndKCappedByCandidates) {
  const std::vector<Patch> cands{at(0, 0.0), at(5, 1.0)};
  EXPECT_EQ(knn_neighbors(at(0, 0), cands, 4), (std::vector<std::int64_t>{5}));
}

TEST(Knn, MissingLocationThrows) {
  Patch bare;
  bare.id = 2;
  EXPECT_THROW(knn_neighbors(at(0, 0), {bare}, 1), MissingLocationError);
}

TEST(Knn, MatchesBruteForceSort) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Patch> cands;
    for (int i = 1; i <= 12; ++i) cands.push_back(at(i, rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(5, 15)));
    const Patch c = at(0, 0, 0, 10);
    std::vector<std::pair<double, std::int64_t>> all;
    for (const auto& p : cands) all.emplace_back((*p.loc3d - *c.loc3d).norm(), p.id);
    std::sort(all.begin(), all.end());
    const auto got = knn_neighbors(c, cands, 4);
    ASSERT_EQ(got.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(got[i], all[i].second);
  }
}

TEST(Clique, SingletonGraph) {
  const auto g = build_clique(7, {});
  EXPECT_EQ(g.size(), 1u);
  EXPECT_EQ(g.adjacency.rows(), 1u);
  EXPECT_EQ(g.adjacency.at(0, 0), 0.0);
  EXPECT_EQ(g.edge_count(), 0u);
}

TEST(Clique, FourVerticesSixEdges) {
  const auto g = build_clique(1, {2, 3, 4});
  EXPECT_EQ(g.size(), 4u);
  EXPECT_EQ(g.edge_count(), 6u);
  EXPECT_EQ(g.vertices[g.center], 1);
}

TEST(Clique, SymmetricAndHollow) {
  for (std::size_t n = 0; n < 8; ++n) {
    std::vector<std::int64_t> nb;
    for (std::size_t i = 0; i < n; ++i) nb.push_back(static_cast<std::int64_t>(i + 10));
    const auto g = build_clique(0, nb);
    for (std::size_t i = 0; i < g.size(); ++i) {
      EXPECT_EQ(g.adjacency.at(i, i), 0.0);
      for (std::size_t j = 0; j < g.size(); ++j) EXPECT_EQ(g.adjacency.at(i, j), g.adjacency.at(j, i));
    }
  }
}

TEST(FrameGraphs, OneGraphPerPatchCenteredOnIt) {
  Frame f;
  for (int i = 0; i < 6; ++i) f.patches.push_back(at(100 + i, i * 1.5));
  const auto gs = frame_graphs(f, 4);
  ASSERT_EQ(gs.size(), 6u);
  for (std::size_t i = 0; i < gs.size(); ++i) {
    EXPECT_EQ(gs[i].vertices[gs[i].center], f.patches[i].id);
    EXPECT_EQ(gs[i].size(), 5u);
  }
  // Leftmost patch: neighbours in order of distance.
  EXPECT_EQ(gs[0].vertices, (std::vector<std::int64_t>{100, 101, 102, 103, 104}));
}

TEST(FrameGraphs, SmallFrameGivesSmallerCliques) {
  Frame f;
  f.patches.push_back(at(1, 0));
  f.patches.push_back(at(2, 1));
  const auto gs = frame_graphs(f, 4);
  EXPECT_EQ(gs[0].size(), 2u);
  EXPECT_EQ(gs[0].k, 4u);
}

TEST(GraphJson, CarriesCenterAndAdjacency) {
  const auto j = graph_to_json(build_clique(3, {4, 5}, 2));
  EXPECT_EQ(j.at("center").get<std::int64_t>(), 3);
  EXPECT_EQ(j.at("adjacency")[0][1].get<int>(), 1);
  EXPECT_EQ(j.at("adjacency")[1][1].get<int>(), 0);
}

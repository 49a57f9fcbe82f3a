#pragma once

#include <cstdint>
#include <vector>

#include "risur/cloud.hpp"

namespace risur {

// Indices of a reference point and its k nearest neighbors, sorted by
// ascending distance with (coordinate-lexicographic, index) tie-breaks. The
// reference point itself is never a neighbor.
struct Neighborhood {
  int reference_index = -1;
  std::vector<int> neighbor_indices;
};

enum class FpsSeed { centroid_farthest, random };

// Farthest point sampling: m indices, greedy max-min distance. The seed is
// the point farthest from the centroid (ties broken by lexicographic
// coordinates, then index), or a uniformly random index when seed_mode is
// `random`. Requires 1 <= m <= cloud.size().
std::vector<int> farthest_point_sample(const PointCloud& cloud, int m,
                                       FpsSeed seed_mode = FpsSeed::centroid_farthest,
                                       std::uint64_t seed = 0);

// Exact k nearest neighbors of each query index, self excluded; points closer
// than 1e-12 to the query (duplicates) are skipped. Throws if fewer than k
// distinct neighbors exist. Grid-bucketed search with a brute-force fallback
// for small inputs; both give identical results.
std::vector<Neighborhood> knn(const PointCloud& cloud, const std::vector<int>& queries, int k);

// Brute-force reference used for testing.
std::vector<Neighborhood> knn_bruteforce(const PointCloud& cloud, const std::vector<int>& queries,
                                         int k);

}  // namespace risur

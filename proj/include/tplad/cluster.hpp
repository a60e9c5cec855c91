#pragma once

#include <cstdint>
#include <vector>

namespace tplad::cluster {

using Point = std::vector<double>;

struct KMeansResult {
  std::vector<int> labels;
  std::vector<Point> centroids;
  double inertia = 0.0;
};

/// Lloyd's algorithm with k-means++ seeding; best of `restarts` by inertia.
/// Deterministic for a fixed seed.
KMeansResult kmeans(const std::vector<Point>& points, int k, std::uint64_t seed,
                    int restarts = 5, int max_iter = 100);

/// Mean silhouette coefficient (Euclidean). Singletons score 0. Returns 0
/// when fewer than two clusters are populated.
double silhouette(const std::vector<Point>& points, const std::vector<int>& labels);

}  // namespace tplad::cluster

#include "tplad/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include "tplad/error.hpp"

namespace tplad::cluster {

namespace {

double sqdist(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

KMeansResult lloyd(const std::vector<Point>& points, int k, std::mt19937_64& rng, int max_iter) {
  const std::size_t n = points.size();
  const std::size_t dim = points.front().size();
  KMeansResult r;

  // k-means++ seeding
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  r.centroids.push_back(points[pick(rng)]);
  std::vector<double> d2(n);
  while (static_cast<int>(r.centroids.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::max();
      for (const auto& c : r.centroids) best = std::min(best, sqdist(points[i], c));
      d2[i] = best;
      total += best;
    }
    if (total <= 0.0) {
      r.centroids.push_back(points[pick(rng)]);
      continue;
    }
    std::uniform_real_distribution<double> u(0.0, total);
    double target = u(rng), acc = 0.0;
    std::size_t chosen = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (acc >= target) {
        chosen = i;
        break;
      }
    }
    r.centroids.push_back(points[chosen]);
  }

  r.labels.assign(n, 0);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::max();
      for (int c = 0; c < k; ++c) {
        double d = sqdist(points[i], r.centroids[static_cast<std::size_t>(c)]);
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      if (r.labels[i] != best) {
        r.labels[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<Point> sums(static_cast<std::size_t>(k), Point(dim, 0.0));
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto c = static_cast<std::size_t>(r.labels[i]);
      ++counts[c];
      for (std::size_t j = 0; j < dim; ++j) sums[c][j] += points[i][j];
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c)
      if (counts[c] > 0)
        for (std::size_t j = 0; j < dim; ++j)
          r.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
  }
  r.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    r.inertia += sqdist(points[i], r.centroids[static_cast<std::size_t>(r.labels[i])]);
  return r;
}

}  // namespace

KMeansResult kmeans(const std::vector<Point>& points, int k, std::uint64_t seed, int restarts,
                    int max_iter) {
  if (points.empty() || k < 1 || static_cast<std::size_t>(k) > points.size())
    throw Error(ErrorKind::TooFewSamples, "k-means needs 1 <= k <= number of points");
  std::mt19937_64 rng(seed);
  KMeansResult best;
  bool have = false;
  for (int r = 0; r < std::max(restarts, 1); ++r) {
    auto res = lloyd(points, k, rng, max_iter);
    if (!have || res.inertia < best.inertia) {
      best = std::move(res);
      have = true;
    }
  }
  return best;
}

double silhouette(const std::vector<Point>& points, const std::vector<int>& labels) {
  const std::size_t n = points.size();
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  if (sizes.size() < 2) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sizes[labels[i]] == 1) continue;
    std::map<int, double> sum;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum[labels[j]] += std::sqrt(sqdist(points[i], points[j]));
    double a = sum[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
    double b = std::numeric_limits<double>::max();
    for (const auto& [label, s] : sum)
      if (label != labels[i]) b = std::min(b, s / static_cast<double>(sizes[label]));
    double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(n);
}

}  // namespace tplad::cluster

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "declip/array.hpp"

namespace declip {

struct ClusterAssignment {
  std::vector<int> assignment;          // per-row cluster id in [0, K)
  Array centroids;                      // K x d
  double inertia = 0.0;                 // sum of squared distances to assigned centroid
  int iterations = 0;
  std::vector<double> inertia_history;  // one entry per Lloyd iteration
};

// k-means++ seeding followed by Lloyd iterations until the largest centroid
// shift drops below tol or max_iters is hit. Empty clusters are reseeded to
// the point farthest from its centroid. Runs n_restarts seeded inits and
// keeps the lowest-inertia result.
ClusterAssignment kmeans(const Array& points, int k, uint64_t seed, int max_iters = 100,
                         double tol = 1e-9, int n_restarts = 10);

struct ClusterReport {
  std::vector<std::string> categories;   // column order of the table
  std::vector<std::vector<int>> counts;  // K x |categories|
  double nmi = 0.0;                      // sqrt-normalized, 0 when either side is constant
};

ClusterReport cluster_report(const std::vector<int>& assignment,
                             const std::vector<std::string>& categories);

}  // namespace declip

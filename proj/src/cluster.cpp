#include "declip/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "declip/rng.hpp"

namespace declip {

namespace {

double sq_dist(const Array& pts, int row, const Array& centroids, int c) {
  double s = 0.0;
  for (int j = 0; j < pts.cols(); ++j) {
    const double d = pts.at(row, j) - centroids.at(c, j);
    s += d * d;
  }
  return s;
}

}  // namespace

namespace {

ClusterAssignment kmeans_single(const Array& points, int k, uint64_t seed, int max_iters,
                                double tol) {
  const int n = points.rows(), d = points.cols();

  Rng rng(seed, /*stream=*/17);
  ClusterAssignment res;
  res.centroids = Array(k, d);

  // k-means++ seeding.
  std::vector<double> min_d2(n, 0.0);
  int first = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
  res.centroids.set_row(0, points.row_vector(first));
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      double best = sq_dist(points, i, res.centroids, 0);
      for (int cc = 1; cc < c; ++cc) best = std::min(best, sq_dist(points, i, res.centroids, cc));
      min_d2[i] = best;
      total += best;
    }
    int chosen = n - 1;
    if (total > 0.0) {
      double target = rng.uniform01() * total, acc = 0.0;
      for (int i = 0; i < n; ++i) {
        acc += min_d2[i];
        if (acc >= target) {
          chosen = i;
          break;
        }
      }
    } else {
      chosen = static_cast<int>(rng.below(static_cast<uint64_t>(n)));
    }
    res.centroids.set_row(c, points.row_vector(chosen));
  }

  res.assignment.assign(n, 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    // Assignment step.
    double inertia = 0.0;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq_dist(points, i, res.centroids, 0);
      for (int c = 1; c < k; ++c) {
        const double dd = sq_dist(points, i, res.centroids, c);
        if (dd < bd) {
          bd = dd;
          best = c;
        }
      }
      res.assignment[i] = best;
      inertia += bd;
    }
    res.inertia = inertia;
    res.inertia_history.push_back(inertia);
    res.iterations = iter + 1;

    // Update step.
    Array next(k, d);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      counts[res.assignment[i]]++;
      for (int j = 0; j < d; ++j) next.at(res.assignment[i], j) += points.at(i, j);
    }
    for (int c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Reseed to the point farthest from its assigned centroid.
        int far = 0;
        double fd = -1.0;
        for (int i = 0; i < n; ++i) {
          const double dd = sq_dist(points, i, res.centroids, res.assignment[i]);
          if (dd > fd) {
            fd = dd;
            far = i;
          }
        }
        next.set_row(c, points.row_vector(far));
      } else {
        for (int j = 0; j < d; ++j) next.at(c, j) /= counts[c];
      }
    }

    double shift = 0.0;
    for (int c = 0; c < k; ++c) shift = std::max(shift, sq_dist(next, c, res.centroids, c));
    res.centroids = std::move(next);
    if (std::sqrt(shift) < tol) break;
  }

  // Final assignment against the converged centroids.
  double inertia = 0.0;
  for (int i = 0; i < n; ++i) {
    int best = 0;
    double bd = sq_dist(points, i, res.centroids, 0);
    for (int c = 1; c < k; ++c) {
      const double dd = sq_dist(points, i, res.centroids, c);
      if (dd < bd) {
        bd = dd;
        best = c;
      }
    }
    res.assignment[i] = best;
    inertia += bd;
  }
  res.inertia = inertia;
  return res;
}

}  // namespace

ClusterAssignment kmeans(const Array& points, int k, uint64_t seed, int max_iters,
                         double tol, int n_restarts) {
  const int n = points.rows();
  if (k < 1 || k > n)
    throw std::invalid_argument("kmeans: k=" + std::to_string(k) + " out of range [1, " +
                                std::to_string(n) + "]");
  if (n_restarts < 1) throw std::invalid_argument("kmeans: n_restarts must be >= 1");

  ClusterAssignment best;
  for (int r = 0; r < n_restarts; ++r) {
    ClusterAssignment cur = kmeans_single(points, k, splitmix64(seed) + r, max_iters, tol);
    if (r == 0 || cur.inertia < best.inertia) best = std::move(cur);
  }
  return best;
}

ClusterReport cluster_report(const std::vector<int>& assignment,
                             const std::vector<std::string>& categories) {
  if (assignment.size() != categories.size())
    throw std::invalid_argument("cluster_report: assignment/categories length mismatch");
  const size_t n = assignment.size();
  if (n == 0) throw std::invalid_argument("cluster_report: empty input");

  int k = 0;
  for (int a : assignment) k = std::max(k, a + 1);
  std::map<std::string, int> cat_index;
  ClusterReport rep;
  for (const auto& c : categories)
    if (!cat_index.count(c)) {
      cat_index[c] = static_cast<int>(rep.categories.size());
      rep.categories.push_back(c);
    }
  rep.counts.assign(k, std::vector<int>(rep.categories.size(), 0));
  for (size_t i = 0; i < n; ++i) rep.counts[assignment[i]][cat_index[categories[i]]]++;

  // NMI with sqrt normalization; defined as 0 when either marginal entropy
  // vanishes (e.g. a single cluster).
  const double dn = static_cast<double>(n);
  std::vector<double> pc(k, 0.0), pa(rep.categories.size(), 0.0);
  for (int c = 0; c < k; ++c)
    for (size_t a = 0; a < rep.categories.size(); ++a) {
      pc[c] += rep.counts[c][a] / dn;
      pa[a] += rep.counts[c][a] / dn;
    }
  auto entropy = [](const std::vector<double>& p) {
    double h = 0.0;
    for (double x : p)
      if (x > 0.0) h -= x * std::log(x);
    return h;
  };
  const double hc = entropy(pc), ha = entropy(pa);
  double mi = 0.0;
  for (int c = 0; c < k; ++c)
    for (size_t a = 0; a < rep.categories.size(); ++a) {
      const double pxy = rep.counts[c][a] / dn;
      if (pxy > 0.0) mi += pxy * std::log(pxy / (pc[c] * pa[a]));
    }
  rep.nmi = (hc > 0.0 && ha > 0.0) ? mi / std::sqrt(hc * ha) : 0.0;
  rep.nmi = std::clamp(rep.nmi, 0.0, 1.0);
  return rep;
}

}  // namespace declip

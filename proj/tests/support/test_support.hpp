#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "declip/array.hpp"
#include "declip/param_store.hpp"
#include "declip/rng.hpp"

namespace declip::testing {

// Central finite differences of a scalar function over a flattened parameter
// vector. The function is re-evaluated from scratch at each perturbed point.
inline std::vector<double> finite_diff(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> theta,
    double h = 1e-5) {
  std::vector<double> grad(theta.size());
  for (size_t i = 0; i < theta.size(); ++i) {
    const double orig = theta[i];
    theta[i] = orig + h;
    const double fp = f(theta);
    theta[i] = orig - h;
    const double fm = f(theta);
    theta[i] = orig;
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// Max relative error with a denominator floor; entries where both sides are
// below the floor compare as equal unless the gap is macroscopic.
inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b,
                          double floor = 1e-6) {
  double worst = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

inline Array random_array(Rng& rng, int rows, int cols, double scale = 1.0) {
  Array a(rows, cols);
  for (size_t i = 0; i < a.size(); ++i) a[i] = scale * rng.gaussian();
  return a;
}

inline Array random_unit_rows(Rng& rng, int rows, int cols) {
  Array a = random_array(rng, rows, cols);
  for (int i = 0; i < rows; ++i) {
    double n = 0.0;
    for (int j = 0; j < cols; ++j) n += a.at(i, j) * a.at(i, j);
    n = std::sqrt(n);
    for (int j = 0; j < cols; ++j) a.at(i, j) /= n;
  }
  return a;
}

// ---- straight-line loss oracles -------------------------------------------
// Independent of the graph implementation: plain loops, the textbook formulas,
// no max-subtraction tricks.

inline double oracle_clip_total(const Array& z_img, const Array& z_txt, double tau) {
  const int b = z_img.rows(), d = z_img.cols();
  auto sim = [&](int i, int j) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += z_img.at(i, c) * z_txt.at(j, c);
    return s / tau;
  };
  double total = 0.0;
  for (int i = 0; i < b; ++i) {
    double den_i2t = 0.0, den_t2i = 0.0;
    for (int j = 0; j < b; ++j) {
      den_i2t += std::exp(sim(i, j));
      den_t2i += std::exp(sim(j, i));
    }
    total += -std::log(std::exp(sim(i, i)) / den_i2t);
    total += -std::log(std::exp(sim(i, i)) / den_t2i);
  }
  return total / (2.0 * b);
}

inline std::vector<double> oracle_ctr_per_view(const Array& views,
                                               const std::vector<int>& pairing, double tau) {
  const int n = views.rows(), d = views.cols();
  auto sim = [&](int i, int j) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += views.at(i, c) * views.at(j, c);
    return s / tau;
  };
  std::vector<double> out(n);
  for (int i = 0; i < n; ++i) {
    double den = 0.0;
    for (int m = 0; m < n; ++m)
      if (m != i) den += std::exp(sim(i, m));
    out[i] = -std::log(std::exp(sim(i, pairing[i])) / den);
  }
  return out;
}

// Sorting oracle for the average-top-k value.
inline double oracle_topk_mean(std::vector<double> v, int k) {
  std::sort(v.begin(), v.end(), std::greater<double>());
  double s = 0.0;
  for (int i = 0; i < k; ++i) s += v[i];
  return s / k;
}

// Pairwise brute-force AUC with half-credit ties.
inline double oracle_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  double wins = 0.0;
  long pairs = 0;
  for (size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 1) continue;
    for (size_t j = 0; j < scores.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / pairs;
}

}  // namespace declip::testing

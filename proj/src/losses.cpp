#include "declip/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace declip {

using ad::Node;

namespace {

std::vector<double> row_max(const Array& a) {
  std::vector<double> m(a.rows());
  for (int i = 0; i < a.rows(); ++i) {
    double best = a.at(i, 0);
    for (int j = 1; j < a.cols(); ++j) best = std::max(best, a.at(i, j));
    m[i] = best;
  }
  return m;
}

std::vector<double> row_max_excl_diag(const Array& a) {
  std::vector<double> m(a.rows());
  for (int i = 0; i < a.rows(); ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < a.cols(); ++j)
      if (j != i) best = std::max(best, a.at(i, j));
    m[i] = best;
  }
  return m;
}

// -log softmax at the diagonal of a scaled similarity matrix, per row. Row
// maxima are subtracted as constants; the shift cancels exactly in the loss.
Node* neg_log_softmax_diag(Node* scaled) {
  Node* shifted = ad::sub_rows_const(scaled, row_max(scaled->value));
  Node* denom = ad::row_sum(ad::exp(shifted));
  return ad::sub(ad::log(denom), ad::diag(shifted));
}

}  // namespace

LossBreakdown clip_loss(Node* z_img, Node* z_txt, Node* inv_tau) {
  const int b = z_img->value.rows();
  if (b < 1) throw std::invalid_argument("clip_loss: empty batch");
  if (!z_img->value.same_shape(z_txt->value))
    throw std::invalid_argument("clip_loss: embedding shapes differ (" +
                                z_img->value.shape_str() + " vs " +
                                z_txt->value.shape_str() + ")");
  Node* sim = ad::mul_scalar_node(ad::matmul(z_img, ad::transpose(z_txt)), inv_tau);
  LossBreakdown out;
  out.i2t = neg_log_softmax_diag(sim);
  out.t2i = neg_log_softmax_diag(ad::transpose(sim));
  out.per_example = ad::scale(ad::add(out.i2t, out.t2i), 0.5);
  out.total = ad::scale(ad::sum(ad::add(out.i2t, out.t2i)), 1.0 / (2.0 * b));
  return out;
}

Node* ctr_loss(Node* views, const std::vector<int>& pairing, Node* inv_tau) {
  const int n = views->value.rows();
  if (n < 2) throw std::invalid_argument("ctr_loss: need at least 2 views");
  if (static_cast<int>(pairing.size()) != n)
    throw std::invalid_argument("ctr_loss: pairing size " + std::to_string(pairing.size()) +
                                " != view count " + std::to_string(n));
  for (int i = 0; i < n; ++i) {
    if (pairing[i] < 0 || pairing[i] >= n)
      throw std::invalid_argument("ctr_loss: pairing index out of range at view " +
                                  std::to_string(i));
    if (pairing[i] == i)
      throw std::invalid_argument("ctr_loss: pairing has a fixed point at view " +
                                  std::to_string(i));
    if (pairing[pairing[i]] != i)
      throw std::invalid_argument("ctr_loss: pairing is not an involution at view " +
                                  std::to_string(i));
  }
  Node* sim = ad::mul_scalar_node(ad::matmul(views, ad::transpose(views)), inv_tau);
  // Shift by the per-row non-self maximum so the denominator's largest term
  // is exp(0); the constant cancels between numerator and denominator.
  Node* shifted = ad::sub_rows_const(sim, row_max_excl_diag(sim->value));
  Node* denom = ad::row_sum_excl_diag(ad::exp(shifted));
  return ad::sub(ad::log(denom), ad::gather_cols(shifted, pairing));
}

Node* topk_relax(Node* losses, int k) {
  const int n = losses->value.rows();
  if (losses->value.cols() != 1)
    throw std::invalid_argument("topk_relax: expected a column vector, got " +
                                losses->value.shape_str());
  if (k < 1 || k > n)
    throw std::invalid_argument("topk_relax: k=" + std::to_string(k) +
                                " out of range [1, " + std::to_string(n) + "]");

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return losses->value.at(a, 0) > losses->value.at(b, 0);
  });
  const double lambda = losses->value.at(order[k - 1], 0);

  double hinge_sum = 0.0;
  for (int i = 0; i < n; ++i) hinge_sum += std::max(losses->value.at(i, 0) - lambda, 0.0);
  const double value = hinge_sum / k + lambda;

  std::vector<int> selected(order.begin(), order.begin() + k);
  const double inv_k = 1.0 / k;
  return losses->graph->make(Array::scalar(value), {losses}, "topk_relax",
                             [selected, inv_k](const Node&, const Array& g,
                                               const std::vector<Array*>& pg) {
                               for (int i : selected) pg[0]->at(i, 0) += g[0] * inv_k;
                             });
}

Node* topk_clip_loss(Node* z_img, Node* z_txt, Node* inv_tau, int k) {
  return topk_relax(clip_loss(z_img, z_txt, inv_tau).per_example, k);
}

Node* topk_clip_loss_per_view(Node* z_views, Node* z_txt, Node* inv_tau, int k,
                              const std::vector<int>& view_to_example) {
  const int n_views = z_views->value.rows();
  const int b = z_txt->value.rows();
  if (static_cast<int>(view_to_example.size()) != n_views)
    throw std::invalid_argument("topk_clip_loss_per_view: mapping size mismatch");
  for (int m : view_to_example)
    if (m < 0 || m >= b)
      throw std::invalid_argument("topk_clip_loss_per_view: example index out of range");

  Node* sim = ad::mul_scalar_node(ad::matmul(z_views, ad::transpose(z_txt)), inv_tau);
  // View-to-text: softmax over texts per view row.
  Node* shifted = ad::sub_rows_const(sim, row_max(sim->value));
  Node* i2t = ad::sub(ad::log(ad::row_sum(ad::exp(shifted))),
                      ad::gather_cols(shifted, view_to_example));
  // Text-to-view: per text row of the transpose, softmax over all views; view
  // m's loss reads text row ex(m) at column m.
  Node* sim_t = ad::transpose(sim);
  Node* shifted_t = ad::sub_rows_const(sim_t, row_max(sim_t->value));
  Node* log_denom_t = ad::log(ad::row_sum(ad::exp(shifted_t)));  // b x 1
  Node* denom_rows = ad::gather_rows(log_denom_t, view_to_example);
  Node* logit = ad::gather_cols(ad::transpose(shifted_t), view_to_example);
  Node* t2i = ad::sub(denom_rows, logit);

  Node* per_view = ad::scale(ad::add(i2t, t2i), 0.5);
  return topk_relax(per_view, k);
}

}  // namespace declip

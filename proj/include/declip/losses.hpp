#pragma once

#include <vector>

#include "declip/graph.hpp"

namespace declip {

// Per-batch loss with its per-item decomposition. total always equals the
// stated aggregation of the per-item vectors.
struct LossBreakdown {
  ad::Node* total = nullptr;        // 1x1
  ad::Node* i2t = nullptr;          // B x 1
  ad::Node* t2i = nullptr;          // B x 1
  ad::Node* per_example = nullptr;  // B x 1, (i2t + t2i) / 2
};

// Symmetric batch contrastive loss between paired image and text embeddings:
// total = (1/2B) * sum_i (L_i2t(i) + L_t2i(i)) with similarity s(u,v) = u'v.
// Rows are expected L2-normalized; inv_tau is the 1/tau graph node.
LossBreakdown clip_loss(ad::Node* z_img, ad::Node* z_txt, ad::Node* inv_tau);

// Per-view image-pair contrastive loss over 2B augmented views:
// l(i) = -log( exp(s_i,pair(i)/tau) / sum_{m != i} exp(s_i,m/tau) ).
// pairing must be a fixed-point-free involution.
ad::Node* ctr_loss(ad::Node* views, const std::vector<int>& pairing, ad::Node* inv_tau);

// Average-top-k hinge relaxation: (1/k) * sum_m [l_m - lambda]_+ + lambda with
// lambda the k-th largest entry, taken as a constant. The value equals the
// mean of the k largest entries; the gradient routes 1/k to each of the k
// selected entries (stable selection: value desc, index asc), which is the
// exact local gradient wherever the order statistic is strict.
ad::Node* topk_relax(ad::Node* losses, int k);

// topk_relax applied to the per-example symmetric CLIP losses (B items).
ad::Node* topk_clip_loss(ad::Node* z_img, ad::Node* z_txt, ad::Node* inv_tau, int k);

// Per-view alternative granularity: each of the 2B view embeddings scores a
// symmetric CLIP loss against the B text embeddings (view m's positive is its
// source example's text). Off by default in training config.
ad::Node* topk_clip_loss_per_view(ad::Node* z_views, ad::Node* z_txt, ad::Node* inv_tau,
                                  int k, const std::vector<int>& view_to_example);

}  // namespace declip

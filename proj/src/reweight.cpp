#include "declip/reweight.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace declip {

using ad::Node;

const char* to_string(GradScope s) {
  return s == GradScope::FinalLayer ? "final-layer" : "image-all";
}

const char* to_string(WeightVariant v) {
  return v == WeightVariant::GradDot ? "grad-dot" : "table1-norm";
}

GradScope grad_scope_from_string(const std::string& s) {
  if (s == "final-layer") return GradScope::FinalLayer;
  if (s == "image-all") return GradScope::ImageAll;
  throw std::invalid_argument("unknown grad scope: " + s);
}

WeightVariant weight_variant_from_string(const std::string& s) {
  if (s == "grad-dot") return WeightVariant::GradDot;
  if (s == "table1-norm") return WeightVariant::Table1Norm;
  throw std::invalid_argument("unknown weight variant: " + s);
}

double WeightVector::sum_normalized() const {
  return std::accumulate(normalized.begin(), normalized.end(), 0.0);
}

WeightVector normalize_alignments(const std::vector<double>& raw) {
  WeightVector out;
  out.raw = raw;
  out.clamped.resize(raw.size());
  double sum = 0.0;
  for (size_t i = 0; i < raw.size(); ++i) {
    out.clamped[i] = raw[i] > 0.0 ? raw[i] : 0.0;
    sum += out.clamped[i];
  }
  out.normalizer = sum + (sum == 0.0 ? 1.0 : 0.0);
  out.normalized.resize(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) out.normalized[i] = out.clamped[i] / out.normalizer;

  // Pin the distribution's sum to exactly 1.0: rewrite one positive entry as
  // 1 minus the left-to-right sum of the others (its correction is a few
  // ulps). Scanning from the last positive entry backwards reaches a slot
  // where the in-order re-sum lands on 1.0 exactly.
  if (sum > 0.0) {
    auto in_order_sum = [&] {
      return std::accumulate(out.normalized.begin(), out.normalized.end(), 0.0);
    };
    for (size_t pos = raw.size(); pos-- > 0 && in_order_sum() != 1.0;) {
      if (out.normalized[pos] <= 0.0) continue;
      double others = 0.0;
      for (size_t i = 0; i < raw.size(); ++i)
        if (i != pos) others += out.normalized[i];
      const double r = 1.0 - others;
      if (r < 0.0) continue;
      out.normalized[pos] = r;
    }
  }
  return out;
}

std::vector<std::string> scope_param_names(const DualEncoder& model, GradScope scope) {
  auto names = scope == GradScope::FinalLayer ? model.final_layer_param_names()
                                              : model.image_param_names();
  if (names.empty()) throw std::invalid_argument("alignment_weights: empty parameter scope");
  for (const auto& n : names)
    if (!model.params().has(n))
      throw std::invalid_argument("alignment_weights: unknown scope parameter " + n);
  return names;
}

WeightVector alignment_weights(const PairedBatch& batch, const DualEncoder& model,
                               const AlignmentConfig& cfg) {
  const auto scope = scope_param_names(model, cfg.scope);
  const int n_views = batch.views.rows();
  if (n_views < 2 || n_views != 2 * batch.batch_size())
    throw std::invalid_argument("alignment_weights: batch must carry 2B views");

  // Gradient of the top-k CLIP loss at the frozen snapshot.
  std::vector<double> g0;
  if (cfg.variant == WeightVariant::GradDot) {
    ad::Graph g;
    auto bind = model.bind(g);
    Node* inv_tau = model.inv_tau(g, bind);
    Node* z_txt = ad::l2_normalize_rows(
        model.encode_text(g, bind, g.input(batch.text_features)));
    Node* root = nullptr;
    if (cfg.topk_per_view) {
      Node* z_views = ad::l2_normalize_rows(
          model.encode_image(g, bind, g.input(batch.views)));
      std::vector<int> view_to_example(n_views);
      for (int m = 0; m < n_views; ++m) view_to_example[m] = m / 2;
      root = topk_clip_loss_per_view(z_views, z_txt, inv_tau, cfg.k, view_to_example);
    } else {
      Node* z_img = ad::l2_normalize_rows(
          model.encode_image(g, bind, g.input(batch.image_features)));
      root = topk_clip_loss(z_img, z_txt, inv_tau, cfg.k);
    }
    g.backward(root);
    g0 = ad::grad_vector(bind, model.params(), scope);
    for (double v : g0)
      if (!std::isfinite(v))
        throw std::runtime_error("alignment_weights: non-finite top-k CLIP gradient");
  }

  // One backward per view over a shared forward pass.
  ad::Graph g;
  auto bind = model.bind(g);
  Node* inv_tau = model.inv_tau(g, bind);
  Node* z_views =
      ad::l2_normalize_rows(model.encode_image(g, bind, g.input(batch.views)));
  Node* per_view = ctr_loss(z_views, batch.pairing, inv_tau);
  std::vector<Node*> roots(n_views);
  for (int m = 0; m < n_views; ++m) roots[m] = ad::at(per_view, m, 0);

  std::vector<double> raw(n_views);
  for (int m = 0; m < n_views; ++m) {
    g.zero_grad();
    g.backward(roots[m]);
    const auto gm = ad::grad_vector(bind, model.params(), scope);
    double w;
    if (cfg.variant == WeightVariant::GradDot) {
      w = std::inner_product(g0.begin(), g0.end(), gm.begin(), 0.0);
    } else {
      w = std::sqrt(std::inner_product(gm.begin(), gm.end(), gm.begin(), 0.0));
    }
    if (!std::isfinite(w))
      throw std::runtime_error("alignment_weights: non-finite alignment for view " +
                               std::to_string(m));
    raw[m] = w;
  }
  return normalize_alignments(raw);
}

namespace {

Objective build_objective(ad::Graph& g, const ad::Binding& b, const PairedBatch& batch,
                          const DualEncoder& model, const ObjectiveConfig& cfg,
                          const WeightVector* precomputed) {
  if (cfg.beta < 0.0) throw std::invalid_argument("debiased_objective: beta must be >= 0");

  Objective out;
  Node* inv_tau = model.inv_tau(g, b);
  Node* z_img =
      ad::l2_normalize_rows(model.encode_image(g, b, g.input(batch.image_features)));
  Node* z_txt =
      ad::l2_normalize_rows(model.encode_text(g, b, g.input(batch.text_features)));
  out.clip_total = clip_loss(z_img, z_txt, inv_tau).total;
  out.total = out.clip_total;
  if (cfg.mode == ObjectiveMode::ClipOnly) return out;

  if (batch.batch_size() < 2)
    throw std::invalid_argument("debiased_objective: debiased mode needs B >= 2");
  out.weights = precomputed ? *precomputed : alignment_weights(batch, model, cfg.alignment);

  // The weighted term steers the visual encoder; tau enters it as the current
  // value, detached, so the reweighting cannot drag the shared temperature.
  Node* inv_tau_const = g.constant(Array::scalar(1.0 / model.tau_value()));
  Node* z_views =
      ad::l2_normalize_rows(model.encode_image(g, b, g.input(batch.views)));
  Node* per_view = ctr_loss(z_views, batch.pairing, inv_tau_const);
  Node* w_const = g.constant(Array::column(out.weights.normalized));
  out.weighted_ctr = ad::dot(per_view, w_const);

  // Keep the clip-only root when the extra term is identically zero so the
  // beta = 0 and delta-guard cases reproduce clip-only updates exactly.
  if (cfg.beta > 0.0 && !out.weights.all_zero())
    out.total = ad::add(out.clip_total, ad::scale(out.weighted_ctr, cfg.beta));
  return out;
}

}  // namespace

Objective debiased_objective(ad::Graph& g, const ad::Binding& b, const PairedBatch& batch,
                             const DualEncoder& model, const ObjectiveConfig& cfg) {
  return build_objective(g, b, batch, model, cfg, nullptr);
}

Objective debiased_objective_with_weights(ad::Graph& g, const ad::Binding& b,
                                          const PairedBatch& batch, const DualEncoder& model,
                                          const ObjectiveConfig& cfg,
                                          const WeightVector& weights) {
  return build_objective(g, b, batch, model, cfg, &weights);
}

}  // namespace declip

#pragma once

#include <string>
#include <vector>

#include "declip/data.hpp"
#include "declip/graph.hpp"
#include "declip/losses.hpp"
#include "declip/model.hpp"

namespace declip {

// Parameter subset the per-view gradients are taken over. FinalLayer (the
// embedding projection of the image tower) is the default; ImageAll covers
// the whole image tower. The restriction is a cost decision and is recorded
// in run metadata.
enum class GradScope { FinalLayer, ImageAll };

// GradDot is the canonical alignment w_m = g_topk' g_ctr(m); Table1Norm keeps
// only the per-view gradient norm, offered for comparison.
enum class WeightVariant { GradDot, Table1Norm };

const char* to_string(GradScope s);
const char* to_string(WeightVariant v);
GradScope grad_scope_from_string(const std::string& s);
WeightVariant weight_variant_from_string(const std::string& s);

// Normalized surrogate weights over the 2B views, with the raw alignments and
// clamp results kept for logging. Either sums to exactly 1 or is all zero
// (the delta-guard path when every alignment clamps to zero).
struct WeightVector {
  std::vector<double> raw;         // w_m
  std::vector<double> clamped;     // max(w_m, 0)
  std::vector<double> normalized;  // W_m
  double normalizer = 0.0;         // sum of clamped + delta(sum)

  double sum_normalized() const;
  bool all_zero() const { return sum_normalized() == 0.0; }
};

// The Eq.-7 tail as a pure function of raw alignments.
WeightVector normalize_alignments(const std::vector<double>& raw);

struct AlignmentConfig {
  int k = 1;
  GradScope scope = GradScope::FinalLayer;
  WeightVariant variant = WeightVariant::GradDot;
  bool topk_per_view = false;  // per-view CLIP granularity for the top-k loss
};

// One backward pass for the top-k CLIP gradient, one per view for the
// contrastive gradients, all over a frozen parameter snapshot and restricted
// to the scope's parameters.
WeightVector alignment_weights(const PairedBatch& batch, const DualEncoder& model,
                               const AlignmentConfig& cfg);

// Scope resolution; throws on an empty selection.
std::vector<std::string> scope_param_names(const DualEncoder& model, GradScope scope);

enum class ObjectiveMode { ClipOnly, Debiased };

struct ObjectiveConfig {
  ObjectiveMode mode = ObjectiveMode::ClipOnly;
  int k = 1;
  double beta = 1.0;
  AlignmentConfig alignment;
};

// Training objective for one batch, built on top of the caller's graph and
// binding. In debiased mode the weights are computed on side graphs and enter
// as constants; with beta = 0 or an all-zero weight vector the returned root
// is exactly the clip-only node, so trajectories coincide bit for bit.
struct Objective {
  ad::Node* total = nullptr;
  ad::Node* clip_total = nullptr;
  ad::Node* weighted_ctr = nullptr;  // null in clip-only mode
  WeightVector weights;              // empty in clip-only mode
};

Objective debiased_objective(ad::Graph& g, const ad::Binding& b, const PairedBatch& batch,
                             const DualEncoder& model, const ObjectiveConfig& cfg);

// Same construction with caller-supplied weights (e.g. EMA-smoothed); the
// weights still enter as constants.
Objective debiased_objective_with_weights(ad::Graph& g, const ad::Binding& b,
                                          const PairedBatch& batch, const DualEncoder& model,
                                          const ObjectiveConfig& cfg,
                                          const WeightVector& weights);

}  // namespace declip

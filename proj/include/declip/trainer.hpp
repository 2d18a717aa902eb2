#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "declip/checkpoint.hpp"
#include "declip/data.hpp"
#include "declip/metrics.hpp"
#include "declip/model.hpp"
#include "declip/reweight.hpp"

namespace declip {

// No optimizer or schedule is canonical for this setup; every default here is
// recorded as non-canonical in run metadata.
struct TrainConfig {
  std::string mode = "clip";  // clip | debiased
  int batch_size = 16;        // B
  int k = 4;                  // top-k over per-example CLIP losses
  double beta = 1.0;
  std::string grad_scope = "final-layer";
  std::string weight_variant = "grad-dot";
  bool topk_per_view = false;
  double weight_ema = 0.0;  // rho; 0 disables smoothing

  std::string optimizer = "adam";  // sgd | adam
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 5;
  double aug_strength = 0.5;
  uint64_t seed = 1;

  ModelConfig model;

  std::string out_dir;       // empty: keep everything in memory
  std::string weight_trace;  // optional per-step weight CSV

  void validate() const;
  std::string canonical_text() const;  // key=value lines, sorted; hashed into checkpoints
  std::string config_hash() const;
};

struct LogRow {
  long step = 0;
  int epoch = 0;
  std::string kind;  // "step" or "epoch"
  double total_loss = 0.0;
  double clip_loss = 0.0;
  double weighted_ctr = 0.0;
  double w_max = 0.0;
  double w_entropy = 0.0;
  double w_zero_frac = 0.0;
  double val_auc = 0.0;  // NaN when not evaluated
};

struct TrainResult {
  DualEncoder model;
  std::vector<LogRow> log;
  std::string last_checkpoint;  // empty when out_dir unset
  std::string best_checkpoint;
  double best_val_auc = 0.0;  // NaN when never evaluated
};

// Deterministic under the config seed: fixed batch order, fixed augmentation
// streams, lexicographic parameter updates. Throws on a non-finite loss,
// naming the step and leaving the last epoch checkpoint in place.
TrainResult train(const TrainConfig& cfg, const TrainSet& train_set, const TrainSet& val_set,
                  const std::optional<PromptSet>& prompts);

void write_runlog_csv(const std::string& path, const std::vector<LogRow>& log);

// ---- evaluation -----------------------------------------------------------

struct PredictionRow {
  std::string id;
  double score = 0.0;
  int pred = 0;
  int label = 0;
  std::map<std::string, std::string> attributes;
};

struct EvalResult {
  std::vector<PredictionRow> predictions;
  std::map<std::string, FairnessReport> reports;
};

// Zero-shot prediction over every record, then one fairness report per
// requested attribute. An attribute present on no record is an error;
// records missing a given attribute are skipped for that report only.
EvalResult evaluate(const DualEncoder& model, const Dataset& data, const PromptSet& prompts,
                    const std::vector<std::string>& attributes, EsAucMode es_mode,
                    ThresholdRule rule, double threshold = 0.5);

// Zero-shot scores for attribute-stripped examples (validation path).
std::vector<double> zero_shot_scores(const DualEncoder& model, const TrainSet& set,
                                     const PromptSet& prompts);

void write_predictions_csv(const std::string& path,
                           const std::vector<PredictionRow>& predictions);
std::vector<PredictionRow> read_predictions_csv(const std::string& path);

}  // namespace declip

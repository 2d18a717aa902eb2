#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "declip/array.hpp"
#include "declip/model.hpp"
#include "declip/rng.hpp"

namespace declip {

// Full record as stored on disk. Attributes are evaluation-only; the training
// path never sees this type (see TrainExample below).
struct Record {
  std::string id;
  std::vector<double> image_features;
  std::string text;                          // raw note, may be empty
  std::vector<double> text_features;         // set when precomputed
  bool has_text_features = false;
  int label = 0;
  std::map<std::string, std::string> attributes;
};

struct Dataset {
  int image_dim = 0;
  int text_dim = 0;  // 0 when records carry raw note strings only
  std::vector<Record> records;
};

// Attribute firewall: the object handed to the training loop. It has no
// attribute field and no id, so training code cannot express attribute access.
struct TrainExample {
  std::vector<double> image_features;
  std::vector<double> text_features;
  int label = 0;
};

struct TrainSet {
  int image_dim = 0;
  int text_dim = 0;
  std::vector<TrainExample> examples;
};

// B originals plus their 2B augmented views. Views 2i and 2i+1 belong to
// example i; pairing is the fixed-point-free involution 2i <-> 2i+1.
struct PairedBatch {
  Array image_features;  // B x p
  Array text_features;   // B x q
  std::vector<int> labels;
  Array views;           // 2B x p
  std::vector<int> pairing;

  int batch_size() const { return image_features.rows(); }
};

// ---- synthetic generator --------------------------------------------------

struct GroupSpec {
  std::string name;
  double proportion = 0.0;
  double shift = 0.0;   // image mean offset along the group direction
  double signal = 0.0;  // class signal strength in image space
  double noise = 1.0;   // feature noise scale
};

struct GenSpec {
  int n = 0;
  int image_dim = 0;
  int text_dim = 0;
  std::vector<GroupSpec> groups;
  double class_balance = 0.5;
  uint64_t seed = 1;
  // Text-side mixing constants.
  double text_class_scale = 1.0;
  double text_group_scale = 0.5;
  double text_noise_scale = 0.5;
};

struct Generated {
  Dataset data;
  // Class prompts are the exact class-conditional means of the text features,
  // so zero-shot evaluation needs no extra inputs.
  std::vector<Prompt> prompts;
};

Generated gen_synthetic(const GenSpec& spec);

// Exact largest-remainder allocation of n items to the given proportions.
std::vector<int> largest_remainder_counts(const std::vector<double>& proportions, int n);

// ---- featurization and augmentation ---------------------------------------

// Signed bag-of-words hashing: lowercase, whitespace tokens, FNV-1a bucket and
// sign, then L2 normalization. Empty notes map to the zero vector.
std::vector<double> hash_featurize(const std::string& note, int dim);

// Two stochastic views: additive Gaussian noise of the given strength, then
// each coordinate zeroed with probability 0.1 * min(strength, 1).
std::pair<std::vector<double>, std::vector<double>> augment(
    const std::vector<double>& x, double strength, Rng& stream);

PairedBatch make_paired_batch(const TrainSet& set, const std::vector<size_t>& indices,
                              double aug_strength, Rng& stream);

// ---- ingestion and splits ---------------------------------------------------

Dataset load_jsonl(const std::string& path);
void save_jsonl(const std::string& path, const Dataset& data);

std::vector<Prompt> load_prompts_jsonl(const std::string& path, int text_dim);
void save_prompts_jsonl(const std::string& path, const std::vector<Prompt>& prompts);

struct SplitResult {
  Dataset train, val, test;
};

// Seeded permutation partition, stratified by label via a proportional
// interleave of the shuffled label strata; split sizes follow the
// largest-remainder allocation of the fractions.
SplitResult split(const Dataset& data, double train_frac, double val_frac, double test_frac,
                  uint64_t seed);

// Crossing the firewall: drops ids and attributes, hash-featurizes raw notes.
// text_dim is only consulted when records carry raw notes.
TrainSet strip_attributes(const Dataset& data, int text_dim);

}  // namespace declip

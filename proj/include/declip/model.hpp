#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "declip/array.hpp"
#include "declip/graph.hpp"
#include "declip/param_store.hpp"

namespace declip {

struct ModelConfig {
  int image_dim = 16;   // p
  int text_dim = 16;    // q
  int embed_dim = 8;    // d
  int hidden = 0;       // hidden width, 0 -> 2 * embed_dim
  int depth = 2;        // linear layers per tower (1 = single projection)
  double tau_init = 0.07;
  uint64_t init_seed = 1;

  int hidden_width() const { return hidden > 0 ? hidden : 2 * embed_dim; }
};

// One class prompt: an id plus either a raw prompt string (hash-featurized at
// load time) or a precomputed text feature vector.
struct Prompt {
  int class_id = 0;
  std::string text;
  std::vector<double> text_features;
};

class PromptSet {
 public:
  static PromptSet from_vectors(std::vector<Prompt> prompts);
  static PromptSet from_strings(const std::vector<std::pair<int, std::string>>& prompts,
                                int text_dim);

  const std::vector<Prompt>& prompts() const { return prompts_; }
  size_t size() const { return prompts_.size(); }
  int text_dim() const { return static_cast<int>(prompts_[0].text_features.size()); }
  Array feature_matrix() const;          // M x q, row order = ascending class id
  std::vector<int> class_ids() const;

 private:
  std::vector<Prompt> prompts_;  // sorted by class id
};

struct ZeroShotResult {
  int class_id = 0;                  // argmax cosine, ties to lowest class id
  std::vector<double> cosines;       // aligned with PromptSet order
  double score = 0.0;                // binary only: sigmoid((cos_pos - cos_neg) / tau)
};

// Two-tower MLP encoder pair with a learnable temperature stored as log(tau).
// Training mutates parameters between passes; read-only inference is safe to
// share across threads.
class DualEncoder {
 public:
  static DualEncoder init(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }

  ad::Binding bind(ad::Graph& g) const { return ad::bind(g, params_); }

  // Graph-side encoders; input rows carry image/text feature vectors. The
  // outputs are raw embeddings; callers normalize before similarity.
  ad::Node* encode_image(ad::Graph& g, const ad::Binding& b, ad::Node* x) const;
  ad::Node* encode_text(ad::Graph& g, const ad::Binding& b, ad::Node* t) const;
  ad::Node* tau(ad::Graph& g, const ad::Binding& b) const;      // exp(log_tau)
  ad::Node* inv_tau(ad::Graph& g, const ad::Binding& b) const;  // exp(-log_tau)

  // Forward-only numeric paths for evaluation.
  Array encode_image_values(const Array& x) const;
  Array encode_text_values(const Array& t) const;
  double tau_value() const;

  std::vector<std::string> image_param_names() const;        // whole image tower
  std::vector<std::string> final_layer_param_names() const;  // embedding projection

 private:
  DualEncoder(ModelConfig cfg) : cfg_(std::move(cfg)) {}
  std::vector<int> tower_widths(int in_dim) const;
  Array forward_values(const Array& x, const std::string& prefix, int in_dim) const;

  ModelConfig cfg_;
  ad::ParamStore params_;
};

// Eq.-style zero-shot classification: cosine similarity between the image
// embedding and each class prompt embedding, argmax wins. The binary score is
// the logistic of the cosine margin over tau (recorded in report metadata).
ZeroShotResult zero_shot_from_embedding(const std::vector<double>& image_embedding,
                                        const Array& prompt_embeddings,
                                        const std::vector<int>& class_ids, double tau);

ZeroShotResult zero_shot_predict(const DualEncoder& model,
                                 const std::vector<double>& image_features,
                                 const PromptSet& prompts);

inline constexpr const char* kScoreDefinition = "sigmoid((cos_pos - cos_neg) / tau)";

}  // namespace declip

#include "declip/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "declip/data.hpp"
#include "declip/rng.hpp"

namespace declip {

PromptSet PromptSet::from_vectors(std::vector<Prompt> prompts) {
  if (prompts.size() < 2) throw std::invalid_argument("PromptSet: need at least 2 prompts");
  std::sort(prompts.begin(), prompts.end(),
            [](const Prompt& a, const Prompt& b) { return a.class_id < b.class_id; });
  std::set<int> ids;
  const size_t dim = prompts[0].text_features.size();
  for (const auto& p : prompts) {
    if (!ids.insert(p.class_id).second)
      throw std::invalid_argument("PromptSet: duplicate class id " +
                                  std::to_string(p.class_id));
    if (p.text_features.size() != dim || dim == 0)
      throw std::invalid_argument("PromptSet: inconsistent prompt feature dims");
  }
  PromptSet ps;
  ps.prompts_ = std::move(prompts);
  return ps;
}

PromptSet PromptSet::from_strings(const std::vector<std::pair<int, std::string>>& prompts,
                                  int text_dim) {
  std::vector<Prompt> out;
  for (const auto& [id, text] : prompts)
    out.push_back(Prompt{id, text, hash_featurize(text, text_dim)});
  return from_vectors(std::move(out));
}

Array PromptSet::feature_matrix() const {
  Array m(static_cast<int>(prompts_.size()), text_dim());
  for (size_t i = 0; i < prompts_.size(); ++i)
    m.set_row(static_cast<int>(i), prompts_[i].text_features);
  return m;
}

std::vector<int> PromptSet::class_ids() const {
  std::vector<int> ids;
  for (const auto& p : prompts_) ids.push_back(p.class_id);
  return ids;
}

std::vector<int> DualEncoder::tower_widths(int in_dim) const {
  std::vector<int> w{in_dim};
  for (int l = 0; l < cfg_.depth - 1; ++l) w.push_back(cfg_.hidden_width());
  w.push_back(cfg_.embed_dim);
  return w;
}

DualEncoder DualEncoder::init(const ModelConfig& cfg) {
  if (cfg.depth < 1) throw std::invalid_argument("DualEncoder: depth must be >= 1");
  if (cfg.image_dim < 1 || cfg.text_dim < 1 || cfg.embed_dim < 1)
    throw std::invalid_argument("DualEncoder: dims must be positive");
  DualEncoder m(cfg);
  Rng rng(cfg.init_seed, /*stream=*/7);

  auto init_tower = [&](const std::string& prefix, int in_dim) {
    auto widths = m.tower_widths(in_dim);
    for (size_t l = 0; l + 1 < widths.size(); ++l) {
      const int fan_in = widths[l], fan_out = widths[l + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      Array w(fan_in, fan_out);
      for (size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-bound, bound);
      m.params_.add(prefix + "." + std::to_string(l) + ".w", std::move(w));
      m.params_.add(prefix + "." + std::to_string(l) + ".b", Array(1, fan_out, 0.0));
    }
  };
  // Image tower first, then text: keeps the draw order stable under config
  // changes to either tower alone.
  init_tower("img", cfg.image_dim);
  init_tower("txt", cfg.text_dim);
  m.params_.add("log_tau", Array::scalar(std::log(cfg.tau_init)));
  return m;
}

namespace {

ad::Node* tower_forward(const ad::Binding& b, ad::Node* x,
                        const std::string& prefix, int depth, int expected_dim,
                        const char* what) {
  if (x->value.cols() != expected_dim)
    throw std::invalid_argument(std::string(what) + ": input dim " +
                                std::to_string(x->value.cols()) + ", expected " +
                                std::to_string(expected_dim));
  ad::Node* h = x;
  for (int l = 0; l < depth; ++l) {
    const std::string key = prefix + "." + std::to_string(l);
    h = ad::add_row_vector(ad::matmul(h, b.at(key + ".w")), b.at(key + ".b"));
    if (l + 1 < depth) h = ad::tanh(h);
  }
  return h;
}

}  // namespace

ad::Node* DualEncoder::encode_image(ad::Graph&, const ad::Binding& b, ad::Node* x) const {
  return tower_forward(b, x, "img", cfg_.depth, cfg_.image_dim, "encode_image");
}

ad::Node* DualEncoder::encode_text(ad::Graph&, const ad::Binding& b, ad::Node* t) const {
  return tower_forward(b, t, "txt", cfg_.depth, cfg_.text_dim, "encode_text");
}

ad::Node* DualEncoder::tau(ad::Graph&, const ad::Binding& b) const {
  return ad::exp(b.at("log_tau"));
}

ad::Node* DualEncoder::inv_tau(ad::Graph&, const ad::Binding& b) const {
  return ad::exp(ad::scale(b.at("log_tau"), -1.0));
}

Array DualEncoder::forward_values(const Array& x, const std::string& prefix,
                                  int in_dim) const {
  if (x.cols() != in_dim)
    throw std::invalid_argument("encode_values: input dim " + std::to_string(x.cols()) +
                                ", expected " + std::to_string(in_dim));
  Array h = x;
  for (int l = 0; l < cfg_.depth; ++l) {
    const std::string key = prefix + "." + std::to_string(l);
    const Array& w = params_.get(key + ".w");
    const Array& bias = params_.get(key + ".b");
    Array out(h.rows(), w.cols());
    for (int i = 0; i < h.rows(); ++i)
      for (int k = 0; k < w.rows(); ++k) {
        const double hik = h.at(i, k);
        if (hik == 0.0) continue;
        for (int j = 0; j < w.cols(); ++j) out.at(i, j) += hik * w.at(k, j);
      }
    for (int i = 0; i < out.rows(); ++i)
      for (int j = 0; j < out.cols(); ++j) out.at(i, j) += bias.at(0, j);
    if (l + 1 < cfg_.depth)
      for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
    h = std::move(out);
  }
  return h;
}

Array DualEncoder::encode_image_values(const Array& x) const {
  return forward_values(x, "img", cfg_.image_dim);
}

Array DualEncoder::encode_text_values(const Array& t) const {
  return forward_values(t, "txt", cfg_.text_dim);
}

double DualEncoder::tau_value() const {
  return std::exp(params_.get("log_tau").scalar_value());
}

std::vector<std::string> DualEncoder::image_param_names() const {
  std::vector<std::string> out;
  for (const auto& [name, v] : params_)
    if (name.rfind("img.", 0) == 0) out.push_back(name);
  return out;
}

std::vector<std::string> DualEncoder::final_layer_param_names() const {
  const std::string key = "img." + std::to_string(cfg_.depth - 1);
  return {key + ".b", key + ".w"};
}

namespace {

double row_norm(const Array& a, int r) {
  double s = 0.0;
  for (int j = 0; j < a.cols(); ++j) s += a.at(r, j) * a.at(r, j);
  return std::sqrt(s);
}

}  // namespace

ZeroShotResult zero_shot_from_embedding(const std::vector<double>& image_embedding,
                                        const Array& prompt_embeddings,
                                        const std::vector<int>& class_ids, double tau) {
  const int m = prompt_embeddings.rows();
  if (m == 0) throw std::invalid_argument("zero_shot: empty prompt set");
  double zn = 0.0;
  for (double v : image_embedding) zn += v * v;
  zn = std::sqrt(zn);
  if (zn < 1e-12) throw std::runtime_error("zero_shot: degenerate embedding");

  ZeroShotResult r;
  r.cosines.resize(m);
  int best = 0;
  for (int j = 0; j < m; ++j) {
    const double pn = row_norm(prompt_embeddings, j);
    if (pn < 1e-12) throw std::runtime_error("zero_shot: degenerate embedding");
    double d = 0.0;
    for (int c = 0; c < prompt_embeddings.cols(); ++c)
      d += image_embedding[c] * prompt_embeddings.at(j, c);
    r.cosines[j] = d / (zn * pn);
    if (r.cosines[j] > r.cosines[best]) best = j;  // ties keep the lowest class id
  }
  r.class_id = class_ids[best];

  if (m == 2) {
    // Positive class is the higher class id ({0,1} in the binary protocol).
    const int pos = class_ids[0] > class_ids[1] ? 0 : 1;
    const double margin = (r.cosines[pos] - r.cosines[1 - pos]) / tau;
    r.score = 1.0 / (1.0 + std::exp(-margin));
  }
  return r;
}

ZeroShotResult zero_shot_predict(const DualEncoder& model,
                                 const std::vector<double>& image_features,
                                 const PromptSet& prompts) {
  Array x(1, static_cast<int>(image_features.size()));
  x.set_row(0, image_features);
  Array z = model.encode_image_values(x);
  Array pe = model.encode_text_values(prompts.feature_matrix());
  return zero_shot_from_embedding(z.row_vector(0), pe, prompts.class_ids(),
                                  model.tau_value());
}

}  // namespace declip

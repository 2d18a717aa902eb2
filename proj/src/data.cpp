#include "declip/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace declip {

using nlohmann::json;

std::vector<int> largest_remainder_counts(const std::vector<double>& proportions, int n) {
  std::vector<int> counts(proportions.size());
  std::vector<std::pair<double, size_t>> rem;
  int assigned = 0;
  for (size_t i = 0; i < proportions.size(); ++i) {
    const double share = proportions[i] * n;
    counts[i] = static_cast<int>(std::floor(share));
    assigned += counts[i];
    rem.push_back({share - counts[i], i});
  }
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < n - assigned; ++k) counts[rem[k % rem.size()].second] += 1;
  return counts;
}

namespace {

std::vector<double> random_unit(Rng& rng, int dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (int i = 0; i < dim; ++i) {
      v[i] = rng.gaussian();
      norm += v[i] * v[i];
    }
    norm = std::sqrt(norm);
  } while (norm < 1e-9);
  for (int i = 0; i < dim; ++i) v[i] /= norm;
  return v;
}

}  // namespace

Generated gen_synthetic(const GenSpec& spec) {
  if (spec.n < 1) throw std::invalid_argument("gen_synthetic: n must be >= 1");
  if (spec.image_dim < 1 || spec.text_dim < 1)
    throw std::invalid_argument("gen_synthetic: dims must be >= 1");
  if (spec.groups.empty()) throw std::invalid_argument("gen_synthetic: no groups");
  double total = 0.0;
  std::vector<double> props;
  for (const auto& g : spec.groups) {
    if (g.proportion < 0.0) throw std::invalid_argument("gen_synthetic: negative proportion");
    total += g.proportion;
    props.push_back(g.proportion);
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw std::invalid_argument("gen_synthetic: proportions sum to " + std::to_string(total) +
                                ", expected 1");
  if (spec.class_balance < 0.0 || spec.class_balance > 1.0)
    throw std::invalid_argument("gen_synthetic: class_balance outside [0,1]");

  Rng rng(spec.seed, /*stream=*/11);
  const auto class_dir_img = random_unit(rng, spec.image_dim);
  const auto class_dir_txt = random_unit(rng, spec.text_dim);
  std::vector<std::vector<double>> group_dir_img, group_dir_txt;
  for (size_t g = 0; g < spec.groups.size(); ++g) {
    group_dir_img.push_back(random_unit(rng, spec.image_dim));
    group_dir_txt.push_back(random_unit(rng, spec.text_dim));
  }

  const auto counts = largest_remainder_counts(props, spec.n);

  Generated out;
  out.data.image_dim = spec.image_dim;
  out.data.text_dim = spec.text_dim;
  int serial = 0;
  for (size_t g = 0; g < spec.groups.size(); ++g) {
    const auto& gs = spec.groups[g];
    const std::string gname = gs.name.empty() ? "g" + std::to_string(g) : gs.name;
    const auto label_counts =
        largest_remainder_counts({spec.class_balance, 1.0 - spec.class_balance}, counts[g]);
    for (int r = 0; r < counts[g]; ++r) {
      const int y = r < label_counts[0] ? 1 : 0;
      Record rec;
      char buf[16];
      std::snprintf(buf, sizeof(buf), "r%06d", serial++);
      rec.id = buf;
      rec.label = y;
      rec.attributes["group"] = gname;
      rec.image_features.resize(spec.image_dim);
      for (int j = 0; j < spec.image_dim; ++j)
        rec.image_features[j] = gs.shift * group_dir_img[g][j] +
                                y * gs.signal * class_dir_img[j] +
                                gs.noise * rng.gaussian();
      rec.text_features.resize(spec.text_dim);
      for (int j = 0; j < spec.text_dim; ++j)
        rec.text_features[j] = y * spec.text_class_scale * class_dir_txt[j] +
                               spec.text_group_scale * group_dir_txt[g][j] +
                               spec.text_noise_scale * gs.noise * rng.gaussian();
      rec.has_text_features = true;
      out.data.records.push_back(std::move(rec));
    }
  }

  // Prompts are the exact class-conditional text means (noise integrates out).
  std::vector<double> mix(spec.text_dim, 0.0);
  for (size_t g = 0; g < spec.groups.size(); ++g)
    for (int j = 0; j < spec.text_dim; ++j)
      mix[j] += props[g] * spec.text_group_scale * group_dir_txt[g][j];
  Prompt p0{0, "synthetic class 0 prompt", mix};
  Prompt p1{1, "synthetic class 1 prompt", mix};
  for (int j = 0; j < spec.text_dim; ++j)
    p1.text_features[j] += spec.text_class_scale * class_dir_txt[j];
  out.prompts = {p0, p1};
  return out;
}

std::vector<double> hash_featurize(const std::string& note, int dim) {
  if (dim < 1) throw std::invalid_argument("hash_featurize: dim must be >= 1");
  std::vector<double> v(dim, 0.0);
  std::string token;
  std::istringstream in(note);
  bool any = false;
  while (in >> token) {
    for (char& c : token) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    const uint64_t h = fnv1a64(token);
    const int bucket = static_cast<int>(h % static_cast<uint64_t>(dim));
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[bucket] += sign;
    any = true;
  }
  if (!any) return v;
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm > 0.0)
    for (double& x : v) x /= norm;
  return v;
}

std::pair<std::vector<double>, std::vector<double>> augment(const std::vector<double>& x,
                                                            double strength, Rng& stream) {
  if (strength < 0.0) throw std::invalid_argument("augment: strength must be >= 0");
  const double mask_prob = 0.1 * std::min(strength, 1.0);
  auto one_view = [&] {
    std::vector<double> v(x.size());
    for (size_t i = 0; i < x.size(); ++i) v[i] = x[i] + strength * stream.gaussian();
    for (size_t i = 0; i < x.size(); ++i)
      if (stream.uniform01() < mask_prob) v[i] = 0.0;
    return v;
  };
  auto a = one_view();
  auto b = one_view();
  return {std::move(a), std::move(b)};
}

PairedBatch make_paired_batch(const TrainSet& set, const std::vector<size_t>& indices,
                              double aug_strength, Rng& stream) {
  const int b = static_cast<int>(indices.size());
  PairedBatch batch;
  batch.image_features = Array(b, set.image_dim);
  batch.text_features = Array(b, set.text_dim);
  batch.views = Array(2 * b, set.image_dim);
  for (int i = 0; i < b; ++i) {
    const TrainExample& ex = set.examples[indices[i]];
    batch.image_features.set_row(i, ex.image_features);
    batch.text_features.set_row(i, ex.text_features);
    batch.labels.push_back(ex.label);
    auto [v1, v2] = augment(ex.image_features, aug_strength, stream);
    batch.views.set_row(2 * i, v1);
    batch.views.set_row(2 * i + 1, v2);
    batch.pairing.push_back(2 * i + 1);
    batch.pairing.push_back(2 * i);
  }
  return batch;
}

namespace {

std::vector<double> to_doubles(const json& arr, const char* what, int line_no) {
  if (!arr.is_array())
    throw std::runtime_error("load_jsonl: line " + std::to_string(line_no) + ": " + what +
                             " is not an array");
  std::vector<double> out;
  for (const auto& v : arr) {
    if (!v.is_number())
      throw std::runtime_error("load_jsonl: line " + std::to_string(line_no) + ": " + what +
                               " has a non-numeric entry");
    out.push_back(v.get<double>());
  }
  return out;
}

}  // namespace

Dataset load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_jsonl: cannot open " + path);
  Dataset data;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("load_jsonl: line " + std::to_string(line_no) +
                               ": malformed JSON: " + e.what());
    }
    Record rec;
    if (!j.contains("id") || !j.contains("image_features") || !j.contains("label"))
      throw std::runtime_error("load_jsonl: line " + std::to_string(line_no) +
                               ": missing id/image_features/label");
    rec.id = j["id"].get<std::string>();
    rec.image_features = to_doubles(j["image_features"], "image_features", line_no);
    const int label = j["label"].get<int>();
    if (label != 0 && label != 1)
      throw std::runtime_error("load_jsonl: line " + std::to_string(line_no) +
                               ": label must be 0 or 1");
    rec.label = label;
    if (j.contains("text_features")) {
      rec.text_features = to_doubles(j["text_features"], "text_features", line_no);
      rec.has_text_features = true;
    } else if (j.contains("text")) {
      rec.text = j["text"].get<std::string>();
    } else {
      throw std::runtime_error("load_jsonl: line " + std::to_string(line_no) +
                               ": need text or text_features");
    }
    if (j.contains("attributes"))
      for (const auto& [k, v] : j["attributes"].items())
        rec.attributes[k] = v.get<std::string>();

    if (data.records.empty()) {
      data.image_dim = static_cast<int>(rec.image_features.size());
      data.text_dim = rec.has_text_features ? static_cast<int>(rec.text_features.size()) : 0;
    } else {
      if (static_cast<int>(rec.image_features.size()) != data.image_dim)
        throw std::runtime_error("load_jsonl: line " + std::to_string(line_no) +
                                 ": image dim " + std::to_string(rec.image_features.size()) +
                                 " != " + std::to_string(data.image_dim));
      const int td = rec.has_text_features ? static_cast<int>(rec.text_features.size()) : 0;
      if (td != data.text_dim)
        throw std::runtime_error("load_jsonl: line " + std::to_string(line_no) +
                                 ": text dim " + std::to_string(td) + " != " +
                                 std::to_string(data.text_dim));
    }
    data.records.push_back(std::move(rec));
  }
  return data;
}

void save_jsonl(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_jsonl: cannot open " + path);
  for (const auto& rec : data.records) {
    json j;
    j["id"] = rec.id;
    j["image_features"] = rec.image_features;
    if (rec.has_text_features)
      j["text_features"] = rec.text_features;
    else
      j["text"] = rec.text;
    j["label"] = rec.label;
    if (!rec.attributes.empty()) j["attributes"] = rec.attributes;
    out << j.dump() << "\n";
  }
}

std::vector<Prompt> load_prompts_jsonl(const std::string& path, int text_dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_prompts: cannot open " + path);
  std::vector<Prompt> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw std::runtime_error("load_prompts: line " + std::to_string(line_no) +
                               ": malformed JSON: " + e.what());
    }
    Prompt p;
    p.class_id = j.at("class_id").get<int>();
    if (j.contains("text_features")) {
      p.text_features = to_doubles(j["text_features"], "text_features", line_no);
    } else if (j.contains("text")) {
      p.text = j["text"].get<std::string>();
      p.text_features = hash_featurize(p.text, text_dim);
    } else {
      throw std::runtime_error("load_prompts: line " + std::to_string(line_no) +
                               ": need text or text_features");
    }
    out.push_back(std::move(p));
  }
  return out;
}

void save_prompts_jsonl(const std::string& path, const std::vector<Prompt>& prompts) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_prompts: cannot open " + path);
  for (const auto& p : prompts) {
    json j;
    j["class_id"] = p.class_id;
    if (!p.text.empty()) j["text"] = p.text;
    j["text_features"] = p.text_features;
    out << j.dump() << "\n";
  }
}

SplitResult split(const Dataset& data, double train_frac, double val_frac, double test_frac,
                  uint64_t seed) {
  if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
    throw std::invalid_argument("split: fractions must sum to 1");
  const int n = static_cast<int>(data.records.size());
  const auto sizes = largest_remainder_counts({train_frac, val_frac, test_frac}, n);

  // Shuffle each label stratum, then interleave them proportionally so every
  // contiguous cut has a near-overall positive rate.
  Rng rng(seed, /*stream=*/13);
  std::vector<size_t> pos, neg;
  for (size_t i = 0; i < data.records.size(); ++i)
    (data.records[i].label == 1 ? pos : neg).push_back(i);
  rng.shuffle(pos);
  rng.shuffle(neg);

  std::vector<size_t> order;
  order.reserve(n);
  size_t ip = 0, in = 0;
  while (ip < pos.size() || in < neg.size()) {
    if (ip == pos.size()) {
      order.push_back(neg[in++]);
    } else if (in == neg.size()) {
      order.push_back(pos[ip++]);
    } else {
      // Emit from the stratum with the smaller relative progress.
      const double fp = (ip + 1.0) / pos.size();
      const double fn = (in + 1.0) / neg.size();
      if (fp <= fn)
        order.push_back(pos[ip++]);
      else
        order.push_back(neg[in++]);
    }
  }

  SplitResult out;
  for (Dataset* d : {&out.train, &out.val, &out.test}) {
    d->image_dim = data.image_dim;
    d->text_dim = data.text_dim;
  }
  for (int i = 0; i < n; ++i) {
    const Record& rec = data.records[order[i]];
    if (i < sizes[0])
      out.train.records.push_back(rec);
    else if (i < sizes[0] + sizes[1])
      out.val.records.push_back(rec);
    else
      out.test.records.push_back(rec);
  }
  return out;
}

TrainSet strip_attributes(const Dataset& data, int text_dim) {
  TrainSet set;
  set.image_dim = data.image_dim;
  set.text_dim = data.text_dim > 0 ? data.text_dim : text_dim;
  if (set.text_dim < 1)
    throw std::invalid_argument("strip_attributes: text_dim required for raw-note datasets");
  for (const auto& rec : data.records) {
    TrainExample ex;
    ex.image_features = rec.image_features;
    ex.text_features =
        rec.has_text_features ? rec.text_features : hash_featurize(rec.text, set.text_dim);
    ex.label = rec.label;
    set.examples.push_back(std::move(ex));
  }
  return set;
}

}  // namespace declip

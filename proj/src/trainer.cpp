#include "declip/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "declip/losses.hpp"
#include "declip/rng.hpp"

namespace declip {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

void TrainConfig::validate() const {
  if (mode != "clip" && mode != "debiased")
    throw std::invalid_argument("train: mode must be clip or debiased, got " + mode);
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (mode == "debiased" && batch_size < 2)
    throw std::invalid_argument("train: debiased mode needs batch_size >= 2");
  if (k < 1 || k > (topk_per_view ? 2 * batch_size : batch_size))
    throw std::invalid_argument("train: k=" + std::to_string(k) + " out of range for B=" +
                                std::to_string(batch_size));
  if (beta < 0.0) throw std::invalid_argument("train: beta must be >= 0");
  if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
  if (lr < 0.0) throw std::invalid_argument("train: lr must be >= 0");
  if (aug_strength < 0.0) throw std::invalid_argument("train: aug_strength must be >= 0");
  if (weight_ema < 0.0 || weight_ema >= 1.0)
    throw std::invalid_argument("train: weight_ema must be in [0, 1)");
  if (optimizer != "sgd" && optimizer != "adam")
    throw std::invalid_argument("train: optimizer must be sgd or adam, got " + optimizer);
  grad_scope_from_string(grad_scope);
  weight_variant_from_string(weight_variant);
}

std::string TrainConfig::canonical_text() const {
  std::ostringstream s;
  s.precision(17);
  s << "adam_beta1=" << adam_beta1 << "\n"
    << "adam_beta2=" << adam_beta2 << "\n"
    << "adam_eps=" << adam_eps << "\n"
    << "aug_strength=" << aug_strength << "\n"
    << "batch_size=" << batch_size << "\n"
    << "beta=" << beta << "\n"
    << "epochs=" << epochs << "\n"
    << "grad_scope=" << grad_scope << "\n"
    << "k=" << k << "\n"
    << "lr=" << lr << "\n"
    << "mode=" << mode << "\n"
    << "model.depth=" << model.depth << "\n"
    << "model.embed_dim=" << model.embed_dim << "\n"
    << "model.hidden=" << model.hidden << "\n"
    << "model.image_dim=" << model.image_dim << "\n"
    << "model.init_seed=" << model.init_seed << "\n"
    << "model.tau_init=" << model.tau_init << "\n"
    << "model.text_dim=" << model.text_dim << "\n"
    << "optimizer=" << optimizer << "\n"
    << "seed=" << seed << "\n"
    << "topk_per_view=" << (topk_per_view ? 1 : 0) << "\n"
    << "weight_ema=" << weight_ema << "\n"
    << "weight_variant=" << weight_variant << "\n";
  return s.str();
}

std::string TrainConfig::config_hash() const { return hex64(fnv1a64(canonical_text())); }

namespace {

class Optimizer {
 public:
  Optimizer(const TrainConfig& cfg) : cfg_(cfg) {}

  void step(ad::ParamStore& params, const std::map<std::string, std::vector<double>>& grads) {
    ++t_;
    for (const auto& name : params.names()) {
      Array& p = params.get(name);
      const auto& g = grads.at(name);
      if (cfg_.optimizer == "sgd") {
        for (size_t i = 0; i < p.size(); ++i) p[i] -= cfg_.lr * g[i];
        continue;
      }
      auto& m = m_[name];
      auto& v = v_[name];
      if (m.empty()) {
        m.assign(p.size(), 0.0);
        v.assign(p.size(), 0.0);
      }
      const double bc1 = 1.0 - std::pow(cfg_.adam_beta1, t_);
      const double bc2 = 1.0 - std::pow(cfg_.adam_beta2, t_);
      for (size_t i = 0; i < p.size(); ++i) {
        m[i] = cfg_.adam_beta1 * m[i] + (1.0 - cfg_.adam_beta1) * g[i];
        v[i] = cfg_.adam_beta2 * v[i] + (1.0 - cfg_.adam_beta2) * g[i] * g[i];
        p[i] -= cfg_.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.adam_eps);
      }
    }
  }

 private:
  const TrainConfig& cfg_;
  int t_ = 0;
  std::map<std::string, std::vector<double>> m_, v_;
};

std::map<std::string, std::vector<double>> collect_grads(const ad::Binding& bind,
                                                         const ad::ParamStore& params) {
  std::map<std::string, std::vector<double>> g;
  for (const auto& name : params.names()) g[name] = bind.at(name)->grad.data();
  return g;
}

void write_run_meta(const TrainConfig& cfg, const std::string& path) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["config_hash"] = cfg.config_hash();
  std::istringstream lines(cfg.canonical_text());
  nlohmann::json c;
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    c[line.substr(0, eq)] = line.substr(eq + 1);
  }
  j["config"] = c;
  j["notes"] = {
      {"hyperparameters", "defaults are non-canonical; no published schedule exists"},
      {"grad_scope", std::string("per-view gradients restricted to ") + cfg.grad_scope},
      {"score_definition", kScoreDefinition},
  };
  std::ofstream out(path);
  out << j.dump(2) << "\n";
}

struct WeightTrace {
  std::ofstream out;
  explicit WeightTrace(const std::string& path) {
    if (path.empty()) return;
    out.open(path);
    if (!out) throw std::runtime_error("train: cannot open weight trace " + path);
    out << "step,view,w,w_clamped,w_normalized\n";
  }
  void add(long step, const WeightVector& w) {
    if (!out.is_open()) return;
    for (size_t m = 0; m < w.raw.size(); ++m) {
      char buf[160];
      std::snprintf(buf, sizeof(buf), "%ld,%zu,%.17g,%.17g,%.17g\n", step, m, w.raw[m],
                    w.clamped[m], w.normalized[m]);
      out << buf;
    }
  }
};

double weight_entropy(const std::vector<double>& w) {
  double h = 0.0;
  for (double x : w)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

}  // namespace

std::vector<double> zero_shot_scores(const DualEncoder& model, const TrainSet& set,
                                     const PromptSet& prompts) {
  if (prompts.size() != 2)
    throw std::invalid_argument("zero_shot_scores: binary scoring needs exactly 2 prompts");
  Array pe = model.encode_text_values(prompts.feature_matrix());
  Array x(static_cast<int>(set.examples.size()), set.image_dim);
  for (size_t i = 0; i < set.examples.size(); ++i)
    x.set_row(static_cast<int>(i), set.examples[i].image_features);
  Array z = model.encode_image_values(x);
  std::vector<double> scores(set.examples.size());
  const auto ids = prompts.class_ids();
  const double tau = model.tau_value();
  for (size_t i = 0; i < set.examples.size(); ++i)
    scores[i] = zero_shot_from_embedding(z.row_vector(static_cast<int>(i)), pe, ids, tau).score;
  return scores;
}

TrainResult train(const TrainConfig& cfg, const TrainSet& train_set, const TrainSet& val_set,
                  const std::optional<PromptSet>& prompts) {
  cfg.validate();
  if (train_set.examples.empty()) throw std::invalid_argument("train: empty training set");
  if (train_set.image_dim != cfg.model.image_dim || train_set.text_dim != cfg.model.text_dim)
    throw std::invalid_argument("train: dataset dims (" + std::to_string(train_set.image_dim) +
                                "," + std::to_string(train_set.text_dim) +
                                ") do not match model config");

  const bool debiased = cfg.mode == "debiased";
  TrainResult res{DualEncoder::init(cfg.model), {}, "", "", kNan};
  DualEncoder& model = res.model;
  Optimizer opt(cfg);

  const bool io = !cfg.out_dir.empty();
  if (io) {
    std::filesystem::create_directories(cfg.out_dir);
    write_run_meta(cfg, cfg.out_dir + "/run_meta.json");
  }
  WeightTrace trace(cfg.weight_trace);
  CheckpointMeta meta{cfg.seed, cfg.config_hash()};

  // Separate streams so augmentation draws (debiased only) never perturb the
  // shared batch order.
  Rng shuffle_rng(cfg.seed, /*stream=*/21);
  Rng augment_rng(cfg.seed, /*stream=*/22);

  ObjectiveConfig ocfg;
  ocfg.mode = debiased ? ObjectiveMode::Debiased : ObjectiveMode::ClipOnly;
  ocfg.k = cfg.k;
  ocfg.beta = cfg.beta;
  ocfg.alignment = AlignmentConfig{cfg.k, grad_scope_from_string(cfg.grad_scope),
                                   weight_variant_from_string(cfg.weight_variant),
                                   cfg.topk_per_view};

  std::vector<double> ema_weights;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto perm = shuffle_rng.permutation(train_set.examples.size());
    const size_t n = perm.size();
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      const size_t end = std::min(start + cfg.batch_size, n);
      const int b = static_cast<int>(end - start);
      // Eq. 4-7 need the full 2B view set; clip-only keeps partial batches.
      if (debiased && b < cfg.batch_size) break;

      std::vector<size_t> idx(perm.begin() + start, perm.begin() + end);
      PairedBatch batch = make_paired_batch(train_set, idx,
                                            debiased ? cfg.aug_strength : 0.0, augment_rng);

      ad::Graph g;
      auto bind = model.bind(g);
      Objective obj;
      if (debiased && cfg.weight_ema > 0.0) {
        WeightVector w = alignment_weights(batch, model, ocfg.alignment);
        if (ema_weights.size() != w.normalized.size()) ema_weights = w.normalized;
        for (size_t i = 0; i < ema_weights.size(); ++i)
          ema_weights[i] =
              cfg.weight_ema * ema_weights[i] + (1.0 - cfg.weight_ema) * w.normalized[i];
        w.normalized = ema_weights;
        ObjectiveConfig smoothed = ocfg;
        obj = debiased_objective_with_weights(g, bind, batch, model, smoothed, w);
      } else {
        obj = debiased_objective(g, bind, batch, model, ocfg);
      }

      const double total = obj.total->scalar();
      if (!std::isfinite(total)) {
        std::string ckpt = res.last_checkpoint.empty() ? "none" : res.last_checkpoint;
        throw std::runtime_error("train: non-finite loss at step " + std::to_string(step) +
                                 "; last good checkpoint: " + ckpt);
      }

      g.backward(obj.total);
      opt.step(model.params(), collect_grads(bind, model.params()));

      LogRow row;
      row.step = step;
      row.epoch = epoch;
      row.kind = "step";
      row.total_loss = total;
      row.clip_loss = obj.clip_total->scalar();
      row.weighted_ctr = obj.weighted_ctr ? obj.weighted_ctr->scalar() : 0.0;
      row.val_auc = kNan;
      if (debiased) {
        const auto& w = obj.weights.normalized;
        row.w_max = w.empty() ? 0.0 : *std::max_element(w.begin(), w.end());
        row.w_entropy = weight_entropy(w);
        double zeros = 0.0;
        for (double x : w) zeros += (x == 0.0);
        row.w_zero_frac = w.empty() ? 0.0 : zeros / w.size();
        trace.add(step, obj.weights);
      }
      res.log.push_back(row);
      ++step;
    }

    LogRow erow;
    erow.step = step == 0 ? 0 : step - 1;
    erow.epoch = epoch;
    erow.kind = "epoch";
    erow.total_loss = res.log.empty() ? kNan : res.log.back().total_loss;
    erow.val_auc = kNan;
    if (!val_set.examples.empty() && prompts) {
      const auto scores = zero_shot_scores(model, val_set, *prompts);
      std::vector<int> labels;
      for (const auto& ex : val_set.examples) labels.push_back(ex.label);
      const bool has_pos = std::count(labels.begin(), labels.end(), 1) > 0;
      const bool has_neg = std::count(labels.begin(), labels.end(), 0) > 0;
      if (has_pos && has_neg) erow.val_auc = auc(scores, labels);
    }
    res.log.push_back(erow);

    if (io) {
      res.last_checkpoint = cfg.out_dir + "/last.ckpt";
      save_checkpoint(res.last_checkpoint, model, meta);
      if (!std::isnan(erow.val_auc) &&
          (std::isnan(res.best_val_auc) || erow.val_auc >= res.best_val_auc)) {
        res.best_val_auc = erow.val_auc;
        res.best_checkpoint = cfg.out_dir + "/best.ckpt";
        save_checkpoint(res.best_checkpoint, model, meta);
      }
    } else if (!std::isnan(erow.val_auc) &&
               (std::isnan(res.best_val_auc) || erow.val_auc >= res.best_val_auc)) {
      res.best_val_auc = erow.val_auc;
    }
  }

  if (io) {
    res.last_checkpoint = cfg.out_dir + "/last.ckpt";
    save_checkpoint(res.last_checkpoint, model, meta);
    write_runlog_csv(cfg.out_dir + "/runlog.csv", res.log);
  }
  return res;
}

void write_runlog_csv(const std::string& path, const std::vector<LogRow>& log) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_runlog_csv: cannot open " + path);
  out << "step,epoch,kind,total_loss,clip_loss,weighted_ctr,w_max,w_entropy,w_zero_frac,"
         "val_auc\n";
  for (const auto& r : log) {
    char buf[320];
    std::snprintf(buf, sizeof(buf), "%ld,%d,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,", r.step,
                  r.epoch, r.kind.c_str(), r.total_loss, r.clip_loss, r.weighted_ctr, r.w_max,
                  r.w_entropy, r.w_zero_frac);
    out << buf;
    if (std::isnan(r.val_auc))
      out << "\n";
    else {
      std::snprintf(buf, sizeof(buf), "%.17g\n", r.val_auc);
      out << buf;
    }
  }
}

EvalResult evaluate(const DualEncoder& model, const Dataset& data, const PromptSet& prompts,
                    const std::vector<std::string>& attributes, EsAucMode es_mode,
                    ThresholdRule rule, double threshold) {
  if (data.records.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (prompts.size() != 2)
    throw std::invalid_argument("evaluate: binary protocol needs exactly 2 prompts");

  Array pe = model.encode_text_values(prompts.feature_matrix());
  const auto ids = prompts.class_ids();
  const double tau = model.tau_value();

  Array x(static_cast<int>(data.records.size()), data.image_dim);
  for (size_t i = 0; i < data.records.size(); ++i)
    x.set_row(static_cast<int>(i), data.records[i].image_features);
  Array z = model.encode_image_values(x);

  EvalResult res;
  for (size_t i = 0; i < data.records.size(); ++i) {
    const auto zs = zero_shot_from_embedding(z.row_vector(static_cast<int>(i)), pe, ids, tau);
    PredictionRow row;
    row.id = data.records[i].id;
    row.score = zs.score;
    row.pred = zs.class_id;
    row.label = data.records[i].label;
    row.attributes = data.records[i].attributes;
    res.predictions.push_back(std::move(row));
  }

  for (const auto& attr : attributes) {
    std::vector<ScoredRow> rows;
    for (const auto& p : res.predictions) {
      auto it = p.attributes.find(attr);
      if (it == p.attributes.end()) continue;
      ScoredRow r;
      r.score = p.score;
      r.label = p.label;
      r.group = it->second;
      r.pred = p.pred;
      rows.push_back(std::move(r));
    }
    if (rows.empty())
      throw std::invalid_argument("evaluate: attribute '" + attr + "' absent from all records");
    if (rule == ThresholdRule::Threshold) {
      const auto hard = hard_labels(rows, rule, threshold);
      for (size_t i = 0; i < rows.size(); ++i) rows[i].pred = hard[i];
    }
    FairnessReport rep = fairness_report(rows, attr, es_mode, kScoreDefinition);
    rep.threshold_rule =
        rule == ThresholdRule::Argmax
            ? "argmax"
            : "threshold(" + std::to_string(threshold) + ")";
    res.reports[attr] = std::move(rep);
  }
  return res;
}

void write_predictions_csv(const std::string& path,
                           const std::vector<PredictionRow>& predictions) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_predictions_csv: cannot open " + path);
  std::vector<std::string> attrs;
  {
    std::map<std::string, int> seen;
    for (const auto& p : predictions)
      for (const auto& [k, v] : p.attributes) seen[k] = 1;
    for (const auto& [k, v] : seen) attrs.push_back(k);
  }
  out << "id,score,pred,label";
  for (const auto& a : attrs) out << "," << a;
  out << "\n";
  for (const auto& p : predictions) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", p.score);
    out << p.id << "," << buf << "," << p.pred << "," << p.label;
    for (const auto& a : attrs) {
      auto it = p.attributes.find(a);
      out << "," << (it == p.attributes.end() ? "" : it->second);
    }
    out << "\n";
  }
}

std::vector<PredictionRow> read_predictions_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_predictions_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("read_predictions_csv: empty file " + path);
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  if (cols.size() < 4 || cols[0] != "id" || cols[1] != "score" || cols[2] != "pred" ||
      cols[3] != "label")
    throw std::runtime_error("read_predictions_csv: expected header id,score,pred,label,...");

  std::vector<PredictionRow> out;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) f.push_back(c);
    while (f.size() < cols.size()) f.push_back("");
    if (f.size() != cols.size())
      throw std::runtime_error("read_predictions_csv: line " + std::to_string(line_no) +
                               ": expected " + std::to_string(cols.size()) + " fields");
    PredictionRow r;
    r.id = f[0];
    try {
      r.score = std::stod(f[1]);
      r.pred = std::stoi(f[2]);
      r.label = std::stoi(f[3]);
    } catch (const std::exception&) {
      throw std::runtime_error("read_predictions_csv: line " + std::to_string(line_no) +
                               ": bad numeric field");
    }
    for (size_t i = 4; i < cols.size(); ++i)
      if (!f[i].empty()) r.attributes[cols[i]] = f[i];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace declip

#include "declip/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>

#include <CLI11.hpp>
#include <json.hpp>

#include "declip/cluster.hpp"
#include "declip/compare.hpp"
#include "declip/data.hpp"
#include "declip/report_io.hpp"
#include "declip/trainer.hpp"

namespace declip::cli {

namespace {

using nlohmann::json;

std::vector<std::string> split_csv_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(s);
  while (std::getline(ss, cur, ','))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

std::vector<std::string> all_attributes(const Dataset& data) {
  std::set<std::string> seen;
  for (const auto& r : data.records)
    for (const auto& [k, v] : r.attributes) seen.insert(k);
  return {seen.begin(), seen.end()};
}

std::vector<GroupSpec> parse_groups_json(const std::string& text) {
  json j = json::parse(text);
  if (!j.is_array() || j.empty())
    throw std::runtime_error("gen-data: --groups must be a non-empty JSON array");
  std::vector<GroupSpec> out;
  for (const auto& e : j) {
    GroupSpec g;
    g.name = e.value("name", "");
    g.proportion = e.at("proportion").get<double>();
    g.shift = e.value("shift", 0.0);
    g.signal = e.value("signal", 1.0);
    g.noise = e.value("noise", 1.0);
    out.push_back(std::move(g));
  }
  return out;
}

int cmd_gen_data(const GenSpec& spec, const std::string& out_path,
                 std::string prompts_path) {
  Generated gen = gen_synthetic(spec);
  save_jsonl(out_path, gen.data);
  if (prompts_path.empty()) prompts_path = out_path + ".prompts.jsonl";
  save_prompts_jsonl(prompts_path, gen.prompts);
  std::cout << "wrote " << gen.data.records.size() << " records to " << out_path
            << " and prompts to " << prompts_path << "\n";
  return 0;
}

struct TrainArgs {
  std::string data_path, val_data_path, prompts_path;
  double val_frac = 0.0;
  int q = 0;
  TrainConfig cfg;
};

int cmd_train(TrainArgs& a) {
  Dataset data = load_jsonl(a.data_path);
  Dataset val;
  if (!a.val_data_path.empty()) {
    val = load_jsonl(a.val_data_path);
  } else if (a.val_frac > 0.0) {
    auto sp = split(data, 1.0 - a.val_frac, a.val_frac, 0.0, a.cfg.seed);
    data = std::move(sp.train);
    val = std::move(sp.val);
  }

  TrainSet train_set = strip_attributes(data, a.q);
  TrainSet val_set;
  if (!val.records.empty()) val_set = strip_attributes(val, a.q);

  a.cfg.model.image_dim = train_set.image_dim;
  a.cfg.model.text_dim = train_set.text_dim;
  if (a.cfg.model.init_seed == 0) a.cfg.model.init_seed = a.cfg.seed;

  std::optional<PromptSet> prompts;
  if (!a.prompts_path.empty())
    prompts = PromptSet::from_vectors(load_prompts_jsonl(a.prompts_path, train_set.text_dim));

  TrainResult res = train(a.cfg, train_set, val_set, prompts);
  std::cout << "trained " << a.cfg.epochs << " epochs (" << a.cfg.mode << "), final loss "
            << (res.log.empty() ? 0.0 : res.log.back().total_loss);
  if (!std::isnan(res.best_val_auc)) std::cout << ", best val AUC " << res.best_val_auc;
  std::cout << ", checkpoints in " << a.cfg.out_dir << "\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint, data_path, prompts_path, out_dir, attrs, es_mode = "ratio";
  std::string threshold_rule = "argmax";
  double threshold = 0.5;
};

int cmd_evaluate(const EvalArgs& a) {
  LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  Dataset data = load_jsonl(a.data_path);
  PromptSet prompts = PromptSet::from_vectors(
      load_prompts_jsonl(a.prompts_path, ck.model.config().text_dim));
  std::vector<std::string> attrs =
      a.attrs.empty() ? all_attributes(data) : split_csv_list(a.attrs);
  if (attrs.empty()) throw std::runtime_error("evaluate: no attributes to report on");
  ThresholdRule rule =
      a.threshold_rule == "argmax" ? ThresholdRule::Argmax : ThresholdRule::Threshold;
  if (a.threshold_rule != "argmax" && a.threshold_rule != "threshold")
    throw std::runtime_error("evaluate: threshold-rule must be argmax or threshold");

  EvalResult res = evaluate(ck.model, data, prompts, attrs,
                            es_auc_mode_from_string(a.es_mode), rule, a.threshold);
  std::filesystem::create_directories(a.out_dir);
  write_predictions_csv(a.out_dir + "/predictions.csv", res.predictions);
  save_report_set(a.out_dir + "/reports.json", res.reports);
  save_radar_csv(a.out_dir + "/radar.csv", res.reports);
  for (const auto& [attr, rep] : res.reports)
    std::cout << attr << ": AUC " << format_pct(rep.overall_auc) << " ES-AUC "
              << format_pct(rep.es_auc_value) << " EOD " << format_pct(rep.eod_value) << "\n";
  return 0;
}

struct ClusterArgs {
  std::string checkpoint, data_path, out_dir, attrs;
  int k = 0;
  uint64_t seed = 1;
  int max_iters = 100;
  double tol = 1e-9;
};

int cmd_cluster(const ClusterArgs& a) {
  LoadedCheckpoint ck = load_checkpoint(a.checkpoint);
  Dataset data = load_jsonl(a.data_path);
  if (data.records.empty()) throw std::runtime_error("cluster: empty dataset");

  Array x(static_cast<int>(data.records.size()), data.image_dim);
  for (size_t i = 0; i < data.records.size(); ++i)
    x.set_row(static_cast<int>(i), data.records[i].image_features);
  Array z = ck.model.encode_image_values(x);
  for (int i = 0; i < z.rows(); ++i) {
    double n = 0.0;
    for (int j = 0; j < z.cols(); ++j) n += z.at(i, j) * z.at(i, j);
    n = std::sqrt(n);
    if (n < 1e-12)
      throw std::runtime_error("cluster: degenerate embedding for record " +
                               data.records[i].id);
    for (int j = 0; j < z.cols(); ++j) z.at(i, j) /= n;
  }

  ClusterAssignment res = kmeans(z, a.k, a.seed, a.max_iters, a.tol);
  std::filesystem::create_directories(a.out_dir);
  {
    std::ofstream out(a.out_dir + "/assignments.csv");
    out << "id,cluster\n";
    for (size_t i = 0; i < data.records.size(); ++i)
      out << data.records[i].id << "," << res.assignment[i] << "\n";
  }

  json j;
  j["schema_version"] = 1;
  j["k"] = a.k;
  j["inertia"] = res.inertia;
  j["iterations"] = res.iterations;
  json per_attr = json::object();
  std::vector<std::string> attrs =
      a.attrs.empty() ? all_attributes(data) : split_csv_list(a.attrs);
  for (const auto& attr : attrs) {
    std::vector<int> assign;
    std::vector<std::string> cats;
    for (size_t i = 0; i < data.records.size(); ++i) {
      auto it = data.records[i].attributes.find(attr);
      if (it == data.records[i].attributes.end()) continue;
      assign.push_back(res.assignment[i]);
      cats.push_back(it->second);
    }
    if (assign.empty()) continue;
    ClusterReport rep = cluster_report(assign, cats);
    json e;
    e["categories"] = rep.categories;
    e["counts"] = rep.counts;
    e["nmi"] = rep.nmi;
    per_attr[attr] = e;
  }
  j["attributes"] = per_attr;
  std::ofstream out(a.out_dir + "/cluster_report.json");
  out << j.dump(2) << "\n";
  std::cout << "k=" << a.k << " inertia=" << res.inertia << " iterations=" << res.iterations
            << "\n";
  return 0;
}

struct MetricsArgs {
  std::string in_path, out_dir, attrs, es_mode = "ratio";
  std::string threshold_rule = "argmax";
  double threshold = 0.5;
};

int cmd_metrics(const MetricsArgs& a) {
  auto predictions = read_predictions_csv(a.in_path);
  if (predictions.empty()) throw std::runtime_error("metrics: no prediction rows in " + a.in_path);
  std::vector<std::string> attrs = split_csv_list(a.attrs);
  if (attrs.empty()) throw std::runtime_error("metrics: --attr list is empty");

  std::map<std::string, FairnessReport> reports;
  for (const auto& attr : attrs) {
    std::vector<ScoredRow> rows;
    for (const auto& p : predictions) {
      auto it = p.attributes.find(attr);
      if (it == p.attributes.end()) continue;
      rows.push_back(ScoredRow{p.score, p.pred, p.label, it->second});
    }
    if (rows.empty())
      throw std::runtime_error("metrics: attribute '" + attr + "' absent from all rows");
    if (a.threshold_rule == "threshold") {
      const auto hard = hard_labels(rows, ThresholdRule::Threshold, a.threshold);
      for (size_t i = 0; i < rows.size(); ++i) rows[i].pred = hard[i];
    } else if (a.threshold_rule != "argmax") {
      throw std::runtime_error("metrics: threshold-rule must be argmax or threshold");
    }
    FairnessReport rep = fairness_report(rows, attr, es_auc_mode_from_string(a.es_mode),
                                         "scores ingested from " + a.in_path);
    rep.threshold_rule = a.threshold_rule == "argmax"
                             ? "argmax"
                             : "threshold(" + std::to_string(a.threshold) + ")";
    reports[attr] = std::move(rep);
  }
  std::filesystem::create_directories(a.out_dir);
  save_report_set(a.out_dir + "/reports.json", reports);
  save_radar_csv(a.out_dir + "/radar.csv", reports);
  for (const auto& [attr, rep] : reports)
    std::cout << attr << ": AUC " << format_pct(rep.overall_auc) << " ES-AUC "
              << format_pct(rep.es_auc_value) << " EOD " << format_pct(rep.eod_value) << "\n";
  return 0;
}

int cmd_compare(const std::string& a_path, const std::string& b_path,
                const std::string& out_dir) {
  auto a = load_report_set(a_path);
  auto b = load_report_set(b_path);
  CompareSummary s = compare(a, b);
  std::filesystem::create_directories(out_dir);
  save_compare_json(out_dir + "/compare.json", s);
  save_compare_csv(out_dir + "/compare.csv", s);
  std::cout << compare_table_text(s);
  return 0;
}

}  // namespace

int run(std::vector<std::string> args) {
  CLI::App app{"dual-encoder contrastive training with attribute-agnostic debiasing"};
  app.require_subcommand(1);

  int exit_code = 0;
  std::function<int()> action;

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic multimodal dataset");
  GenSpec gspec;
  std::string groups_json =
      R"([{"name":"majority","proportion":0.9,"shift":1.0,"signal":1.0,"noise":1.0},)"
      R"({"name":"minority","proportion":0.1,"shift":-1.0,"signal":0.5,"noise":1.0}])";
  std::string gen_out, gen_prompts_out;
  gen->add_option("--n", gspec.n, "number of records")->required();
  gen->add_option("--p", gspec.image_dim, "image feature dim")->required();
  gen->add_option("--q", gspec.text_dim, "text feature dim")->required();
  gen->add_option("--groups", groups_json, "JSON array of group specs");
  gen->add_option("--balance", gspec.class_balance, "positive class fraction");
  gen->add_option("--seed", gspec.seed, "generator seed")->envname("DECLIP_SEED");
  gen->add_option("--text-class-scale", gspec.text_class_scale, "text class signal scale");
  gen->add_option("--text-group-scale", gspec.text_group_scale, "text group component scale");
  gen->add_option("--text-noise-scale", gspec.text_noise_scale, "text noise scale");
  gen->add_option("--out", gen_out, "output JSONL path")->required();
  gen->add_option("--prompts-out", gen_prompts_out, "prompts JSONL path");
  gen->callback([&] {
    gspec.groups = parse_groups_json(groups_json);
    action = [&] { return cmd_gen_data(gspec, gen_out, gen_prompts_out); };
  });

  // train
  auto* tr = app.add_subcommand("train", "train a dual encoder");
  tr->set_config("--config", "", "key=value config file; flags override");
  TrainArgs targs;
  tr->add_option("--data", targs.data_path, "training JSONL")->required();
  tr->add_option("--val-data", targs.val_data_path, "validation JSONL");
  tr->add_option("--val-frac", targs.val_frac, "internal validation fraction");
  tr->add_option("--prompts", targs.prompts_path, "prompts JSONL for validation AUC");
  tr->add_option("--q", targs.q, "text dim for raw-note datasets");
  tr->add_option("--out-dir", targs.cfg.out_dir, "run output directory")
      ->required()
      ->envname("DECLIP_OUT_DIR");
  tr->add_option("--mode", targs.cfg.mode, "clip | debiased");
  tr->add_option("--epochs", targs.cfg.epochs, "training epochs");
  tr->add_option("--batch-size", targs.cfg.batch_size, "batch size B");
  tr->add_option("--k", targs.cfg.k, "top-k for the CLIP relaxation");
  tr->add_option("--beta", targs.cfg.beta, "weighted contrastive term coefficient");
  tr->add_option("--lr", targs.cfg.lr, "learning rate");
  tr->add_option("--optimizer", targs.cfg.optimizer, "sgd | adam");
  tr->add_option("--aug-strength", targs.cfg.aug_strength, "augmentation strength");
  tr->add_option("--grad-scope", targs.cfg.grad_scope, "final-layer | image-all");
  tr->add_option("--weight-variant", targs.cfg.weight_variant, "grad-dot | table1-norm");
  tr->add_flag("--topk-per-view", targs.cfg.topk_per_view,
               "top-k CLIP loss at per-view granularity");
  tr->add_option("--weight-ema", targs.cfg.weight_ema, "weight smoothing factor rho");
  tr->add_option("--seed", targs.cfg.seed, "training seed")->envname("DECLIP_SEED");
  tr->add_option("--embed-dim", targs.cfg.model.embed_dim, "embedding dim d");
  tr->add_option("--hidden", targs.cfg.model.hidden, "hidden width (0 = 2d)");
  tr->add_option("--depth", targs.cfg.model.depth, "linear layers per tower");
  tr->add_option("--tau-init", targs.cfg.model.tau_init, "initial temperature");
  tr->add_option("--weight-trace", targs.cfg.weight_trace, "per-step weight CSV path");
  tr->callback([&] {
    targs.cfg.model.init_seed = 0;  // derive from --seed unless set via config
    action = [&] { return cmd_train(targs); };
  });

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "zero-shot evaluation with fairness reports");
  EvalArgs eargs;
  ev->add_option("--checkpoint", eargs.checkpoint, "model checkpoint")->required();
  ev->add_option("--data", eargs.data_path, "evaluation JSONL")->required();
  ev->add_option("--prompts", eargs.prompts_path, "prompts JSONL")->required();
  ev->add_option("--attrs", eargs.attrs, "comma-separated attributes (default: all)");
  ev->add_option("--out-dir", eargs.out_dir, "output directory")
      ->required()
      ->envname("DECLIP_OUT_DIR");
  ev->add_option("--es-auc-mode", eargs.es_mode, "ratio | mean-gap");
  ev->add_option("--threshold-rule", eargs.threshold_rule, "argmax | threshold");
  ev->add_option("--threshold", eargs.threshold, "threshold for rule=threshold");
  ev->callback([&] { action = [&] { return cmd_evaluate(eargs); }; });

  // cluster
  auto* cl = app.add_subcommand("cluster", "proxy subgroups via k-means on image embeddings");
  ClusterArgs cargs;
  cl->add_option("--checkpoint", cargs.checkpoint, "model checkpoint")->required();
  cl->add_option("--data", cargs.data_path, "JSONL dataset")->required();
  cl->add_option("--k", cargs.k, "number of clusters")->required();
  cl->add_option("--seed", cargs.seed, "seeding RNG")->envname("DECLIP_SEED");
  cl->add_option("--max-iters", cargs.max_iters, "Lloyd iteration cap");
  cl->add_option("--tol", cargs.tol, "centroid shift tolerance");
  cl->add_option("--attrs", cargs.attrs, "attributes for the NMI report (default: all)");
  cl->add_option("--out-dir", cargs.out_dir, "output directory")
      ->required()
      ->envname("DECLIP_OUT_DIR");
  cl->callback([&] { action = [&] { return cmd_cluster(cargs); }; });

  // metrics
  auto* me = app.add_subcommand("metrics", "fairness reports from a predictions CSV");
  MetricsArgs margs;
  me->add_option("--in", margs.in_path, "predictions CSV")->required();
  me->add_option("--attr", margs.attrs, "comma-separated attribute columns")->required();
  me->add_option("--out-dir", margs.out_dir, "output directory")
      ->required()
      ->envname("DECLIP_OUT_DIR");
  me->add_option("--es-auc-mode", margs.es_mode, "ratio | mean-gap");
  me->add_option("--threshold-rule", margs.threshold_rule, "argmax | threshold");
  me->add_option("--threshold", margs.threshold, "threshold for rule=threshold");
  me->callback([&] { action = [&] { return cmd_metrics(margs); }; });

  // compare
  auto* co = app.add_subcommand("compare", "side-by-side comparison of two report sets");
  std::string cmp_a, cmp_b, cmp_out;
  co->add_option("--a", cmp_a, "first reports.json")->required();
  co->add_option("--b", cmp_b, "second reports.json")->required();
  co->add_option("--out-dir", cmp_out, "output directory")
      ->required()
      ->envname("DECLIP_OUT_DIR");
  co->callback([&] { action = [&] { return cmd_compare(cmp_a, cmp_b, cmp_out); }; });

  try {
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << " (run with --help)\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (action) exit_code = action();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return exit_code;
}

}  // namespace declip::cli

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "declip/reweight.hpp"
#include "test_support.hpp"

using namespace declip;
using declip::testing::finite_diff;
using declip::testing::max_rel_err;
using declip::testing::oracle_ctr_per_view;
using declip::testing::random_array;

namespace {

DualEncoder tiny_model(uint64_t seed = 3) {
  ModelConfig c;
  c.image_dim = 2;
  c.text_dim = 2;
  c.embed_dim = 2;
  c.depth = 1;
  c.tau_init = 0.5;
  c.init_seed = seed;
  return DualEncoder::init(c);
}

PairedBatch tiny_batch(uint64_t seed = 4, int b = 2, int p = 2, int q = 2) {
  Rng rng(seed);
  PairedBatch batch;
  batch.image_features = random_array(rng, b, p);
  batch.text_features = random_array(rng, b, q);
  batch.views = random_array(rng, 2 * b, p);
  for (int i = 0; i < b; ++i) {
    batch.labels.push_back(i % 2);
    batch.pairing.push_back(2 * i + 1);
    batch.pairing.push_back(2 * i);
  }
  return batch;
}

// Scope-restricted finite differences of a scalar model functional.
std::vector<double> scope_fd(const DualEncoder& model,
                             const std::vector<std::string>& scope,
                             const std::function<double(const DualEncoder&)>& f) {
  std::vector<double> theta;
  for (const auto& name : scope) {
    const Array& a = model.params().get(name);
    theta.insert(theta.end(), a.data().begin(), a.data().end());
  }
  DualEncoder probe = model;
  auto eval = [&](const std::vector<double>& t) {
    size_t off = 0;
    for (const auto& name : scope) {
      Array& a = probe.params().get(name);
      for (size_t i = 0; i < a.size(); ++i) a[i] = t[off++];
    }
    return f(probe);
  };
  return finite_diff(eval, theta);
}

double eval_topk_clip(const DualEncoder& m, const PairedBatch& batch, int k) {
  ad::Graph g;
  auto bind = m.bind(g);
  auto* zi = ad::l2_normalize_rows(m.encode_image(g, bind, g.input(batch.image_features)));
  auto* zt = ad::l2_normalize_rows(m.encode_text(g, bind, g.input(batch.text_features)));
  return topk_clip_loss(zi, zt, m.inv_tau(g, bind), k)->scalar();
}

double eval_ctr_view(const DualEncoder& m, const PairedBatch& batch, int view) {
  ad::Graph g;
  auto bind = m.bind(g);
  auto* zv = ad::l2_normalize_rows(m.encode_image(g, bind, g.input(batch.views)));
  return ctr_loss(zv, batch.pairing, m.inv_tau(g, bind))->value.at(view, 0);
}

}  // namespace

TEST_CASE("normalize_alignments evaluates the weight formula directly") {
  auto w = normalize_alignments({2.0, -1.0, 3.0, 0.0});
  CHECK(w.normalized[0] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(w.normalized[1] == 0.0);
  CHECK(w.normalized[2] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(w.normalized[3] == 0.0);
  CHECK(w.normalizer == doctest::Approx(5.0));
  CHECK(w.sum_normalized() == 1.0);
}

TEST_CASE("all-negative alignments hit the delta-guard and stay zero") {
  auto w = normalize_alignments({-2.0, -0.5, -1e-9});
  for (double x : w.normalized) CHECK(x == 0.0);
  CHECK(w.sum_normalized() == 0.0);
  CHECK(w.normalizer == 1.0);  // delta(0) = 1
  CHECK(w.all_zero());
}

TEST_CASE("weights lie on the simplex or are identically zero") {
  Rng rng(55);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(12));
    std::vector<double> raw(n);
    bool any_pos = false;
    for (auto& x : raw) {
      x = rng.gaussian();
      if (rng.uniform01() < 0.15) x = -std::abs(x);
      if (rng.uniform01() < 0.1) x = 0.0;
      any_pos |= x > 0.0;
    }
    auto w = normalize_alignments(raw);
    for (size_t i = 0; i < raw.size(); ++i) {
      CHECK(w.normalized[i] >= 0.0);
      if (raw[i] <= 0.0) CHECK(w.normalized[i] == 0.0);
    }
    const double sum = std::accumulate(w.normalized.begin(), w.normalized.end(), 0.0);
    if (any_pos)
      CHECK(sum == 1.0);
    else
      CHECK(sum == 0.0);
  }
}

TEST_CASE("positive rescaling of raw alignments leaves the weights unchanged") {
  Rng rng(56);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> raw(6);
    for (auto& x : raw) x = rng.gaussian();
    const double c = std::exp(2.0 * rng.gaussian());
    std::vector<double> scaled(6);
    for (int i = 0; i < 6; ++i) scaled[i] = c * raw[i];
    auto a = normalize_alignments(raw);
    auto b = normalize_alignments(scaled);
    for (int i = 0; i < 6; ++i) CHECK(std::abs(a.normalized[i] - b.normalized[i]) < 1e-12);
  }
}

TEST_CASE("alignment weights match finite-difference gradients of both factors") {
  DualEncoder model = tiny_model();
  PairedBatch batch = tiny_batch();
  AlignmentConfig cfg;
  cfg.k = 1;
  cfg.scope = GradScope::FinalLayer;

  auto w = alignment_weights(batch, model, cfg);
  REQUIRE(w.raw.size() == 4);

  const auto scope = scope_param_names(model, cfg.scope);
  const auto g0 = scope_fd(model, scope, [&](const DualEncoder& m) {
    return eval_topk_clip(m, batch, cfg.k);
  });
  for (int m = 0; m < 4; ++m) {
    const auto gm = scope_fd(model, scope, [&](const DualEncoder& mm) {
      return eval_ctr_view(mm, batch, m);
    });
    const double expected = std::inner_product(g0.begin(), g0.end(), gm.begin(), 0.0);
    CHECK(std::abs(w.raw[m] - expected) /
              std::max({std::abs(expected), std::abs(w.raw[m]), 1e-6}) <
          1e-3);
  }
}

TEST_CASE("table1-norm variant returns per-view gradient norms") {
  DualEncoder model = tiny_model();
  PairedBatch batch = tiny_batch();
  AlignmentConfig cfg;
  cfg.k = 2;
  cfg.variant = WeightVariant::Table1Norm;

  auto w = alignment_weights(batch, model, cfg);
  const auto scope = scope_param_names(model, cfg.scope);
  for (int m = 0; m < 4; ++m) {
    CHECK(w.raw[m] >= 0.0);
    const auto gm = scope_fd(model, scope, [&](const DualEncoder& mm) {
      return eval_ctr_view(mm, batch, m);
    });
    const double norm = std::sqrt(std::inner_product(gm.begin(), gm.end(), gm.begin(), 0.0));
    CHECK(std::abs(w.raw[m] - norm) / std::max(norm, 1e-6) < 1e-3);
  }
  CHECK(w.sum_normalized() == 1.0);
}

TEST_CASE("image-all scope uses every image tower parameter") {
  ModelConfig c;
  c.image_dim = 3;
  c.text_dim = 3;
  c.embed_dim = 2;
  c.depth = 2;
  c.init_seed = 9;
  DualEncoder model = DualEncoder::init(c);
  const auto full = scope_param_names(model, GradScope::ImageAll);
  CHECK(full == std::vector<std::string>{"img.0.b", "img.0.w", "img.1.b", "img.1.w"});
  const auto last = scope_param_names(model, GradScope::FinalLayer);
  CHECK(last == std::vector<std::string>{"img.1.b", "img.1.w"});
}

TEST_CASE("debiased objective with beta=0 is bit-identical to clip-only") {
  DualEncoder model = tiny_model(7);
  PairedBatch batch = tiny_batch(8, 3);

  auto run = [&](ObjectiveMode mode, double beta) {
    ad::Graph g;
    auto bind = model.bind(g);
    ObjectiveConfig cfg;
    cfg.mode = mode;
    cfg.beta = beta;
    cfg.k = 2;
    auto obj = debiased_objective(g, bind, batch, model, cfg);
    g.backward(obj.total);
    return std::pair{obj.total->scalar(), ad::grad_vector(bind, model.params())};
  };

  auto [v_clip, g_clip] = run(ObjectiveMode::ClipOnly, 0.0);
  auto [v_deb, g_deb] = run(ObjectiveMode::Debiased, 0.0);
  CHECK(v_clip == v_deb);
  CHECK(g_clip == g_deb);
}

TEST_CASE("an all-zero weight vector reduces the objective to clip-only") {
  DualEncoder model = tiny_model(7);
  PairedBatch batch = tiny_batch(8, 3);
  WeightVector zero = normalize_alignments({-1.0, -1.0, -1.0, -1.0, -1.0, -1.0});

  ad::Graph g1;
  auto b1 = model.bind(g1);
  ObjectiveConfig cfg;
  cfg.mode = ObjectiveMode::Debiased;
  cfg.beta = 2.0;
  cfg.k = 2;
  auto obj = debiased_objective_with_weights(g1, b1, batch, model, cfg, zero);
  g1.backward(obj.total);

  ad::Graph g2;
  auto b2 = model.bind(g2);
  ObjectiveConfig clip_cfg;
  clip_cfg.mode = ObjectiveMode::ClipOnly;
  auto ref = debiased_objective(g2, b2, batch, model, clip_cfg);
  g2.backward(ref.total);

  CHECK(obj.total->scalar() == ref.total->scalar());
  CHECK(ad::grad_vector(b1, model.params()) == ad::grad_vector(b2, model.params()));
}

TEST_CASE("debiased objective equals clip loss plus the hand-summed weighted term") {
  DualEncoder model = tiny_model(12);
  PairedBatch batch = tiny_batch(13, 2);
  ObjectiveConfig cfg;
  cfg.mode = ObjectiveMode::Debiased;
  cfg.beta = 0.7;
  cfg.k = 1;

  ad::Graph g;
  auto bind = model.bind(g);
  auto obj = debiased_objective(g, bind, batch, model, cfg);

  // Straight-line recomputation: normalized view embeddings, oracle ctr
  // losses, then clip + beta * sum(W * l).
  Array zv = model.encode_image_values(batch.views);
  for (int i = 0; i < zv.rows(); ++i) {
    double n = 0.0;
    for (int j = 0; j < zv.cols(); ++j) n += zv.at(i, j) * zv.at(i, j);
    n = std::sqrt(n);
    for (int j = 0; j < zv.cols(); ++j) zv.at(i, j) /= n;
  }
  const auto ctr = oracle_ctr_per_view(zv, batch.pairing, model.tau_value());
  double weighted = 0.0;
  for (size_t m = 0; m < ctr.size(); ++m) weighted += obj.weights.normalized[m] * ctr[m];
  CHECK(obj.total->scalar() ==
        doctest::Approx(obj.clip_total->scalar() + cfg.beta * weighted).epsilon(1e-10));
}

TEST_CASE("stop-gradient contract: one sgd step matches a manual update") {
  DualEncoder model = tiny_model(21);
  PairedBatch batch = tiny_batch(22, 2);
  ObjectiveConfig cfg;
  cfg.mode = ObjectiveMode::Debiased;
  cfg.beta = 1.3;
  cfg.k = 1;
  const double lr = 0.05;

  // Implementation path.
  DualEncoder impl = model;
  {
    ad::Graph g;
    auto bind = impl.bind(g);
    auto obj = debiased_objective(g, bind, batch, impl, cfg);
    g.backward(obj.total);
    auto theta = impl.params().flatten();
    const auto grad = ad::grad_vector(bind, impl.params());
    for (size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * grad[i];
    impl.params().unflatten(theta);
  }

  // Manual path: freeze the weights as plain constants, rebuild the same
  // objective from parts, take one explicit gradient step.
  DualEncoder manual = model;
  {
    WeightVector w = alignment_weights(batch, manual, cfg.alignment = AlignmentConfig{
                                           cfg.k, GradScope::FinalLayer,
                                           WeightVariant::GradDot, false});
    ad::Graph g;
    auto bind = manual.bind(g);
    auto* iv = manual.inv_tau(g, bind);
    auto* zi = ad::l2_normalize_rows(
        manual.encode_image(g, bind, g.input(batch.image_features)));
    auto* zt = ad::l2_normalize_rows(
        manual.encode_text(g, bind, g.input(batch.text_features)));
    auto* clip = clip_loss(zi, zt, iv).total;
    auto* zv = ad::l2_normalize_rows(manual.encode_image(g, bind, g.input(batch.views)));
    auto* ctr = ctr_loss(zv, batch.pairing, iv);
    auto* total =
        ad::add(clip, ad::scale(ad::dot(ctr, g.constant(Array::column(w.normalized))),
                                cfg.beta));
    g.backward(total);
    auto theta = manual.params().flatten();
    const auto grad = ad::grad_vector(bind, manual.params());
    for (size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * grad[i];
    manual.params().unflatten(theta);
  }

  const auto a = impl.params().flatten();
  const auto b = manual.params().flatten();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("debiased objective gradient matches finite differences with frozen weights") {
  DualEncoder model = tiny_model(31);
  PairedBatch batch = tiny_batch(32, 2);
  ObjectiveConfig cfg;
  cfg.mode = ObjectiveMode::Debiased;
  cfg.beta = 0.9;
  cfg.k = 2;

  ad::Graph g;
  auto bind = model.bind(g);
  auto obj = debiased_objective(g, bind, batch, model, cfg);
  g.backward(obj.total);
  const auto analytic = ad::grad_vector(bind, model.params());
  const WeightVector w = obj.weights;

  DualEncoder probe = model;
  auto f = [&](const std::vector<double>& theta) {
    probe.params().unflatten(theta);
    ad::Graph g2;
    auto b2 = probe.bind(g2);
    return debiased_objective_with_weights(g2, b2, batch, probe, cfg, w).total->scalar();
  };
  CHECK(max_rel_err(analytic, finite_diff(f, model.params().flatten())) < 1e-4);
}

TEST_CASE("objective rejects negative beta") {
  DualEncoder model = tiny_model();
  PairedBatch batch = tiny_batch();
  ad::Graph g;
  auto bind = model.bind(g);
  ObjectiveConfig cfg;
  cfg.mode = ObjectiveMode::Debiased;
  cfg.beta = -0.1;
  CHECK_THROWS_AS(debiased_objective(g, bind, batch, model, cfg), std::invalid_argument);
}

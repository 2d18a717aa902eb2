#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "declip/checkpoint.hpp"
#include "declip/model.hpp"
#include "test_support.hpp"

using namespace declip;
using declip::testing::finite_diff;
using declip::testing::max_rel_err;
using declip::testing::random_array;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.image_dim = 3;
  c.text_dim = 3;
  c.embed_dim = 3;
  c.depth = 1;
  c.init_seed = 5;
  return c;
}

}  // namespace

TEST_CASE("identity-initialized 1-layer encoder passes input through") {
  DualEncoder m = DualEncoder::init(tiny_config());
  Array& w = m.params().get("img.0.w");
  w.fill(0.0);
  for (int i = 0; i < 3; ++i) w.at(i, i) = 1.0;
  m.params().get("img.0.b").fill(0.0);

  Array x = Array::from_rows({{0.3, -1.2, 2.0}});
  Array z = m.encode_image_values(x);
  for (int j = 0; j < 3; ++j) CHECK(z.at(0, j) == x.at(0, j));

  ad::Graph g;
  auto bind = m.bind(g);
  auto* zn = m.encode_image(g, bind, g.input(x));
  for (int j = 0; j < 3; ++j) CHECK(zn->value.at(0, j) == x.at(0, j));
}

TEST_CASE("batched encoding has shape (B, d) and matches the numeric path") {
  ModelConfig c;
  c.image_dim = 5;
  c.text_dim = 4;
  c.embed_dim = 3;
  c.init_seed = 11;
  DualEncoder m = DualEncoder::init(c);
  Rng rng(2);
  Array x = random_array(rng, 3, 5);
  Array t = random_array(rng, 3, 4);

  ad::Graph g;
  auto bind = m.bind(g);
  auto* zi = m.encode_image(g, bind, g.input(x));
  auto* zt = m.encode_text(g, bind, g.input(t));
  CHECK(zi->value.rows() == 3);
  CHECK(zi->value.cols() == 3);
  CHECK(zt->value.rows() == 3);
  CHECK(zt->value.cols() == 3);

  CHECK(m.encode_image_values(x).data() == zi->value.data());
  CHECK(m.encode_text_values(t).data() == zt->value.data());
}

TEST_CASE("encoder rejects wrong input dims naming the expected size") {
  DualEncoder m = DualEncoder::init(tiny_config());
  ad::Graph g;
  auto bind = m.bind(g);
  CHECK_THROWS_WITH_AS(m.encode_image(g, bind, g.input(Array(1, 7, 0.0))),
                       doctest::Contains("expected 3"), std::invalid_argument);
  CHECK_THROWS_AS(m.encode_text_values(Array(1, 9, 0.0)), std::invalid_argument);
}

TEST_CASE("gradient of sum(encode_image(x)) matches finite differences") {
  ModelConfig c;
  c.image_dim = 4;
  c.text_dim = 4;
  c.embed_dim = 3;
  c.init_seed = 17;
  DualEncoder m = DualEncoder::init(c);
  Rng rng(3);
  Array x = random_array(rng, 2, 4);

  ad::Graph g;
  auto bind = m.bind(g);
  auto* root = ad::sum(m.encode_image(g, bind, g.input(x)));
  g.backward(root);
  const auto analytic = ad::grad_vector(bind, m.params());

  DualEncoder probe = m;
  auto f = [&](const std::vector<double>& theta) {
    probe.params().unflatten(theta);
    ad::Graph g2;
    auto b2 = probe.bind(g2);
    return ad::sum(probe.encode_image(g2, b2, g2.input(x)))->scalar();
  };
  CHECK(max_rel_err(analytic, finite_diff(f, m.params().flatten())) < 1e-4);
}

TEST_CASE("encoder determinism under fixed parameters") {
  ModelConfig c = tiny_config();
  c.depth = 2;
  DualEncoder a = DualEncoder::init(c);
  DualEncoder b = DualEncoder::init(c);
  CHECK(a.params().flatten() == b.params().flatten());
  Rng rng(4);
  Array x = random_array(rng, 2, 3);
  CHECK(a.encode_image_values(x).data() == b.encode_image_values(x).data());
}

TEST_CASE("zero-shot picks the aligned prompt and ignores positive scaling") {
  // Prompt embeddings are rows of the identity; image embedding equals prompt
  // 0 and is orthogonal to prompt 1.
  Array pe = Array::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  std::vector<int> ids{0, 1};
  auto r = zero_shot_from_embedding({1.0, 0.0}, pe, ids, 0.07);
  CHECK(r.class_id == 0);
  CHECK(r.cosines[0] == doctest::Approx(1.0));
  CHECK(r.cosines[1] == doctest::Approx(0.0));

  auto r10 = zero_shot_from_embedding({10.0, 0.0}, pe, ids, 0.07);
  CHECK(r10.class_id == r.class_id);

  Rng rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    Array prompts = declip::testing::random_unit_rows(rng, 3, 4);
    std::vector<double> z(4);
    for (auto& v : z) v = rng.gaussian();
    const double c = std::exp(rng.gaussian());
    std::vector<double> zc(4);
    for (int i = 0; i < 4; ++i) zc[i] = c * z[i];
    auto a = zero_shot_from_embedding(z, prompts, {0, 1, 2}, 1.0);
    auto b = zero_shot_from_embedding(zc, prompts, {0, 1, 2}, 1.0);
    CHECK(a.class_id == b.class_id);
  }
}

TEST_CASE("zero-shot argmax agrees with brute force over three prompts") {
  Array pe = Array::from_rows({{0.8, 0.1}, {-0.2, 0.9}, {0.5, 0.5}});
  std::vector<int> ids{0, 1, 2};
  std::vector<double> z{0.3, 0.7};
  auto r = zero_shot_from_embedding(z, pe, ids, 1.0);

  int best = 0;
  double best_cos = -2.0;
  for (int j = 0; j < 3; ++j) {
    double dot = 0, zn = 0, pn = 0;
    for (int c = 0; c < 2; ++c) {
      dot += z[c] * pe.at(j, c);
      zn += z[c] * z[c];
      pn += pe.at(j, c) * pe.at(j, c);
    }
    const double cs = dot / std::sqrt(zn * pn);
    CHECK(r.cosines[j] == doctest::Approx(cs).epsilon(1e-12));
    CHECK(cs >= -1.0);
    CHECK(cs <= 1.0);
    if (cs > best_cos) {
      best_cos = cs;
      best = j;
    }
  }
  CHECK(r.class_id == best);
}

TEST_CASE("zero-shot rejects degenerate embeddings") {
  Array pe = Array::from_rows({{1.0, 0.0}, {0.0, 1.0}});
  CHECK_THROWS_WITH_AS(zero_shot_from_embedding({0.0, 0.0}, pe, {0, 1}, 1.0),
                       doctest::Contains("degenerate embedding"), std::runtime_error);
  Array zp = Array::from_rows({{1.0, 0.0}, {0.0, 0.0}});
  CHECK_THROWS_AS(zero_shot_from_embedding({1.0, 0.0}, zp, {0, 1}, 1.0),
                  std::runtime_error);
}

TEST_CASE("prompt sets validate class ids and sizes") {
  CHECK_THROWS_AS(PromptSet::from_vectors({Prompt{0, "", {1.0}}}), std::invalid_argument);
  CHECK_THROWS_AS(
      PromptSet::from_vectors({Prompt{0, "", {1.0}}, Prompt{0, "", {2.0}}}),
      std::invalid_argument);
  auto ps = PromptSet::from_vectors({Prompt{1, "pos", {1.0, 0.0}}, Prompt{0, "neg", {0.0, 1.0}}});
  CHECK(ps.class_ids() == std::vector<int>{0, 1});  // sorted ascending
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  ModelConfig c;
  c.image_dim = 4;
  c.text_dim = 5;
  c.embed_dim = 3;
  c.init_seed = 23;
  DualEncoder m = DualEncoder::init(c);
  m.params().get("log_tau")[0] = -1.23456789012345678;

  const std::string path = (std::filesystem::temp_directory_path() /
                            "declip_test_roundtrip.ckpt").string();
  save_checkpoint(path, m, CheckpointMeta{99, "abc123"});
  auto loaded = load_checkpoint(path);
  CHECK(loaded.meta.seed == 99);
  CHECK(loaded.meta.config_hash == "abc123");
  CHECK(loaded.model.params().flatten() == m.params().flatten());
  CHECK(loaded.model.config().embed_dim == 3);

  Rng rng(8);
  Array x = random_array(rng, 2, 4);
  CHECK(loaded.model.encode_image_values(x).data() == m.encode_image_values(x).data());
  std::filesystem::remove(path);
}

#include "deco/attention.hpp"
#include "deco/model.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

#include <chrono>

using namespace deco;

namespace {

Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  return Eigen::MatrixXd::NullaryExpr(r, c, [&] { return n(rng); });
}

nn::FeatureMap<double> random_input(std::mt19937_64& rng, int h, int w) {
  nn::FeatureMap<double> x;
  x.height = h;
  x.width = w;
  x.data = random_matrix(rng, 3, h * w, 0.3);
  return x;
}

Eigen::MatrixXd scripted_fusion(const Eigen::MatrixXd& fs, const Eigen::MatrixXd& fp, double ct,
                                std::vector<Eigen::MatrixXd>* weights = nullptr) {
  Eigen::MatrixXd as, ap;
  const Eigen::MatrixXd fs2 = oracle::scripted_attention(fp, fs, fs, ct, &as);
  const Eigen::MatrixXd fp2 = oracle::scripted_attention(fs, fp, fp, ct, &ap);
  if (weights) *weights = {as, ap};
  return oracle::layer_norm(fs2.cwiseProduct(fp2), 1e-5);
}

}  // namespace

TEST_CASE("single token: attention is the identity") {
  std::mt19937_64 rng(41);
  const Eigen::MatrixXd fs = random_matrix(rng, 1, 5), fp = random_matrix(rng, 1, 5);
  CrossAttentionFusion<double>::Cache cache;
  const Eigen::MatrixXd fc = cross_attention_fuse(fs, fp, 5.0, 1, &cache);
  CHECK((cache.scene_attended - fs).norm() < 1e-15);
  CHECK((cache.part_attended - fp).norm() < 1e-15);
  CHECK((fc - oracle::layer_norm(fs.cwiseProduct(fp), 1e-5)).norm() < 1e-12);
}

TEST_CASE("zero part queries give uniform rows and mean values") {
  std::mt19937_64 rng(42);
  const Eigen::MatrixXd fs = random_matrix(rng, 2, 3);
  const Eigen::MatrixXd fp = Eigen::MatrixXd::Zero(2, 3);
  CrossAttentionFusion<double>::Cache cache;
  cross_attention_fuse(fs, fp, 3.0, 1, &cache);
  REQUIRE(cache.scene_attention.size() == 1);
  CHECK((cache.scene_attention[0].array() - 0.5).abs().maxCoeff() < 1e-15);
  const Eigen::RowVectorXd mean = fs.colwise().mean();
  for (int r = 0; r < 2; ++r) CHECK((cache.scene_attended.row(r) - mean).norm() < 1e-15);
}

TEST_CASE("fusion matches the scripted formulas") {
  std::mt19937_64 rng(43);
  const Eigen::MatrixXd fs = random_matrix(rng, 3, 2), fp = random_matrix(rng, 3, 2);
  CHECK((cross_attention_fuse(fs, fp, 2.0) - scripted_fusion(fs, fp, 2.0)).cwiseAbs().maxCoeff() < 1e-6);

  for (int trial = 0; trial < 100; ++trial) {
    const int t = 1 + static_cast<int>(rng() % 8), c = 1 + static_cast<int>(rng() % 8);
    const Eigen::MatrixXd s = random_matrix(rng, t, c), p = random_matrix(rng, t, c);
    CrossAttentionFusion<double>::Cache cache;
    std::vector<Eigen::MatrixXd> weights;
    const Eigen::MatrixXd got = cross_attention_fuse(s, p, c, 1, &cache);
    CHECK((got - scripted_fusion(s, p, c, &weights)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((cache.scene_attention[0] - weights[0]).cwiseAbs().maxCoeff() < 1e-12);
    for (const auto& a : {cache.scene_attention[0], cache.part_attention[0]}) {
      CHECK((a.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
      CHECK(a.minCoeff() >= 0.0);
    }
  }
}

TEST_CASE("multi-head attention splits the embedding into independent blocks") {
  std::mt19937_64 rng(44);
  const Eigen::MatrixXd q = random_matrix(rng, 5, 8), k = random_matrix(rng, 5, 8), v = random_matrix(rng, 5, 8);
  std::vector<Eigen::MatrixXd> maps;
  const Eigen::MatrixXd out = attend<double>(q, k, v, 8.0, 4, &maps);
  REQUIRE(maps.size() == 4);
  for (int h = 0; h < 4; ++h) {
    const Eigen::MatrixXd expected = oracle::scripted_attention(q.middleCols(2 * h, 2), k.middleCols(2 * h, 2),
                                                                v.middleCols(2 * h, 2), 8.0);
    CHECK((out.middleCols(2 * h, 2) - expected).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK_THROWS(CrossAttentionFusion<double>(6, 6.0, 4));
}

TEST_CASE("fusion commutes with a shared token permutation") {
  std::mt19937_64 rng(45);
  for (int trial = 0; trial < 20; ++trial) {
    const int t = 2 + static_cast<int>(rng() % 7);
    const Eigen::MatrixXd s = random_matrix(rng, t, 4), p = random_matrix(rng, t, 4);
    std::vector<int> perm(static_cast<std::size_t>(t));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd sp(t, 4), pp(t, 4);
    for (int i = 0; i < t; ++i) {
      sp.row(i) = s.row(perm[i]);
      pp.row(i) = p.row(perm[i]);
    }
    const Eigen::MatrixXd out = cross_attention_fuse(s, p, 4.0);
    const Eigen::MatrixXd permuted = cross_attention_fuse(sp, pp, 4.0);
    for (int i = 0; i < t; ++i) CHECK((permuted.row(i) - out.row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("attention backward matches finite differences") {
  std::mt19937_64 rng(46);
  for (bool projections : {false, true}) {
    CrossAttentionFusion<double> fusion(4, 4.0, 2, projections);
    fusion.init(rng);
    fusion.norm.gamma = random_matrix(rng, 4, 1);
    fusion.norm.beta = random_matrix(rng, 4, 1);
    Eigen::MatrixXd s = random_matrix(rng, 3, 4), p = random_matrix(rng, 3, 4);
    const Eigen::MatrixXd w = random_matrix(rng, 3, 4);
    auto loss = [&] { return fusion.forward(s, p, nullptr).cwiseProduct(w).sum(); };
    CrossAttentionFusion<double>::Cache cache;
    fusion.forward(s, p, &cache);
    CrossAttentionFusion<double> grad(4, 4.0, 2, projections);
    grad.visit("g", [](const std::string&, Eigen::MatrixXd& m) { m.setZero(); });
    auto [ds, dp] = fusion.backward(w, s, p, cache, grad);
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      CHECK(oracle::relative_error(ds.data()[i], oracle::central_difference(loss, s.data()[i], 1e-6)) < 1e-6);
      CHECK(oracle::relative_error(dp.data()[i], oracle::central_difference(loss, p.data()[i], 1e-6)) < 1e-6);
    }
    std::vector<std::pair<double*, double>> params;
    std::vector<double*> slots;
    fusion.visit("f", [&](const std::string&, Eigen::MatrixXd& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) slots.push_back(m.data() + i);
    });
    std::vector<double> analytic;
    grad.visit("g", [&](const std::string&, Eigen::MatrixXd& m) {
      for (Eigen::Index i = 0; i < m.size(); ++i) analytic.push_back(m.data()[i]);
    });
    REQUIRE(slots.size() == analytic.size());
    for (std::size_t i = 0; i < slots.size(); ++i) {
      // Key biases get an exactly zero gradient (softmax ignores a per-row shift).
      CHECK(oracle::relative_error(analytic[i], oracle::central_difference(loss, *slots[i], 1e-6), 1e-4) < 1e-5);
    }
  }
}

TEST_CASE("model shapes and determinism") {
  const ModelConfig config = fixtures::tiny_config();
  const Model model(config);
  std::mt19937_64 rng(47);
  const auto x = random_input(rng, 32, 32);
  const DecoOutput<double> out = model.forward(x);
  CHECK(out.contact.size() == config.num_vertices);
  CHECK(out.scene_logits.rows() == 3);
  CHECK(out.part_logits.rows() == 3);
  CHECK(out.scene_logits.cols() == 32 * 32);
  CHECK(out.part_logits.cols() == 32 * 32);
  CHECK(((out.contact.array() > 0) && (out.contact.array() < 1)).all());
  const DecoOutput<double> again = model.forward(x);
  CHECK(again.contact == out.contact);
  CHECK(again.part_logits == out.part_logits);
  CHECK(Model(config).forward(x).contact == out.contact);

  nn::FeatureMap<double> zero = x;
  zero.data.setZero();
  const auto z = model.forward(zero);
  CHECK(z.contact.allFinite());
  CHECK(z.scene_logits.allFinite());

  nn::FeatureMap<double> wrong = random_input(rng, 16, 16);
  CHECK_THROWS_AS(model.forward(wrong), std::invalid_argument);
}

TEST_CASE("seeds change values but not shapes") {
  const Model a(fixtures::tiny_config(1)), b(fixtures::tiny_config(2));
  CHECK(a.parameter_count() == b.parameter_count());
  std::vector<std::string> names_a, names_b;
  bool differ = false;
  std::vector<Eigen::MatrixXd> values_a;
  a.visit([&](const std::string& n, const Eigen::MatrixXd& m) {
    names_a.push_back(n);
    values_a.push_back(m);
  });
  std::size_t i = 0;
  b.visit([&](const std::string& n, const Eigen::MatrixXd& m) {
    names_b.push_back(n);
    CHECK(m.rows() == values_a[i].rows());
    CHECK(m.cols() == values_a[i].cols());
    differ = differ || m != values_a[i];
    ++i;
  });
  CHECK(names_a == names_b);
  CHECK(differ);
}

TEST_CASE("batch forward equals per-sample forwards and swapping permutes outputs") {
  const Model model(fixtures::tiny_config());
  std::mt19937_64 rng(48);
  std::vector<nn::FeatureMap<double>> batch = {random_input(rng, 32, 32), random_input(rng, 32, 32),
                                               random_input(rng, 32, 32)};
  const auto out = model.forward_batch(batch);
  REQUIRE(out.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK((out[i].contact - model.forward(batch[i]).contact).cwiseAbs().maxCoeff() < 1e-6);
  }
  std::swap(batch[0], batch[1]);
  const auto swapped = model.forward_batch(batch);
  CHECK(swapped[0].contact == out[1].contact);
  CHECK(swapped[1].contact == out[0].contact);
  CHECK(swapped[2].contact == out[2].contact);
}

TEST_CASE("zeroed output layer predicts exactly one half") {
  Model model(fixtures::tiny_config());
  auto& head = model.contact_output_layer();
  head.weight.setZero();
  head.bias.setZero();
  std::mt19937_64 rng(49);
  const auto out = model.forward(random_input(rng, 32, 32));
  CHECK((out.contact.array() == 0.5).all());
}

TEST_CASE("perturbing one fused entry moves the contact output") {
  const Model model(fixtures::tiny_config());
  std::mt19937_64 rng(50);
  Model::Cache cache;
  model.forward(random_input(rng, 32, 32), &cache);
  Eigen::MatrixXd fused = cache.fused;
  const Eigen::VectorXd base = model.contact_head(fused);
  fused(0, 1) += 1e-4;
  CHECK((model.contact_head(fused) - base).cwiseAbs().maxCoeff() > 0);
}

TEST_CASE("model backward matches finite differences on a linear readout") {
  Model model(fixtures::tiny_config(5));
  std::mt19937_64 rng(51);
  const auto x = random_input(rng, 32, 32);
  const auto probe = model.forward(x);
  const Eigen::VectorXd wc = random_matrix(rng, probe.contact.size(), 1);
  const Eigen::MatrixXd ws = random_matrix(rng, probe.scene_logits.rows(), probe.scene_logits.cols(), 0.01);
  const Eigen::MatrixXd wp = random_matrix(rng, probe.part_logits.rows(), probe.part_logits.cols(), 0.01);
  auto loss = [&] {
    const auto o = model.forward(x);
    return o.contact.dot(wc) + o.scene_logits.cwiseProduct(ws).sum() + o.part_logits.cwiseProduct(wp).sum();
  };
  Model::Cache cache;
  model.forward(x, &cache);
  Model grad = model.zeros_like();
  model.backward({wc, ws, wp}, cache, grad);
  const auto slots = fixtures::parameter_slots(model);
  const auto gslots = fixtures::parameter_slots(grad);
  for (std::size_t k = 0; k < 40; ++k) {
    const std::size_t i = rng() % slots.size();
    CHECK(oracle::relative_error(*gslots[i], oracle::central_difference(loss, *slots[i], 1e-6), 1e-7) < 1e-5);
  }
}

TEST_CASE("full-scale channel counts") {
  const ModelConfig full = ModelConfig::full_scale();
  CHECK(full.input_height == 256);
  CHECK(full.embedding_dim() == 480);
  CHECK(full.feature_height() == 64);
  CHECK(full.num_vertices == 6890);
  CHECK(full.num_parts + 1 == 25);
  CHECK(full.scene_channels == 133);
  CHECK(full.attention_scale() == 480.0);

  // Heads of the decoders, checked on a cheap stand-in with the same output widths.
  ModelConfig c = fixtures::tiny_config();
  c.num_parts = 24;
  c.scene_channels = 133;
  const Model m(c);
  std::mt19937_64 rng(52);
  const auto out = m.forward(random_input(rng, 32, 32));
  CHECK(out.part_logits.rows() == 25);
  CHECK(out.scene_logits.rows() == 133);
}

TEST_CASE("config validation and JSON") {
  ModelConfig c = ModelConfig::desk();
  CHECK(model_config_from_json(to_json(c)) == c);
  c.ct = 7;
  CHECK_THROWS(c.validate());
  c = ModelConfig::desk();
  c.input_height = 60;
  CHECK_THROWS(c.validate());
  c = ModelConfig::desk();
  c.heads = 3;
  CHECK_THROWS(c.validate());
}

TEST_CASE("parameters round trip through JSON") {
  const Model a(fixtures::tiny_config(8));
  Model b = Model::zeros(a.config());
  parameters_from_json(b, parameters_to_json(a));
  std::mt19937_64 rng(53);
  const auto x = random_input(rng, 32, 32);
  CHECK(a.forward(x).contact == b.forward(x).contact);
}

TEST_CASE("desk forward pass runs in under a second") {
  const Model model(ModelConfig::desk());
  std::mt19937_64 rng(54);
  const auto x = random_input(rng, 64, 64);
  const auto start = std::chrono::steady_clock::now();
  const auto out = model.forward(x);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  CHECK(out.contact.size() == 642);
  CHECK(seconds < 1.0);
}

#include "deco/losses.hpp"
#include "deco/train.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <doctest.h>

using namespace deco;

namespace {

Points2<double> random_pixels(std::mt19937_64& rng, int n, int size) {
  std::uniform_real_distribution<double> u(-2.0, size + 1.0);
  return Points2<double>::NullaryExpr(n, 2, [&] { return u(rng); });
}

}  // namespace

TEST_CASE("contact BCE values") {
  Eigen::VectorXd half = Eigen::VectorXd::Constant(7, 0.5);
  std::mt19937_64 rng(61);
  const Eigen::VectorXd gt = Eigen::VectorXd::NullaryExpr(7, [&] { return double(rng() % 2); });
  CHECK(contact_bce<double>(half, gt).value == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Eigen::VectorXd p(1), y(1);
  p << 0.9;
  y << 1;
  CHECK(contact_bce<double>(p, y).value == doctest::Approx(-std::log(0.9)).epsilon(1e-12));
  CHECK(contact_bce<double>(p, y).value == doctest::Approx(0.10536).epsilon(1e-4));

  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(5);
  CHECK(contact_bce<double>(ones, ones).value <= -std::log(1 - kProbabilityEpsilon) + 1e-15);
  CHECK_THROWS(contact_bce<double>(ones, Eigen::VectorXd::Ones(4)));
}

TEST_CASE("BCE gradient matches finite differences") {
  std::mt19937_64 rng(62);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Eigen::VectorXd p = Eigen::VectorXd::NullaryExpr(9, [&] { return u(rng); });
  const Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(9, [&] { return double(rng() % 2); });
  const auto r = contact_bce<double>(p, y);
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double fd = oracle::central_difference([&] { return contact_bce<double>(p, y).value; }, p(i), 1e-6);
    CHECK(oracle::relative_error(r.grad(i), fd) < 1e-6);
  }
}

TEST_CASE("segmentation cross-entropy") {
  const Eigen::MatrixXd uniform = Eigen::MatrixXd::Zero(5, 6);
  const Eigen::VectorXi labels = (Eigen::VectorXi(6) << 0, 1, 2, 3, 4, 0).finished();
  CHECK(segmentation_ce<double>(uniform, labels).value == doctest::Approx(std::log(5.0)).epsilon(1e-12));

  Eigen::MatrixXd confident = Eigen::MatrixXd::Constant(5, 6, -50);
  for (int p = 0; p < 6; ++p) confident(labels(p), p) = 50;
  CHECK(segmentation_ce<double>(confident, labels).value < 1e-12);

  std::mt19937_64 rng(63);
  std::normal_distribution<double> n(0, 2);
  Eigen::MatrixXd logits = Eigen::MatrixXd::NullaryExpr(3, 16, [&] { return n(rng); });
  const Eigen::VectorXi lab = Eigen::VectorXi::NullaryExpr(16, [&] { return static_cast<int>(rng() % 3); });
  double expected = 0;
  for (int p = 0; p < 16; ++p) {
    double z = 0;
    for (int k = 0; k < 3; ++k) z += std::exp(logits(k, p));
    expected += -std::log(std::exp(logits(lab(p), p)) / z);
  }
  expected /= 16;
  const auto ce = segmentation_ce<double>(logits, lab);
  CHECK(std::abs(ce.value - expected) < 1e-9);
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const double fd =
        oracle::central_difference([&] { return segmentation_ce<double>(logits, lab).value; }, logits.data()[i], 1e-6);
    // Floor at 1e-4: entries near zero only carry finite-difference roundoff.
    CHECK(oracle::relative_error(ce.grad.data()[i], fd, 1e-4) < 1e-5);
  }
  Eigen::VectorXi bad = lab;
  bad(0) = 3;
  CHECK_THROWS(segmentation_ce<double>(logits, bad));
}

TEST_CASE("weak-perspective projection") {
  Points3<double> v(2, 3);
  v << 0.3, -0.7, 5, 0.5, -0.5, 2;
  const Points2<double> id = project_normalized(v, Camera{1.0, 0.0, 0.0, 64, 64});
  CHECK(id(0, 0) == 0.3);
  CHECK(id(0, 1) == -0.7);
  const Points2<double> moved = project_normalized(v, Camera{2.0, 1.0, 0.0, 64, 64});
  CHECK(moved(1, 0) == 2.0);
  CHECK(moved(1, 1) == -1.0);

  const Camera cam{1.7, 0.1, 0.2, 40, 30};
  const Eigen::Vector2d jac = projection_jacobian_diagonal(cam);
  Points3<double> p(1, 3);
  p << 0.2, 0.1, 0.4;
  for (int axis = 0; axis < 2; ++axis) {
    const double du = oracle::central_difference(
        [&] { return project_normalized(p, cam)(0, axis); }, p(0, axis), 1e-6);
    CHECK(du == doctest::Approx(cam.scale).epsilon(1e-9));
    const double dpx = oracle::central_difference(
        [&] { return project_weak_perspective(p, cam)(0, axis); }, p(0, axis), 1e-6);
    CHECK(dpx == doctest::Approx(jac(axis)).epsilon(1e-9));
  }
  const double dz = oracle::central_difference([&] { return project_normalized(p, cam)(0, 0); }, p(0, 2), 1e-6);
  CHECK(dz == 0.0);
  CHECK_THROWS(project_weak_perspective(p, Camera{0.0, 0, 0, 64, 64}));
}

TEST_CASE("splat rendering") {
  const Camera cam{1.0, 0, 0, 16, 16};
  SUBCASE("zero values give a zero map") {
    std::mt19937_64 rng(64);
    const auto px = random_pixels(rng, 10, 16);
    CHECK(splat_render<double>(px, Eigen::VectorXd::Zero(10), cam).isZero());
  }
  SUBCASE("one vertex at a pixel center peaks there and follows the Gaussian") {
    Points2<double> px(1, 2);
    px << 5, 9;
    const SplatOptions opts{0.8, 0.0};
    const Eigen::MatrixXd map = splat_render<double>(px, Eigen::VectorXd::Ones(1), cam, opts);
    Eigen::Index r, c;
    map.maxCoeff(&r, &c);
    CHECK(r == 9);
    CHECK(c == 5);
    for (int y = 0; y < 16; ++y) {
      for (int x = 0; x < 16; ++x) {
        const double g = std::exp(-((x - 5.0) * (x - 5.0) + (y - 9.0) * (y - 9.0)) / (2 * 0.64));
        CHECK(std::abs(map(y, x) - g) < 1e-12);
      }
    }
  }
  SUBCASE("two vertices combine by soft-or") {
    Points2<double> px(2, 2);
    px << 2, 2, 13, 12;
    Eigen::VectorXd v(2);
    v << 0.7, 0.4;
    const Eigen::MatrixXd both = splat_render<double>(px, v, cam);
    const Eigen::MatrixXd a = splat_render<double>(px.topRows(1), v.head(1), cam);
    const Eigen::MatrixXd b = splat_render<double>(px.bottomRows(1), v.tail(1), cam);
    const Eigen::MatrixXd softor = (1.0 - (1.0 - a.array()) * (1.0 - b.array())).matrix();
    CHECK((both - softor).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((both - a.cwiseMax(b)).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("relabeling the vertices leaves the map unchanged") {
    std::mt19937_64 rng(65);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 10; ++trial) {
      const auto px = random_pixels(rng, 12, 16);
      const Eigen::VectorXd v = Eigen::VectorXd::NullaryExpr(12, [&] { return u(rng); });
      std::vector<int> perm(12);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      Points2<double> ppx(12, 2);
      Eigen::VectorXd pv(12);
      for (int i = 0; i < 12; ++i) {
        ppx.row(i) = px.row(perm[i]);
        pv(i) = v(perm[i]);
      }
      CHECK((splat_render<double>(px, v, cam) - splat_render<double>(ppx, pv, cam)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("splat backward matches finite differences") {
  std::mt19937_64 rng(66);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  const Camera cam{1.0, 0, 0, 12, 12};
  Points2<double> px = random_pixels(rng, 6, 12);
  Eigen::VectorXd v = Eigen::VectorXd::NullaryExpr(6, [&] { return u(rng); });
  const Eigen::MatrixXd w = Eigen::MatrixXd::NullaryExpr(12, 12, [&] { return u(rng) - 0.5; });
  SplatRenderer<double> renderer(12, 12, {1.2, 0.0});
  renderer.render(px, v);
  const auto g = renderer.backward(w);
  auto loss = [&] { return splat_render<double>(px, v, cam, {1.2, 0.0}).cwiseProduct(w).sum(); };
  for (int i = 0; i < 6; ++i) {
    CHECK(oracle::relative_error(g.values(i), oracle::central_difference(loss, v(i), 1e-6)) < 1e-6);
    CHECK(oracle::relative_error(g.pixels(i, 0), oracle::central_difference(loss, px(i, 0), 1e-6)) < 1e-6);
    CHECK(oracle::relative_error(g.pixels(i, 1), oracle::central_difference(loss, px(i, 1), 1e-6)) < 1e-6);
  }
}

TEST_CASE("pixel anchoring loss") {
  const fixtures::TinyCase tc;
  const Eigen::VectorXd zeros = Eigen::VectorXd::Zero(tc.pixels.rows());
  const Eigen::MatrixXd empty = Eigen::MatrixXd::Zero(32, 32);
  CHECK(pal_loss<double>(zeros, tc.pixels, empty, tc.camera).value <= -std::log(1 - kProbabilityEpsilon) + 1e-15);
  CHECK(pal_loss<double>(zeros, tc.pixels, tc.mask, tc.camera).value > 0.1);
  CHECK_THROWS(pal_loss<double>(zeros, tc.pixels, Eigen::MatrixXd::Zero(16, 16), tc.camera));
}

TEST_CASE("pixel anchoring gradient matches finite differences on a 50-vertex body") {
  const fixtures::TinyCase tc;
  std::mt19937_64 rng(67);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  Eigen::VectorXd p = Eigen::VectorXd::NullaryExpr(tc.pixels.rows(), [&] { return u(rng); });
  REQUIRE(p.size() == 50);
  const auto r = pal_loss<double>(p, tc.pixels, tc.mask, tc.camera);
  double worst = 0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double fd = oracle::central_difference(
        [&] { return pal_loss<double>(p, tc.pixels, tc.mask, tc.camera).value; }, p(i), 1e-6);
    worst = std::max(worst, oracle::relative_error(r.grad(i), fd, 1e-9));
  }
  CHECK(worst < 1e-3);
}

TEST_CASE("total loss weighting") {
  const LossComponents<double> ones{1.0, 1.0, 1.0, 1.0};
  CHECK(total_loss(ones, LossWeights::standard()) == doctest::Approx(12.05).epsilon(1e-15));
  CHECK(total_loss(ones, LossWeights{0, 0, 0, 0}) == 0.0);
  LossComponents<double> partial{2.0, std::nullopt, 3.0, std::nullopt};
  CHECK(total_loss(partial, LossWeights::standard()) == doctest::Approx(23.0));
  LossComponents<double> nan{std::nan(""), 1.0, 1.0, 1.0};
  CHECK_THROWS_AS(total_loss(nan, LossWeights::standard()), std::domain_error);
  CHECK_THROWS(total_loss(ones, LossWeights{-1, 0, 0, 0}));
}

TEST_CASE("total loss is linear in each component") {
  std::mt19937_64 rng(68);
  std::uniform_real_distribution<double> u(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    const LossWeights w{u(rng), u(rng), u(rng), u(rng)};
    LossComponents<double> c{u(rng), u(rng), u(rng), u(rng)};
    const double base = total_loss(c, w);
    const double a = u(rng), b = u(rng);
    for (int k = 0; k < 4; ++k) {
      std::optional<double>* slot[] = {&c.contact, &c.pixel_anchor, &c.scene_seg, &c.part_seg};
      const double saved = **slot[k];
      *slot[k] = saved + a;
      const double fa = total_loss(c, w);
      *slot[k] = saved + a + b;
      const double fab = total_loss(c, w);
      *slot[k] = saved;
      CHECK((fab - fa) == doctest::Approx(b / a * (fa - base)).epsilon(1e-9));
    }
  }
}

TEST_CASE("every loss is finite and nonnegative on clamped inputs") {
  std::mt19937_64 rng(69);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  const fixtures::TinyCase tc;
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::VectorXd p = Eigen::VectorXd::NullaryExpr(50, [&] { return u(rng) < 0.2 ? 0.0 : (u(rng) > 1.2 ? 1.0 : std::clamp(u(rng), 0.0, 1.0)); });
    const Eigen::VectorXd y = Eigen::VectorXd::NullaryExpr(50, [&] { return double(rng() % 2); });
    const double bce = contact_bce<double>(p, y).value;
    const double pal = pal_loss<double>(p, tc.pixels, tc.mask, tc.camera).value;
    for (double v : {bce, pal}) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0);
    }
  }
}

TEST_CASE("without 3D labels the contact head learns only from pixel anchoring") {
  const Model model(fixtures::tiny_config());
  const TrainingSample sample = fixtures::tiny_sample(70, false);
  auto head_grad = [&](const LossWeights& w) {
    Model g = model.zeros_like();
    sample_loss(model, sample, w, 1.5, &g);
    std::vector<double> out;
    g.visit([&](const std::string& name, const Eigen::MatrixXd& m) {
      if (name.rfind("contact_head", 0) == 0 || name.rfind("fusion", 0) == 0) {
        out.insert(out.end(), m.data(), m.data() + m.size());
      }
    });
    return out;
  };
  const auto with_contact = head_grad({10.0, 0.05, 1.0, 1.0});
  const auto pal_only = head_grad({0.0, 0.05, 0.0, 0.0});
  CHECK(with_contact == pal_only);
  const auto none = head_grad({10.0, 0.0, 1.0, 1.0});
  CHECK(std::all_of(none.begin(), none.end(), [](double v) { return v == 0.0; }));
  CHECK(std::any_of(pal_only.begin(), pal_only.end(), [](double v) { return v != 0.0; }));
  const SampleLoss l = sample_loss(model, sample, LossWeights::standard(), 1.5);
  CHECK_FALSE(l.components.contact.has_value());
  CHECK(l.components.pixel_anchor.has_value());
}

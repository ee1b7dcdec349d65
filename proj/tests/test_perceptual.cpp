#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <random>

#include "doctest.h"
#include "l3s/error.hpp"
#include "l3s/perceptual.hpp"
#include "oracles.hpp"

using namespace l3s;

namespace {

GrayImage random_image(std::mt19937_64& rng, int w, int h) {
  return GrayImage(oracle::random_mat(rng, h, w, 0.0, 1.0));
}

// Binomial [1 4 6 4 1]/16 blur with edge replication, then keep even pixels;
// per level the mean squared difference of the intensity, x-difference and
// y-difference channels, averaged over channels and levels.
double pyramid_reference(const Mat& a, const Mat& b, int levels) {
  std::vector<Mat> pa{a}, pb{b};
  while (static_cast<int>(pa.size()) < levels && pa.back().rows() >= 2 && pa.back().cols() >= 2) {
    auto half = [](const Mat& m) {
      const double k[5] = {1, 4, 6, 4, 1};
      auto at = [&](Eigen::Index r, Eigen::Index c) {
        r = std::min<Eigen::Index>(std::max<Eigen::Index>(r, 0), m.rows() - 1);
        c = std::min<Eigen::Index>(std::max<Eigen::Index>(c, 0), m.cols() - 1);
        return m(r, c);
      };
      Mat rowblur(m.rows(), m.cols());
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
          double v = 0;
          for (int j = -2; j <= 2; ++j) v += k[j + 2] * at(r, c + j);
          rowblur(r, c) = v / 16;
        }
      Mat out(m.rows() / 2, m.cols() / 2);
      for (Eigen::Index r = 0; r < out.rows(); ++r)
        for (Eigen::Index c = 0; c < out.cols(); ++c) {
          double v = 0;
          for (int i = -2; i <= 2; ++i)
            v += k[i + 2] * rowblur(std::min<Eigen::Index>(std::max<Eigen::Index>(2 * r + i, 0), m.rows() - 1), 2 * c);
          out(r, c) = v / 16;
        }
      return out;
    };
    pa.push_back(half(pa.back()));
    pb.push_back(half(pb.back()));
  }
  double total = 0.0;
  for (std::size_t l = 0; l < pa.size(); ++l) {
    const Mat& x = pa[l];
    const Mat& y = pb[l];
    std::vector<double> channel;
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) s += std::pow(x.data()[i] - y.data()[i], 2);
    channel.push_back(s / x.size());
    if (x.cols() > 1) {
      s = 0.0;
      for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c + 1 < x.cols(); ++c)
          s += std::pow((x(r, c + 1) - x(r, c)) - (y(r, c + 1) - y(r, c)), 2);
      channel.push_back(s / (x.rows() * (x.cols() - 1)));
    }
    if (x.rows() > 1) {
      s = 0.0;
      for (Eigen::Index r = 0; r + 1 < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c)
          s += std::pow((x(r + 1, c) - x(r, c)) - (y(r + 1, c) - y(r, c)), 2);
      channel.push_back(s / ((x.rows() - 1) * x.cols()));
    }
    double level = 0.0;
    for (double v : channel) level += v;
    total += level / channel.size();
  }
  return total / pa.size();
}

// Orientation histograms of forward differences on a grid x grid partition,
// bins on evenly spaced directions, then (h + eps) / |h + eps|.
Eigen::VectorXd embedding_reference(const Mat& img, int grid, int bins, double eps) {
  Eigen::VectorXd h = Eigen::VectorXd::Zero(grid * grid * bins);
  for (Eigen::Index r = 0; r + 1 < img.rows(); ++r) {
    for (Eigen::Index c = 0; c + 1 < img.cols(); ++c) {
      const double gx = img(r, c + 1) - img(r, c), gy = img(r + 1, c) - img(r, c);
      const int cell = static_cast<int>(r * grid / img.rows()) * grid + static_cast<int>(c * grid / img.cols());
      for (int b = 0; b < bins; ++b) {
        const double a = 2.0 * std::numbers::pi * b / bins;
        h(cell * bins + b) += std::max(0.0, gx * std::cos(a) + gy * std::sin(a));
      }
    }
  }
  h.array() += eps;
  return h / h.norm();
}

template <class F>
oracle::FdReport image_grad_check(const Mat& x0, F build, double tol = 1e-3) {
  Tape tape;
  Var x = tape.parameter(x0);
  tape.backward(build(tape, x));
  auto f = [&](const Mat& m) {
    Tape t;
    return t.item(build(t, t.constant(m)));
  };
  return oracle::finite_differences(f, x0, tape.grad(x), 1e-4, tol);
}

}  // namespace

TEST_CASE("robust rho closed forms") {
  const RobustParams p{1.0, 0.1};
  CHECK(robust_rho(0.0, p) == 0.0);
  CHECK(robust_rho(0.1, p) == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-14));
  CHECK(robust_rho(0.2, p) > robust_rho(0.1, p));
  for (int i = 0; i <= 1000; ++i) {
    const double x = i * 0.01;
    CHECK(std::abs(robust_rho(x, p) - (std::sqrt((x / 0.1) * (x / 0.1) + 1.0) - 1.0)) <= 1e-12);
  }
  CHECK(robust_rho(0.3, {2.0, 0.1}) == doctest::Approx(0.5 * 9.0));
  CHECK(robust_rho(0.3, {0.0, 0.1}) == doctest::Approx(std::log(0.5 * 9.0 + 1.0)));
  // Barron's general form
  const double a = -2.0, z = 3.0, b = std::abs(a - 2.0);
  CHECK(robust_rho(0.3, {a, 0.1}) == doctest::Approx(b / a * (std::pow(z * z / b + 1.0, a / 2.0) - 1.0)));
  CHECK_THROWS_AS(robust_rho(1.0, {1.0, 0.0}), DomainError);
  CHECK_THROWS_AS(robust_rho(1.0, {1.0, -1.0}), DomainError);
}

TEST_CASE("robust rho is monotone and its slope is right") {
  for (double alpha : {-1.0, 0.0, 0.5, 1.0, 2.0}) {
    const RobustParams p{alpha, 0.1};
    double prev = -1.0;
    for (int i = 0; i <= 200; ++i) {
      const double v = robust_rho(i * 0.05, p);
      CHECK(v >= prev);
      prev = v;
    }
    std::mt19937_64 rng(1);
    const Mat x0 = oracle::random_mat(rng, 2, 5, 0.01, 2.0);
    CHECK(image_grad_check(x0, [&](Tape& t, Var x) { return sum(t, robust_rho(t, x, p)); }, 1e-6).fraction() == 1.0);
  }
}

TEST_CASE("image distance examples") {
  std::mt19937_64 rng(2);
  const GrayImage img = random_image(rng, 16, 12);
  auto store = std::make_shared<FeatureStore>();
  store->probes[0] = {oracle::random_mat(rng, 12, 16, -1, 1), oracle::random_mat(rng, 12, 16, -1, 1)};
  for (auto kind : {DistanceBackend::pixel_robust, DistanceBackend::pyramid_gradient, DistanceBackend::external_features}) {
    ImageDistanceConfig cfg;
    cfg.kind = kind;
    cfg.features = store;
    CHECK(image_distance(cfg, img, img, 0) == 0.0);
  }

  ImageDistanceConfig pixel;
  pixel.kind = DistanceBackend::pixel_robust;
  CHECK(image_distance(pixel, GrayImage::filled(1, 1, 1.0), GrayImage::filled(1, 1, 0.0)) ==
        doctest::Approx(std::sqrt(101.0) - 1.0).epsilon(1e-14));
  CHECK(image_distance(pixel, GrayImage::filled(5, 3, 1.0), GrayImage::filled(5, 3, 0.0)) ==
        doctest::Approx(9.0499).epsilon(1e-5));

  // edge vs blurred edge
  Mat edge = Mat::Zero(16, 16);
  edge.rightCols(8).setOnes();
  Mat blur = edge;
  blur.col(7).setConstant(1.0 / 3.0);
  blur.col(8).setConstant(2.0 / 3.0);
  ImageDistanceConfig pyr;
  CHECK(pyr.kind == DistanceBackend::pyramid_gradient);
  CHECK(image_distance(pyr, GrayImage(edge), GrayImage(blur)) > 0.0);

  CHECK_THROWS_AS(image_distance(pixel, GrayImage::filled(4, 4, 0.0), GrayImage::filled(4, 5, 0.0)), DomainError);
  ImageDistanceConfig ext;
  ext.kind = DistanceBackend::external_features;
  CHECK_THROWS_AS(image_distance(ext, img, img, 0), ConfigError);
  ext.features = store;
  CHECK_THROWS_AS(image_distance(ext, img, img, 3), ConfigError);
}

TEST_CASE("image distance is symmetric and zero only for identical images") {
  std::mt19937_64 rng(3);
  for (auto kind : {DistanceBackend::pixel_robust, DistanceBackend::pyramid_gradient}) {
    ImageDistanceConfig cfg;
    cfg.kind = kind;
    for (int i = 0; i < 10; ++i) {
      const GrayImage a = random_image(rng, 13, 10), b = random_image(rng, 13, 10);
      CHECK(image_distance(cfg, a, b) == doctest::Approx(image_distance(cfg, b, a)).epsilon(1e-14));
      CHECK(image_distance(cfg, a, b) > 0.0);
      GrayImage c = a;
      c.pixels(4, 7) += 1e-3;
      CHECK(image_distance(cfg, a, c) > 0.0);
    }
  }
}

TEST_CASE("pyramid distance matches the reference definition") {
  std::mt19937_64 rng(4);
  for (int levels : {1, 2, 3, 6}) {
    for (auto [w, h] : {std::pair{16, 16}, std::pair{15, 9}, std::pair{1, 7}}) {
      const GrayImage a = random_image(rng, w, h), b = random_image(rng, w, h);
      ImageDistanceConfig cfg;
      cfg.pyramid_levels = levels;
      CHECK(image_distance(cfg, a, b) == doctest::Approx(pyramid_reference(b.pixels, a.pixels, levels)).epsilon(1e-12));
    }
  }
}

TEST_CASE("external features are the mean squared probe response difference") {
  std::mt19937_64 rng(5);
  const GrayImage a = random_image(rng, 8, 6), b = random_image(rng, 8, 6);
  auto store = std::make_shared<FeatureStore>();
  store->probes[2] = {oracle::random_mat(rng, 6, 8, -1, 1), oracle::random_mat(rng, 6, 8, -1, 1),
                      oracle::random_mat(rng, 6, 8, -1, 1)};
  ImageDistanceConfig cfg;
  cfg.kind = DistanceBackend::external_features;
  cfg.features = store;
  double expect = 0.0;
  for (const Mat& p : store->probes[2]) expect += std::pow((p.array() * (a.pixels - b.pixels).array()).sum(), 2) / 3.0;
  CHECK(image_distance(cfg, a, b, 2) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("image distance gradients match finite differences") {
  std::mt19937_64 rng(6);
  const GrayImage target = random_image(rng, 12, 10);
  const Mat render = oracle::random_mat(rng, 10, 12, 0.0, 1.0);
  auto store = std::make_shared<FeatureStore>();
  store->probes[0] = {oracle::random_mat(rng, 10, 12, -1, 1), oracle::random_mat(rng, 10, 12, -1, 1)};
  for (auto kind : {DistanceBackend::pixel_robust, DistanceBackend::pyramid_gradient, DistanceBackend::external_features}) {
    ImageDistanceConfig cfg;
    cfg.kind = kind;
    cfg.features = store;
    const auto r = image_grad_check(render, [&](Tape& t, Var x) { return image_distance(t, cfg, target, x, 0); });
    INFO(to_string(kind) << " worst " << r.worst);
    CHECK(r.fraction() == 1.0);
  }
}

TEST_CASE("cosine distance") {
  Eigen::VectorXd x(2), y(2);
  x << 1, 0;
  y << 0, 1;
  CHECK(cosine_distance(x, y) == doctest::Approx(1.0));
  CHECK(cosine_distance(x, x) == doctest::Approx(0.0));
  CHECK(cosine_distance(x, -x) == doctest::Approx(2.0));
  CHECK_THROWS_AS(cosine_distance(x, Eigen::VectorXd::Zero(2)), DomainError);

  std::mt19937_64 rng(7);
  const Mat a = oracle::random_mat(rng, 1, 9, -1, 1);
  const Mat b = oracle::random_mat(rng, 1, 9, -1, 1);
  CHECK(image_grad_check(a, [&](Tape& t, Var v) { return cosine_distance(t, v, t.constant(b)); }, 1e-6).fraction() == 1.0);
  CHECK(image_grad_check(b, [&](Tape& t, Var v) { return cosine_distance(t, t.constant(a), v); }, 1e-6).fraction() == 1.0);
}

TEST_CASE("orientation histogram embedding") {
  EmbeddingConfig cfg;
  const Eigen::VectorXd flat = global_embedding(cfg, GrayImage::filled(16, 16, 0.4));
  REQUIRE(flat.size() == 4 * 4 * 8);
  CHECK((flat.array() - 1.0 / std::sqrt(128.0)).abs().maxCoeff() < 1e-15);
  {
    Tape tape;
    Var img = tape.parameter(Mat::Constant(16, 16, 0.4));
    Var e = global_embedding(tape, cfg, img);
    tape.backward(sum(tape, mul(tape, e, tape.constant(Mat::Ones(1, 128)))));
    CHECK(tape.grad(img).isZero(0.0));
  }

  std::mt19937_64 rng(8);
  const GrayImage img = random_image(rng, 20, 14);
  const GrayImage copy = img;
  CHECK(global_embedding(cfg, img) == global_embedding(cfg, copy));
  CHECK(std::abs(cosine_distance(global_embedding(cfg, img), global_embedding(cfg, copy))) < 1e-15);
  CHECK((global_embedding(cfg, img) - embedding_reference(img.pixels, 4, 8, 1e-6)).norm() < 1e-12);

  Mat vertical(16, 16), horizontal(16, 16);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) {
      vertical(r, c) = (c / 2) % 2;
      horizontal(r, c) = (r / 2) % 2;
    }
  CHECK(cosine_distance(global_embedding(cfg, GrayImage(vertical)), global_embedding(cfg, GrayImage(horizontal))) >
        0.5);

  const Mat x0 = oracle::random_mat(rng, 12, 12, 0, 1);
  const Mat w = oracle::random_mat(rng, 1, 128, -1, 1);
  const auto r = image_grad_check(x0, [&](Tape& t, Var x) {
    return sum(t, mul(t, global_embedding(t, cfg, x), t.constant(w)));
  });
  INFO("worst " << r.worst);
  CHECK(r.fraction() >= 0.99);
}

TEST_CASE("external embedding reads probe responses") {
  std::mt19937_64 rng(9);
  auto store = std::make_shared<FeatureStore>();
  store->probes[1] = {oracle::random_mat(rng, 5, 5, -1, 1), oracle::random_mat(rng, 5, 5, -1, 1)};
  EmbeddingConfig cfg;
  cfg.kind = EmbeddingKind::external_embedding;
  cfg.features = store;
  const GrayImage img = random_image(rng, 5, 5);
  const Eigen::VectorXd e = global_embedding(cfg, img, 1);
  REQUIRE(e.size() == 2);
  CHECK(e(1) == doctest::Approx((store->probes[1][1].array() * img.pixels.array()).sum()));
}

TEST_CASE("backend names round-trip") {
  for (auto kind : {DistanceBackend::pixel_robust, DistanceBackend::pyramid_gradient, DistanceBackend::external_features}) {
    CHECK(distance_backend_from_string(to_string(kind)) == kind);
  }
  CHECK(distance_backend_from_string("external") == DistanceBackend::external_features);
  CHECK(embedding_kind_from_string("orientation_histogram") == EmbeddingKind::orientation_histogram);
  CHECK_THROWS_AS(distance_backend_from_string("lpips"), ConfigError);
}

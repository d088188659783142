#include <doctest.h>

#include <cmath>
#include <random>

#include "lsor/analysis.hpp"
#include "oracles.hpp"

using namespace lsor;

namespace {

void randomize_grid(SomGrid& grid, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  auto reps = grid.representations().values_mut();
  for (double& v : reps) v = dist(rng);
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed, double lo = -2.0,
                               double hi = 2.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("similarity_grid") {
  SUBCASE("equal distances return the uniform grid") {
    SomGrid grid(2, 2, 2);
    auto reps = grid.representations().values_mut();
    // all representations at distance 1 from the origin
    const double vals[] = {1, 0, -1, 0, 0, 1, 0, -1};
    std::copy(std::begin(vals), std::end(vals), reps.begin());
    const auto rho = similarity_grid(std::vector<double>{0.0, 0.0}, grid);
    for (double v : rho.rho) CHECK(v == doctest::Approx(0.25));
  }
  SUBCASE("exact match carries the largest mass") {
    SomGrid grid(2, 2, 2);
    auto reps = grid.representations().values_mut();
    const double vals[] = {0.3, -0.2, 5, 5, -6, 2, 4, -3};
    std::copy(std::begin(vals), std::end(vals), reps.begin());
    const auto rho = similarity_grid(std::vector<double>{0.3, -0.2}, grid);
    CHECK(rho.at(0, 0) > rho.at(0, 1));
    CHECK(rho.at(0, 0) > rho.at(1, 0));
    CHECK(rho.at(0, 0) > rho.at(1, 1));
  }
  SUBCASE("matches the direct-formula oracle on random draws") {
    SomGrid grid(4, 8, 6);
    randomize_grid(grid, 31);
    auto reps = grid.representations().values();
    for (std::uint64_t s = 0; s < 100; ++s) {
      const auto z = random_vec(6, 200 + s);
      const auto got = similarity_grid(z, grid);
      // oracle: distances, population std, softmax, straight from the formula
      std::vector<double> d(32);
      double mean = 0.0;
      for (std::size_t c = 0; c < 32; ++c) {
        double acc = 0.0;
        for (std::size_t j = 0; j < 6; ++j) {
          acc += (z[j] - reps[c * 6 + j]) * (z[j] - reps[c * 6 + j]);
        }
        d[c] = acc;
        mean += acc;
      }
      mean /= 32.0;
      double var = 0.0;
      for (double v : d) var += (v - mean) * (v - mean);
      const double gamma = std::sqrt(var / 32.0);
      double z_norm = 0.0;
      std::vector<double> expect(32);
      for (std::size_t c = 0; c < 32; ++c) {
        expect[c] = std::exp(-d[c] / gamma);
        z_norm += expect[c];
      }
      double total = 0.0;
      for (std::size_t c = 0; c < 32; ++c) {
        CHECK(std::abs(got.rho[c] - expect[c] / z_norm) <= 1e-9);
        total += got.rho[c];
      }
      CHECK(std::abs(total - 1.0) <= 1e-9);
      CHECK(got.gamma == doctest::Approx(gamma).epsilon(1e-12));
    }
  }
}

TEST_CASE("group_average") {
  SimilarityGrid uniform{1, 4, {0.25, 0.25, 0.25, 0.25}, 1.0};
  SimilarityGrid onehot{1, 4, {1.0, 0.0, 0.0, 0.0}, 2.0};
  SUBCASE("single member group equals the member") {
    const auto avg = group_average({uniform, onehot}, {1});
    CHECK(avg.rho == onehot.rho);
  }
  SUBCASE("two identical grids average to themselves") {
    const auto avg = group_average({uniform, uniform}, {0, 1});
    CHECK(avg.rho == uniform.rho);
  }
  SUBCASE("uniform and one-hot blend halfway and still sum to one") {
    const auto avg = group_average({uniform, onehot}, {0, 1});
    CHECK(avg.rho[0] == doctest::Approx(0.625));
    CHECK(avg.rho[1] == doctest::Approx(0.125));
    double total = 0.0;
    for (double v : avg.rho) total += v;
    CHECK(total == doctest::Approx(1.0));
  }
  SUBCASE("empty group is an error") {
    CHECK_THROWS_AS(group_average({uniform}, {}), std::invalid_argument);
  }
  SUBCASE("expected column of a one-hot at column 3") {
    SimilarityGrid g{1, 4, {0.0, 0.0, 0.0, 1.0}, 1.0};
    CHECK(expected_column(g) == doctest::Approx(3.0));
  }
}

TEST_CASE("distance_correlation") {
  SUBCASE("dcor(X, X) = 1") {
    const auto x = random_vec(40, 50);
    CHECK(distance_correlation(x, 40, 1, x, 1) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("constant Y returns 0 through the guard") {
    const auto x = random_vec(30, 51);
    const std::vector<double> y(30, 3.25);
    CHECK(distance_correlation(x, 30, 1, y, 1) == 0.0);
  }
  SUBCASE("independent samples score low") {
    const auto x = random_vec(500, 52, 0.0, 1.0);
    const auto y = random_vec(500, 53, 0.0, 1.0);
    CHECK(distance_correlation(x, 500, 1, y, 1) < 0.15);
  }
  SUBCASE("matches the brute-force double-centering oracle") {
    for (std::uint64_t s = 0; s < 5; ++s) {
      const std::size_t n = 20 + 5 * s;
      const auto x = random_vec(n * 2, 60 + s);
      const auto y = random_vec(n, 70 + s);
      const double got = distance_correlation(x, n, 2, y, 1);
      const double expect = oracles::dcor_brute_force(x, n, 2, y, 1);
      CHECK(std::abs(got - expect) <= 1e-10);
    }
  }
  SUBCASE("invariant under orthogonal transforms and translation of X") {
    const std::size_t n = 60;
    const auto x = random_vec(n * 2, 80);
    const auto y = random_vec(n, 81);
    const double base = distance_correlation(x, n, 2, y, 1);
    const double theta = 0.7;
    std::vector<double> moved(n * 2);
    for (std::size_t i = 0; i < n; ++i) {
      const double a = x[i * 2], b = x[i * 2 + 1];
      moved[i * 2] = std::cos(theta) * a - std::sin(theta) * b + 11.0;
      moved[i * 2 + 1] = std::sin(theta) * a + std::cos(theta) * b - 4.0;
    }
    CHECK(distance_correlation(moved, n, 2, y, 1) == doctest::Approx(base).epsilon(1e-10));
  }
  SUBCASE("sample count mismatch is an error") {
    const auto x = random_vec(10, 82);
    const auto y = random_vec(8, 83);
    CHECK_THROWS_AS(distance_correlation(x, 10, 1, y, 1), std::invalid_argument);
  }
}

TEST_CASE("pca_from_grid") {
  SUBCASE("rank-2 representations reconstruct exactly from two components") {
    SomGrid grid(4, 4, 5);
    auto reps = grid.representations().values_mut();
    std::mt19937_64 rng(90);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    // representations live in the span of two fixed directions
    const std::vector<double> u{1, 0, 1, 0, 1};
    const std::vector<double> v{0, 1, 0, -1, 0};
    for (std::size_t c = 0; c < 16; ++c) {
      const double a = dist(rng), b = dist(rng);
      for (std::size_t j = 0; j < 5; ++j) reps[c * 5 + j] = a * u[j] + b * v[j];
    }
    const PcaBasis basis = pca_from_grid(grid);
    CHECK(basis.eigenvalues[0] >= basis.eigenvalues[1]);
    for (std::size_t c = 0; c < 16; ++c) {
      const auto p = basis.project_point(grid.cell(grid.from_linear(c)));
      for (std::size_t j = 0; j < 5; ++j) {
        const double rebuilt =
            basis.mean[j] + p[0] * basis.axes[0][j] + p[1] * basis.axes[1][j];
        CHECK(std::abs(rebuilt - reps[c * 5 + j]) <= 1e-9);
      }
    }
  }
  SUBCASE("matches the power-iteration oracle on a random 4x8 grid in 8 dims") {
    SomGrid grid(4, 8, 8);
    randomize_grid(grid, 91);
    const PcaBasis basis = pca_from_grid(grid);
    // oracle: covariance then power iteration with deflation
    auto reps = grid.representations().values();
    std::vector<double> mean(8, 0.0);
    for (std::size_t c = 0; c < 32; ++c)
      for (std::size_t j = 0; j < 8; ++j) mean[j] += reps[c * 8 + j];
    for (double& v : mean) v /= 32.0;
    std::vector<double> cov(64, 0.0);
    for (std::size_t c = 0; c < 32; ++c) {
      for (std::size_t i = 0; i < 8; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
          cov[i * 8 + j] += (reps[c * 8 + i] - mean[i]) * (reps[c * 8 + j] - mean[j]) / 32.0;
        }
      }
    }
    const auto pairs = oracles::top_eigenpairs(cov, 8, 2, 92);
    for (std::size_t axis = 0; axis < 2; ++axis) {
      CHECK(basis.eigenvalues[axis] == doctest::Approx(pairs[axis].value).epsilon(1e-8));
      // compare projections up to sign
      double dot = 0.0;
      for (std::size_t j = 0; j < 8; ++j) dot += basis.axes[axis][j] * pairs[axis].vector[j];
      const double sign = dot >= 0.0 ? 1.0 : -1.0;
      for (std::size_t j = 0; j < 8; ++j) {
        CHECK(std::abs(basis.axes[axis][j] - sign * pairs[axis].vector[j]) <= 1e-8);
      }
    }
  }
  SUBCASE("sign convention: first nonzero loading is positive") {
    SomGrid grid(2, 4, 3);
    randomize_grid(grid, 93);
    const PcaBasis basis = pca_from_grid(grid);
    for (std::size_t axis = 0; axis < 2; ++axis) {
      for (double v : basis.axes[axis]) {
        if (std::abs(v) > 1e-12) {
          CHECK(v > 0.0);
          break;
        }
      }
    }
  }
  SUBCASE("rank-deficient grids are an error") {
    SomGrid grid(2, 2, 3);
    auto reps = grid.representations().values_mut();
    // all representations on a single line -> one nonzero eigenvalue
    for (std::size_t c = 0; c < 4; ++c) {
      reps[c * 3] = static_cast<double>(c);
      reps[c * 3 + 1] = 2.0 * static_cast<double>(c);
      reps[c * 3 + 2] = -static_cast<double>(c);
    }
    CHECK_THROWS_AS(pca_from_grid(grid), std::invalid_argument);
  }
}

TEST_CASE("classification metrics") {
  SUBCASE("perfect scores") {
    const std::vector<double> scores{0.9, 0.8, 0.1, 0.2};
    const std::vector<std::uint8_t> labels{1, 1, 0, 0};
    const auto [bacc, auc] = classification_metrics(scores, labels);
    CHECK(bacc == doctest::Approx(1.0));
    CHECK(auc == doctest::Approx(1.0));
  }
  SUBCASE("all predicted one class on balanced labels gives bacc 0.5") {
    const std::vector<double> scores{0.9, 0.9, 0.9, 0.9};
    const std::vector<std::uint8_t> labels{1, 1, 0, 0};
    const auto [bacc, auc] = classification_metrics(scores, labels);
    CHECK(bacc == doctest::Approx(0.5));
    CHECK(auc == doctest::Approx(0.5));  // all tied
  }
  SUBCASE("worked AUC example: 3 of 4 concordant pairs") {
    const std::vector<double> scores{0.1, 0.4, 0.35, 0.8};
    const std::vector<std::uint8_t> labels{0, 0, 1, 1};
    const auto [bacc, auc] = classification_metrics(scores, labels);
    CHECK(auc == doctest::Approx(0.75));
  }
  SUBCASE("one class absent is an error") {
    const std::vector<double> scores{0.2, 0.4};
    const std::vector<std::uint8_t> labels{1, 1};
    CHECK_THROWS_AS(classification_metrics(scores, labels), std::invalid_argument);
  }
  SUBCASE("matches exhaustive pair counting, ties included") {
    std::mt19937_64 rng(95);
    std::uniform_real_distribution<double> score_dist(0.0, 1.0);
    std::uniform_int_distribution<int> quantize(0, 9);
    std::uniform_int_distribution<int> label_dist(0, 1);
    for (int rep = 0; rep < 10; ++rep) {
      const std::size_t n = 50 + static_cast<std::size_t>(rep) * 15;
      std::vector<double> scores(n);
      std::vector<std::uint8_t> labels(n);
      bool has0 = false, has1 = false;
      for (std::size_t i = 0; i < n; ++i) {
        scores[i] = quantize(rng) / 10.0;  // deliberate ties
        labels[i] = static_cast<std::uint8_t>(label_dist(rng));
        (labels[i] ? has1 : has0) = true;
      }
      if (!has0 || !has1) continue;
      const auto [bacc, auc] = classification_metrics(scores, labels);
      CHECK(auc == doctest::Approx(oracles::auc_by_pair_counting(scores, labels)).epsilon(1e-12));
    }
  }
  SUBCASE("AUC is invariant under strictly monotone transforms") {
    const auto raw = random_vec(100, 96, 0.0, 1.0);
    std::vector<std::uint8_t> labels(100);
    for (std::size_t i = 0; i < 100; ++i) labels[i] = raw[i] + 0.2 * random_vec(1, i)[0] > 0.6;
    bool has0 = false, has1 = false;
    for (auto l : labels) (l ? has1 : has0) = true;
    REQUIRE((has0 && has1));
    const auto [b1, a1] = classification_metrics(raw, labels);
    std::vector<double> transformed(100);
    for (std::size_t i = 0; i < 100; ++i) transformed[i] = std::exp(3.0 * raw[i]);
    const auto [b2, a2] = classification_metrics(transformed, labels);
    CHECK(a1 == doctest::Approx(a2).epsilon(1e-12));
  }
}

TEST_CASE("regression metrics") {
  const std::vector<double> targets{1.0, 2.0, 3.0, 4.0};
  SUBCASE("perfect predictions") {
    const auto [r2, rmse] = regression_metrics(targets, targets);
    CHECK(r2 == doctest::Approx(1.0));
    CHECK(rmse == doctest::Approx(0.0));
  }
  SUBCASE("predicting the mean gives r2 = 0") {
    const std::vector<double> preds(4, 2.5);
    const auto [r2, rmse] = regression_metrics(preds, targets);
    CHECK(r2 == doctest::Approx(0.0));
  }
  SUBCASE("constant offset c gives rmse = |c|") {
    std::vector<double> preds = targets;
    for (double& p : preds) p += 0.75;
    const auto [r2, rmse] = regression_metrics(preds, targets);
    CHECK(rmse == doctest::Approx(0.75));
  }
  SUBCASE("zero-variance targets are an error") {
    const std::vector<double> constant(4, 1.0);
    CHECK_THROWS_AS(regression_metrics(targets, constant), std::invalid_argument);
  }
}

TEST_CASE("probes") {
  SUBCASE("linearly separable latents reach auc >= 0.95") {
    std::mt19937_64 rng(101);
    std::normal_distribution<double> noise(0.0, 0.3);
    const std::size_t n = 240, d = 4;
    std::vector<double> x(n * d);
    std::vector<double> y(n);
    std::vector<std::uint64_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double cls = i % 2 ? 1.0 : 0.0;
      y[i] = cls;
      ids[i] = i;  // one sample per subject
      for (std::size_t j = 0; j < d; ++j) x[i * d + j] = noise(rng) + (j == 0 ? 3.0 * cls : 0.0);
    }
    const auto cv = probe_cross_validate(x, d, y, ids, ProbeTask::Classification, 5, 7);
    CHECK(cv.mean.auc >= 0.95);
  }
  SUBCASE("regressing a latent coordinate reaches r2 >= 0.95") {
    std::mt19937_64 rng(102);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    const std::size_t n = 240, d = 5;
    std::vector<double> x(n * d);
    std::vector<double> y(n);
    std::vector<std::uint64_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) x[i * d + j] = dist(rng);
      y[i] = x[i * d + 2];
      ids[i] = i;
    }
    const auto cv = probe_cross_validate(x, d, y, ids, ProbeTask::Regression, 5, 7);
    CHECK(cv.mean.r2 >= 0.95);
  }
  SUBCASE("random labels sit near auc 0.5") {
    std::mt19937_64 rng(103);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::uniform_int_distribution<int> label(0, 1);
    const std::size_t n = 400, d = 6;
    std::vector<double> x(n * d);
    std::vector<double> y(n);
    std::vector<std::uint64_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) x[i * d + j] = dist(rng);
      y[i] = label(rng);
      ids[i] = i;
    }
    const auto cv = probe_cross_validate(x, d, y, ids, ProbeTask::Classification, 5, 7);
    CHECK(cv.mean.auc >= 0.4);
    CHECK(cv.mean.auc <= 0.6);
  }
  SUBCASE("single-class training split is an error") {
    ProbeSplit split;
    split.dim = 2;
    split.x_train = {1, 2, 3, 4};
    split.y_train = {1, 1};
    split.x_test = {0, 0};
    split.y_test = {0};
    CHECK_THROWS_AS(train_probe(split, ProbeTask::Classification, 1), std::invalid_argument);
  }
}

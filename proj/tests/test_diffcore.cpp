#include <doctest.h>

#include <cmath>
#include <random>

#include "lsor/adam.hpp"
#include "lsor/autodiff.hpp"
#include "lsor/tensor.hpp"
#include "oracles.hpp"

using namespace lsor;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = dist(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

}  // namespace

TEST_CASE("tensor invariants") {
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.ndim() == 2);
  CHECK_THROWS(Tensor({2, 2}, {1.0}));
  CHECK(Tensor::scalar(4.0).value() == 4.0);
  CHECK_THROWS(t.value());  // non-scalar
}

TEST_CASE("forward values of primitives") {
  Tape tape;
  SUBCASE("matmul shape rule and values") {
    Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor b({3, 1}, {1, 0, -1});
    Tensor c = tape.matmul(a, b);
    CHECK(c.shape() == Shape{2, 1});
    CHECK(c.at(0) == doctest::Approx(1 - 3));
    CHECK(c.at(1) == doctest::Approx(4 - 6));
  }
  SUBCASE("cosine of identical unit vectors is 1") {
    Tensor a({2}, {1, 0});
    CHECK(tape.cosine(a, a).value() == doctest::Approx(1.0));
  }
  SUBCASE("softmax of zeros is uniform") {
    Tensor x({4}, {0, 0, 0, 0});
    Tensor s = tape.softmax(x);
    for (std::size_t i = 0; i < 4; ++i) CHECK(s.at(i) == doctest::Approx(0.25));
  }
  SUBCASE("shape mismatch names the primitive and both shapes") {
    Tensor a({2, 3}, std::vector<double>(6, 0.0));
    Tensor b({3, 2}, std::vector<double>(6, 0.0));
    CHECK_THROWS_WITH_AS(tape.add(a, b), doctest::Contains("add"), std::invalid_argument);
    try {
      tape.add(a, b);
    } catch (const std::invalid_argument& e) {
      const std::string msg = e.what();
      CHECK(msg.find("2x3") != std::string::npos);
      CHECK(msg.find("3x2") != std::string::npos);
    }
  }
}

TEST_CASE("backward basics") {
  SUBCASE("d sum(x*x)/dx = 2x") {
    Tape tape;
    Tensor x({3}, {1, 2, 3}, true);
    Tensor loss = tape.sum(tape.mul(x, x));
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2));
    CHECK(x.grad()[1] == doctest::Approx(4));
    CHECK(x.grad()[2] == doctest::Approx(6));
  }
  SUBCASE("non-scalar root is an error") {
    Tape tape;
    Tensor x({3}, {1, 2, 3}, true);
    Tensor y = tape.mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
  }
  SUBCASE("gradient accumulation across branches") {
    Tape tape;
    Tensor x({2}, {3, -1}, true);
    // x used in three branches: sum(x) + sum(x) + sum(x*x)
    Tensor loss = tape.add(tape.add(tape.sum(x), tape.sum(x)), tape.sum(tape.mul(x, x)));
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(2.0 + 2.0 * 3.0));
    CHECK(x.grad()[1] == doctest::Approx(2.0 + 2.0 * -1.0));
  }
}

TEST_CASE("stop_gradient contract") {
  SUBCASE("forward identity") {
    Tape tape;
    Tensor x({3}, {1.5, -2, 0.25}, true);
    Tensor y = tape.stop_gradient(x);
    for (std::size_t i = 0; i < 3; ++i) CHECK(y.at(i) == x.at(i));
  }
  SUBCASE("sum(sg(x)) gives zero grads") {
    Tape tape;
    Tensor x({3}, {1, 2, 3}, true);
    Tensor loss = tape.sum(tape.stop_gradient(x));
    tape.backward(loss);
    for (double g : x.grad()) CHECK(g == 0.0);
  }
  SUBCASE("|sg(z) - g|^2 routes gradient to g only") {
    Tape tape;
    Tensor z({2}, {1, 2}, true);
    Tensor g({2}, {0.5, 0.25}, true);
    Tensor loss = tape.squared_norm(tape.sub(tape.stop_gradient(z), g));
    tape.backward(loss);
    CHECK(z.grad()[0] == 0.0);
    CHECK(z.grad()[1] == 0.0);
    CHECK(g.grad()[0] == doctest::Approx(2.0 * (0.5 - 1.0)));
    CHECK(g.grad()[1] == doctest::Approx(2.0 * (0.25 - 2.0)));
  }
  SUBCASE("|z - sg(g)|^2 routes gradient to z only") {
    Tape tape;
    Tensor z({2}, {1, 2}, true);
    Tensor g({2}, {0.5, 0.25}, true);
    Tensor loss = tape.squared_norm(tape.sub(z, tape.stop_gradient(g)));
    tape.backward(loss);
    CHECK(g.grad()[0] == 0.0);
    CHECK(g.grad()[1] == 0.0);
    CHECK(z.grad()[0] == doctest::Approx(2.0 * (1.0 - 0.5)));
    CHECK(z.grad()[1] == doctest::Approx(2.0 * (2.0 - 0.25)));
  }
}

TEST_CASE("finite differences cover every primitive") {
  std::mt19937_64 rng(11);
  Tensor a = random_tensor({3, 4}, rng, true);
  Tensor w = random_tensor({4, 5}, rng, true);
  Tensor bias = random_tensor({5}, rng, true);
  Tensor colv = random_tensor({3}, rng, true);
  Tensor b2 = random_tensor({3, 4}, rng, true);
  Tensor codes = random_tensor({6, 5}, rng, true);
  Tensor flat1 = random_tensor({7}, rng, true);
  Tensor flat2 = random_tensor({7}, rng, true);

  auto build = [&](Tape& tape) {
    Tensor h = tape.leaky_relu(tape.add_rowvec(tape.matmul(a, w), bias), 0.2);
    Tensor hc = tape.mul_colvec(h, colv);
    Tensor d = tape.pairwise_sqdist(hc, codes);
    Tensor part1 = tape.mean(tape.softplus(d));
    Tensor part2 = tape.squared_norm(tape.sub(a, b2));
    Tensor part3 = tape.l1_norm(tape.mul(a, b2));
    Tensor part4 = tape.cosine(flat1, flat2);
    Tensor part5 = tape.sum(tape.softmax(flat1));
    Tensor part6 = tape.mean(tape.exp(tape.scale(flat2, 0.3)));
    Tensor part7 = tape.sum(tape.gather_rows(codes, {1, 3, 1}));
    Tensor part8 = tape.sum(tape.row_cosine(hc, tape.gather_rows(codes, {0, 2, 4})));
    Tensor total = tape.add(part1, tape.scale(part2, 0.5));
    total = tape.add(total, part3);
    total = tape.add(total, tape.add_scalar(part4, 0.1));
    total = tape.add(total, part5);
    total = tape.add(total, part6);
    total = tape.add(total, tape.scale(part7, 0.25));
    total = tape.add(total, part8);
    return total;
  };

  Tape tape;
  Tensor loss = build(tape);
  tape.backward(loss);
  const double worst = oracles::finite_diff_worst_ratio(
      {a, w, bias, colv, b2, codes, flat1, flat2}, [&]() {
        Tape t;
        return build(t).value();
      });
  CHECK(worst <= 1.0);
}

TEST_CASE("forward determinism: same seed, same tape, same bits") {
  auto run = [](std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Tensor a = random_tensor({4, 4}, rng, true);
    Tensor b = random_tensor({4, 4}, rng, true);
    Tape tape;
    Tensor loss = tape.mean(tape.softplus(tape.matmul(a, tape.leaky_relu(b, 0.2))));
    tape.backward(loss);
    return std::make_pair(loss.value(), std::vector<double>(a.grad().begin(), a.grad().end()));
  };
  auto [v1, g1] = run(99);
  auto [v2, g2] = run(99);
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}

TEST_CASE("adam optimizer") {
  SUBCASE("first step moves by -lr * sign(gradient)") {
    Tensor p = Tensor::scalar(1.0, true);
    AdamOptimizer opt(AdamConfig{1e-2, 0.9, 0.999, 1e-8, 0.0});
    opt.add_param("p", p);
    p.grad_mut()[0] = 3.7;
    opt.step();
    CHECK(p.value() == doctest::Approx(1.0 - 1e-2).epsilon(1e-6));
    CHECK_FALSE(p.has_grad());  // grads cleared
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensor p = Tensor::scalar(2.5, true);
    AdamOptimizer opt(AdamConfig{1e-2, 0.9, 0.999, 1e-8, 0.0});
    opt.add_param("p", p);
    p.grad_mut()[0] = 0.0;
    opt.step();
    CHECK(p.value() == 2.5);
  }
  SUBCASE("two steps with constant gradient match the scalar recurrence") {
    const double lr = 5e-4, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 0.3;
    Tensor p = Tensor::scalar(0.7, true);
    AdamOptimizer opt(AdamConfig{lr, b1, b2, eps, 0.0});
    opt.add_param("p", p);
    double m = 0.0, v = 0.0, theta = 0.7;
    for (int t = 1; t <= 2; ++t) {
      p.grad_mut()[0] = g;
      opt.step();
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      const double m_hat = m / (1 - std::pow(b1, t));
      const double v_hat = v / (1 - std::pow(b2, t));
      theta -= lr * m_hat / (std::sqrt(v_hat) + eps);
      CHECK(p.value() == doctest::Approx(theta).epsilon(1e-12));
    }
  }
  SUBCASE("decoupled weight decay shrinks the parameter") {
    const double lr = 1e-2, wd = 0.1;
    Tensor p = Tensor::scalar(1.0, true);
    AdamOptimizer opt(AdamConfig{lr, 0.9, 0.999, 1e-8, wd});
    opt.add_param("p", p);
    p.grad_mut()[0] = 1.0;
    opt.step();
    // decay applied before the gradient term: 1 - lr*wd - lr*sign(g)
    CHECK(p.value() == doctest::Approx(1.0 - lr * wd - lr).epsilon(1e-6));
  }
  SUBCASE("missing gradient raises an error naming the parameter") {
    Tensor p = Tensor::scalar(1.0, true);
    Tensor q = Tensor::scalar(2.0, true);
    AdamOptimizer opt;
    opt.add_param("alpha", p);
    opt.add_param("beta", q);
    p.grad_mut()[0] = 1.0;
    CHECK_THROWS_WITH_AS(opt.step(), doctest::Contains("beta"), std::runtime_error);
  }
}

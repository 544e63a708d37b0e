#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "stpp/rng.hpp"
#include "stpp/tensor.hpp"

using namespace stpp;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, bool requires_grad = false,
                     double lo = -2.0, double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data()) v = u(rng);
  return t;
}

}  // namespace

TEST_CASE("matmul identity") {
  Rng rng = make_rng(1);
  Tensor a = random_tensor({3, 3}, rng);
  Tensor eye = Tensor::zeros({3, 3});
  for (int i = 0; i < 3; ++i) eye.data()[i * 3 + i] = 1.0;
  Tensor out = matmul(eye, a);
  for (std::size_t i = 0; i < 9; ++i) CHECK(out.data()[i] == doctest::Approx(a.data()[i]));
}

TEST_CASE("matmul shape mismatch reports dimensions") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("(2x3)"), std::invalid_argument);
}

TEST_CASE("softmax uniform on constant rows, rows sum to one") {
  Tensor x = Tensor::row_vector({0.0, 0.0, 0.0});
  Tensor y = softmax(x, 1);
  for (int j = 0; j < 3; ++j) CHECK(y.data()[j] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

  Rng rng = make_rng(2);
  Tensor r = random_tensor({5, 7}, rng);
  Tensor s = softmax(r, 1);
  for (int i = 0; i < 5; ++i) {
    double total = 0.0;
    for (int j = 0; j < 7; ++j) {
      CHECK(s.at(i, j) > 0.0);
      total += s.at(i, j);
    }
    CHECK(std::fabs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("softmax rejects empty axis") {
  Tensor x = Tensor::zeros({0, 3});
  CHECK_THROWS_AS(softmax(x, 0), std::invalid_argument);
}

TEST_CASE("relu definition") {
  Tensor y = relu(Tensor::row_vector({-1.0, 2.0}));
  CHECK(y.data()[0] == 0.0);
  CHECK(y.data()[1] == 2.0);
}

TEST_CASE("backward of x squared") {
  Tensor x = Tensor::from({1, 1}, {3.0}, true);
  Tensor loss = sum(mul(x, x));
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("sum of softmax has zero gradient") {
  Rng rng = make_rng(3);
  Tensor x = random_tensor({1, 5}, rng, true);
  Tensor loss = sum(softmax(x, 1));
  backward(loss);
  for (double g : x.grad()) CHECK(std::fabs(g) <= 1e-12);
}

TEST_CASE("backward rejects non-scalar loss and empty graph") {
  Tensor x = Tensor::zeros({2, 2}, true);
  CHECK_THROWS_AS(backward(add(x, x)), std::invalid_argument);
  Tensor leaf = Tensor::from({1, 1}, {1.0}, true);
  CHECK_THROWS_AS(backward(leaf), std::invalid_argument);
}

TEST_CASE("double backward accumulates exactly additively") {
  Rng rng = make_rng(4);
  Tensor w = random_tensor({3, 3}, rng, true);
  Tensor x = random_tensor({2, 3}, rng);
  Tensor loss = mse(matmul(x, w), Tensor::zeros({2, 3}));
  backward(loss);
  std::vector<double> once = w.grad();
  backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i)
    CHECK(w.grad()[i] == doctest::Approx(2.0 * once[i]).epsilon(1e-15));
  w.zero_grad();
  for (double g : w.grad()) CHECK(g == 0.0);

  // single-contribution graph: doubling is bitwise exact
  Tensor v = random_tensor({2, 2}, rng, true);
  Tensor l2 = sum(v);
  backward(l2);
  std::vector<double> first = v.grad();
  backward(l2);
  for (std::size_t i = 0; i < first.size(); ++i) CHECK(v.grad()[i] == 2.0 * first[i]);
}

TEST_CASE("mse(Wx, y) gradient matches central differences") {
  Rng rng = make_rng(5);
  Tensor w = random_tensor({4, 3}, rng);
  Tensor x = random_tensor({2, 4}, rng);
  Tensor y = random_tensor({2, 3}, rng);
  const double err = grad_check([&](const Tensor& t) { return mse(matmul(x, t), y); }, w, 1e-5);
  CHECK(err <= 1e-4);
}

TEST_CASE("grad_check on linear and quadratic functions") {
  Rng rng = make_rng(6);
  Tensor p = random_tensor({1, 6}, rng);
  CHECK(grad_check([](const Tensor& t) { return sum(t); }, p, 1e-5) <= 1e-10);

  Tensor q = Tensor::row_vector({1.0, 2.0});
  Tensor qg = q.detached_copy();
  qg.impl()->requires_grad = true;
  qg.impl()->grad.assign(2, 0.0);
  Tensor loss = sum(mul(qg, qg));
  backward(loss);
  CHECK(qg.grad()[0] == doctest::Approx(2.0));
  CHECK(qg.grad()[1] == doctest::Approx(4.0));
  CHECK(grad_check([](const Tensor& t) { return sum(mul(t, t)); }, q, 1e-5) <= 1e-6);
}

// Jacobian-vector products of every primitive against central differences,
// 100 random instances with entries in [-2, 2].
TEST_CASE("primitive gradients match finite differences") {
  Rng rng = make_rng(7);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 3);
    const int m = 2 + static_cast<int>(rng() % 3);
    Tensor a = random_tensor({n, m}, rng);
    Tensor b = random_tensor({n, m}, rng);
    Tensor w = random_tensor({m, m}, rng);
    Tensor rv = random_tensor({1, m}, rng);
    Tensor weights = random_tensor({n, m}, rng);  // makes reductions non-uniform
    auto weighted = [&](Tensor t) { return sum(mul(t, weights)); };

    const int which = trial % 14;
    double err = 0.0;
    switch (which) {
      case 0:
        err = grad_check([&](const Tensor& t) { return weighted(matmul(t, w)); }, a, 1e-5);
        break;
      case 1: {
        Tensor lhs = random_tensor({n, n}, rng);
        err = grad_check([&](const Tensor& t) { return weighted(matmul(lhs, t)); }, a, 1e-5);
        break;
      }
      case 2: {
        Tensor wt = random_tensor({m, n}, rng);
        err = grad_check([&](const Tensor& t) { return sum(mul(transpose(t), wt)); }, a, 1e-5);
        break;
      }
      case 3:
        err = grad_check([&](const Tensor& t) { return weighted(add(t, b)); }, a, 1e-5);
        break;
      case 4:
        err = grad_check([&](const Tensor& t) { return weighted(sub(b, t)); }, a, 1e-5);
        break;
      case 5:
        err = grad_check([&](const Tensor& t) { return weighted(mul(t, b)); }, a, 1e-5);
        break;
      case 6:
        err = grad_check([&](const Tensor& t) { return weighted(add_rowvec(a, t)); }, rv, 1e-5);
        break;
      case 7:
        err = grad_check([&](const Tensor& t) { return weighted(relu(t)); }, a, 1e-5);
        break;
      case 8:
        err = grad_check([&](const Tensor& t) { return weighted(softmax(t, trial % 2)); }, a,
                         1e-5);
        break;
      case 9: {
        Tensor sq = random_tensor({n, n}, rng);
        Tensor wsq = random_tensor({n, n}, rng);
        err = grad_check(
            [&](const Tensor& t) { return sum(mul(causal_row_softmax(t), wsq)); }, sq, 1e-5);
        break;
      }
      case 10: {
        Tensor wide = random_tensor({n, 2 * m}, rng);
        err = grad_check([&](const Tensor& t) { return sum(mul(concat(t, b, 1), wide)); }, a,
                         1e-5);
        break;
      }
      case 11: {
        std::vector<int> ids{0, n - 1, 0};
        Tensor wg = random_tensor({3, m}, rng);
        err = grad_check([&](const Tensor& t) { return sum(mul(gather_rows(t, ids), wg)); }, a,
                         1e-5);
        break;
      }
      case 12: {
        Tensor alpha = random_tensor({1, 2}, rng);
        err = grad_check([&](const Tensor& t) { return weighted(blend2(t, a, b)); }, alpha, 1e-5);
        break;
      }
      case 13:
        err = grad_check([&](const Tensor& t) { return mse(t, b); }, a, 1e-5);
        break;
    }
    worst = std::max(worst, err);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("row and blend2 values") {
  Tensor a = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = row(a, 1);
  CHECK(r.data() == std::vector<double>{4, 5, 6});
  Tensor wv = Tensor::row_vector({0.25, 0.75});
  Tensor out = blend2(wv, row(a, 0), row(a, 1));
  CHECK(out.data()[0] == doctest::Approx(0.25 * 1 + 0.75 * 4));
}

TEST_CASE("non-finite results are rejected with index") {
  Tensor big = Tensor::full({1, 2}, 1e308);
  CHECK_THROWS_WITH_AS(add(big, big), doctest::Contains("non-finite"), std::runtime_error);
}

TEST_CASE("no-grad scope suppresses graph recording") {
  Tensor x = Tensor::from({1, 1}, {2.0}, true);
  NoGradScope ng;
  Tensor y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.impl()->node == nullptr);
}

TEST_CASE("unreachable grads stay zero") {
  Tensor used = Tensor::from({1, 1}, {1.5}, true);
  Tensor unused = Tensor::from({1, 1}, {2.5}, true);
  backward(sum(mul(used, used)));
  CHECK(unused.grad()[0] == 0.0);
  CHECK(used.grad()[0] == doctest::Approx(3.0));
}

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "doctest.h"
#include "hsinr/adam.hpp"
#include "hsinr/errors.hpp"
#include "hsinr/gradcheck.hpp"
#include "hsinr/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace hsinr;
using hsinr::test::dyadic_tensor;
using hsinr::test::rand_tensor;

namespace {

std::vector<double> values(const Tensor<double>& t) { return {t.data().begin(), t.data().end()}; }

double fd_error(const std::function<Tensor<double>()>& loss, std::vector<Tensor<double>> params) {
  return grad_check(loss, std::move(params)).max_rel_error;
}

}  // namespace

TEST_CASE("dense_forward: identity and bias") {
  Tensor<double> x({1, 2}, {1, 2});
  Tensor<double> eye({2, 2}, {1, 0, 0, 1});
  CHECK(values(dense_forward(x, eye, Tensor<double>({2}, 0.0))) == std::vector<double>{1, 2});
  Tensor<double> ones({1, 2}, {1, 1});
  CHECK(values(dense_forward(ones, eye, Tensor<double>({2}, {3, -3}))) == std::vector<double>{4, -2});
}

TEST_CASE("dense_forward matches a triple loop exactly") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<std::size_t> d(1, 9);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = trial == 0 ? 3 : d(rng), in = trial == 0 ? 4 : d(rng), out = d(rng);
    auto x = dyadic_tensor({n, in}, rng), w = dyadic_tensor({in, out}, rng), b = dyadic_tensor({out}, rng);
    CHECK(values(dense_forward(x, w, b)) == oracle::dense(x, w, b));
  }
}

TEST_CASE("dense_forward rejects mismatched shapes") {
  Tensor<double> x({2, 3}), w({4, 5}), b({5});
  try {
    dense_forward(x, w, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2 x 3]") != std::string::npos);
    CHECK(msg.find("[4 x 5]") != std::string::npos);
  }
}

TEST_CASE("conv2d_forward: shape arithmetic and 1x1 channel mix") {
  std::mt19937_64 rng(3);
  auto x = dyadic_tensor({1, 4, 4}, rng);
  auto y = conv2d_forward(x, dyadic_tensor({2, 1, 2, 2}, rng), Tensor<double>({2}), 2, 0);
  CHECK(y.shape() == Shape{2, 2, 2});

  auto x3 = dyadic_tensor({3, 5, 5}, rng);
  auto k = dyadic_tensor({2, 3, 1, 1}, rng);
  auto y3 = conv2d_forward(x3, k, Tensor<double>({2}), 1, 0);
  REQUIRE(y3.shape() == Shape{2, 5, 5});
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t p = 0; p < 25; ++p) {
      double s = 0;
      for (std::size_t c = 0; c < 3; ++c) s += k.data()[o * 3 + c] * x3.data()[c * 25 + p];
      CHECK(y3.data()[o * 25 + p] == s);
    }
}

TEST_CASE("conv2d_forward matches a direct loop exactly") {
  std::mt19937_64 rng(5);
  {
    auto x = dyadic_tensor({2, 8, 8}, rng), k = dyadic_tensor({3, 2, 3, 3}, rng), b = dyadic_tensor({3}, rng);
    CHECK(values(conv2d_forward(x, k, b, 1, 1)) == oracle::conv(x, k, b, 1, 1));
  }
  std::uniform_int_distribution<std::size_t> ch(1, 4), ks(1, 4), st(1, 3), pd(0, 2), sp(3, 9);
  int tested = 0;
  while (tested < 25) {
    const std::size_t C = ch(rng), Co = ch(rng), k = ks(rng), s = st(rng), p = pd(rng), H = sp(rng);
    if (H + 2 * p < k || (H + 2 * p - k) % s != 0) continue;
    auto x = dyadic_tensor({C, H, H}, rng), kern = dyadic_tensor({Co, C, k, k}, rng), b = dyadic_tensor({Co}, rng);
    CHECK(values(conv2d_forward(x, kern, b, s, p)) == oracle::conv(x, kern, b, s, p));
    ++tested;
  }
}

TEST_CASE("conv2d_forward refuses geometry that would truncate") {
  Tensor<double> x({1, 5, 5}), k({1, 1, 2, 2}), b({1});
  CHECK_THROWS_AS(conv2d_forward(x, k, b, 2, 0), ConfigError);
  CHECK_THROWS_AS(conv2d_forward(x, Tensor<double>({1, 1, 7, 7}), b, 1, 0), ConfigError);
  CHECK_THROWS_AS(conv2d_forward(x, Tensor<double>({1, 2, 3, 3}), b, 1, 1), DimensionError);
}

TEST_CASE("leaky_relu branches and derivative") {
  Tensor<double> x({2}, {2.0, -1.0}, true);
  auto y = leaky_relu(x, 0.01);
  CHECK(y.data()[0] == 2.0);
  CHECK(y.data()[1] == doctest::Approx(-0.01).epsilon(1e-15));
  sum_squares(y).backward();
  // d/dx (0.01 x)^2 at -1 = 2 * 0.01^2 * -1
  CHECK(x.grad()[1] == doctest::Approx(-2e-4).epsilon(1e-12));

  Tensor<double> p({1}, {-1.0});
  auto r = grad_check([&] { return leaky_relu(p, 0.01); }, {p});
  CHECK(p.grad()[0] == doctest::Approx(0.01).epsilon(1e-14));
  CHECK(r.max_rel_error <= 1e-9);
}

TEST_CASE("l1_loss values, oracle and tie subgradient") {
  CHECK(l1_loss(Tensor<double>({1}, {0.5}), Tensor<double>({1}, {0.5})).item() == 0.0);
  CHECK(l1_loss(Tensor<double>({2}, {1, 0}), Tensor<double>({2}, {0, 1})).item() == 1.0);

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 25; ++trial) {
    auto a = rand_tensor({16}, rng), b = rand_tensor({16}, rng);
    double s = 0;
    for (std::size_t i = 0; i < 16; ++i) s += std::abs(a.data()[i] - b.data()[i]);
    CHECK(l1_loss(a, b).item() == s / 16);
  }

  Tensor<double> p({3}, {0.25, 0.5, 0.75}, true);
  l1_loss(p, Tensor<double>({3}, {0.0, 0.5, 1.0})).backward();
  CHECK(p.grad()[0] == doctest::Approx(1.0 / 3));
  CHECK(p.grad()[1] == 0.0);
  CHECK(p.grad()[2] == doctest::Approx(-1.0 / 3));

  CHECK_THROWS_AS(l1_loss(Tensor<double>({2}), Tensor<double>({3})), DimensionError);
}

TEST_CASE("adam_step closed forms") {
  SUBCASE("zero gradient from a fresh state is a fixed point") {
    std::vector<double> p{1.0, -2.0, 3.5};
    const auto before = p;
    std::vector<double> g(3, 0.0);
    AdamState<double> st(3);
    for (int i = 0; i < 5; ++i) adam_step<double>(p, g, st, 0.1);
    CHECK(p == before);
    CHECK(st.step_count == 5);
  }
  SUBCASE("first step moves by lr / (1 + eps)") {
    std::vector<double> p{0.0};
    std::vector<double> g{1.0};
    AdamState<double> st(1);
    adam_step<double>(p, g, st, 0.1);
    CHECK(p[0] == doctest::Approx(-0.1 / (1 + 1e-8)).epsilon(1e-15));
    CHECK(st.v[0] >= 0.0);
  }
  SUBCASE("length mismatch") {
    std::vector<double> p(3), g(2);
    AdamState<double> st(3);
    CHECK_THROWS_AS(adam_step<double>(p, g, st, 0.1), DimensionError);
  }
}

TEST_CASE("adam_step follows a reference trajectory on theta^2") {
  oracle::AdamRef ref;
  double expected = 1.0;
  Tensor<double> theta({1}, {1.0}, true);
  AdamState<double> st(1);
  for (int t = 1; t <= 3; ++t) {
    theta.zero_grad();
    sum_squares(theta).backward();
    adam_step(theta, st, 0.1);
    expected = ref.step(expected, 2 * expected, 0.1);
    CHECK(theta.data()[0] == expected);
  }
}

TEST_CASE("grad_check trivia") {
  Tensor<double> theta({3}, {1, 2, 3});
  CHECK(grad_check([](const Tensor<double>& t) { return sum_squares(t); }, theta, 1e-5).max_rel_error <= 1e-7);

  Tensor<double> c({4}, {1, 2, 3, 4});
  auto r = grad_check([] { return Tensor<double>::scalar(2.5); }, {c});
  CHECK(r.max_rel_error == 0.0);
  for (double g : c.grad()) CHECK(g == 0.0);

  CHECK_THROWS_AS(grad_check([](const Tensor<double>& t) { return sum_squares(t); }, theta, 0.0), DomainError);
}

TEST_CASE("every op matches central differences over random configurations") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> d(1, 5);
  constexpr double tol = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    CAPTURE(trial);
    const std::size_t a = d(rng), b = d(rng), c = d(rng);

    auto x = rand_tensor({a, b}, rng), w = rand_tensor({b, c}, rng), bias = rand_tensor({c}, rng);
    CHECK(fd_error([&] { return sum_squares(dense_forward(x, w, bias)); }, {x, w, bias}) <= tol);

    const std::size_t k = 1 + trial % 3, s = 1 + trial % 2, p = trial % 2;
    std::size_t H = k + s * c;
    if ((H + 2 * p - k) % s != 0) ++H;
    if ((H + 2 * p - k) % s != 0) H = k;
    auto img = rand_tensor({a, H, H}, rng), kern = rand_tensor({b, a, k, k}, rng), kb = rand_tensor({b}, rng);
    CHECK(fd_error([&] { return sum_squares(conv2d_forward(img, kern, kb, s, p)); }, {img, kern, kb}) <= tol);

    auto v = rand_tensor({a * b * c}, rng);
    auto tgt = rand_tensor({a * b * c}, rng);
    CHECK(fd_error([&] { return sum_squares(leaky_relu(v, 0.01)); }, {v}) <= tol);
    CHECK(fd_error([&] { return sum_squares(relu(v)); }, {v}) <= tol);
    CHECK(fd_error([&] { return sum_squares(sigmoid(scale(v, 4.0))); }, {v}) <= tol);
    CHECK(fd_error([&] { return l1_loss(v, tgt); }, {v, tgt}) <= tol);

    auto fm = rand_tensor({a, b + 1, c + 1}, rng), gm = rand_tensor({a, b + 1, c + 1}, rng),
         bm = rand_tensor({a, b + 1, c + 1}, rng);
    CHECK(fd_error([&] { return sum_squares(modulate(instance_norm(fm), gm, bm)); }, {fm, gm, bm}) <= tol);

    auto m = rand_tensor({a, b * c}, rng);
    auto wt = rand_tensor({b * c, a}, rng);
    CHECK(fd_error([&] { return sum_squares(sigmoid(transpose2d(m))); }, {m}) <= tol);
    CHECK(fd_error([&] { return sum_squares(dense_forward(reshape(m, {a * b, c}), reshape(wt, {c, a * b}),
                                                          Tensor<double>({a * b}))); },
                   {m, wt}) <= tol);
    CHECK(fd_error([&] { return sum_squares(sigmoid(slice(m, c - 1, {a * b}))); }, {m}) <= tol);

    const std::size_t S = 1 + trial % 3;
    std::vector<Tensor<double>> cells;
    for (std::size_t i = 0; i < S * S; ++i) cells.push_back(rand_tensor({c, b, a}, rng));
    auto stitched = [&] {
      auto y = stitch_cells(cells, S);
      return sum_squares(sigmoid(y));
    };
    CHECK(fd_error(stitched, cells) <= tol);
  }
}

TEST_CASE("operations are bitwise deterministic") {
  std::mt19937_64 rng(1);
  auto x = rand_tensor({3, 9, 9}, rng), k = rand_tensor({5, 3, 3, 3}, rng), b = rand_tensor({5}, rng);
  CHECK(values(conv2d_forward(x, k, b, 1, 1)) == values(conv2d_forward(x, k, b, 1, 1)));
  auto m = rand_tensor({17, 13}, rng), w = rand_tensor({13, 7}, rng), bb = rand_tensor({7}, rng);
  CHECK(values(dense_forward(m, w, bb)) == values(dense_forward(m, w, bb)));
}

TEST_CASE("tensor invariants") {
  Tensor<double> t({2, 3}, 1.0, true);
  CHECK(t.size() == numel(t.shape()));
  CHECK(t.grad().size() == t.size());
  CHECK_THROWS_AS(Tensor<double>({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor<double>({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(scale(t, std::numeric_limits<double>::infinity()), NumericError);
  CHECK_THROWS_AS(dense_forward(t, t, Tensor<double>({3})), DimensionError);
  CHECK_THROWS_AS(t.backward(), DimensionError);
}

TEST_CASE("no-grad mode records no history") {
  Tensor<double> p({2}, {1.0, 2.0}, true);
  {
    NoGradGuard guard;
    auto y = sum_squares(p);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(sum_squares(p).requires_grad());
}

TEST_CASE("coverage map detects double writes") {
  CoverageMap m(4, 4);
  m.mark(0, 2, 0, 4);
  CHECK_FALSE(m.complete());
  CHECK_THROWS_AS(m.mark(1, 3, 0, 1), LayoutError);
  CoverageMap full(2, 2);
  full.mark(0, 2, 0, 2);
  CHECK(full.complete());
  CHECK(full.covered() == 4);
}

TEST_CASE("float and double graphs run independently") {
  Tensor<float> xf({1, 2}, {1.0f, 2.0f}, true);
  Tensor<float> wf({2, 1}, {0.5f, 0.25f});
  auto yf = dense_forward(xf, wf, Tensor<float>({1}));
  CHECK(yf.item() == 1.0f);
  CHECK(precision_of<float>() == Precision::standard);
  CHECK(precision_of<double>() == Precision::verification);
  CHECK(parse_precision("verification") == Precision::verification);
  CHECK_THROWS_AS(parse_precision("half"), ConfigError);
}

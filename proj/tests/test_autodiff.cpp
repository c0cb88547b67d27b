#include <doctest.h>

#include <cmath>

#include "curvebench/autodiff.hpp"
#include "curvebench/resample.hpp"
#include "test_support.hpp"

using namespace curvebench;
using cbtest::fd_gradient;
using cbtest::random_tensor;
using cbtest::rel_err;

TEST_CASE("tensor construction validates shape and finiteness") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({2}, {1.0, std::nan("")}), std::invalid_argument);
  CHECK_THROWS_AS(Tensor({0}, {}), std::invalid_argument);
  Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
}

TEST_CASE("add and matmul basics") {
  Tape tape;
  auto a = tape.leaf(Tensor({2}, {1, 2}));
  auto b = tape.leaf(Tensor({2}, {3, 4}));
  auto c = tape.add(a, b);
  CHECK(tape.value(c)[0] == 4.0);
  CHECK(tape.value(c)[1] == 6.0);

  // identity matmul returns the operand values
  Tape t2;
  auto eye = t2.leaf(Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  auto x = t2.leaf(Tensor({3}, {2.5, -1.0, 7.0}));
  auto y = t2.matmul(eye, x);
  for (std::size_t i = 0; i < 3; ++i) CHECK(t2.value(y)[i] == t2.value(x)[i]);

  Tape t3;
  auto bad = t3.leaf(Tensor({2, 3}, std::vector<double>(6, 1.0)));
  auto v = t3.leaf(Tensor({2}, {1, 1}));
  CHECK_THROWS_WITH_AS(t3.matmul(bad, v),
                       doctest::Contains("matmul: inner dimensions differ"),
                       std::invalid_argument);
}

TEST_CASE("conv2d hand-summation oracle") {
  Tape tape;
  auto x = tape.leaf(Tensor::constant({1, 3, 3}, 1.0));
  auto k = tape.leaf(Tensor::constant({1, 1, 2, 2}, 1.0));
  auto y = tape.conv2d(x, k, 1, 0);
  CHECK(tape.value(y).shape() == Shape{1, 2, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(tape.value(y)[i] == doctest::Approx(4.0));
}

TEST_CASE("softmax examples") {
  Tape tape;
  auto z = tape.leaf(Tensor({2}, {0.0, 0.0}));
  auto y = tape.softmax(z);
  CHECK(tape.value(y)[0] == doctest::Approx(0.5).epsilon(1e-12));

  Tape t2;
  auto big = t2.leaf(Tensor({2}, {1000.0, 1000.0}));
  auto yb = t2.softmax(big);
  CHECK(std::isfinite(t2.value(yb)[0]));
  CHECK(t2.value(yb)[0] == doctest::Approx(0.5).epsilon(1e-12));

  Tape t3;
  auto l3 = t3.leaf(Tensor({2}, {0.0, std::log(3.0)}));
  auto y3 = t3.softmax(l3);
  CHECK(t3.value(y3)[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(t3.value(y3)[1] == doctest::Approx(0.75).epsilon(1e-12));

  // sums to one within 1e-12 on random inputs
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Tape t;
    auto zi = t.leaf(random_tensor({7}, rng, 3.0));
    auto yi = t.softmax(zi);
    double sum = 0.0;
    for (std::size_t i = 0; i < 7; ++i) {
      CHECK(t.value(yi)[i] > 0.0);
      sum += t.value(yi)[i];
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("cross entropy closed forms") {
  Tape tape;
  auto z = tape.leaf(Tensor({2}, {0.0, 0.0}));
  auto l = tape.cross_entropy(z, 0);
  CHECK(tape.value(l)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Tape t2;
  auto z2 = t2.leaf(Tensor({2}, {10.0, -10.0}));
  auto l2 = t2.cross_entropy(z2, 0);
  CHECK(t2.value(l2)[0] == doctest::Approx(std::log1p(std::exp(-20.0))).epsilon(1e-9));
  CHECK(t2.value(l2)[0] == doctest::Approx(2.061154e-9).epsilon(1e-3));

  // loss decreases monotonically toward 0 as the correct-class margin grows
  double prev = 1e300;
  for (double margin : {1.0, 2.0, 4.0, 8.0, 16.0}) {
    Tape t;
    auto zi = t.leaf(Tensor({3}, {margin, 0.0, 0.0}));
    auto li = t.cross_entropy(zi, 0);
    CHECK(t.value(li)[0] >= 0.0);
    CHECK(t.value(li)[0] < prev);
    prev = t.value(li)[0];
  }

  Tape t3;
  auto z3 = t3.leaf(Tensor({2}, {0.0, 0.0}));
  CHECK_THROWS_AS(t3.cross_entropy(z3, 2), std::invalid_argument);
}

TEST_CASE("backward analytic examples") {
  // f(x) = x*x at 3 via weighted_sum of elementwise square through matmul
  Tape tape;
  auto x = tape.leaf(Tensor({1, 1}, {3.0}));
  auto y = tape.matmul(x, tape.flatten(x));
  auto out = tape.weighted_sum(y, {1.0});
  GradientMap g = tape.backward(out);
  CHECK(g.at(x)[0] == doctest::Approx(6.0).epsilon(1e-12));

  // grad of sum(relu(x)) at [-1, 2] is [0, 1]
  Tape t2;
  auto x2 = t2.leaf(Tensor({2}, {-1.0, 2.0}));
  auto r = t2.relu(x2);
  auto s = t2.weighted_sum(r, {1.0, 1.0});
  GradientMap g2 = t2.backward(s);
  CHECK(g2.at(x2)[0] == 0.0);
  CHECK(g2.at(x2)[1] == 1.0);

  // relu subgradient at exactly 0 is 0
  Tape t3;
  auto x3 = t3.leaf(Tensor({1}, {0.0}));
  auto r3 = t3.relu(x3);
  auto s3 = t3.weighted_sum(r3, {1.0});
  GradientMap g3 = t3.backward(s3);
  CHECK(g3.at(x3)[0] == 0.0);
}

TEST_CASE("backward errors: non-scalar root and double backward") {
  Tape tape;
  auto x = tape.leaf(Tensor({2}, {1.0, 2.0}));
  auto y = tape.relu(x);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);

  Tape t2;
  auto x2 = t2.leaf(Tensor({2}, {1.0, 2.0}));
  auto s2 = t2.weighted_sum(x2, {1.0, 1.0});
  (void)t2.backward(s2);
  CHECK_THROWS_AS(t2.backward(s2), std::logic_error);
}

namespace {

// Builds scalar outputs through each primitive and checks the backward pass
// against central finite differences of the forward evaluation.
struct PrimitiveCase {
  const char* name;
  Shape x_shape;
  std::function<Tape::Id(Tape&, Tape::Id, const Tensor& aux)> forward;
  Shape aux_shape;  // second differentiated operand, empty if none
};

double eval_scalar(const PrimitiveCase& pc, const Tensor& x, const Tensor& aux,
                   const std::vector<double>& head) {
  Tape tape;
  auto xi = tape.leaf(x);
  auto out = pc.forward(tape, xi, aux);
  const Tensor& v = tape.value(out);
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += head[i] * v[i];
  return s;
}

}  // namespace

TEST_CASE("every primitive's VJP matches finite differences, 10 random trials") {
  Rng rng(99);
  auto unit = std::make_shared<ResampleUnit>(3, 6);

  std::vector<PrimitiveCase> cases;
  cases.push_back({"add", {5},
                   [](Tape& t, Tape::Id x, const Tensor& aux) { return t.add(x, t.leaf(aux)); },
                   {5}});
  cases.push_back({"sub", {5},
                   [](Tape& t, Tape::Id x, const Tensor& aux) { return t.sub(x, t.leaf(aux)); },
                   {5}});
  cases.push_back({"scale", {6},
                   [](Tape& t, Tape::Id x, const Tensor&) { return t.scale(x, -1.75); },
                   {}});
  cases.push_back({"matmul_vec", {4},
                   [](Tape& t, Tape::Id x, const Tensor& aux) { return t.matmul(t.leaf(aux), x); },
                   {3, 4}});
  cases.push_back({"matmul_mat", {3, 4},
                   [](Tape& t, Tape::Id x, const Tensor& aux) {
                     return t.flatten(t.matmul(x, t.leaf(aux)));
                   },
                   {4, 2}});
  cases.push_back({"conv2d", {2, 5, 5},
                   [](Tape& t, Tape::Id x, const Tensor& aux) {
                     return t.flatten(t.conv2d(x, t.leaf(aux), 2, 1));
                   },
                   {3, 2, 3, 3}});
  cases.push_back({"relu", {8},
                   [](Tape& t, Tape::Id x, const Tensor&) { return t.relu(x); },
                   {}});
  cases.push_back({"maxpool2x2", {2, 4, 4},
                   [](Tape& t, Tape::Id x, const Tensor&) {
                     return t.flatten(t.maxpool2x2(x));
                   },
                   {}});
  cases.push_back({"flatten", {2, 3, 2},
                   [](Tape& t, Tape::Id x, const Tensor&) { return t.flatten(x); },
                   {}});
  cases.push_back({"bias_add_chw", {3, 4, 4},
                   [](Tape& t, Tape::Id x, const Tensor& aux) {
                     return t.flatten(t.bias_add(x, t.leaf(aux)));
                   },
                   {3}});
  cases.push_back({"softmax", {6},
                   [](Tape& t, Tape::Id x, const Tensor&) { return t.softmax(x); },
                   {}});
  cases.push_back({"cross_entropy", {5},
                   [](Tape& t, Tape::Id x, const Tensor&) { return t.cross_entropy(x, 2); },
                   {}});
  cases.push_back({"weighted_sum", {7},
                   [](Tape& t, Tape::Id x, const Tensor&) {
                     return t.weighted_sum(x, {0.3, -1.2, 0.0, 2.0, 1.0, -0.5, 0.25});
                   },
                   {}});
  cases.push_back({"linear_resample", {1, 6, 6},
                   [unit](Tape& t, Tape::Id x, const Tensor&) {
                     return t.flatten(t.linear(x, unit));
                   },
                   {}});

  for (const PrimitiveCase& pc : cases) {
    CAPTURE(pc.name);
    for (int trial = 0; trial < 10; ++trial) {
      Tensor x = random_tensor(pc.x_shape, rng);
      Tensor aux =
          pc.aux_shape.empty() ? Tensor() : random_tensor(pc.aux_shape, rng);
      // head vector for a scalar contraction of the primitive output
      Tape probe;
      auto px = probe.leaf(x);
      auto pout = pc.forward(probe, px, aux);
      const std::size_t out_len = probe.value(pout).size();
      std::vector<double> head(out_len);
      for (double& h : head) h = rng.normal();

      Tape tape;
      auto xi = tape.leaf(x);
      auto out = pc.forward(tape, xi, aux);
      auto contracted = tape.weighted_sum(out, head);
      GradientMap grads = tape.backward(contracted);
      const Tensor& got = grads.at(xi);

      const Tensor want = fd_gradient(
          [&](const Tensor& p) { return eval_scalar(pc, p, aux, head); }, x);
      for (std::size_t i = 0; i < got.size(); ++i) {
        const double tol_scale =
            std::max({std::fabs(want[i]), got.l2_norm() / std::sqrt(double(got.size())), 1e-6});
        CHECK(std::fabs(got[i] - want[i]) <= 1e-5 * std::max(tol_scale, 1.0) + 1e-7);
      }
    }
  }
}

TEST_CASE("forward evaluation is deterministic bit for bit") {
  Rng rng(5);
  Tensor x = random_tensor({2, 6, 6}, rng);
  Tensor k = random_tensor({4, 2, 3, 3}, rng);
  auto run = [&]() {
    Tape tape;
    auto xi = tape.leaf(x);
    auto y = tape.conv2d(xi, tape.leaf(k), 1, 1);
    auto r = tape.relu(y);
    auto p = tape.maxpool2x2(r);
    return tape.value(tape.flatten(p)).vec();
  };
  CHECK(run() == run());
}

TEST_CASE("gradient map reports zero for uninvolved leaves") {
  Tape tape;
  auto x = tape.leaf(Tensor({2}, {1.0, 2.0}));
  auto unused = tape.leaf(Tensor({3}, {1.0, 1.0, 1.0}));
  auto s = tape.weighted_sum(x, {1.0, 1.0});
  GradientMap g = tape.backward(s);
  CHECK(g.at(unused).l2_norm() == 0.0);
  CHECK(g.at(unused).shape() == Shape{3});
}

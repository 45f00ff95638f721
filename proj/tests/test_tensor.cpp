#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "spikekit/ops.hpp"
#include "support/gradcheck.hpp"

using namespace spikekit;
using spikekit::test::GradCheck;
using spikekit::test::random_tensor;

namespace {

Tensor vec(std::initializer_list<scalar_t> values, bool grad = false) {
  ArrayX v(static_cast<index_t>(values.size()));
  index_t i = 0;
  for (scalar_t x : values) v[i++] = x;
  Shape shape = {v.size()};
  return Tensor::from_array(std::move(shape), std::move(v), grad);
}

// Direct-loop convolution used as the oracle for the im2col kernel.
ArrayX conv2d_direct(const Tensor& x, const Tensor& w, const Tensor& b,
                     int pad) {
  const index_t batch = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const index_t cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const index_t oh = h + 2 * pad - kh + 1, ow = wd + 2 * pad - kw + 1;
  ArrayX out = ArrayX::Zero(batch * cout * oh * ow);
  for (index_t n = 0; n < batch; ++n)
    for (index_t co = 0; co < cout; ++co)
      for (index_t oy = 0; oy < oh; ++oy)
        for (index_t ox = 0; ox < ow; ++ox) {
          scalar_t acc = b.defined() ? b.values()[co] : 0.0;
          for (index_t ci = 0; ci < cin; ++ci)
            for (index_t ky = 0; ky < kh; ++ky)
              for (index_t kx = 0; kx < kw; ++kx) {
                index_t iy = oy + ky - pad, ix = ox + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += x.values()[((n * cin + ci) * h + iy) * wd + ix] *
                       w.values()[((co * cin + ci) * kh + ky) * kw + kx];
              }
          out[((n * cout + co) * oh + oy) * ow + ox] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("elementwise op examples") {
  Tensor a = vec({1, 2});
  Tensor b = vec({3, 4});
  Tensor s = add(a, b);
  CHECK(s.values()[0] == 4.0);
  CHECK(s.values()[1] == 6.0);
  CHECK(sub(b, a).values()[0] == 2.0);
  CHECK(mul(a, b).values()[1] == 8.0);
  CHECK(scalar_mul(a, 2.5).values()[1] == 5.0);
  CHECK(scalar_add(a, -1.0).values()[0] == 0.0);
}

TEST_CASE("shape mismatch is rejected with both shapes named") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({3, 2});
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[2,3]"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[3,2]"),
                       std::invalid_argument);
  CHECK_THROWS_AS(matmul(a, Tensor::zeros({2, 2})), std::invalid_argument);
}

TEST_CASE("matmul of ones") {
  Tensor a = Tensor::full({2, 3}, 1.0);
  Tensor b = Tensor::full({3, 2}, 1.0);
  Tensor c = matmul(a, b);
  REQUIRE(c.shape() == Shape{2, 2});
  for (index_t i = 0; i < 4; ++i) CHECK(c.values()[i] == 3.0);
}

TEST_CASE("conv2d of ones matches the four hand-evaluated windows") {
  Tensor x = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor w = Tensor::full({1, 1, 2, 2}, 1.0);
  Tensor y = conv2d(x, w, Tensor(), 0);
  REQUIRE(y.shape() == Shape{1, 1, 2, 2});
  for (index_t i = 0; i < 4; ++i) CHECK(y.values()[i] == 4.0);
}

TEST_CASE("im2col convolution equals the direct form") {
  Rng rng(7, 0);
  for (int pad : {0, 1, 2}) {
    Tensor x = random_tensor({2, 3, 5, 4}, rng);
    Tensor w = random_tensor({4, 3, 3, 3}, rng);
    Tensor b = random_tensor({4}, rng);
    Tensor y = conv2d(x, w, b, pad);
    ArrayX ref = conv2d_direct(x, w, b, pad);
    REQUIRE(y.size() == ref.size());
    CHECK(((y.values() - ref).abs().maxCoeff()) < 1e-12);
  }
}

TEST_CASE("backward of x squared") {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor loss = mean(square(x));
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("non-scalar loss is rejected") {
  Tensor x = Tensor::zeros({2}, true);
  CHECK_THROWS_AS(backward(add(x, x)), std::invalid_argument);
}

TEST_CASE("detach blocks gradient flow") {
  Rng rng(3, 0);
  Tensor y = random_tensor({4}, rng);
  Tensor x = random_tensor({4}, rng);
  CHECK(y.detach().values().isApprox(y.values()));

  Tensor loss = mean(mul(y.detach(), x));
  backward(loss);
  CHECK(x.has_grad());
  CHECK_FALSE(y.has_grad());
}

TEST_CASE("d/dx MSE(detach(x), x) equals d/dx MSE(c, x) with frozen c") {
  Rng rng(11, 0);
  Tensor x = random_tensor({5}, rng);
  Tensor loss = mean(square(sub(x.detach(), x)));
  backward(loss);
  ArrayX via_detach = x.grad();

  Tensor frozen = Tensor::from_array({5}, x.values());
  GradCheck gc;
  CHECK(gc.run([&] { return mean(square(sub(frozen, x))); }, {x}));

  x.clear_grad();
  backward(mean(square(sub(frozen, x))));
  CHECK((x.grad() - via_detach).abs().maxCoeff() == 0.0);
}

TEST_CASE("gradient accumulation across multiple uses") {
  Rng rng(5, 0);
  Tensor x = random_tensor({3}, rng);
  Tensor w = random_tensor({3}, rng, -1.0, 1.0, false);

  Tensor both = mean(add(mul(x, w), square(x)));
  backward(both);
  ArrayX combined = x.grad();

  x.clear_grad();
  backward(mean(mul(x, w)));
  ArrayX first = x.grad();
  x.clear_grad();
  backward(mean(square(x)));
  ArrayX second = x.grad();
  CHECK((combined - (first + second)).abs().maxCoeff() < 1e-15);
}

TEST_CASE("backward is deterministic") {
  auto run = [] {
    Rng rng(21, 0);
    Tensor x = random_tensor({4, 4}, rng);
    Tensor w = random_tensor({4, 4}, rng);
    Tensor loss = mean(square(matmul(x, w)));
    backward(loss);
    return std::make_pair(x.grad(), w.grad());
  };
  auto [gx1, gw1] = run();
  auto [gx2, gw2] = run();
  CHECK((gx1 - gx2).abs().maxCoeff() == 0.0);
  CHECK((gw1 - gw2).abs().maxCoeff() == 0.0);
}

TEST_CASE("finite differences validate every op kind") {
  Rng rng(42, 0);
  GradCheck gc;

  SUBCASE("add/sub/mul/scalar") {
    Tensor a = random_tensor({3, 2}, rng);
    Tensor b = random_tensor({3, 2}, rng);
    CHECK(gc.run([&] { return mean(mul(add(a, b), sub(a, b))); }, {a, b}));
    CHECK(gc.run([&] { return mean(scalar_add(scalar_mul(a, 1.7), 0.3)); },
                 {a}));
  }
  SUBCASE("matmul") {
    Tensor a = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4, 2}, rng);
    CHECK(gc.run([&] { return mean(square(matmul(a, b))); }, {a, b}));
  }
  SUBCASE("bias_add") {
    Tensor x = random_tensor({3, 4}, rng);
    Tensor b = random_tensor({4}, rng);
    CHECK(gc.run([&] { return mean(square(bias_add(x, b))); }, {x, b}));
  }
  SUBCASE("conv2d") {
    Tensor x = random_tensor({2, 2, 4, 4}, rng);
    Tensor w = random_tensor({3, 2, 3, 3}, rng);
    Tensor b = random_tensor({3}, rng);
    CHECK(gc.run([&] { return mean(square(conv2d(x, w, b, 1))); }, {x, w, b}));
  }
  SUBCASE("pooling") {
    Tensor x = random_tensor({2, 3, 4, 4}, rng);
    CHECK(gc.run([&] { return mean(square(avg_pool2(x))); }, {x}));
    CHECK(gc.run([&] { return mean(square(global_avg_pool(x))); }, {x}));
  }
  SUBCASE("reductions") {
    Tensor x = random_tensor({3, 4, 2}, rng);
    CHECK(gc.run([&] { return mean(square(mean_axis(x, 1))); }, {x}));
    CHECK(gc.run([&] { return mean(square(mean_axis(x, 0))); }, {x}));
    CHECK(gc.run([&] { return mean(square(max_axis(x, 2))); }, {x}));
  }
  SUBCASE("pointwise nonlinear") {
    Tensor x = random_tensor({6}, rng, 0.5, 2.0);
    CHECK(gc.run([&] { return mean(mul(log(x), exp(x))); }, {x}));
    CHECK(gc.run([&] { return mean(square(square(x))); }, {x}));
  }
  SUBCASE("reshape") {
    Tensor x = random_tensor({2, 6}, rng);
    CHECK(gc.run([&] { return mean(square(reshape(x, {3, 4}))); }, {x}));
  }
  SUBCASE("softmax") {
    Tensor x = random_tensor({3, 5}, rng, -2.0, 2.0);
    CHECK(gc.run([&] { return mean(square(softmax(x, 2.0))); }, {x}));
    CHECK(gc.run([&] { return mean(square(softmax(x, 1.0))); }, {x}));
  }
  SUBCASE("cross_entropy") {
    Tensor x = random_tensor({4, 3}, rng, -2.0, 2.0);
    std::vector<int> labels = {0, 2, 1, 2};
    CHECK(gc.run([&] { return cross_entropy(x, labels); }, {x}));
  }
}

TEST_CASE("conv backward matches finite differences through composition") {
  Rng rng(9, 0);
  GradCheck gc;
  Tensor x = random_tensor({1, 2, 6, 6}, rng);
  Tensor w1 = random_tensor({3, 2, 3, 3}, rng);
  Tensor b1 = random_tensor({3}, rng);
  CHECK(gc.run(
      [&] {
        return mean(square(global_avg_pool(avg_pool2(conv2d(x, w1, b1, 1)))));
      },
      {x, w1, b1}));
}

TEST_CASE("ops reject invalid arguments") {
  CHECK_THROWS_AS(avg_pool2(Tensor::zeros({1, 1, 3, 4})),
                  std::invalid_argument);
  CHECK_THROWS_AS(mean_axis(Tensor::zeros({2, 2}), 2), std::invalid_argument);
  CHECK_THROWS_AS(softmax(Tensor::zeros({2, 2}), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy(Tensor::zeros({2, 2}), {0, 5}),
                  std::invalid_argument);
  CHECK_THROWS_AS(reshape(Tensor::zeros({2, 2}), {3, 2}),
                  std::invalid_argument);
  CHECK_THROWS_AS(Tensor::from_array({0}, ArrayX::Zero(0)),
                  std::invalid_argument);
}

TEST_CASE("no-grad guard suppresses lineage") {
  Tensor x = Tensor::scalar(2.0, true);
  NoGradGuard guard;
  Tensor y = square(x);
  CHECK_FALSE(y.requires_grad());
}

#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "oracles.hpp"
#include "textdet/errors.hpp"
#include "textdet/kernels.hpp"
#include "textdet/weights_io.hpp"

using namespace textdet;
using test::central_diff;
using test::max_rel_error;
using test::random_tensor;

namespace {
constexpr double kFdEps = 1e-3;
constexpr double kFdTol = 1e-4;
}  // namespace

TEST_CASE("conv2d forward basics") {
  SUBCASE("3x3 ones kernel sums a 3x3 ones input") {
    Tensor in = Tensor::full({1, 3, 3}, 1.0f);
    Tensor k = Tensor::full({1, 1, 3, 3}, 1.0f);
    Tensor out = conv2d_forward(in, k, {}, 1, 0);
    CHECK(out.shape() == std::vector<int>{1, 1, 1});
    CHECK(out[0] == doctest::Approx(9.0f));
  }
  SUBCASE("identity 1x1 kernel") {
    Rng rng(3);
    Tensor in = random_tensor({1, 4, 5}, rng);
    Tensor k = Tensor::full({1, 1, 1, 1}, 1.0f);
    Tensor out = conv2d_forward(in, k, {}, 1, 0);
    for (int64_t i = 0; i < in.numel(); ++i) CHECK(out[i] == in[i]);
  }
  SUBCASE("2x2 averaging kernel with stride 2 takes block means") {
    Tensor in({1, 4, 4});
    for (int i = 0; i < 16; ++i) in[i] = static_cast<float>(i);
    Tensor k = Tensor::full({1, 1, 2, 2}, 0.25f);
    Tensor out = conv2d_forward(in, k, {}, 2, 0);
    CHECK(out.shape() == std::vector<int>{1, 2, 2});
    CHECK(out[0] == doctest::Approx((0 + 1 + 4 + 5) / 4.0));
    CHECK(out[1] == doctest::Approx((2 + 3 + 6 + 7) / 4.0));
    CHECK(out[2] == doctest::Approx((8 + 9 + 12 + 13) / 4.0));
    CHECK(out[3] == doctest::Approx((10 + 11 + 14 + 15) / 4.0));
  }
  SUBCASE("channel mismatch raises ShapeMismatch") {
    CHECK_THROWS_AS(conv2d_forward(Tensor({2, 4, 4}), Tensor({1, 3, 3, 3}), {}, 1, 1),
                    ShapeMismatch);
  }
  SUBCASE("non-integral output raises ShapeMismatch") {
    CHECK_THROWS_AS(conv2d_forward(Tensor({1, 5, 5}), Tensor({1, 1, 2, 2}), {}, 2, 0),
                    ShapeMismatch);
  }
}

TEST_CASE("conv2d matches the naive reference") {
  Rng rng(4);
  for (int trial = 0; trial < 6; ++trial) {
    int stride = 1 + trial % 2;
    int pad = trial % 3;
    int dilation = 1 + trial % 2;
    Tensor in = random_tensor({3, 9, 11}, rng);
    Tensor k = random_tensor({4, 3, 3, 3}, rng);
    Tensor b = random_tensor({4}, rng);
    int ext = (3 - 1) * dilation + 1;
    if ((9 + 2 * pad - ext) % stride != 0 || (11 + 2 * pad - ext) % stride != 0) continue;
    Tensor got = conv2d_forward(in, k, b, stride, pad, dilation);
    Tensor want = test::naive_conv2d(in, k, b, stride, pad, dilation);
    REQUIRE(got.shape() == want.shape());
    for (int64_t i = 0; i < got.numel(); ++i) {
      CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-4));
    }
  }
}

TEST_CASE("conv2d backward") {
  SUBCASE("ones upstream through identity kernel gives ones") {
    Tensor in = Tensor::full({1, 3, 3}, 2.0f);
    Tensor k = Tensor::full({1, 1, 1, 1}, 1.0f);
    Tensor gout = Tensor::full({1, 3, 3}, 1.0f);
    Conv2dGrads g = conv2d_backward(in, k, gout, 1, 0);
    for (int64_t i = 0; i < g.input.numel(); ++i) CHECK(g.input[i] == 1.0f);
    CHECK(g.kernel[0] == doctest::Approx(9.0f * 2.0f));
    CHECK(g.bias[0] == doctest::Approx(9.0f));
  }
  SUBCASE("zero upstream gives zero gradients") {
    Rng rng(5);
    Tensor in = random_tensor({2, 5, 5}, rng);
    Tensor k = random_tensor({3, 2, 3, 3}, rng);
    Conv2dGrads g = conv2d_backward(in, k, Tensor({3, 5, 5}), 1, 1);
    for (int64_t i = 0; i < g.input.numel(); ++i) CHECK(g.input[i] == 0.0f);
    for (int64_t i = 0; i < g.kernel.numel(); ++i) CHECK(g.kernel[i] == 0.0f);
    for (int64_t i = 0; i < g.bias.numel(); ++i) CHECK(g.bias[i] == 0.0f);
  }
  SUBCASE("finite differences on a random instance") {
    Rng rng(6);
    Tensor in = random_tensor({2, 5, 5}, rng);
    Tensor k = random_tensor({1, 2, 3, 3}, rng);
    Tensor b = random_tensor({1}, rng);
    Tensor gout = random_tensor({1, 5, 5}, rng);
    auto objective = [&] {  // <grad_out, conv(in)>
      Tensor out = conv2d_forward(in, k, b, 1, 1);
      double s = 0.0;
      for (int64_t i = 0; i < out.numel(); ++i) s += static_cast<double>(gout[i]) * out[i];
      return s;
    };
    Conv2dGrads g = conv2d_backward(in, k, gout, 1, 1);
    CHECK(max_rel_error(g.input, [&](int64_t i) { return central_diff(in, i, kFdEps, objective); }) <
          kFdTol);
    CHECK(max_rel_error(g.kernel, [&](int64_t i) { return central_diff(k, i, kFdEps, objective); }) <
          kFdTol);
    CHECK(max_rel_error(g.bias, [&](int64_t i) { return central_diff(b, i, kFdEps, objective); }) <
          kFdTol);
  }
}

TEST_CASE("activations") {
  Tensor x({3});
  x[0] = -1.0f;
  x[1] = 0.0f;
  x[2] = 2.0f;
  Tensor r = relu_forward(x);
  CHECK(r[0] == 0.0f);
  CHECK(r[1] == 0.0f);
  CHECK(r[2] == 2.0f);
  Tensor s = sigmoid_forward(Tensor({1}));
  CHECK(s[0] == doctest::Approx(0.5f));
}

TEST_CASE("deconv2d") {
  SUBCASE("2x2 kernel stride 2 doubles spatial size") {
    Rng rng(7);
    Tensor in = random_tensor({3, 2, 2}, rng);
    Tensor k = random_tensor({3, 2, 2, 2}, rng);
    Tensor out = deconv2d_forward(in, k, {}, 2);
    CHECK(out.shape() == std::vector<int>{2, 4, 4});
  }
  SUBCASE("deconv is the adjoint of conv") {
    Rng rng(8);
    for (int n : {2, 4}) {
      Tensor x = random_tensor({3, 8, 8}, rng);
      Tensor k = random_tensor({5, 3, n, n}, rng);  // conv kernel [N,C,kh,kw]
      Tensor y = random_tensor({5, 8 / n, 8 / n}, rng);
      Tensor cx = conv2d_forward(x, k, {}, n, 0);
      Tensor dy = deconv2d_forward(y, k, {}, n);  // same buffer read as [C_in,C_out,kh,kw]
      double lhs = 0.0, rhs = 0.0;
      for (int64_t i = 0; i < cx.numel(); ++i) lhs += static_cast<double>(cx[i]) * y[i];
      for (int64_t i = 0; i < x.numel(); ++i) rhs += static_cast<double>(x[i]) * dy[i];
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-6));
    }
  }
  SUBCASE("finite differences") {
    Rng rng(9);
    Tensor in = random_tensor({2, 3, 3}, rng);
    Tensor k = random_tensor({2, 3, 2, 2}, rng);
    Tensor b = random_tensor({3}, rng);
    Tensor gout = random_tensor({3, 6, 6}, rng);
    auto objective = [&] {
      Tensor out = deconv2d_forward(in, k, b, 2);
      double s = 0.0;
      for (int64_t i = 0; i < out.numel(); ++i) s += static_cast<double>(gout[i]) * out[i];
      return s;
    };
    Deconv2dGrads g = deconv2d_backward(in, k, gout, 2);
    CHECK(max_rel_error(g.input, [&](int64_t i) { return central_diff(in, i, kFdEps, objective); }) <
          kFdTol);
    CHECK(max_rel_error(g.kernel, [&](int64_t i) { return central_diff(k, i, kFdEps, objective); }) <
          kFdTol);
    CHECK(max_rel_error(g.bias, [&](int64_t i) { return central_diff(b, i, kFdEps, objective); }) <
          kFdTol);
  }
}

TEST_CASE("batchnorm") {
  SUBCASE("training mode normalizes per channel") {
    Rng rng(10);
    Tensor x = random_tensor({2, 3, 4, 4}, rng, -3.0, 5.0);
    Tensor gamma = Tensor::full({3}, 1.0f);
    Tensor beta({3});
    Tensor rm({3}), rv = Tensor::full({3}, 1.0f);
    BnCache cache;
    Tensor y = batchnorm_forward(x, gamma, beta, rm, rv, true, 1e-5f, 0.99f, &cache);
    for (int c = 0; c < 3; ++c) {
      double sum = 0.0, sq = 0.0;
      int count = 0;
      for (int b = 0; b < 2; ++b) {
        for (int i = 0; i < 16; ++i) {
          double v = y.at({b, c, i / 4, i % 4});
          sum += v;
          sq += v * v;
          ++count;
        }
      }
      double mean = sum / count;
      double var = sq / count - mean * mean;
      CHECK(std::abs(mean) < 1e-6);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
  }
  SUBCASE("running statistics feed inference mode") {
    Tensor x = Tensor::full({1, 1, 2, 2}, 3.0f);
    Tensor gamma = Tensor::full({1}, 1.0f);
    Tensor beta({1});
    Tensor rm({1}), rv = Tensor::full({1}, 1.0f);
    BnCache cache;
    for (int i = 0; i < 500; ++i) {
      batchnorm_forward(x, gamma, beta, rm, rv, true, 1e-5f, 0.9f, &cache);
    }
    CHECK(rm[0] == doctest::Approx(3.0f).epsilon(1e-4));
    CHECK(rv[0] == doctest::Approx(0.0f).epsilon(1e-3));
    Tensor y = batchnorm_forward(x, gamma, beta, rm, rv, false, 1e-5f, 0.9f, nullptr);
    CHECK(y[0] == doctest::Approx(0.0f).epsilon(1e-2));
  }
  SUBCASE("finite differences through batch statistics") {
    Rng rng(11);
    Tensor x = random_tensor({2, 2, 3, 3}, rng);
    Tensor gamma = random_tensor({2}, rng, 0.5, 1.5);
    Tensor beta = random_tensor({2}, rng);
    Tensor gout = random_tensor({2, 2, 3, 3}, rng);
    BnCache cache;
    auto objective = [&] {
      Tensor rm({2}), rv = Tensor::full({2}, 1.0f);
      BnCache c2;
      Tensor y = batchnorm_forward(x, gamma, beta, rm, rv, true, 1e-5f, 0.99f, &c2);
      double s = 0.0;
      for (int64_t i = 0; i < y.numel(); ++i) s += static_cast<double>(gout[i]) * y[i];
      return s;
    };
    {
      Tensor rm({2}), rv = Tensor::full({2}, 1.0f);
      batchnorm_forward(x, gamma, beta, rm, rv, true, 1e-5f, 0.99f, &cache);
    }
    BnGrads g = batchnorm_backward(gout, gamma, cache);
    CHECK(max_rel_error(g.input, [&](int64_t i) { return central_diff(x, i, kFdEps, objective); }) <
          kFdTol);
    CHECK(max_rel_error(g.gamma,
                        [&](int64_t i) { return central_diff(gamma, i, kFdEps, objective); }) <
          kFdTol);
    CHECK(max_rel_error(g.beta, [&](int64_t i) { return central_diff(beta, i, kFdEps, objective); }) <
          kFdTol);
  }
}

TEST_CASE("relu and sigmoid backward via finite differences") {
  Rng rng(12);
  Tensor x = random_tensor({40}, rng, -2.0, 2.0);
  // Keep away from the relu kink where central differences are invalid.
  for (int64_t i = 0; i < x.numel(); ++i) {
    if (std::abs(x[i]) < 5e-3) x[i] = 0.1f;
  }
  Tensor gout = random_tensor({40}, rng);
  auto dot_out = [&](const Tensor& y) {
    double s = 0.0;
    for (int64_t i = 0; i < y.numel(); ++i) s += static_cast<double>(gout[i]) * y[i];
    return s;
  };
  {
    Tensor y = relu_forward(x);
    Tensor g = relu_backward(gout, y);
    auto obj = [&] { return dot_out(relu_forward(x)); };
    CHECK(max_rel_error(g, [&](int64_t i) { return central_diff(x, i, kFdEps, obj); }) < kFdTol);
  }
  {
    Tensor y = sigmoid_forward(x);
    Tensor g = sigmoid_backward(gout, y);
    auto obj = [&] { return dot_out(sigmoid_forward(x)); };
    CHECK(max_rel_error(g, [&](int64_t i) { return central_diff(x, i, kFdEps, obj); }) < kFdTol);
  }
}

TEST_CASE("maxpool") {
  Tensor x({1, 2, 4});
  float vals[] = {1, 5, 2, 0, 3, -1, 7, 7};
  for (int i = 0; i < 8; ++i) x[i] = vals[i];
  PoolCache cache;
  Tensor y = maxpool2d_forward(x, &cache);
  CHECK(y.shape() == std::vector<int>{1, 1, 2});
  CHECK(y[0] == 5.0f);
  CHECK(y[1] == 7.0f);
  Tensor gout = Tensor::full({1, 1, 2}, 1.0f);
  Tensor gi = maxpool2d_backward(gout, cache);
  CHECK(gi[1] == 1.0f);              // the 5
  CHECK(gi[6] == 1.0f);              // first 7 wins the tie deterministically
  CHECK(gi[0] + gi[2] + gi[3] + gi[4] + gi[5] + gi[7] == 0.0f);

  Rng rng(13);
  Tensor xr = test::random_tensor({2, 4, 4}, rng);
  Tensor goutr = test::random_tensor({2, 2, 2}, rng);
  PoolCache cr;
  maxpool2d_forward(xr, &cr);
  Tensor gr = maxpool2d_backward(goutr, cr);
  auto obj = [&] {
    Tensor y2 = maxpool2d_forward(xr, nullptr);
    double s = 0.0;
    for (int64_t i = 0; i < y2.numel(); ++i) s += static_cast<double>(goutr[i]) * y2[i];
    return s;
  };
  CHECK(max_rel_error(gr, [&](int64_t i) { return central_diff(xr, i, kFdEps, obj); }) < kFdTol);
}

TEST_CASE("sgd_step") {
  SUBCASE("lr 0 leaves parameters unchanged") {
    ParamBlock p("p", {3});
    p.value.fill(2.0f);
    p.grad.fill(5.0f);
    sgd_step({&p}, 0.0f, 0.9f, 1e-4f);
    for (int i = 0; i < 3; ++i) CHECK(p.value[i] == 2.0f);
    CHECK(p.grad[0] == 0.0f);  // gradients zeroed
  }
  SUBCASE("plain SGD arithmetic") {
    ParamBlock p("p", {1});
    p.value[0] = 1.0f;
    p.grad[0] = 2.0f;
    sgd_step({&p}, 0.1f, 0.0f, 0.0f);
    CHECK(p.value[0] == doctest::Approx(0.8f));
  }
  SUBCASE("two momentum steps reproduce the hand-unrolled recurrence") {
    ParamBlock p("p", {1});
    p.value[0] = 1.0f;
    float lr = 0.1f, mu = 0.9f, wd = 0.01f;
    // Step 1: g=0.5  v1 = g + wd*w0; w1 = w0 - lr*v1
    // Step 2: g=0.25 v2 = mu*v1 + g + wd*w1; w2 = w1 - lr*v2
    float w0 = 1.0f;
    float v1 = 0.5f + wd * w0;
    float w1 = w0 - lr * v1;
    float v2 = mu * v1 + 0.25f + wd * w1;
    float w2 = w1 - lr * v2;
    p.grad[0] = 0.5f;
    sgd_step({&p}, lr, mu, wd);
    CHECK(p.value[0] == doctest::Approx(w1));
    p.grad[0] = 0.25f;
    sgd_step({&p}, lr, mu, wd);
    CHECK(p.value[0] == doctest::Approx(w2));
  }
}

TEST_CASE("weight serialization round-trips bit-exactly") {
  Rng rng(14);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({2, 2, 2}, rng);
  a[0] = 0.1f;  // not exactly representable in decimal, catches text round-trips
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "textdet_weights_test";
  fs::create_directories(dir);
  std::string manifest = (dir / "w.manifest").string();
  std::string blob = (dir / "w.bin").string();
  save_weights({{"a", &a}, {"b", &b}}, manifest, blob);

  Tensor a2({3, 4}), b2({2, 2, 2});
  load_weights({{"a", &a2}, {"b", &b2}}, manifest, blob);
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a2[i] == a[i]);
  for (int64_t i = 0; i < b.numel(); ++i) CHECK(b2[i] == b[i]);

  Tensor wrong({4, 3});
  CHECK_THROWS_AS(load_weights({{"a", &wrong}, {"b", &b2}}, manifest, blob), ShapeMismatch);
  Tensor misnamed({3, 4});
  CHECK_THROWS_AS(load_weights({{"x", &misnamed}, {"b", &b2}}, manifest, blob), ShapeMismatch);
  fs::remove_all(dir);
}

TEST_CASE("kernel outputs stay finite on random inputs") {
  Rng rng(15);
  Tensor in = random_tensor({2, 3, 8, 8}, rng, -10.0, 10.0);
  Tensor k = random_tensor({4, 3, 3, 3}, rng, -2.0, 2.0);
  Tensor out = conv2d_forward(in, k, {}, 1, 1);
  CHECK(out.all_finite());
  CHECK(relu_forward(out).all_finite());
  CHECK(sigmoid_forward(out).all_finite());
}

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "sketchmatch/checkpoint.hpp"
#include "sketchmatch/ops.hpp"
#include "sketchmatch/optimizer.hpp"
#include "support/gradcheck.hpp"
#include "support/primitive_battery.hpp"

using namespace sketchmatch;
namespace fs = std::filesystem;

namespace {

// Direct-summation reference for conv2d, independent of the library loops.
std::vector<real> conv_reference(const std::vector<real>& x, std::size_t ci,
                                 std::size_t h, std::size_t w,
                                 const std::vector<real>& k, std::size_t co,
                                 std::size_t kh, std::size_t kw,
                                 const std::vector<real>& bias, std::size_t stride,
                                 std::size_t pad) {
  const std::size_t oh = (h + 2 * pad - kh) / stride + 1;
  const std::size_t ow = (w + 2 * pad - kw) / stride + 1;
  std::vector<real> out(co * oh * ow, real(0));
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        real acc = bias[o];
        for (std::size_t c = 0; c < ci; ++c)
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                        static_cast<std::ptrdiff_t>(pad);
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                        static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) ||
                  ix >= static_cast<std::ptrdiff_t>(w))
                continue;
              acc += x[(c * h + iy) * w + ix] * k[((o * ci + c) * kh + ky) * kw + kx];
            }
        out[(o * oh + oy) * ow + ox] = acc;
      }
  return out;
}

}  // namespace

TEST_CASE("softmax of a constant row is uniform") {
  Tensor x = Tensor::from({1, 2}, {0, 0});
  Tensor y = ops::softmax_rows(x);
  CHECK(y.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y.at(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("relu clamps negatives") {
  Tensor x = Tensor::from({1, 3}, {-1, 2, 0});
  Tensor y = ops::relu(x);
  CHECK(y.value() == std::vector<real>{0, 2, 0});
}

TEST_CASE("conv2d of all-ones 4x4 with all-ones 3x3 kernel gives 9s") {
  Tensor x = Tensor::full({1, 4, 4}, 1.0);
  Tensor k = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor b = Tensor::zeros({1});
  Tensor y = ops::conv2d(x, k, b, 1, 0);
  REQUIRE(y.shape() == Shape{1, 2, 2});
  auto ref = conv_reference(x.value(), 1, 4, 4, k.value(), 1, 3, 3, b.value(), 1, 0);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(y.value()[i] == doctest::Approx(9.0));
    CHECK(y.value()[i] == doctest::Approx(ref[i]));
  }
}

TEST_CASE("conv2d matches the direct-summation reference on random cases") {
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor x = smtest::random_tensor(rng, {2, 5, 6});
    Tensor k = smtest::random_tensor(rng, {3, 2, 3, 3});
    Tensor b = smtest::random_tensor(rng, {3});
    for (std::size_t stride : {std::size_t(1), std::size_t(2)}) {
      for (std::size_t pad : {std::size_t(0), std::size_t(1)}) {
        Tensor y = ops::conv2d(x, k, b, stride, pad);
        auto ref = conv_reference(x.value(), 2, 5, 6, k.value(), 3, 3, 3, b.value(),
                                  stride, pad);
        REQUIRE(y.size() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i)
          CHECK(y.value()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("backward of x*x at 3 gives 6") {
  Tensor x = Tensor::scalar(3.0, true);
  Tape tape;
  Tensor loss = ops::mul(x, x);
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("backward of sigmoid at 0 gives 1/4") {
  Tensor x = Tensor::scalar(0.0, true);
  Tape tape;
  Tensor loss = ops::sigmoid(x);
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(0.25));
}

TEST_CASE("five-tensor composite graph matches finite differences") {
  Rng rng(42);
  Tensor a = smtest::random_tensor(rng, {3, 4});
  Tensor b = smtest::random_tensor(rng, {4, 3});
  Tensor c = smtest::random_tensor(rng, {3, 3});
  Tensor g = smtest::random_tensor(rng, {3});
  Tensor h = smtest::random_tensor(rng, {3});
  auto loss = [&] {
    Tensor m = ops::matmul(a, b);                       // 3x3
    Tensor n = ops::add(ops::sigmoid(m), ops::mul(m, c));
    Tensor l = ops::layer_norm_rows(n, g, h);
    return ops::mean_square(ops::softmax_rows(l));
  };
  CHECK(smtest::grad_max_rel_error({a, b, c, g, h}, loss) < 1e-4);
}

TEST_CASE("a value reused by several consumers accumulates both contributions") {
  Tensor x = Tensor::scalar(2.0, true);
  Tape tape;
  Tensor y = ops::mul(x, x);            // x^2
  Tensor z = ops::add(y, ops::scale(x, 3.0));  // x^2 + 3x -> d/dx = 2x + 3 = 7
  tape.backward(z);
  CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("primitive battery stays under 1e-4 for several seeds") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL})
    CHECK(smtest::primitive_battery_worst_error(seed) < 1e-4);
}

TEST_CASE("softmax rows sum to one and lie in (0,1)") {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    Tensor x = smtest::random_tensor(rng, {4, 7});
    Tensor y = ops::softmax_rows(x);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      real sum = 0;
      for (std::size_t j = 0; j < y.cols(); ++j) {
        const real v = y.at(i, j);
        CHECK(v > real(0));
        CHECK(v < real(1));
        sum += v;
      }
      CHECK(std::fabs(sum - real(1)) < 1e-6);
    }
  }
}

TEST_CASE("layer norm rows have near-zero mean and unit variance pre-affine") {
  Rng rng(6);
  Tensor x = smtest::random_tensor(rng, {5, 16});
  Tensor gain = Tensor::full({16}, 1.0);
  Tensor bias = Tensor::zeros({16});
  Tensor y = ops::layer_norm_rows(x, gain, bias);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    real mean = 0, var = 0;
    for (std::size_t j = 0; j < y.cols(); ++j) mean += y.at(i, j);
    mean /= static_cast<real>(y.cols());
    for (std::size_t j = 0; j < y.cols(); ++j) {
      const real d = y.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<real>(y.cols());
    CHECK(std::fabs(mean) < 1e-6);
    CHECK(std::fabs(var - real(1)) < 1e-5);
  }
}

TEST_CASE("two backward passes from identical graphs give bit-identical grads") {
  auto run = [] {
    Rng rng(77);
    Tensor a = smtest::random_tensor(rng, {4, 4});
    Tensor b = smtest::random_tensor(rng, {4, 4});
    Tape tape;
    Tensor loss = ops::mean_square(ops::softmax_rows(ops::matmul(a, b)));
    tape.backward(loss);
    return std::make_pair(a.grad(), b.grad());
  };
  auto [ga1, gb1] = run();
  auto [ga2, gb2] = run();
  CHECK(ga1 == ga2);
  CHECK(gb1 == gb2);
}

TEST_CASE("shape mismatches are rejected with both shapes in the message") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({3, 2});
  CHECK_THROWS_WITH_AS(ops::add(a, b),
                       "add: shape mismatch [2, 3] vs [3, 2]", Error);
  CHECK_THROWS_AS(ops::matmul(a, Tensor::zeros({2, 2})), Error);
  CHECK_THROWS_AS(ops::affine(a, Tensor::zeros({3, 4}), Tensor::zeros({5})), Error);
  CHECK_THROWS_AS(ops::conv2d(Tensor::zeros({1, 4, 4}), Tensor::zeros({1, 2, 3, 3}),
                              Tensor::zeros({1}), 1, 0),
                  Error);
}

TEST_CASE("backward rejects a non-scalar loss and an empty tape") {
  Tensor x = Tensor::zeros({2, 2}, true);
  {
    Tape tape;
    Tensor y = ops::relu(x);
    CHECK_THROWS_AS(tape.backward(y), Error);
  }
  {
    Tape tape;
    CHECK_THROWS_AS(tape.backward(Tensor::scalar(0.0)), Error);
  }
}

TEST_CASE("dropout is identity in evaluation mode and rescales in training") {
  Rng rng(3);
  Tensor x = smtest::random_tensor(rng, {10, 10});
  Rng eval_rng(1);
  Tensor y = ops::dropout(x, 0.5, eval_rng, /*training=*/false);
  CHECK(y.value() == x.value());

  Rng train_rng(1);
  Tensor z = ops::dropout(x, 0.5, train_rng, /*training=*/true);
  int zeros = 0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (z.value()[i] == real(0)) {
      ++zeros;
    } else {
      CHECK(z.value()[i] == doctest::Approx(2.0 * x.value()[i]));
    }
  }
  CHECK(zeros > 10);
  CHECK(zeros < 90);
}

TEST_CASE("adamw: zero gradient and zero decay leave the parameter unchanged") {
  Tensor p = Tensor::scalar(1.5, true);
  p.zero_grad();
  AdamWConfig cfg;
  cfg.weight_decay = 0;
  AdamW opt({{"p", p}}, cfg);
  opt.step(0.1);
  CHECK(p.item() == doctest::Approx(1.5));
}

TEST_CASE("adamw single scalar step reproduces the closed-form update") {
  Tensor p = Tensor::scalar(1.0, true);
  {
    Tape tape;
    Tensor loss = ops::mul(p, p);  // grad = 2
    tape.backward(loss);
  }
  AdamWConfig cfg;
  cfg.beta1 = 0.9;
  cfg.beta2 = 0.999;
  cfg.eps = 1e-8;
  cfg.weight_decay = 0.1;
  AdamW opt({{"p", p}}, cfg);
  const double lr = 0.01, g = 2.0;
  opt.step(static_cast<real>(lr));
  // One-step closed form: mhat = g, vhat = g^2 (bias corrections cancel).
  const double expected = 1.0 - lr * (g / (std::sqrt(g * g) + 1e-8) + 0.1 * 1.0);
  CHECK(p.item() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("adamw with lr = 0 never moves parameters") {
  Tensor p = Tensor::scalar(2.0, true);
  {
    Tape tape;
    Tensor loss = ops::mul(p, p);
    tape.backward(loss);
  }
  AdamW opt({{"p", p}}, AdamWConfig{});
  opt.step(0.0);
  CHECK(p.item() == doctest::Approx(2.0));
}

TEST_CASE("adamw rejects a parameter with no gradient, naming it") {
  Tensor p = Tensor::scalar(1.0, true);
  AdamW opt({{"encoder.w", p}}, AdamWConfig{});
  CHECK_THROWS_WITH_AS(opt.step(0.1),
                       "adamw: missing gradient for parameter 'encoder.w'", Error);
}

TEST_CASE("checkpoint round-trips values and writes a name manifest") {
  ParamStore store;
  Rng rng(9);
  store.create_normal("alpha.w", {3, 4}, rng, 0.5);
  store.create_normal("beta.b", {7}, rng, 0.5);
  const auto before_a = store.get("alpha.w").value();
  const auto before_b = store.get("beta.b").value();

  const fs::path dir = fs::temp_directory_path() / "sm_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "model.ckpt").string();
  save_checkpoint(store, path);

  for (auto& v : store.get("alpha.w").raw_value()) v = 0;
  for (auto& v : store.get("beta.b").raw_value()) v = 0;
  load_checkpoint(store, path);
  CHECK(store.get("alpha.w").value() == before_a);
  CHECK(store.get("beta.b").value() == before_b);

  std::ifstream manifest(path + ".manifest");
  REQUIRE(manifest.good());
  std::string line;
  std::getline(manifest, line);
  CHECK(line == "# sketchmatch-checkpoint-manifest v1");
  std::getline(manifest, line);
  CHECK(line == "alpha.w\t3x4");

  ParamStore other;
  other.create_zeros("alpha.w", {3, 4});
  other.create_zeros("beta.b", {8});  // wrong shape
  CHECK_THROWS_AS(load_checkpoint(other, path), Error);
  fs::remove_all(dir);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <stdexcept>

#include "tbseg/loss.hpp"
#include "tbseg/ops.hpp"
#include "tbseg/optim.hpp"
#include "tbseg/param_set.hpp"
#include "tbseg/rng.hpp"
#include "tbseg/schedule.hpp"
#include "tbseg/tape.hpp"
#include "tbseg/tensor.hpp"
#include "test_util.hpp"

using namespace tbseg;
using namespace tbseg::testutil;

// ---------------------------------------------------------------- rng

TEST_CASE("rng produces the frozen splitmix64 stream") {
  Rng rng(42);
  CHECK(rng.next_u64() == 0xBDD732262FEB6E95ULL);
  CHECK(rng.next_u64() == 0x28EFE333B266F103ULL);
  CHECK(rng.next_u64() == 0x47526757130F9F52ULL);
}

TEST_CASE("rng determinism and uniform range") {
  Rng a(7), b(7);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  Rng u(42);
  CHECK(u.uniform() == doctest::Approx(0.7415648698806763).epsilon(1e-7));
  for (int i = 0; i < 1000; ++i) {
    const float x = u.uniform();
    CHECK(x >= 0.0f);
    CHECK(x < 1.0f);
  }
}

TEST_CASE("rng below stays in range") {
  Rng rng(3);
  for (uint64_t n : {1ULL, 2ULL, 7ULL, 100ULL}) {
    for (int i = 0; i < 200; ++i) CHECK(rng.below(n) < n);
  }
}

TEST_CASE("rng normal is roughly standard") {
  Rng rng(11);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    sum += x;
    sq += x * x;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::fabs(mean) < 0.03);
  CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("rng streams are frozen and order-independent") {
  Rng parent(42);
  CHECK(parent.stream(7).seed() == 0x819C5449A729B316ULL);
  parent.next_u64();  // consuming the parent must not move its streams
  Rng child = parent.stream(7);
  CHECK(child.seed() == 0x819C5449A729B316ULL);
  CHECK(child.next_u64() == 0x93C7DBF1F8B20EB9ULL);
  CHECK(parent.stream(1).seed() != parent.stream(2).seed());
}

// ---------------------------------------------------------------- tensor

TEST_CASE("tensor shape/data invariants") {
  Tensor t({2, 3});
  CHECK(t.size() == 6);
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5)), std::invalid_argument);
  Tensor f = Tensor::full({2, 2}, 1.5f);
  CHECK(f[3] == 1.5f);
  Tensor z = Tensor::zeros_like(f);
  CHECK(z.same_shape(f));
  CHECK(z[0] == 0.0f);
  CHECK(f.all_finite());
  f[1] = std::numeric_limits<float>::quiet_NaN();
  CHECK_FALSE(f.all_finite());
  CHECK_THROWS_AS(require_finite(f, "test"), std::runtime_error);
  CHECK(t.shape_str() == "(2, 3)");
}

TEST_CASE("param set ordering and compatibility") {
  ParamSet p;
  p.insert("b.weight", Tensor({2}));
  p.insert("a.weight", Tensor({3}));
  CHECK_THROWS_AS(p.insert("a.weight", Tensor({3})), std::invalid_argument);
  CHECK(p.names() == std::vector<std::string>{"a.weight", "b.weight"});
  ParamSet q;
  q.insert("a.weight", Tensor({3}));
  CHECK_FALSE(p.shape_compatible(q));
  q.insert("b.weight", Tensor({2}));
  CHECK(p.shape_compatible(q));
  q.at("b.weight") = Tensor({4});
  CHECK_FALSE(p.shape_compatible(q));
  CHECK(ParamSet::is_bn_buffer("enc1.bn1.running_mean"));
  CHECK(ParamSet::is_bn_buffer("enc1.bn2.running_var"));
  CHECK_FALSE(ParamSet::is_bn_buffer("enc1.conv1.weight"));
  CHECK_FALSE(ParamSet::is_bn_buffer("running_mean"));
  CHECK(p.element_count() == 5);
}

// ---------------------------------------------------------------- ops forward

TEST_CASE("conv2d 1x1 identity kernel is the identity") {
  Rng rng(1);
  Tensor x = random_tensor({2, 1, 4, 4}, rng);
  Tensor w({1, 1, 1, 1}, {1.0f});
  Tensor b({1}, {0.0f});
  Tensor y = ops::conv2d_forward(x, w, b);
  REQUIRE(y.same_shape(x));
  for (size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("conv2d 3x3 all-ones sums the neighbourhood") {
  Tensor x = Tensor::full({1, 1, 5, 5}, 1.0f);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor b({1}, {0.5f});
  Tensor y = ops::conv2d_forward(x, w, b);
  CHECK(y[2 * 5 + 2] == 9.5f);  // interior: 9 ones + bias
  CHECK(y[0] == 4.5f);          // corner: 4 ones + bias
  CHECK(y[2] == 6.5f);          // top edge: 6 ones + bias
}

TEST_CASE("conv2d validates shapes") {
  Tensor x({1, 2, 4, 4});
  CHECK_THROWS(ops::conv2d_forward(x, Tensor({1, 3, 3, 3}), Tensor({1})));  // Cin mismatch
  CHECK_THROWS(ops::conv2d_forward(x, Tensor({1, 2, 5, 5}), Tensor({1})));  // bad K
  CHECK_THROWS(ops::conv2d_forward(x, Tensor({2, 2, 3, 3}), Tensor({1})));  // bias mismatch
}

TEST_CASE("relu clamps negatives") {
  Tensor x({1, 1, 1, 3}, {-1.0f, 0.0f, 2.0f});
  Tensor y = ops::relu_forward(x);
  CHECK(y[0] == 0.0f);
  CHECK(y[1] == 0.0f);
  CHECK(y[2] == 2.0f);
}

TEST_CASE("maxpool picks window maxima, first-wins on ties") {
  Tensor x({1, 1, 2, 4}, {1, 5, 3, 3, 2, 5, 3, 3});
  std::vector<uint32_t> argmax;
  Tensor y = ops::maxpool2x2_forward(x, argmax);
  REQUIRE(y.shape() == std::vector<size_t>{1, 1, 1, 2});
  CHECK(y[0] == 5.0f);
  CHECK(y[1] == 3.0f);
  CHECK(argmax[0] == 1);  // first 5 in scan order
  CHECK(argmax[1] == 2);  // first 3 in scan order
}

TEST_CASE("upsample nearest doubles extents") {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor y = ops::upsample_nearest2x_forward(x);
  REQUIRE(y.shape() == std::vector<size_t>{1, 1, 4, 4});
  CHECK(y[0] == 1.0f);
  CHECK(y[1] == 1.0f);
  CHECK(y[4 + 2] == 2.0f);
  CHECK(y[3 * 4 + 3] == 4.0f);
}

TEST_CASE("softmax of zero logits is uniform") {
  Tensor x = Tensor::full({1, 4, 1, 1}, 0.0f);
  Tensor y = ops::softmax_channels_forward(x);
  for (size_t k = 0; k < 4; ++k) CHECK(y[k] == doctest::Approx(0.25).epsilon(1e-7));
}

TEST_CASE("softmax sums to one and stays in [0,1]") {
  Rng rng(5);
  Tensor x = random_tensor({2, 4, 3, 3}, rng, 5.0f);
  Tensor y = ops::softmax_channels_forward(x);
  const size_t hw = 9;
  for (size_t n = 0; n < 2; ++n) {
    for (size_t v = 0; v < hw; ++v) {
      double s = 0.0;
      for (size_t k = 0; k < 4; ++k) {
        const float p = y[(n * 4 + k) * hw + v];
        CHECK(p >= 0.0f);
        CHECK(p <= 1.0f);
        s += p;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
}

TEST_CASE("concat stacks channels in order") {
  Tensor a = Tensor::full({1, 2, 2, 2}, 1.0f);
  Tensor b = Tensor::full({1, 1, 2, 2}, 2.0f);
  Tensor y = ops::concat_channels_forward(a, b);
  REQUIRE(y.shape() == std::vector<size_t>{1, 3, 2, 2});
  CHECK(y[0] == 1.0f);
  CHECK(y[2 * 4] == 2.0f);
}

TEST_CASE("batchnorm train mode normalizes with batch statistics") {
  Rng rng(9);
  Tensor x = random_tensor({4, 3, 6, 6}, rng, 2.0f);
  for (size_t i = 0; i < x.size(); ++i) x[i] += 1.5f;
  Tensor gamma = Tensor::full({3}, 1.0f);
  Tensor beta = Tensor::full({3}, 0.0f);
  Tensor rm = Tensor::full({3}, 0.0f);
  Tensor rv = Tensor::full({3}, 1.0f);
  ops::BatchNormContext ctx;
  Tensor y = ops::batchnorm_forward(x, gamma, beta, rm, rv, true, 0.1f, 1e-5f, ctx);
  const size_t per = 4 * 36;
  for (size_t c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    for (size_t n = 0; n < 4; ++n) {
      for (size_t v = 0; v < 36; ++v) mean += y[(n * 3 + c) * 36 + v];
    }
    mean /= per;
    for (size_t n = 0; n < 4; ++n) {
      for (size_t v = 0; v < 36; ++v) {
        const double d = y[(n * 3 + c) * 36 + v] - mean;
        var += d * d;
      }
    }
    var /= per;
    CHECK(std::fabs(mean) < 1e-5);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
    // running update: (1-m)*prev + m*batch, unbiased variance
    CHECK(rm[c] == doctest::Approx(0.9 * 0.0 + 0.1 * (ctx.mean[c])).epsilon(1e-6));
  }
}

TEST_CASE("batchnorm eval mode is a fixed affine map") {
  Tensor gamma({1}, {2.0f});
  Tensor beta({1}, {1.0f});
  Tensor rm({1}, {3.0f});
  Tensor rv({1}, {4.0f});
  Tensor x({1, 1, 1, 2}, {3.0f, 5.0f});
  ops::BatchNormContext ctx;
  Tensor y = ops::batchnorm_forward(x, gamma, beta, rm, rv, false, 0.1f, 1e-5f, ctx);
  // (x - 3) / sqrt(4 + 1e-5) * 2 + 1
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(y[1] == doctest::Approx(3.0).epsilon(1e-4));
  CHECK(rm[0] == 3.0f);  // eval never touches running stats
  CHECK(rv[0] == 4.0f);
}

TEST_CASE("batchnorm floors the running variance at eps") {
  Tensor gamma({1}, {1.0f});
  Tensor beta({1}, {0.0f});
  Tensor rm({1}, {0.0f});
  Tensor rv({1}, {1.0f});
  Tensor x = Tensor::full({2, 1, 2, 2}, 5.0f);  // zero batch variance
  ops::BatchNormContext ctx;
  ops::batchnorm_forward(x, gamma, beta, rm, rv, true, 1.0f, 1e-5f, ctx);
  CHECK(rv[0] == 1e-5f);
  CHECK(rm[0] == 5.0f);
}

TEST_CASE("dropout p=0 is the identity and consumes no randomness") {
  Rng rng(21);
  Tensor x = random_tensor({1, 2, 3, 3}, rng);
  Rng d(100);
  std::vector<float> mask;
  Tensor y = ops::dropout_forward(x, 0.0f, d, mask);
  CHECK(d.counter() == 0);
  CHECK(mask.empty());
  for (size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("dropout scales kept activations by 1/(1-p)") {
  Tensor x = Tensor::full({1, 1, 32, 32}, 1.0f);
  Rng d(5);
  std::vector<float> mask;
  Tensor y = ops::dropout_forward(x, 0.25f, d, mask);
  size_t kept = 0;
  for (size_t i = 0; i < y.size(); ++i) {
    CHECK((y[i] == 0.0f || y[i] == doctest::Approx(1.0f / 0.75f).epsilon(1e-6)));
    kept += y[i] != 0.0f;
  }
  const double rate = static_cast<double>(kept) / static_cast<double>(y.size());
  CHECK(rate > 0.65);
  CHECK(rate < 0.85);
}

// ---------------------------------------------------------------- tape + gradients

TEST_CASE("conv2d backward solves the linear case exactly") {
  // y = w * x (1x1 kernel, one channel): with upstream grad of all ones,
  // d/dw = sum(x) and d/dx = w everywhere.
  Rng rng(2);
  Tensor x = random_tensor({1, 1, 3, 3}, rng);
  Tensor w({1, 1, 1, 1}, {2.0f});
  Tensor grad_out = Tensor::full({1, 1, 3, 3}, 1.0f);
  Tensor gx = Tensor::zeros_like(x);
  Tensor gw = Tensor::zeros_like(w);
  Tensor gb({1});
  ops::conv2d_backward(x, w, grad_out, gx, gw, gb);
  double sum = 0.0;
  for (size_t i = 0; i < x.size(); ++i) sum += x[i];
  CHECK(gw[0] == doctest::Approx(sum).epsilon(1e-6));
  CHECK(gb[0] == doctest::Approx(9.0).epsilon(1e-7));
  for (size_t i = 0; i < x.size(); ++i) CHECK(gx[i] == 2.0f);
}

TEST_CASE("tape refuses gradient queries before backward") {
  Tape tape;
  Tape::NodeId x = tape.input(Tensor::full({1, 1, 2, 2}, 1.0f));
  CHECK(tape.value(x).size() == 4);
  CHECK_THROWS_AS(tape.grad(x), std::logic_error);
  ParamSet p;
  CHECK_THROWS_AS(tape.param_grads(p), std::logic_error);
}

TEST_CASE("backward of the composite loss matches finite differences on logits") {
  Rng rng(3);
  const size_t n = 2, c = 3, h = 4, w = 4;
  Tensor logits = random_tensor({n, c, h, w}, rng, 1.5f);
  ByteImage labels({n, h, w});
  Rng lr(4);
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<uint8_t>(lr.below(c));

  CeDiceContext ctx;
  ce_dice_forward(logits, labels, ctx);
  Tensor analytic = ce_dice_backward(ctx);

  // Evaluate the FD scalar from the double accumulators; the float return
  // value would inject half-ulp noise of ~1e-7/(2 eps) into the quotient.
  auto eval = [&]() {
    CeDiceContext tmp;
    ce_dice_forward(logits, labels, tmp);
    return tmp.ce + tmp.dice_loss;
  };
  CHECK(max_fd_error(logits, eval, analytic) < kFdRelTol);
}

TEST_CASE("tape end-to-end gradient through every layer kind") {
  // conv3 -> bn(train) -> relu -> pool -> conv1 -> upsample -> concat ->
  // dropout(p=0) -> softmax/ce_dice
  Rng rng(12);
  Tensor x = random_tensor({2, 2, 4, 4}, rng);
  push_off_kink(x);
  Tensor wc = random_tensor({3, 2, 3, 3}, rng, 0.4f);
  Tensor bc = random_tensor({3}, rng, 0.1f);
  Tensor g = Tensor::full({3}, 1.2f);
  Tensor be = Tensor::full({3}, 0.1f);
  Tensor w1 = random_tensor({2, 3, 1, 1}, rng, 0.5f);
  Tensor b1 = random_tensor({2}, rng, 0.1f);
  ByteImage labels({2, 4, 4});
  Rng lrng(8);
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<uint8_t>(lrng.below(5));

  // Returns the pre-loss logits node so FD evaluations can reduce to a
  // double-precision scalar; the tape's loss node itself is float-valued.
  auto run = [&](Tape& tape) {
    Tensor rm = Tensor::full({3}, 0.0f);
    Tensor rv = Tensor::full({3}, 1.0f);
    Rng drop(77);
    Tape::NodeId xi = tape.input(x);
    Tape::NodeId y = tape.conv2d(xi, tape.param("wc", wc), tape.param("bc", bc));
    y = tape.batchnorm(y, tape.param("g", g), tape.param("be", be), &rm, &rv, true, 0.0f, 1e-5f);
    y = tape.relu(y);
    Tape::NodeId pooled = tape.maxpool2x2(y);
    Tape::NodeId small = tape.conv2d(pooled, tape.param("w1", w1), tape.param("b1", b1));
    Tape::NodeId up = tape.upsample_nearest2x(small);
    Tape::NodeId cat = tape.concat_channels(up, y);  // 2 + 3 = 5 channels
    cat = tape.dropout(cat, 0.0f, drop, true);
    return cat;
  };

  Tape tape;
  Tape::NodeId logits_node = run(tape);
  Tape::NodeId loss = tape.ce_dice_loss(logits_node, labels);
  tape.backward(loss);
  ParamSet params;
  params.insert("wc", wc);
  params.insert("bc", bc);
  params.insert("g", g);
  params.insert("be", be);
  params.insert("w1", w1);
  params.insert("b1", b1);
  params.insert("unused", Tensor({2}));
  ParamSet grads = tape.param_grads(params);
  for (size_t i = 0; i < 2; ++i) CHECK(grads.at("unused")[i] == 0.0f);

  auto fd_on = [&](Tensor& target, const Tensor& analytic) {
    auto eval = [&]() {
      Tape t2;
      CeDiceContext c;
      ce_dice_forward(t2.value(run(t2)), labels, c);
      return c.ce + c.dice_loss;
    };
    CHECK(max_fd_error(target, eval, analytic) < kFdRelTol);
  };
  fd_on(wc, grads.at("wc"));
  fd_on(bc, grads.at("bc"));
  fd_on(g, grads.at("g"));
  fd_on(be, grads.at("be"));
  fd_on(w1, grads.at("w1"));
  fd_on(b1, grads.at("b1"));
}

TEST_CASE("backward rejects non-scalar roots") {
  Tape tape;
  Tape::NodeId x = tape.input(Tensor({1, 1, 2, 2}));
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

// ---------------------------------------------------------------- loss oracles

TEST_CASE("perfect confident prediction has near-zero loss") {
  const size_t c = 4, h = 4, w = 4;
  ByteImage labels({1, h, w});
  Rng rng(6);
  for (size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<uint8_t>(rng.below(c));
  Tensor logits({1, c, h, w});
  for (size_t v = 0; v < h * w; ++v) {
    for (size_t k = 0; k < c; ++k) {
      logits[k * h * w + v] = (labels[v] == k) ? 20.0f : -20.0f;
    }
  }
  CeDiceContext ctx;
  const float loss = ce_dice_forward(logits, labels, ctx);
  CHECK(loss <= 1e-3f);
}

TEST_CASE("uniform prediction pays log C nats of cross-entropy") {
  const size_t c = 4, h = 2, w = 2;
  Tensor logits = Tensor::full({1, c, h, w}, 0.0f);
  ByteImage labels({1, h, w}, {0, 1, 2, 3});
  CeDiceContext ctx;
  ce_dice_forward(logits, labels, ctx);
  CHECK(ctx.ce == doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("channel swap changes the loss unless labels swap too") {
  const size_t c = 3, h = 2, w = 2;
  Rng rng(14);
  Tensor logits = random_tensor({1, c, h, w}, rng);
  ByteImage labels({1, h, w}, {0, 1, 2, 1});
  CeDiceContext ctx;
  const float base = ce_dice_forward(logits, labels, ctx);

  Tensor swapped = logits;  // swap channels 1 and 2
  for (size_t v = 0; v < h * w; ++v) std::swap(swapped[1 * h * w + v], swapped[2 * h * w + v]);
  CeDiceContext ctx2;
  const float after = ce_dice_forward(swapped, labels, ctx2);
  CHECK(after != base);

  ByteImage relabeled({1, h, w}, {0, 2, 1, 2});
  CeDiceContext ctx3;
  const float matched = ce_dice_forward(swapped, relabeled, ctx3);
  CHECK(matched == doctest::Approx(base).epsilon(1e-6));
}

TEST_CASE("loss rejects out-of-range labels") {
  Tensor logits({1, 2, 2, 2});
  ByteImage labels({1, 2, 2}, {0, 1, 2, 0});  // class 2 with C=2
  CeDiceContext ctx;
  CHECK_THROWS_AS(ce_dice_forward(logits, labels, ctx), std::invalid_argument);
}

// ---------------------------------------------------------------- optimizer

namespace {
ParamSet single(const std::string& name, std::vector<float> vals) {
  const size_t n = vals.size();
  ParamSet p;
  p.insert(name, Tensor({n}, std::move(vals)));
  return p;
}
}  // namespace

TEST_CASE("sgd lr=0 leaves params bit-exact") {
  ParamSet p = single("w", {1.25f, -0.5f});
  ParamSet g = single("w", {10.0f, 3.0f});
  ParamSet v = make_velocity(p);
  sgd_momentum_step(p, g, v, 0.0f, 0.9f, 0.0f, false);
  CHECK(p.at("w")[0] == 1.25f);
  CHECK(p.at("w")[1] == -0.5f);
}

TEST_CASE("plain gradient step: w=1, g=0.5, lr=0.1 -> 0.95") {
  ParamSet p = single("w", {1.0f});
  ParamSet g = single("w", {0.5f});
  ParamSet v = make_velocity(p);
  sgd_momentum_step(p, g, v, 0.1f, 0.0f, 0.0f, false);
  CHECK(p.at("w")[0] == doctest::Approx(0.95).epsilon(1e-7));
}

TEST_CASE("two momentum steps follow the hand-rolled recurrence") {
  ParamSet p = single("w", {1.0f});
  ParamSet g = single("w", {1.0f});
  ParamSet v = make_velocity(p);
  sgd_momentum_step(p, g, v, 0.1f, 0.9f, 0.0f, false);
  CHECK(v.at("w")[0] == doctest::Approx(-0.1).epsilon(1e-7));
  sgd_momentum_step(p, g, v, 0.1f, 0.9f, 0.0f, false);
  CHECK(v.at("w")[0] == doctest::Approx(-0.19).epsilon(1e-7));
  CHECK(p.at("w")[0] == doctest::Approx(1.0 - 0.29).epsilon(1e-7));
}

TEST_CASE("nesterov applies the lookahead form") {
  ParamSet p = single("w", {1.0f});
  ParamSet g = single("w", {1.0f});
  ParamSet v = make_velocity(p);
  // v1 = -lr*g = -0.1; w += mu*v1 - lr*g = 1 - 0.09 - 0.1 = 0.81
  sgd_momentum_step(p, g, v, 0.1f, 0.9f, 0.0f, true);
  CHECK(v.at("w")[0] == doctest::Approx(-0.1).epsilon(1e-7));
  CHECK(p.at("w")[0] == doctest::Approx(0.81).epsilon(1e-7));
}

TEST_CASE("weight decay folds into the gradient") {
  ParamSet p = single("w", {2.0f});
  ParamSet g = single("w", {0.0f});
  ParamSet v = make_velocity(p);
  // g_total = 0 + 0.1*2 = 0.2; w = 2 - 0.5*0.2 = 1.9
  sgd_momentum_step(p, g, v, 0.5f, 0.0f, 0.1f, false);
  CHECK(p.at("w")[0] == doctest::Approx(1.9).epsilon(1e-7));
}

TEST_CASE("bn running statistics pass through the optimizer untouched") {
  ParamSet p;
  p.insert("a.bn1.running_mean", Tensor({2}, {1.0f, 2.0f}));
  p.insert("a.bn1.running_var", Tensor({2}, {3.0f, 4.0f}));
  p.insert("a.conv1.weight", Tensor({2}, {1.0f, 1.0f}));
  ParamSet g;
  g.insert("a.bn1.running_mean", Tensor({2}, {9.0f, 9.0f}));
  g.insert("a.bn1.running_var", Tensor({2}, {9.0f, 9.0f}));
  g.insert("a.conv1.weight", Tensor({2}, {1.0f, 1.0f}));
  ParamSet v = make_velocity(p);
  sgd_momentum_step(p, g, v, 0.1f, 0.9f, 0.01f, true);
  CHECK(p.at("a.bn1.running_mean")[0] == 1.0f);
  CHECK(p.at("a.bn1.running_var")[1] == 4.0f);
  CHECK(p.at("a.conv1.weight")[0] != 1.0f);
}

TEST_CASE("optimizer validates shape compatibility and lr") {
  ParamSet p = single("w", {1.0f});
  ParamSet g = single("w", {1.0f, 2.0f});
  ParamSet v = make_velocity(p);
  CHECK_THROWS(sgd_momentum_step(p, g, v, 0.1f, 0.9f, 0.0f, false));
  ParamSet g2 = single("w", {1.0f});
  CHECK_THROWS(sgd_momentum_step(p, g2, v, -0.1f, 0.9f, 0.0f, false));
}

// ---------------------------------------------------------------- schedule

TEST_CASE("poly decay oracle values") {
  CHECK(lr_poly(0, 1000, 0.01, 0.9) == 0.01);
  CHECK(lr_poly(999, 1000, 0.01, 0.9) == doctest::Approx(1.995262314968881e-05).epsilon(1e-12));
  double prev = 1.0;
  for (int t = 0; t < 1000; t += 13) {
    const double lr = lr_poly(t, 1000, 0.01, 0.9);
    CHECK(lr <= prev);
    prev = lr;
  }
  CHECK_THROWS_AS(lr_poly(1000, 1000, 0.01, 0.9), std::invalid_argument);
  CHECK_THROWS_AS(lr_poly(-1, 1000, 0.01, 0.9), std::invalid_argument);
}

TEST_CASE("cyclical schedule restarts and plateau oracle values") {
  TrainConfig cfg;  // defaults: T=1200, M=3, gamma=0.8, a0=0.01, ar=0.1, eps=0.9
  CHECK(lr_cyclical(0, cfg) == 0.1);
  CHECK(lr_cyclical(400, cfg) == 0.1);
  CHECK(lr_cyclical(800, cfg) == 0.1);
  CHECK(lr_cyclical(1000, cfg) == doctest::Approx(0.008486661467891869).epsilon(1e-12));
  const double plateau = lr_cyclical(320, cfg);
  CHECK(plateau == doctest::Approx(0.007564344220695323).epsilon(1e-12));
  for (int tc = 320; tc < 400; ++tc) {
    CHECK(lr_cyclical(tc, cfg) == plateau);        // cycle 1
    CHECK(lr_cyclical(400 + tc, cfg) == plateau);  // identical across cycles
    CHECK(lr_cyclical(800 + tc, cfg) == plateau);
  }
  // nonincreasing within a cycle for t_c >= 1
  double prev = 1e9;
  for (int tc = 1; tc < 400; ++tc) {
    const double lr = lr_cyclical(tc, cfg);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("cycle-length denominator variant") {
  TrainConfig cfg;
  cfg.lr_denominator = LrDenominator::kCycleLength;
  // t=1000 -> t_c=200, denom 400: 0.01*(1-0.5)^0.9
  CHECK(lr_cyclical(1000, cfg) == doctest::Approx(0.01 * std::pow(0.5, 0.9)).epsilon(1e-12));
}

TEST_CASE("collection window enumerations") {
  TrainConfig cfg;  // defaults
  CHECK(collection_window_start(cfg) == 320);
  const auto epochs = collection_epochs(cfg);
  CHECK(epochs.size() == 240);
  int per_cycle[3] = {0, 0, 0};
  for (int t : epochs) per_cycle[t / 400] += 1;
  CHECK(per_cycle[0] == 80);
  CHECK(per_cycle[1] == 80);
  CHECK(per_cycle[2] == 80);

  TrainConfig desk;
  desk.total_epochs = 60;
  desk.cycles = 3;
  CHECK(collection_window_start(desk) == 16);
  const auto desk_epochs = collection_epochs(desk);
  const std::vector<int> want = {16, 17, 18, 19, 36, 37, 38, 39, 56, 57, 58, 59};
  CHECK(desk_epochs == want);

  TrainConfig tiny;
  tiny.total_epochs = 10;
  tiny.cycles = 1;
  CHECK(collection_epochs(tiny) == std::vector<int>{8, 9});
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.cycles = 7;  // 1200 % 7 != 0
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.gamma = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = TrainConfig{};
  cfg.alpha0 = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

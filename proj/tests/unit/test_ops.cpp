#include <gtest/gtest.h>

#include <cmath>

#include "sgsasr/errors.hpp"
#include "sgsasr/ops.hpp"
#include "test_util.hpp"

using namespace sgsasr;
using sgsasr::testing::random_tensor;
using sgsasr::testing::random_var;
using ag::Var;

namespace {

// Checks every input element's gradient of sum(f(inputs) * r) against central differences.
void gradcheck(const std::function<Var(const std::vector<Var>&)>& f, std::vector<Var> inputs, double tol = 1e-6) {
  Rng rng(99);
  const Tensor probe = random_tensor(f(inputs).shape(), rng);
  const auto loss = [&] {
    ag::NoGradGuard g;
    return ops::dot_constant(f(inputs), probe).value()[0];
  };
  for (auto& in : inputs) in.zero_grad();
  ag::backward(ops::dot_constant(f(inputs), probe));
  for (auto& in : inputs) {
    if (!in.requires_grad()) continue;
    const Tensor analytic = in.grad();
    ASSERT_EQ(analytic.size(), in.value().size());
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double numeric = sgsasr::testing::central_difference(in, i, 1e-5, loss);
      EXPECT_NEAR(analytic[i], numeric, tol * std::max(1.0, std::abs(numeric))) << "element " << i;
    }
  }
}

double naive_conv(const Tensor& x, const Tensor& w, const Tensor* b, int n, int co, int y, int xo,
                  ops::Conv2dSpec spec) {
  const int cin_g = w.c();
  const int cout_g = w.n() / spec.groups;
  const int g = co / cout_g;
  double acc = b ? (*b)[co] : 0.0;
  for (int ci = 0; ci < cin_g; ++ci) {
    for (int ky = 0; ky < w.h(); ++ky) {
      for (int kx = 0; kx < w.w(); ++kx) {
        const int iy = y * spec.stride - spec.padding + ky;
        const int ix = xo * spec.stride - spec.padding + kx;
        if (iy < 0 || ix < 0 || iy >= x.h() || ix >= x.w()) continue;
        acc += w.at(co, ci, ky, kx) * x.at(n, g * cin_g + ci, iy, ix);
      }
    }
  }
  return acc;
}

}  // namespace

TEST(Conv2d, MatchesDirectSummation) {
  Rng rng(1);
  struct Case {
    int cin, cout, k, stride, pad, groups;
  };
  for (const Case c : {Case{3, 4, 3, 1, 1, 1}, Case{4, 6, 2, 2, 0, 1}, Case{4, 4, 3, 1, 1, 4}, Case{5, 7, 1, 1, 0, 1},
                       Case{4, 6, 3, 2, 1, 2}}) {
    const Tensor x = random_tensor({2, c.cin, 7, 6}, rng);
    const Tensor w = random_tensor({c.cout, c.cin / c.groups, c.k, c.k}, rng);
    const Tensor b = random_tensor({1, c.cout, 1, 1}, rng);
    const ops::Conv2dSpec spec{c.stride, c.pad, c.groups};
    const Tensor y = ops::conv2d(Var(x), Var(w), Var(b), spec).value();
    for (int n = 0; n < y.n(); ++n)
      for (int co = 0; co < y.c(); ++co)
        for (int yy = 0; yy < y.h(); ++yy)
          for (int xx = 0; xx < y.w(); ++xx)
            EXPECT_NEAR(y.at(n, co, yy, xx), naive_conv(x, w, &b, n, co, yy, xx, spec), 1e-12);
  }
}

TEST(Conv2d, CountsTwoFlopsPerMac) {
  Rng rng(2);
  const ops::FlopScope scope;
  (void)ops::conv2d(Var(random_tensor({1, 1, 10, 10}, rng)), Var(random_tensor({1, 1, 3, 3}, rng)), Var(),
                    {1, 1, 1});
  EXPECT_EQ(scope.elapsed(), 1800u);
}

TEST(Linear, CountsPerEvaluation) {
  Rng rng(3);
  const ops::FlopScope scope;
  (void)ops::linear(Var(random_tensor({1, 128, 1, 1}, rng)), Var(random_tensor({288, 128, 1, 1}, rng)),
                    Var(random_tensor({1, 288, 1, 1}, rng)));
  EXPECT_EQ(scope.elapsed(), 73728u);
}

TEST(Linear, ColumnsAreIndependentOfBatchComposition) {
  Rng rng(4);
  const Tensor w = random_tensor({9, 13, 1, 1}, rng);
  const Tensor b = random_tensor({1, 9, 1, 1}, rng);
  const Tensor x = random_tensor({1, 13, 1, 37}, rng);
  const Tensor all = ops::linear(Var(x), Var(w), Var(b)).value();
  for (int j = 0; j < 37; ++j) {
    Tensor col({1, 13, 1, 1});
    for (int c = 0; c < 13; ++c) col.at(0, c, 0, 0) = x.at(0, c, 0, j);
    const Tensor one = ops::linear(Var(col), Var(w), Var(b)).value();
    for (int c = 0; c < 9; ++c) EXPECT_EQ(one.at(0, c, 0, 0), all.at(0, c, 0, j));
  }
}

TEST(Gradients, Conv2dVariants) {
  Rng rng(5);
  gradcheck([](const auto& v) { return ops::conv2d(v[0], v[1], v[2], {1, 1, 1}); },
            {random_var({2, 3, 5, 4}, rng, true), random_var({4, 3, 3, 3}, rng, true),
             random_var({1, 4, 1, 1}, rng, true)});
  gradcheck([](const auto& v) { return ops::conv2d(v[0], v[1], v[2], {2, 0, 1}); },
            {random_var({1, 2, 6, 6}, rng, true), random_var({4, 2, 2, 2}, rng, true),
             random_var({1, 4, 1, 1}, rng, true)});
  gradcheck([](const auto& v) { return ops::conv2d(v[0], v[1], v[2], {1, 1, 4}); },
            {random_var({2, 4, 4, 5}, rng, true), random_var({4, 1, 3, 3}, rng, true),
             random_var({1, 4, 1, 1}, rng, true)});
  gradcheck([](const auto& v) { return ops::conv2d(v[0], v[1], Var(), {1, 0, 1}); },
            {random_var({2, 3, 3, 3}, rng, true), random_var({5, 3, 1, 1}, rng, true)});
}

TEST(Gradients, Elementwise) {
  Rng rng(6);
  gradcheck([](const auto& v) { return ops::layer_norm_channels(v[0], v[1], v[2]); },
            {random_var({2, 5, 3, 3}, rng, true), random_var({1, 5, 1, 1}, rng, true),
             random_var({1, 5, 1, 1}, rng, true)});
  gradcheck([](const auto& v) { return ops::simple_gate(v[0]); }, {random_var({2, 6, 3, 2}, rng, true)});
  gradcheck([](const auto& v) { return ops::global_avg_pool(v[0]); }, {random_var({2, 3, 4, 3}, rng, true)});
  gradcheck([](const auto& v) { return ops::mul_channel_broadcast(v[0], v[1]); },
            {random_var({2, 3, 4, 3}, rng, true), random_var({2, 3, 1, 1}, rng, true)});
  gradcheck([](const auto& v) { return ops::add(v[0], v[1]); },
            {random_var({1, 3, 2, 2}, rng, true), random_var({1, 3, 2, 2}, rng, true)});
  gradcheck([](const auto& v) { return ops::mul(v[0], v[1]); },
            {random_var({1, 3, 2, 2}, rng, true), random_var({1, 3, 2, 2}, rng, true)});
  gradcheck([](const auto& v) { return ops::weighted_sum(v[0], v[1], v[2], v[3]); },
            {random_var({2, 3, 2, 2}, rng, true), random_var({1, 1, 1, 1}, rng, true),
             random_var({2, 3, 2, 2}, rng, true), random_var({1, 3, 1, 1}, rng, true)});
  gradcheck([](const auto& v) { return ops::scale(v[0], v[1]); },
            {random_var({2, 3, 2, 2}, rng, true), random_var({1, 3, 1, 1}, rng, true)});
  gradcheck([](const auto& v) { return ops::film(v[0], v[1], v[2]); },
            {random_var({1, 4, 1, 5}, rng, true), random_var({1, 4, 1, 5}, rng, true),
             random_var({1, 4, 1, 5}, rng, true)});
}

TEST(Gradients, Relu) {
  Rng rng(7);
  // Keep values away from the kink.
  Tensor x = random_tensor({1, 3, 2, 4}, rng);
  for (auto& v : x.values()) v += v > 0 ? 0.1 : -0.1;
  gradcheck([](const auto& v) { return ops::relu(v[0]); }, {Var(x, true)});
}

TEST(Gradients, DataMovement) {
  Rng rng(8);
  gradcheck([](const auto& v) { return ops::pixel_shuffle(v[0], 2); }, {random_var({2, 8, 2, 3}, rng, true)});
  gradcheck([](const auto& v) { return ops::concat_channels(v); },
            {random_var({2, 2, 2, 2}, rng, true), random_var({2, 3, 2, 2}, rng, true)});
  gradcheck([](const auto& v) { return ops::slice_channels(v[0], 1, 3); }, {random_var({2, 5, 2, 2}, rng, true)});
  const std::vector<int> idx{0, 5, 5, 2, 1, 3, 3, 0};
  gradcheck([&](const auto& v) { return ops::gather_columns(v[0], idx, 4); }, {random_var({2, 3, 2, 3}, rng, true)});
  gradcheck([](const auto& v) { return ops::unfold3x3(v[0]); }, {random_var({1, 2, 3, 4}, rng, true)});
  const Tensor weights = random_tensor({2, 1, 1, 5}, rng);
  gradcheck([&](const auto& v) { return ops::scale_columns(v[0], weights); }, {random_var({2, 3, 1, 5}, rng, true)});
  gradcheck([](const auto& v) { return ops::crop(v[0], 2, 3); }, {random_var({2, 2, 4, 4}, rng, true)});
  gradcheck([](const auto& v) { return ops::reshape(v[0], {2, 3, 1, 6}); }, {random_var({2, 3, 2, 3}, rng, true)});
}

TEST(Gradients, L1Loss) {
  Rng rng(9);
  const Tensor target = random_tensor({1, 2, 1, 7}, rng);
  Tensor pred = target;
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] += (i % 2 ? 0.2 : -0.3);
  Var p(pred, true);
  ag::backward(ops::l1_loss(p, target));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    EXPECT_DOUBLE_EQ(p.grad()[i], (i % 2 ? 1.0 : -1.0) / 14.0);
  }
}

TEST(PixelShuffle, FollowsChannelMajorOrdering) {
  Tensor x({1, 4, 1, 1});
  for (int c = 0; c < 4; ++c) x.at(0, c, 0, 0) = c;
  const Tensor y = ops::pixel_shuffle(Var(x), 2).value();
  EXPECT_EQ(y.at(0, 0, 0, 0), 0.0);
  EXPECT_EQ(y.at(0, 0, 0, 1), 1.0);
  EXPECT_EQ(y.at(0, 0, 1, 0), 2.0);
  EXPECT_EQ(y.at(0, 0, 1, 1), 3.0);
}

TEST(PadReflect, MirrorsWithoutRepeatingTheEdge) {
  Tensor x({1, 1, 1, 3});
  x.at(0, 0, 0, 0) = 1;
  x.at(0, 0, 0, 1) = 2;
  x.at(0, 0, 0, 2) = 3;
  const Tensor y = ops::pad_reflect(x, 1, 8);
  const double want[] = {1, 2, 3, 2, 1, 2, 3, 2};
  for (int i = 0; i < 8; ++i) EXPECT_EQ(y.at(0, 0, 0, i), want[i]) << i;
}

TEST(Ops, ShapeErrors) {
  Rng rng(10);
  EXPECT_THROW((void)ops::simple_gate(random_var({1, 3, 2, 2}, rng)), InputError);
  EXPECT_THROW((void)ops::add(random_var({1, 3, 2, 2}, rng), random_var({1, 3, 2, 1}, rng)), InputError);
  EXPECT_THROW((void)ops::l1_loss(random_var({1, 1, 1, 2}, rng), Tensor({1, 1, 1, 3})), InputError);
  EXPECT_THROW((void)ops::conv2d(random_var({1, 3, 4, 4}, rng), random_var({2, 2, 3, 3}, rng), Var()), InputError);
}

TEST(Autograd, NoGradGuardRecordsNothing) {
  Rng rng(11);
  Var a = random_var({1, 2, 2, 2}, rng, true);
  Var out;
  {
    ag::NoGradGuard g;
    out = ops::mul(a, a);
  }
  EXPECT_FALSE(out.requires_grad());
}

TEST(Autograd, SharedSubexpressionsAccumulate) {
  Var a(Tensor({1, 1, 1, 1}, 3.0), true);
  const Var b = ops::mul(a, a);
  const Var c = ops::add(b, a);
  ag::backward(ops::dot_constant(c, Tensor({1, 1, 1, 1}, 1.0)));
  EXPECT_DOUBLE_EQ(a.grad()[0], 7.0);
}

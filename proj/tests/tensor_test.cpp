#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "lenopt/errors.hpp"
#include "lenopt/tensor.hpp"
#include "support/gradcheck.hpp"

using namespace lenopt;
using ad::Tensor;

namespace {

Tensor random_tensor(ad::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.mutable_data()) v = u(rng);
  return t;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tensor eye({2, 2}, std::vector<double>{1, 0, 0, 1});
  Tensor a({2, 2}, std::vector<double>{3.5, -1, 2, 7});
  Tensor out = ad::matmul(eye, a);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(out[i], a[i]);
}

TEST(Matmul, HandArithmetic) {
  Tensor a({2, 2}, std::vector<double>{1, 2, 3, 4});
  Tensor b({2, 1}, std::vector<double>{0, 1});
  Tensor out = ad::matmul(a, b);
  ASSERT_EQ(out.shape(), (ad::Shape{2, 1}));
  EXPECT_EQ(out[0], 2.0);
  EXPECT_EQ(out[1], 4.0);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tensor a({2, 3});
  Tensor b({2, 3});
  try {
    ad::matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3] x [2x3]"), std::string::npos) << msg;
  }
}

TEST(Matmul, GradientOfSumIsOnesTimesBTransposed) {
  Tensor a = random_tensor({5, 7}, 1);
  Tensor b = random_tensor({7, 3}, 2);
  a.set_requires_grad(true);
  ad::Tape tape;
  Tensor loss;
  {
    ad::TapeScope scope(tape);
    loss = ad::sum(ad::matmul(a, b));
  }
  tape.backward(loss);
  // d sum(AB) / dA[i][k] = sum_j B[k][j]
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < 7; ++k) {
      double expected = 0.0;
      for (std::size_t j = 0; j < 3; ++j) expected += b.at(k, j);
      EXPECT_NEAR(a.grad()[i * 7 + k], expected, 1e-12);
    }
  auto check = test_support::gradcheck([&] { return ad::sum(ad::matmul(a, b)); }, {a, b});
  EXPECT_TRUE(check.ok) << check.worst_detail;
}

TEST(Matmul, TransposedVariantMatchesExplicitTranspose) {
  Tensor a = random_tensor({4, 3}, 3);
  Tensor b = random_tensor({5, 3}, 4);
  Tensor x = ad::matmul_nt(a, b);
  Tensor y = ad::matmul(a, ad::transpose(b));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], y[i], 1e-14);
  auto check = test_support::gradcheck(
      [&] { return ad::sum(ad::mul(ad::matmul_nt(a, b), ad::matmul_nt(a, b))); }, {a, b});
  EXPECT_TRUE(check.ok) << check.worst_detail;
}

TEST(Matmul, CountsMultiplyAccumulates) {
  ad::MacCounter counter;
  {
    ad::MacCountScope scope(counter);
    ad::matmul(Tensor({3, 4}), Tensor({4, 5}));
    ad::matmul_nt(Tensor({2, 6}), Tensor({7, 6}));
  }
  EXPECT_EQ(counter.macs, 3u * 4 * 5 + 2u * 6 * 7);
}

TEST(Softmax, UniformRow) {
  Tensor x({1, 3}, 0.0);
  Tensor y = ad::softmax_rows(x, 1.0);
  for (double v : y.data()) EXPECT_NEAR(v, 1.0 / 3.0, 1e-15);
}

TEST(Softmax, LargeLogitsDoNotOverflow) {
  Tensor x({1, 2}, std::vector<double>{1000.0, 0.0});
  Tensor y = ad::softmax_rows(x, 1.0);
  EXPECT_NEAR(y[0], 1.0, 1e-12);
  EXPECT_NEAR(y[1], 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(y[1]));
}

TEST(Softmax, TemperatureMatchesScalarReference) {
  Tensor x({1, 3}, std::vector<double>{1, 2, 3});
  Tensor y = ad::softmax_rows(x, 2.0);
  // exp(x/2) / sum, evaluated at 30 digits
  EXPECT_NEAR(y[0], 0.18632372322584757702, 1e-15);
  EXPECT_NEAR(y[1], 0.30719588571849839707, 1e-15);
  EXPECT_NEAR(y[2], 0.50648039105565402590, 1e-15);
}

TEST(Softmax, RejectsNonPositiveTemperature) {
  Tensor x({1, 3});
  EXPECT_THROW(ad::softmax_rows(x, 0.0), ParameterError);
  EXPECT_THROW(ad::softmax_rows(x, -1.0), ParameterError);
  EXPECT_THROW(ad::log_softmax_rows(x, 0.0), ParameterError);
}

TEST(Softmax, RowsAreDistributions) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Tensor x = random_tensor({6, 9}, seed, -30.0, 30.0);
    Tensor y = ad::softmax_rows(x, 0.5 + static_cast<double>(seed) * 0.1);
    for (std::size_t r = 0; r < 6; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 9; ++c) {
        const double v = y.at(r, c);
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, GradientsMatchFiniteDifferences) {
  Tensor x = random_tensor({4, 5}, 11);
  Tensor w = random_tensor({4, 5}, 12);
  auto soft = test_support::gradcheck([&] { return ad::sum(ad::mul(ad::softmax_rows(x, 1.7), w)); }, {x});
  EXPECT_TRUE(soft.ok) << soft.worst_detail;
  auto logsoft =
      test_support::gradcheck([&] { return ad::sum(ad::mul(ad::log_softmax_rows(x, 0.6), w)); }, {x});
  EXPECT_TRUE(logsoft.ok) << logsoft.worst_detail;
}

TEST(LayerNorm, ConstantRowMapsToZero) {
  Tensor x({1, 4}, 3.25);
  Tensor y = ad::layer_norm(x, Tensor({4}, 1.0), Tensor({4}, 0.0));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LayerNorm, TwoPointStandardization) {
  Tensor x({1, 2}, std::vector<double>{1, 3});
  Tensor y = ad::layer_norm(x, Tensor({2}, 1.0), Tensor({2}, 0.0));
  EXPECT_NEAR(y[0], -1.0, 1e-6);
  EXPECT_NEAR(y[1], 1.0, 1e-6);
}

TEST(LayerNorm, HiddenMismatchIsDimensionError) {
  EXPECT_THROW(ad::layer_norm(Tensor({2, 3}), Tensor({4}, 1.0), Tensor({4})), DimensionError);
}

TEST(LayerNorm, GradientsMatchFiniteDifferences) {
  Tensor x = random_tensor({4, 8}, 21);
  Tensor g = random_tensor({8}, 22, 0.5, 1.5);
  Tensor b = random_tensor({8}, 23);
  Tensor w = random_tensor({4, 8}, 24);
  auto check = test_support::gradcheck(
      [&] { return ad::sum(ad::mul(ad::layer_norm(x, g, b), w)); }, {x, g, b});
  EXPECT_TRUE(check.ok) << check.worst_detail;
}

TEST(Backward, SumGivesOnes) {
  Tensor x = random_tensor({3, 2, 2}, 5);
  x.set_requires_grad(true);
  ad::Tape tape;
  Tensor loss;
  {
    ad::TapeScope scope(tape);
    loss = ad::sum(x);
  }
  auto grads = tape.backward(loss);
  ASSERT_TRUE(grads.contains(x));
  for (double g : grads.at(x)) EXPECT_EQ(g, 1.0);
  EXPECT_EQ(x.grad().size(), x.size());
}

TEST(Backward, HalfSquaredNormGivesInput) {
  Tensor x = random_tensor({4, 3}, 6);
  x.set_requires_grad(true);
  ad::Tape tape;
  Tensor loss;
  {
    ad::TapeScope scope(tape);
    loss = ad::scale(ad::sum(ad::mul(x, x)), 0.5);
  }
  auto grads = tape.backward(loss);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(grads.at(x)[i], x[i], 1e-15);
}

TEST(Backward, RejectsNonScalarLoss) {
  Tensor x = random_tensor({2, 2}, 7);
  x.set_requires_grad(true);
  ad::Tape tape;
  Tensor y;
  {
    ad::TapeScope scope(tape);
    y = ad::scale(x, 2.0);
  }
  EXPECT_THROW(tape.backward(y), ContractError);
}

TEST(Backward, SecondCallWithoutRecordingIsRejected) {
  Tensor x = random_tensor({2, 2}, 8);
  x.set_requires_grad(true);
  ad::Tape tape;
  Tensor loss;
  {
    ad::TapeScope scope(tape);
    loss = ad::sum(x);
  }
  tape.backward(loss);
  EXPECT_THROW(tape.backward(loss), ContractError);
}

TEST(Backward, DetachedTensorIsAbsentFromGradients) {
  Tensor x = random_tensor({2, 2}, 9);
  Tensor y = random_tensor({2, 2}, 10);
  x.set_requires_grad(true);
  y.set_requires_grad(true);
  ad::Tape tape;
  Tensor loss;
  Tensor frozen = y.detach();
  {
    ad::TapeScope scope(tape);
    loss = ad::sum(ad::mul(x, frozen));
  }
  auto grads = tape.backward(loss);
  EXPECT_TRUE(grads.contains(x));
  EXPECT_FALSE(grads.contains(frozen));
  EXPECT_FALSE(grads.contains(y));
}

TEST(Backward, VisitsOperationsInReverseRecordingOrder) {
  Tensor x = random_tensor({3, 3}, 12);
  x.set_requires_grad(true);
  ad::Tape tape;
  Tensor loss;
  {
    ad::TapeScope scope(tape);
    loss = ad::mean(ad::gelu(ad::add_scalar(ad::transpose(x), 0.5)));
  }
  auto recorded = tape.op_names();
  tape.backward(loss);
  std::vector<std::string_view> reversed(recorded.rbegin(), recorded.rend());
  EXPECT_EQ(tape.visit_order(), reversed);
}

TEST(Backward, EveryRequiresGradTensorGetsSameShapedGradient) {
  Tensor used = random_tensor({3, 4}, 13);
  Tensor unused_branch = random_tensor({3, 4}, 14);
  used.set_requires_grad(true);
  unused_branch.set_requires_grad(true);
  ad::Tape tape;
  Tensor loss;
  {
    ad::TapeScope scope(tape);
    Tensor dead = ad::scale(unused_branch, 3.0);  // recorded but not part of the loss
    (void)dead;
    loss = ad::sum(used);
  }
  auto grads = tape.backward(loss);
  ASSERT_TRUE(grads.contains(unused_branch));
  EXPECT_EQ(grads.at(unused_branch).size(), unused_branch.size());
  for (double g : grads.at(unused_branch)) EXPECT_EQ(g, 0.0);
}

TEST(Ops, StructuralGradientsMatchFiniteDifferences) {
  Tensor x = random_tensor({5, 6}, 31);
  Tensor y = random_tensor({3, 2}, 32);
  Tensor bias = random_tensor({6}, 33);
  Tensor w = random_tensor({5, 6}, 34);
  const std::vector<std::size_t> rows{4, 0, 2};
  auto check = test_support::gradcheck(
      [&] {
        Tensor shifted = ad::add_rowwise(x, bias);
        Tensor left = ad::slice_cols(shifted, 0, 2);
        Tensor right = ad::slice_cols(shifted, 2, 6);
        Tensor joined = ad::concat_cols({ad::gelu(right), left});
        Tensor picked = ad::gather_rows(joined, rows);
        Tensor rest = ad::gather_rows(joined, std::vector<std::size_t>{1, 3});
        Tensor back = ad::scatter_rows({rest, picked}, {{1, 3}, {4, 0, 2}}, 5);
        return ad::add(ad::sum(ad::mul(back, w)), ad::mse(ad::slice_cols(back, 0, 2), ad::gather_rows(y, std::vector<std::size_t>{0, 1, 2, 0, 1})));
      },
      {x, bias, y});
  EXPECT_TRUE(check.ok) << check.worst_detail;
}

TEST(Ops, ScatterRejectsIncompleteCover) {
  Tensor a({2, 3});
  EXPECT_THROW(ad::scatter_rows({a}, {{0, 2}}, 3), DimensionError);
  EXPECT_THROW(ad::scatter_rows({a, a}, {{0, 1}, {1, 2}}, 3), DimensionError);
}

TEST(Ops, ForwardIsBitwiseDeterministic) {
  Tensor x = random_tensor({6, 8}, 41);
  Tensor g({8}, 1.0), b({8}, 0.0);
  auto run = [&] {
    return ad::softmax_rows(ad::matmul_nt(ad::layer_norm(ad::gelu(x), g, b), x), 0.7);
  };
  Tensor first = run();
  Tensor second = run();
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(first[i], second[i]);
}

TEST(Ops, RandomGradientSweep) {
  // Property: each differentiable op agrees with central differences on random inputs.
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    Tensor a = random_tensor({3, 4}, seed);
    Tensor b = random_tensor({3, 4}, seed + 1000);
    auto check = test_support::gradcheck(
        [&] {
          return ad::add(ad::mean(ad::mul(ad::sub(a, b), ad::softmax_rows(a, 1.3))),
                         ad::mse(ad::scale(a, 0.3), ad::transpose(ad::transpose(b))));
        },
        {a, b});
    EXPECT_TRUE(check.ok) << "seed " << seed << ": " << check.worst_detail;
  }
}

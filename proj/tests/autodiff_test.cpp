// Copyright 2026 The CPT Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cpt/autodiff.hpp"
#include "test_util.hpp"

namespace cpt {
namespace {

using testing::check_gradients;
using testing::random_tensor;
using testing::random_weights;
using testing::weighted_sum;

constexpr int kSeeds = 20;
constexpr double kTol = 1e-4;

// Runs a gradient check of weighted_sum(op(inputs)) over kSeeds seeds.
void expect_op_gradients(const std::function<std::vector<Tensor>(Rng&)>& make_inputs,
                         const std::function<Tensor(const std::vector<Tensor>&)>& op, double tol = kTol) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(1000 + seed);
    auto inputs = make_inputs(rng);
    Tensor probe;
    {
      NoGradScope ng;
      probe = op(inputs);
    }
    Mat w = random_weights(probe, rng);
    auto result = check_gradients([&] { return weighted_sum(op(inputs), w); }, inputs, tol);
    EXPECT_EQ(result.failures, 0) << "seed " << seed << " worst relative error " << result.worst;
  }
}

Shape random_shape(Rng& rng, int rank) {
  Shape s;
  for (int i = 0; i < rank; ++i) s.push_back(rng.uniform_int(1, 4));
  return s;
}

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t = Tensor::zeros({2, 3, 4});
  EXPECT_EQ(t.size(), 24);
  EXPECT_EQ(t.value().size(), 24);
  EXPECT_THROW(Tensor::from_values({2, 2}, {1.0, 2.0, 3.0}), ad::DimensionError);
  EXPECT_THROW(Tensor::zeros({2, 0}), ad::DimensionError);
}

TEST(Tensor, FrozenTensorNeverAccumulatesGradient) {
  Tensor frozen = Tensor::filled({3}, 2.0, false);
  Tensor live = Tensor::filled({3}, 1.0, true);
  Tape tape;
  TapeScope scope(tape);
  tape.backward(ad::sum(ad::mul(frozen, live)));
  EXPECT_FALSE(frozen.has_grad());
  ASSERT_TRUE(live.has_grad());
  EXPECT_EQ(live.grad(), Mat::Constant(1, 3, 2.0));
}

TEST(Tape, NodesFollowTheirOperands) {
  Rng rng(3);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  Tape tape;
  TapeScope scope(tape);
  Tensor c = ad::matmul(a, b);
  Tensor d = ad::gelu(c);
  Tensor e = ad::sum(ad::mul(d, c));
  ASSERT_EQ(tape.size(), 4u);
  // Recording happens at creation, so a result can only follow its operands.
  EXPECT_TRUE(tape.nodes()[0] == c.node());
  EXPECT_TRUE(tape.nodes()[1] == d.node());
  EXPECT_TRUE(tape.nodes()[3] == e.node());
}

TEST(Tape, BackwardVisitsEachNodeOnce) {
  Tensor p = Tensor::filled({2}, 1.0, true);
  Tape tape;
  TapeScope scope(tape);
  // p feeds the sum twice; the gradient counts both paths exactly once each.
  Tensor q = ad::scale(p, 3.0);
  Tensor loss = ad::sum(ad::add(q, q));
  tape.backward(loss);
  EXPECT_EQ(p.grad(), Mat::Constant(1, 2, 6.0));
}

TEST(Tape, ReplayIsBitIdentical) {
  auto run = [] {
    Rng rng(11);
    Tensor x = random_tensor({5, 6}, rng), w = random_tensor({6, 3}, rng);
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = ad::sum(ad::softmax(ad::gelu(ad::matmul(x, w)), -1));
    loss = loss + ad::sum(ad::mul(w, w));
    tape.backward(loss);
    return std::make_pair(loss.item(), std::make_pair(x.grad(), w.grad()));
  };
  auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second.first, b.second.first);
  EXPECT_EQ(a.second.second, b.second.second);
}

TEST(Backward, SumGivesOnes) {
  Tensor p = Tensor::from_values({3}, {0.3, -1.0, 2.0}, true);
  Tape tape;
  TapeScope scope(tape);
  tape.backward(ad::sum(p));
  EXPECT_EQ(p.grad(), Mat::Ones(1, 3));
}

TEST(Backward, SquareGivesTwiceInput) {
  Tensor p = Tensor::from_values({3}, {1.0, -2.0, 0.5}, true);
  Tape tape;
  TapeScope scope(tape);
  tape.backward(ad::sum(ad::mul(p, p)));
  EXPECT_EQ(p.values(), (std::vector<double>{1.0, -2.0, 0.5}));
  EXPECT_EQ(p.grad()(0, 0), 2.0);
  EXPECT_EQ(p.grad()(0, 1), -4.0);
  EXPECT_EQ(p.grad()(0, 2), 1.0);
}

TEST(Backward, GradientsAccumulateUntilZeroed) {
  Tensor p = Tensor::filled({2}, 1.0, true);
  for (int i = 0; i < 3; ++i) {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(ad::sum(p));
  }
  EXPECT_EQ(p.grad(), Mat::Constant(1, 2, 3.0));
  p.zero_grad();
  EXPECT_FALSE(p.has_grad());
}

TEST(Backward, RejectsNonScalarLoss) {
  Tensor p = Tensor::filled({2}, 1.0, true);
  Tape tape;
  TapeScope scope(tape);
  EXPECT_THROW(tape.backward(ad::scale(p, 2.0)), ad::ContractError);
}

TEST(Matmul, IdentityAndZero) {
  Tensor a = Tensor::from_values({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(ad::matmul(a, Tensor::from_matrix(Mat::Identity(2, 2))).value(), a.value());
  EXPECT_EQ(ad::matmul(a, Tensor::zeros({2, 2})).value(), Mat::Zero(2, 2));
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  try {
    ad::matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    FAIL();
  } catch (const ad::DimensionError& e) {
    EXPECT_NE(std::string(e.what()).find("[2x3]"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("[4x2]"), std::string::npos);
  }
}

TEST(Matmul, SumGradientMatchesFiniteDifferences) {
  Rng rng(5);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  auto r = check_gradients([&] { return ad::sum(ad::matmul(a, b)); }, {a}, 1e-6);
  EXPECT_EQ(r.failures, 0) << r.worst;
}

TEST(Softmax, SymmetricAndShiftInvariant) {
  EXPECT_EQ(ad::softmax(Tensor::from_values({2}, {0, 0})).values(), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(ad::softmax(Tensor::from_values({2}, {1000, 1000})).values(), (std::vector<double>{0.5, 0.5}));
  EXPECT_THROW(ad::softmax(Tensor::from_values({2}, {NAN, 0})), ad::NumericError);
}

TEST(Softmax, RowsSumToOne) {
  for (int seed = 0; seed < kSeeds; ++seed) {
    Rng rng(seed);
    Shape s = random_shape(rng, 3);
    Tensor x = random_tensor(s, rng, false, 10.0);
    for (Index axis = 0; axis < 3; ++axis) {
      Tensor y = ad::softmax(x, axis);
      Tensor total = ad::sum(y);
      EXPECT_NEAR(total.item(), static_cast<double>(x.size() / x.dim(axis)), 1e-12 * x.size());
      EXPECT_TRUE((y.value().array() >= 0).all());
    }
  }
}

TEST(Softmax, GradientOnLengthSeven) {
  Rng rng(7);
  Tensor x = random_tensor({7}, rng);
  Mat w = random_weights(x, rng);
  auto r = check_gradients([&] { return weighted_sum(ad::softmax(x), w); }, {x}, 1e-6);
  EXPECT_EQ(r.failures, 0) << r.worst;
}

TEST(CrossEntropy, UniformLogits) {
  Tensor logits = Tensor::zeros({1, 4});
  std::vector<int> y{2};
  EXPECT_NEAR(ad::cross_entropy(logits, y, {true}).item(), std::log(4.0), 1e-12);
}

TEST(CrossEntropy, NearOneHot) {
  Tensor logits = Tensor::zeros({1, 4});
  logits.mutable_value()(0, 1) = 30;
  std::vector<int> y{1};
  EXPECT_LT(ad::cross_entropy(logits, y, {true}).item(), 1e-10);
}

TEST(CrossEntropy, MatchesScalarLoopOracle) {
  Rng rng(9);
  Tensor logits = random_tensor({5, 11}, rng, true, 2.0);
  std::vector<int> y{0, 3, 10, 7, 7};
  std::vector<bool> mask{true, false, true, true, true};
  // Independent evaluation: log-sum-exp per row by plain loops.
  double expected = 0;
  Mat grad = Mat::Zero(5, 11);
  for (int i = 0; i < 5; ++i) {
    if (!mask[i]) continue;
    double lse = 0;
    for (int v = 0; v < 11; ++v) lse += std::exp(logits.value()(i, v));
    lse = std::log(lse);
    expected += lse - logits.value()(i, y[i]);
    for (int v = 0; v < 11; ++v) grad(i, v) = (std::exp(logits.value()(i, v) - lse) - (v == y[i])) / 4.0;
  }
  expected /= 4.0;
  Tape tape;
  TapeScope scope(tape);
  Tensor loss = ad::cross_entropy(logits, y, mask);
  tape.backward(loss);
  EXPECT_NEAR(loss.item(), expected, 1e-12);
  EXPECT_LT((logits.grad() - grad).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CrossEntropy, Errors) {
  Tensor logits = Tensor::zeros({2, 3});
  std::vector<int> y{0, 1}, bad{0, 3};
  EXPECT_THROW(ad::cross_entropy(logits, y, {false, false}), ad::ContractError);
  EXPECT_THROW(ad::cross_entropy(logits, bad, {true, true}), ad::IndexError);
}

TEST(Adam, ClosedFormFirstStep) {
  Parameter p{"theta", Tensor::filled({1}, 0.0, true)};
  std::vector<Parameter> params{p};
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(ad::sum(p.tensor));  // gradient 1
  }
  ad::AdamState<double> state;
  state.options.learning_rate = 0.1;
  ad::adam_step<double>(params, state);
  EXPECT_NEAR(p.tensor.item(), -0.1 / (1 + 1e-8), 1e-15);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, ZeroGradientLeavesParameter) {
  Parameter p{"theta", Tensor::filled({2}, 0.7, true)};
  std::vector<Parameter> params{p};
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(ad::scale(ad::sum(p.tensor), 0.0));
  }
  ad::AdamState<double> state;
  ad::adam_step<double>(params, state);
  EXPECT_EQ(p.tensor.value(), Mat::Constant(1, 2, 0.7));
}

TEST(Adam, MinimizesSquare) {
  Parameter p{"theta", Tensor::filled({1}, 1.0, true)};
  std::vector<Parameter> params{p};
  ad::AdamState<double> state;
  state.options.learning_rate = 0.1;
  // Scalar reference of the same update rule.
  double theta = 1.0, m = 0, v = 0;
  for (int t = 1; t <= 100; ++t) {
    ad::zero_grad<double>(params);
    {
      Tape tape;
      TapeScope scope(tape);
      tape.backward(ad::sum(ad::mul(p.tensor, p.tensor)));
    }
    ad::adam_step<double>(params, state);
    const double g = 2 * theta;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    theta -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_EQ(state.step, static_cast<std::uint64_t>(t));
  }
  EXPECT_NEAR(p.tensor.item(), theta, 1e-12);
  EXPECT_LT(std::abs(p.tensor.item()), 0.05);
}

TEST(Adam, FrozenParametersUntouchedAndMomentFree) {
  Rng rng(2);
  Parameter live{"live", random_tensor({3, 3}, rng)};
  Parameter frozen{"frozen", random_tensor({3, 3}, rng, false)};
  const Mat before = frozen.tensor.value();
  std::vector<Parameter> params{live, frozen};
  ad::AdamState<double> state;
  for (int i = 0; i < 25; ++i) {
    ad::zero_grad<double>(params);
    Tape tape;
    TapeScope scope(tape);
    tape.backward(ad::sum(ad::gelu(ad::matmul(live.tensor, frozen.tensor))));
    ad::adam_step<double>(params, state);
  }
  EXPECT_EQ(frozen.tensor.value(), before);
  EXPECT_EQ(state.moments.count("frozen"), 0u);
  EXPECT_EQ(state.moments.count("live"), 1u);
}

TEST(Adam, MissingGradientIsAnError) {
  Parameter p{"theta", Tensor::filled({1}, 1.0, true)};
  std::vector<Parameter> params{p};
  ad::AdamState<double> state;
  EXPECT_THROW(ad::adam_step<double>(params, state), ad::ContractError);
}

// Gradient properties: every differentiable op against central differences
// over 20 seeds of random small shapes.

TEST(GradientProperty, AddWithBroadcasting) {
  expect_op_gradients(
      [](Rng& rng) {
        Index r = rng.uniform_int(1, 4), c = rng.uniform_int(1, 4);
        Shape other = std::vector<Shape>{{r, c}, {c}, {r, 1}, {}}[rng.uniform_int(0, 3)];
        return std::vector<Tensor>{random_tensor({r, c}, rng), random_tensor(other, rng)};
      },
      [](const std::vector<Tensor>& in) { return ad::mul(ad::add(in[0], in[1]), ad::sub(in[1], ad::scale(in[0], 2.0))); });
}

TEST(GradientProperty, Multiply) {
  expect_op_gradients(
      [](Rng& rng) {
        Index r = rng.uniform_int(1, 4), c = rng.uniform_int(1, 4);
        return std::vector<Tensor>{random_tensor({r, c}, rng), random_tensor({c}, rng)};
      },
      [](const std::vector<Tensor>& in) { return ad::mul(in[0], in[1]); });
}

TEST(GradientProperty, MatmulAndLinear) {
  expect_op_gradients(
      [](Rng& rng) {
        Index m = rng.uniform_int(1, 4), k = rng.uniform_int(1, 4), n = rng.uniform_int(1, 4);
        return std::vector<Tensor>{random_tensor({m, k}, rng), random_tensor({k, n}, rng), random_tensor({n}, rng)};
      },
      [](const std::vector<Tensor>& in) { return ad::linear(in[0], in[1], in[2]); });
}

TEST(GradientProperty, TransposeReshapeScale) {
  expect_op_gradients(
      [](Rng& rng) {
        Index r = rng.uniform_int(1, 4), c = rng.uniform_int(1, 4);
        return std::vector<Tensor>{random_tensor({r, c}, rng)};
      },
      [](const std::vector<Tensor>& in) {
        Tensor t = ad::transpose(in[0]);
        return ad::reshape(ad::add_scalar(ad::scale(t, -1.5), 0.25), {t.size()});
      });
}

TEST(GradientProperty, Gelu) {
  expect_op_gradients([](Rng& rng) { return std::vector<Tensor>{random_tensor(random_shape(rng, 2), rng, true, 2.0)}; },
                      [](const std::vector<Tensor>& in) { return ad::gelu(in[0]); });
}

TEST(GradientProperty, LayerNorm) {
  expect_op_gradients(
      [](Rng& rng) {
        Index r = rng.uniform_int(1, 4), c = rng.uniform_int(2, 6);
        return std::vector<Tensor>{random_tensor({r, c}, rng), random_tensor({c}, rng), random_tensor({c}, rng)};
      },
      [](const std::vector<Tensor>& in) { return ad::layer_norm(in[0], in[1], in[2]); });
}

TEST(GradientProperty, RmsNorm) {
  expect_op_gradients(
      [](Rng& rng) {
        Index r = rng.uniform_int(1, 4), c = rng.uniform_int(1, 6);
        return std::vector<Tensor>{random_tensor({r, c}, rng), random_tensor({c}, rng)};
      },
      [](const std::vector<Tensor>& in) { return ad::rms_norm(in[0], in[1]); });
}

TEST(GradientProperty, SoftmaxAlongEveryAxis) {
  for (Index axis = 0; axis < 3; ++axis)
    expect_op_gradients([](Rng& rng) { return std::vector<Tensor>{random_tensor(random_shape(rng, 3), rng)}; },
                        [axis](const std::vector<Tensor>& in) { return ad::softmax(in[0], axis); });
}

TEST(GradientProperty, MeanAndSum) {
  for (Index axis = 0; axis < 3; ++axis)
    expect_op_gradients([](Rng& rng) { return std::vector<Tensor>{random_tensor(random_shape(rng, 3), rng)}; },
                        [axis](const std::vector<Tensor>& in) {
                          return ad::add_scalar(ad::mean(in[0], axis), 0.0) + ad::sum(in[0]);
                        });
}

TEST(GradientProperty, ConcatAndSlice) {
  for (Index axis = 0; axis < 2; ++axis)
    expect_op_gradients(
        [axis](Rng& rng) {
          Index r = rng.uniform_int(1, 4), c = rng.uniform_int(1, 4), extra = rng.uniform_int(1, 3);
          Shape other = axis == 0 ? Shape{extra, c} : Shape{r, extra};
          return std::vector<Tensor>{random_tensor({r, c}, rng), random_tensor(other, rng)};
        },
        [axis](const std::vector<Tensor>& in) {
          Tensor joined = ad::concat({in[0], in[1], in[0]}, axis);
          return ad::slice(joined, axis, 1, joined.dim(axis) - 1);
        });
}

TEST(GradientProperty, Embedding) {
  expect_op_gradients(
      [](Rng& rng) { return std::vector<Tensor>{random_tensor({6, rng.uniform_int(1, 4)}, rng)}; },
      [](const std::vector<Tensor>& in) {
        std::vector<int> ids{0, 5, 2, 2, 0};
        return ad::embedding(in[0], ids);
      });
}

TEST(GradientProperty, CrossEntropy) {
  expect_op_gradients(
      [](Rng& rng) { return std::vector<Tensor>{random_tensor({4, rng.uniform_int(2, 6)}, rng, true, 2.0)}; },
      [](const std::vector<Tensor>& in) {
        std::vector<int> y{0, 1, 1, 0};
        return ad::reshape(ad::cross_entropy(in[0], y, {true, false, true, true}), {1});
      });
}

TEST(GradientProperty, CausalSelfAttention) {
  expect_op_gradients(
      [](Rng& rng) {
        Index heads = rng.uniform_int(1, 2), hd = rng.uniform_int(1, 3), k = rng.uniform_int(1, 5);
        return std::vector<Tensor>{random_tensor({k, 3 * heads * hd}, rng)};
      },
      [](const std::vector<Tensor>& in) {
        const Index d = in[0].cols() / 3;
        return ad::causal_self_attention(in[0], d % 2 == 0 && d > 2 ? 2 : 1);
      });
}

TEST(GradientProperty, Patches) {
  expect_op_gradients(
      [](Rng& rng) {
        return std::vector<Tensor>{random_tensor({rng.uniform_int(3, 6), rng.uniform_int(3, 6), rng.uniform_int(1, 2)}, rng)};
      },
      [](const std::vector<Tensor>& in) { return ad::patches(in[0], 3, 2, 1); });
}

TEST(Ops, AttentionMatchesLoopReference) {
  Rng rng(21);
  const Index k = 5, d = 4, heads = 2, hd = 2;
  Tensor qkv = random_tensor({k, 3 * d}, rng, false);
  Mat out = ad::causal_self_attention(qkv, heads).value();
  const Mat& in = qkv.value();
  for (Index h = 0; h < heads; ++h)
    for (Index i = 0; i < k; ++i) {
      std::vector<double> w(static_cast<std::size_t>(i + 1));
      double z = 0;
      for (Index j = 0; j <= i; ++j) {
        double s = 0;
        for (Index c = 0; c < hd; ++c) s += in(i, h * hd + c) * in(j, d + h * hd + c);
        w[j] = std::exp(s / std::sqrt(2.0));
        z += w[j];
      }
      for (Index c = 0; c < hd; ++c) {
        double v = 0;
        for (Index j = 0; j <= i; ++j) v += w[j] / z * in(j, 2 * d + h * hd + c);
        EXPECT_NEAR(out(i, h * hd + c), v, 1e-12);
      }
    }
}

TEST(Ops, PatchesPlaceEntriesInOrder) {
  // 4x4 single channel holding its flat index; a 3x3 stride-2 pad-1 window.
  std::vector<double> v(16);
  std::iota(v.begin(), v.end(), 1.0);
  Tensor x = Tensor::from_values({4, 4, 1}, v);
  Tensor p = ad::patches(x, 3, 2, 1);
  ASSERT_EQ(p.shape(), (Shape{2, 2, 9}));
  // Output (0,0) covers rows -1..1 and cols -1..1.
  std::vector<double> first{0, 0, 0, 0, 1, 2, 0, 5, 6};
  for (int i = 0; i < 9; ++i) EXPECT_EQ(p.value()(0, i), first[i]);
}

TEST(Ops, LayerNormOfConstantRowIsFinite) {
  Tensor x = Tensor::zeros({3, 4});
  Tensor y = ad::layer_norm(x, Tensor::filled({4}, 1.0), Tensor::zeros({4}));
  EXPECT_TRUE(y.value().allFinite());
  Tensor z = ad::rms_norm(x, Tensor::filled({4}, 1.0));
  EXPECT_TRUE(z.value().allFinite());
}

}  // namespace
}  // namespace cpt

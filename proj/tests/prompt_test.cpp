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

#include "cpt/model/vision.hpp"
#include "cpt/prompt/customization.hpp"
#include "test_util.hpp"

namespace cpt {
namespace {

using testing::check_gradients;
using testing::random_tensor;

Tensor vec(std::vector<double> v) {
  const Index n = static_cast<Index>(v.size());
  return Tensor::from_values({n}, v);
}

// Random head weights so the net is no longer the identity transform.
void randomize_head(ParamNet& net, Rng& rng) {
  auto& head = net.layers().back();
  for (Tensor t : {head.weight, head.bias})
    for (Index i = 0; i < t.size(); ++i) t.mutable_value().data()[i] = rng.normal(0.0, 0.5);
}

TEST(CustomizePromptwise, IdentityLawProperty) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const int n = rng.uniform_int(1, 20), d = rng.uniform_int(1, 70);
    Tensor p = random_tensor({n, d}, rng, false, 3.0);
    Tensor out = customize_promptwise(p, Tensor::filled({n}, 1.0), Tensor::zeros({n}));
    EXPECT_EQ(out.value(), p.value());
    EXPECT_EQ(customize_bookwise(p, Tensor::scalar(1.0), Tensor::scalar(0.0)).value(), p.value());
  }
}

TEST(CustomizePromptwise, WorkedExample) {
  Tensor p = Tensor::from_values({1, 2}, {2, -1});
  Tensor out = customize_promptwise(p, vec({3}), vec({0.5}));
  EXPECT_EQ(out.values(), (std::vector<double>{6.5, -2.5}));
}

TEST(CustomizePromptwise, MatchesLoopOracle) {
  Rng rng(3);
  Tensor p = random_tensor({4, 8}, rng, false);
  Tensor g = random_tensor({4}, rng, false), b = random_tensor({4}, rng, false);
  Mat out = customize_promptwise(p, g, b).value();
  for (int i = 0; i < 4; ++i)
    for (int d = 0; d < 8; ++d)
      EXPECT_DOUBLE_EQ(out(i, d), g.value()(0, i) * p.value()(i, d) + b.value()(0, i));
}

TEST(CustomizePromptwise, LengthMismatch) {
  Rng rng(3);
  Tensor p = random_tensor({4, 8}, rng, false);
  EXPECT_THROW(customize_promptwise(p, Tensor::filled({3}, 1.0), Tensor::zeros({4})), ad::DimensionError);
  EXPECT_THROW(customize_promptwise(p, Tensor::filled({4}, 1.0), Tensor::zeros({5})), ad::DimensionError);
}

TEST(CustomizeBookwise, Examples) {
  Rng rng(4);
  Tensor p = random_tensor({3, 5}, rng, false);
  Mat c = customize_bookwise(p, Tensor::scalar(0.0), Tensor::scalar(0.25)).value();
  EXPECT_TRUE((c.array() == 0.25).all());
  Mat out = customize_bookwise(p, Tensor::scalar(-2.0), Tensor::scalar(1.0)).value();
  for (int i = 0; i < 3; ++i)
    for (int d = 0; d < 5; ++d) EXPECT_DOUBLE_EQ(out(i, d), -2.0 * p.value()(i, d) + 1.0);
  EXPECT_THROW(customize_bookwise(p, Tensor::scalar(NAN), Tensor::scalar(0.0)), ad::NumericError);
}

TEST(CustomizeBookwise, CompositionLawProperty) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    Tensor p = random_tensor({rng.uniform_int(1, 10), rng.uniform_int(1, 30)}, rng, false);
    const double g1 = rng.normal(), b1 = rng.normal(), g2 = rng.normal(), b2 = rng.normal();
    Mat twice = customize_bookwise(customize_bookwise(p, Tensor::scalar(g1), Tensor::scalar(b1)), Tensor::scalar(g2),
                                   Tensor::scalar(b2))
                    .value();
    Mat once = customize_bookwise(p, Tensor::scalar(g2 * g1), Tensor::scalar(g2 * b1 + b2)).value();
    EXPECT_LT((twice - once).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(CustomizeBookwise, EqualsPromptwiseWithConstantVectorsProperty) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed);
    const int n = rng.uniform_int(1, 12);
    Tensor p = random_tensor({n, rng.uniform_int(1, 30)}, rng, false);
    const double g = rng.normal(), b = rng.normal();
    EXPECT_EQ(customize_bookwise(p, Tensor::scalar(g), Tensor::scalar(b)).value(),
              customize_promptwise(p, Tensor::filled({n}, g), Tensor::filled({n}, b)).value());
  }
}

TEST(CustomizeTransforms, GradientsMatchFiniteDifferences) {
  Rng rng(6);
  Tensor p = random_tensor({4, 6}, rng), g = random_tensor({4}, rng), b = random_tensor({4}, rng);
  Mat w = testing::random_weights(p, rng);
  auto pw = check_gradients([&] { return testing::weighted_sum(customize_promptwise(p, g, b), w); }, {p, g, b}, 1e-6);
  EXPECT_EQ(pw.failures, 0) << pw.worst;
  Tensor gs = random_tensor({}, rng), bs = random_tensor({}, rng);
  auto bw = check_gradients([&] { return testing::weighted_sum(customize_bookwise(p, gs, bs), w); }, {p, gs, bs}, 1e-6);
  EXPECT_EQ(bw.failures, 0) << bw.worst;
}

TEST(ParamNet, ZeroInitHeadIsIdentity) {
  for (auto mode : {CustomizationMode::PromptWise, CustomizationMode::BookWise})
    for (int depth = 1; depth <= 3; ++depth) {
      Rng rng(depth);
      ParamNet net(mode, depth, 8, 5, rng);
      AffineParams params = net.compute(random_tensor({4, 8}, rng, false));
      EXPECT_TRUE((params.gamma.value().array() == 1.0).all());
      EXPECT_TRUE((params.beta.value().array() == 0.0).all());
      EXPECT_EQ(params.gamma.size(), mode == CustomizationMode::PromptWise ? 5 : 1);
    }
}

TEST(ParamNet, HeadWidth) {
  Rng rng(0);
  EXPECT_EQ(ParamNet(CustomizationMode::BookWise, 2, 8, 16, rng).output_dim(), 2);
  EXPECT_EQ(ParamNet(CustomizationMode::PromptWise, 2, 8, 16, rng).output_dim(), 32);
  EXPECT_EQ(ParamNet(CustomizationMode::PromptWise, 3, 8, 16, rng).depth(), 3);
  EXPECT_THROW(ParamNet(CustomizationMode::PromptWise, 4, 8, 16, rng), ConfigError);
}

TEST(ParamNet, Errors) {
  Rng rng(0);
  ParamNet net(CustomizationMode::PromptWise, 2, 8, 4, rng);
  EXPECT_THROW(net.compute(random_tensor({4, 7}, rng, false)), ad::DimensionError);
  ParamNet none;
  EXPECT_THROW(none.compute(random_tensor({4, 8}, rng, false)), ad::ContractError);
}

TEST(ParamNet, DistinctImagesGiveDistinctParams) {
  ModelConfig config = tiny_config();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    VisionEncoder enc(config, rng);
    ParamNet net(CustomizationMode::PromptWise, 2, config.feature_dim, config.num_prompts, rng);
    randomize_head(net, rng);
    data::Image a = data::Image::zeros(16, 16, 1), b = a;
    for (double& v : a.pixels) v = rng.uniform();
    for (double& v : b.pixels) v = rng.uniform();
    AffineParams pa = net.compute(enc.encode(a)), pb = net.compute(enc.encode(b));
    EXPECT_TRUE(pa.gamma.value() != pb.gamma.value() || pa.beta.value() != pb.beta.value()) << seed;
  }
}

TEST(ParamNet, GradientsMatchFiniteDifferences) {
  for (auto mode : {CustomizationMode::PromptWise, CustomizationMode::BookWise}) {
    Rng rng(9);
    ParamNet net(mode, 2, 6, 3, rng);
    randomize_head(net, rng);
    Tensor x = random_tensor({5, 6}, rng, true);
    std::vector<Tensor> wrt{x};
    for (auto& p : net.parameters()) wrt.push_back(p.tensor);
    auto check = check_gradients(
        [&] {
          AffineParams p = net.compute(x);
          return ad::sum(p.gamma) + ad::sum(p.beta);
        },
        wrt, 1e-5);
    EXPECT_EQ(check.failures, 0) << "worst " << check.worst;
  }
}

TEST(ParamNet, CountsCalls) {
  Rng rng(0);
  ParamNet net(CustomizationMode::BookWise, 1, 4, 2, rng);
  Tensor x = random_tensor({3, 4}, rng, false);
  net.compute(x);
  net.compute(x);
  EXPECT_EQ(net.calls(), 2u);
}

TEST(AblateParams, Examples) {
  AffineParams p{CustomizationMode::PromptWise, vec({2}), vec({5})};
  AffineParams nb = ablate_params(p, false, true);
  EXPECT_EQ(nb.gamma.values(), std::vector<double>{2});
  EXPECT_EQ(nb.beta.values(), std::vector<double>{0});
  AffineParams ng = ablate_params(p, true, false);
  EXPECT_EQ(ng.gamma.values(), std::vector<double>{1});
  EXPECT_EQ(ng.beta.values(), std::vector<double>{5});
}

TEST(CustomizedPrompts, PassThroughAndIdentityAtInit) {
  ModelConfig config = tiny_config();
  Rng rng(1);
  Promptbook book(config.num_prompts, config.d_model, 0.5, rng);
  Tensor x = random_tensor({config.visual_tokens, config.feature_dim}, rng, false);
  EXPECT_TRUE(customized_prompts(x, book, nullptr, CustomizationMode::None).same_node(book.book));
  for (auto mode : {CustomizationMode::PromptWise, CustomizationMode::BookWise}) {
    ParamNet net(mode, 2, config.feature_dim, config.num_prompts, rng);
    EXPECT_EQ(customized_prompts(x, book, &net, mode).value(), book.book.value());
    EXPECT_THROW(customized_prompts(x, book, nullptr, mode), ad::ContractError);
  }
}

TEST(CustomizedPrompts, DropBothEqualsNonePath) {
  ModelConfig config = tiny_config();
  Rng rng(2);
  Promptbook book(config.num_prompts, config.d_model, 0.5, rng);
  ParamNet net(CustomizationMode::PromptWise, 2, config.feature_dim, config.num_prompts, rng);
  randomize_head(net, rng);
  Tensor x = random_tensor({config.visual_tokens, config.feature_dim}, rng, false);
  EXPECT_NE(customized_prompts(x, book, &net, CustomizationMode::PromptWise).value(), book.book.value());
  EXPECT_EQ(customized_prompts(x, book, &net, CustomizationMode::PromptWise, {true, true}).value(),
            book.book.value());
}

TEST(CustomizedPrompts, DeterministicPerImage) {
  ModelConfig config = tiny_config();
  Rng rng(3);
  Promptbook book(config.num_prompts, config.d_model, 0.5, rng);
  ParamNet net(CustomizationMode::PromptWise, 2, config.feature_dim, config.num_prompts, rng);
  randomize_head(net, rng);
  Tensor x = random_tensor({config.visual_tokens, config.feature_dim}, rng, false);
  Tensor y = random_tensor({config.visual_tokens, config.feature_dim}, rng, false);
  auto mode = CustomizationMode::PromptWise;
  EXPECT_EQ(customized_prompts(x, book, &net, mode).value(), customized_prompts(x, book, &net, mode).value());
  EXPECT_NE(customized_prompts(x, book, &net, mode).value(), customized_prompts(y, book, &net, mode).value());
}

TEST(Promptbook, Shape) {
  Rng rng(0);
  Promptbook book(7, 12, 0.1, rng);
  EXPECT_EQ(book.book.shape(), (Shape{7, 12}));
  EXPECT_TRUE(book.book.requires_grad());
  EXPECT_EQ(book.size(), 7);
}

}  // namespace
}  // namespace cpt

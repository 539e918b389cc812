#include <gtest/gtest.h>

#include "reid/convnet.hpp"
#include "test_support.hpp"

using namespace reid;
using reid::testing::max_gradcheck_error;
using reid::testing::random_tensor;

namespace {

ModelConfig small_cfg() {
  ModelConfig cfg;
  cfg.width = 64;
  cfg.height = 32;
  cfg.stem_channels = 4;
  cfg.stage_channels = {4, 6, 8, 10};
  cfg.embed_dim = 8;
  return cfg;
}

ParamStore conv_params(const ModelConfig& cfg, uint64_t seed) {
  ParamRegistry reg;
  ConvBranch(cfg).register_params(reg);
  return init_params(reg, seed);
}

}  // namespace

TEST(ConvFeatures, StrideArithmetic) {
  ModelConfig cfg = small_cfg();
  ConvBranch branch(cfg);
  ParamStore params = conv_params(cfg, 1);
  GraphCtx g(params);
  auto f = branch.features(g, random_tensor({64, 32, 3}, 2, 0.0, 1.0));
  EXPECT_EQ(f.full.value().shape(), (std::vector<int>{4, 2, 10}));
  EXPECT_EQ(f.early.value().shape(), (std::vector<int>{8, 4, 6}));

  // stage-4 stride back to 2 halves the final spatial dims
  ModelConfig cfg2 = small_cfg();
  cfg2.stage4_stride = 2;
  ConvBranch branch2(cfg2);
  ParamStore params2 = conv_params(cfg2, 1);
  GraphCtx g2(params2);
  auto f2 = branch2.features(g2, random_tensor({64, 32, 3}, 2, 0.0, 1.0));
  EXPECT_EQ(f2.full.value().shape(), (std::vector<int>{2, 1, 10}));

  EXPECT_THROW(branch.features(g, random_tensor({48, 32, 3}, 3)), ShapeError);
}

TEST(ConvFeatures, ShapeContractAcrossResolutions) {
  for (auto [w, h] : {std::pair{64, 32}, std::pair{128, 64}, std::pair{256, 128}}) {
    ModelConfig cfg = small_cfg();
    cfg.width = w;
    cfg.height = h;
    ConvBranch branch(cfg);
    ParamStore params = conv_params(cfg, 4);
    GraphCtx g(params);
    auto f = branch.features(g, random_tensor({w, h, 3}, 5, 0.0, 1.0));
    EXPECT_EQ(f.full.value().dim(0), w / 16);
    EXPECT_EQ(f.full.value().dim(1), h / 16);
    EXPECT_EQ(f.early.value().dim(0), w / 8);
    EXPECT_EQ(f.early.value().dim(1), h / 8);
  }
}

TEST(ConvFeatures, ZeroImageFinite) {
  ModelConfig cfg = small_cfg();
  ConvBranch branch(cfg);
  ParamStore params = conv_params(cfg, 6);
  GraphCtx g(params);
  auto f = branch.features(g, Tensor({64, 32, 3}));
  EXPECT_TRUE(f.full.value().all_finite());
}

TEST(ResBlock, ZeroTransformReducesToShortcut) {
  ModelConfig cfg = small_cfg();
  ConvBranch branch(cfg);
  ParamStore params = conv_params(cfg, 7);
  Tensor x = random_tensor({6, 4, 4}, 8);

  // identity shortcut: stage with stride 1 and equal channels
  {
    ParamRegistry reg;
    reg.conv("blk.c1", 3, 4, 4);
    reg.conv("blk.c2", 3, 4, 4);
    ParamStore bp = init_params(reg, 9);
    for (int i = 0; i < bp.at("blk.c2.w").size(); ++i) bp.at("blk.c2.w")[i] = 0.0;
    GraphCtx g(bp);
    Var out = branch.res_block(g, Var::constant(x), "blk", 4, 4, 1);
    // transform is zero, shortcut is identity: out == relu(x)
    for (int i = 0; i < x.size(); ++i)
      EXPECT_DOUBLE_EQ(out.value()[i], std::max(0.0, x[i]));
  }
  // projection shortcut: compare against the 1x1 conv applied directly
  {
    ParamRegistry reg;
    reg.conv("blk.c1", 3, 4, 6);
    reg.conv("blk.c2", 3, 6, 6);
    reg.conv("blk.sc", 1, 4, 6);
    ParamStore bp = init_params(reg, 10);
    for (int i = 0; i < bp.at("blk.c2.w").size(); ++i) bp.at("blk.c2.w")[i] = 0.0;
    GraphCtx g(bp);
    Var out = branch.res_block(g, Var::constant(x), "blk", 4, 6, 2);
    GraphCtx g2(bp);
    Var expect = relu(conv2d(Var::constant(x), g2.p("blk.sc.w"), g2.p("blk.sc.b"), 2, 0));
    EXPECT_TRUE(out.value() == expect.value());
  }
}

TEST(GlobalEmbed, ConstantMapEqualsLinearOfConstant) {
  ModelConfig cfg = small_cfg();
  ConvBranch branch(cfg);
  ParamStore params = conv_params(cfg, 9);
  GraphCtx g(params);
  Tensor constant_map = Tensor::full({4, 2, 10}, 0.37);
  Var emb = branch.global_embed(g, Var::constant(constant_map));
  EXPECT_EQ(emb.value().size(), cfg.embed_dim);
  // mean of a constant map is the constant vector; compare against the
  // linear map applied to it directly
  Tensor cvec = Tensor::full({10}, 0.37);
  GraphCtx g2(params);
  Var direct = linear_vec(Var::constant(cvec), g2.p("conv.embed.w"), g2.p("conv.embed.b"));
  for (int i = 0; i < emb.value().size(); ++i)
    EXPECT_NEAR(emb.value()[i], direct.value()[i], 1e-12);
}

TEST(ConvGrad, EmbedGradientMatchesFiniteDifferences) {
  ModelConfig cfg = small_cfg();
  cfg.stem_channels = 2;
  cfg.stage_channels = {2, 3, 3, 4};
  cfg.embed_dim = 4;
  ConvBranch branch(cfg);
  ParamStore params = conv_params(cfg, 10);
  Tensor img = random_tensor({64, 32, 3}, 11, 0.0, 1.0);
  const double err = max_gradcheck_error(
      [&](GraphCtx& g) {
        auto f = branch.features(g, img);
        return reid::testing::contract_with(branch.global_embed(g, f.full), 12);
      },
      params, 1e-5);
  EXPECT_LT(err, 1e-4);
}

#include <gtest/gtest.h>

#include "reid/losses.hpp"
#include "reid/model.hpp"
#include "test_support.hpp"

using namespace reid;
using reid::testing::random_tensor;

namespace {

ModelConfig desk_cfg(int w, int h, Variant v, Tokenizer tok = Tokenizer::keypoint) {
  ModelConfig mc;
  mc.width = w;
  mc.height = h;
  mc.num_classes = 4;
  mc.variant = v;
  mc.tokenizer = tok;
  mc.pose_channels = {2, 3, 3, 4, 6};
  mc.pose_head_hidden = 4;
  mc.stem_channels = 4;
  mc.stage_channels = {4, 6, 8, 10};
  mc.embed_dim = 16;
  mc.heads = 2;
  mc.depth = 1;
  mc.d_res = 6;
  mc.d_trans = 6;
  mc.gcn_dims = {8, 8};
  mc.final_dim = 8;
  return mc;
}

}  // namespace

TEST(ModelShapes, AllVariantsAcrossResolutions) {
  for (auto [w, h] : {std::pair{64, 32}, std::pair{128, 64}, std::pair{256, 128}}) {
    Tensor img = random_tensor({w, h, 3}, 1, 0.0, 1.0);
    for (Variant v : {Variant::baseline, Variant::gcm, Variant::tran_gcn}) {
      Model model(desk_cfg(w, h, v));
      ParamStore params = model.init(2);
      GraphCtx g(params);
      auto f = model.forward(g, img);
      EXPECT_EQ(f.conv_full.value().shape(), (std::vector<int>{w / 16, h / 16, 10}));
      EXPECT_EQ(f.conv_early.value().shape(), (std::vector<int>{w / 8, h / 8, 6}));
      EXPECT_EQ(f.conv_embed.value().size(), 16);
      EXPECT_EQ(f.logits.value().size(), 4);
      if (v != Variant::baseline) {
        EXPECT_EQ(f.pose_S.value().shape(), (std::vector<int>{w / 32, h / 32, 18}));
        EXPECT_EQ(f.pose_pafs.value().size(), 19);
        EXPECT_EQ(static_cast<int>(f.keypoints.size()), 18);
        EXPECT_EQ(f.f_final.value().size(), 8);
      }
      if (v == Variant::tran_gcn) EXPECT_EQ(f.cls_embed.value().size(), 16);
      EXPECT_TRUE(f.embedding.value().all_finite());
    }
  }
}

TEST(ModelShapes, TokenizerVariantsForward) {
  Tensor img = random_tensor({64, 32, 3}, 3, 0.0, 1.0);
  for (Tokenizer tok : {Tokenizer::rawp, Tokenizer::cnn, Tokenizer::keypoint}) {
    Model model(desk_cfg(64, 32, Variant::tran_gcn, tok));
    ParamStore params = model.init(4);
    GraphCtx g(params);
    auto f = model.forward(g, img);
    EXPECT_TRUE(f.logits.value().all_finite());
    EXPECT_EQ(f.f_final.value().size(), 8);
  }
}

TEST(ModelShapes, CombinedEmbeddingPath) {
  ModelConfig mc = desk_cfg(64, 32, Variant::tran_gcn);
  mc.embedding = EmbeddingKind::combined;
  mc.final_dim = mc.embed_dim;  // combined requires matching widths
  Model model(mc);
  ParamStore params = model.init(5);
  Tensor img = random_tensor({64, 32, 3}, 6, 0.0, 1.0);
  GraphCtx g(params);
  auto f = model.forward(g, img);
  EXPECT_EQ(f.embedding.value().size(), mc.embed_dim);
  // baseline cannot use the combined embedding
  ModelConfig bad = desk_cfg(64, 32, Variant::baseline);
  bad.embedding = EmbeddingKind::combined;
  EXPECT_THROW(Model{bad}, ConfigError);
}

TEST(ModelForward, DeterministicEmbedding) {
  Model model(desk_cfg(64, 32, Variant::tran_gcn));
  ParamStore params = model.init(7);
  Tensor img = random_tensor({64, 32, 3}, 8, 0.0, 1.0);
  EXPECT_TRUE(model.embed(params, img) == model.embed(params, img));
}

TEST(ModelGrad, JointLossThroughGcmHead) {
  // gradcheck of the trainable stage-4 surface (gcm + classifier) with the
  // branches cached, mirroring how training runs it
  ModelConfig mc = desk_cfg(64, 32, Variant::tran_gcn);
  Model model(mc);
  ParamStore params = model.init(9);
  reid::testing::randomize_params(params, 10, 0.1);
  Tensor img = random_tensor({64, 32, 3}, 11, 0.0, 1.0);
  Model::BranchCache cache = model.branch_cache(params, img);
  model.add_encoder_cache(params, cache);

  // restrict the store to gcm parameters so finite differences stay cheap
  ParamStore gcm_only;
  for (const auto& [path, t] : params)
    if (path.rfind("gcm.", 0) == 0) gcm_only.insert(path, t);

  auto loss_of = [&](const ParamStore& p) {
    ParamStore full = params;
    for (const auto& [path, t] : p) full.at(path) = t;
    GraphCtx g(full, [](const std::string& s) { return s.rfind("gcm.", 0) == 0; });
    auto f = model.forward_cached(g, cache, false);
    return id_classification_loss(f.logits, 1);
  };
  GraphCtx g(params, [](const std::string& s) { return s.rfind("gcm.", 0) == 0; });
  auto f = model.forward_cached(g, cache, false);
  Var loss = id_classification_loss(f.logits, 1);
  loss.backward();
  auto analytic = g.grads();
  auto reports = check_gradients(
      [&](const ParamStore& p) { return loss_of(p).value().item(); }, analytic, gcm_only, 1e-5);
  for (const auto& r : reports) EXPECT_LT(r.max_rel_error, 1e-4) << r.path;
}

#include "reid/model.hpp"

#include "reid/losses.hpp"

namespace reid {

Model::Model(ModelConfig cfg)
    : cfg_(std::move(cfg)), pose_(cfg_), conv_(cfg_), trans_(cfg_), gcm_(cfg_) {
  cfg_.validate();
  if (cfg_.embedding == EmbeddingKind::combined && cfg_.variant != Variant::tran_gcn)
    throw ConfigError("combined embedding requires the tran_gcn variant");
}

ParamRegistry Model::registry() const {
  ParamRegistry reg;
  conv_.register_params(reg);
  if (cfg_.variant == Variant::baseline) {
    reg.linear("cls", cfg_.embed_dim, cfg_.num_classes);
    return reg;
  }
  pose_.register_params(reg);
  if (cfg_.variant == Variant::tran_gcn) trans_.register_params(reg);
  gcm_.register_params(reg);
  if (cfg_.embedding == EmbeddingKind::combined) {
    reg.linear("comb.pose", cfg_.keypoints + cfg_.n_limbs(), cfg_.embed_dim);
    reg.linear("comb.trans", cfg_.embed_dim, cfg_.embed_dim);
    reg.linear("comb.res", cfg_.embed_dim, cfg_.embed_dim);
    if (cfg_.embed_dim != cfg_.final_dim)
      throw ConfigError("combined embedding needs embed_dim == final_dim");
  }
  return reg;
}

ParamStore Model::init(uint64_t seed) const { return init_params(registry(), seed); }

Model::Forward Model::assemble(GraphCtx& g, Parts parts, std::vector<Tensor>* attention) const {
  Forward out;
  out.conv_full = parts.conv_full;
  out.conv_early = parts.conv_early;
  out.conv_embed = parts.conv_embed;

  if (cfg_.variant == Variant::baseline) {
    out.logits = linear_vec(out.conv_embed, g.p("cls.w"), g.p("cls.b"));
    out.embedding = out.conv_embed;
    return out;
  }

  out.pose_S = parts.pose_S;
  out.pose_pafs = parts.pose_pafs;
  out.keypoints = parts.keypoints;

  Var encoder_seq = parts.encoder_seq;
  out.cls_embed = parts.cls_embed;
  if (cfg_.variant == Variant::tran_gcn && !parts.encoder_ready) {
    TokenSequence seq;
    switch (cfg_.tokenizer) {
      case Tokenizer::rawp:
        seq = trans_.tokenize_raw(g, *parts.image);
        break;
      case Tokenizer::cnn:
        seq = trans_.tokenize_featuremap(g, parts.conv_full);
        break;
      case Tokenizer::keypoint:
        seq = trans_.tokenize_keypoints(g, parts.conv_early, parts.keypoints);
        break;
    }
    EncoderOutput enc = trans_.encode(g, seq, attention);
    encoder_seq = enc.sequence;
    out.cls_embed = enc.cls;
  }

  Var h_s = gcm_.node_confidence(g, parts.pose_S, parts.keypoints);
  Var affinity = scatter_symmetric(parts.pose_pafs, cfg_.limbs, cfg_.keypoints);
  Var h_edge = GcmModule::edge_affinity(affinity);
  GcmModule::BranchProjections proj =
      gcm_.project_branch_features(g, parts.conv_full, encoder_seq, parts.keypoints);
  PersonGraph graph = GcmModule::build_graph(h_s, proj.h_res, proj.h_trans, h_edge);
  Var final_nodes = gcm_.run_gcn(g, graph);
  Var h_agg = gcm_.aggregate(final_nodes);
  GcmModule::Fused fused = gcm_.fuse_and_classify(g, h_agg, final_nodes);
  out.f_final = fused.f_final;
  out.logits = fused.logits;

  if (cfg_.embedding == EmbeddingKind::combined) {
    Var pose_vec = concat_cols({reshape(spatial_mean(parts.pose_S), {1, cfg_.keypoints}),
                                reshape(parts.pose_pafs, {1, cfg_.n_limbs()})});
    Var f_pose = linear_vec(reshape(pose_vec, {pose_vec.value().dim(1)}), g.p("comb.pose.w"),
                            g.p("comb.pose.b"));
    Var f_trans = linear_vec(out.cls_embed, g.p("comb.trans.w"), g.p("comb.trans.b"));
    Var f_res = linear_vec(out.conv_embed, g.p("comb.res.w"), g.p("comb.res.b"));
    out.embedding = combine_features(f_pose, f_trans, f_res);
  } else {
    out.embedding = out.f_final;
  }
  if (!out.logits.value().all_finite() || !out.embedding.value().all_finite())
    throw NumericError("model forward produced non-finite values");
  return out;
}

Model::Forward Model::forward(GraphCtx& g, const Tensor& image,
                              std::vector<Tensor>* attention) const {
  Parts parts;
  parts.image = &image;
  ConvBranch::Features conv_feat = conv_.features(g, image);
  parts.conv_full = conv_feat.full;
  parts.conv_early = conv_feat.early;
  parts.conv_embed = conv_.global_embed(g, conv_feat.full);
  if (cfg_.variant != Variant::baseline) {
    Var f_pe = pose_.features(g, image);
    PoseBranch::Heads heads = pose_.predict(g, f_pe);
    parts.pose_S = heads.S;
    parts.pose_pafs = heads.pafs;
    parts.keypoints = extract_keypoints(heads.S.value());
  }
  return assemble(g, std::move(parts), attention);
}

Model::BranchCache Model::branch_cache(const ParamStore& params, const Tensor& image) const {
  GraphCtx g(params, [](const std::string&) { return false; });
  BranchCache cache;
  cache.image = image;
  ConvBranch::Features conv_feat = conv_.features(g, image);
  cache.conv_full = conv_feat.full.value();
  cache.conv_early = conv_feat.early.value();
  cache.conv_embed = conv_.global_embed(g, conv_feat.full).value();
  if (cfg_.variant != Variant::baseline) {
    Var f_pe = pose_.features(g, image);
    PoseBranch::Heads heads = pose_.predict(g, f_pe);
    cache.pose_S = heads.S.value();
    cache.pose_pafs = heads.pafs.value();
    cache.keypoints = extract_keypoints(cache.pose_S);
  }
  return cache;
}

void Model::add_encoder_cache(const ParamStore& params, BranchCache& cache) const {
  if (cfg_.variant != Variant::tran_gcn) return;
  GraphCtx g(params, [](const std::string&) { return false; });
  TokenSequence seq;
  switch (cfg_.tokenizer) {
    case Tokenizer::rawp:
      seq = trans_.tokenize_raw(g, cache.image);
      break;
    case Tokenizer::cnn:
      seq = trans_.tokenize_featuremap(g, Var::constant(cache.conv_full));
      break;
    case Tokenizer::keypoint:
      seq = trans_.tokenize_keypoints(g, Var::constant(cache.conv_early), cache.keypoints);
      break;
  }
  EncoderOutput enc = trans_.encode(g, seq);
  cache.encoder_seq = enc.sequence.value();
  cache.cls_embed = enc.cls.value();
}

Model::Forward Model::forward_cached(GraphCtx& g, const BranchCache& cache,
                                     bool encoder_live) const {
  Parts parts;
  parts.image = &cache.image;
  parts.conv_full = Var::constant(cache.conv_full);
  if (!cache.conv_early.empty()) parts.conv_early = Var::constant(cache.conv_early);
  parts.conv_embed = Var::constant(cache.conv_embed);
  if (cfg_.variant != Variant::baseline) {
    parts.pose_S = Var::constant(cache.pose_S);
    parts.pose_pafs = Var::constant(cache.pose_pafs);
    parts.keypoints = cache.keypoints;
  }
  if (!encoder_live && cfg_.variant == Variant::tran_gcn) {
    if (cache.encoder_seq.empty())
      throw ContractError("forward_cached: encoder cache missing; call add_encoder_cache");
    parts.encoder_seq = Var::constant(cache.encoder_seq);
    parts.cls_embed = Var::constant(cache.cls_embed);
    parts.encoder_ready = true;
  }
  return assemble(g, std::move(parts), nullptr);
}

Tensor Model::embed(const ParamStore& params, const Tensor& image) const {
  GraphCtx g(params, [](const std::string&) { return false; });
  return forward(g, image).embedding.value();
}

}  // namespace reid

#include "reid/transformer.hpp"

#include <cmath>
#include <string>

namespace reid {

int TransformerBranch::token_count() const {
  switch (cfg_->tokenizer) {
    case Tokenizer::rawp:
      return (cfg_->width / cfg_->patch) * (cfg_->height / cfg_->patch);
    case Tokenizer::cnn: {
      const int s = cfg_->stage4_stride == 1 ? 16 : 32;
      return (cfg_->width / s) * (cfg_->height / s);
    }
    case Tokenizer::keypoint:
      return cfg_->keypoints;
  }
  return 0;
}

void TransformerBranch::register_params(ParamRegistry& reg) const {
  const int d = cfg_->embed_dim;
  int in_dim = 0;
  switch (cfg_->tokenizer) {
    case Tokenizer::rawp:
      in_dim = cfg_->patch * cfg_->patch * 3;
      break;
    case Tokenizer::cnn:
      in_dim = cfg_->stage_channels.back();
      break;
    case Tokenizer::keypoint:
      in_dim = cfg_->window * cfg_->window * cfg_->stage_channels[1] + 1;
      break;
  }
  reg.weight("trans.embed.w", {in_dim, d}, in_dim, d);
  reg.weight("trans.cls", {d}, d, d);
  reg.weight("trans.pos", {token_count() + 1, d}, d, d);
  for (int t = 0; t < cfg_->depth; ++t) {
    const std::string p = "trans.enc" + std::to_string(t);
    reg.norm(p + ".ln1", d);
    reg.norm(p + ".ln2", d);
    reg.linear(p + ".wq", d, d);
    reg.linear(p + ".wk", d, d);
    reg.linear(p + ".wv", d, d);
    reg.linear(p + ".wo", d, d);
    reg.linear(p + ".ff1", d, 4 * d);
    reg.linear(p + ".ff2", 4 * d, d);
  }
}

TokenSequence TransformerBranch::assemble(GraphCtx& g, const Var& patch_tokens) const {
  const int n = patch_tokens.value().dim(0);
  Var cls = reshape(g.p("trans.cls"), {1, cfg_->embed_dim});
  Var seq = concat_rows({patch_tokens, cls});
  Var pos = g.p("trans.pos");
  if (pos.value().dim(0) != n + 1)
    throw ShapeError("positional encoding rows " + std::to_string(pos.value().dim(0)) +
                     " do not match sequence length " + std::to_string(n + 1));
  return {add(seq, pos), n};
}

TokenSequence TransformerBranch::tokenize_raw(GraphCtx& g, const Tensor& image) const {
  const int p = cfg_->patch;
  if (image.dim(0) % p || image.dim(1) % p)
    throw ShapeError("tokenize_raw: image " + image.shape_str() + " not divisible by patch " +
                     std::to_string(p));
  const int tw = image.dim(0) / p, th = image.dim(1) / p;
  const int n = tw * th;
  const int flat = p * p * 3;
  Tensor patches({n, flat});
  for (int tx = 0; tx < tw; ++tx)
    for (int ty = 0; ty < th; ++ty) {
      const int row = tx * th + ty;
      int o = 0;
      for (int du = 0; du < p; ++du)
        for (int dv = 0; dv < p; ++dv)
          for (int c = 0; c < 3; ++c, ++o) {
            const double v = image.at(tx * p + du, ty * p + dv, c);
            patches.at(row, o) = (v - cfg_->input_mean) / cfg_->input_std;
          }
    }
  Var tokens = matmul(Var::constant(std::move(patches)), g.p("trans.embed.w"));
  return assemble(g, tokens);
}

TokenSequence TransformerBranch::tokenize_featuremap(GraphCtx& g, const Var& full) const {
  if (!full.defined()) throw ContractError("tokenize_featuremap: missing conv features");
  const int n = full.value().dim(0) * full.value().dim(1);
  const int c = full.value().dim(2);
  Var flat = reshape(full, {n, c});
  Var tokens = matmul(flat, g.p("trans.embed.w"));
  return assemble(g, tokens);
}

TokenSequence TransformerBranch::tokenize_keypoints(GraphCtx& g, const Var& early,
                                                    const std::vector<Keypoint>& keypoints) const {
  if (!early.defined()) throw ContractError("tokenize_keypoints: missing early conv features");
  if (cfg_->window % 2 == 0) throw ConfigError("tokenize_keypoints: window must be odd");
  const int k = static_cast<int>(keypoints.size());
  // keypoints live on the 1/32 grid; early features on the 1/8 grid
  const int fx = early.value().dim(0) / std::max(1, cfg_->grid_w());
  const int fy = early.value().dim(1) / std::max(1, cfg_->grid_h());
  std::vector<Point> centers(static_cast<size_t>(k));
  Tensor conf({k, 1});
  std::vector<bool> keep(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    const auto& kp = keypoints[static_cast<size_t>(i)];
    centers[static_cast<size_t>(i)] = {kp.x * fx + fx / 2, kp.y * fy + fy / 2};
    conf.at(i, 0) = kp.confidence;
    keep[static_cast<size_t>(i)] = kp.confidence >= cfg_->tau_kp;
  }
  Var windows = gather_patches(early, centers, cfg_->window);
  Var with_conf = concat_cols({windows, Var::constant(std::move(conf))});
  Var tokens = matmul(with_conf, g.p("trans.embed.w"));
  return assemble(g, mask_rows(tokens, keep));
}

EncoderOutput TransformerBranch::encode(GraphCtx& g, const TokenSequence& seq,
                                        std::vector<Tensor>* attention) const {
  const int d = cfg_->embed_dim;
  const int h = cfg_->heads;
  if (d % h) throw ConfigError("embed_dim not divisible by head count");
  const int dk = d / h;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dk));
  Var x = seq.tokens;
  for (int t = 0; t < cfg_->depth; ++t) {
    const std::string p = "trans.enc" + std::to_string(t);
    Var n1 = layer_norm_rows(x, g.p(p + ".ln1.g"), g.p(p + ".ln1.b"));
    Var q = linear(n1, g.p(p + ".wq.w"), g.p(p + ".wq.b"));
    Var k = linear(n1, g.p(p + ".wk.w"), g.p(p + ".wk.b"));
    Var v = linear(n1, g.p(p + ".wv.w"), g.p(p + ".wv.b"));
    std::vector<Var> heads;
    heads.reserve(static_cast<size_t>(h));
    for (int i = 0; i < h; ++i) {
      Var qi = slice_cols(q, i * dk, (i + 1) * dk);
      Var ki = slice_cols(k, i * dk, (i + 1) * dk);
      Var vi = slice_cols(v, i * dk, (i + 1) * dk);
      Var logits = scale(matmul(qi, transpose2d(ki)), inv_scale);
      Var probs = softmax_rows(logits);
      if (attention) attention->push_back(probs.value());
      heads.push_back(matmul(probs, vi));
    }
    Var z = linear(concat_cols(heads), g.p(p + ".wo.w"), g.p(p + ".wo.b"));
    x = add(x, z);
    Var n2 = layer_norm_rows(x, g.p(p + ".ln2.g"), g.p(p + ".ln2.b"));
    Var f = linear(relu(linear(n2, g.p(p + ".ff1.w"), g.p(p + ".ff1.b"))), g.p(p + ".ff2.w"),
                   g.p(p + ".ff2.b"));
    x = add(x, f);
  }
  if (!x.value().all_finite()) throw NumericError("transformer forward produced non-finite values");
  return {x, select_row(x, seq.n_tok)};
}

}  // namespace reid

#include "reid/convnet.hpp"

namespace reid {

void ConvBranch::register_params(ParamRegistry& reg) const {
  reg.conv("conv.stem", 3, 3, cfg_->stem_channels);
  int cin = cfg_->stem_channels;
  for (int s = 0; s < 4; ++s) {
    const std::string p = "conv.s" + std::to_string(s + 1);
    const int cout = cfg_->stage_channels[static_cast<size_t>(s)];
    const int stride = (s == 3) ? cfg_->stage4_stride : 2;
    reg.conv(p + ".c1", 3, cin, cout);
    reg.conv(p + ".c2", 3, cout, cout);
    if (stride != 1 || cin != cout) reg.conv(p + ".sc", 1, cin, cout);
    cin = cout;
  }
  reg.linear("conv.embed", cin, cfg_->embed_dim);
}

Var ConvBranch::res_block(GraphCtx& g, const Var& x, const std::string& path, int cin, int cout,
                          int stride) const {
  Var h = relu(conv2d(x, g.p(path + ".c1.w"), g.p(path + ".c1.b"), stride, 1));
  h = conv2d(h, g.p(path + ".c2.w"), g.p(path + ".c2.b"), 1, 1);
  Var shortcut = x;
  if (stride != 1 || cin != cout)
    shortcut = conv2d(x, g.p(path + ".sc.w"), g.p(path + ".sc.b"), stride, 0);
  return relu(add(h, shortcut));
}

ConvBranch::Features ConvBranch::features(GraphCtx& g, const Tensor& image) const {
  if (image.ndim() != 3 || image.dim(2) != 3)
    throw ShapeError("conv features: expected [W,H,3] image, got " + image.shape_str());
  if (image.dim(0) % 32 || image.dim(1) % 32)
    throw ShapeError("conv features: image dims " + image.shape_str() +
                     " must be a multiple of 32");
  Tensor norm = image;
  for (int i = 0; i < norm.size(); ++i)
    norm[i] = (norm[i] - cfg_->input_mean) / cfg_->input_std;
  Var x = relu(conv2d(Var::constant(std::move(norm)), g.p("conv.stem.w"), g.p("conv.stem.b"),
                      2, 1));
  int cin = cfg_->stem_channels;
  Features f;
  for (int s = 0; s < 4; ++s) {
    const std::string p = "conv.s" + std::to_string(s + 1);
    const int cout = cfg_->stage_channels[static_cast<size_t>(s)];
    const int stride = (s == 3) ? cfg_->stage4_stride : 2;
    x = res_block(g, x, p, cin, cout, stride);
    if (s == 1) f.early = x;
    cin = cout;
  }
  f.full = x;
  if (!f.full.value().all_finite()) throw NumericError("conv forward produced non-finite values");
  return f;
}

Var ConvBranch::global_embed(GraphCtx& g, const Var& full) const {
  if (!full.defined()) throw ContractError("global_embed: missing conv features");
  Var pooled = spatial_mean(full);
  return linear_vec(pooled, g.p("conv.embed.w"), g.p("conv.embed.b"));
}

}  // namespace reid

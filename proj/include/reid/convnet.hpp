#pragma once

#include "reid/config.hpp"
#include "reid/graph_ctx.hpp"
#include "reid/tensor.hpp"

namespace reid {

// Residual appearance backbone. Stem plus four stages; stage 4's stride is
// configurable (1 keeps the final map at 1/16 of the input). The stage-2
// output is exposed for keypoint-localized tokens.
class ConvBranch {
 public:
  explicit ConvBranch(const ModelConfig& cfg) : cfg_(&cfg) {}

  void register_params(ParamRegistry& reg) const;

  struct Features {
    Var full;   // [W/16, H/16, C_res] with stage4_stride == 1
    Var early;  // [W/8, H/8, C_early]
  };
  Features features(GraphCtx& g, const Tensor& image) const;

  // Spatial mean pool + learned map to the shared embedding width.
  Var global_embed(GraphCtx& g, const Var& full) const;

  int out_channels() const { return cfg_->stage_channels.back(); }
  int early_channels() const { return cfg_->stage_channels[1]; }

  // relu(conv2(relu(conv1(x))) + shortcut(x)); the shortcut is a strided 1x1
  // projection when shape changes, identity otherwise.
  Var res_block(GraphCtx& g, const Var& x, const std::string& path, int cin, int cout,
                int stride) const;

 private:
  const ModelConfig* cfg_;
};

}  // namespace reid

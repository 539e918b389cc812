#pragma once

#include "reid/config.hpp"
#include "reid/convnet.hpp"
#include "reid/gcm.hpp"
#include "reid/graph_ctx.hpp"
#include "reid/pose.hpp"
#include "reid/transformer.hpp"

namespace reid {

// Wires the branches per ablation variant:
//   baseline  conv branch + global embed + linear classifier
//   gcm       pose + conv fused by the graph module (transformer columns zero)
//   tran_gcn  all three branches fused by the graph module
class Model {
 public:
  explicit Model(ModelConfig cfg);

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry registry() const;
  ParamStore init(uint64_t seed) const;

  struct Forward {
    Var pose_S, pose_pafs;   // pose head outputs (gcm/tran_gcn)
    std::vector<Keypoint> keypoints;
    Var conv_full, conv_early;
    Var conv_embed;          // global embedding [D]
    Var cls_embed;           // transformer cls output [D] (tran_gcn)
    Var f_final;             // fused feature [final_dim] (gcm/tran_gcn)
    Var logits;              // [C]
    Var embedding;           // retrieval embedding per config
  };
  Forward forward(GraphCtx& g, const Tensor& image,
                  std::vector<Tensor>* attention = nullptr) const;

  // Frozen-branch outputs for one image, reusable across training steps.
  // Values are bit-identical to what forward() computes live, since the same
  // ops run once with the same parameters.
  struct BranchCache {
    Tensor image;
    Tensor pose_S, pose_pafs;
    std::vector<Keypoint> keypoints;
    Tensor conv_full, conv_early, conv_embed;
    Tensor encoder_seq, cls_embed;  // filled by add_encoder_cache
  };
  BranchCache branch_cache(const ParamStore& params, const Tensor& image) const;
  void add_encoder_cache(const ParamStore& params, BranchCache& cache) const;
  // encoder_live runs the tokenizer/encoder with graph parameters (stage 3);
  // otherwise the cached encoder output is used as a constant (stage 4).
  Forward forward_cached(GraphCtx& g, const BranchCache& cache, bool encoder_live) const;

  // Value-level retrieval embedding with frozen parameters.
  Tensor embed(const ParamStore& params, const Tensor& image) const;

  const PoseBranch& pose() const { return pose_; }
  const ConvBranch& conv() const { return conv_; }
  const TransformerBranch& transformer() const { return trans_; }
  const GcmModule& gcm() const { return gcm_; }

 private:
  struct Parts {
    Var pose_S, pose_pafs;
    std::vector<Keypoint> keypoints;
    Var conv_full, conv_early, conv_embed;
    const Tensor* image = nullptr;
    Var encoder_seq, cls_embed;
    bool encoder_ready = false;
  };
  Forward assemble(GraphCtx& g, Parts parts, std::vector<Tensor>* attention) const;

  ModelConfig cfg_;
  PoseBranch pose_;
  ConvBranch conv_;
  TransformerBranch trans_;
  GcmModule gcm_;
};

}  // namespace reid

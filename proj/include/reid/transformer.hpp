#pragma once

#include <vector>

#include "reid/config.hpp"
#include "reid/graph_ctx.hpp"
#include "reid/pose.hpp"
#include "reid/tensor.hpp"

namespace reid {

// Token sequence with the classification token appended after the patch
// tokens and learned positional encodings already added.
struct TokenSequence {
  Var tokens;     // [(n_tok + 1), D]
  int n_tok = 0;  // cls token sits at row n_tok
};

struct EncoderOutput {
  Var sequence;  // same shape as the input tokens
  Var cls;       // row n_tok of the output sequence
};

// Self-attention encoder over local-feature tokens with three input
// constructions: raw image patches, conv feature-map columns, or
// keypoint-windowed early conv features.
class TransformerBranch {
 public:
  explicit TransformerBranch(const ModelConfig& cfg) : cfg_(&cfg) {}

  void register_params(ParamRegistry& reg) const;

  // Patch tokens for the active tokenizer's sequence length.
  int token_count() const;

  TokenSequence tokenize_raw(GraphCtx& g, const Tensor& image) const;
  TokenSequence tokenize_featuremap(GraphCtx& g, const Var& full) const;
  TokenSequence tokenize_keypoints(GraphCtx& g, const Var& early,
                                   const std::vector<Keypoint>& keypoints) const;

  // T pre-norm blocks: LN -> multi-head attention -> residual, LN -> FFN ->
  // residual. attention, when given, receives one [N+1,N+1] matrix per
  // layer and head.
  EncoderOutput encode(GraphCtx& g, const TokenSequence& seq,
                       std::vector<Tensor>* attention = nullptr) const;

 private:
  TokenSequence assemble(GraphCtx& g, const Var& patch_tokens) const;
  const ModelConfig* cfg_;
};

}  // namespace reid

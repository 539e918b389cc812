#pragma once

#include <utility>
#include <vector>

#include "reid/config.hpp"
#include "reid/graph_ctx.hpp"
#include "reid/tensor.hpp"

namespace reid {

struct Keypoint {
  int x = 0;  // index into the first spatial dim of the confidence grid
  int y = 0;
  double confidence = 0.0;
};

struct PoseMaps {
  Tensor S;         // [W/32, H/32, K] confidence maps in [0,1]
  Tensor pafs;      // [n_limbs] per-limb association scores in [0,1]
  Tensor affinity;  // [K, K] symmetric, zero diagonal
  std::vector<Keypoint> keypoints;
};

// Per-channel global maximum; ties go to the smallest row-major index.
std::vector<Keypoint> extract_keypoints(const Tensor& S);

// Symmetric K x K matrix with the limb score at both (i,j) and (j,i).
Tensor build_affinity_matrix(const Tensor& pafs, const std::vector<std::pair<int, int>>& topology,
                             int k);

// Keypoint detector: a stack of stride-2 conv blocks down to 1/32 resolution
// feeding two heads that exchange their estimates once. Both heads share the
// backbone features; the affinity head runs twice with shared weights.
class PoseBranch {
 public:
  explicit PoseBranch(const ModelConfig& cfg) : cfg_(&cfg) {}

  void register_params(ParamRegistry& reg) const;

  // Image -> [W/32, H/32, C_pe]. Throws ShapeError unless dims divide by 32.
  Var features(GraphCtx& g, const Tensor& image) const;

  struct Heads {
    Var S;     // [gw, gh, K], sigmoid
    Var pafs;  // [n_limbs], sigmoid
  };
  Heads predict(GraphCtx& g, const Var& f_pe) const;

  // Full value-level pass: maps, peaks and the affinity matrix.
  PoseMaps predict_maps(GraphCtx& g, const Tensor& image) const;

 private:
  Var affinity_head(GraphCtx& g, const Var& f_pe, const Var& s_maps) const;
  const ModelConfig* cfg_;
};

}  // namespace reid

#pragma once

#include <vector>

#include "reid/config.hpp"
#include "reid/graph_ctx.hpp"
#include "reid/pose.hpp"
#include "reid/tensor.hpp"

namespace reid {

struct PersonGraph {
  Var h_node;         // [K, j + d_res + d_trans]
  Var h_edge;         // [K, K] normalized affinity
  Var adjacency_hat;  // D^-1/2 (h_edge + I) D^-1/2
};

// Builds a keypoint graph from the three branches, propagates it with
// graph convolutions, aggregates and classifies.
class GcmModule {
 public:
  explicit GcmModule(const ModelConfig& cfg) : cfg_(&cfg) {}

  void register_params(ParamRegistry& reg) const;

  // Confidence samples at each keypoint and its j-1 neighbors, min-max
  // normalized per column over the K values (all-equal columns map to zero).
  Var node_confidence(GraphCtx& g, const Var& S,
                      const std::vector<Keypoint>& keypoints) const;

  // Min-max over off-diagonal entries; requires a symmetric input.
  static Var edge_affinity(const Var& affinity);

  struct BranchProjections {
    Var h_res;    // [K, d_res]
    Var h_trans;  // [K, d_trans]
  };
  // Samples the full conv map at scaled keypoint locations and picks each
  // keypoint's encoder token (keypoint tokenizer) or its nearest patch token.
  BranchProjections project_branch_features(GraphCtx& g, const Var& full, const Var& encoder_seq,
                                            const std::vector<Keypoint>& keypoints) const;

  static PersonGraph build_graph(const Var& h_s, const Var& h_res, const Var& h_trans,
                                 const Var& h_edge_norm);

  // H^(l+1) = ReLU(A_hat H^(l) W^(l))
  Var gcn_layer(GraphCtx& g, const PersonGraph& graph, const Var& h, int layer) const;
  Var run_gcn(GraphCtx& g, const PersonGraph& graph) const;

  Var aggregate(const Var& node_features) const;

  struct Fused {
    Var f_final;  // [final_dim]
    Var logits;   // [C]
  };
  Fused fuse_and_classify(GraphCtx& g, const Var& h_agg, const Var& final_nodes) const;

 private:
  const ModelConfig* cfg_;
};

}  // namespace reid

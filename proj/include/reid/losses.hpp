#pragma once

#include <vector>

#include "reid/autodiff.hpp"
#include "reid/config.hpp"
#include "reid/tensor.hpp"

namespace reid {

struct PoseTargets {
  Tensor gt_S;     // [gw, gh, K], values in [0,1]
  Tensor gt_pafs;  // [n_limbs], values in [0,1]
};

struct TripletBatch {
  std::vector<Var> anchors, positives, negatives;
  double margin = 0.5;
  void validate() const;
};

Var squared_distance(const Var& a, const Var& b);

// (sum_limbs (L - L_gt)^2 + sum_kp ||S - S_gt||^2) / n_keypoints
Var pose_loss(const Var& pred_S, const Var& pred_pafs, const PoseTargets& targets,
              int n_keypoints);

// Mean over samples of
//   y * max(0, margin - ||F - F_pos||^2) + (1-y) * ||F - F_neg||^2
// (hinge_positives). The hinge_negatives form pulls positive pairs together
// and hinges on the negative distance instead.
Var contrastive_loss(const std::vector<Var>& feats, const std::vector<Var>& pos_feats,
                     const std::vector<Var>& neg_feats, const std::vector<int>& y, double margin,
                     ContrastiveForm form = ContrastiveForm::hinge_positives);

// Mean over triplets of max(0, ||a-p||^2 - ||a-n||^2 + margin).
Var triplet_loss(const TripletBatch& batch);

// Element-wise sum of the three projected branch features.
Var combine_features(const Var& f_pose, const Var& f_trans, const Var& f_res);

// Cross-entropy of softmax(logits) at the label.
Var id_classification_loss(const Var& logits, int label);

}  // namespace reid

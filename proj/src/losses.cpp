#include "reid/losses.hpp"

namespace reid {

void TripletBatch::validate() const {
  if (anchors.size() != positives.size() || anchors.size() != negatives.size())
    throw ContractError("triplet batch lists must have equal length");
  if (anchors.empty()) throw ContractError("triplet batch is empty");
  if (margin <= 0.0) throw ContractError("triplet margin must be positive");
}

Var squared_distance(const Var& a, const Var& b) {
  Var d = sub(a, b);
  return sum_all(mul(d, d));
}

Var pose_loss(const Var& pred_S, const Var& pred_pafs, const PoseTargets& targets,
              int n_keypoints) {
  if (!pred_S.value().same_shape(targets.gt_S))
    throw ShapeError("pose_loss: S shape " + pred_S.value().shape_str() + " vs target " +
                     targets.gt_S.shape_str());
  if (!pred_pafs.value().same_shape(targets.gt_pafs))
    throw ShapeError("pose_loss: paf shape " + pred_pafs.value().shape_str() + " vs target " +
                     targets.gt_pafs.shape_str());
  Var l_term = squared_distance(pred_pafs, Var::constant(targets.gt_pafs));
  Var s_term = squared_distance(pred_S, Var::constant(targets.gt_S));
  return scale(add(l_term, s_term), 1.0 / n_keypoints);
}

Var contrastive_loss(const std::vector<Var>& feats, const std::vector<Var>& pos_feats,
                     const std::vector<Var>& neg_feats, const std::vector<int>& y, double margin,
                     ContrastiveForm form) {
  const size_t m = feats.size();
  if (pos_feats.size() != m || neg_feats.size() != m || y.size() != m)
    throw ContractError("contrastive_loss: list lengths differ");
  if (m == 0) throw ContractError("contrastive_loss: empty batch");
  Var total = Var::scalar(0.0);
  for (size_t i = 0; i < m; ++i) {
    if (y[i] != 0 && y[i] != 1)
      throw ContractError("contrastive_loss: y must be 0 or 1, got " + std::to_string(y[i]));
    Var d_pos = squared_distance(feats[i], pos_feats[i]);
    Var d_neg = squared_distance(feats[i], neg_feats[i]);
    Var term;
    if (form == ContrastiveForm::hinge_positives) {
      term = y[i] == 1 ? relu(sub(Var::scalar(margin), d_pos)) : d_neg;
    } else {
      term = y[i] == 1 ? d_pos : relu(sub(Var::scalar(margin), d_neg));
    }
    total = add(total, term);
  }
  return scale(total, 1.0 / static_cast<double>(m));
}

Var triplet_loss(const TripletBatch& batch) {
  batch.validate();
  Var total = Var::scalar(0.0);
  for (size_t i = 0; i < batch.anchors.size(); ++i) {
    Var d_ap = squared_distance(batch.anchors[i], batch.positives[i]);
    Var d_an = squared_distance(batch.anchors[i], batch.negatives[i]);
    total = add(total, relu(add_scalar(sub(d_ap, d_an), batch.margin)));
  }
  return scale(total, 1.0 / static_cast<double>(batch.anchors.size()));
}

Var combine_features(const Var& f_pose, const Var& f_trans, const Var& f_res) {
  if (f_pose.value().size() != f_trans.value().size() ||
      f_pose.value().size() != f_res.value().size())
    throw ShapeError("combine_features: branch feature widths differ");
  return add(add(f_pose, f_trans), f_res);
}

Var id_classification_loss(const Var& logits, int label) {
  return cross_entropy_logits(logits, label);
}

}  // namespace reid

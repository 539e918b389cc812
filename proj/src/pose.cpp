#include "reid/pose.hpp"

#include <string>

namespace reid {

std::vector<Keypoint> extract_keypoints(const Tensor& S) {
  const int gw = S.dim(0), gh = S.dim(1), k = S.dim(2);
  std::vector<Keypoint> out(static_cast<size_t>(k));
  for (int c = 0; c < k; ++c) {
    Keypoint best{0, 0, S.at(0, 0, c)};
    for (int x = 0; x < gw; ++x)
      for (int y = 0; y < gh; ++y)
        if (S.at(x, y, c) > best.confidence) best = {x, y, S.at(x, y, c)};
    out[static_cast<size_t>(c)] = best;
  }
  return out;
}

Tensor build_affinity_matrix(const Tensor& pafs, const std::vector<std::pair<int, int>>& topology,
                             int k) {
  if (pafs.size() != static_cast<int>(topology.size()))
    throw ShapeError("build_affinity_matrix: " + std::to_string(pafs.size()) + " scores vs " +
                     std::to_string(topology.size()) + " limbs");
  Tensor m({k, k});
  for (size_t l = 0; l < topology.size(); ++l) {
    const auto [i, j] = topology[l];
    m.at(i, j) = pafs[static_cast<int>(l)];
    m.at(j, i) = pafs[static_cast<int>(l)];
  }
  return m;
}

void PoseBranch::register_params(ParamRegistry& reg) const {
  int cin = 3;
  for (size_t s = 0; s < cfg_->pose_channels.size(); ++s) {
    reg.conv("pose.down" + std::to_string(s), 3, cin, cfg_->pose_channels[s]);
    cin = cfg_->pose_channels[s];
  }
  const int cpe = cfg_->pose_channels.back();
  const int hidden = cfg_->pose_head_hidden;
  // S head: [F_pe | limb scores broadcast] -> K maps
  reg.conv("pose.rho.c1", 1, cpe + cfg_->n_limbs(), hidden);
  reg.conv("pose.rho.c2", 1, hidden, cfg_->keypoints);
  // affinity head: [F_pe | S] -> pooled -> n_limbs scores (applied twice)
  reg.conv("pose.phi.c1", 1, cpe + cfg_->keypoints, hidden);
  reg.linear("pose.phi.fc", hidden, cfg_->n_limbs());
}

Var PoseBranch::features(GraphCtx& g, const Tensor& image) const {
  if (image.ndim() != 3 || image.dim(2) != 3)
    throw ShapeError("pose features: expected [W,H,3] image, got " + image.shape_str());
  if (image.dim(0) % 32 || image.dim(1) % 32)
    throw ShapeError("pose features: image dims " + image.shape_str() +
                     " must be a multiple of 32");
  Tensor norm = image;
  for (int i = 0; i < norm.size(); ++i)
    norm[i] = (norm[i] - cfg_->input_mean) / cfg_->input_std;
  Var x = Var::constant(std::move(norm));
  for (size_t s = 0; s < cfg_->pose_channels.size(); ++s) {
    const std::string p = "pose.down" + std::to_string(s);
    x = relu(conv2d(x, g.p(p + ".w"), g.p(p + ".b"), /*stride=*/2, /*pad=*/1));
  }
  return x;
}

Var PoseBranch::affinity_head(GraphCtx& g, const Var& f_pe, const Var& s_maps) const {
  Var x = concat_channels({f_pe, s_maps});
  x = relu(conv2d(x, g.p("pose.phi.c1.w"), g.p("pose.phi.c1.b"), 1, 0));
  Var pooled = spatial_mean(x);
  return sigmoid(linear_vec(pooled, g.p("pose.phi.fc.w"), g.p("pose.phi.fc.b")));
}

PoseBranch::Heads PoseBranch::predict(GraphCtx& g, const Var& f_pe) const {
  if (f_pe.value().dim(2) != cfg_->pose_channels.back())
    throw ShapeError("pose predict: feature channels " + std::to_string(f_pe.value().dim(2)) +
                     " do not match configured " + std::to_string(cfg_->pose_channels.back()));
  const int gw = f_pe.value().dim(0), gh = f_pe.value().dim(1);
  // first limb estimate from features alone, then one cross-feed round
  Var l0 = affinity_head(g, f_pe, Var::constant(Tensor({gw, gh, cfg_->keypoints})));
  Var s_in = concat_channels({f_pe, broadcast_spatial(l0, gw, gh)});
  Var h = relu(conv2d(s_in, g.p("pose.rho.c1.w"), g.p("pose.rho.c1.b"), 1, 0));
  Var s = sigmoid(conv2d(h, g.p("pose.rho.c2.w"), g.p("pose.rho.c2.b"), 1, 0));
  Var pafs = affinity_head(g, f_pe, s);
  return {s, pafs};
}

PoseMaps PoseBranch::predict_maps(GraphCtx& g, const Tensor& image) const {
  Var f = features(g, image);
  Heads h = predict(g, f);
  PoseMaps maps;
  maps.S = h.S.value();
  maps.pafs = h.pafs.value();
  if (!maps.S.all_finite() || !maps.pafs.all_finite())
    throw NumericError("pose forward produced non-finite values");
  for (int i = 0; i < maps.S.size(); ++i)
    if (maps.S[i] < 0.0 || maps.S[i] > 1.0)
      throw NumericError("confidence map left [0,1]");
  maps.keypoints = extract_keypoints(maps.S);
  maps.affinity = build_affinity_matrix(maps.pafs, cfg_->limbs, cfg_->keypoints);
  for (int i = 0; i < cfg_->keypoints; ++i) {
    if (maps.affinity.at(i, i) != 0.0) throw NumericError("affinity diagonal must stay zero");
    for (int j = 0; j < cfg_->keypoints; ++j)
      if (maps.affinity.at(i, j) != maps.affinity.at(j, i))
        throw NumericError("affinity matrix lost symmetry");
  }
  return maps;
}

}  // namespace reid

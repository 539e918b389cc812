#include "reid/gcm.hpp"

#include <cmath>
#include <string>

namespace reid {

namespace {

// deterministic neighbor ring for j > 1 confidence sampling
constexpr int kOffsets[9][2] = {{0, 0}, {1, 0}, {0, 1},  {-1, 0}, {0, -1},
                                {1, 1}, {-1, 1}, {1, -1}, {-1, -1}};

Var concat_vec(const Var& a, const Var& b) {
  Var ra = reshape(a, {1, a.value().size()});
  Var rb = reshape(b, {1, b.value().size()});
  Var cat = concat_cols({ra, rb});
  return reshape(cat, {cat.value().dim(1)});
}

}  // namespace

void GcmModule::register_params(ParamRegistry& reg) const {
  reg.linear("gcm.proj_res", cfg_->stage_channels.back(), cfg_->d_res);
  if (cfg_->variant != Variant::gcm)
    reg.linear("gcm.proj_trans", cfg_->embed_dim, cfg_->d_trans);
  int din = cfg_->node_conf_dims + cfg_->d_res + cfg_->d_trans;
  for (size_t l = 0; l < cfg_->gcn_dims.size(); ++l) {
    const int dout = cfg_->gcn_dims[l];
    reg.weight("gcm.gcn" + std::to_string(l) + ".w", {din, dout}, din, dout);
    din = dout;
  }
  reg.linear("gcm.fuse", 2 * din, cfg_->final_dim);
  reg.linear("gcm.cls", cfg_->final_dim, cfg_->num_classes);
}

Var GcmModule::node_confidence(GraphCtx&, const Var& S,
                               const std::vector<Keypoint>& keypoints) const {
  const int k = static_cast<int>(keypoints.size());
  const int j = cfg_->node_conf_dims;
  if (j > 9) throw ConfigError("node_conf_dims > 9 not supported");
  std::vector<Var> cols;
  cols.reserve(static_cast<size_t>(j));
  for (int t = 0; t < j; ++t) {
    std::vector<Var> entries;
    entries.reserve(static_cast<size_t>(k));
    for (int c = 0; c < k; ++c) {
      const auto& kp = keypoints[static_cast<size_t>(c)];
      Point pt{kp.x + kOffsets[t][0], kp.y + kOffsets[t][1]};
      Var row = gather_points(S, {pt});               // [1, K channels]
      entries.push_back(reshape(slice_cols(row, c, c + 1), {1}));
    }
    Var col = stack_rows(entries);  // [K, 1]
    Var mn = reduce_min_all(col);
    Var mx = reduce_max_all(col);
    const double range = mx.value().item() - mn.value().item();
    if (range < 1e-12) {
      cols.push_back(Var::constant(Tensor({k, 1})));  // max == min maps to zeros
    } else {
      Var num = sub(col, broadcast_rows(mn, k));
      Var den = broadcast_rows(sub(mx, mn), k);
      cols.push_back(div(num, den));
    }
  }
  return cols.size() == 1 ? cols[0] : concat_cols(cols);
}

Var GcmModule::edge_affinity(const Var& affinity) {
  const Tensor& a = affinity.value();
  if (a.ndim() != 2 || a.dim(0) != a.dim(1))
    throw ContractError("edge_affinity: affinity must be square");
  for (int i = 0; i < a.dim(0); ++i)
    for (int j = i + 1; j < a.dim(1); ++j)
      if (a.at(i, j) != a.at(j, i))
        throw ContractError("edge_affinity: affinity matrix is not symmetric");
  return minmax_normalize_offdiag(affinity);
}

GcmModule::BranchProjections GcmModule::project_branch_features(
    GraphCtx& g, const Var& full, const Var& encoder_seq,
    const std::vector<Keypoint>& keypoints) const {
  if (!full.defined()) throw ContractError("project_branch_features: missing conv branch output");
  const int k = static_cast<int>(keypoints.size());
  const int gw = std::max(1, cfg_->grid_w()), gh = std::max(1, cfg_->grid_h());
  const int fx = full.value().dim(0) / gw, fy = full.value().dim(1) / gh;
  std::vector<Point> pts(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    const auto& kp = keypoints[static_cast<size_t>(i)];
    pts[static_cast<size_t>(i)] = {kp.x * fx + fx / 2, kp.y * fy + fy / 2};
  }
  BranchProjections out;
  Var sampled = gather_points(full, pts);
  out.h_res = linear(sampled, g.p("gcm.proj_res.w"), g.p("gcm.proj_res.b"));

  if (cfg_->variant == Variant::gcm) {
    out.h_trans = Var::constant(Tensor({k, cfg_->d_trans}));
    return out;
  }
  if (!encoder_seq.defined())
    throw ContractError("project_branch_features: missing transformer branch output");
  Var token_rows;
  if (cfg_->tokenizer == Tokenizer::keypoint) {
    token_rows = slice_rows(encoder_seq, 0, k);
  } else {
    // nearest patch token for each keypoint
    const int n_tok = encoder_seq.value().dim(0) - 1;
    int td0 = 0, td1 = 0;
    if (cfg_->tokenizer == Tokenizer::rawp) {
      td0 = cfg_->width / cfg_->patch;
      td1 = cfg_->height / cfg_->patch;
    } else {
      td0 = full.value().dim(0);
      td1 = full.value().dim(1);
    }
    std::vector<Var> rows;
    rows.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
      const auto& kp = keypoints[static_cast<size_t>(i)];
      const int px = kp.x * 32 + 16, py = kp.y * 32 + 16;  // pixel-space center
      int tx = std::min(px * td0 / cfg_->width, td0 - 1);
      int ty = std::min(py * td1 / cfg_->height, td1 - 1);
      int idx = std::min(tx * td1 + ty, n_tok - 1);
      rows.push_back(select_row(encoder_seq, idx));
    }
    token_rows = stack_rows(rows);
  }
  out.h_trans = linear(token_rows, g.p("gcm.proj_trans.w"), g.p("gcm.proj_trans.b"));
  return out;
}

PersonGraph GcmModule::build_graph(const Var& h_s, const Var& h_res, const Var& h_trans,
                                   const Var& h_edge_norm) {
  const int k = h_s.value().dim(0);
  if (h_res.value().dim(0) != k || h_trans.value().dim(0) != k ||
      h_edge_norm.value().dim(0) != k || h_edge_norm.value().dim(1) != k)
    throw ShapeError("build_graph: row count mismatch across node inputs");
  PersonGraph graph;
  graph.h_node = concat_cols({h_s, h_res, h_trans});
  graph.h_edge = h_edge_norm;
  Tensor eye({k, k});
  for (int i = 0; i < k; ++i) eye.at(i, i) = 1.0;
  Var with_loops = add(h_edge_norm, Var::constant(std::move(eye)));
  Var deg = reshape(matmul(with_loops, Var::constant(Tensor::full({k, 1}, 1.0))), {k});
  Var inv_sqrt = pow_elem(deg, -0.5);
  Var col_scale = broadcast_rows(inv_sqrt, k);        // entry (i,j) = s_j
  Var row_scale = transpose2d(col_scale);             // entry (i,j) = s_i
  graph.adjacency_hat = mul(mul(with_loops, row_scale), col_scale);
  return graph;
}

Var GcmModule::gcn_layer(GraphCtx& g, const PersonGraph& graph, const Var& h, int layer) const {
  Var w = g.p("gcm.gcn" + std::to_string(layer) + ".w");
  if (w.value().dim(0) != h.value().dim(1))
    throw ShapeError("gcn_layer " + std::to_string(layer) + ": weight rows " +
                     std::to_string(w.value().dim(0)) + " vs node width " +
                     std::to_string(h.value().dim(1)));
  return relu(matmul(matmul(graph.adjacency_hat, h), w));
}

Var GcmModule::run_gcn(GraphCtx& g, const PersonGraph& graph) const {
  Var h = graph.h_node;
  for (size_t l = 0; l < cfg_->gcn_dims.size(); ++l)
    h = gcn_layer(g, graph, h, static_cast<int>(l));
  return h;
}

Var GcmModule::aggregate(const Var& node_features) const {
  return cfg_->aggregation == Aggregation::mean ? mean_rows(node_features)
                                                : max_rows(node_features);
}

GcmModule::Fused GcmModule::fuse_and_classify(GraphCtx& g, const Var& h_agg,
                                              const Var& final_nodes) const {
  Var fused_in = concat_vec(h_agg, mean_rows(final_nodes));
  Fused out;
  out.f_final = linear_vec(fused_in, g.p("gcm.fuse.w"), g.p("gcm.fuse.b"));
  out.logits = linear_vec(out.f_final, g.p("gcm.cls.w"), g.p("gcm.cls.b"));
  return out;
}

}  // namespace reid

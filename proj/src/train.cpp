#include "reid/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>

#include "reid/checkpoint.hpp"
#include "reid/losses.hpp"

namespace reid {

void TrainLog::write_csv(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write train log: " + path);
  f << "stage,epoch,loss_name,value\n";
  f.precision(17);
  for (const auto& r : rows) f << r.stage << "," << r.epoch << "," << r.loss_name << "," << r.value << "\n";
}

namespace {

std::map<int, std::vector<int>> by_identity(const DatasetSplit& split) {
  std::map<int, std::vector<int>> ids;
  for (size_t i = 0; i < split.items.size(); ++i)
    ids[split.items[i].identity].push_back(static_cast<int>(i));
  return ids;
}

struct SamplerIndex {
  std::map<int, std::vector<int>> ids;
  std::vector<int> anchor_pool;  // items whose identity has >= 2 images
  std::vector<int> all;
};

SamplerIndex build_sampler_index(const DatasetSplit& split) {
  SamplerIndex s;
  s.ids = by_identity(split);
  if (s.ids.size() < 2)
    throw ContractError("sampling requires at least 2 identities, got " +
                        std::to_string(s.ids.size()));
  for (const auto& [id, idxs] : s.ids)
    if (idxs.size() >= 2)
      for (int i : idxs) s.anchor_pool.push_back(i);
  if (s.anchor_pool.empty())
    throw ContractError("sampling requires an identity with >= 2 images (no positive exists)");
  s.all.resize(split.items.size());
  std::iota(s.all.begin(), s.all.end(), 0);
  return s;
}

int pick_positive(const SamplerIndex& s, const DatasetSplit& split, int anchor, Rng& rng) {
  const auto& pool = s.ids.at(split.items[static_cast<size_t>(anchor)].identity);
  int pick = anchor;
  while (pick == anchor) pick = pool[static_cast<size_t>(rng.uniform_int(static_cast<int>(pool.size())))];
  return pick;
}

int pick_negative(const SamplerIndex& s, const DatasetSplit& split, int anchor, Rng& rng) {
  const int aid = split.items[static_cast<size_t>(anchor)].identity;
  while (true) {
    const int pick = s.all[static_cast<size_t>(rng.uniform_int(static_cast<int>(s.all.size())))];
    if (split.items[static_cast<size_t>(pick)].identity != aid) return pick;
  }
}

}  // namespace

std::vector<PairSample> sample_pairs(const DatasetSplit& split, int count, Rng& rng) {
  SamplerIndex s = build_sampler_index(split);
  std::vector<PairSample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    PairSample p;
    p.anchor = s.anchor_pool[static_cast<size_t>(rng.uniform_int(static_cast<int>(s.anchor_pool.size())))];
    p.pos = pick_positive(s, split, p.anchor, rng);
    p.neg = pick_negative(s, split, p.anchor, rng);
    p.y = rng.uniform() < 0.5 ? 1 : 0;
    out.push_back(p);
  }
  return out;
}

std::vector<TripletSample> sample_triplets(const DatasetSplit& split, int count, Rng& rng) {
  SamplerIndex s = build_sampler_index(split);
  std::vector<TripletSample> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    TripletSample t;
    t.a = s.anchor_pool[static_cast<size_t>(rng.uniform_int(static_cast<int>(s.anchor_pool.size())))];
    t.p = pick_positive(s, split, t.a, rng);
    t.n = pick_negative(s, split, t.a, rng);
    out.push_back(t);
  }
  return out;
}

namespace {

using Trainable = std::function<bool(const std::string&)>;

Trainable prefix_trainable(std::vector<std::string> prefixes) {
  return [prefixes = std::move(prefixes)](const std::string& path) {
    for (const auto& p : prefixes)
      if (path.rfind(p, 0) == 0) return true;
    return false;
  };
}

void sgd_step(ParamStore& params, const std::map<std::string, Tensor>& grads, double lr,
              int batch_n, double max_grad_norm) {
  double scale = 1.0 / batch_n;
  if (max_grad_norm > 0.0) {
    double sq = 0.0;
    for (const auto& [path, g] : grads)
      for (int i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    const double norm = std::sqrt(sq) / batch_n;
    if (norm > max_grad_norm) scale *= max_grad_norm / norm;
  }
  for (const auto& [path, g] : grads) {
    Tensor& p = params.at(path);
    for (int i = 0; i < p.size(); ++i) p[i] -= lr * g[i] * scale;
  }
}

void accumulate(std::map<std::string, Tensor>& acc, const std::map<std::string, Tensor>& grads) {
  for (const auto& [path, g] : grads) {
    auto it = acc.find(path);
    if (it == acc.end())
      acc.emplace(path, g);
    else
      for (int i = 0; i < g.size(); ++i) it->second[i] += g[i];
  }
}

void check_finite(double loss, const std::string& stage, int epoch) {
  if (!std::isfinite(loss))
    throw NumericError("training diverged (non-finite loss) at stage " + stage + " epoch " +
                       std::to_string(epoch));
}

std::vector<int> shuffled_indices(size_t n, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (size_t i = n; i > 1; --i) {
    const size_t j = static_cast<size_t>(rng.uniform_int(static_cast<int>(i)));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace

TrainResult train_stagewise(const Model& model, const TrainConfig& tcfg, const Dataset& data,
                            const std::string& checkpoint_dir) {
  tcfg.validate();
  if (data.train.items.empty()) throw DataError("training split is empty");
  const ModelConfig& cfg = model.config();
  TrainResult result;
  result.params = model.init(tcfg.seed);
  TrainLog& log = result.log;
  const auto& items = data.train.items;

  auto maybe_checkpoint = [&](const std::string& stage, int epoch) {
    if (checkpoint_dir.empty() || tcfg.checkpoint_every <= 0) return;
    if ((epoch + 1) % tcfg.checkpoint_every) return;
    std::filesystem::create_directories(checkpoint_dir);
    save_checkpoint(checkpoint_dir + "/ckpt_" + stage + "_" + std::to_string(epoch + 1) + ".bin",
                    result.params);
  };

  // ---- stage 1: pose head, L2 map/affinity loss ----
  const bool has_pose = cfg.variant != Variant::baseline;
  if (has_pose && tcfg.pose_epochs > 0) {
    for (const auto& it : items)
      if (it.targets.gt_S.empty())
        throw DataError("pose training requires pose targets in the train split");
    Rng rng(mix_seed(tcfg.seed, "stage_pose"));
    auto trainable = prefix_trainable({"pose."});
    for (int epoch = 0; epoch < tcfg.pose_epochs; ++epoch) {
      auto order = shuffled_indices(items.size(), rng);
      double epoch_loss = 0.0;
      for (size_t b = 0; b < order.size(); b += static_cast<size_t>(tcfg.batch_size)) {
        const size_t end = std::min(order.size(), b + static_cast<size_t>(tcfg.batch_size));
        std::map<std::string, Tensor> acc;
        for (size_t i = b; i < end; ++i) {
          const auto& item = items[static_cast<size_t>(order[i])];
          GraphCtx g(result.params, trainable);
          Var f = model.pose().features(g, item.image);
          PoseBranch::Heads heads = model.pose().predict(g, f);
          Var loss = pose_loss(heads.S, heads.pafs, item.targets, cfg.keypoints);
          check_finite(loss.value().item(), "pose", epoch);
          epoch_loss += loss.value().item();
          loss.backward();
          accumulate(acc, g.grads());
        }
        sgd_step(result.params, acc, tcfg.pose_lr, static_cast<int>(end - b), tcfg.max_grad_norm);
      }
      log.add("pose", epoch, "pose_loss", epoch_loss / items.size());
      maybe_checkpoint("pose", epoch);
    }
  }

  // ---- stage 2: conv branch, contrastive loss on the global embedding ----
  if (tcfg.conv_epochs > 0) {
    Rng rng(mix_seed(tcfg.seed, "stage_conv"));
    auto trainable = prefix_trainable({"conv."});
    for (int epoch = 0; epoch < tcfg.conv_epochs; ++epoch) {
      auto samples = sample_pairs(data.train, static_cast<int>(items.size()), rng);
      double epoch_loss = 0.0;
      for (size_t b = 0; b < samples.size(); b += static_cast<size_t>(tcfg.batch_size)) {
        const size_t end = std::min(samples.size(), b + static_cast<size_t>(tcfg.batch_size));
        std::map<std::string, Tensor> acc;
        GraphCtx g(result.params, trainable);
        std::vector<Var> feats, pos, neg;
        std::vector<int> ys;
        for (size_t i = b; i < end; ++i) {
          const auto& s = samples[i];
          auto embed_of = [&](int idx) {
            auto f = model.conv().features(g, items[static_cast<size_t>(idx)].image);
            return model.conv().global_embed(g, f.full);
          };
          feats.push_back(embed_of(s.anchor));
          pos.push_back(embed_of(s.pos));
          neg.push_back(embed_of(s.neg));
          ys.push_back(s.y);
        }
        Var loss = contrastive_loss(feats, pos, neg, ys, cfg.contrastive_margin,
                                    cfg.contrastive_form);
        check_finite(loss.value().item(), "conv", epoch);
        epoch_loss += loss.value().item() * static_cast<double>(end - b);
        loss.backward();
        accumulate(acc, g.grads());
        sgd_step(result.params, acc, tcfg.conv_lr, static_cast<int>(end - b), tcfg.max_grad_norm);
      }
      log.add("conv", epoch, "contrastive_loss", epoch_loss / samples.size());
      maybe_checkpoint("conv", epoch);
    }
  }

  // ---- stage 3: transformer branch, triplet loss on the cls embedding ----
  // pose/conv are frozen here, so their per-image outputs are computed once
  const bool has_trans = cfg.variant == Variant::tran_gcn;
  std::vector<Model::BranchCache> caches;
  auto ensure_caches = [&]() {
    if (!caches.empty()) return;
    caches.reserve(items.size());
    for (const auto& item : items) caches.push_back(model.branch_cache(result.params, item.image));
  };
  if (has_trans && tcfg.trans_epochs > 0) {
    Rng rng(mix_seed(tcfg.seed, "stage_trans"));
    auto trainable = prefix_trainable({"trans."});
    ensure_caches();
    for (int epoch = 0; epoch < tcfg.trans_epochs; ++epoch) {
      auto samples = sample_triplets(data.train, static_cast<int>(items.size()), rng);
      double epoch_loss = 0.0;
      for (size_t b = 0; b < samples.size(); b += static_cast<size_t>(tcfg.batch_size)) {
        const size_t end = std::min(samples.size(), b + static_cast<size_t>(tcfg.batch_size));
        GraphCtx g(result.params, trainable);
        TripletBatch batch;
        batch.margin = cfg.triplet_margin;
        auto cls_of = [&](int idx) {
          return model.forward_cached(g, caches[static_cast<size_t>(idx)], /*encoder_live=*/true)
              .cls_embed;
        };
        for (size_t i = b; i < end; ++i) {
          batch.anchors.push_back(cls_of(samples[i].a));
          batch.positives.push_back(cls_of(samples[i].p));
          batch.negatives.push_back(cls_of(samples[i].n));
        }
        Var loss = triplet_loss(batch);
        check_finite(loss.value().item(), "trans", epoch);
        epoch_loss += loss.value().item() * static_cast<double>(end - b);
        loss.backward();
        std::map<std::string, Tensor> acc;
        accumulate(acc, g.grads());
        sgd_step(result.params, acc, tcfg.trans_lr, static_cast<int>(end - b), tcfg.max_grad_norm);
      }
      log.add("trans", epoch, "triplet_loss", epoch_loss / samples.size());
      maybe_checkpoint("trans", epoch);
    }
  }

  // ---- stage 4: graph module + classifier on cross-entropy ----
  if (tcfg.joint_epochs > 0) {
    Rng rng(mix_seed(tcfg.seed, "stage_joint"));
    std::vector<std::string> prefixes;
    if (cfg.variant == Variant::baseline)
      prefixes = {"cls."};
    else
      prefixes = {"gcm.", "comb."};
    if (!tcfg.freeze_branches) {
      prefixes.push_back("pose.");
      prefixes.push_back("conv.");
      prefixes.push_back("trans.");
    }
    auto trainable = prefix_trainable(prefixes);
    const bool cached = tcfg.freeze_branches;
    if (cached) {
      ensure_caches();
      for (auto& cache : caches) model.add_encoder_cache(result.params, cache);
    }
    auto forward_of = [&](int idx) {
      const size_t i = static_cast<size_t>(idx);
      GraphCtx g(result.params, trainable);
      Model::Forward f = cached ? model.forward_cached(g, caches[i], /*encoder_live=*/false)
                                : model.forward(g, items[i].image);
      return std::pair(std::move(g), std::move(f));
    };
    for (int epoch = 0; epoch < tcfg.joint_epochs; ++epoch) {
      auto order = shuffled_indices(items.size(), rng);
      double epoch_loss = 0.0;
      double aux = 0.0;
      for (size_t b = 0; b < order.size(); b += static_cast<size_t>(tcfg.batch_size)) {
        const size_t end = std::min(order.size(), b + static_cast<size_t>(tcfg.batch_size));
        std::map<std::string, Tensor> acc;
        for (size_t i = b; i < end; ++i) {
          const auto& item = items[static_cast<size_t>(order[i])];
          auto [g, f] = forward_of(order[i]);
          Var loss = id_classification_loss(f.logits, item.identity);
          check_finite(loss.value().item(), "joint", epoch);
          epoch_loss += loss.value().item();
          loss.backward();
          accumulate(acc, g.grads());
        }
        if (tcfg.joint_aux_losses) {
          // direct metric shaping of the retrieval embedding
          auto trips = sample_triplets(data.train, std::max(1, tcfg.batch_size / 2), rng);
          GraphCtx g(result.params, trainable);
          TripletBatch batch;
          batch.margin = cfg.triplet_margin;
          auto embed_of = [&](int idx) {
            const size_t i = static_cast<size_t>(idx);
            return cached ? model.forward_cached(g, caches[i], false).embedding
                          : model.forward(g, items[i].image).embedding;
          };
          for (const auto& trip : trips) {
            batch.anchors.push_back(embed_of(trip.a));
            batch.positives.push_back(embed_of(trip.p));
            batch.negatives.push_back(embed_of(trip.n));
          }
          // weight to batch scale so the metric term is not drowned out by
          // the per-sample classification terms
          Var loss = scale(triplet_loss(batch), static_cast<double>(end - b) / 2.0);
          check_finite(loss.value().item(), "joint", epoch);
          aux += loss.value().item();
          loss.backward();
          accumulate(acc, g.grads());
        }
        sgd_step(result.params, acc, tcfg.joint_lr, static_cast<int>(end - b), tcfg.max_grad_norm);
      }
      log.add("joint", epoch, "id_loss", epoch_loss / items.size());
      if (tcfg.joint_aux_losses) log.add("joint", epoch, "aux_triplet", aux);
      maybe_checkpoint("joint", epoch);
    }
  }

  return result;
}

RetrievalRun build_retrieval_run(const Model& model, const ParamStore& params,
                                 const Dataset& data) {
  RetrievalRun run;
  run.distance = model.config().distance;
  const int q = static_cast<int>(data.query.items.size());
  const int g = static_cast<int>(data.gallery.items.size());
  if (q == 0 || g == 0) throw DataError("query or gallery split is empty");
  Tensor first = model.embed(params, data.query.items[0].image);
  const int d = first.size();
  run.query_embeddings = Tensor({q, d});
  run.gallery_embeddings = Tensor({g, d});
  for (int i = 0; i < q; ++i) {
    Tensor e = i == 0 ? first : model.embed(params, data.query.items[static_cast<size_t>(i)].image);
    for (int j = 0; j < d; ++j) run.query_embeddings.at(i, j) = e[j];
    run.query_ids.push_back(data.query.items[static_cast<size_t>(i)].identity);
    run.query_cams.push_back(data.query.items[static_cast<size_t>(i)].camera);
  }
  for (int i = 0; i < g; ++i) {
    Tensor e = model.embed(params, data.gallery.items[static_cast<size_t>(i)].image);
    for (int j = 0; j < d; ++j) run.gallery_embeddings.at(i, j) = e[j];
    run.gallery_ids.push_back(data.gallery.items[static_cast<size_t>(i)].identity);
    run.gallery_cams.push_back(data.gallery.items[static_cast<size_t>(i)].camera);
  }
  return run;
}

}  // namespace reid

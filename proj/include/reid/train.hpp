#pragma once

#include <string>
#include <vector>

#include "reid/dataset.hpp"
#include "reid/metrics.hpp"
#include "reid/model.hpp"

namespace reid {

struct TrainLogRow {
  std::string stage;
  int epoch = 0;
  std::string loss_name;
  double value = 0.0;
};

struct TrainLog {
  std::vector<TrainLogRow> rows;
  void add(const std::string& stage, int epoch, const std::string& name, double value) {
    rows.push_back({stage, epoch, name, value});
  }
  void write_csv(const std::string& path) const;
};

struct PairSample {
  int anchor = 0, pos = 0, neg = 0;
  int y = 0;  // 1: score the positive pair, 0: score the negative pair
};
struct TripletSample {
  int a = 0, p = 0, n = 0;
};

// Uniform sampling; anchors are drawn from identities with at least two
// images. Throws ContractError when no positive pair can exist or the split
// has fewer than two identities.
std::vector<PairSample> sample_pairs(const DatasetSplit& split, int count, Rng& rng);
std::vector<TripletSample> sample_triplets(const DatasetSplit& split, int count, Rng& rng);

struct TrainResult {
  ParamStore params;
  TrainLog log;
};

// Stagewise schedule: pose head on its L2 loss, conv branch on the
// contrastive loss, transformer on the triplet loss, then the graph module
// and classifier on cross-entropy with earlier branches frozen (default).
// Loss turning NaN aborts with stage/epoch context.
TrainResult train_stagewise(const Model& model, const TrainConfig& tcfg, const Dataset& data,
                            const std::string& checkpoint_dir = "");

// Embeds the query/gallery splits for evaluation.
RetrievalRun build_retrieval_run(const Model& model, const ParamStore& params,
                                 const Dataset& data);

}  // namespace reid

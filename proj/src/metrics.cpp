#include "reid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace reid {

void RetrievalRun::validate() const {
  const int q = query_embeddings.dim(0), g = gallery_embeddings.dim(0);
  if (static_cast<int>(query_ids.size()) != q || static_cast<int>(query_cams.size()) != q)
    throw ContractError("retrieval run: query label count mismatch");
  if (static_cast<int>(gallery_ids.size()) != g || static_cast<int>(gallery_cams.size()) != g)
    throw ContractError("retrieval run: gallery label count mismatch");
  if (query_embeddings.dim(1) != gallery_embeddings.dim(1))
    throw ContractError("retrieval run: embedding widths differ");
}

std::vector<int> rank_gallery(const double* query, int dim, const Tensor& gallery,
                              Distance distance) {
  const int g = gallery.dim(0);
  if (g == 0) throw ContractError("rank_gallery: empty gallery");
  if (gallery.dim(1) != dim) throw ContractError("rank_gallery: dimension mismatch");
  std::vector<double> dist(static_cast<size_t>(g));
  for (int i = 0; i < g; ++i) {
    const double* gv = gallery.data() + static_cast<size_t>(i) * dim;
    if (distance == Distance::euclidean) {
      double s = 0.0;
      for (int j = 0; j < dim; ++j) {
        const double d = query[j] - gv[j];
        s += d * d;
      }
      dist[static_cast<size_t>(i)] = s;
    } else {
      double dot = 0.0, nq = 0.0, ng = 0.0;
      for (int j = 0; j < dim; ++j) {
        dot += query[j] * gv[j];
        nq += query[j] * query[j];
        ng += gv[j] * gv[j];
      }
      const double denom = std::sqrt(nq) * std::sqrt(ng);
      dist[static_cast<size_t>(i)] = denom > 0.0 ? 1.0 - dot / denom : 1.0;
    }
  }
  std::vector<int> order(static_cast<size_t>(g));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return dist[static_cast<size_t>(a)] < dist[static_cast<size_t>(b)];
  });
  return order;
}

namespace {

struct PerQuery {
  std::vector<int> ranking;  // gallery indices after camera filtering
  int relevant = 0;
};

// Ranking for query qi with junk (same id, same camera) entries removed.
PerQuery filtered_ranking(const RetrievalRun& run, int qi) {
  const int dim = run.query_embeddings.dim(1);
  const double* q = run.query_embeddings.data() + static_cast<size_t>(qi) * dim;
  auto order = rank_gallery(q, dim, run.gallery_embeddings, run.distance);
  PerQuery out;
  out.ranking.reserve(order.size());
  for (int gi : order) {
    const bool same_id = run.gallery_ids[static_cast<size_t>(gi)] ==
                         run.query_ids[static_cast<size_t>(qi)];
    if (run.cross_camera_filter && same_id &&
        run.gallery_cams[static_cast<size_t>(gi)] == run.query_cams[static_cast<size_t>(qi)])
      continue;
    out.ranking.push_back(gi);
    if (same_id) ++out.relevant;
  }
  return out;
}

}  // namespace

double cmc_at_k(const RetrievalRun& run, int k) {
  run.validate();
  if (k < 1) throw ContractError("cmc_at_k: k must be >= 1");
  const int q = run.query_embeddings.dim(0);
  int scored = 0, hits = 0;
  for (int qi = 0; qi < q; ++qi) {
    PerQuery pq = filtered_ranking(run, qi);
    if (pq.relevant == 0) continue;  // skipped query
    ++scored;
    const int top = std::min<int>(k, static_cast<int>(pq.ranking.size()));
    for (int r = 0; r < top; ++r) {
      if (run.gallery_ids[static_cast<size_t>(pq.ranking[static_cast<size_t>(r)])] ==
          run.query_ids[static_cast<size_t>(qi)]) {
        ++hits;
        break;
      }
    }
  }
  return scored == 0 ? 0.0 : static_cast<double>(hits) / scored;
}

double mean_average_precision(const RetrievalRun& run) {
  run.validate();
  const int q = run.query_embeddings.dim(0);
  int scored = 0;
  double total_ap = 0.0;
  for (int qi = 0; qi < q; ++qi) {
    PerQuery pq = filtered_ranking(run, qi);
    if (pq.relevant == 0) continue;
    ++scored;
    double ap = 0.0;
    int found = 0;
    for (size_t r = 0; r < pq.ranking.size(); ++r) {
      if (run.gallery_ids[static_cast<size_t>(pq.ranking[r])] ==
          run.query_ids[static_cast<size_t>(qi)]) {
        ++found;
        ap += static_cast<double>(found) / static_cast<double>(r + 1);
      }
    }
    total_ap += ap / pq.relevant;
  }
  return scored == 0 ? 0.0 : total_ap / scored;
}

MetricsReport evaluate_retrieval(const RetrievalRun& run, const std::vector<int>& ks) {
  run.validate();
  MetricsReport report;
  for (int k : ks) report.rank_k[k] = cmc_at_k(run, k);
  report.mean_ap = mean_average_precision(run);
  const int q = run.query_embeddings.dim(0);
  for (int qi = 0; qi < q; ++qi)
    if (filtered_ranking(run, qi).relevant == 0) ++report.skipped_queries;
  return report;
}

void write_metrics_report(const std::string& path, const MetricsReport& report) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write metrics report: " + path);
  f.precision(17);
  for (const auto& [k, v] : report.rank_k) f << "rank" << k << "," << v << "\n";
  f << "mAP," << report.mean_ap << "\n";
  f << "skipped," << report.skipped_queries << "\n";
}

MetricsReport read_metrics_report(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read metrics report: " + path);
  MetricsReport report;
  std::string line;
  while (std::getline(f, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    const std::string key = line.substr(0, comma);
    const double val = std::stod(line.substr(comma + 1));
    if (key.rfind("rank", 0) == 0)
      report.rank_k[std::stoi(key.substr(4))] = val;
    else if (key == "mAP")
      report.mean_ap = val;
    else if (key == "skipped")
      report.skipped_queries = static_cast<int>(val);
  }
  return report;
}

}  // namespace reid

#pragma once

#include <map>
#include <string>
#include <vector>

#include "reid/config.hpp"
#include "reid/tensor.hpp"

namespace reid {

struct RetrievalRun {
  Tensor query_embeddings;    // [Q, D]
  Tensor gallery_embeddings;  // [G, D]
  std::vector<int> query_ids, gallery_ids;
  std::vector<int> query_cams, gallery_cams;
  Distance distance = Distance::euclidean;
  // Exclude same-identity same-camera gallery items from a query's ranking
  // (standard multi-camera protocol); off for camera-less synthetic data.
  bool cross_camera_filter = true;
  void validate() const;
};

struct MetricsReport {
  std::map<int, double> rank_k;  // k -> hit rate
  double mean_ap = 0.0;
  int skipped_queries = 0;
};

// Gallery indices by ascending distance; ties go to the smaller index.
std::vector<int> rank_gallery(const double* query, int dim, const Tensor& gallery,
                              Distance distance);

double cmc_at_k(const RetrievalRun& run, int k);
double mean_average_precision(const RetrievalRun& run);
MetricsReport evaluate_retrieval(const RetrievalRun& run, const std::vector<int>& ks = {1, 5, 10});

// metric,value per line: rank1,rank5,rank10,mAP,skipped
void write_metrics_report(const std::string& path, const MetricsReport& report);
MetricsReport read_metrics_report(const std::string& path);

}  // namespace reid

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "reid/metrics.hpp"
#include "test_support.hpp"

using namespace reid;
using reid::testing::random_tensor;

#include "metric_oracle.hpp"

using reid::testing::oracle_eval;
using reid::testing::OracleResult;

namespace {

RetrievalRun random_run(uint64_t seed, int q_max = 20, int g_max = 50) {
  return reid::testing::random_retrieval_run(seed, q_max, g_max);
}

}  // namespace

TEST(RankGallery, SelfMatchAndTieBreak) {
  Tensor gallery({3, 2}, {5.0, 5.0, 1.0, 2.0, 5.0, 5.0});
  Tensor query({2}, {1.0, 2.0});
  auto order = rank_gallery(query.data(), 2, gallery, Distance::euclidean);
  EXPECT_EQ(order[0], 1);  // exact match first
  EXPECT_EQ(order[1], 0);  // equidistant items: smaller index precedes
  EXPECT_EQ(order[2], 2);

  EXPECT_THROW(rank_gallery(query.data(), 2, Tensor({1, 3}), Distance::euclidean), ContractError);
}

TEST(RankGallery, CosineMatchesEuclideanOnUnitSphere) {
  Rng rng(3);
  const int g = 20, d = 4;
  Tensor gallery({g, d});
  for (int i = 0; i < g; ++i) {
    double norm = 0.0;
    std::vector<double> v(static_cast<size_t>(d));
    for (auto& x : v) {
      x = rng.uniform(-1.0, 1.0);
      norm += x * x;
    }
    for (int j = 0; j < d; ++j) gallery.at(i, j) = v[static_cast<size_t>(j)] / std::sqrt(norm);
  }
  Tensor q({d}, {1.0, 0.0, 0.0, 0.0});
  auto e = rank_gallery(q.data(), d, gallery, Distance::euclidean);
  auto c = rank_gallery(q.data(), d, gallery, Distance::cosine);
  EXPECT_EQ(e, c);
}

TEST(Metrics, WorkedApExample) {
  // relevant at ranks 1 and 3 of a 4-item gallery -> AP = (1 + 2/3)/2
  RetrievalRun run;
  run.cross_camera_filter = false;
  run.query_embeddings = Tensor({1, 1}, {0.0});
  run.gallery_embeddings = Tensor({4, 1}, {1.0, 2.0, 3.0, 4.0});
  run.query_ids = {7};
  run.query_cams = {1};
  run.gallery_ids = {7, 0, 7, 0};
  run.gallery_cams = {2, 2, 2, 2};
  EXPECT_NEAR(mean_average_precision(run), (1.0 + 2.0 / 3.0) / 2.0, 1e-12);
  EXPECT_NEAR(mean_average_precision(run), 0.83333333333333337, 1e-12);

  // first relevant at rank 2: rank-1 misses, rank-5 hits
  RetrievalRun run2 = run;
  run2.gallery_ids = {0, 7, 0, 0};
  EXPECT_EQ(cmc_at_k(run2, 1), 0.0);
  EXPECT_EQ(cmc_at_k(run2, 5), 1.0);

  // all gallery items relevant -> AP = 1
  RetrievalRun run3 = run;
  run3.gallery_ids = {7, 7, 7, 7};
  EXPECT_DOUBLE_EQ(mean_average_precision(run3), 1.0);
  EXPECT_DOUBLE_EQ(cmc_at_k(run3, 1), 1.0);
}

TEST(Metrics, OracleEquivalenceOn200RandomInstances) {
  const std::vector<int> ks = {1, 5, 10};
  for (uint64_t seed = 1; seed <= 200; ++seed) {
    RetrievalRun run = random_run(seed);
    OracleResult expect = oracle_eval(run, ks);
    MetricsReport got = evaluate_retrieval(run, ks);
    for (int k : ks) EXPECT_NEAR(got.rank_k.at(k), expect.cmc.at(k), 1e-12) << "seed " << seed;
    EXPECT_NEAR(got.mean_ap, expect.mean_ap, 1e-12) << "seed " << seed;
    EXPECT_EQ(got.skipped_queries, expect.skipped) << "seed " << seed;
  }
}

TEST(Metrics, RankKMonotoneAndBounded) {
  for (uint64_t seed = 300; seed < 320; ++seed) {
    RetrievalRun run = random_run(seed);
    const double r1 = cmc_at_k(run, 1), r5 = cmc_at_k(run, 5), r10 = cmc_at_k(run, 10);
    EXPECT_LE(r1, r5);
    EXPECT_LE(r5, r10);
    EXPECT_GE(r1, 0.0);
    EXPECT_LE(r10, 1.0);
    const double map = mean_average_precision(run);
    EXPECT_GE(map, 0.0);
    EXPECT_LE(map, 1.0);
    // k beyond the gallery size clamps
    EXPECT_DOUBLE_EQ(cmc_at_k(run, 100000), cmc_at_k(run, run.gallery_embeddings.dim(0)));
  }
}

TEST(Metrics, GalleryPermutationInvariance) {
  RetrievalRun run = random_run(42);
  // build a permuted copy
  const int g = run.gallery_embeddings.dim(0);
  const int d = run.gallery_embeddings.dim(1);
  std::vector<int> perm(static_cast<size_t>(g));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(43);
  for (size_t i = perm.size(); i > 1; --i)
    std::swap(perm[i - 1], perm[static_cast<size_t>(rng.uniform_int(static_cast<int>(i)))]);
  RetrievalRun shuffled = run;
  for (int i = 0; i < g; ++i) {
    for (int j = 0; j < d; ++j)
      shuffled.gallery_embeddings.at(i, j) = run.gallery_embeddings.at(perm[static_cast<size_t>(i)], j);
    shuffled.gallery_ids[static_cast<size_t>(i)] = run.gallery_ids[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    shuffled.gallery_cams[static_cast<size_t>(i)] = run.gallery_cams[static_cast<size_t>(perm[static_cast<size_t>(i)])];
  }
  for (int k : {1, 5, 10})
    EXPECT_NEAR(cmc_at_k(run, k), cmc_at_k(shuffled, k), 1e-12);
  EXPECT_NEAR(mean_average_precision(run), mean_average_precision(shuffled), 1e-12);
}

TEST(Metrics, ScaleInvarianceOfEuclideanRanking) {
  RetrievalRun run = random_run(77);
  RetrievalRun scaled = run;
  for (int i = 0; i < scaled.query_embeddings.size(); ++i) scaled.query_embeddings[i] *= 3.7;
  for (int i = 0; i < scaled.gallery_embeddings.size(); ++i) scaled.gallery_embeddings[i] *= 3.7;
  for (int k : {1, 5, 10}) EXPECT_DOUBLE_EQ(cmc_at_k(run, k), cmc_at_k(scaled, k));
  EXPECT_DOUBLE_EQ(mean_average_precision(run), mean_average_precision(scaled));
}

TEST(MetricsReportIo, RoundTripAndKeySet) {
  MetricsReport report;
  report.rank_k = {{1, 0.5}, {5, 0.75}, {10, 1.0}};
  report.mean_ap = 0.6180339887;
  report.skipped_queries = 3;
  const std::string path =
      (std::filesystem::temp_directory_path() / "reid_metrics_test.txt").string();
  write_metrics_report(path, report);
  // exact key set: rank1, rank5, rank10, mAP, skipped
  std::ifstream f(path);
  std::vector<std::string> keys;
  std::string line;
  while (std::getline(f, line)) keys.push_back(line.substr(0, line.find(',')));
  EXPECT_EQ(keys, (std::vector<std::string>{"rank1", "rank5", "rank10", "mAP", "skipped"}));
  MetricsReport loaded = read_metrics_report(path);
  EXPECT_DOUBLE_EQ(loaded.mean_ap, report.mean_ap);
  EXPECT_DOUBLE_EQ(loaded.rank_k.at(5), 0.75);
  EXPECT_EQ(loaded.skipped_queries, 3);
  std::remove(path.c_str());
}

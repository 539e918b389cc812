#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "reid/checkpoint.hpp"
#include "reid/gradcheck.hpp"
#include "test_support.hpp"

using namespace reid;
using reid::testing::random_tensor;

TEST(FiniteDiff, SumOfSquares) {
  ParamStore p;
  p.insert("w", Tensor({2}, {3.0, -1.0}));
  auto loss = [](const ParamStore& ps) {
    double s = 0.0;
    for (int i = 0; i < ps.at("w").size(); ++i) s += ps.at("w")[i] * ps.at("w")[i];
    return s;
  };
  auto grads = finite_diff_grad(loss, p, 1e-5);
  EXPECT_NEAR(grads.at("w")[0], 6.0, 1e-8);
  EXPECT_NEAR(grads.at("w")[1], -2.0, 1e-8);
}

TEST(FiniteDiff, ConstantLossGivesZeroGradient) {
  ParamStore p;
  p.insert("w", random_tensor({4}, 1));
  auto grads = finite_diff_grad([](const ParamStore&) { return 42.0; }, p, 1e-5);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(grads.at("w")[i], 0.0);
}

TEST(FiniteDiff, NanLossThrows) {
  ParamStore p;
  p.insert("w", random_tensor({2}, 2));
  EXPECT_THROW(
      finite_diff_grad([](const ParamStore&) { return std::nan(""); }, p, 1e-5),
      NumericError);
  EXPECT_THROW(finite_diff_grad([](const ParamStore&) { return 0.0; }, p, 0.0), ContractError);
}

TEST(GradCheckReportTest, PassFlagMatchesTolerance) {
  ParamStore p;
  p.insert("w", Tensor({1}, {2.0}));
  auto loss = [](const ParamStore& ps) { return ps.at("w")[0] * ps.at("w")[0]; };
  std::map<std::string, Tensor> good{{"w", Tensor({1}, {4.0})}};
  std::map<std::string, Tensor> bad{{"w", Tensor({1}, {5.0})}};
  auto ok = check_gradients(loss, good, p);
  ASSERT_EQ(ok.size(), 1u);
  EXPECT_TRUE(ok[0].pass);
  EXPECT_LT(ok[0].max_rel_error, 1e-4);
  auto fail = check_gradients(loss, bad, p);
  EXPECT_FALSE(fail[0].pass);
}

TEST(Checkpoint, RoundTripBitExact) {
  ParamRegistry reg;
  reg.linear("enc.fc", 17, 9);
  reg.conv("enc.c0", 3, 4, 6);
  reg.norm("enc.ln", 9);
  ParamStore store = init_params(reg, 12345);
  const std::string path = std::filesystem::temp_directory_path() / "reid_ckpt_test.bin";
  save_checkpoint(path, store);
  ParamStore loaded = load_checkpoint(path);
  EXPECT_TRUE(store == loaded);
  EXPECT_EQ(loaded.seed(), 12345u);

  // validation catches shape drift
  ParamRegistry other;
  other.linear("enc.fc", 17, 10);
  other.conv("enc.c0", 3, 4, 6);
  other.norm("enc.ln", 9);
  EXPECT_THROW(load_checkpoint_validated(path, init_params(other, 1)), DataError);
  std::remove(path.c_str());
}

TEST(Checkpoint, ArchiveRejectsGarbage) {
  const std::string path = std::filesystem::temp_directory_path() / "reid_bad_archive.bin";
  {
    std::ofstream f(path);
    f << "not an archive\n";
  }
  EXPECT_THROW(load_checkpoint(path), DataError);
  std::remove(path.c_str());
}

#include <gtest/gtest.h>

#include "sparsegen/losses.hpp"
#include "sparsegen/util.hpp"

using namespace sparsegen;

namespace {

torch::Tensor logits25() { return torch::tensor({{2.0, 5.0}}, torch::kFloat64); }
torch::Tensor label(int64_t y) { return torch::tensor({y}, torch::kLong); }

double untargeted(int64_t y, double kappa) {
  return adv_loss_untargeted(logits25(), label(y), kappa).item<double>();
}
double targeted(int64_t t, double kappa) {
  return adv_loss_targeted(logits25(), label(t), kappa).item<double>();
}

}  // namespace

TEST(AdvLoss, UntargetedHandExamples) {
  EXPECT_NEAR(untargeted(1, 0.0), 3.0, 1e-6);
  EXPECT_NEAR(untargeted(0, 0.0), 0.0, 1e-6);
  EXPECT_NEAR(untargeted(0, 1.0), -1.0, 1e-6);
}

TEST(AdvLoss, TargetedHandExamples) {
  EXPECT_NEAR(targeted(0, 0.0), 3.0, 1e-6);
  EXPECT_NEAR(targeted(1, 0.0), 0.0, 1e-6);
  EXPECT_NEAR(targeted(1, 2.0), -2.0, 1e-6);
}

TEST(AdvLoss, MatchesBruteForceOnRandomBatch) {
  auto gen = make_generator(1);
  auto z = torch::randn({16, 7}, gen, torch::kFloat64);
  auto y = torch::randint(0, 7, {16}, gen, torch::kLong);
  const double kappa = 0.3;
  auto un = adv_loss_untargeted(z, y, kappa);
  auto tg = adv_loss_targeted(z, y, kappa);
  for (int64_t b = 0; b < 16; ++b) {
    const int64_t yb = y[b].item<int64_t>();
    double best_other = -1e300;
    for (int64_t i = 0; i < 7; ++i) {
      if (i != yb) best_other = std::max(best_other, z[b][i].item<double>());
    }
    const double own = z[b][yb].item<double>();
    EXPECT_NEAR(un[b].item<double>(), std::max(own - best_other, -kappa), 1e-12);
    EXPECT_NEAR(tg[b].item<double>(), std::max(best_other - own, -kappa), 1e-12);
  }
}

TEST(AdvLoss, FloorBindsExactlyWhenMarginExceedsKappa) {
  auto z = torch::tensor({{0.0, 4.0, 1.0}, {0.0, 0.5, 0.2}}, torch::kFloat64);
  auto y = torch::tensor({0, 0}, torch::kLong);
  auto l = adv_loss_untargeted(z, y, 1.0);
  EXPECT_EQ(l[0].item<double>(), -1.0);
  EXPECT_NEAR(l[1].item<double>(), -0.5, 1e-12);
}

TEST(AdvLoss, ScalingLogitsScalesActiveHinge) {
  auto z = torch::tensor({{3.0, 1.0, 0.5}}, torch::kFloat64);
  auto y = label(0);
  const double base = adv_loss_untargeted(z, y, 0.0).item<double>();
  EXPECT_NEAR(adv_loss_untargeted(z * 2.5, y, 0.0).item<double>(), 2.5 * base, 1e-12);
}

TEST(AdvLoss, GradientMatchesFiniteDifferences) {
  auto gen = make_generator(2);
  auto z = torch::randn({4, 5}, gen, torch::kFloat64);
  auto y = torch::tensor({0, 1, 2, 3}, torch::kLong);
  for (bool is_targeted : {false, true}) {
    const auto f = [&](const torch::Tensor& t) {
      return (is_targeted ? adv_loss_targeted(t, y, 10.0) : adv_loss_untargeted(t, y, 10.0)).sum();
    };
    auto zz = z.clone().requires_grad_(true);
    f(zz).backward();
    const double h = 1e-6;
    for (int64_t i = 0; i < z.numel(); ++i) {
      auto p = z.clone(), m = z.clone();
      p.view(-1)[i] += h;
      m.view(-1)[i] -= h;
      const double fd = (f(p).item<double>() - f(m).item<double>()) / (2 * h);
      const double a = zz.grad().view(-1)[i].item<double>();
      EXPECT_NEAR(fd, a, 1e-4 * std::max(1.0, std::abs(a))) << i;
    }
  }
}

TEST(AdvLoss, Errors) {
  EXPECT_THROW(adv_loss_untargeted(torch::zeros({1, 1}), label(0), 0.0), ValidationError);
  EXPECT_THROW(adv_loss_untargeted(logits25(), label(2), 0.0), ValidationError);
  EXPECT_THROW(adv_loss_targeted(logits25(), label(-1), 0.0), ValidationError);
}

TEST(SparseLoss, HandExamples) {
  auto m = torch::zeros({1, 1, 8, 8});
  m.view(-1).slice(0, 0, 37).fill_(1.0);
  EXPECT_NEAR(sparse_loss(m).item<double>(), 37.0, 1e-6);
  EXPECT_NEAR(sparse_loss(torch::zeros({1, 1, 8, 8})).item<double>(), 0.0, 1e-6);
  EXPECT_NEAR(sparse_loss(torch::tensor({{0.5, 1.0}})).item<double>(), 1.5, 1e-6);
}

TEST(SparseLoss, AveragesOverBatch) {
  auto m = torch::zeros({2, 1, 2, 2});
  m[0].fill_(1.0);
  EXPECT_NEAR(sparse_loss(m).item<double>(), 2.0, 1e-6);
}

TEST(QuantizationLoss, HandExamples) {
  auto m = torch::tensor({{1.0, 0.0}});
  EXPECT_NEAR(quantization_loss(m, m).item<double>(), 0.0, 1e-6);
  EXPECT_NEAR(quantization_loss(torch::tensor({{0.6, 0.2}}), m).item<double>(), std::sqrt(0.2), 1e-6);
  EXPECT_THROW(quantization_loss(torch::zeros({1, 3}), m), ValidationError);
}

TEST(TotalLoss, WeightedSumExact) {
  LossTerms t{torch::tensor(1.0), torch::tensor(10.0), torch::tensor(2.0)};
  auto c = total_loss(t, 0.1, 0.5);
  EXPECT_NEAR(c.breakdown.total, 3.0, 1e-6);
  EXPECT_EQ(c.breakdown.total, 1.0 + 0.1 * 10.0 + 0.5 * 2.0);
  EXPECT_EQ(c.total.item<double>(), c.breakdown.total);
  auto zero = total_loss(t, 0.0, 0.0);
  EXPECT_EQ(zero.breakdown.total, 1.0);
  EXPECT_THROW(total_loss(t, -0.1, 0.0), ValidationError);
  EXPECT_THROW(total_loss(t, 0.0, -1.0), ValidationError);
}

TEST(TotalLoss, AbsentTermsContributeNothing) {
  LossTerms t;
  t.adv = torch::tensor(2.0);
  t.sparse = torch::tensor(4.0);
  auto c = total_loss(t, 0.25, 3.0);
  EXPECT_EQ(c.breakdown.total, 3.0);
  EXPECT_EQ(c.breakdown.quanti, 0.0);
}

TEST(TrainingLog, CsvColumns) {
  TrainingLog full(true), no_q(false);
  LossBreakdown b;
  b.adv = 1.5;
  b.sparse = 2;
  b.quanti = 0.25;
  b.total = 4;
  full.append(0, b);
  no_q.append(3, b);
  EXPECT_EQ(full.to_csv(), "step,adv,sparse,quanti,total\n0,1.5,2,0.25,4\n");
  EXPECT_EQ(no_q.to_csv(), "step,adv,sparse,total\n3,1.5,2,4\n");
}

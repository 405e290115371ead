#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>

using namespace phc;
using namespace phc::test;

namespace {

std::vector<double> sorted_eigenvalues(const Eigen::MatrixXcd& H) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H, Eigen::EigenvaluesOnly);
  const auto& v = es.eigenvalues();
  return {v.data(), v.data() + v.size()};
}

// index of band 1 among 2m tracked bands sorted by value
int band_index(int band, int tracked) { return band > 0 ? tracked / 2 + band - 1 : tracked / 2 + band; }

}  // namespace

TEST(Fiber, IdentityAtZero) {
  const auto f = assemble_fiber(identity(), 0.0, 1);
  const auto ev = sorted_eigenvalues(f.H);
  const std::vector<double> expect{-2 * pi, -2 * pi, 0.0, 0.0, 2 * pi, 2 * pi};
  ASSERT_EQ(ev.size(), expect.size());
  for (std::size_t i = 0; i < ev.size(); ++i) EXPECT_NEAR(ev[i], expect[i], 1e-12);
}

TEST(Fiber, IdentityShiftedLines) {
  const int N = 4;
  const auto ev = sorted_eigenvalues(assemble_fiber(identity(), 0.3, N).H);
  std::vector<double> expect;
  for (int n = -N; n <= N; ++n) {
    expect.push_back(0.3 + 2 * pi * n);
    expect.push_back(-(0.3 + 2 * pi * n));
  }
  std::sort(expect.begin(), expect.end());
  for (std::size_t i = 0; i < ev.size(); ++i) EXPECT_NEAR(ev[i], expect[i], 1e-12);
}

TEST(Fiber, StackAZoneEdgeAndHermiticity) {
  const auto f = assemble_fiber(stack_a(), pi / stack_period, 64);
  EXPECT_LT((f.H - f.H.adjoint()).cwiseAbs().maxCoeff(), 1e-13);
  const auto ev = sorted_eigenvalues(f.H);
  const double lowest_positive = *std::find_if(ev.begin(), ev.end(), [](double v) { return v > 1e-6; });
  EXPECT_NEAR(lowest_positive, 1.2309594, 1e-7);
  EXPECT_NEAR(lowest_positive, edge_lo(), 1e-8);
  EXPECT_THROW((void)assemble_fiber(stack_a(), 2.5, 8), error);
}

TEST(Fiber, GeneralizedProblemCrossCheck) {
  // D u = lambda W^{-1} u with W^{-1} the convolution matrix of the constitutive data
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 4; ++trial) {
    const Medium m(random_two_layer(rng), 16);
    const FiberBasis basis(m, 6, false);
    for (double k : {-0.7, 0.0, 0.4}) {
      const double kk = k * pi / m.period();
      const auto ev = sorted_eigenvalues(basis.reduced(kk));
      Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXcd> gs(basis.derivative(kk), basis.convolution(),
                                                                     Eigen::EigenvaluesOnly);
      const auto& g = gs.eigenvalues();
      for (std::size_t i = 0; i < ev.size(); ++i) EXPECT_NEAR(ev[i], g(static_cast<Eigen::Index>(i)), 1e-12 * (1 + std::abs(ev[i])));
    }
  }
}

TEST(Fiber, ReciprocalShiftCovariance) {
  // truncated spectra at k and k - 2 pi / p agree away from the cutoff
  const FiberBasis basis(stack_a(), 64);
  const double k = 0.37;
  auto low = [&](double kk) {
    auto ev = sorted_eigenvalues(basis.reduced(kk));
    std::vector<double> out;
    for (double v : ev)
      if (std::abs(v) < 8.0) out.push_back(v);
    return out;
  };
  const auto a = low(k), b = low(k - 2 * pi / stack_period);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-8);
}

TEST(Bands, IdentityStraightLines) {
  const auto kg = default_kgrid(1.0, 201);
  const auto bs = solve_bands(identity(), kg, 32, 8);
  for (int b = 0; b < bs.n_bands(); ++b) {
    const double slope = bs.velocities[b][0];
    EXPECT_NEAR(std::abs(slope), 1.0, 1e-10);
    for (std::size_t i = 0; i < kg.size(); ++i) {
      EXPECT_NEAR(bs.velocities[b][i], slope, 1e-10);
      // value lies on a line +-(k + 2 pi n)
      const double s = slope > 0 ? 1.0 : -1.0;
      const double n = (s * bs.bands[b][i] - kg[i]) / (2 * pi);
      EXPECT_NEAR(n, std::round(n), 1e-10);
    }
  }
  // HF recomputation agrees with the stored velocities
  const auto v = group_velocity(bs);
  for (int b = 0; b < bs.n_bands(); ++b)
    for (std::size_t i = 0; i < kg.size(); ++i) EXPECT_NEAR(v[b][i], bs.velocities[b][i], 1e-10);
}

TEST(Bands, StackAFirstTwoBands) {
  const auto kg = default_kgrid(stack_period, 201);
  const auto bs = solve_bands(stack_a(), kg, 64, 6);
  const int b1 = band_index(1, 6), b2 = band_index(2, 6);
  const std::size_t mid = kg.size() / 2;
  EXPECT_NEAR(kg[mid], 0.0, 1e-15);
  // labels are fixed at k = -pi/p; band 1 is the analytic branch through lambda = 0
  EXPECT_NEAR(bs.bands[b1].front(), 1.2309594, 1e-6);
  EXPECT_NEAR(bs.bands[b1][mid], 0.0, 1e-10);
  EXPECT_NEAR(bs.bands[b1].back(), -1.2309594, 1e-6);
  for (std::size_t i = 1; i < kg.size(); ++i) EXPECT_LT(bs.bands[b1][i], bs.bands[b1][i - 1]);
  EXPECT_NEAR(bs.bands[b2].front(), 1.9106332, 1e-6);
  // equal optical thicknesses close the k = 0 gap, so the branch continues upward
  EXPECT_NEAR(bs.bands[b2].back(), pi + edge_lo(), 1e-6);
  EXPECT_NEAR(bs.min_value(b2), edge_hi(), 1e-8);
  // long-wavelength velocity 1 / sqrt(mean eps)
  EXPECT_NEAR(std::abs(bs.velocities[b1][mid + 1]), 1.0 / std::sqrt(2.0), 1e-3);
}

TEST(Bands, BandValuesArePermutationOfFiberSpectrum) {
  const auto kg = default_kgrid(stack_period, 21);
  const auto bs = solve_bands(stack_a(), kg, 16, 6);
  for (std::size_t i = 0; i < kg.size(); ++i) {
    const auto ev = sorted_eigenvalues(bs.basis->reduced(kg[i]));
    for (int b = 0; b < bs.n_bands(); ++b) {
      const double v = bs.bands[b][i];
      const auto it = std::lower_bound(ev.begin(), ev.end(), v - 1e-12);
      ASSERT_NE(it, ev.end());
      EXPECT_NEAR(*it, v, 1e-12);
    }
    if (bs.is_flagged(i)) continue;
    for (int b = 0; b < bs.n_bands(); ++b) EXPECT_GE(bs.overlaps[b][i], 0.8);
  }
}

TEST(Bands, HellmannFeynmanMatchesDifferences) {
  const auto kg = default_kgrid(stack_period, 41);
  const auto bs = solve_bands(stack_a(), kg, 32, 6);
  const double h = 1e-5;
  for (int b = 0; b < bs.n_bands(); ++b)
    for (std::size_t i = 1; i + 1 < kg.size(); ++i) {
      // skip degenerate points, where the difference quotient follows no single branch
      bool isolated = true;
      for (int o = 0; o < bs.n_bands(); ++o)
        if (o != b && std::abs(bs.bands[o][i] - bs.bands[b][i]) < 1e-3) isolated = false;
      if (!isolated) continue;
      const auto plus = follow_branch(*bs.basis, bs.eigvecs[b][i], kg[i] + h);
      const auto minus = follow_branch(*bs.basis, bs.eigvecs[b][i], kg[i] - h);
      const double fd = (plus.lambda - minus.lambda) / (2 * h);
      EXPECT_NEAR(bs.velocities[b][i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Bands, RejectsBadInput) {
  const std::vector<double> unsorted{0.1, 0.0};
  EXPECT_THROW((void)solve_bands(identity(), unsorted, 4, 2), error);
  const std::vector<double> outside{0.0, 4.0};
  EXPECT_THROW((void)solve_bands(identity(), outside, 4, 2), error);
  EXPECT_THROW((void)default_kgrid(1.0, 1), error);
  BandStructure empty;
  EXPECT_THROW((void)group_velocity(empty), error);
}

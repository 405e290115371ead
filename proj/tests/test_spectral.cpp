#include "support.hpp"

#include <gtest/gtest.h>

using namespace phc;
using namespace phc::test;

namespace {

const BandStructure& stack_bands() {
  static const BandStructure bs = solve_bands(stack_a(), default_kgrid(stack_period, 201), 32, 6);
  return bs;
}

error_kind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return error_kind::invalid_argument;
}

}  // namespace

TEST(Thresholds, IdentityHasNone) {
  const auto bs = solve_bands(identity(), default_kgrid(1.0, 201), 16, 6);
  EXPECT_TRUE(find_thresholds(bs).empty());
}

TEST(Thresholds, StackAGapEdges) {
  const auto ts = find_thresholds(stack_bands());
  auto near = [&](double lam) {
    for (const auto& t : ts.entries)
      if (std::abs(t.lambda - lam) < 1e-6) return &t;
    return static_cast<const Threshold*>(nullptr);
  };
  for (double lam : {edge_lo(), edge_hi(), -edge_lo(), -edge_hi()}) {
    const Threshold* t = near(lam);
    ASSERT_NE(t, nullptr) << lam;
    EXPECT_NEAR(std::abs(t->k), pi / stack_period, 1e-9);
  }
  // sorted, and every entry comes with its mirror image
  for (std::size_t i = 1; i < ts.size(); ++i) EXPECT_LT(ts.entries[i - 1].lambda, ts.entries[i].lambda);
  for (const auto& t : ts.entries) EXPECT_NE(near(-t.lambda), nullptr);
}

TEST(Thresholds, RootsAreSharpAndIsolated) {
  const auto& bs = stack_bands();
  const auto ts = find_thresholds(bs);
  for (const auto& t : ts.entries) {
    std::size_t near = 0;
    for (std::size_t i = 1; i < bs.kgrid.size(); ++i)
      if (std::abs(bs.kgrid[i] - t.k) < std::abs(bs.kgrid[near] - t.k)) near = i;
    const auto& ref = bs.eigvecs[t.band][near];
    // velocity at the root and 1e-3 away
    const auto at = follow_branch(*bs.basis, ref, std::clamp(t.k, -pi / stack_period, pi / stack_period));
    EXPECT_LT(std::abs(at.velocity), 1e-6);
    const double kin = t.k > 0 ? t.k - 1e-3 : t.k + 1e-3;
    EXPECT_GT(std::abs(follow_branch(*bs.basis, at.vector, kin).velocity), 1e-9);
    EXPECT_GT(t.curvature, 0.0);
  }
  BandStructure bare = bs;
  bare.eigvecs.clear();
  EXPECT_EQ(kind_of([&] { (void)find_thresholds(bare); }), error_kind::missing_eigenvectors);
}

TEST(Spectrum, IdentityFillsWindow) {
  const auto bs = solve_bands(identity(), default_kgrid(1.0, 101), 16, 6);
  const auto sp = spectrum_of_medium(bs, {-5.0, 5.0});
  ASSERT_EQ(sp.bands.size(), 1u);
  EXPECT_NEAR(sp.bands[0].lo, -5.0, 1e-12);
  EXPECT_NEAR(sp.bands[0].hi, 5.0, 1e-12);
  EXPECT_TRUE(sp.gaps.empty());
}

TEST(Spectrum, StackAHasGap) {
  const auto& bs = stack_bands();
  const auto ts = find_thresholds(bs);
  const auto sp = spectrum_of_medium(bs, {0.0, 2.5}, &ts);
  ASSERT_EQ(sp.bands.size(), 2u);
  EXPECT_NEAR(sp.bands[0].lo, 0.0, 1e-12);
  EXPECT_NEAR(sp.bands[0].hi, edge_lo(), 1e-6);
  EXPECT_NEAR(sp.bands[1].lo, edge_hi(), 1e-6);
  EXPECT_NEAR(sp.bands[1].hi, 2.5, 1e-12);
  // endpoints are thresholds or window edges
  for (const auto& iv : sp.bands)
    for (double e : {iv.lo, iv.hi})
      EXPECT_TRUE(e == 0.0 || e == 2.5 || ts.distance(e) < 1e-9) << e;
}

TEST(Spectrum, UnionRules) {
  const auto& a = stack_bands();
  const Interval win{0.0, 2.5};
  const auto sa = spectrum_of_medium(a, win);
  const auto same = essential_spectrum_union(sa, sa);
  ASSERT_EQ(same.essential.size(), sa.bands.size());
  for (std::size_t i = 0; i < sa.bands.size(); ++i) {
    EXPECT_EQ(same.essential[i].lo, sa.bands[i].lo);
    EXPECT_EQ(same.essential[i].hi, sa.bands[i].hi);
  }

  const auto hom = solve_bands(Medium(ConstitutiveProfile::homogeneous(1.0, 1.0, {}, stack_period), 8),
                               default_kgrid(stack_period, 101), 16, 8);
  const auto u = essential_spectrum_union(spectrum_of_medium(hom, win), sa);
  ASSERT_EQ(u.essential.size(), 1u);
  EXPECT_EQ(u.essential[0].lo, win.lo);
  EXPECT_EQ(u.essential[0].hi, win.hi);
  EXPECT_TRUE(u.common_gaps.empty());
  // each medium's bands lie inside the union
  for (const auto& b : sa.bands) EXPECT_TRUE(b.lo >= u.essential[0].lo && b.hi <= u.essential[0].hi);

  EXPECT_EQ(kind_of([&] { (void)essential_spectrum_union(sa, spectrum_of_medium(a, {0.0, 2.0})); }),
            error_kind::window_mismatch);
}

TEST(Mourre, IdentityIsOne) {
  const auto bs = solve_bands(identity(), default_kgrid(1.0, 101), 16, 6);
  const auto r = mourre_constant(bs, {0.5, 2.0}, find_thresholds(bs));
  EXPECT_NEAR(r.c_I, 1.0, 1e-10);
}

TEST(Mourre, StackAWindows) {
  const auto& bs = stack_bands();
  const auto ts = find_thresholds(bs);
  const auto r = mourre_constant(bs, {0.3, 0.6}, ts);
  EXPECT_GT(r.c_I, 0.0);
  EXPECT_EQ(kind_of([&] { (void)mourre_constant(bs, {1.2, 1.25}, ts); }), error_kind::window_touches_threshold);
  // positivity on windows away from thresholds
  for (Interval I : {Interval{0.05, 1.0}, Interval{2.0, 2.6}, Interval{-1.1, -0.2}}) EXPECT_GT(mourre_constant(bs, I, ts).c_I, 0.0);
}

TEST(FlatBand, IdentityExact) {
  const std::vector<double> rho{10.0, 100.0, 1000.0};
  const auto c = flat_band_certificate(identity(), 16, rho);
  for (std::size_t i = 0; i < rho.size(); ++i) EXPECT_NEAR(c.norm[i] * rho[i], 1.0, 1e-12);
  EXPECT_NEAR(c.slope, -1.0, 1e-12);
}

TEST(FlatBand, StackADecay) {
  const std::vector<double> rho{10.0, 20.0, 40.0, 80.0, 160.0};
  const auto c = flat_band_certificate(stack_a(), 32, rho);
  for (std::size_t i = 1; i < rho.size(); ++i) {
    EXPECT_LT(c.norm[i], c.norm[i - 1]);
    EXPECT_LE(c.norm[i], 0.6 * c.norm[i - 1]);
  }
  const std::vector<double> bad{10.0, 5.0};
  EXPECT_EQ(kind_of([&] { (void)flat_band_certificate(stack_a(), 8, bad); }), error_kind::invalid_argument);
}

TEST(FlatBand, NoFlatBands) {
  const auto& bs = stack_bands();
  double lo = 1e300, hi = -1e300;
  for (int b = 0; b < bs.n_bands(); ++b) {
    lo = std::min(lo, bs.min_value(b));
    hi = std::max(hi, bs.max_value(b));
  }
  for (int b = 0; b < bs.n_bands(); ++b) EXPECT_GT(bs.max_value(b) - bs.min_value(b), 1e-10 * (hi - lo));
}

TEST(InterfaceStates, SwappedStackLocalized) {
  const JunctionSystem sys(stack_a(), stack_b(), Transition::compact(1.0));
  const Grid g = Grid::periodic(stack_period, 32, 8);
  const auto rep = interface_states(sys, {1.3, 1.85}, g);
  ASSERT_FALSE(rep.states.empty());
  for (const auto& s : rep.states) {
    EXPECT_GE(s.mass_near, 0.99);
    EXPECT_GT(s.decay_rate, 0.0);
    EXPECT_LE(std::abs(s.center), 2.0 * stack_period);
    EXPECT_TRUE(s.lambda > 1.3 && s.lambda < 1.85);
  }
}

TEST(InterfaceStates, IdenticalMediaHaveNone) {
  const JunctionSystem sys(stack_a(), stack_a(), Transition::compact(1.0));
  const auto rep = interface_states(sys, {1.3, 1.85}, Grid::periodic(stack_period, 32, 8));
  EXPECT_TRUE(rep.states.empty());
}

TEST(InterfaceStates, WindowOutsideCommonGap) {
  const JunctionSystem sys(stack_a(), identity(stack_period), Transition::compact(1.0));
  EXPECT_EQ(kind_of([&] { (void)interface_states(sys, {1.3, 1.85}, Grid::periodic(stack_period, 16, 8)); }),
            error_kind::no_common_gap);
}

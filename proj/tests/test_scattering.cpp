#include "support.hpp"

#include <gtest/gtest.h>

using namespace phc;
using namespace phc::test;

namespace {

error_kind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return error_kind::invalid_argument;
}

std::shared_ptr<const JunctionSystem> junction(const Medium& l, const Medium& r, double X = 1.0) {
  return std::make_shared<const JunctionSystem>(l, r, Transition::compact(X));
}

// zero outside [lo, hi]
StateVector restricted(StateVector s, double lo, double hi) {
  for (int i = 0; i < s.size(); ++i)
    if (s.grid().x(i) < lo || s.grid().x(i) > hi) {
      s.e(i) = 0.0;
      s.h(i) = 0.0;
    }
  return s;
}

double max_abs(const StateVector& s) { return std::max(s.e.cwiseAbs().maxCoeff(), s.h.cwiseAbs().maxCoeff()); }

const JunctionScene& identity_scene() {
  static const JunctionScene sc(junction(identity(), identity()), Grid::periodic(1.0, 128, 8));
  return sc;
}

const JunctionScene& stack_scene() {
  static const JunctionScene sc(junction(stack_a(), stack_b()), Grid::periodic(stack_period, 128, 8));
  return sc;
}

}  // namespace

TEST(Cutoffs, DisjointSupports) {
  const Grid g = Grid::periodic(1.0, 8, 64);
  const auto c = make_cutoffs(g);
  for (int i = 0; i < g.size(); ++i) {
    const double x = g.x(i);
    EXPECT_EQ(c.left(i) * c.right(i), 0.0);
    EXPECT_GE(c.left(i), 0.0);
    EXPECT_LE(c.left(i), 1.0);
    if (x <= -1.0) { EXPECT_EQ(c.left(i), 1.0); }
    if (x >= -0.5) { EXPECT_EQ(c.left(i), 0.0); }
    if (x <= 0.5) { EXPECT_EQ(c.right(i), 0.0); }
    if (x >= 1.0) { EXPECT_EQ(c.right(i), 1.0); }
  }
}

TEST(Junction, ActsAsIdentityFarLeftAndKillsCore) {
  const auto& sc = stack_scene();
  std::mt19937_64 rng(11);
  const StateVector far = restricted(StateVector::random(sc.left_basis->weight(), rng), -1e9, -2.0);
  const StateVector out = apply_junction(sc.cutoffs, sc.single(Side::left, far), sc.full_weight);
  EXPECT_EQ(max_abs(out - far.in_context(sc.full_weight)), 0.0);

  const StateVector zero = apply_junction(sc.cutoffs, sc.single(Side::left, StateVector(sc.left_basis->weight())), sc.full_weight);
  EXPECT_EQ(max_abs(zero), 0.0);

  const StateVector core_l = restricted(StateVector::random(sc.left_basis->weight(), rng), -0.25, 0.25);
  const StateVector core_r = restricted(StateVector::random(sc.right_basis->weight(), rng), -0.25, 0.25);
  EXPECT_EQ(max_abs(apply_junction(sc.cutoffs, {core_l, core_r}, sc.full_weight)), 0.0);
}

TEST(Junction, AdjointIdentity) {
  const auto& sc = stack_scene();
  std::mt19937_64 rng(12);
  for (int t = 0; t < 5; ++t) {
    const StatePair p{StateVector::random(sc.left_basis->weight(), rng), StateVector::random(sc.right_basis->weight(), rng)};
    const StateVector psi = StateVector::random(sc.full_weight, rng);
    const cplx lhs = weighted_inner(apply_junction(sc.cutoffs, p, sc.full_weight), psi);
    const cplx rhs = pair_inner(p, apply_junction_adjoint(sc.cutoffs, psi, sc.left_basis->weight(), sc.right_basis->weight()));
    EXPECT_LT(std::abs(lhs - rhs), 1e-12 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(Junction, AdjointOnIdentityAndIdenticalMedia) {
  const auto& sc = identity_scene();
  std::mt19937_64 rng(13);
  const auto wl = sc.left_basis->weight(), wr = sc.right_basis->weight();
  const StateVector phi = StateVector::random(sc.full_weight, rng);
  const StatePair adj = apply_junction_adjoint(sc.cutoffs, phi, wl, wr);
  for (int i = 0; i < phi.size(); ++i) {
    EXPECT_LT(std::abs(adj.left.e(i) - sc.cutoffs.left(i) * phi.e(i)), 1e-14);
    EXPECT_LT(std::abs(adj.right.h(i) - sc.cutoffs.right(i) * phi.h(i)), 1e-14);
  }

  // identical periodic media: J* J = diag(j_l^2, j_r^2)
  const JunctionScene st(junction(stack_a(), stack_a()), Grid::periodic(stack_period, 16, 8));
  const StatePair p{StateVector::random(st.left_basis->weight(), rng), StateVector::random(st.right_basis->weight(), rng)};
  const StatePair back = apply_junction_adjoint(st.cutoffs, apply_junction(st.cutoffs, p, st.full_weight),
                                                st.left_basis->weight(), st.right_basis->weight());
  for (int i = 0; i < p.left.size(); ++i) {
    const double jl = st.cutoffs.left(i), jr = st.cutoffs.right(i);
    EXPECT_LT((back.left.at(i) - jl * jl * p.left.at(i)).norm(), 1e-12);
    EXPECT_LT((back.right.at(i) - jr * jr * p.right.at(i)).norm(), 1e-12);
  }
}

TEST(Junction, GridMismatch) {
  const auto& sc = stack_scene();
  const auto other = make_cutoffs(Grid::periodic(stack_period, 64, 8));
  EXPECT_EQ(kind_of([&] { (void)apply_junction(other, sc.single(Side::left, StateVector(sc.left_basis->weight())), sc.full_weight); }),
            error_kind::grid_mismatch);
}

TEST(InterfaceEnergy, Decomposition) {
  const auto& sc = stack_scene();
  std::mt19937_64 rng(14);
  for (int t = 0; t < 5; ++t) {
    const StatePair p{StateVector::random(sc.left_basis->weight(), rng), StateVector::random(sc.right_basis->weight(), rng)};
    const auto en = interface_energy(sc.cutoffs, p, sc.full_weight);
    EXPECT_LT(std::abs(en.total - (en.left + en.right + en.interface)), 1e-12 * en.total);
    EXPECT_GT(std::abs(en.interface), 0.0);
  }
}

TEST(InterfaceEnergy, IdenticalWeightsAndCentralSupport) {
  const auto& id = identity_scene();
  std::mt19937_64 rng(15);
  const StatePair p{StateVector::random(id.left_basis->weight(), rng), StateVector::random(id.right_basis->weight(), rng)};
  const auto flat = interface_energy(id.cutoffs, p, id.full_weight);
  EXPECT_LT(std::abs(flat.interface), 1e-14 * flat.total);

  const auto& sc = stack_scene();
  const StatePair core{restricted(StateVector::random(sc.left_basis->weight(), rng), -0.25, 0.25),
                       restricted(StateVector::random(sc.right_basis->weight(), rng), -0.25, 0.25)};
  const auto en = interface_energy(sc.cutoffs, core, sc.full_weight);
  EXPECT_EQ(en.total, 0.0);
  EXPECT_EQ(en.left, 0.0);
  EXPECT_EQ(en.right, 0.0);
  EXPECT_EQ(en.interface, 0.0);
}

TEST(Moller, IdenticalMediaIsometricAndNull) {
  const auto& sc = identity_scene();
  auto packet = [&](double k0, int sign) {
    WavepacketSpec ws;
    ws.band = 1;
    ws.k0 = k0;
    ws.sigma_k = 0.05 * pi;
    ws.velocity_sign = sign;
    return make_wavepacket(sc.right_basis, ws);
  };
  const auto out = packet(1.0, +1);
  const auto r = moller_iterate(sc, sc.single(Side::right, out.state), +1, out.mean_velocity).report;
  EXPECT_EQ(r.verdict, Verdict::isometric);
  EXPECT_LT(r.defect, 0.02);
  EXPECT_TRUE(r.increments_decrease);
  ASSERT_EQ(r.schedule.size(), 5u);
  EXPECT_NEAR(r.schedule[0], 2.0, 1e-9);
  EXPECT_NEAR(r.schedule[4], 32.0, 1e-9);

  const auto in = packet(-1.0, -1);
  const auto n = moller_iterate(sc, sc.single(Side::right, in.state), +1, in.mean_velocity).report;
  EXPECT_EQ(n.verdict, Verdict::null);
  EXPECT_LT(n.final_norm, 0.05);

  EXPECT_EQ(kind_of([&] { (void)moller_iterate(sc, sc.single(Side::right, out.state), 0, 1.0); }), error_kind::invalid_argument);
}

TEST(Moller, InitialSetsOnSwappedStack) {
  const auto& sc = stack_scene();
  struct Case {
    Side side;
    int sign, direction;
    Verdict expect;
  };
  const Case cases[] = {{Side::left, -1, +1, Verdict::isometric},
                        {Side::left, +1, +1, Verdict::null},
                        {Side::right, +1, +1, Verdict::isometric},
                        {Side::right, +1, -1, Verdict::null},
                        {Side::left, +1, -1, Verdict::isometric}};
  for (const auto& c : cases) {
    InitialSetSpec spec;
    spec.side = c.side;
    spec.velocity_sign = c.sign;
    spec.direction = c.direction;
    spec.k0 = 0.5 * pi / stack_period;
    spec.sigma_k = 0.05 * pi / stack_period;
    const auto r = initial_set_check(sc, spec);
    EXPECT_EQ(r.report.verdict, c.expect) << to_string(c.side) << " " << c.sign << " " << c.direction;
    EXPECT_GT(r.packet_velocity * c.sign, 0.0);
  }
}

TEST(AsymptoticVelocity, IdentityAndSplitPacket) {
  const auto b = bloch_basis(identity(), 256, 8);
  WavepacketSpec ws;
  ws.band = 1;
  ws.k0 = 1.0;
  ws.sigma_k = 0.05 * pi;
  const std::vector<double> times{20.0, 40.0, 80.0};
  const auto right = make_wavepacket(b, ws);
  EXPECT_NEAR(asymptotic_velocity(b, right.state, times).limit, 1.0, 1e-3);

  ws.k0 = -1.0;
  const auto left = make_wavepacket(b, ws);
  const auto split = asymptotic_velocity(b, right.state + left.state, times);
  EXPECT_NEAR(split.limit, 0.0, 1e-3);
  EXPECT_NEAR(split.second_limit, 1.0, 1e-2);

  const std::vector<double> bad{0.0};
  EXPECT_EQ(kind_of([&] { (void)asymptotic_velocity(b, right.state, bad); }), error_kind::invalid_argument);
}

TEST(AsymptoticVelocity, StackAMatchesGroupVelocity) {
  const auto b = bloch_basis(stack_a(), 128, 8);
  WavepacketSpec ws;
  ws.band = 1;
  ws.k0 = 0.5 * pi / stack_period;
  ws.sigma_k = 0.05 * pi / stack_period;
  ws.center = -40.0;
  const auto wp = make_wavepacket(b, ws);
  const std::vector<double> times{20.0, 40.0, 80.0};
  const auto tr = asymptotic_velocity(b, wp.state, times);
  EXPECT_NEAR(tr.limit, wp.mean_velocity, 0.02 * std::abs(wp.mean_velocity));
}

TEST(Scatter, IdenticalMediaTransmitFully) {
  const auto& sc = identity_scene();
  IncidentSpec inc;
  inc.k0 = 1.0;
  inc.sigma_k = 0.05 * pi;
  inc.x0 = -30.0;
  const auto rep = time_domain_scatter(sc, inc);
  EXPECT_NEAR(rep.T, 1.0, 1e-3);
  EXPECT_LT(rep.R, 1e-3);
  EXPECT_LT(rep.residual, 1e-3);
  EXPECT_LT(rep.flux_defect, 1e-3);
}

TEST(Scatter, NonSeparationRaised) {
  const auto& sc = identity_scene();
  IncidentSpec inc;
  inc.k0 = 1.0;
  inc.sigma_k = 0.05 * pi;
  inc.x0 = -1.0;
  ScatterOptions opt;
  opt.max_time = 2.0;
  EXPECT_EQ(kind_of([&] { (void)time_domain_scatter(sc, inc, opt); }), error_kind::non_separation);
}

#pragma once

// Real-space operators M_h = W_h D_h, Crank-Nicolson evolution in the weighted
// product, exact free evolution in the Bloch basis, and wavepackets.

#include "bloch_transform.hpp"
#include "core.hpp"
#include "fft.hpp"
#include "media.hpp"
#include "state.hpp"

#include <functional>
#include <memory>
#include <optional>

namespace phc {

/// -i d/dx on a periodic grid via the discrete Fourier transform.
class SpectralDerivative {
 public:
  explicit SpectralDerivative(const Grid& g) : n_(g.size()), plan_(plan_for(g.size())), kappa_(g.size()), buf_(g.size()) {
    for (int q = 0; q < n_; ++q) kappa_(q) = grid_wavenumber(q, n_, g.length()) / n_;
  }

  /// out = -i f' (out must not alias in).
  void apply(const Eigen::VectorXcd& in, Eigen::VectorXcd& out) const {
    thread_local Eigen::VectorXcd tmp;
    tmp.resize(n_);
    out.resize(n_);
    plan_->forward(in.data(), tmp.data());
    tmp.array() *= kappa_.array();
    plan_->backward(tmp.data(), out.data());
  }

  int size() const { return n_; }

 private:
  int n_;
  std::shared_ptr<const fft_plan> plan_;
  Eigen::VectorXd kappa_;
  Eigen::VectorXcd buf_;
};

enum class OperatorKind { full, free_left, free_right, periodic };

inline const char* to_string(OperatorKind k) {
  switch (k) {
    case OperatorKind::full: return "full";
    case OperatorKind::free_left: return "free-left";
    case OperatorKind::free_right: return "free-right";
    case OperatorKind::periodic: return "periodic";
  }
  return "?";
}

/// M_h = W_h offdiag(P, P) with P the spectral -i d/dx.
class DiscreteOperator {
 public:
  DiscreteOperator(WeightPtr weight, OperatorKind kind)
      : weight_(std::move(weight)), kind_(kind), deriv_(std::make_shared<SpectralDerivative>(weight_->grid())) {}

  const WeightPtr& weight() const { return weight_; }
  const Grid& grid() const { return weight_->grid(); }
  OperatorKind kind() const { return kind_; }

  void apply(const Eigen::VectorXcd& e, const Eigen::VectorXcd& h, Eigen::VectorXcd& oe, Eigen::VectorXcd& oh) const {
    thread_local Eigen::VectorXcd pe, ph;
    deriv_->apply(h, pe);  // (D phi)_E = P phi_H
    deriv_->apply(e, ph);  // (D phi)_H = P phi_E
    const auto& w = weight_->weight();
    oe.resize(e.size());
    oh.resize(e.size());
    for (Eigen::Index i = 0; i < e.size(); ++i) {
      const Mat2& m = w[static_cast<std::size_t>(i)];
      oe(i) = m(0, 0) * pe(i) + m(0, 1) * ph(i);
      oh(i) = m(1, 0) * pe(i) + m(1, 1) * ph(i);
    }
  }

  StateVector apply(const StateVector& s) const {
    require_same_context(s, StateVector(weight_));
    StateVector out(weight_);
    apply(s.e, s.h, out.e, out.h);
    return out;
  }

  /// Upper bound for |lambda| on the grid: c1 times the largest wavenumber.
  double max_frequency() const { return weight_->c1() * pi / grid().spacing(); }

 private:
  WeightPtr weight_;
  OperatorKind kind_;
  std::shared_ptr<SpectralDerivative> deriv_;
};

inline DiscreteOperator discretize(const Medium& medium, const Grid& grid, OperatorKind kind = OperatorKind::periodic) {
  (void)grid.cells(medium.period());
  return DiscreteOperator(DiscreteWeight::from_medium(medium, grid), kind);
}

inline DiscreteOperator discretize(const JunctionSystem& sys, const Grid& grid, OperatorKind kind = OperatorKind::full) {
  switch (kind) {
    case OperatorKind::free_left: return discretize(sys.left(), grid, kind);
    case OperatorKind::free_right: return discretize(sys.right(), grid, kind);
    default: return DiscreteOperator(DiscreteWeight::from_junction(sys, grid), OperatorKind::full);
  }
}

/// Symmetry defect |<a, M b> - <M a, b>| / (|a| |b|).
inline double symmetry_defect(const DiscreteOperator& op, const StateVector& a, const StateVector& b) {
  const cplx l = weighted_inner(a, op.apply(b));
  const cplx r = weighted_inner(op.apply(a), b);
  return std::abs(l - r) / (weighted_norm(a) * weighted_norm(b));
}

struct PropagatorConfig {
  double dt = 0.0;                 // <= 0: 0.05 / max|lambda| on the grid
  double tolerance = 1e-14;        // relative residual of the linear solves
  int max_iterations = 500;        // per linear solve
  long max_steps = 100000000;
  double boundary_alarm = 1e-4;    // fraction of mass allowed in the outer 5%; <= 0 disables
  double reference_mass = 0.0;     // mass the alarm fraction refers to; <= 0: the state's own
  std::function<void(double, const StateVector&)> observer;  // called after every step
};

struct PropagationStats {
  long steps = 0;
  double dt = 0.0;
  long iterations = 0;
  double max_boundary_fraction = 0.0;
};

/// Weighted mass in the outer 5% of the domain over `reference` (the state's
/// own mass when reference <= 0).
inline double boundary_fraction(const StateVector& s, double reference = 0.0) {
  const double L = s.grid().half_length();
  const double outer = weighted_mass(s, [L](double x) { return std::abs(x) > 0.95 * L; });
  const double total = reference > 0.0 ? reference : weighted_norm_squared(s);
  return total > 0.0 ? outer / total : 0.0;
}

/// psi(t) = e^{-i t M} psi by Crank-Nicolson. Each step solves
/// (I + tau^2 M^2) z = (I - i tau M) psi by conjugate gradients in the
/// weighted product and sets psi+ = (I - i tau M) z, tau = dt / 2.
inline StateVector propagate_full(const StateVector& state, const DiscreteOperator& op, double t,
                                  const PropagatorConfig& cfg = {}, PropagationStats* stats = nullptr) {
  require_same_context(state, StateVector(op.weight()));
  double dt = cfg.dt > 0.0 ? cfg.dt : 0.05 / op.max_frequency();
  long n = static_cast<long>(std::ceil(std::abs(t) / dt - 1e-9));
  if (t == 0.0) n = 0;
  if (n > cfg.max_steps) fail(error_kind::boundary_contamination, "time budget exceeds the step limit");
  const double step = n > 0 ? t / static_cast<double>(n) : 0.0;
  const double tau = 0.5 * step;
  const auto& c = op.weight()->constitutive();
  const double h = op.grid().spacing();
  auto dot = [&](const Eigen::VectorXcd& ae, const Eigen::VectorXcd& ah, const Eigen::VectorXcd& be,
                 const Eigen::VectorXcd& bh) { return weighted_inner_with(c, h, ae, ah, be, bh); };

  StateVector psi = state;
  const int N = psi.size();
  Eigen::VectorXcd me(N), mh(N), m2e(N), m2h(N), re(N), rh(N), pe(N), ph(N), ape(N), aph(N), ze(N), zh(N), be(N), bh(N);
  auto apply_A = [&](const Eigen::VectorXcd& xe, const Eigen::VectorXcd& xh, Eigen::VectorXcd& oe, Eigen::VectorXcd& oh) {
    op.apply(xe, xh, me, mh);
    op.apply(me, mh, m2e, m2h);
    oe = xe + tau * tau * m2e;
    oh = xh + tau * tau * m2h;
  };
  PropagationStats st;
  st.dt = step;
  for (long s = 0; s < n; ++s) {
    op.apply(psi.e, psi.h, me, mh);
    be = psi.e - cplx(0.0, tau) * me;
    bh = psi.h - cplx(0.0, tau) * mh;
    const double bnorm = std::sqrt(dot(be, bh, be, bh).real());
    if (bnorm == 0.0) {
      psi.e.setZero();
      psi.h.setZero();
    } else {
      ze = be;
      zh = bh;
      apply_A(ze, zh, ape, aph);
      re = be - ape;
      rh = bh - aph;
      pe = re;
      ph = rh;
      double rr = dot(re, rh, re, rh).real();
      int it = 0;
      const double goal = cfg.tolerance * bnorm;
      while (std::sqrt(rr) > goal) {
        if (++it > cfg.max_iterations)
          fail(error_kind::solver_divergence, "conjugate gradients did not reach the tolerance");
        apply_A(pe, ph, ape, aph);
        const double pap = dot(pe, ph, ape, aph).real();
        if (!(pap > 0.0) || !std::isfinite(pap)) fail(error_kind::solver_divergence, "conjugate gradients broke down");
        const double alpha = rr / pap;
        ze += alpha * pe;
        zh += alpha * ph;
        re -= alpha * ape;
        rh -= alpha * aph;
        const double rr_new = dot(re, rh, re, rh).real();
        if (!std::isfinite(rr_new)) fail(error_kind::solver_divergence, "residual is not finite");
        pe = re + (rr_new / rr) * pe;
        ph = rh + (rr_new / rr) * ph;
        rr = rr_new;
      }
      st.iterations += it;
      op.apply(ze, zh, me, mh);
      psi.e = ze - cplx(0.0, tau) * me;
      psi.h = zh - cplx(0.0, tau) * mh;
    }
    ++st.steps;
    if (cfg.boundary_alarm > 0.0) {
      const double f = boundary_fraction(psi, cfg.reference_mass);
      st.max_boundary_fraction = std::max(st.max_boundary_fraction, f);
      if (f > cfg.boundary_alarm)
        fail(error_kind::boundary_contamination,
             "mass fraction " + std::to_string(f) + " reached the outer 5% of the domain at t = " +
                 std::to_string((s + 1) * step));
    }
    if (cfg.observer) cfg.observer((s + 1) * step, psi);
  }
  if (stats) *stats = st;
  return psi;
}

/// Exact evolution e^{-i t M_h} of the periodic discretization via Bloch phases.
inline StateVector propagate_free(const StateVector& state, std::shared_ptr<const BlochBasis> basis, double t) {
  BlochExpansion ex = bloch_analyze(state, basis);
  for (int j = 0; j < basis->cells(); ++j) {
    const auto& lam = basis->values(j);
    for (int c = 0; c < basis->modes(); ++c) ex.coefficients(c, j) *= std::exp(cplx(0.0, -t * lam(c)));
  }
  return bloch_synthesize(ex);
}

/// <psi, M psi>_w for the periodic discretization, via Bloch coefficients.
inline double free_energy(const BlochExpansion& ex) {
  double acc = 0.0;
  for (int j = 0; j < ex.basis->cells(); ++j)
    for (int c = 0; c < ex.basis->modes(); ++c) acc += std::norm(ex.coefficients(c, j)) * ex.basis->values(j)(c);
  return acc;
}

struct WavepacketSpec {
  int band = 1;              // see BlochBasis::band_of
  double k0 = 0.0;
  double sigma_k = 0.05;
  int velocity_sign = 0;     // +1, -1, or 0 for no requirement
  std::optional<Interval> window;
  double center = 0.0;       // position the envelope is centred on
  double min_speed = 1e-6;   // |lambda'| below this counts as a threshold
};

struct Wavepacket {
  StateVector state;
  BlochExpansion expansion;
  double mean_energy = 0.0;
  double mean_velocity = 0.0;
  double leakage = 0.0;      // Parseval weight with lambda outside the window
  double k_min = 0.0, k_max = 0.0;
};

/// Gaussian superposition of Bloch modes of one band, truncated at 4 sigma,
/// normalized to unit weighted norm. Mode phases are fixed by parallel
/// transport from the fiber nearest k0 so the envelope is coherent.
inline Wavepacket make_wavepacket(std::shared_ptr<const BlochBasis> basis, const WavepacketSpec& spec) {
  const double zone = pi / basis->period();
  if (!(spec.sigma_k > 0.0)) fail(error_kind::invalid_argument, "sigma_k must be positive");
  if (std::abs(spec.k0) > zone * (1 + 1e-12)) fail(error_kind::out_of_domain, "k0 outside the Brillouin zone");
  const int col = basis->column_of(spec.band);
  const int ncell = basis->cells();
  // quasi-momenta are periodic: offsets from k0 wrap across the zone edge
  auto offset = [&](int j) { return std::remainder(basis->k(j) - spec.k0, 2.0 * zone); };
  std::vector<int> support;
  for (int j = 0; j < ncell; ++j)
    if (std::abs(offset(j)) <= 4.0 * spec.sigma_k * (1 + 1e-12)) support.push_back(j);
  if (support.empty()) fail(error_kind::window_violation, "no grid quasi-momentum within 4 sigma of k0");
  std::sort(support.begin(), support.end(), [&](int a, int b) { return offset(a) < offset(b); });
  const double v_first = basis->velocities(support.front())(col);
  for (int j : support) {
    const double v = basis->velocities(j)(col);
    if (std::abs(v) < spec.min_speed || (v > 0) != (v_first > 0))
      fail(error_kind::window_violation, "packet support touches a threshold near k = " + std::to_string(basis->k(j)));
    if (spec.velocity_sign != 0 && (v > 0) != (spec.velocity_sign > 0))
      fail(error_kind::window_violation, "band velocity has the wrong sign near k = " + std::to_string(basis->k(j)));
    if (spec.window && !spec.window->contains(basis->values(j)(col)))
      fail(error_kind::window_violation, "band energy leaves the window near k = " + std::to_string(basis->k(j)));
  }
  const int nc = basis->cell_points();
  const auto& cmat = basis->weight()->constitutive();
  const auto& s = basis->weight()->cholesky();
  // periodic parts u = S v in a common cell representation, for gauge fixing
  auto cell_vector = [&](int j) {
    Eigen::VectorXcd u(2 * nc);
    const Eigen::VectorXcd v = basis->vectors(j).col(col);
    for (int i = 0; i < nc; ++i) {
      const Vec2 si = s[i] * Vec2(v(i), v(nc + i));
      u(i) = si(0);
      u(nc + i) = si(1);
    }
    return u;
  };
  auto cell_inner = [&](const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) {
    cplx acc = 0.0;
    for (int i = 0; i < nc; ++i) acc += Vec2(a(i), a(nc + i)).dot(cmat[i] * Vec2(b(i), b(nc + i)));
    return acc;
  };
  std::size_t ref = 0;
  for (std::size_t q = 1; q < support.size(); ++q)
    if (std::abs(offset(support[q])) < std::abs(offset(support[ref]))) ref = q;
  std::vector<cplx> gauge(support.size(), 1.0);
  std::vector<Eigen::VectorXcd> u(support.size());
  for (std::size_t q = 0; q < support.size(); ++q) u[q] = cell_vector(support[q]);
  for (std::size_t q = ref + 1; q < support.size(); ++q) {
    const cplx o = cell_inner(u[q - 1], u[q]);
    gauge[q] = std::abs(o) > 0 ? gauge[q - 1] * std::conj(o) / std::abs(o) : gauge[q - 1];
  }
  for (std::size_t q = ref; q-- > 0;) {
    const cplx o = cell_inner(u[q + 1], u[q]);
    gauge[q] = std::abs(o) > 0 ? gauge[q + 1] * std::conj(o) / std::abs(o) : gauge[q + 1];
  }
  BlochExpansion ex{basis, Eigen::MatrixXcd::Zero(basis->modes(), ncell)};
  const double x0 = basis->grid().x(0);
  for (std::size_t q = 0; q < support.size(); ++q) {
    const int j = support[q];
    const double k = basis->k(j);
    const double dk = offset(j);
    const double g = std::exp(-0.5 * dk * dk / (spec.sigma_k * spec.sigma_k));
    ex.coefficients(col, j) = g * gauge[q] * std::exp(cplx(0.0, k * (x0 - spec.center)));
  }
  ex.coefficients /= std::sqrt(ex.coefficients.squaredNorm());
  Wavepacket wp{bloch_synthesize(ex), ex};
  double e = 0, v = 0, leak = 0;
  for (int j : support) {
    const double wgt = std::norm(ex.coefficients(col, j));
    e += wgt * basis->values(j)(col);
    v += wgt * basis->velocities(j)(col);
    if (spec.window && !spec.window->contains(basis->values(j)(col))) leak += wgt;
  }
  wp.mean_energy = e;
  wp.mean_velocity = v;
  wp.leakage = leak;
  wp.k_min = basis->k(support.front());
  wp.k_max = basis->k(support.back());
  return wp;
}

}  // namespace phc

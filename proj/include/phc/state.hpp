#pragma once

// Spatial grids, sampled weights and states of the weighted Hilbert space.

#include "core.hpp"
#include "media.hpp"

#include <memory>
#include <optional>
#include <random>

namespace phc {

/// Periodic grid x_i = -L + i h, h = 2L / n, n a power of two.
class Grid {
 public:
  Grid() = default;
  Grid(double half_length, int points) : L_(half_length), n_(points) {
    if (!(half_length > 0.0) || !std::isfinite(half_length)) fail(error_kind::invalid_argument, "grid half-length must be positive");
    if (points < 2 || (points & (points - 1)) != 0)
      fail(error_kind::invalid_argument, "grid point count must be a power of two");
  }

  /// Grid spanning `cells` periods with `per_cell` points each.
  static Grid periodic(double period, int cells, int per_cell) { return Grid(0.5 * period * cells, cells * per_cell); }

  double half_length() const { return L_; }
  int size() const { return n_; }
  double length() const { return 2.0 * L_; }
  double spacing() const { return 2.0 * L_ / n_; }
  double x(int i) const { return -L_ + i * spacing(); }

  std::vector<double> points() const {
    std::vector<double> xs(static_cast<std::size_t>(n_));
    for (int i = 0; i < n_; ++i) xs[i] = x(i);
    return xs;
  }

  /// Number of whole periods in the domain, with grid points per cell
  /// dividing evenly; throws IncommensurateDomain otherwise.
  int cells(double period) const {
    const double r = length() / period;
    const double c = std::round(r);
    if (c < 1.0 || std::abs(r - c) > 1e-9 * std::max(1.0, r))
      fail(error_kind::incommensurate_domain, "domain length " + std::to_string(length()) +
                                                  " is not a multiple of the period " + std::to_string(period));
    const int nc = static_cast<int>(c);
    if (n_ % nc != 0)
      fail(error_kind::incommensurate_domain, "grid points do not divide evenly into " + std::to_string(nc) + " cells");
    return nc;
  }

  bool commensurate(double period) const {
    try {
      (void)cells(period);
      return true;
    } catch (const error&) {
      return false;
    }
  }

  friend bool operator==(const Grid& a, const Grid& b) { return a.L_ == b.L_ && a.n_ == b.n_; }

 private:
  double L_ = 1.0;
  int n_ = 2;
};

/// Weight sampled on a grid: w, its inverse C and the Cholesky factor S of w.
/// Each point carries the cell average of C over [x - h/2, x + h/2].
class DiscreteWeight {
 public:
  static std::shared_ptr<const DiscreteWeight> from_constitutive(const Grid& g, std::vector<Mat2> c, std::string label) {
    auto d = std::shared_ptr<DiscreteWeight>(new DiscreteWeight());
    d->grid_ = g;
    d->label_ = std::move(label);
    if (static_cast<int>(c.size()) != g.size()) fail(error_kind::grid_mismatch, "sample count differs from grid size");
    d->c_ = std::move(c);
    d->finish();
    return d;
  }

  static std::shared_ptr<const DiscreteWeight> from_medium(const Medium& m, const Grid& g, std::string label = "medium") {
    const double h = g.spacing();
    std::vector<Mat2> c(static_cast<std::size_t>(g.size()));
    int period_pts = g.size();
    if (g.commensurate(m.period())) period_pts = g.size() / g.cells(m.period());
    if (m.homogeneous()) period_pts = 1;
    for (int i = 0; i < period_pts; ++i) c[i] = m.averaged_constitutive(g.x(i) - 0.5 * h, g.x(i) + 0.5 * h);
    for (int i = period_pts; i < g.size(); ++i) c[i] = c[i % period_pts];
    auto d = from_constitutive(g, std::move(c), std::move(label));
    return d;
  }

  /// Full junction weight. Where w coincides with a medium the medium's own
  /// tiled samples are reused, so both contexts agree exactly there.
  static std::shared_ptr<const DiscreteWeight> from_junction(const JunctionSystem& sys, const Grid& g,
                                                             std::string label = "junction") {
    const auto left = from_medium(sys.left(), g);
    const auto right = from_medium(sys.right(), g);
    const double h = g.spacing();
    std::vector<Mat2> c(static_cast<std::size_t>(g.size()));
    for (int i = 0; i < g.size(); ++i) {
      const double a = g.x(i) - 0.5 * h, b = g.x(i) + 0.5 * h;
      if (sys.purely_left(a, b))
        c[i] = left->constitutive()[i];
      else if (sys.purely_right(a, b))
        c[i] = right->constitutive()[i];
      else
        c[i] = sys.averaged_constitutive(a, b);
    }
    return from_constitutive(g, std::move(c), std::move(label));
  }

  const Grid& grid() const { return grid_; }
  const std::string& label() const { return label_; }
  const std::vector<Mat2>& weight() const { return w_; }
  const std::vector<Mat2>& constitutive() const { return c_; }
  const std::vector<Mat2>& cholesky() const { return s_; }
  double c0() const { return c0_; }
  double c1() const { return c1_; }

  bool same_samples(const DiscreteWeight& o) const {
    if (!(grid_ == o.grid_)) return false;
    for (std::size_t i = 0; i < c_.size(); ++i)
      if (c_[i] != o.c_[i]) return false;
    return true;
  }

 private:
  DiscreteWeight() = default;

  void finish() {
    w_.resize(c_.size());
    s_.resize(c_.size());
    c0_ = std::numeric_limits<double>::infinity();
    c1_ = 0.0;
    for (std::size_t i = 0; i < c_.size(); ++i) {
      c_[i] = symmetrize(c_[i]);
      w_[i] = hermitian_inverse(c_[i]);
      s_[i] = cholesky_lower(w_[i]);
      const auto [lo, hi] = hermitian_eigenvalues(w_[i]);
      c0_ = std::min(c0_, lo);
      c1_ = std::max(c1_, hi);
    }
  }

  Grid grid_;
  std::string label_;
  std::vector<Mat2> c_, w_, s_;
  double c0_ = 0.0, c1_ = 0.0;
};

using WeightPtr = std::shared_ptr<const DiscreteWeight>;

/// C^2-valued samples with the weighted product <a, b> = h sum a^dagger C b.
struct StateVector {
  WeightPtr weight;
  Eigen::VectorXcd e;
  Eigen::VectorXcd h;

  StateVector() = default;
  explicit StateVector(WeightPtr w) : weight(std::move(w)) {
    const int n = weight->grid().size();
    e = Eigen::VectorXcd::Zero(n);
    h = Eigen::VectorXcd::Zero(n);
  }
  StateVector(WeightPtr w, Eigen::VectorXcd e_, Eigen::VectorXcd h_) : weight(std::move(w)), e(std::move(e_)), h(std::move(h_)) {
    if (e.size() != weight->grid().size() || h.size() != weight->grid().size())
      fail(error_kind::grid_mismatch, "state size differs from grid size");
  }

  const Grid& grid() const { return weight->grid(); }
  int size() const { return static_cast<int>(e.size()); }
  Vec2 at(int i) const { return Vec2(e(i), h(i)); }

  StateVector& operator+=(const StateVector& o) {
    e += o.e;
    h += o.h;
    return *this;
  }
  StateVector& operator-=(const StateVector& o) {
    e -= o.e;
    h -= o.h;
    return *this;
  }
  StateVector& operator*=(cplx s) {
    e *= s;
    h *= s;
    return *this;
  }
  friend StateVector operator+(StateVector a, const StateVector& b) { return a += b; }
  friend StateVector operator-(StateVector a, const StateVector& b) { return a -= b; }
  friend StateVector operator*(cplx s, StateVector a) { return a *= s; }

  /// Same samples interpreted in another weight context on the same grid.
  StateVector in_context(WeightPtr w) const {
    if (!(w->grid() == grid())) fail(error_kind::grid_mismatch, "context change across grids");
    return StateVector(std::move(w), e, h);
  }

  static StateVector random(WeightPtr w, std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    StateVector s(std::move(w));
    for (int i = 0; i < s.size(); ++i) {
      s.e(i) = cplx(nd(rng), nd(rng));
      s.h(i) = cplx(nd(rng), nd(rng));
    }
    return s;
  }
};

inline void require_same_context(const StateVector& a, const StateVector& b) {
  if (a.weight == b.weight) return;
  if (!a.weight || !b.weight || !a.weight->same_samples(*b.weight))
    fail(error_kind::context_mismatch, "states belong to different weighted spaces");
}

/// Weighted product with weights taken from `c`, conjugate-linear in a.
inline cplx weighted_inner_with(const std::vector<Mat2>& c, double h, const Eigen::VectorXcd& ae, const Eigen::VectorXcd& ah,
                                const Eigen::VectorXcd& be, const Eigen::VectorXcd& bh) {
  cplx acc = 0.0;
  for (Eigen::Index i = 0; i < ae.size(); ++i) {
    const Mat2& m = c[static_cast<std::size_t>(i)];
    const cplx ce = m(0, 0) * be(i) + m(0, 1) * bh(i);
    const cplx ch = m(1, 0) * be(i) + m(1, 1) * bh(i);
    acc += std::conj(ae(i)) * ce + std::conj(ah(i)) * ch;
  }
  return h * acc;
}

inline cplx weighted_inner(const StateVector& a, const StateVector& b) {
  require_same_context(a, b);
  return weighted_inner_with(a.weight->constitutive(), a.grid().spacing(), a.e, a.h, b.e, b.h);
}

/// Pointwise weighted density phi^dagger C phi.
inline std::vector<double> weighted_density(const StateVector& s) {
  const auto& c = s.weight->constitutive();
  std::vector<double> d(static_cast<std::size_t>(s.size()));
  for (int i = 0; i < s.size(); ++i) {
    const Vec2 v = s.at(i);
    d[i] = v.dot(c[i] * v).real();
  }
  return d;
}

inline double weighted_norm_squared(const StateVector& s) {
  double acc = 0.0;
  for (double v : weighted_density(s)) acc += v;
  return acc * s.grid().spacing();
}

inline double weighted_norm(const StateVector& s) { return std::sqrt(weighted_norm_squared(s)); }

/// Flat discrete L^2 norm squared, h sum |phi|^2.
inline double flat_norm_squared(const StateVector& s) { return s.grid().spacing() * (s.e.squaredNorm() + s.h.squaredNorm()); }

/// Weighted mass in a set of grid points selected by `keep(x)`.
template <class Pred>
double weighted_mass(const StateVector& s, Pred keep) {
  const auto d = weighted_density(s);
  double acc = 0.0;
  for (int i = 0; i < s.size(); ++i)
    if (keep(s.grid().x(i))) acc += d[i];
  return acc * s.grid().spacing();
}

/// <phi, x phi>_w / ||phi||_w^2.
inline double position_mean(const StateVector& s) {
  const auto d = weighted_density(s);
  double num = 0.0, den = 0.0;
  for (int i = 0; i < s.size(); ++i) {
    num += s.grid().x(i) * d[i];
    den += d[i];
  }
  return num / den;
}

}  // namespace phc

#pragma once

// Discrete Bloch-Floquet transform on a periodic grid.
//
// A grid of N_cell periods with n_c points per period decomposes into N_cell
// fibers k_j = 2 pi j / (N_cell p), folded into [-pi/p, pi/p). In fiber j a
// state reads psi(c, i) = N_cell^{-1/2} e^{i k_j (c p + i h)} u(i), and the
// discretized operator acts on u as w D_j with D_j built from the same
// spectral derivative as the real-space operator. Bloch coefficients are
// weighted projections onto the eigenvectors of the reduced fiber matrices
// S^dagger D_j S, so the transform is exactly unitary.

#include "core.hpp"
#include "fft.hpp"
#include "media.hpp"
#include "state.hpp"

#include <memory>
#include <optional>

namespace phc {

/// Spectral wavenumber of grid Fourier index q in (-pi/h, pi/h]. The Nyquist
/// mode keeps +pi/h: zeroing it would add a second extended kernel vector
/// that couples to localized states with strength ~ 1/sqrt(L).
inline double grid_wavenumber(long q, int n, double length) {
  long r = ((q % n) + n) % n;
  if (2 * r > n) r -= n;
  return 2.0 * pi * static_cast<double>(r) / length;
}

class BlochBasis {
 public:
  BlochBasis(const Medium& medium, const Grid& grid, int threads = 0)
      : period_(medium.period()), grid_(grid) {
    ncell_ = grid.cells(period_);
    nc_ = grid.size() / ncell_;
    weight_ = DiscreteWeight::from_medium(medium, grid);
    const auto& w = weight_->weight();
    const auto& s = weight_->cholesky();
    const int n = nc_;
    // intra-cell unitary DFT
    Eigen::MatrixXcd F(n, n);
    for (int m = 0; m < n; ++m)
      for (int i = 0; i < n; ++i) F(m, i) = std::exp(cplx(0.0, -2.0 * pi * m * i / n)) / std::sqrt(double(n));
    // velocity operator S^dagger offdiag(I, I) S, pointwise
    Eigen::MatrixXcd vel = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
    Mat2 sigma;
    sigma << 0.0, 1.0, 1.0, 0.0;
    for (int i = 0; i < n; ++i) {
      const Mat2 b = s[i].adjoint() * sigma * s[i];
      vel(i, i) = b(0, 0);
      vel(i, n + i) = b(0, 1);
      vel(n + i, i) = b(1, 0);
      vel(n + i, n + i) = b(1, 1);
    }
    (void)w;
    fibers_.resize(static_cast<std::size_t>(ncell_));
    parallel_for(fibers_.size(), threads, [&](std::size_t jj) {
      const int j = static_cast<int>(jj);
      Fiber& f = fibers_[jj];
      f.j = folded_index(j);
      f.k = 2.0 * pi * f.j / (ncell_ * period_);
      Eigen::VectorXd kap(n);
      for (int m = 0; m < n; ++m) kap(m) = grid_wavenumber(long(f.j) + long(ncell_) * m, grid_.size(), grid_.length());
      const Eigen::MatrixXcd P = F.adjoint() * kap.asDiagonal() * F;
      // H = S^dagger offdiag(P, P) S
      Eigen::MatrixXcd D = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
      D.topRightCorner(n, n) = P;
      D.bottomLeftCorner(n, n) = P;
      Eigen::MatrixXcd Sb = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
      for (int i = 0; i < n; ++i) {
        Sb(i, i) = s[i](0, 0);
        Sb(i, n + i) = s[i](0, 1);
        Sb(n + i, i) = s[i](1, 0);
        Sb(n + i, n + i) = s[i](1, 1);
      }
      Eigen::MatrixXcd H = Sb.adjoint() * D * Sb;
      H = (0.5 * (H + H.adjoint())).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
      f.values = es.eigenvalues();
      f.vectors = es.eigenvectors();
      const Eigen::MatrixXcd VX = vel * f.vectors;
      f.velocities.resize(2 * n);
      for (int c = 0; c < 2 * n; ++c) f.velocities(c) = f.vectors.col(c).dot(VX.col(c)).real();
      const double tol = 1e-8 * std::max(1.0, f.values(2 * n - 1) - f.values(0));
      int a = 0;
      while (a < 2 * n) {
        int b = a + 1;
        while (b < 2 * n && f.values(b) - f.values(b - 1) < tol) ++b;
        if (b - a > 1) {
          Eigen::MatrixXcd sub = f.vectors.middleCols(a, b - a).adjoint() * VX.middleCols(a, b - a);
          sub = (0.5 * (sub + sub.adjoint())).eval();
          Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ss(sub);
          f.vectors.middleCols(a, b - a) = (f.vectors.middleCols(a, b - a) * ss.eigenvectors()).eval();
          f.velocities.segment(a, b - a) = ss.eigenvalues();
        }
        a = b;
      }
    });
  }

  double period() const { return period_; }
  const Grid& grid() const { return grid_; }
  int cells() const { return ncell_; }
  int cell_points() const { return nc_; }
  int modes() const { return 2 * nc_; }
  const WeightPtr& weight() const { return weight_; }

  /// Fiber storage index of unfolded index j in [0, N_cell).
  double k(int j) const { return fibers_[j].k; }
  const Eigen::VectorXd& values(int j) const { return fibers_[j].values; }
  const Eigen::MatrixXcd& vectors(int j) const { return fibers_[j].vectors; }
  const Eigen::VectorXd& velocities(int j) const { return fibers_[j].velocities; }

  /// Band number of sorted column c: 1, 2, ... above the spectral midpoint,
  /// -1, -2, ... below it.
  int band_of(int c) const { return c >= nc_ ? c - nc_ + 1 : c - nc_; }
  int column_of(int band) const {
    if (band == 0 || std::abs(band) > nc_) fail(error_kind::invalid_argument, "band index out of range");
    return band > 0 ? nc_ + band - 1 : nc_ + band;
  }

 private:
  int folded_index(int j) const { return 2 * j >= ncell_ ? j - ncell_ : j; }

  struct Fiber {
    int j = 0;
    double k = 0.0;
    Eigen::VectorXd values;
    Eigen::MatrixXcd vectors;
    Eigen::VectorXd velocities;
  };

  double period_;
  Grid grid_;
  int ncell_ = 1;
  int nc_ = 1;
  WeightPtr weight_;
  std::vector<Fiber> fibers_;
};

/// Coefficients: column j holds the 2 n_c mode amplitudes of fiber j.
struct BlochExpansion {
  std::shared_ptr<const BlochBasis> basis;
  Eigen::MatrixXcd coefficients;

  double total_weight() const { return coefficients.squaredNorm(); }
  /// Parseval weight in band `band` (see BlochBasis::band_of).
  double band_weight(int band) const { return coefficients.row(basis->column_of(band)).squaredNorm(); }
};

namespace detail {
// phase e^{i k_j (c p + i h)} with cell-major grid index c n_c + i
inline cplx bloch_phase(const BlochBasis& b, int j, int i) { return std::exp(cplx(0.0, b.k(j) * i * b.grid().spacing())); }
}  // namespace detail

inline BlochExpansion bloch_analyze(const StateVector& state, std::shared_ptr<const BlochBasis> basis) {
  require_same_context(state, StateVector(basis->weight()));
  const int ncell = basis->cells(), nc = basis->cell_points();
  const double h = basis->grid().spacing();
  const auto& s = basis->weight()->cholesky();
  const auto plan = plan_for(ncell);
  // per intra-cell point: FFT over cells of S^{-1} phi
  Eigen::MatrixXcd ye(ncell, nc), yh(ncell, nc);
  Eigen::VectorXcd ie(ncell), ih(ncell), oe(ncell), oh(ncell);
  for (int i = 0; i < nc; ++i) {
    const Mat2& si = s[i];
    for (int c = 0; c < ncell; ++c) {
      const int g = c * nc + i;
      // lower-triangular solve S y = phi
      const cplx y0 = state.e(g) / si(0, 0);
      const cplx y1 = (state.h(g) - si(1, 0) * y0) / si(1, 1);
      ie(c) = y0;
      ih(c) = y1;
    }
    plan->forward(ie.data(), oe.data());
    plan->forward(ih.data(), oh.data());
    ye.col(i) = oe;
    yh.col(i) = oh;
  }
  BlochExpansion out{basis, Eigen::MatrixXcd(2 * nc, ncell)};
  const double scale = std::sqrt(h / ncell);
  Eigen::VectorXcd y(2 * nc);
  for (int j = 0; j < ncell; ++j) {
    for (int i = 0; i < nc; ++i) {
      const cplx ph = std::conj(detail::bloch_phase(*basis, j, i));
      y(i) = ye(j, i) * ph;
      y(nc + i) = yh(j, i) * ph;
    }
    out.coefficients.col(j) = scale * (basis->vectors(j).adjoint() * y);
  }
  return out;
}

inline StateVector bloch_synthesize(const BlochExpansion& ex) {
  const auto& basis = *ex.basis;
  const int ncell = basis.cells(), nc = basis.cell_points();
  const double h = basis.grid().spacing();
  const auto& s = basis.weight()->cholesky();
  if (ex.coefficients.rows() != 2 * nc || ex.coefficients.cols() != ncell)
    fail(error_kind::incommensurate_domain, "expansion shape does not match the Bloch basis");
  Eigen::MatrixXcd ye(ncell, nc), yh(ncell, nc);
  const double scale = std::sqrt(double(ncell) / h) / ncell;
  for (int j = 0; j < ncell; ++j) {
    const Eigen::VectorXcd y = basis.vectors(j) * ex.coefficients.col(j);
    for (int i = 0; i < nc; ++i) {
      const cplx ph = detail::bloch_phase(basis, j, i) * scale;
      ye(j, i) = y(i) * ph;
      yh(j, i) = y(nc + i) * ph;
    }
  }
  StateVector out(basis.weight());
  const auto plan = plan_for(ncell);
  Eigen::VectorXcd ie(ncell), ih(ncell), oe(ncell), oh(ncell);
  for (int i = 0; i < nc; ++i) {
    ie = ye.col(i);
    ih = yh.col(i);
    plan->backward(ie.data(), oe.data());
    plan->backward(ih.data(), oh.data());
    const Mat2& si = s[i];
    for (int c = 0; c < ncell; ++c) {
      const int g = c * nc + i;
      out.e(g) = si(0, 0) * oe(c) + si(0, 1) * oh(c);
      out.h(g) = si(1, 0) * oe(c) + si(1, 1) * oh(c);
    }
  }
  return out;
}

}  // namespace phc

#pragma once

// Thresholds, band/gap bookkeeping, Mourre constants, the flat-band
// certificate and gap eigenvalues of the junction operator.

#include "bands.hpp"
#include "bloch_transform.hpp"
#include "core.hpp"
#include "media.hpp"
#include "state.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <random>
#include <string>

namespace phc {

struct Threshold {
  double lambda = 0.0;
  int band = 0;
  double k = 0.0;
  double curvature = 0.0;  // |lambda''|
};

struct ThresholdSet {
  std::vector<Threshold> entries;
  std::string medium;

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
  /// Distance from lambda to the nearest threshold (infinity if none).
  double distance(double lambda) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& t : entries) d = std::min(d, std::abs(t.lambda - lambda));
    return d;
  }
};

struct ThresholdOptions {
  double tolerance = 1e-9;  // |lambda'| at an accepted root
  double bracket = 1e-10;   // final k-bracket width
  double stencil = 1e-3;    // step of the curvature stencil
  double merge = 1e-9;      // thresholds closer than this in lambda are merged
};

namespace detail {

inline double branch_curvature(const FiberBasis& basis, const Eigen::VectorXcd& ref, double k, double h) {
  const double zone = pi / basis.period();
  auto val = [&](double kk) {
    // even reflection across the zone boundary keeps the stencil inside
    if (kk > zone) kk = 2 * zone - kk;
    if (kk < -zone) kk = -2 * zone - kk;
    return follow_branch(basis, ref, kk).lambda;
  };
  const double f0 = val(k), f1 = val(k + h), f_1 = val(k - h), f2 = val(k + 2 * h), f_2 = val(k - 2 * h);
  return std::abs((-f2 + 16 * f1 - 30 * f0 + 16 * f_1 - f_2) / (12 * h * h));
}

}  // namespace detail

/// Critical values of every tracked band: sign changes of lambda' on the grid
/// refined by a bracketing root finder, plus grid points (notably the zone
/// centre and edges) where lambda' already vanishes.
inline ThresholdSet find_thresholds(const BandStructure& bs, const ThresholdOptions& opt = {}) {
  if (bs.eigvecs.empty() || !bs.basis) fail(error_kind::missing_eigenvectors, "thresholds need eigenvectors");
  ThresholdSet out;
  const auto& basis = *bs.basis;
  const std::size_t nk = bs.kgrid.size();
  auto add = [&](int b, double k, double lambda, const Eigen::VectorXcd& vec) {
    for (const auto& t : out.entries)
      if (std::abs(t.lambda - lambda) < opt.merge) return;
    out.entries.push_back({lambda, b, k, detail::branch_curvature(basis, vec, k, opt.stencil)});
  };
  for (int b = 0; b < bs.n_bands(); ++b) {
    const auto& v = bs.velocities[b];
    for (std::size_t i = 0; i < nk; ++i) {
      if (std::abs(v[i]) < opt.tolerance) add(b, bs.kgrid[i], bs.bands[b][i], bs.eigvecs[b][i]);
    }
    for (std::size_t i = 0; i + 1 < nk; ++i) {
      if (std::abs(v[i]) < opt.tolerance || std::abs(v[i + 1]) < opt.tolerance) continue;
      if ((v[i] > 0) == (v[i + 1] > 0)) continue;
      const Eigen::VectorXcd ref = bs.eigvecs[b][i];
      auto f = [&](double k) { return follow_branch(basis, ref, k).velocity; };
      boost::uintmax_t it = 100;
      auto tol = [&](double a, double c) { return std::abs(c - a) < opt.bracket; };
      const auto r = boost::math::tools::toms748_solve(f, bs.kgrid[i], bs.kgrid[i + 1], v[i], v[i + 1], tol, it);
      const double k = 0.5 * (r.first + r.second);
      const BranchPoint p = follow_branch(basis, ref, k);
      if (std::abs(p.velocity) > std::max(opt.tolerance, 1e3 * opt.tolerance)) continue;  // a crossing, not a root
      add(b, k, p.lambda, p.vector);
    }
  }
  std::sort(out.entries.begin(), out.entries.end(), [](const Threshold& a, const Threshold& c) { return a.lambda < c.lambda; });
  return out;
}

/// Spectral bands of one medium clipped to a window, with the gaps between.
struct MediumSpectrum {
  Interval window;
  std::vector<Interval> bands;
  std::vector<Interval> gaps;
};

namespace detail {

inline std::vector<Interval> merge_intervals(std::vector<Interval> v, double tol) {
  std::sort(v.begin(), v.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo || (a.lo == b.lo && a.hi < b.hi); });
  std::vector<Interval> out;
  for (const auto& iv : v) {
    if (!out.empty() && iv.lo <= out.back().hi + tol)
      out.back().hi = std::max(out.back().hi, iv.hi);
    else
      out.push_back(iv);
  }
  return out;
}

inline std::vector<Interval> complement(const std::vector<Interval>& bands, Interval window) {
  std::vector<Interval> gaps;
  double cur = window.lo;
  for (const auto& b : bands) {
    if (b.lo > cur) gaps.push_back({cur, b.lo});
    cur = std::max(cur, b.hi);
  }
  if (cur < window.hi) gaps.push_back({cur, window.hi});
  return gaps;
}

inline std::vector<Interval> clip(const std::vector<Interval>& v, Interval w) {
  std::vector<Interval> out;
  for (const auto& iv : v) {
    const double lo = std::max(iv.lo, w.lo), hi = std::min(iv.hi, w.hi);
    if (hi >= lo) out.push_back({lo, hi});
  }
  return out;
}

}  // namespace detail

/// Band ranges [min_k, max_k] per band, using threshold values where they
/// extend the sampled range, merged with tolerance 1e-9 and clipped.
inline MediumSpectrum spectrum_of_medium(const BandStructure& bs, Interval window, const ThresholdSet* thresholds = nullptr,
                                         double merge_tol = 1e-9) {
  std::vector<Interval> raw;
  double lowest = std::numeric_limits<double>::infinity(), highest = -lowest;
  for (int b = 0; b < bs.n_bands(); ++b) {
    Interval iv{bs.min_value(b), bs.max_value(b)};
    if (thresholds) {
      for (const auto& t : thresholds->entries) {
        if (t.band != b) continue;
        iv.lo = std::min(iv.lo, t.lambda);
        iv.hi = std::max(iv.hi, t.lambda);
      }
    }
    raw.push_back(iv);
    lowest = std::min(lowest, iv.lo);
    highest = std::max(highest, iv.hi);
  }
  if (!(lowest <= window.lo && highest >= window.hi))
    fail(error_kind::invalid_argument, "tracked bands do not cover the window; request more bands");
  MediumSpectrum ms;
  ms.window = window;
  ms.bands = detail::clip(detail::merge_intervals(raw, merge_tol), window);
  ms.gaps = detail::complement(ms.bands, window);
  return ms;
}

struct SpectrumReport {
  Interval window;
  MediumSpectrum left;
  MediumSpectrum right;
  std::vector<Interval> essential;    // union of the two band sets
  std::vector<Interval> gaps;         // gaps of at least one medium
  std::vector<Interval> common_gaps;  // gaps of both media
};

inline SpectrumReport essential_spectrum_union(const MediumSpectrum& left, const MediumSpectrum& right) {
  if (std::abs(left.window.lo - right.window.lo) > 1e-12 || std::abs(left.window.hi - right.window.hi) > 1e-12)
    fail(error_kind::window_mismatch, "spectra computed on different windows");
  SpectrumReport r;
  r.window = left.window;
  r.left = left;
  r.right = right;
  std::vector<Interval> all = left.bands;
  all.insert(all.end(), right.bands.begin(), right.bands.end());
  r.essential = detail::merge_intervals(all, 0.0);
  r.common_gaps = detail::complement(r.essential, r.window);
  std::vector<Interval> g = left.gaps;
  g.insert(g.end(), right.gaps.begin(), right.gaps.end());
  r.gaps = detail::merge_intervals(g, 0.0);
  return r;
}

// ---------------------------------------------------------------------------
// Mourre constant

struct MourreReport {
  Interval window;
  std::vector<int> bands;  // contributing bands
  double c_I = 0.0;
  int band = -1;
  double k_min = 0.0;
};

struct MourreOptions {
  double threshold_margin = 1e-6;
};

/// c_I = min |lambda_n'(k)|^2 over the band points with lambda_n(k) in I.
inline MourreReport mourre_constant(const BandStructure& bs, Interval I, const ThresholdSet& thresholds,
                                    const MourreOptions& opt = {}) {
  if (!(I.hi >= I.lo)) fail(error_kind::invalid_argument, "window must satisfy a <= b");
  for (const auto& t : thresholds.entries)
    if (t.lambda >= I.lo - opt.threshold_margin && t.lambda <= I.hi + opt.threshold_margin)
      fail(error_kind::window_touches_threshold,
           "window [" + std::to_string(I.lo) + ", " + std::to_string(I.hi) + "] meets threshold " + std::to_string(t.lambda));
  if (bs.eigvecs.empty()) fail(error_kind::missing_eigenvectors, "Mourre estimate needs eigenvectors");
  const auto& basis = *bs.basis;
  MourreReport rep;
  rep.window = I;
  rep.c_I = std::numeric_limits<double>::infinity();
  auto consider = [&](int b, double k, double lam, double v) {
    if (lam < I.lo || lam > I.hi) return;
    if (v * v < rep.c_I) {
      rep.c_I = v * v;
      rep.band = b;
      rep.k_min = k;
    }
  };
  const std::size_t nk = bs.kgrid.size();
  for (int b = 0; b < bs.n_bands(); ++b) {
    const auto& lam = bs.bands[b];
    const auto& vel = bs.velocities[b];
    if (bs.max_value(b) < I.lo || bs.min_value(b) > I.hi) continue;
    rep.bands.push_back(b);
    for (std::size_t i = 0; i < nk; ++i) consider(b, bs.kgrid[i], lam[i], vel[i]);
    for (std::size_t i = 0; i + 1 < nk; ++i) {
      const Eigen::VectorXcd ref = bs.eigvecs[b][i];
      const double ka = bs.kgrid[i], kb = bs.kgrid[i + 1];
      // crossings of the window edges
      for (double edge : {I.lo, I.hi}) {
        const double fa = lam[i] - edge, fb = lam[i + 1] - edge;
        if (fa == 0.0 || fb == 0.0 || (fa > 0) == (fb > 0)) continue;
        auto f = [&](double k) { return follow_branch(basis, ref, k).lambda - edge; };
        boost::uintmax_t it = 100;
        auto tol = [](double a, double c) { return std::abs(c - a) < 1e-13; };
        const auto r = boost::math::tools::toms748_solve(f, ka, kb, fa, fb, tol, it);
        const BranchPoint p = follow_branch(basis, ref, 0.5 * (r.first + r.second));
        consider(b, p.k, std::clamp(p.lambda, I.lo, I.hi), p.velocity);
      }
      // interior minima of lambda'^2 between samples
      const bool in_a = lam[i] >= I.lo && lam[i] <= I.hi, in_b = lam[i + 1] >= I.lo && lam[i + 1] <= I.hi;
      if (!(in_a || in_b)) continue;
      const double va = vel[i] * vel[i], vb = vel[i + 1] * vel[i + 1];
      const double kl = i > 0 ? bs.kgrid[i - 1] : ka;
      const double vl = i > 0 ? vel[i - 1] * vel[i - 1] : va;
      const double kr = i + 2 < nk ? bs.kgrid[i + 2] : kb;
      const double vr = i + 2 < nk ? vel[i + 2] * vel[i + 2] : vb;
      (void)kl;
      (void)kr;
      const bool dip = (va <= vl && va <= vb) || (vb <= va && vb <= vr);
      if (!dip) continue;
      auto g = [&](double k) {
        const BranchPoint p = follow_branch(basis, ref, k);
        return p.velocity * p.velocity;
      };
      const double lo = i > 0 ? bs.kgrid[i - 1] : ka;
      const double hi = i + 2 < nk ? bs.kgrid[i + 2] : kb;
      const auto r = boost::math::tools::brent_find_minima(g, lo, hi, 40);
      const BranchPoint p = follow_branch(basis, ref, r.first);
      consider(b, p.k, p.lambda, p.velocity);
    }
  }
  if (!std::isfinite(rep.c_I)) {
    rep.c_I = 0.0;
    fail(error_kind::window_mismatch, "no tracked band reaches the window");
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Flat-band certificate

struct FlatBandCertificate {
  std::vector<double> rho;
  std::vector<double> norm;
  double slope = 0.0;
  double intercept = 0.0;
};

/// ||M(i rho)^{-1}|| in the weighted cell norm for each rho, with a
/// least-squares fit of log norm against log rho.
inline FlatBandCertificate flat_band_certificate(const Medium& medium, int N, std::span<const double> rhos, int threads = 0) {
  for (std::size_t i = 0; i < rhos.size(); ++i) {
    if (!(rhos[i] > 0.0)) fail(error_kind::invalid_argument, "rho values must be positive");
    if (i > 0 && !(rhos[i] > rhos[i - 1])) fail(error_kind::invalid_argument, "rho values must increase");
  }
  // the coordinate stretch is not unitary for complex frequencies, so the plain basis is used
  const FiberBasis basis(medium, N, false);
  FlatBandCertificate out;
  out.rho.assign(rhos.begin(), rhos.end());
  out.norm.assign(rhos.size(), 0.0);
  parallel_for(rhos.size(), threads, [&](std::size_t i) {
    const Eigen::MatrixXcd A = basis.reduced(cplx(0.0, rhos[i]));
    Eigen::BDCSVD<Eigen::MatrixXcd> svd(A);
    const double smin = svd.singularValues().minCoeff();
    if (!(smin > 1e-14 * svd.singularValues().maxCoeff()))
      fail(error_kind::singular_fiber, "fiber operator at imaginary frequency is numerically singular");
    out.norm[i] = 1.0 / smin;
  });
  if (rhos.size() >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(rhos.size());
    for (std::size_t i = 0; i < rhos.size(); ++i) {
      const double x = std::log(rhos[i]), y = std::log(out.norm[i]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    out.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    out.intercept = (sy - out.slope * sx) / n;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Interface states

struct InterfaceState {
  double lambda = 0.0;
  double decay_rate = 0.0;   // exponential decay rate of |psi| (per unit length)
  double center = 0.0;
  double mass_near = 0.0;    // weighted mass within 20 periods of the centre
  double residual = 0.0;
  Eigen::VectorXd density;   // weighted density on the grid
};

struct InterfaceStateReport {
  Interval window;
  Grid grid;
  std::vector<InterfaceState> states;
  std::size_t seam_states = 0;  // eigenvalues attributed to the wrap seam
};

struct InterfaceStateOptions {
  int block = 16;             // initial subspace size
  int max_iterations = 400;
  double tolerance = 1e-11;   // relative residual of accepted eigenpairs
  std::uint64_t seed = 12345;
  // band data used to confirm that the window lies in a common gap
  int bands_N = 32;
  int bands_kpoints = 101;
  bool check_gap = true;
};

namespace detail {

// Dense S^dagger D S for the periodic grid, interleaved (E, H) per point.
inline Eigen::MatrixXcd dense_reduced_operator(const DiscreteWeight& w) {
  const Grid& g = w.grid();
  const int n = g.size();
  // first column of the circulant -i d/dx
  Eigen::VectorXcd col(n);
  {
    Eigen::VectorXcd spec(n);
    for (int q = 0; q < n; ++q) spec(q) = grid_wavenumber(q, n, g.length());
    const auto plan = plan_for(n);
    plan->backward(spec.data(), col.data());
    col /= static_cast<double>(n);
  }
  const auto& s = w.cholesky();
  Mat2 sigma;
  sigma << 0.0, 1.0, 1.0, 0.0;
  std::vector<Mat2> left(n), right(n);
  for (int a = 0; a < n; ++a) {
    left[a] = s[a].adjoint() * sigma;
    right[a] = s[a];
  }
  Eigen::MatrixXcd H(2 * n, 2 * n);
  for (int b = 0; b < n; ++b) {
    for (int a = 0; a < n; ++a) {
      const cplx pab = col(((a - b) % n + n) % n);
      const Mat2 blk = pab * (left[a] * right[b]);
      H.block<2, 2>(2 * a, 2 * b) = blk;
    }
  }
  H = (0.5 * (H + H.adjoint())).eval();
  return H;
}

struct EigenPairs {
  Eigen::VectorXd values;
  Eigen::MatrixXcd vectors;
  Eigen::VectorXd residuals;
};

// Eigenpairs of H inside [a, b] by shift-invert subspace iteration at the
// window midpoint, enlarging the block until it also holds eigenvalues
// outside the window.
inline EigenPairs window_eigenpairs(const Eigen::MatrixXcd& H, Interval win, const InterfaceStateOptions& opt) {
  const Eigen::Index n = H.rows();
  const double sigma = 0.5 * (win.lo + win.hi);
  const double radius = 0.5 * win.width();
  Eigen::MatrixXcd A = H;
  A.diagonal().array() -= sigma;
  const Eigen::PartialPivLU<Eigen::MatrixXcd> lu(A);
  const double scale = H.cwiseAbs().rowwise().sum().maxCoeff();
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> nd;
  int block = std::min<Eigen::Index>(opt.block, n);
  for (;;) {
    Eigen::MatrixXcd X(n, block);
    for (Eigen::Index i = 0; i < n; ++i)
      for (int j = 0; j < block; ++j) X(i, j) = cplx(nd(rng), nd(rng));
    Eigen::VectorXd prev = Eigen::VectorXd::Constant(block, std::numeric_limits<double>::infinity());
    bool done = false;
    EigenPairs res;
    for (int it = 0; it < opt.max_iterations; ++it) {
      Eigen::MatrixXcd Y = lu.solve(X);
      Eigen::HouseholderQR<Eigen::MatrixXcd> qr(Y);
      Eigen::MatrixXcd Q = qr.householderQ() * Eigen::MatrixXcd::Identity(n, block);
      const Eigen::MatrixXcd HQ = H * Q;
      Eigen::MatrixXcd G = Q.adjoint() * HQ;
      G = (0.5 * (G + G.adjoint())).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(G);
      X = Q * es.eigenvectors();
      const Eigen::MatrixXcd R = HQ * es.eigenvectors() - X * es.eigenvalues().asDiagonal();
      Eigen::VectorXd resid(block);
      for (int j = 0; j < block; ++j) resid(j) = R.col(j).norm() / scale;
      // Ritz values ordered by distance from the shift
      std::vector<int> order(block);
      std::iota(order.begin(), order.end(), 0);
      std::sort(order.begin(), order.end(), [&](int x, int y) {
        return std::abs(es.eigenvalues()(x) - sigma) < std::abs(es.eigenvalues()(y) - sigma);
      });
      int inside = 0;
      bool converged = true;
      for (int j : order) {
        if (std::abs(es.eigenvalues()(j) - sigma) <= radius) {
          ++inside;
          converged = converged && resid(j) < opt.tolerance;
        }
      }
      // the nearest Ritz value outside the window must also be converged, so no
      // eigenvalue in the window can be missing
      bool guard = false;
      for (int j : order) {
        if (std::abs(es.eigenvalues()(j) - sigma) > radius) {
          guard = resid(j) < 1e-6;
          break;
        }
      }
      if (converged && guard) {
        res.values.resize(inside);
        res.vectors.resize(n, inside);
        res.residuals.resize(inside);
        int c = 0;
        for (int j : order) {
          if (std::abs(es.eigenvalues()(j) - sigma) > radius) continue;
          res.values(c) = es.eigenvalues()(j);
          res.vectors.col(c) = X.col(j);
          res.residuals(c) = resid(j);
          ++c;
        }
        done = true;
        break;
      }
      if (inside >= block - 1) break;  // block too small
      prev = es.eigenvalues();
    }
    if (done) return res;
    if (block >= n) fail(error_kind::convergence_failure, "shift-invert iteration did not converge");
    block = static_cast<int>(std::min<Eigen::Index>(2 * block, n));
  }
}

}  // namespace detail

/// Gap eigenvalues of the junction operator on a periodic grid. Eigenvectors
/// centred at the wrap seam (|centre| > L/2) are counted but not reported.
inline InterfaceStateReport interface_states(const JunctionSystem& sys, Interval window, const Grid& grid,
                                             const InterfaceStateOptions& opt = {}) {
  if (opt.check_gap) {
    auto spec_of = [&](const Medium& m) {
      const auto kg = default_kgrid(m.period(), opt.bands_kpoints);
      // enough bands to cover the window
      int nb = 2;
      for (;;) {
        const auto bs = solve_bands(m, kg, opt.bands_N, nb);
        const auto th = find_thresholds(bs);
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (int b = 0; b < bs.n_bands(); ++b) {
          lo = std::min(lo, bs.min_value(b));
          hi = std::max(hi, bs.max_value(b));
        }
        if ((lo <= window.lo && hi >= window.hi) || nb >= 2 * (2 * opt.bands_N + 1) - 2)
          return spectrum_of_medium(bs, window, &th);
        nb += 2;
      }
    };
    const auto rep = essential_spectrum_union(spec_of(sys.left()), spec_of(sys.right()));
    bool inside = false;
    for (const auto& g : rep.common_gaps) inside = inside || (g.lo <= window.lo && g.hi >= window.hi);
    if (!inside) fail(error_kind::no_common_gap, "window does not lie in a common gap of the two media");
  }
  const auto w = DiscreteWeight::from_junction(sys, grid);
  const Eigen::MatrixXcd H = detail::dense_reduced_operator(*w);
  const auto pairs = detail::window_eigenpairs(H, window, opt);
  InterfaceStateReport rep;
  rep.window = window;
  rep.grid = grid;
  const double L = grid.half_length();
  const double h = grid.spacing();
  const double p = std::max(sys.left().period(), sys.right().period());
  const int n = grid.size();
  for (Eigen::Index c = 0; c < pairs.values.size(); ++c) {
    InterfaceState st;
    st.lambda = pairs.values(c);
    st.residual = pairs.residuals(c);
    Eigen::VectorXd dens(n);
    for (int i = 0; i < n; ++i) dens(i) = std::norm(pairs.vectors(2 * i, c)) + std::norm(pairs.vectors(2 * i + 1, c));
    dens /= dens.sum();
    // circular mean of the density
    cplx z = 0.0;
    for (int i = 0; i < n; ++i) z += dens(i) * std::exp(cplx(0.0, pi * grid.x(i) / L));
    st.center = std::arg(z) * L / pi;
    if (std::abs(st.center) > 0.5 * L) {
      ++rep.seam_states;
      continue;
    }
    double near = 0.0;
    for (int i = 0; i < n; ++i)
      if (std::abs(grid.x(i) - st.center) <= 20.0 * p) near += dens(i);
    st.mass_near = near;
    // decay: fit log of the per-period density maxima against distance
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    const int per = std::max(1, static_cast<int>(std::round(p / h)));
    for (int start = 0; start + per <= n; start += per) {
      double mx = 0.0, xm = 0.0;
      for (int i = start; i < start + per; ++i)
        if (dens(i) > mx) {
          mx = dens(i);
          xm = grid.x(i);
        }
      const double dist = std::abs(xm - st.center);
      if (dist < 2.0 * p || dist > 0.5 * L || mx < 1e-26) continue;
      sx += dist;
      sy += std::log(mx);
      sxx += dist * dist;
      sxy += dist * std::log(mx);
      ++cnt;
    }
    if (cnt >= 2) st.decay_rate = -0.5 * (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    st.density = dens / h;
    rep.states.push_back(std::move(st));
  }
  std::sort(rep.states.begin(), rep.states.end(), [](const InterfaceState& a, const InterfaceState& b) { return a.lambda < b.lambda; });
  return rep;
}

}  // namespace phc

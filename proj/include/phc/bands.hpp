#pragma once

// Plane-wave fiber operators and analytic band tracking.
//
// The fiber eigenproblem (-i d/dtheta + k) offdiag u = lambda C u is discretized
// in the Fourier basis e^{2 pi i n theta / p}, |n| <= N, with the constitutive
// matrix C = w^{-1} entering as a block Toeplitz matrix T. With T = L L^dagger
// the problem becomes Hermitian: H(k) = L^{-1} D(k) L^{-dagger}.
//
// For layered media the cell coordinate is first reparametrized, theta = g(xi),
// with g' vanishing to third order at every interface. Bloch solutions keep the
// same k in xi and C is replaced by g' C, which is smooth enough for the
// plane-wave series to converge rapidly.

#include "core.hpp"
#include "media.hpp"
#include "quadrature.hpp"

#include <memory>
#include <numeric>
#include <optional>
#include <span>

namespace phc {

namespace detail {

// int_0^1 140 u^3 (1-u)^3 e^{-i beta u} du
inline cplx stretch_transform(double beta) {
  const int panels = 1 + static_cast<int>(std::ceil(std::abs(beta) / pi));
  return integrate(
      [beta](double u) {
        const double v = u * (1.0 - u);
        return cplx(140.0 * v * v * v) * std::exp(cplx(0.0, -beta * u));
      },
      0.0, 1.0, panels);
}

// Fourier coefficients of C (or of g' C when stretched) for m = -2N..2N.
inline std::vector<Mat2> constitutive_coefficients(const ConstitutiveProfile& prof, int N, bool stretch) {
  const double p = prof.period();
  const int K = 2 * N;
  std::vector<Mat2> c(2 * static_cast<std::size_t>(K) + 1, Mat2::Zero());
  if (stretch) {
    const auto cuts = prof.interfaces();
    const std::size_t m = cuts.size();
    for (std::size_t j = 0; j < m; ++j) {
      const double t0 = cuts[j];
      const double len = (j + 1 < m ? cuts[j + 1] : cuts[0] + p) - t0;
      const Mat2 cj = prof.constitutive(t0 + 0.5 * len);
      for (int q = 0; q <= K; ++q) {
        const double g = 2.0 * pi * q / p;
        c[K + q] += cj * ((len / p) * std::exp(cplx(0.0, -g * t0)) * stretch_transform(g * len));
      }
    }
  } else {
    const auto nodes = prof.nodes(-0.5 * p, 0.5 * p, 2.0 * pi * K / p);
    std::vector<Mat2> cq(nodes.x.size());
    for (std::size_t i = 0; i < nodes.x.size(); ++i) cq[i] = prof.constitutive(nodes.x[i]);
    for (int q = 0; q <= K; ++q) {
      const double g = 2.0 * pi * q / p;
      Mat2 acc = Mat2::Zero();
      for (std::size_t i = 0; i < nodes.x.size(); ++i) acc += cq[i] * (nodes.w[i] * std::exp(cplx(0.0, -g * nodes.x[i])));
      c[K + q] = acc / p;
    }
  }
  for (int q = 1; q <= K; ++q) c[K - q] = c[K + q].adjoint();
  c[K] = symmetrize(c[K]);
  return c;
}

}  // namespace detail

/// k-independent part of the plane-wave fiber: Toeplitz matrix, its Cholesky
/// factor and the velocity operator. Index order: E modes n = -N..N, then H.
class FiberBasis {
 public:
  FiberBasis(const Medium& medium, int N, bool adaptive = true) : period_(medium.period()), N_(N) {
    if (N < 1) fail(error_kind::invalid_argument, "plane-wave truncation N must be >= 1");
    const auto& prof = medium.profile();
    stretched_ = adaptive && prof.kind() == ConstitutiveProfile::Kind::layers && !prof.interfaces().empty();
    const auto c = detail::constitutive_coefficients(prof, N, stretched_);
    const int n = modes();
    const int K = 2 * N;
    T_.resize(2 * n, 2 * n);
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        const Mat2& cm = c[static_cast<std::size_t>(K + a - b)];
        T_(a, b) = cm(0, 0);
        T_(a, n + b) = cm(0, 1);
        T_(n + a, b) = cm(1, 0);
        T_(n + a, n + b) = cm(1, 1);
      }
    }
    Eigen::LLT<Eigen::MatrixXcd> llt(T_);
    if (llt.info() != Eigen::Success) fail(error_kind::cholesky_failure, "convolution matrix is not positive definite");
    L_ = llt.matrixL();
    Linv_ = L_.triangularView<Eigen::Lower>().solve(Eigen::MatrixXcd::Identity(2 * n, 2 * n));
    const auto AE = Linv_.leftCols(n);
    const auto AH = Linv_.rightCols(n);
    Eigen::MatrixXcd x = AE * AH.adjoint();
    V_ = x + x.adjoint();
  }

  double period() const { return period_; }
  int truncation() const { return N_; }
  int modes() const { return 2 * N_ + 1; }
  int dimension() const { return 2 * modes(); }
  bool stretched() const { return stretched_; }

  const Eigen::MatrixXcd& convolution() const { return T_; }
  const Eigen::MatrixXcd& cholesky() const { return L_; }
  /// Reduced velocity operator dH/dk.
  const Eigen::MatrixXcd& velocity_operator() const { return V_; }

  Eigen::VectorXcd wavenumbers(cplx k) const {
    Eigen::VectorXcd g(modes());
    for (int i = 0; i < modes(); ++i) g(i) = 2.0 * pi * (i - N_) / period_ + k;
    return g;
  }

  /// D(k) = offdiag(G, G), G = diag(2 pi n / p + k).
  Eigen::MatrixXcd derivative(cplx k) const {
    const int n = modes();
    Eigen::MatrixXcd d = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
    const auto g = wavenumbers(k);
    for (int i = 0; i < n; ++i) {
      d(i, n + i) = g(i);
      d(n + i, i) = g(i);
    }
    return d;
  }

  /// H(k) = L^{-1} D(k) L^{-dagger}; Hermitian for real k.
  Eigen::MatrixXcd reduced(double k) const {
    Eigen::MatrixXcd x = Linv_.leftCols(modes()) * wavenumbers(k).real().asDiagonal() * Linv_.rightCols(modes()).adjoint();
    Eigen::MatrixXcd h = x + x.adjoint();
    return h;
  }

  /// L^{-1} D(omega) L^{-dagger} for complex omega.
  Eigen::MatrixXcd reduced(cplx omega) const {
    Eigen::MatrixXcd h = reduced(omega.real());
    h += cplx(0.0, omega.imag()) * V_;
    return h;
  }

  /// Hellmann-Feynman derivative of a reduced eigenvector.
  double velocity(const Eigen::VectorXcd& v) const { return v.dot(V_ * v).real(); }

  /// Coefficients u = L^{-dagger} y of the generalized eigenvector.
  Eigen::VectorXcd generalized_vector(const Eigen::VectorXcd& y) const {
    return L_.adjoint().triangularView<Eigen::Upper>().solve(y);
  }

 private:
  double period_;
  int N_;
  bool stretched_ = false;
  Eigen::MatrixXcd T_, L_, Linv_, V_;
};

/// Hermitian fiber problem at one quasi-momentum.
struct FiberProblem {
  std::shared_ptr<const FiberBasis> basis;
  double k = 0.0;
  Eigen::MatrixXcd H;

  int dimension() const { return static_cast<int>(H.rows()); }
};

inline FiberProblem assemble_fiber(const Medium& medium, double k, int N, bool adaptive = true) {
  const double p = medium.period();
  if (std::abs(k) > pi / p * (1.0 + 1e-12) + 1e-14)
    fail(error_kind::out_of_domain, "k outside the Brillouin zone [-pi/p, pi/p]");
  auto basis = std::make_shared<const FiberBasis>(medium, N, adaptive);
  return {basis, k, basis->reduced(k)};
}

/// Sorted eigenpairs of H(k). Inside near-degenerate clusters the vectors
/// diagonalize dH/dk, so `velocities` are the branch derivatives.
struct FiberEigen {
  double k = 0.0;
  Eigen::VectorXd values;
  Eigen::MatrixXcd vectors;
  Eigen::VectorXd velocities;
};

inline FiberEigen solve_fiber(const FiberBasis& basis, double k) {
  FiberEigen out;
  out.k = k;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(basis.reduced(k));
  if (es.info() != Eigen::Success) fail(error_kind::convergence_failure, "Hermitian eigensolver failed");
  out.values = es.eigenvalues();
  out.vectors = es.eigenvectors();
  const Eigen::MatrixXcd VX = basis.velocity_operator() * out.vectors;
  const Eigen::Index dim = out.values.size();
  out.velocities.resize(dim);
  for (Eigen::Index i = 0; i < dim; ++i) out.velocities(i) = out.vectors.col(i).dot(VX.col(i)).real();
  const double tol = 1e-8 * (out.values(dim - 1) - out.values(0));
  Eigen::Index s = 0;
  while (s < dim) {
    Eigen::Index e = s + 1;
    while (e < dim && out.values(e) - out.values(e - 1) < tol) ++e;
    if (e - s > 1) {
      const Eigen::Index c = e - s;
      Eigen::MatrixXcd sub = out.vectors.middleCols(s, c).adjoint() * VX.middleCols(s, c);
      sub = 0.5 * (sub + sub.adjoint()).eval();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> ss(sub);
      out.vectors.middleCols(s, c) = (out.vectors.middleCols(s, c) * ss.eigenvectors()).eval();
      out.velocities.segment(s, c) = ss.eigenvalues();
    }
    s = e;
  }
  return out;
}

struct BandOptions {
  double overlap_threshold = 0.8;
  int max_refine = 6;
  bool strict = false;  // throw LabelingAmbiguity instead of flagging
  bool keep_vectors = true;
  int threads = 0;
};

/// Analytic band branches on a k-grid. Band b at grid index i is
/// bands[b][i]; overlaps[b][i] is the continuity overlap with index i-1
/// (1 at i = 0).
struct BandStructure {
  std::vector<double> kgrid;
  std::vector<std::vector<double>> bands;
  std::vector<std::vector<double>> velocities;
  std::vector<std::vector<Eigen::VectorXcd>> eigvecs;
  std::vector<std::vector<double>> overlaps;
  std::vector<std::size_t> flagged;
  std::shared_ptr<const FiberBasis> basis;

  int n_bands() const { return static_cast<int>(bands.size()); }
  double period() const { return basis ? basis->period() : 0.0; }
  bool is_flagged(std::size_t i) const { return std::find(flagged.begin(), flagged.end(), i) != flagged.end(); }

  double min_value(int b) const { return *std::min_element(bands[b].begin(), bands[b].end()); }
  double max_value(int b) const { return *std::max_element(bands[b].begin(), bands[b].end()); }
};

/// n uniform points on [-pi/p, pi/p], endpoints included.
inline std::vector<double> default_kgrid(double period, int n = 201) {
  if (n < 2) fail(error_kind::invalid_argument, "k-grid needs at least two points");
  std::vector<double> k(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) k[i] = -pi / period + 2.0 * pi / period * i / (n - 1);
  k[n - 1] = pi / period;
  return k;
}

namespace detail {

struct Match {
  std::vector<int> cols;
  std::vector<double> overlaps;
};

// Greedy maximal-overlap assignment of tracked columns of a onto columns of b.
inline Match match_columns(const FiberEigen& a, const std::vector<int>& cols, const FiberEigen& b) {
  const int nb = static_cast<int>(cols.size());
  Eigen::MatrixXcd sel(a.vectors.rows(), nb);
  for (int j = 0; j < nb; ++j) sel.col(j) = a.vectors.col(cols[j]);
  const Eigen::MatrixXd o = (sel.adjoint() * b.vectors).cwiseAbs();
  struct Cand {
    double o;
    int band;
    int col;
  };
  std::vector<Cand> cand;
  for (int j = 0; j < nb; ++j)
    for (Eigen::Index c = 0; c < o.cols(); ++c)
      if (o(j, c) > 1e-3) cand.push_back({o(j, c), j, static_cast<int>(c)});
  std::stable_sort(cand.begin(), cand.end(), [](const Cand& x, const Cand& y) { return x.o > y.o; });
  Match m{std::vector<int>(nb, -1), std::vector<double>(nb, 0.0)};
  std::vector<char> used(static_cast<std::size_t>(o.cols()), 0);
  for (const auto& c : cand) {
    if (m.cols[c.band] >= 0 || used[c.col]) continue;
    m.cols[c.band] = c.col;
    m.overlaps[c.band] = c.o;
    used[c.col] = 1;
  }
  // anything left unassigned takes the nearest free eigenvalue
  for (int j = 0; j < nb; ++j) {
    if (m.cols[j] >= 0) continue;
    const double target = a.values(cols[j]);
    int best = -1;
    for (Eigen::Index c = 0; c < o.cols(); ++c)
      if (!used[c] && (best < 0 || std::abs(b.values(c) - target) < std::abs(b.values(best) - target)))
        best = static_cast<int>(c);
    m.cols[j] = best;
    m.overlaps[j] = o(j, best);
    used[best] = 1;
  }
  return m;
}

inline Match track(const FiberBasis& basis, const FiberEigen& a, const std::vector<int>& cols, const FiberEigen& b,
                   int depth, const BandOptions& opt) {
  Match direct = match_columns(a, cols, b);
  const double worst = *std::min_element(direct.overlaps.begin(), direct.overlaps.end());
  if (worst >= opt.overlap_threshold || depth >= opt.max_refine) return direct;
  const FiberEigen mid = solve_fiber(basis, 0.5 * (a.k + b.k));
  const Match m1 = track(basis, a, cols, mid, depth + 1, opt);
  Match m2 = track(basis, mid, m1.cols, b, depth + 1, opt);
  for (std::size_t j = 0; j < m2.overlaps.size(); ++j) m2.overlaps[j] = std::min(m1.overlaps[j], m2.overlaps[j]);
  return m2;
}

}  // namespace detail

/// Bands on `kgrid`, tracked by eigenvector continuity from the first point,
/// where the n_bands eigenvalues of smallest modulus are selected. Bands are
/// numbered by their value at the first k-point.
inline BandStructure solve_bands(std::shared_ptr<const FiberBasis> basis, std::span<const double> kgrid, int n_bands,
                                 const BandOptions& opt = {}) {
  if (kgrid.empty()) fail(error_kind::invalid_argument, "empty k-grid");
  for (std::size_t i = 1; i < kgrid.size(); ++i)
    if (!(kgrid[i] > kgrid[i - 1])) fail(error_kind::invalid_argument, "k-grid must be strictly increasing");
  if (n_bands < 1 || n_bands > basis->dimension()) fail(error_kind::invalid_argument, "n_bands out of range");
  const double zone = pi / basis->period();
  for (double k : kgrid)
    if (std::abs(k) > zone * (1.0 + 1e-12)) fail(error_kind::out_of_domain, "k-grid leaves the Brillouin zone");

  BandStructure bs;
  bs.basis = basis;
  bs.kgrid.assign(kgrid.begin(), kgrid.end());
  const std::size_t nk = kgrid.size();
  bs.bands.assign(n_bands, std::vector<double>(nk));
  bs.velocities.assign(n_bands, std::vector<double>(nk));
  bs.overlaps.assign(n_bands, std::vector<double>(nk, 1.0));
  if (opt.keep_vectors) bs.eigvecs.assign(n_bands, std::vector<Eigen::VectorXcd>(nk));

  const int threads = resolve_threads(opt.threads);
  const std::size_t chunk = static_cast<std::size_t>(std::max(4, 2 * threads));
  std::optional<FiberEigen> prev;
  std::vector<int> cols;

  auto record = [&](const FiberEigen& s, std::size_t i) {
    for (int b = 0; b < n_bands; ++b) {
      bs.bands[b][i] = s.values(cols[b]);
      bs.velocities[b][i] = s.velocities(cols[b]);
      if (opt.keep_vectors) bs.eigvecs[b][i] = s.vectors.col(cols[b]);
    }
  };

  for (std::size_t start = 0; start < nk; start += chunk) {
    const std::size_t stop = std::min(nk, start + chunk);
    std::vector<FiberEigen> sols(stop - start);
    parallel_for(sols.size(), threads, [&](std::size_t j) { sols[j] = solve_fiber(*basis, kgrid[start + j]); });
    for (std::size_t j = 0; j < sols.size(); ++j) {
      const std::size_t i = start + j;
      const FiberEigen& s = sols[j];
      if (!prev) {
        std::vector<int> idx(static_cast<std::size_t>(s.values.size()));
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(), [&](int x, int y) {
          const double ax = std::abs(s.values(x)), ay = std::abs(s.values(y));
          if (std::abs(ax - ay) > 1e-12 * std::max(1.0, ax)) return ax < ay;
          return s.values(x) < s.values(y);
        });
        cols.assign(idx.begin(), idx.begin() + n_bands);
        std::stable_sort(cols.begin(), cols.end(), [&](int x, int y) {
          if (s.values(x) != s.values(y)) return s.values(x) < s.values(y);
          return s.velocities(x) < s.velocities(y);
        });
      } else {
        const auto m = detail::track(*basis, *prev, cols, s, 0, opt);
        cols = m.cols;
        bool bad = false;
        for (int b = 0; b < n_bands; ++b) {
          bs.overlaps[b][i] = m.overlaps[b];
          bad = bad || m.overlaps[b] < opt.overlap_threshold;
        }
        if (bad) {
          if (opt.strict)
            fail(error_kind::labeling_ambiguity, "continuity overlap below threshold at k = " + std::to_string(kgrid[i]));
          bs.flagged.push_back(i);
        }
      }
      record(s, i);
      prev = s;
    }
  }
  return bs;
}

inline BandStructure solve_bands(const Medium& medium, std::span<const double> kgrid, int N, int n_bands,
                                 const BandOptions& opt = {}, bool adaptive = true) {
  return solve_bands(std::make_shared<const FiberBasis>(medium, N, adaptive), kgrid, n_bands, opt);
}

/// Hellmann-Feynman velocities recomputed from the stored eigenvectors.
inline std::vector<std::vector<double>> group_velocity(const BandStructure& bs) {
  if (bs.eigvecs.empty() || !bs.basis) fail(error_kind::missing_eigenvectors, "band structure holds no eigenvectors");
  std::vector<std::vector<double>> v(bs.bands.size());
  for (std::size_t b = 0; b < bs.bands.size(); ++b) {
    v[b].resize(bs.kgrid.size());
    for (std::size_t i = 0; i < bs.kgrid.size(); ++i) v[b][i] = bs.basis->velocity(bs.eigvecs[b][i]);
  }
  return v;
}

/// The branch through `ref` continued to quasi-momentum k.
struct BranchPoint {
  double k = 0.0;
  double lambda = 0.0;
  double velocity = 0.0;
  double overlap = 0.0;
  Eigen::VectorXcd vector;
};

inline BranchPoint follow_branch(const FiberBasis& basis, const Eigen::VectorXcd& ref, double k) {
  const FiberEigen s = solve_fiber(basis, k);
  const Eigen::VectorXd o = (s.vectors.adjoint() * ref).cwiseAbs();
  Eigen::Index best = 0;
  o.maxCoeff(&best);
  return {k, s.values(best), s.velocities(best), o(best), s.vectors.col(best)};
}

}  // namespace phc

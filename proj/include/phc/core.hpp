#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstddef>
#include <exception>
#include <mutex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace phc {

using cplx = std::complex<double>;
using Mat2 = Eigen::Matrix2cd;
using Vec2 = Eigen::Vector2cd;

inline constexpr double pi = std::numbers::pi;
inline constexpr cplx I{0.0, 1.0};

enum class error_kind {
  invalid_argument,
  non_positive_definite,
  out_of_domain,
  assumption_violated,
  cholesky_failure,
  labeling_ambiguity,
  missing_eigenvectors,
  incommensurate_domain,
  window_mismatch,
  window_touches_threshold,
  singular_fiber,
  no_common_gap,
  convergence_failure,
  solver_divergence,
  boundary_contamination,
  window_violation,
  context_mismatch,
  grid_mismatch,
  non_separation,
  gap_on_either_side,
  schema_error,
};

inline std::string_view to_string(error_kind k) noexcept {
  switch (k) {
    case error_kind::invalid_argument: return "InvalidArgument";
    case error_kind::non_positive_definite: return "NonPositiveDefinite";
    case error_kind::out_of_domain: return "OutOfDomain";
    case error_kind::assumption_violated: return "AssumptionViolated";
    case error_kind::cholesky_failure: return "CholeskyFailure";
    case error_kind::labeling_ambiguity: return "LabelingAmbiguity";
    case error_kind::missing_eigenvectors: return "MissingEigenvectors";
    case error_kind::incommensurate_domain: return "IncommensurateDomain";
    case error_kind::window_mismatch: return "WindowMismatch";
    case error_kind::window_touches_threshold: return "WindowTouchesThreshold";
    case error_kind::singular_fiber: return "SingularFiber";
    case error_kind::no_common_gap: return "NoCommonGap";
    case error_kind::convergence_failure: return "ConvergenceFailure";
    case error_kind::solver_divergence: return "SolverDivergence";
    case error_kind::boundary_contamination: return "BoundaryContamination";
    case error_kind::window_violation: return "WindowViolation";
    case error_kind::context_mismatch: return "ContextMismatch";
    case error_kind::grid_mismatch: return "GridMismatch";
    case error_kind::non_separation: return "NonSeparation";
    case error_kind::gap_on_either_side: return "GapOnEitherSide";
    case error_kind::schema_error: return "SchemaError";
  }
  return "Unknown";
}

/// Library exception. `name()` is the stable error identifier used by the CLI.
class error : public std::runtime_error {
 public:
  error(error_kind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  error_kind kind() const noexcept { return kind_; }
  std::string_view name() const noexcept { return to_string(kind_); }

 private:
  error_kind kind_;
};

[[noreturn]] inline void fail(error_kind kind, const std::string& detail) { throw error(kind, detail); }

// ---------------------------------------------------------------------------
// 2x2 Hermitian helpers

/// Ascending eigenvalues of a 2x2 Hermitian matrix (upper triangle is read).
inline std::pair<double, double> hermitian_eigenvalues(const Mat2& m) {
  const double a = m(0, 0).real();
  const double d = m(1, 1).real();
  const double mid = 0.5 * (a + d);
  const double rad = std::hypot(0.5 * (a - d), std::abs(m(0, 1)));
  return {mid - rad, mid + rad};
}

/// Spectral norm of an arbitrary 2x2 matrix.
inline double operator_norm(const Mat2& m) {
  const Mat2 g = m.adjoint() * m;
  return std::sqrt(std::max(0.0, hermitian_eigenvalues(g).second));
}

/// Builds an exactly Hermitian matrix from the upper triangle.
inline Mat2 hermitian(double a, cplx b, double d) {
  Mat2 m;
  m << cplx(a, 0.0), b, std::conj(b), cplx(d, 0.0);
  return m;
}

inline Mat2 symmetrize(const Mat2& m) {
  return hermitian(m(0, 0).real(), 0.5 * (m(0, 1) + std::conj(m(1, 0))), m(1, 1).real());
}

/// Inverse of a Hermitian positive-definite 2x2 matrix, stored exactly Hermitian.
inline Mat2 hermitian_inverse(const Mat2& m) {
  const double a = m(0, 0).real();
  const double d = m(1, 1).real();
  const cplx b = m(0, 1);
  const double det = a * d - std::norm(b);
  if (!(det > 0.0) || !(a > 0.0)) fail(error_kind::non_positive_definite, "2x2 matrix is not positive definite");
  return hermitian(d / det, -b / det, a / det);
}

/// Lower Cholesky factor S with m = S S^dagger.
inline Mat2 cholesky_lower(const Mat2& m) {
  const double a = m(0, 0).real();
  const cplx b = m(0, 1);
  const double d = m(1, 1).real();
  if (!(a > 0.0)) fail(error_kind::non_positive_definite, "2x2 matrix is not positive definite");
  const double s11 = std::sqrt(a);
  const cplx s21 = std::conj(b) / s11;
  const double r = d - std::norm(s21);
  if (!(r > 0.0)) fail(error_kind::non_positive_definite, "2x2 matrix is not positive definite");
  Mat2 s;
  s << s11, 0.0, s21, std::sqrt(r);
  return s;
}

/// C^2 smoothstep on [0, 1], clamped outside.
inline double smoothstep(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return u * u * (3.0 - 2.0 * u);
}

/// Japanese bracket <x> = sqrt(1 + x^2).
inline double bracket(double x) { return std::sqrt(1.0 + x * x); }

// ---------------------------------------------------------------------------
// threading

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

/// Runs f(i) for i in [0, n) on up to `threads` workers. The first exception
/// thrown by any task is rethrown on the calling thread.
template <class F>
void parallel_for(std::size_t n, int threads, F&& f) {
  const int nt = std::min<int>(resolve_threads(threads), static_cast<int>(std::max<std::size_t>(n, 1)));
  if (nt <= 1) {
    for (std::size_t i = 0; i < n; ++i) f(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        f(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!err) err = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nt));
  for (int t = 0; t < nt; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

/// Closed interval [lo, hi].
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double width() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

}  // namespace phc

#pragma once

// Transfer-matrix reference for piecewise-constant media without coupling.

#include "core.hpp"
#include "media.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include <optional>

namespace phc {

struct OracleLayer {
  double d = 1.0;
  double eps = 1.0;
  double mu = 1.0;

  double index() const { return std::sqrt(eps * mu); }
  double admittance() const { return std::sqrt(eps / mu); }
};

class LayerStack {
 public:
  explicit LayerStack(std::vector<OracleLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) fail(error_kind::invalid_argument, "empty layer stack");
    period_ = 0.0;
    for (const auto& l : layers_) {
      if (!(l.d > 0.0) || !(l.eps > 0.0) || !(l.mu > 0.0))
        fail(error_kind::invalid_argument, "layer stack needs positive d, eps, mu");
      period_ += l.d;
    }
  }

  static LayerStack uniform(double eps, double mu = 1.0, double period = 1.0) {
    return LayerStack({OracleLayer{period, eps, mu}});
  }

  static LayerStack from_profile(const ConstitutiveProfile& prof) {
    if (prof.kind() != ConstitutiveProfile::Kind::layers)
      fail(error_kind::invalid_argument, "oracle needs a layered profile");
    std::vector<OracleLayer> out;
    for (const auto& l : prof.layers()) {
      if (l.chi != cplx{}) fail(error_kind::invalid_argument, "oracle requires chi = 0");
      out.push_back({l.d, l.eps, l.mu});
    }
    return LayerStack(std::move(out));
  }

  const std::vector<OracleLayer>& layers() const { return layers_; }
  double period() const { return period_; }

  bool uniform_material() const {
    for (const auto& l : layers_)
      if (l.eps != layers_[0].eps || l.mu != layers_[0].mu) return false;
    return true;
  }

 private:
  std::vector<OracleLayer> layers_;
  double period_ = 0.0;
};

/// One-period transfer matrix at frequency lambda, mapping (E, H) at the cell
/// start to the cell end.
inline Mat2 layer_monodromy(const LayerStack& stack, double lambda) {
  Mat2 t = Mat2::Identity();
  for (const auto& l : stack.layers()) {
    const double delta = lambda * l.index() * l.d;
    const double q = l.admittance();
    const double c = std::cos(delta);
    const double s = std::sin(delta);
    Mat2 m;
    m << c, I * (s / q), I * (q * s), c;
    t = m * t;
  }
  return t;
}

/// Half trace of the monodromy, real for real lambda.
inline double half_trace(const LayerStack& stack, double lambda) {
  return 0.5 * layer_monodromy(stack, lambda).trace().real();
}

struct DispersionPoint {
  bool band = true;
  double c = 1.0;      // tr T / 2
  double k = 0.0;      // |k| in [0, pi/p] for band points
  double decay = 1.0;  // |Bloch factor| per period for gap points (< 1)
};

inline DispersionPoint dispersion_oracle(const LayerStack& stack, double lambda) {
  DispersionPoint d;
  d.c = half_trace(stack, lambda);
  if (std::abs(d.c) <= 1.0) {
    d.band = true;
    d.k = std::acos(d.c) / stack.period();
    d.decay = 1.0;
  } else {
    d.band = false;
    d.k = std::numeric_limits<double>::quiet_NaN();
    d.decay = std::abs(d.c) - std::sqrt(d.c * d.c - 1.0);
  }
  return d;
}

struct GapEdge {
  double lambda = 0.0;
  bool tangency = false;  // |c| touches 1 without entering a gap
};

/// Solutions of |tr T / 2| = 1 in the window. Genuine edges bound a gap;
/// tangencies are touching points of zero width.
inline std::vector<GapEdge> gap_edges(const LayerStack& stack, Interval window, int samples = 4000) {
  auto f = [&](double l) { return std::abs(half_trace(stack, l)) - 1.0; };
  std::vector<GapEdge> out;
  const double h = window.width() / samples;
  std::vector<double> lam(samples + 1), val(samples + 1);
  for (int i = 0; i <= samples; ++i) {
    lam[i] = window.lo + i * h;
    val[i] = f(lam[i]);
  }
  auto refine = [&](double a, double b) {
    boost::uintmax_t it = 200;
    auto tol = [](double x, double y) { return std::abs(x - y) < 1e-13; };
    auto r = boost::math::tools::toms748_solve(f, a, b, tol, it);
    return 0.5 * (r.first + r.second);
  };
  std::vector<double> roots;
  for (int i = 0; i < samples; ++i) {
    if (val[i] == 0.0) {
      roots.push_back(lam[i]);
    } else if ((val[i] < 0.0) != (val[i + 1] < 0.0) && val[i + 1] != 0.0) {
      roots.push_back(refine(lam[i], lam[i + 1]));
    }
  }
  // a pair of roots enclosing a negligible excursion is a touching point
  std::vector<bool> used(roots.size(), false);
  for (std::size_t i = 0; i + 1 < roots.size(); ++i) {
    if (used[i]) continue;
    const double a = roots[i], b = roots[i + 1];
    if (b - a < 1e-6 && f(0.5 * (a + b)) < 1e-10) {
      out.push_back({0.5 * (a + b), true});
      used[i] = used[i + 1] = true;
    }
  }
  for (std::size_t i = 0; i < roots.size(); ++i)
    if (!used[i]) out.push_back({roots[i], false});
  // touching from inside the band: local maxima of f reaching 0
  for (int i = 1; i < samples; ++i) {
    if (!(val[i] >= val[i - 1] && val[i] >= val[i + 1]) || val[i] < -1e-3 || val[i] > 0.0) continue;
    if (val[i - 1] >= 0.0 || val[i + 1] >= 0.0) continue;
    auto neg = [&](double l) { return -f(l); };
    auto r = boost::math::tools::brent_find_minima(neg, lam[i - 1], lam[i + 1], 52);
    if (std::abs(r.second) < 1e-12) {
      bool dup = false;
      for (const auto& e : out) dup = dup || std::abs(e.lambda - r.first) < 1e-8;
      if (!dup) out.push_back({r.first, true});
    }
  }
  std::sort(out.begin(), out.end(), [](const GapEdge& a, const GapEdge& b) { return a.lambda < b.lambda; });
  return out;
}

struct OracleScatter {
  cplx r{};
  cplx t{};
  double R = 0.0;
  double T = 0.0;
  bool right_gap = false;  // transmitted side evanescent
  double decay = 1.0;      // |Bloch factor| per period of the transmitted mode
};

namespace detail {
struct SideModes {
  Vec2 forward;   // unit flux (right-moving) or decaying to the right
  Vec2 backward;  // unit flux magnitude, left-moving, or growing
  bool gap = false;
  double decay = 1.0;
};

inline double flux(const Vec2& u) { return (std::conj(u(0)) * u(1)).real(); }

inline SideModes side_modes(const LayerStack& s, double lambda) {
  SideModes m;
  if (s.uniform_material()) {
    const double q = s.layers()[0].admittance();
    m.forward = Vec2(1.0, q) / std::sqrt(q);
    m.backward = Vec2(1.0, -q) / std::sqrt(q);
    return m;
  }
  const Mat2 T = layer_monodromy(s, lambda);
  Eigen::ComplexEigenSolver<Mat2> es(T);
  const Vec2 u0 = es.eigenvectors().col(0);
  const Vec2 u1 = es.eigenvectors().col(1);
  const double c = 0.5 * T.trace().real();
  if (std::abs(c) < 1.0) {
    const double f0 = flux(u0);
    const double f1 = flux(u1);
    if (!(std::abs(f0) > 1e-14 && std::abs(f1) > 1e-14))
      fail(error_kind::invalid_argument, "band-edge frequency: Bloch modes carry no flux");
    const Vec2 fw = f0 > 0 ? u0 : u1;
    const Vec2 bw = f0 > 0 ? u1 : u0;
    m.forward = fw / std::sqrt(flux(fw));
    m.backward = bw / std::sqrt(-flux(bw));
  } else {
    m.gap = true;
    const bool first = std::abs(es.eigenvalues()(0)) < std::abs(es.eigenvalues()(1));
    m.forward = (first ? u0 : u1).normalized();
    m.backward = (first ? u1 : u0).normalized();
    m.decay = std::min(std::abs(es.eigenvalues()(0)), std::abs(es.eigenvalues()(1)));
  }
  return m;
}
}  // namespace detail

/// Reflection and transmission for a wave incident from the left onto an
/// interface at x = 0 (a cell boundary of both stacks).
inline OracleScatter oracle_scatter(const LayerStack& left, const LayerStack& right, double lambda) {
  const auto L = detail::side_modes(left, lambda);
  if (L.gap) fail(error_kind::gap_on_either_side, "incident side is in a gap at lambda = " + std::to_string(lambda));
  const auto R = detail::side_modes(right, lambda);
  Mat2 a;
  a.col(0) = L.backward;
  a.col(1) = -R.forward;
  const Vec2 rt = a.partialPivLu().solve(-L.forward);
  OracleScatter out;
  out.r = rt(0);
  out.t = rt(1);
  out.R = std::norm(out.r);
  if (R.gap) {
    out.right_gap = true;
    out.decay = R.decay;
    out.T = 0.0;
  } else {
    out.T = std::norm(out.t);
  }
  return out;
}

}  // namespace phc

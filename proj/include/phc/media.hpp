#pragma once

// Constitutive profiles, Maxwell weights w = [[eps, chi], [chi*, mu]]^{-1},
// periodic media and junction systems.

#include "core.hpp"
#include "quadrature.hpp"

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>

namespace phc {

struct Layer {
  double d = 1.0;
  double eps = 1.0;
  double mu = 1.0;
  cplx chi{0.0, 0.0};

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Quadrature nodes with weights, used for cell integrals.
struct QuadratureNodes {
  std::vector<double> x;
  std::vector<double> w;
};

/// eps, mu, chi on one cell [-p/2, p/2), extended periodically.
class ConstitutiveProfile {
 public:
  enum class Kind { layers, fourier, samples };

  /// Layers fill the cell from -p/2 rightwards; p is the sum of thicknesses.
  static ConstitutiveProfile layered(std::vector<Layer> layers) {
    if (layers.empty()) fail(error_kind::invalid_argument, "layer list is empty");
    ConstitutiveProfile p;
    p.kind_ = Kind::layers;
    double total = 0.0;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (!(l.d > 0.0) || !std::isfinite(l.d))
        fail(error_kind::invalid_argument, "layer " + std::to_string(i) + " has non-positive thickness");
      total += l.d;
    }
    p.period_ = total;
    p.layers_ = std::move(layers);
    p.bounds_.push_back(-0.5 * total);
    for (const auto& l : p.layers_) p.bounds_.push_back(p.bounds_.back() + l.d);
    p.check();
    return p;
  }

  /// Fourier coefficients for m = -M..M (vector index m + M). eps and mu must
  /// describe real functions; chi may be empty (zero).
  static ConstitutiveProfile fourier(double period, std::vector<cplx> eps, std::vector<cplx> mu,
                                     std::vector<cplx> chi = {}) {
    ConstitutiveProfile p;
    p.kind_ = Kind::fourier;
    p.period_ = period;
    const std::size_t n = std::max({eps.size(), mu.size(), chi.size()});
    if (n % 2 == 0) fail(error_kind::invalid_argument, "fourier coefficient lists need odd length 2M+1");
    auto pad = [n](std::vector<cplx>& v, const char* name) {
      if (v.size() % 2 == 0 && !v.empty())
        fail(error_kind::invalid_argument, std::string("fourier list '") + name + "' has even length");
      const std::size_t extra = (n - v.size()) / 2;
      std::vector<cplx> out(n, cplx{});
      for (std::size_t i = 0; i < v.size(); ++i) out[i + extra] = v[i];
      v = std::move(out);
    };
    pad(eps, "eps");
    pad(mu, "mu");
    pad(chi, "chi");
    const int M = static_cast<int>(n / 2);
    for (const auto* v : {&eps, &mu}) {
      double scale = 0.0;
      for (auto c : *v) scale = std::max(scale, std::abs(c));
      for (int m = 0; m <= M; ++m) {
        if (std::abs((*v)[M + m] - std::conj((*v)[M - m])) > 1e-12 * std::max(1.0, scale))
          fail(error_kind::invalid_argument, "eps and mu fourier coefficients must satisfy c(-m) = conj(c(m))");
      }
    }
    p.feps_ = std::move(eps);
    p.fmu_ = std::move(mu);
    p.fchi_ = std::move(chi);
    p.check();
    return p;
  }

  /// Uniform samples at theta_i = -p/2 + i p/n, linearly interpolated (periodic).
  static ConstitutiveProfile sampled(double period, std::vector<double> eps, std::vector<double> mu,
                                     std::vector<cplx> chi = {}) {
    ConstitutiveProfile p;
    p.kind_ = Kind::samples;
    p.period_ = period;
    if (eps.empty() || eps.size() != mu.size() || (!chi.empty() && chi.size() != eps.size()))
      fail(error_kind::invalid_argument, "sample lists must be non-empty and of equal length");
    if (chi.empty()) chi.assign(eps.size(), cplx{});
    p.seps_ = std::move(eps);
    p.smu_ = std::move(mu);
    p.schi_ = std::move(chi);
    p.check();
    return p;
  }

  static ConstitutiveProfile homogeneous(double eps = 1.0, double mu = 1.0, cplx chi = {}, double period = 1.0) {
    return layered({Layer{period, eps, mu, chi}});
  }

  Kind kind() const { return kind_; }
  double period() const { return period_; }
  const std::vector<Layer>& layers() const { return layers_; }
  const std::vector<double>& layer_bounds() const { return bounds_; }
  const std::vector<cplx>& fourier_eps() const { return feps_; }
  const std::vector<cplx>& fourier_mu() const { return fmu_; }
  const std::vector<cplx>& fourier_chi() const { return fchi_; }
  const std::vector<double>& sample_eps() const { return seps_; }
  const std::vector<double>& sample_mu() const { return smu_; }
  const std::vector<cplx>& sample_chi() const { return schi_; }

  /// Maps x to the representative cell position in [-p/2, p/2).
  double wrap(double x) const {
    double t = x - period_ * std::floor((x + 0.5 * period_) / period_);
    if (t >= 0.5 * period_) t -= period_;
    return t;
  }

  /// Index of the layer containing x (left-closed intervals).
  std::size_t layer_index(double x) const {
    const double t = wrap(x);
    auto it = std::upper_bound(bounds_.begin() + 1, bounds_.end() - 1, t);
    return static_cast<std::size_t>(it - (bounds_.begin() + 1));
  }

  struct Values {
    double eps;
    double mu;
    cplx chi;
  };

  Values values(double x) const {
    switch (kind_) {
      case Kind::layers: {
        const auto& l = layers_[layer_index(x)];
        return {l.eps, l.mu, l.chi};
      }
      case Kind::fourier: {
        const double t = wrap(x);
        const int M = static_cast<int>(feps_.size() / 2);
        Values v{0.0, 0.0, {}};
        for (int m = -M; m <= M; ++m) {
          const cplx e = std::exp(I * (2.0 * pi * m * t / period_));
          v.eps += (feps_[m + M] * e).real();
          v.mu += (fmu_[m + M] * e).real();
          v.chi += fchi_[m + M] * e;
        }
        return v;
      }
      case Kind::samples: {
        const std::size_t n = seps_.size();
        const double t = wrap(x);
        const double u = (t + 0.5 * period_) / period_ * static_cast<double>(n);
        std::size_t i = static_cast<std::size_t>(std::floor(u));
        double f = u - static_cast<double>(i);
        if (i >= n) {
          i = n - 1;
          f = 1.0;
        }
        const std::size_t j = (i + 1) % n;
        return {(1 - f) * seps_[i] + f * seps_[j], (1 - f) * smu_[i] + f * smu_[j], (1 - f) * schi_[i] + f * schi_[j]};
      }
    }
    return {1.0, 1.0, {}};
  }

  /// Constitutive matrix C(x) = [[eps, chi], [chi*, mu]].
  Mat2 constitutive(double x) const {
    const auto v = values(x);
    return hermitian(v.eps, v.chi, v.mu);
  }

  /// Points in the open interval (a, b) where the profile is not smooth.
  std::vector<double> breakpoints(double a, double b) const {
    std::vector<double> base;
    if (kind_ == Kind::layers) {
      base.assign(bounds_.begin(), bounds_.end() - 1);
    } else if (kind_ == Kind::samples) {
      const std::size_t n = seps_.size();
      for (std::size_t i = 0; i < n; ++i) base.push_back(-0.5 * period_ + period_ * static_cast<double>(i) / n);
    }
    std::vector<double> out;
    if (base.empty() || !(b > a)) return out;
    const double n0 = std::floor((a + 0.5 * period_) / period_) - 1.0;
    const double n1 = std::ceil((b + 0.5 * period_) / period_) + 1.0;
    for (double n = n0; n <= n1; n += 1.0) {
      for (double t : base) {
        const double x = t + n * period_;
        if (x > a && x < b) out.push_back(x);
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

  /// Positions in [-p/2, p/2) where a layered profile jumps.
  std::vector<double> interfaces() const {
    std::vector<double> out;
    if (kind_ != Kind::layers) return out;
    const std::size_t n = layers_.size();
    if (!same_material(layers_[n - 1], layers_[0])) out.push_back(bounds_[0]);
    for (std::size_t j = 1; j < n; ++j)
      if (!same_material(layers_[j - 1], layers_[j])) out.push_back(bounds_[j]);
    return out;
  }

  bool is_homogeneous() const {
    switch (kind_) {
      case Kind::layers:
        return interfaces().empty();
      case Kind::fourier: {
        const std::size_t M = feps_.size() / 2;
        for (std::size_t i = 0; i < feps_.size(); ++i) {
          if (i == M) continue;
          if (feps_[i] != cplx{} || fmu_[i] != cplx{} || fchi_[i] != cplx{}) return false;
        }
        return true;
      }
      case Kind::samples:
        for (std::size_t i = 1; i < seps_.size(); ++i)
          if (seps_[i] != seps_[0] || smu_[i] != smu_[0] || schi_[i] != schi_[0]) return false;
        return true;
    }
    return false;
  }

  /// Cell positions at which positivity and weight bounds are checked.
  std::vector<double> probe_points() const {
    std::vector<double> out;
    switch (kind_) {
      case Kind::layers:
        for (std::size_t j = 0; j < layers_.size(); ++j) out.push_back(bounds_[j]);
        break;
      case Kind::fourier: {
        const std::size_t n = 16 * feps_.size() + 16;
        for (std::size_t i = 0; i < n; ++i) out.push_back(-0.5 * period_ + period_ * static_cast<double>(i) / n);
        break;
      }
      case Kind::samples:
        // linear interpolation of a positive-definite matrix stays positive definite
        for (std::size_t i = 0; i < seps_.size(); ++i)
          out.push_back(-0.5 * period_ + period_ * static_cast<double>(i) / seps_.size());
        break;
    }
    return out;
  }

  /// Gauss nodes covering [a, b], split at breakpoints, with panels short
  /// enough to integrate oscillations up to `max_wavenumber`.
  QuadratureNodes nodes(double a, double b, double max_wavenumber = 0.0) const {
    QuadratureNodes q;
    std::vector<double> cuts{a};
    for (double x : breakpoints(a, b)) cuts.push_back(x);
    cuts.push_back(b);
    const auto& g = gauss_rule::get();
    const double smooth_len = kind_ == Kind::fourier ? period_ / (2.0 + static_cast<double>(feps_.size())) : 1e300;
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
      const double lo = cuts[s];
      const double hi = cuts[s + 1];
      const double len = hi - lo;
      if (!(len > 0.0)) continue;
      int panels = 1 + static_cast<int>(std::ceil(len * max_wavenumber / (2.0 * pi)));
      panels = std::max(panels, static_cast<int>(std::ceil(len / smooth_len)));
      const double step = len / panels;
      for (int p = 0; p < panels; ++p) {
        const double mid = lo + (p + 0.5) * step;
        for (int i = 0; i < gauss_rule::size; ++i) {
          q.x.push_back(mid + 0.5 * step * g.nodes[i]);
          q.w.push_back(0.5 * step * g.weights[i]);
        }
      }
    }
    return q;
  }

 private:
  static bool same_material(const Layer& a, const Layer& b) {
    return a.eps == b.eps && a.mu == b.mu && a.chi == b.chi;
  }

  void check() const {
    if (!(period_ > 0.0) || !std::isfinite(period_)) fail(error_kind::invalid_argument, "period must be positive");
    if (kind_ == Kind::layers) {
      for (std::size_t i = 0; i < layers_.size(); ++i) {
        const auto& l = layers_[i];
        if (!(l.eps > 0.0) || !(l.mu > 0.0) || !(l.eps * l.mu - std::norm(l.chi) > 0.0))
          fail(error_kind::non_positive_definite,
               "layer " + std::to_string(i) + ": eps*mu - |chi|^2 must be positive with eps, mu > 0");
      }
      return;
    }
    for (double x : probe_points()) {
      const auto v = values(x);
      if (!(v.eps > 0.0) || !(v.mu > 0.0) || !(v.eps * v.mu - std::norm(v.chi) > 0.0))
        fail(error_kind::non_positive_definite, "constitutive matrix not positive definite at theta = " + std::to_string(x));
    }
  }

  Kind kind_ = Kind::layers;
  double period_ = 1.0;
  std::vector<Layer> layers_;
  std::vector<double> bounds_;
  std::vector<cplx> feps_, fmu_, fchi_;
  std::vector<double> seps_, smu_;
  std::vector<cplx> schi_;
};

/// A Hermitian positive-definite matrix field on [lower, upper] with bounds
/// c0 <= w(x) <= c1.
class WeightField {
 public:
  using Evaluator = std::function<Mat2(double)>;

  WeightField() = default;
  WeightField(Evaluator eval, double lower, double upper, double c0, double c1)
      : eval_(std::move(eval)), lower_(lower), upper_(upper), c0_(c0), c1_(c1) {}

  bool contains(double x) const { return x >= lower_ && x <= upper_; }

  Mat2 operator()(double x) const {
    if (!contains(x)) fail(error_kind::out_of_domain, "x = " + std::to_string(x) + " outside weight domain");
    return eval_(x);
  }

  double lower() const { return lower_; }
  double upper() const { return upper_; }
  double c0() const { return c0_; }
  double c1() const { return c1_; }

 private:
  Evaluator eval_;
  double lower_ = 0.0;
  double upper_ = 0.0;
  double c0_ = 0.0;
  double c1_ = 0.0;
};

namespace detail {
inline std::pair<double, double> weight_bounds(const ConstitutiveProfile& prof) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = 0.0;
  for (double x : prof.probe_points()) {
    const auto [a, b] = hermitian_eigenvalues(hermitian_inverse(prof.constitutive(x)));
    lo = std::min(lo, a);
    hi = std::max(hi, b);
  }
  return {lo, hi};
}
}  // namespace detail

/// w = C^{-1} on the cell [-p/2, p/2].
inline WeightField build_weight(const ConstitutiveProfile& profile) {
  const auto [c0, c1] = detail::weight_bounds(profile);
  auto prof = std::make_shared<const ConstitutiveProfile>(profile);
  const double h = 0.5 * profile.period();
  return WeightField([prof](double x) { return hermitian_inverse(prof->constitutive(x)); }, -h, h, c0, c1);
}

inline std::vector<Mat2> sample_weight(const WeightField& field, std::span<const double> grid) {
  std::vector<Mat2> out;
  out.reserve(grid.size());
  for (double x : grid) out.push_back(field(x));
  return out;
}

/// One periodic photonic crystal.
class Medium {
 public:
  explicit Medium(ConstitutiveProfile profile, int fourier_order = 64)
      : profile_(std::make_shared<const ConstitutiveProfile>(std::move(profile))), order_(fourier_order) {
    if (order_ < 0) fail(error_kind::invalid_argument, "fourier order must be non-negative");
    cell_ = build_weight(*profile_);
    const double p = period();
    const auto q = profile_->nodes(-0.5 * p, 0.5 * p, 2.0 * pi * order_ / p);
    std::vector<Mat2> wq(q.x.size());
    for (std::size_t i = 0; i < q.x.size(); ++i) wq[i] = hermitian_inverse(profile_->constitutive(q.x[i]));
    coeffs_.assign(2 * static_cast<std::size_t>(order_) + 1, Mat2::Zero());
    for (int m = 0; m <= order_; ++m) {
      Mat2 acc = Mat2::Zero();
      const double g = 2.0 * pi * m / p;
      for (std::size_t i = 0; i < q.x.size(); ++i) acc += wq[i] * (q.w[i] * std::exp(-I * (g * q.x[i])));
      acc /= p;
      coeffs_[order_ + m] = acc;
      coeffs_[order_ - m] = acc.adjoint();
    }
    coeffs_[order_] = symmetrize(coeffs_[order_]);
  }

  double period() const { return profile_->period(); }
  const ConstitutiveProfile& profile() const { return *profile_; }
  bool homogeneous() const { return profile_->is_homogeneous(); }
  double c0() const { return cell_.c0(); }
  double c1() const { return cell_.c1(); }

  /// Weight restricted to the cell.
  const WeightField& cell_weight() const { return cell_; }

  /// Periodic extension to the whole line.
  WeightField weight_field() const {
    auto prof = profile_;
    const double inf = std::numeric_limits<double>::infinity();
    return WeightField([prof](double x) { return hermitian_inverse(prof->constitutive(x)); }, -inf, inf, c0(), c1());
  }

  Mat2 weight(double x) const { return hermitian_inverse(profile_->constitutive(x)); }
  Mat2 constitutive(double x) const { return profile_->constitutive(x); }

  int fourier_order() const { return order_; }
  const std::vector<Mat2>& fourier_coeffs() const { return coeffs_; }
  Mat2 fourier_coeff(int m) const {
    if (std::abs(m) > order_) fail(error_kind::out_of_domain, "fourier index beyond truncation");
    return coeffs_[static_cast<std::size_t>(m + order_)];
  }

  /// Truncated Fourier synthesis of w at theta.
  Mat2 reconstruct(double theta) const {
    Mat2 acc = Mat2::Zero();
    const double p = period();
    for (int m = -order_; m <= order_; ++m) acc += coeffs_[m + order_] * std::exp(I * (2.0 * pi * m * theta / p));
    return symmetrize(acc);
  }

  /// Mean of the constitutive matrix over [a, b].
  Mat2 averaged_constitutive(double a, double b) const {
    const auto q = profile_->nodes(a, b);
    Mat2 acc = Mat2::Zero();
    for (std::size_t i = 0; i < q.x.size(); ++i) acc += profile_->constitutive(q.x[i]) * q.w[i];
    return symmetrize(acc / (b - a));
  }

 private:
  std::shared_ptr<const ConstitutiveProfile> profile_;
  int order_;
  WeightField cell_;
  std::vector<Mat2> coeffs_;
};

/// How the full weight interpolates between the two media.
struct Transition {
  enum class Mode { compact, algebraic };
  Mode mode = Mode::compact;
  double halfwidth = 1.0;  // compact ramp on [-X, X]; X = 0 is a sharp step at 0
  double exponent = 1.0;   // algebraic tails decay like <x>^{-1-exponent}

  static Transition compact(double X) { return {Mode::compact, X, 1.0}; }
  static Transition algebraic(double eps) { return {Mode::algebraic, 0.0, eps}; }
};

/// Left and right media coupled through a full weight w on the line.
class JunctionSystem {
 public:
  JunctionSystem(Medium left, Medium right, Transition t)
      : left_(std::move(left)), right_(std::move(right)), transition_(t) {
    if (t.mode == Transition::Mode::compact) {
      if (!(t.halfwidth >= 0.0)) fail(error_kind::invalid_argument, "halfwidth must be non-negative");
      decay_ = std::numeric_limits<double>::infinity();
      halfwidth_ = t.halfwidth;
    } else {
      if (!(t.exponent > 0.0)) fail(error_kind::invalid_argument, "tail exponent must be positive");
      decay_ = t.exponent;
      halfwidth_ = 0.0;
    }
    const Medium l = left_, r = right_;
    const Transition tr = t;
    const double inf = std::numeric_limits<double>::infinity();
    full_ = WeightField(
        [l, r, tr](double x) {
          const double s = switch_of(tr, x);
          if (s == 0.0) return l.weight(x);
          if (s == 1.0) return r.weight(x);
          return symmetrize((1.0 - s) * l.weight(x) + s * r.weight(x));
        },
        -inf, inf, std::min(left_.c0(), right_.c0()), std::max(left_.c1(), right_.c1()));
  }

  /// Arbitrary full weight; `decay_exponent` is the claimed tail exponent.
  JunctionSystem(Medium left, Medium right, WeightField full, double decay_exponent, double halfwidth = 0.0)
      : left_(std::move(left)), right_(std::move(right)), full_(std::move(full)), decay_(decay_exponent),
        halfwidth_(halfwidth) {}

  const Medium& left() const { return left_; }
  const Medium& right() const { return right_; }
  const WeightField& full_weight() const { return full_; }
  double decay_exponent() const { return decay_; }
  double transition_halfwidth() const { return halfwidth_; }
  const std::optional<Transition>& transition() const { return transition_; }

  Mat2 weight(double x) const { return full_(x); }

  /// Switch value s(x); NaN for a custom weight.
  double switch_value(double x) const {
    if (!transition_) return std::numeric_limits<double>::quiet_NaN();
    return switch_of(*transition_, x);
  }

  /// True when w == w_left identically on [a, b].
  bool purely_left(double a, double b) const {
    (void)a;
    return transition_ && transition_->mode == Transition::Mode::compact && b <= -halfwidth_;
  }
  /// True when w == w_right identically on [a, b].
  bool purely_right(double a, double b) const {
    (void)b;
    return transition_ && transition_->mode == Transition::Mode::compact && a >= halfwidth_;
  }

  /// Mean of w^{-1} over [a, b].
  Mat2 averaged_constitutive(double a, double b) const {
    if (purely_left(a, b)) return left_.averaged_constitutive(a, b);
    if (purely_right(a, b)) return right_.averaged_constitutive(a, b);
    std::vector<double> cuts{a};
    for (double x : left_.profile().breakpoints(a, b)) cuts.push_back(x);
    for (double x : right_.profile().breakpoints(a, b)) cuts.push_back(x);
    for (double x : {-halfwidth_, 0.0, halfwidth_})
      if (x > a && x < b) cuts.push_back(x);
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
    Mat2 acc = Mat2::Zero();
    for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
      if (!(cuts[s + 1] > cuts[s])) continue;
      acc += integrate([this](double x) -> Mat2 { return hermitian_inverse(full_(x)); }, cuts[s], cuts[s + 1], 2);
    }
    return symmetrize(acc / (b - a));
  }

 private:
  static double switch_of(const Transition& t, double x) {
    if (t.mode == Transition::Mode::compact) {
      if (t.halfwidth == 0.0) return x >= 0.0 ? 1.0 : 0.0;
      return smoothstep((x + t.halfwidth) / (2.0 * t.halfwidth));
    }
    const double tail = 0.5 * std::pow(bracket(x), -1.0 - t.exponent);
    return x < 0.0 ? tail : 1.0 - tail;
  }

  Medium left_;
  Medium right_;
  WeightField full_;
  std::optional<Transition> transition_;
  double decay_ = 1.0;
  double halfwidth_ = 0.0;
};

inline JunctionSystem make_junction(const Medium& left, const Medium& right, Transition t) {
  return JunctionSystem(left, right, t);
}

struct AsymptoticsReport {
  double c_left = 0.0;
  double c_right = 0.0;
  double slope_left = std::numeric_limits<double>::quiet_NaN();   // NaN when the difference vanishes
  double slope_right = std::numeric_limits<double>::quiet_NaN();
  std::size_t samples_left = 0;
  std::size_t samples_right = 0;
};

namespace detail {
// Least-squares slope of log(upper envelope) against log<x>, one point per
// logarithmic bin. NaN with fewer than two non-zero bins.
inline double envelope_slope(const std::vector<std::pair<double, double>>& pts) {
  std::vector<std::pair<double, double>> nz;
  for (auto [x, d] : pts)
    if (d > 0.0) nz.emplace_back(std::log(bracket(x)), std::log(d));
  if (nz.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  double lo = nz.front().first, hi = lo;
  for (auto& p : nz) {
    lo = std::min(lo, p.first);
    hi = std::max(hi, p.first);
  }
  if (!(hi - lo > 1e-12)) return std::numeric_limits<double>::quiet_NaN();
  const int bins = 16;
  std::vector<double> bx(bins, 0.0), by(bins, -std::numeric_limits<double>::infinity());
  std::vector<int> cnt(bins, 0);
  for (auto& p : nz) {
    int b = static_cast<int>((p.first - lo) / (hi - lo) * bins);
    b = std::clamp(b, 0, bins - 1);
    if (p.second > by[b]) {
      by[b] = p.second;
      bx[b] = p.first;
    }
    ++cnt[b];
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (int b = 0; b < bins; ++b) {
    if (!cnt[b]) continue;
    sx += bx[b];
    sy += by[b];
    sxx += bx[b] * bx[b];
    sxy += bx[b] * by[b];
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double den = n * sxx - sx * sx;
  if (!(std::abs(den) > 0.0)) return std::numeric_limits<double>::quiet_NaN();
  return (n * sxy - sx * sy) / den;
}
}  // namespace detail

/// Smallest constants C with ||w - w_side|| <= C <x>^{-1-eps} on the samples,
/// plus log-log slope fits of the differences.
inline AsymptoticsReport validate_asymptotics(const JunctionSystem& sys, std::span<const double> xs) {
  AsymptoticsReport rep;
  const double e = sys.decay_exponent();
  const double power = std::isfinite(e) ? 1.0 + e : 2.0;
  std::vector<std::pair<double, double>> left, right;
  for (double x : xs) {
    const Mat2 w = sys.weight(x);
    if (x < 0.0) {
      const double d = operator_norm(w - sys.left().weight(x));
      rep.c_left = std::max(rep.c_left, d * std::pow(bracket(x), power));
      left.emplace_back(x, d);
    } else if (x > 0.0) {
      const double d = operator_norm(w - sys.right().weight(x));
      rep.c_right = std::max(rep.c_right, d * std::pow(bracket(x), power));
      right.emplace_back(x, d);
    }
  }
  rep.samples_left = left.size();
  rep.samples_right = right.size();
  rep.slope_left = detail::envelope_slope(left);
  rep.slope_right = detail::envelope_slope(right);
  const double limit = -power + 0.1;
  const bool compact = sys.transition() && sys.transition()->mode == Transition::Mode::compact;
  auto bad = [&](double slope, double c) { return !compact && c > 0.0 && !std::isnan(slope) && slope > limit; };
  if (bad(rep.slope_left, rep.c_left))
    fail(error_kind::assumption_violated, "left tail difference decays with slope " + std::to_string(rep.slope_left) +
                                              ", slower than required " + std::to_string(-power));
  if (bad(rep.slope_right, rep.c_right))
    fail(error_kind::assumption_violated, "right tail difference decays with slope " +
                                              std::to_string(rep.slope_right) + ", slower than required " +
                                              std::to_string(-power));
  return rep;
}

}  // namespace phc

#pragma once

#include "core.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <array>

namespace phc {

/// 20-point Gauss-Legendre rule on [-1, 1], expanded to full node/weight arrays.
struct gauss_rule {
  static constexpr int size = 20;
  std::array<double, size> nodes{};
  std::array<double, size> weights{};

  static const gauss_rule& get() {
    static const gauss_rule rule = [] {
      using G = boost::math::quadrature::gauss<double, size>;
      gauss_rule r;
      const auto& a = G::abscissa();
      const auto& w = G::weights();
      const int h = size / 2;
      for (int i = 0; i < h; ++i) {
        r.nodes[h - 1 - i] = -a[i];
        r.weights[h - 1 - i] = w[i];
        r.nodes[h + i] = a[i];
        r.weights[h + i] = w[i];
      }
      return r;
    }();
    return rule;
  }
};

/// Integral of f over [a, b] split into `pieces` equal Gauss-Legendre panels.
template <class F>
auto integrate(F&& f, double a, double b, int pieces = 1) {
  const auto& g = gauss_rule::get();
  using R = decltype(f(a));
  R acc{};
  bool first = true;
  const double step = (b - a) / pieces;
  for (int p = 0; p < pieces; ++p) {
    const double lo = a + p * step;
    const double half = 0.5 * step;
    const double mid = lo + half;
    for (int i = 0; i < gauss_rule::size; ++i) {
      R v = f(mid + half * g.nodes[i]) * (half * g.weights[i]);
      if (first) {
        acc = v;
        first = false;
      } else {
        acc += v;
      }
    }
  }
  return acc;
}

}  // namespace phc

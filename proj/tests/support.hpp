#pragma once

#include <phc/phc.hpp>

#include <random>

namespace phc::test {

inline constexpr double stack_period = 1.5;

inline ConstitutiveProfile stack_a_profile() { return ConstitutiveProfile::layered({{1.0, 1.0, 1.0, {}}, {0.5, 4.0, 1.0, {}}}); }
inline ConstitutiveProfile stack_b_profile() { return ConstitutiveProfile::layered({{0.5, 4.0, 1.0, {}}, {1.0, 1.0, 1.0, {}}}); }

inline Medium stack_a(int order = 64) { return Medium(stack_a_profile(), order); }
inline Medium stack_b(int order = 64) { return Medium(stack_b_profile(), order); }
inline Medium identity(double period = 1.0) { return Medium(ConstitutiveProfile::homogeneous(1.0, 1.0, {}, period), 8); }
inline Medium uniform(double eps, double period = 1.0) {
  return Medium(ConstitutiveProfile::homogeneous(eps, 1.0, {}, period), 8);
}

// closed-form gap edges of the stack above
inline double edge_lo() { return std::asin(2.0 * std::sqrt(2.0) / 3.0); }
inline double edge_hi() { return pi - std::asin(2.0 * std::sqrt(2.0) / 3.0); }

/// Random two-layer stack with chi = 0.
inline ConstitutiveProfile random_two_layer(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.3, 1.2), e(1.0, 6.0), m(1.0, 2.0);
  return ConstitutiveProfile::layered({{d(rng), e(rng), m(rng), {}}, {d(rng), e(rng), m(rng), {}}});
}

inline std::shared_ptr<const BlochBasis> bloch_basis(const Medium& m, int cells, int per_cell) {
  return std::make_shared<const BlochBasis>(m, Grid::periodic(m.period(), cells, per_cell));
}

}  // namespace phc::test

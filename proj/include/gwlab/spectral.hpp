#pragma once

// Perron root and eigenvectors of small nonnegative primitive matrices,
// normalised so that sum(u) = 1 and v'u = 1.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "gwlab/errors.hpp"
#include "gwlab/linalg.hpp"
#include "gwlab/model.hpp"

namespace gwlab {

struct SpectralData {
  double rho = 0.0;
  Vector<double> u;  ///< right eigenvector, sum(u) == 1
  Vector<double> v;  ///< left eigenvector, v'u == 1
  double residual = 0.0;
};

struct PerronOptions {
  bool check_primitive = true;
  std::size_t max_iterations = 100000;
  double rho_tolerance = 1e-13;
  double residual_tolerance = 1e-10;
};

/// True when some power up to 2 d^2 of the sign pattern is strictly positive.
inline bool is_primitive(const Matrix<double>& m) {
  const std::size_t d = m.size();
  Matrix<double> pattern(d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) pattern(i, j) = m(i, j) > 0.0 ? 1.0 : 0.0;
  Matrix<double> acc = pattern;
  for (std::size_t k = 1; k <= 2 * d * d; ++k) {
    if (acc.min_entry() > 0.0) return true;
    acc = acc * pattern;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) acc(i, j) = acc(i, j) > 0.0 ? 1.0 : 0.0;
  }
  return false;
}

namespace detail {

/// Power iteration on a (or its transpose); returns the l1-normalised vector.
inline Vector<double> dominant_vector(const Matrix<double>& a, const PerronOptions& opt,
                                      double& rho_out) {
  const std::size_t d = a.size();
  Vector<double> x(d, 1.0 / static_cast<double>(d));
  double rho_prev = -1.0;
  double residual = 0.0;
  for (std::size_t it = 0; it < opt.max_iterations; ++it) {
    Vector<double> y = a * x;
    const double rho = sum(y) / sum(x);
    residual = 0.0;
    for (std::size_t i = 0; i < d; ++i) residual = std::max(residual, std::abs(y[i] - rho * x[i]));
    const double norm = sum(y);
    if (!(norm > 0.0)) throw std::invalid_argument("power iteration collapsed to zero vector");
    for (auto& yi : y) yi /= norm;
    x = std::move(y);
    if (std::abs(rho - rho_prev) < opt.rho_tolerance && residual <= opt.residual_tolerance * rho) {
      rho_out = rho;
      return x;
    }
    rho_prev = rho;
  }
  throw NumericalFailure("power iteration did not converge", residual);
}

}  // namespace detail

inline SpectralData perron_triple(const Matrix<double>& m, const PerronOptions& opt = {}) {
  const std::size_t d = m.size();
  if (d == 0) throw std::invalid_argument("perron_triple: empty matrix");
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (!(m(i, j) >= 0.0)) throw std::invalid_argument("perron_triple: negative entry");
  if (opt.check_primitive && !is_primitive(m))
    throw std::invalid_argument("perron_triple: matrix is not primitive");

  SpectralData out;
  double rho_left = 0.0;
  out.u = detail::dominant_vector(m, opt, out.rho);
  Vector<double> v = detail::dominant_vector(m.transposed(), opt, rho_left);

  const double su = sum(out.u);
  for (auto& x : out.u) x /= su;
  const double vu = dot(v, out.u);
  for (auto& x : v) x /= vu;
  out.v = std::move(v);

  const auto mu = m * out.u;
  const auto vm = left_multiply(out.v, m);
  double residual = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    residual = std::max(residual, std::abs(mu[i] - out.rho * out.u[i]));
    residual = std::max(residual, std::abs(vm[i] - out.rho * out.v[i]));
  }
  out.residual = residual;
  if (residual > opt.residual_tolerance * out.rho)
    throw NumericalFailure("perron_triple residual above tolerance", residual);
  return out;
}

/// Perron data of M(s); at s = h* this gives rho_{h*}, u_{h*}, v_{h*}.
inline SpectralData spectral_at(const OffspringLaw& law, const Vector<double>& s,
                                const PerronOptions& opt = {}) {
  return perron_triple(eval_mean_matrix(law, s), opt);
}

/// sum_k weights_k q_k[s0, x]. With weights = v, s0 = 1, x = u this is Q.
inline double weighted_Q(const Vector<double>& weights, const OffspringLaw& law,
                         const Vector<double>& s0, const Vector<double>& x) {
  require_dim(weights.size(), law.dim(), "weighted_Q");
  return dot(weights, eval_q_form(law, s0, x));
}

/// Q = v' q[1, u] of the law at s = 1.
inline double curvature_Q(const OffspringLaw& law, const SpectralData& at_one) {
  return weighted_Q(at_one.v, law, Vector<double>(law.dim(), 1.0), at_one.u);
}

/// Largest entrywise relative deviation of M^n / rho^n from u v'.
inline double power_convergence_diag(const Matrix<double>& m, unsigned n,
                                     const PerronOptions& opt = {}) {
  const auto sd = perron_triple(m, opt);
  auto mn = power(m, n);
  mn *= std::pow(sd.rho, -static_cast<double>(n));
  double worst = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double target = sd.u[i] * sd.v[j];
      worst = std::max(worst, std::abs(mn(i, j) - target) / target);
    }
  return worst;
}

}  // namespace gwlab

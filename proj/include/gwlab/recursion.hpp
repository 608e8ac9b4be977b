#pragma once

// Generating-function recursions for the total progeny Y_n.
//
// Index conventions used by every function in this header:
//   t_n(s) = E[s^{Y_n}]                         t_0 = s,  t_n = s f(t_{n-1})
//   h_n(s) = E[s^{Y_n}; Z_n = 0]                h_0 = 0,  h_n = s f(h_{n-1})
//   g_n(s) = h_{n+1}(s) - h_n(s) = E[s^{Y_{n+1}}; N = n + 1]
//   E[s^{Y_n} | N = n] = (h_n - h_{n-1})(s) / (h_n - h_{n-1})(1)
//   phi_n(s) = prod_{k<n} B(t_k(s)) = E[s^{Y0_{n-1}}]
//   P_n(x, s) = E[x^{Z_n} s^{Y_n}]              P_0 = x s,  P_n = s f(P_{n-1})
// h_n is the with-indicator transform, so h_n(1) = P(Z_n = 0) = f_n(0).
//
// In compensated mode the recursion additionally carries 1 - t_n, 1 - h_n,
// 1 - f_n(0), t_n - h_n and h_n - h_{n-1} through exact divided differences
// of f, so ratios of quantities of order rho^n keep full relative precision.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "gwlab/errors.hpp"
#include "gwlab/linalg.hpp"
#include "gwlab/model.hpp"
#include "gwlab/spectral.hpp"

namespace gwlab {

/// Point of the unit cube stored together with its complement 1 - s.
///
/// Points within 1e-16 of 1 are only representable through the complement.
template <class Real>
struct CubePoint {
  Vector<Real> value;
  Vector<Real> complement;

  static CubePoint from_value(Vector<Real> v) {
    CubePoint p;
    p.complement.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) p.complement[i] = Real(1) - v[i];
    p.value = std::move(v);
    return p;
  }

  static CubePoint from_complement(Vector<Real> c) {
    CubePoint p;
    p.value.resize(c.size());
    for (std::size_t i = 0; i < c.size(); ++i) p.value[i] = Real(1) - c[i];
    p.complement = std::move(c);
    return p;
  }

  static CubePoint filled(std::size_t d, double x) {
    return from_value(Vector<Real>(d, static_cast<Real>(x)));
  }

  std::size_t dim() const noexcept { return value.size(); }

  bool is_one() const {
    return std::all_of(complement.begin(), complement.end(), [](const Real& c) { return c == Real(0); });
  }
};

struct RecursionOptions {
  bool compensated = false;
};

template <class Real>
struct ProgenyState {
  std::size_t n = 0;
  Vector<Real> t, t_complement;
  Vector<Real> h, h_complement;
  Vector<Real> f_s;       ///< f_n(s)
  Vector<Real> f_zero;    ///< f_n(0) = P(Z_n = 0)
  Vector<Real> survival;  ///< 1 - f_n(0)
  Vector<Real> t_minus_h;
  Vector<Real> h_increment;  ///< h_n - h_{n-1}; zero at n = 0
};

namespace detail {

template <class Real>
Vector<Real> scaled_step(const Vector<Real>& s, const Vector<Real>& x) {
  return hadamard(s, x);
}

/// Keeps whichever of (value, 1 - value) is more accurate and rebuilds the other.
/// Without this a value that rounded to 1 could never move away from it.
template <class Real>
void reconcile(Vector<Real>& value, Vector<Real>& complement) {
  for (std::size_t i = 0; i < value.size(); ++i) {
    if (complement[i] < Real(0.5))
      value[i] = Real(1) - complement[i];
    else
      complement[i] = Real(1) - value[i];
  }
}

/// 1 - s f(x) from the complements of s and x.
template <class Real>
Vector<Real> complement_step(const OffspringLaw& law, const CubePoint<Real>& s,
                             const Vector<Real>& x_complement) {
  auto out = complement_map(law, x_complement);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s.complement[i] + s.value[i] * out[i];
  return out;
}

}  // namespace detail

/// Synchronised t_n, h_n, f_n(s), f_n(0) recursion.
template <class Real>
class ProgenyRecursion {
 public:
  ProgenyRecursion(const OffspringLaw& law, CubePoint<Real> s, RecursionOptions opt = {})
      : law_(&law), s_(std::move(s)), opt_(opt) {
    require_dim(s_.dim(), law.dim(), "progeny recursion");
    const std::size_t d = law.dim();
    st_.t = s_.value;
    st_.t_complement = s_.complement;
    st_.h.assign(d, Real(0));
    st_.h_complement.assign(d, Real(1));
    st_.f_s = s_.value;
    st_.f_zero.assign(d, Real(0));
    st_.survival.assign(d, Real(1));
    st_.t_minus_h = s_.value;
    st_.h_increment.assign(d, Real(0));
    h_prev_ = st_.h;
  }

  const ProgenyState<Real>& state() const noexcept { return st_; }
  const CubePoint<Real>& point() const noexcept { return s_; }

  void advance() {
    const OffspringLaw& law = *law_;
    const auto& s = s_.value;
    ProgenyState<Real> next;
    next.n = st_.n + 1;
    next.t = detail::scaled_step(s, eval_offspring_pgf(law, st_.t));
    next.h = detail::scaled_step(s, eval_offspring_pgf(law, st_.h));
    next.f_s = eval_offspring_pgf(law, st_.f_s);
    next.f_zero = eval_offspring_pgf(law, st_.f_zero);
    if (opt_.compensated) {
      next.t_complement = detail::complement_step(law, s_, st_.t_complement);
      next.h_complement = detail::complement_step(law, s_, st_.h_complement);
      next.survival = complement_map(law, st_.survival);
      next.t_minus_h = hadamard(s, secant_matrix(law, st_.t, st_.h) * st_.t_minus_h);
      if (st_.n == 0)
        next.h_increment = next.h;
      else
        next.h_increment = hadamard(s, secant_matrix(law, st_.h, h_prev_) * st_.h_increment);
      detail::reconcile(next.t, next.t_complement);
      detail::reconcile(next.h, next.h_complement);
      detail::reconcile(next.f_zero, next.survival);
    } else {
      const std::size_t d = law.dim();
      next.t_complement.resize(d);
      next.h_complement.resize(d);
      next.survival.resize(d);
      next.t_minus_h.resize(d);
      next.h_increment.resize(d);
      for (std::size_t i = 0; i < d; ++i) {
        next.t_complement[i] = Real(1) - next.t[i];
        next.h_complement[i] = Real(1) - next.h[i];
        next.survival[i] = Real(1) - next.f_zero[i];
        next.t_minus_h[i] = next.t[i] - next.h[i];
        next.h_increment[i] = next.h[i] - st_.h[i];
      }
    }
    h_prev_ = st_.h;
    st_ = std::move(next);
  }

  void advance_to(std::size_t n) {
    while (st_.n < n) advance();
  }

 private:
  const OffspringLaw* law_;
  CubePoint<Real> s_;
  RecursionOptions opt_;
  ProgenyState<Real> st_;
  Vector<Real> h_prev_;
};

/// f_0(s) = s, ..., f_n(s).
template <class Real>
std::vector<Vector<Real>> iterate_fn(const OffspringLaw& law, const Vector<Real>& s, std::size_t n) {
  require_dim(s.size(), law.dim(), "iterate_fn");
  std::vector<Vector<Real>> out;
  out.reserve(n + 1);
  out.push_back(s);
  for (std::size_t k = 0; k < n; ++k) out.push_back(eval_offspring_pgf(law, out.back()));
  return out;
}

template <class Real>
std::vector<ProgenyState<Real>> progeny_sequences(const OffspringLaw& law, const CubePoint<Real>& s,
                                                  std::size_t n, RecursionOptions opt = {}) {
  ProgenyRecursion<Real> rec(law, s, opt);
  std::vector<ProgenyState<Real>> out;
  out.reserve(n + 1);
  out.push_back(rec.state());
  for (std::size_t k = 0; k < n; ++k) {
    rec.advance();
    out.push_back(rec.state());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Fixed points

struct FixedPointOptions {
  double tolerance = 1e-13;
  std::size_t max_iterations = 10'000'000;
  bool aitken = false;
};

struct FixedPointResult {
  Vector<double> value;
  std::size_t iterations = 0;
  double defect = 0.0;  ///< max |value - map(value)|
};

namespace detail {

template <class Map>
FixedPointResult picard(Map&& map, Vector<double> x, const FixedPointOptions& opt, const char* what) {
  double defect = 0.0;
  for (std::size_t it = 1; it <= opt.max_iterations; ++it) {
    Vector<double> next = map(x);
    if (opt.aitken) {
      Vector<double> next2 = map(next);
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double d1 = next[i] - x[i];
        const double d2 = next2[i] - next[i];
        const double denom = d2 - d1;
        double acc = denom != 0.0 ? next2[i] - d2 * d2 / denom : next2[i];
        if (!(acc >= 0.0 && acc <= 1.0)) acc = next2[i];
        next[i] = acc;
      }
    }
    const Vector<double> image = map(next);
    defect = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) defect = std::max(defect, std::abs(image[i] - next[i]));
    x = std::move(next);
    if (defect <= opt.tolerance) return {std::move(x), it, defect};
  }
  throw NumericalFailure(std::string(what) + ": iteration cap reached", defect);
}

}  // namespace detail

/// Extinction probabilities mu: smallest root of f(s) = s, via f_n(0) increasing.
/// Returns exactly 1 when the Perron root is at most 1.
inline FixedPointResult extinction_mu(const OffspringLaw& law, const FixedPointOptions& opt = {}) {
  const std::size_t d = law.dim();
  const auto m = mean_matrix(law);
  if (is_primitive(m) && perron_triple(m).rho <= 1.0 + 1e-12)
    return {Vector<double>(d, 1.0), 0, 0.0};
  return detail::picard([&](const Vector<double>& x) { return eval_offspring_pgf(law, x); },
                        Vector<double>(d, 0.0), opt, "extinction_mu");
}

/// h*(s), the fixed point of h = s f(h), reached from below through h_n(s).
inline FixedPointResult solve_hstar(const OffspringLaw& law, const Vector<double>& s,
                                    const FixedPointOptions& opt = {}) {
  require_dim(s.size(), law.dim(), "solve_hstar");
  for (double x : s)
    if (!(x > 0.0 && x <= 1.0)) throw std::invalid_argument("solve_hstar: need 0 < s <= 1");
  if (std::all_of(s.begin(), s.end(), [](double x) { return x == 1.0; })) return extinction_mu(law, opt);
  return detail::picard(
      [&](const Vector<double>& h) { return hadamard(s, eval_offspring_pgf(law, h)); },
      Vector<double>(law.dim(), 0.0), opt, "solve_hstar");
}

// ---------------------------------------------------------------------------
// Conditional transforms

/// E[s^{Y_n} | Z_n > 0, Z_0 = e_j] = (t_n - h_n)(s) / (1 - f_n(0)).
template <class Real>
Vector<Real> conditional_lt_survival(const OffspringLaw& law, const CubePoint<Real>& s, std::size_t n,
                                     RecursionOptions opt = {}) {
  ProgenyRecursion<Real> rec(law, s, opt);
  rec.advance_to(n);
  const auto& st = rec.state();
  Vector<Real> out(law.dim());
  for (std::size_t j = 0; j < law.dim(); ++j) {
    if (!(st.survival[j] > Real(0)))
      throw std::invalid_argument("conditional_lt_survival: survival probability vanishes");
    out[j] = st.t_minus_h[j] / st.survival[j];
  }
  return out;
}

/// E[s^{Y_n} | N = n, Z_0 = e_j] = (h_n - h_{n-1})(s) / (h_n - h_{n-1})(1).
template <class Real>
Vector<Real> conditional_lt_extinction(const OffspringLaw& law, const CubePoint<Real>& s,
                                       std::size_t n, RecursionOptions opt = {}) {
  if (n == 0) throw std::invalid_argument("conditional_lt_extinction: need n >= 1");
  ProgenyRecursion<Real> at_s(law, s, opt);
  ProgenyRecursion<Real> at_one(law, CubePoint<Real>::filled(law.dim(), 1.0), opt);
  at_s.advance_to(n);
  at_one.advance_to(n);
  Vector<Real> out(law.dim());
  for (std::size_t j = 0; j < law.dim(); ++j) {
    const Real mass = at_one.state().h_increment[j];
    if (!(mass > Real(0)))
      throw std::invalid_argument("conditional_lt_extinction: P(N = n) vanishes");
    out[j] = at_s.state().h_increment[j] / mass;
  }
  return out;
}

/// phi_n(s) = prod_{k=0}^{n-1} B(t_k(s)), the transform of Y0_{n-1}.
template <class Real>
Real immigration_lt(const OffspringLaw& law, const ImmigrationLaw& ilaw, const CubePoint<Real>& s,
                    std::size_t n, RecursionOptions opt = {}) {
  require_dim(ilaw.dim(), law.dim(), "immigration_lt");
  if (n == 0) throw std::invalid_argument("immigration_lt: need n >= 1");
  ProgenyRecursion<Real> rec(law, s, opt);
  Real product(1);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& st = rec.state();
    if (opt.compensated)
      product *= Real(1) - immigration_complement(ilaw, st.t_complement);
    else
      product *= eval_immigration_pgf(ilaw, st.t);
    if (k + 1 < n) rec.advance();
  }
  return product;
}

/// P_0(x, s), ..., P_n(x, s).
template <class Real>
std::vector<Vector<Real>> joint_pgf_sequence(const OffspringLaw& law, const Vector<Real>& x,
                                             const Vector<Real>& s, std::size_t n) {
  require_dim(x.size(), law.dim(), "joint_pgf");
  require_dim(s.size(), law.dim(), "joint_pgf");
  std::vector<Vector<Real>> out;
  out.reserve(n + 1);
  out.push_back(hadamard(x, s));
  for (std::size_t k = 0; k < n; ++k) out.push_back(hadamard(s, eval_offspring_pgf(law, out.back())));
  return out;
}

template <class Real>
Vector<Real> joint_pgf(const OffspringLaw& law, const Vector<Real>& x, const Vector<Real>& s,
                       std::size_t n) {
  return joint_pgf_sequence(law, x, s, n).back();
}

/// L_{n,j}(s, m) = (P_{n,j}(mu, s) - P_{n,j}(f_m(0), s)) / (mu_j - f_{m+n,j}(0)),
/// the transform of Y_n given Z_{n+m} > 0 and eventual extinction.
template <class Real>
Vector<Real> doomed_lt(const OffspringLaw& law, const CubePoint<Real>& s, std::size_t n, std::size_t m,
                       RecursionOptions opt = {}, const std::optional<Vector<double>>& mu_hint = {}) {
  require_dim(s.dim(), law.dim(), "doomed_lt");
  const std::size_t d = law.dim();
  const Vector<double> mu_d = mu_hint ? *mu_hint : extinction_mu(law).value;
  Vector<Real> mu(d);
  for (std::size_t i = 0; i < d; ++i) mu[i] = static_cast<Real>(mu_d[i]);

  // Gap mu - f_k(0) for k = 0..m, then rescaled so that long m cannot underflow.
  Vector<Real> x(d, Real(0));
  Vector<Real> gap = mu;
  for (std::size_t k = 0; k < m; ++k) {
    Vector<Real> x_next = eval_offspring_pgf(law, x);
    if (opt.compensated) {
      gap = secant_matrix(law, mu, x) * gap;
    } else {
      for (std::size_t i = 0; i < d; ++i) gap[i] = mu[i] - x_next[i];
    }
    x = std::move(x_next);
  }
  Real scale(1);
  if (!opt.compensated)
    for (std::size_t i = 0; i < d; ++i)
      if (!(gap[i] > Real(64) * std::numeric_limits<Real>::epsilon() * mu[i]))
        throw NumericalFailure("doomed_lt: mu - f_m(0) lost to rounding, use compensated mode",
                               static_cast<double>(gap[i]));
  if (opt.compensated) {
    scale = max_abs(gap);
    if (!(scale > Real(0))) throw NumericalFailure("doomed_lt: extinction gap vanished", 0.0);
    for (auto& g : gap) g /= scale;
  }

  const auto& sv = s.value;
  Vector<Real> upper = hadamard(mu, sv);
  Vector<Real> lower = hadamard(x, sv);
  Vector<Real> numerator = hadamard(sv, gap);
  Vector<Real> denominator = gap;
  Vector<Real> x_tail = x;
  for (std::size_t k = 0; k < n; ++k) {
    Vector<Real> upper_next = hadamard(sv, eval_offspring_pgf(law, upper));
    Vector<Real> lower_next = hadamard(sv, eval_offspring_pgf(law, lower));
    Vector<Real> x_next = eval_offspring_pgf(law, x_tail);
    if (opt.compensated) {
      numerator = hadamard(sv, secant_matrix(law, upper, lower) * numerator);
      denominator = secant_matrix(law, mu, x_tail) * denominator;
    } else {
      for (std::size_t i = 0; i < d; ++i) {
        numerator[i] = upper_next[i] - lower_next[i];
        denominator[i] = mu[i] - x_next[i];
      }
    }
    upper = std::move(upper_next);
    lower = std::move(lower_next);
    x_tail = std::move(x_next);
  }
  if (n == 0 && !opt.compensated) {
    numerator = hadamard(sv, gap);
  }

  Vector<Real> out(d);
  for (std::size_t j = 0; j < d; ++j) {
    using std::abs;
    if (!(abs(denominator[j]) * scale > Real(1e-300)))
      throw NumericalFailure("doomed_lt: denominator below 1e-300", 0.0);
    out[j] = numerator[j] / denominator[j];
  }
  return out;
}

struct DoomedLimitOptions {
  std::size_t m_start = 64;
  std::size_t m_cap = 65536;
  double tolerance = 1e-10;
};

template <class Real>
struct DoomedLimit {
  Vector<Real> value;
  std::size_t m = 0;
  bool converged = false;
};

/// lim_{m -> inf} L_n(s, m) by doubling m until successive values agree.
template <class Real>
DoomedLimit<Real> doomed_lt_limit(const OffspringLaw& law, const CubePoint<Real>& s, std::size_t n,
                                  const DoomedLimitOptions& lim = {}, RecursionOptions opt = {true}) {
  const auto mu = extinction_mu(law).value;
  std::size_t m = lim.m_start;
  Vector<Real> prev = doomed_lt(law, s, n, m, opt, mu);
  while (m < lim.m_cap) {
    m *= 2;
    Vector<Real> cur = doomed_lt(law, s, n, m, opt, mu);
    Real diff(0);
    for (std::size_t j = 0; j < cur.size(); ++j) {
      using std::abs;
      diff = std::max<Real>(diff, abs(cur[j] - prev[j]));
    }
    prev = std::move(cur);
    if (diff < Real(lim.tolerance)) return {std::move(prev), m, true};
  }
  return {std::move(prev), m, false};
}

/// f*(s) = f(mu s) / mu, the subcritical law of a supercritical process
/// conditioned on extinction. Masses are renormalised to absorb the fixed-point defect.
inline OffspringLaw conjugate_subcritical(const OffspringLaw& law, const Vector<double>& mu) {
  require_dim(mu.size(), law.dim(), "conjugate_subcritical");
  const std::size_t d = law.dim();
  std::vector<std::vector<Atom>> per_type(d);
  for (std::size_t j = 0; j < d; ++j) {
    if (!(mu[j] > 0.0)) throw std::invalid_argument("conjugate_subcritical: mu_j must be positive");
    double total = 0.0;
    for (const auto& a : law.type(j).atoms()) {
      const double p = a.p * detail::monomial(std::span<const double>(mu), a.counts) / mu[j];
      per_type[j].push_back({a.counts, p});
      total += p;
    }
    for (auto& a : per_type[j]) a.p /= total;
  }
  return OffspringLaw::from_atoms(std::move(per_type));
}

/// E[total progeny through generation n | Z_0 = e_m] = sum_{j<=n} (M^j 1)_m.
inline Vector<double> progeny_mean(const OffspringLaw& law, std::size_t n) {
  const auto m = mean_matrix(law);
  Vector<double> term(law.dim(), 1.0);
  Vector<double> total = term;
  for (std::size_t j = 1; j <= n; ++j) {
    term = m * term;
    for (std::size_t i = 0; i < total.size(); ++i) total[i] += term[i];
  }
  return total;
}

}  // namespace gwlab

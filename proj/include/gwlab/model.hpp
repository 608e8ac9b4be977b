#pragma once

// Finite-support offspring and immigration laws with exact p.g.f. evaluation.
//
// Every derivative is obtained by differentiating the support table term by
// term, so moments and class witnesses carry no discretisation error.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gwlab/linalg.hpp"
#include "gwlab/rng.hpp"

namespace gwlab {

/// Offspring (or immigrant) counts per type; lexicographic order is canonical.
using MultiIndex = std::vector<std::uint64_t>;

inline constexpr double kMassTolerance = 1e-12;

struct Atom {
  MultiIndex counts;
  double p = 0.0;
};

namespace detail {

/// s^i with 0^0 == 1.
template <class Real>
Real monomial(std::span<const Real> s, const MultiIndex& i) {
  Real value(1);
  for (std::size_t l = 0; l < i.size(); ++l)
    if (i[l] != 0) value *= ipow(s[l], i[l]);
  return value;
}

/// Partial derivative of s^i with respect to the coordinates in `wrt`
/// (repetitions allowed), evaluated at s.
template <class Real>
Real monomial_derivative(std::span<const Real> s, MultiIndex i,
                         std::initializer_list<std::size_t> wrt) {
  Real coefficient(1);
  for (std::size_t l : wrt) {
    if (i[l] == 0) return Real(0);
    coefficient *= static_cast<Real>(i[l]);
    --i[l];
  }
  return coefficient * monomial(s, i);
}

/// sum_{j<k} a^j b^(k-1-j), so that a^k - b^k = (a - b) * power_sum(a, b, k).
template <class Real>
Real power_sum(const Real& a, const Real& b, std::uint64_t k) {
  Real acc(0);
  Real b_pow(1);
  for (std::uint64_t j = 0; j < k; ++j) {
    acc = acc * a + b_pow;
    b_pow *= b;
  }
  return acc;
}

}  // namespace detail

/// One finite-support distribution on d-tuples of counts.
class Distribution {
 public:
  Distribution() = default;

  Distribution(std::size_t dim, std::vector<Atom> atoms) : dim_(dim) {
    if (dim == 0) throw std::invalid_argument("distribution dimension must be positive");
    if (atoms.empty()) throw std::invalid_argument("distribution has empty support");
    for (const auto& a : atoms) {
      require_dim(a.counts.size(), dim, "support entry");
      if (!(a.p >= 0.0)) throw std::invalid_argument("negative or NaN probability");
    }
    std::sort(atoms.begin(), atoms.end(),
              [](const Atom& x, const Atom& y) { return x.counts < y.counts; });
    for (auto& a : atoms) {
      if (!atoms_.empty() && atoms_.back().counts == a.counts)
        atoms_.back().p += a.p;
      else
        atoms_.push_back(std::move(a));
    }
    double total = 0.0;
    for (const auto& a : atoms_) total += a.p;
    if (std::abs(total - 1.0) > kMassTolerance)
      throw std::invalid_argument("probabilities sum to " + std::to_string(total) +
                                  ", not 1 within 1e-12");
    cumulative_.reserve(atoms_.size());
    double running = 0.0;
    for (const auto& a : atoms_) cumulative_.push_back(running += a.p);
  }

  std::size_t dim() const noexcept { return dim_; }
  const std::vector<Atom>& atoms() const noexcept { return atoms_; }

  template <class Real>
  Real pgf(std::span<const Real> s) const {
    require_dim(s.size(), dim_, "p.g.f. argument");
    Real value(0);
    for (const auto& a : atoms_) value += static_cast<Real>(a.p) * detail::monomial(s, a.counts);
    return value;
  }

  template <class Real>
  Real derivative(std::span<const Real> s, std::initializer_list<std::size_t> wrt) const {
    require_dim(s.size(), dim_, "p.g.f. argument");
    Real value(0);
    for (const auto& a : atoms_)
      value += static_cast<Real>(a.p) * detail::monomial_derivative(s, a.counts, wrt);
    return value;
  }

  /// Row l of the divided difference: pgf(a) - pgf(b) = sum_l (a_l - b_l) * secant_row[l].
  ///
  /// Every term is a nonnegative product when a, b >= 0, so the row keeps full
  /// relative precision even when a and b agree to many digits.
  template <class Real>
  Vector<Real> secant_row(std::span<const Real> a, std::span<const Real> b) const {
    require_dim(a.size(), dim_, "secant argument");
    require_dim(b.size(), dim_, "secant argument");
    Vector<Real> row(dim_, Real(0));
    for (const auto& atom : atoms_) {
      const auto& i = atom.counts;
      Real prefix(1);
      for (std::size_t l = 0; l < dim_; ++l) {
        if (i[l] != 0) {
          Real suffix(1);
          for (std::size_t m = l + 1; m < dim_; ++m)
            if (i[m] != 0) suffix *= ipow(b[m], i[m]);
          row[l] += static_cast<Real>(atom.p) * prefix * detail::power_sum(a[l], b[l], i[l]) * suffix;
          prefix *= ipow(a[l], i[l]);
        }
      }
    }
    return row;
  }

  /// Index of the atom selected by a uniform u in [0, 1).
  std::size_t select(double u) const {
    const double target = u * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), target);
    if (it == cumulative_.end()) --it;
    return static_cast<std::size_t>(it - cumulative_.begin());
  }

  const MultiIndex& sample(CounterRng& rng) const { return atoms_[select(rng.uniform())].counts; }

 private:
  std::size_t dim_ = 0;
  std::vector<Atom> atoms_;
  std::vector<double> cumulative_;
};

/// Offspring law: one Distribution per parent type; houses f(s) and p_m(i).
class OffspringLaw {
 public:
  OffspringLaw() = default;

  explicit OffspringLaw(std::vector<Distribution> per_type) : per_type_(std::move(per_type)) {
    if (per_type_.empty()) throw std::invalid_argument("offspring law needs at least one type");
    for (const auto& dist : per_type_) require_dim(dist.dim(), per_type_.size(), "offspring law");
  }

  /// Convenience: atoms per parent type.
  static OffspringLaw from_atoms(std::vector<std::vector<Atom>> per_type) {
    const std::size_t d = per_type.size();
    std::vector<Distribution> dists;
    dists.reserve(d);
    for (auto& atoms : per_type) dists.emplace_back(d, std::move(atoms));
    return OffspringLaw(std::move(dists));
  }

  std::size_t dim() const noexcept { return per_type_.size(); }
  const Distribution& type(std::size_t k) const { return per_type_.at(k); }
  const std::vector<Distribution>& types() const noexcept { return per_type_; }

 private:
  std::vector<Distribution> per_type_;
};

/// Immigration law; houses B(s) and lambda.
class ImmigrationLaw {
 public:
  ImmigrationLaw() = default;
  explicit ImmigrationLaw(Distribution dist) : dist_(std::move(dist)) {}
  ImmigrationLaw(std::size_t dim, std::vector<Atom> atoms) : dist_(dim, std::move(atoms)) {}

  std::size_t dim() const noexcept { return dist_.dim(); }
  const Distribution& distribution() const noexcept { return dist_; }

 private:
  Distribution dist_;
};

// ---------------------------------------------------------------------------
// Evaluation

template <class Real>
Vector<Real> eval_offspring_pgf(const OffspringLaw& law, std::span<const Real> s) {
  require_dim(s.size(), law.dim(), "eval_offspring_pgf");
  Vector<Real> out(law.dim());
  for (std::size_t k = 0; k < law.dim(); ++k) out[k] = law.type(k).pgf(s);
  return out;
}

template <class Real>
Vector<Real> eval_offspring_pgf(const OffspringLaw& law, const Vector<Real>& s) {
  return eval_offspring_pgf(law, std::span<const Real>(s));
}

template <class Real>
Real eval_immigration_pgf(const ImmigrationLaw& ilaw, const Vector<Real>& s) {
  return ilaw.distribution().pgf(std::span<const Real>(s));
}

/// M(s): entry (k, l) is the partial of f_k with respect to s_l.
inline Matrix<double> eval_mean_matrix(const OffspringLaw& law, const Vector<double>& s) {
  require_dim(s.size(), law.dim(), "eval_mean_matrix");
  const std::size_t d = law.dim();
  Matrix<double> m(d);
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t l = 0; l < d; ++l)
      m(k, l) = law.type(k).derivative(std::span<const double>(s), {l});
  return m;
}

inline Matrix<double> mean_matrix(const OffspringLaw& law) {
  return eval_mean_matrix(law, Vector<double>(law.dim(), 1.0));
}

/// b^k_{lm}(s0) as a flat d x d x d array, index (k * d + l) * d + m.
inline std::vector<double> second_derivatives(const OffspringLaw& law, const Vector<double>& s0) {
  require_dim(s0.size(), law.dim(), "second_derivatives");
  const std::size_t d = law.dim();
  std::vector<double> b(d * d * d);
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t l = 0; l < d; ++l)
      for (std::size_t m = 0; m < d; ++m)
        b[(k * d + l) * d + m] = law.type(k).derivative(std::span<const double>(s0), {l, m});
  return b;
}

/// q_k[s0, x] = 1/2 sum_{l,m} b^k_{lm}(s0) x_l x_m.
inline Vector<double> eval_q_form(const OffspringLaw& law, const Vector<double>& s0,
                                  const Vector<double>& x) {
  require_dim(x.size(), law.dim(), "eval_q_form");
  const std::size_t d = law.dim();
  const auto b = second_derivatives(law, s0);
  Vector<double> q(d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    double acc = 0.0;
    for (std::size_t l = 0; l < d; ++l)
      for (std::size_t m = 0; m < d; ++m) acc += b[(k * d + l) * d + m] * x[l] * x[m];
    q[k] = 0.5 * acc;
  }
  return q;
}

/// Divided-difference matrix D with f(a) - f(b) = D (a - b), exact for polynomials.
template <class Real>
Matrix<Real> secant_matrix(const OffspringLaw& law, const Vector<Real>& a, const Vector<Real>& b) {
  const std::size_t d = law.dim();
  Matrix<Real> out(d);
  for (std::size_t k = 0; k < d; ++k) {
    const auto row = law.type(k).template secant_row<Real>(a, b);
    for (std::size_t l = 0; l < d; ++l) out(k, l) = row[l];
  }
  return out;
}

/// 1 - f(1 - c) computed from the complement c without cancellation.
template <class Real>
Vector<Real> complement_map(const OffspringLaw& law, const Vector<Real>& c) {
  Vector<Real> one(c.size(), Real(1));
  Vector<Real> point(c.size());
  for (std::size_t l = 0; l < c.size(); ++l) point[l] = Real(1) - c[l];
  return secant_matrix(law, one, point) * c;
}

/// 1 - B(1 - c) computed from the complement c.
template <class Real>
Real immigration_complement(const ImmigrationLaw& ilaw, const Vector<Real>& c) {
  Vector<Real> one(c.size(), Real(1));
  Vector<Real> point(c.size());
  for (std::size_t l = 0; l < c.size(); ++l) point[l] = Real(1) - c[l];
  return dot(ilaw.distribution().template secant_row<Real>(one, point), c);
}

// ---------------------------------------------------------------------------
// Class K / class J validation

struct Witness {
  std::string name;
  double value = 0.0;
  double bound = 0.0;
  std::string relation;  // ">=" or "<=" or "=="
  bool holds = false;
};

struct ClassReport {
  bool satisfied = false;
  std::vector<Witness> witnesses;
  /// Immigration means, attached by validate_class_J.
  std::optional<Vector<double>> lambda;
};

namespace detail {
inline void add_witness(ClassReport& r, std::string name, double value, double bound,
                        std::string relation) {
  bool holds = relation == ">=" ? value >= bound
             : relation == "<=" ? value <= bound
                                : std::abs(value - bound) <= kMassTolerance;
  r.witnesses.push_back({std::move(name), value, bound, std::move(relation), holds});
}
inline void finish(ClassReport& r) {
  r.satisfied = std::all_of(r.witnesses.begin(), r.witnesses.end(),
                            [](const Witness& w) { return w.holds; });
}
}  // namespace detail

inline ClassReport validate_class_K(const OffspringLaw& law, unsigned U, double a, double b,
                                    double c) {
  const std::size_t d = law.dim();
  const Vector<double> one(d, 1.0);
  ClassReport report;
  detail::add_witness(report, "min entry of M^U", power(mean_matrix(law), U).min_entry(), a, ">=");

  double second = 0.0, third = 0.0;
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t l = 0; l < d; ++l)
      for (std::size_t m = 0; m < d; ++m) {
        second += law.type(k).derivative(std::span<const double>(one), {l, m});
        for (std::size_t j = 0; j < d; ++j)
          third += law.type(k).derivative(std::span<const double>(one), {l, m, j});
      }
  detail::add_witness(report, "sum of second derivatives b", second, b, ">=");
  detail::add_witness(report, "sum of third derivatives c", third, c, "<=");
  detail::finish(report);
  return report;
}

inline Vector<double> immigration_means(const ImmigrationLaw& ilaw) {
  const std::size_t d = ilaw.dim();
  const Vector<double> one(d, 1.0);
  Vector<double> lambda(d);
  for (std::size_t k = 0; k < d; ++k)
    lambda[k] = ilaw.distribution().derivative(std::span<const double>(one), {k});
  return lambda;
}

inline ClassReport validate_class_J(const ImmigrationLaw& ilaw, double d1, double d2) {
  const std::size_t d = ilaw.dim();
  const Vector<double> one(d, 1.0);
  ClassReport report;
  detail::add_witness(report, "B(1)", eval_immigration_pgf(ilaw, one), 1.0, "==");
  const auto lambda = immigration_means(ilaw);
  detail::add_witness(report, "sum of immigration means", sum(lambda), d1, ">=");
  double second = 0.0;
  for (std::size_t k = 0; k < d; ++k)
    for (std::size_t l = 0; l < d; ++l)
      second += ilaw.distribution().derivative(std::span<const double>(one), {k, l});
  detail::add_witness(report, "sum of second derivatives of B", second, d2, "<=");
  report.lambda = lambda;
  detail::finish(report);
  return report;
}

// ---------------------------------------------------------------------------
// Sampling

/// Offspring vector of one type-k parent.
inline const MultiIndex& sample(const OffspringLaw& law, std::size_t k, CounterRng& rng) {
  return law.type(k).sample(rng);
}

inline const MultiIndex& sample(const ImmigrationLaw& ilaw, CounterRng& rng) {
  return ilaw.distribution().sample(rng);
}

}  // namespace gwlab

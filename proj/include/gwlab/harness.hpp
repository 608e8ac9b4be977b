#pragma once

// Experiment orchestration: law families with Perron-root calibration, the
// brute-force DP oracle, regime sweeps comparing exact recursions with the
// limit laws, and CSV/JSON reports.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <json.hpp>

#include "gwlab/asymptotics.hpp"
#include "gwlab/errors.hpp"
#include "gwlab/io.hpp"
#include "gwlab/model.hpp"
#include "gwlab/montecarlo.hpp"
#include "gwlab/parallel.hpp"
#include "gwlab/recursion.hpp"
#include "gwlab/spectral.hpp"

namespace gwlab {

using quad = boost::multiprecision::cpp_bin_float_quad;

// ---------------------------------------------------------------------------
// Families and calibration

/// A law depending on one scalar knob, with rho increasing in the knob on [lo, hi].
struct LawFamily {
  std::string name;
  double knob_lo = 0.0;
  double knob_hi = 1.0;
  std::function<OffspringLaw(double)> build;
};

/// f(s) = (1 - p) + p s^2; rho = 2p, Q = p.
inline LawFamily binary_family() {
  return {"binary", 1e-9, 1.0, [](double p) {
            return OffspringLaw::from_atoms({{{{0}, 1.0 - p}, {{2}, p}}});
          }};
}

/// Type 1: nothing or one child of each type, 1/2 each.
/// Type 2: nothing w.p. 1 - kappa, two type-1 children w.p. kappa.
inline LawFamily pair_family() {
  return {"pair", 1e-6, 1.0, [](double kappa) {
            return OffspringLaw::from_atoms({{{{0, 0}, 0.5}, {{1, 1}, 0.5}},
                                             {{{0, 0}, 1.0 - kappa}, {{2, 0}, kappa}}});
          }};
}

/// theta p + (1 - theta) delta_0 per type: rho scales linearly with theta.
inline LawFamily thinned_family(OffspringLaw base) {
  return {"thinned", 1e-9, 1.0, [base = std::move(base)](double theta) {
            std::vector<std::vector<Atom>> per_type;
            const std::size_t d = base.dim();
            for (const auto& t : base.types()) {
              std::vector<Atom> atoms;
              for (const auto& a : t.atoms()) atoms.push_back({a.counts, theta * a.p});
              atoms.push_back({MultiIndex(d, 0), 1.0 - theta});
              per_type.push_back(std::move(atoms));
            }
            return OffspringLaw::from_atoms(std::move(per_type));
          }};
}

inline double perron_root(const OffspringLaw& law) {
  const auto m = mean_matrix(law);
  if (law.dim() == 1) return m(0, 0);
  return perron_triple(m).rho;
}

struct CalibratedLaw {
  OffspringLaw law;
  double knob = 0.0;
  double rho = 0.0;
};

/// Bisection on the knob until |rho - target| <= tol.
inline CalibratedLaw calibrate_perron(const LawFamily& family, double target, double tol = 1e-12) {
  double lo = family.knob_lo, hi = family.knob_hi;
  const double rho_lo = perron_root(family.build(lo));
  const double rho_hi = perron_root(family.build(hi));
  if (!(rho_lo <= target && target <= rho_hi))
    throw std::invalid_argument("calibrate_perron: bracket [" + std::to_string(rho_lo) + ", " +
                                std::to_string(rho_hi) + "] does not contain " + std::to_string(target));
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    OffspringLaw law = family.build(mid);
    const double rho = perron_root(law);
    if (std::abs(rho - target) <= tol) return {std::move(law), mid, rho};
    (rho < target ? lo : hi) = mid;
  }
  throw NumericalFailure("calibrate_perron: bisection did not reach tolerance", hi - lo);
}

// ---------------------------------------------------------------------------
// Brute-force oracle

/// Joint law of (Z_n, Y_n) from one ancestor, by forward convolution.
struct DPJointDistribution {
  std::size_t dim = 0;
  std::size_t n = 0;
  std::map<std::pair<MultiIndex, MultiIndex>, double> mass;
  double defect = 0.0;  ///< mass dropped by the caps

  double total_mass() const {
    double t = 0.0;
    for (const auto& [k, p] : mass) t += p;
    return t;
  }

  /// sum over states of p * x^z * s^y, restricted to z = 0 when extinct_only.
  double sum(const Vector<double>& x, const Vector<double>& s, bool extinct_only = false) const {
    require_dim(x.size(), dim, "DPJointDistribution");
    require_dim(s.size(), dim, "DPJointDistribution");
    double acc = 0.0;
    for (const auto& [key, p] : mass) {
      const auto& [z, y] = key;
      if (extinct_only && std::any_of(z.begin(), z.end(), [](auto c) { return c != 0; })) continue;
      double w = p;
      for (std::size_t i = 0; i < dim; ++i) w *= ipow(x[i], z[i]) * ipow(s[i], y[i]);
      acc += w;
    }
    return acc;
  }

  double t(const Vector<double>& s) const { return sum(Vector<double>(dim, 1.0), s); }
  double h(const Vector<double>& s) const { return sum(Vector<double>(dim, 1.0), s, true); }
  double joint(const Vector<double>& x, const Vector<double>& s) const { return sum(x, s); }
};

struct DPLimits {
  std::uint64_t population_cap = 64;
  std::uint64_t progeny_cap = 256;
  std::size_t state_limit = 10'000'000;
};

namespace detail {

using MassMap = std::map<MultiIndex, double>;

inline std::uint64_t index_total(const MultiIndex& z) {
  std::uint64_t t = 0;
  for (auto c : z) t += c;
  return t;
}

/// Law of the summed offspring of a population z; mass above the cap goes to `dropped`.
inline MassMap offspring_sum(const OffspringLaw& law, const MultiIndex& z, std::uint64_t cap, double& dropped) {
  const std::size_t d = law.dim();
  MassMap cur{{MultiIndex(d, 0), 1.0}};
  for (std::size_t type = 0; type < d; ++type) {
    for (std::uint64_t i = 0; i < z[type]; ++i) {
      MassMap next;
      for (const auto& [acc, p] : cur) {
        for (const auto& atom : law.type(type).atoms()) {
          MultiIndex sum = acc;
          for (std::size_t l = 0; l < d; ++l) sum[l] += atom.counts[l];
          const double q = p * atom.p;
          if (index_total(sum) > cap)
            dropped += q;
          else
            next[sum] += q;
        }
      }
      cur = std::move(next);
    }
  }
  return cur;
}

}  // namespace detail

/// Distributions for generations 0..n from a type-`start_type` ancestor.
inline std::vector<DPJointDistribution> dp_oracle_sequence(const OffspringLaw& law, std::size_t start_type,
                                                           std::size_t n, const DPLimits& lim = {}) {
  const std::size_t d = law.dim();
  if (start_type >= d) throw std::invalid_argument("dp_oracle: start type out of range");
  MultiIndex e(d, 0);
  e[start_type] = 1;
  std::vector<DPJointDistribution> out;
  DPJointDistribution cur;
  cur.dim = d;
  cur.mass[{e, e}] = 1.0;
  out.push_back(cur);
  std::map<MultiIndex, detail::MassMap> memo;
  std::map<MultiIndex, double> memo_dropped;
  for (std::size_t k = 1; k <= n; ++k) {
    DPJointDistribution next;
    next.dim = d;
    next.n = k;
    next.defect = cur.defect;
    for (const auto& [key, p] : cur.mass) {
      const auto& [z, y] = key;
      auto it = memo.find(z);
      if (it == memo.end()) {
        double dropped = 0.0;
        it = memo.emplace(z, detail::offspring_sum(law, z, lim.population_cap, dropped)).first;
        memo_dropped[z] = dropped;
      }
      next.defect += p * memo_dropped[z];
      for (const auto& [z2, q] : it->second) {
        MultiIndex y2 = y;
        for (std::size_t l = 0; l < d; ++l) y2[l] += z2[l];
        if (detail::index_total(y2) > lim.progeny_cap) {
          next.defect += p * q;
          continue;
        }
        next.mass[{z2, std::move(y2)}] += p * q;
        if (next.mass.size() > lim.state_limit) throw ResourceLimit("dp_oracle: state count exceeds limit");
      }
    }
    cur = std::move(next);
    out.push_back(cur);
  }
  return out;
}

inline DPJointDistribution dp_oracle(const OffspringLaw& law, std::size_t start_type, std::size_t n,
                                     const DPLimits& lim = {}) {
  return dp_oracle_sequence(law, start_type, n, lim).back();
}

// ---------------------------------------------------------------------------
// Experiment configuration

enum class Precision { binary64, quad };

struct ExperimentConfig {
  std::string family = "binary";  ///< binary | pair | thinned
  std::string model_path;         ///< base law for "thinned"; immigration law for theorem 5
  int theorem = 3;
  RegimeSpec regime{Regime::I2_sub};
  std::vector<double> T_grid{1.0};
  std::vector<std::size_t> n_grid{64, 256, 1024};
  std::vector<double> t_weights;  ///< split of T over types; empty = equal
  double alpha = 0.5;             ///< i = 2 schedule rho_n = 1 -+ n^{-alpha}
  std::optional<double> tolerance;
  bool require_decreasing = false;
  bool require_converging = false;
  std::string output;
  std::string format = "csv";
  std::uint64_t seed = 1;
  std::size_t mc_paths = 0;
  std::size_t mc_max_n = 64;
  Precision precision = Precision::binary64;
  std::vector<std::size_t> start_types;  ///< empty = all
  DoomedLimitOptions doomed;
  LimitOptions limit;

  void validate() const {
    if (theorem < 3 || theorem > 6) throw std::invalid_argument("config: theorem must be 3..6");
    if (theorem == 6 && regime.regime == Regime::I2_super)
      throw std::invalid_argument("config: theorem 6 has no i=2, rho>1 case");
    for (double T : T_grid)
      if (!(T >= 0.0)) throw std::invalid_argument("config: T grid must be nonnegative");
    if (n_grid.empty()) throw std::invalid_argument("config: empty n grid");
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
      if (n_grid[i] == 0) throw std::invalid_argument("config: n must be positive");
      if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw std::invalid_argument("config: n grid must strictly increase");
    }
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("config: alpha must lie in (0, 1)");
    if (family != "binary" && family != "pair" && family != "thinned")
      throw std::invalid_argument("config: unknown family '" + family + "'");
    if (family == "thinned" && model_path.empty()) throw std::invalid_argument("config: thinned family needs a model");
    if (format != "csv" && format != "json") throw std::invalid_argument("config: format must be csv or json");
  }
};

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["family"] = c.family;
  j["model"] = c.model_path;
  j["theorem"] = c.theorem;
  j["regime"] = std::string(to_string(c.regime.regime));
  j["r"] = c.regime.r;
  j["T"] = c.T_grid;
  j["n"] = c.n_grid;
  j["t_weights"] = c.t_weights;
  j["alpha"] = c.alpha;
  j["tolerance"] = c.tolerance ? nlohmann::json(*c.tolerance) : nlohmann::json(nullptr);
  j["require_decreasing"] = c.require_decreasing;
  j["require_converging"] = c.require_converging;
  j["output"] = c.output;
  j["format"] = c.format;
  j["seed"] = c.seed;
  j["mc_paths"] = c.mc_paths;
  j["mc_max_n"] = c.mc_max_n;
  j["precision"] = c.precision == Precision::quad ? "quad" : "double";
  j["start_types"] = c.start_types;
  j["psi2_weight"] = c.limit.psi2_weight == Psi2Weight::minus ? "minus" : "plus";
  j["doomed"] = {{"m_start", c.doomed.m_start}, {"m_cap", c.doomed.m_cap}, {"tolerance", c.doomed.tolerance}};
  return j;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.family = j.value("family", c.family);
  c.model_path = j.value("model", c.model_path);
  c.theorem = j.value("theorem", c.theorem);
  const auto regime = parse_regime(j.value("regime", std::string("I2_sub")));
  c.regime = RegimeSpec(regime, j.value("r", 1.0) == 0.0 ? 1.0 : j.value("r", 1.0));
  if (j.contains("T")) c.T_grid = j.at("T").get<std::vector<double>>();
  if (j.contains("n")) c.n_grid = j.at("n").get<std::vector<std::size_t>>();
  if (j.contains("t_weights")) c.t_weights = j.at("t_weights").get<std::vector<double>>();
  c.alpha = j.value("alpha", c.alpha);
  if (j.contains("tolerance") && !j.at("tolerance").is_null()) c.tolerance = j.at("tolerance").get<double>();
  c.require_decreasing = j.value("require_decreasing", c.require_decreasing);
  c.require_converging = j.value("require_converging", c.require_converging);
  c.output = j.value("output", c.output);
  c.format = j.value("format", c.format);
  c.seed = j.value("seed", c.seed);
  c.mc_paths = j.value("mc_paths", c.mc_paths);
  c.mc_max_n = j.value("mc_max_n", c.mc_max_n);
  const auto precision = j.value("precision", std::string("double"));
  if (precision != "double" && precision != "quad") throw std::invalid_argument("config: precision must be double or quad");
  c.precision = precision == "quad" ? Precision::quad : Precision::binary64;
  if (j.contains("start_types")) c.start_types = j.at("start_types").get<std::vector<std::size_t>>();
  const auto w = j.value("psi2_weight", std::string("minus"));
  if (w != "minus" && w != "plus") throw std::invalid_argument("config: psi2_weight must be minus or plus");
  c.limit.psi2_weight = w == "minus" ? Psi2Weight::minus : Psi2Weight::plus;
  if (j.contains("doomed")) {
    const auto& dj = j.at("doomed");
    c.doomed.m_start = dj.value("m_start", c.doomed.m_start);
    c.doomed.m_cap = dj.value("m_cap", c.doomed.m_cap);
    c.doomed.tolerance = dj.value("tolerance", c.doomed.tolerance);
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Sweeps

/// i = 1: rho_n = 1 -+ (-ln r)/n; i = 2: rho_n = 1 -+ n^{-alpha}.
inline double rho_schedule(const RegimeSpec& regime, std::size_t n, double alpha = 0.5) {
  const double nn = static_cast<double>(n);
  const double step = regime.index() == 1 ? -std::log(regime.r) / nn : std::pow(nn, -alpha);
  return regime.super() ? 1.0 + step : 1.0 - step;
}

/// s_{n,k} = exp(-t_k / m_{n,k}) held through its complement.
inline CubePoint<double> normalized_point(const Vector<double>& t, const Vector<double>& m) {
  require_dim(t.size(), m.size(), "normalized_point");
  Vector<double> c(t.size());
  for (std::size_t k = 0; k < t.size(); ++k) c[k] = -std::expm1(-t[k] / m[k]);
  CubePoint<double> p;
  p.complement = c;
  p.value.resize(c.size());
  for (std::size_t k = 0; k < c.size(); ++k) p.value[k] = std::exp(-t[k] / m[k]);
  return p;
}

inline Vector<double> split_T(double T, std::size_t d, const std::vector<double>& weights) {
  Vector<double> t(d, T / static_cast<double>(d));
  if (!weights.empty()) {
    require_dim(weights.size(), d, "t_weights");
    double total = 0.0;
    for (double w : weights) total += w;
    for (std::size_t k = 0; k < d; ++k) t[k] = T * weights[k] / total;
  }
  return t;
}

/// Unit immigration: one type-1 immigrant per generation.
inline ImmigrationLaw unit_immigration(std::size_t d) {
  MultiIndex e(d, 0);
  e[0] = 1;
  return ImmigrationLaw(d, {{e, 1.0}});
}

struct ExactResult {
  Vector<double> values;  ///< per start type (one value for theorem 5)
  std::optional<std::size_t> doomed_m;
  bool doomed_converged = true;
};

namespace detail {

template <class Real>
CubePoint<Real> convert_point(const CubePoint<double>& s) {
  Vector<Real> c(s.complement.begin(), s.complement.end());
  auto p = CubePoint<Real>::from_complement(std::move(c));
  return p;
}

template <class Real>
Vector<double> to_double(const Vector<Real>& v) {
  Vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<double>(v[i]);
  return out;
}

template <class Real>
ExactResult exact_transform(int theorem, const OffspringLaw& law, const ImmigrationLaw* ilaw,
                            const CubePoint<double>& s_d, std::size_t n, const DoomedLimitOptions& doomed) {
  const RecursionOptions comp{true};
  const auto s = convert_point<Real>(s_d);
  ExactResult r;
  switch (theorem) {
    case 3: r.values = to_double(conditional_lt_survival(law, s, n, comp)); break;
    case 4: r.values = to_double(conditional_lt_extinction(law, s, n, comp)); break;
    case 5: r.values = {static_cast<double>(immigration_lt(law, *ilaw, s, n, comp))}; break;
    case 6: {
      auto lim = doomed_lt_limit(law, s, n, doomed, comp);
      r.values = to_double(lim.value);
      r.doomed_m = lim.m;
      r.doomed_converged = lim.converged;
      break;
    }
    default: throw std::invalid_argument("exact_transform: theorem must be 3..6");
  }
  return r;
}

}  // namespace detail

/// Exact finite-n transform whose limit the given theorem describes.
/// Theorem 6 expects a law with rho <= 1 (use conjugate_subcritical otherwise).
inline ExactResult exact_transform(int theorem, const OffspringLaw& law, const ImmigrationLaw* ilaw,
                                   const CubePoint<double>& s, std::size_t n, Precision precision = Precision::binary64,
                                   const DoomedLimitOptions& doomed = {}) {
  if (theorem == 5 && !ilaw) throw std::invalid_argument("exact_transform: theorem 5 needs an immigration law");
  if (precision == Precision::quad) return detail::exact_transform<quad>(theorem, law, ilaw, s, n, doomed);
  return detail::exact_transform<double>(theorem, law, ilaw, s, n, doomed);
}

struct ResultRow {
  int theorem = 0;
  Regime regime = Regime::I1_sub;
  double r = 0.0;
  std::size_t n = 0;
  double rho = 0.0;
  double T = 0.0;
  std::optional<std::size_t> start_type;
  double exact = std::numeric_limits<double>::quiet_NaN();
  double limit = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> mc;
  std::optional<double> mc_stderr;
  double abs_err = std::numeric_limits<double>::quiet_NaN();
  double rel_err = std::numeric_limits<double>::quiet_NaN();
  std::string note;  ///< per-point failure or diagnostic, JSON only

  bool operator==(const ResultRow& o) const {
    auto same = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
    return theorem == o.theorem && regime == o.regime && same(r, o.r) && n == o.n && same(rho, o.rho) &&
           same(T, o.T) && start_type == o.start_type && same(exact, o.exact) && same(limit, o.limit) &&
           mc == o.mc && mc_stderr == o.mc_stderr && same(abs_err, o.abs_err) && same(rel_err, o.rel_err);
  }
};

struct ContextSummary {
  std::size_t n = 0;
  double rho = 0.0;
  double knob = 0.0;
  double Q = 0.0;
  double lambda_dot_u = 0.0;
  double rho_mu = 0.0;
};

struct CheckOutcome {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct VerificationReport {
  ExperimentConfig config;
  std::vector<ResultRow> rows;
  std::vector<ContextSummary> contexts;
  std::vector<RemarkCheck> remarks;
  std::vector<CheckOutcome> checks;
  bool passed = true;
};

namespace detail {

struct PointResult {
  ContextSummary context;
  std::vector<ResultRow> rows;
};

inline LawFamily family_for(const ExperimentConfig& c) {
  if (c.family == "binary") return binary_family();
  if (c.family == "pair") return pair_family();
  return thinned_family(load_model(c.model_path).law);
}

inline PointResult run_point(const ExperimentConfig& c, const LawFamily& family, const ImmigrationLaw* ilaw,
                             std::size_t n) {
  PointResult out;
  const double target = rho_schedule(c.regime, n, c.alpha);
  const auto cal = calibrate_perron(family, target);
  const auto ctx = make_context(cal.law, ilaw, n);
  out.context = {n, cal.rho, cal.knob, ctx.Q, ctx.lambda_dot_u, ctx.rho_mu()};

  const std::size_t d = cal.law.dim();
  OffspringLaw work = cal.law;
  if (c.theorem == 6 && cal.rho > 1.0) work = conjugate_subcritical(cal.law, ctx.mu);
  std::vector<std::size_t> starts = c.start_types;
  if (starts.empty())
    for (std::size_t j = 0; j < d; ++j) starts.push_back(j);

  const auto m = normalizer(ctx, normalizer_for_theorem(c.theorem), c.regime, n);
  for (double T : c.T_grid) {
    const double limit = limit_transform(c.theorem, c.regime, T, ctx, c.limit);
    const auto s = normalized_point(split_T(T, d, c.t_weights), m);
    ResultRow base;
    base.theorem = c.theorem;
    base.regime = c.regime.regime;
    base.r = c.regime.r;
    base.n = n;
    base.rho = target;
    base.T = T;
    base.limit = limit;
    std::optional<ExactResult> exact;
    std::string failure;
    try {
      exact = exact_transform(c.theorem, work, ilaw, s, n, c.precision, c.doomed);
    } catch (const std::exception& e) {
      failure = e.what();
    }
    const std::size_t count = c.theorem == 5 ? 1 : starts.size();
    for (std::size_t idx = 0; idx < count; ++idx) {
      ResultRow row = base;
      if (c.theorem != 5) row.start_type = starts[idx];
      if (exact) {
        row.exact = c.theorem == 5 ? exact->values[0] : exact->values.at(starts[idx]);
        row.abs_err = std::abs(row.exact - limit);
        row.rel_err = row.abs_err / std::abs(limit);
        if (exact->doomed_m)
          row.note = "m=" + std::to_string(*exact->doomed_m) + (exact->doomed_converged ? "" : " (not converged)");
      } else {
        row.note = failure;
      }
      if (c.mc_paths > 0 && n <= c.mc_max_n && c.theorem != 6) {
        MonteCarloOptions mo;
        mo.paths = c.mc_paths;
        mo.seed = c.seed;
        mo.start_type = row.start_type.value_or(0);
        mo.workers = 1;
        const Condition cond = c.theorem == 3   ? Condition::survival_at_n
                               : c.theorem == 4 ? Condition::extinct_exactly_at_n
                                                : Condition::none;
        double acceptance = 1.0;
        if (c.theorem == 3 || c.theorem == 4) {
          ProgenyRecursion<double> rec(cal.law, CubePoint<double>::filled(d, 1.0), {true});
          rec.advance_to(n);
          acceptance = c.theorem == 3 ? rec.state().survival[mo.start_type] : rec.state().h_increment[mo.start_type];
        }
        if (acceptance >= 1e-4) {
          try {
            const auto est = estimate_lt(cal.law, c.theorem == 5 ? ilaw : nullptr, s, n, cond, mo);
            row.mc = est.value;
            row.mc_stderr = est.std_error;
          } catch (const std::exception& e) {
            row.note += (row.note.empty() ? "" : "; ") + std::string("mc: ") + e.what();
          }
        } else {
          row.note += (row.note.empty() ? "" : "; ") + std::string("mc unavailable: acceptance below 1e-4");
        }
      }
      out.rows.push_back(std::move(row));
    }
  }
  return out;
}

inline std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace detail

/// True when each value is strictly below its predecessor.
inline bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (!(v[i] < v[i - 1])) return false;
  return true;
}

/// True when |v[i+1] - v[i]| shrinks monotonically along the sequence.
inline bool differences_shrink(const std::vector<double>& v) {
  std::vector<double> diffs;
  for (std::size_t i = 1; i < v.size(); ++i) diffs.push_back(std::abs(v[i] - v[i - 1]));
  return diffs.size() < 2 || strictly_decreasing(diffs);
}

/// Runs every (n, T, start type) point; hard checks follow the config.
inline VerificationReport run_verification(const ExperimentConfig& config) {
  config.validate();
  VerificationReport report;
  report.config = config;
  const LawFamily family = detail::family_for(config);
  std::optional<ImmigrationLaw> ilaw;
  if (config.theorem == 5) {
    if (!config.model_path.empty()) ilaw = load_model(config.model_path).immigration;
    if (!ilaw) ilaw = unit_immigration(family.build(family.knob_hi).dim());
  }
  auto points = parallel_map<detail::PointResult>(config.n_grid.size(), [&](std::size_t i) {
    return detail::run_point(config, family, ilaw ? &*ilaw : nullptr, config.n_grid[i]);
  });
  for (auto& p : points) {
    report.contexts.push_back(p.context);
    for (auto& r : p.rows) report.rows.push_back(std::move(r));
  }
  std::stable_sort(report.rows.begin(), report.rows.end(), [](const ResultRow& a, const ResultRow& b) {
    if (a.n != b.n) return a.n < b.n;
    if (a.T != b.T) return a.T < b.T;
    return a.start_type.value_or(0) < b.start_type.value_or(0);
  });

  if (config.regime.index() == 1 && !config.regime.critical_limit()) {
    const auto& last = report.contexts.back();
    for (double T : config.T_grid)
      if (T > 0.0)
        for (auto& rc : remark_diagnostics(T, last.Q, last.lambda_dot_u > 0 ? last.lambda_dot_u : 1.0))
          report.remarks.push_back(std::move(rc));
  }

  // Series per (T, start type), ordered by n.
  std::map<std::pair<double, long>, std::vector<const ResultRow*>> series;
  for (const auto& r : report.rows)
    series[{r.T, r.start_type ? static_cast<long>(*r.start_type) : -1L}].push_back(&r);
  for (const auto& [key, rows] : series) {
    const std::string label = "T=" + detail::fmt(key.first) +
                              (key.second >= 0 ? " start=" + std::to_string(key.second) : std::string());
    std::vector<double> errs, exacts;
    bool complete = true;
    for (const auto* r : rows) {
      complete = complete && !std::isnan(r->exact);
      errs.push_back(r->rel_err);
      exacts.push_back(r->exact);
    }
    if (config.tolerance) {
      const double final_err = errs.back();
      const bool ok = complete && final_err <= *config.tolerance;
      report.checks.push_back({"tolerance " + label, ok,
                               "rel_err " + detail::fmt(final_err) + " at n=" + std::to_string(rows.back()->n) +
                                   " vs " + detail::fmt(*config.tolerance)});
    }
    if (config.require_decreasing && key.first > 0.0) {
      const bool ok = complete && strictly_decreasing(errs);
      std::string trail;
      for (double e : errs) trail += (trail.empty() ? "" : ", ") + detail::fmt(e);
      report.checks.push_back({"decreasing " + label, ok, "rel_err over n: " + trail});
    }
    if (config.require_converging && key.first > 0.0) {
      const bool ok = complete && differences_shrink(exacts);
      report.checks.push_back({"converging " + label, ok, "successive exact differences shrink"});
    }
  }
  for (const auto& c : report.checks) report.passed = report.passed && c.passed;
  return report;
}

// ---------------------------------------------------------------------------
// Reports

inline constexpr const char* kCsvHeader = "theorem,regime,r,n,rho,T,start_type,exact,limit,mc,mc_stderr,abs_err,rel_err";

inline void emit_csv(const VerificationReport& report, std::ostream& out) {
  if (report.rows.empty()) throw std::invalid_argument("emit: empty report");
  using detail::fmt;
  out << kCsvHeader << '\n';
  for (const auto& r : report.rows) {
    out << r.theorem << ',' << to_string(r.regime) << ',' << fmt(r.r) << ',' << r.n << ',' << fmt(r.rho) << ','
        << fmt(r.T) << ',' << (r.start_type ? std::to_string(*r.start_type) : std::string()) << ','
        << (std::isnan(r.exact) ? std::string() : fmt(r.exact)) << ',' << fmt(r.limit) << ','
        << (r.mc ? fmt(*r.mc) : std::string()) << ',' << (r.mc_stderr ? fmt(*r.mc_stderr) : std::string()) << ','
        << (std::isnan(r.abs_err) ? std::string() : fmt(r.abs_err)) << ','
        << (std::isnan(r.rel_err) ? std::string() : fmt(r.rel_err)) << '\n';
  }
}

namespace detail {
inline nlohmann::json num_or_null(double x) { return std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x); }
inline double num_or_nan(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}
}  // namespace detail

inline nlohmann::json row_to_json(const ResultRow& r) {
  using detail::num_or_null;
  nlohmann::json j;
  j["theorem"] = r.theorem;
  j["regime"] = std::string(to_string(r.regime));
  j["r"] = r.r;
  j["n"] = r.n;
  j["rho"] = r.rho;
  j["T"] = r.T;
  j["start_type"] = r.start_type ? nlohmann::json(*r.start_type) : nlohmann::json(nullptr);
  j["exact"] = num_or_null(r.exact);
  j["limit"] = num_or_null(r.limit);
  j["mc"] = r.mc ? nlohmann::json(*r.mc) : nlohmann::json(nullptr);
  j["mc_stderr"] = r.mc_stderr ? nlohmann::json(*r.mc_stderr) : nlohmann::json(nullptr);
  j["abs_err"] = num_or_null(r.abs_err);
  j["rel_err"] = num_or_null(r.rel_err);
  if (!r.note.empty()) j["note"] = r.note;
  return j;
}

inline ResultRow row_from_json(const nlohmann::json& j) {
  using detail::num_or_nan;
  ResultRow r;
  r.theorem = j.at("theorem").get<int>();
  r.regime = parse_regime(j.at("regime").get<std::string>());
  r.r = j.at("r").get<double>();
  r.n = j.at("n").get<std::size_t>();
  r.rho = j.at("rho").get<double>();
  r.T = j.at("T").get<double>();
  if (!j.at("start_type").is_null()) r.start_type = j.at("start_type").get<std::size_t>();
  r.exact = num_or_nan(j.at("exact"));
  r.limit = num_or_nan(j.at("limit"));
  if (!j.at("mc").is_null()) r.mc = j.at("mc").get<double>();
  if (!j.at("mc_stderr").is_null()) r.mc_stderr = j.at("mc_stderr").get<double>();
  r.abs_err = num_or_nan(j.at("abs_err"));
  r.rel_err = num_or_nan(j.at("rel_err"));
  r.note = j.value("note", std::string());
  return r;
}

inline nlohmann::json report_to_json(const VerificationReport& report) {
  if (report.rows.empty()) throw std::invalid_argument("emit: empty report");
  nlohmann::json j;
  j["config"] = config_to_json(report.config);
  j["context"] = nlohmann::json::array();
  for (const auto& c : report.contexts)
    j["context"].push_back({{"n", c.n}, {"rho", c.rho}, {"knob", c.knob}, {"Q", c.Q},
                            {"lambda_dot_u", c.lambda_dot_u}, {"rho_mu", c.rho_mu}});
  j["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows) j["rows"].push_back(row_to_json(r));
  j["remarks"] = nlohmann::json::array();
  for (const auto& rc : report.remarks)
    j["remarks"].push_back({{"name", rc.name}, {"x", rc.x}, {"r_far", rc.r_far}, {"r_near", rc.r_near},
                            {"value_far", rc.value_far}, {"value_near", rc.value_near}, {"target", rc.target},
                            {"abs_diff", rc.abs_diff}, {"holds", rc.holds}});
  j["checks"] = nlohmann::json::array();
  for (const auto& c : report.checks) j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  j["passed"] = report.passed;
  return j;
}

inline std::vector<ResultRow> rows_from_json(const nlohmann::json& j) {
  std::vector<ResultRow> rows;
  for (const auto& r : j.at("rows")) rows.push_back(row_from_json(r));
  return rows;
}

/// Writes the report to `path` in the requested format.
inline void emit(const VerificationReport& report, const std::string& format, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report to " + path);
  if (format == "csv")
    emit_csv(report, out);
  else if (format == "json")
    out << report_to_json(report).dump(2) << '\n';
  else
    throw std::invalid_argument("emit: format must be csv or json");
  if (!out) throw std::runtime_error("write failed for " + path);
}

// ---------------------------------------------------------------------------
// Mean progeny against its asymptotic form

/// Relative error of sum_j (M^j 1)_m against (1 - rho^{n+1})/(1 - rho) u_m sum(v), per start type.
inline Vector<double> mean_law_relative_error(const OffspringLaw& law, std::size_t n) {
  const auto sd = perron_triple(mean_matrix(law));
  const auto exact = progeny_mean(law, n);
  const double nn = static_cast<double>(n);
  const double geometric = std::abs(sd.rho - 1.0) < 1e-15 ? nn + 1.0
                                                         : (1.0 - std::pow(sd.rho, nn + 1.0)) / (1.0 - sd.rho);
  const double sv = sum(sd.v);
  Vector<double> out(exact.size());
  for (std::size_t m = 0; m < exact.size(); ++m) {
    const double asym = geometric * sd.u[m] * sv;
    out[m] = std::abs(exact[m] - asym) / asym;
  }
  return out;
}

}  // namespace gwlab

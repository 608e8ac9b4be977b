#pragma once

// Forward simulation of Z_n, Y_n (optionally with immigration) and Monte Carlo
// estimates of conditional Laplace transforms and event probabilities.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gwlab/errors.hpp"
#include "gwlab/model.hpp"
#include "gwlab/parallel.hpp"
#include "gwlab/recursion.hpp"
#include "gwlab/rng.hpp"

namespace gwlab {

inline constexpr std::uint64_t kDefaultPopulationCap = 10'000'000;

struct Generation {
  MultiIndex Z;
  MultiIndex Y;  ///< cumulative through this generation
};

struct Trajectory {
  std::vector<Generation> generations;  ///< k = 0..n
  std::optional<std::size_t> extinct_at;
};

/// Thrown when a path exceeds the population cap; carries what was simulated.
class CappedPath : public std::runtime_error {
 public:
  CappedPath(Trajectory partial, std::uint64_t population)
      : std::runtime_error("population cap exceeded (" + std::to_string(population) + ")"),
        partial_(std::move(partial)) {}
  const Trajectory& partial() const noexcept { return partial_; }

 private:
  Trajectory partial_;
};

namespace detail {

inline std::uint64_t total(const MultiIndex& z) {
  std::uint64_t t = 0;
  for (auto x : z) t += x;
  return t;
}

inline void add_into(MultiIndex& acc, const MultiIndex& x) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

}  // namespace detail

/// Simulates generations 0..n. Individuals of generation k draw offspring from
/// the stream (seed, path_id, k, index); immigrants of generation k use the
/// reserved individual index. With immigration and no start, Z_0 = H_0.
inline Trajectory simulate_path(const OffspringLaw& law, const ImmigrationLaw* ilaw,
                                const std::optional<MultiIndex>& start, std::size_t n, std::uint64_t seed,
                                std::uint64_t path_id, std::uint64_t cap = kDefaultPopulationCap) {
  const std::size_t d = law.dim();
  if (ilaw) require_dim(ilaw->dim(), d, "simulate_path");
  if (n >= (1u << 24)) throw std::invalid_argument("simulate_path: n exceeds 2^24 - 1");
  MultiIndex z0(d, 0);
  if (start) {
    require_dim(start->size(), d, "simulate_path start");
    z0 = *start;
  } else if (ilaw) {
    CounterRng rng(seed, path_id, 0, CounterRng::kImmigrant);
    z0 = sample(*ilaw, rng);
  } else {
    throw std::invalid_argument("simulate_path: start required without immigration");
  }

  Trajectory tr;
  tr.generations.reserve(n + 1);
  tr.generations.push_back({z0, z0});
  for (std::size_t k = 1; k <= n; ++k) {
    const auto& prev = tr.generations.back();
    MultiIndex z(d, 0);
    if (tr.extinct_at) {
      tr.generations.push_back({z, prev.Y});
      continue;
    }
    const auto gen = static_cast<std::uint32_t>(k - 1);
    std::uint32_t index = 0;
    for (std::size_t type = 0; type < d; ++type) {
      for (std::uint64_t i = 0; i < prev.Z[type]; ++i, ++index) {
        CounterRng rng(seed, path_id, gen, index);
        detail::add_into(z, sample(law, type, rng));
      }
    }
    if (ilaw) {
      CounterRng rng(seed, path_id, static_cast<std::uint32_t>(k), CounterRng::kImmigrant);
      detail::add_into(z, sample(*ilaw, rng));
    }
    MultiIndex y = prev.Y;
    detail::add_into(y, z);
    tr.generations.push_back({std::move(z), std::move(y)});
    const std::uint64_t pop = detail::total(tr.generations.back().Z);
    if (pop > cap) throw CappedPath(std::move(tr), pop);
    if (!ilaw && pop == 0) tr.extinct_at = k;
  }
  return tr;
}

// ---------------------------------------------------------------------------
// Estimates

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
  std::uint64_t paths_used = 0;
  std::uint64_t paths_accepted = 0;
  std::uint64_t paths_capped = 0;
};

enum class Condition { none, survival_at_n, extinct_exactly_at_n, survival_at_n_plus_m };

inline std::string_view to_string(Condition c) {
  switch (c) {
    case Condition::none: return "none";
    case Condition::survival_at_n: return "survival_at_n";
    case Condition::extinct_exactly_at_n: return "extinct_exactly_at_n";
    case Condition::survival_at_n_plus_m: return "survival_at_n_plus_m";
  }
  return "?";
}

inline Condition parse_condition(std::string_view s) {
  if (s == "none") return Condition::none;
  if (s == "survival_at_n") return Condition::survival_at_n;
  if (s == "extinct_exactly_at_n") return Condition::extinct_exactly_at_n;
  if (s == "survival_at_n_plus_m") return Condition::survival_at_n_plus_m;
  throw std::invalid_argument("unknown condition '" + std::string(s) + "'");
}

/// Sums of values in [0, 1] held in 2^-62 fixed point, so merging chunks is
/// exact and independent of order.
struct FixedPointAccumulator {
  static constexpr double kScale = 0x1.0p62;

  std::uint64_t used = 0;
  std::uint64_t accepted = 0;
  std::uint64_t capped = 0;
  unsigned __int128 sum = 0;
  unsigned __int128 sum_sq = 0;

  void add(double x) {
    const auto q = static_cast<std::uint64_t>(std::llround(static_cast<long double>(x) * kScale));
    sum += q;
    sum_sq += (static_cast<unsigned __int128>(q) * q) >> 62;
    ++accepted;
  }

  FixedPointAccumulator& operator+=(const FixedPointAccumulator& o) {
    used += o.used;
    accepted += o.accepted;
    capped += o.capped;
    sum += o.sum;
    sum_sq += o.sum_sq;
    return *this;
  }

  Estimate finish() const {
    if (accepted == 0) throw DegenerateEstimate("no accepted paths");
    Estimate e;
    e.paths_used = used;
    e.paths_accepted = accepted;
    e.paths_capped = capped;
    const long double n = static_cast<long double>(accepted);
    const long double m1 = static_cast<long double>(sum) / kScale / n;
    const long double m2 = static_cast<long double>(sum_sq) / kScale / n;
    e.value = static_cast<double>(m1);
    long double var = m2 - m1 * m1;
    if (var < 0 || accepted < 2) var = 0;
    if (accepted > 1) var *= n / (n - 1);
    e.std_error = static_cast<double>(std::sqrt(var / n));
    return e;
  }
};

struct MonteCarloOptions {
  std::size_t paths = 100000;
  std::uint64_t seed = 1;
  std::size_t start_type = 0;
  std::size_t m = 0;  ///< lookahead for survival_at_n_plus_m
  std::size_t chunk = 4096;
  std::size_t workers = worker_count();
  std::uint64_t population_cap = kDefaultPopulationCap;
};

namespace detail {

template <class PathFn>
FixedPointAccumulator run_paths(const MonteCarloOptions& opt, PathFn&& per_path) {
  if (opt.paths < 1000) throw std::invalid_argument("Monte Carlo estimates need at least 1000 paths");
  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
  const std::size_t chunks = (opt.paths + chunk - 1) / chunk;
  auto parts = parallel_map<FixedPointAccumulator>(
      chunks,
      [&](std::size_t c) {
        FixedPointAccumulator acc;
        const std::size_t begin = c * chunk;
        const std::size_t end = std::min(opt.paths, begin + chunk);
        for (std::size_t p = begin; p < end; ++p) per_path(static_cast<std::uint64_t>(p), acc);
        return acc;
      },
      opt.workers);
  FixedPointAccumulator total;
  for (const auto& part : parts) total += part;
  return total;
}

inline MultiIndex unit_start(std::size_t d, std::size_t type) {
  if (type >= d) throw std::invalid_argument("start type out of range");
  MultiIndex z(d, 0);
  z[type] = 1;
  return z;
}

}  // namespace detail

/// Mean of s^{Y_n} over paths satisfying the condition.
///
/// Without immigration the path starts from e_{start_type}. With immigration
/// the estimate targets phi_n(s) = E[s^{Y0_{n-1}}], so n - 1 generations are used.
inline Estimate estimate_lt(const OffspringLaw& law, const ImmigrationLaw* ilaw, const CubePoint<double>& s,
                            std::size_t n, Condition cond, const MonteCarloOptions& opt = {}) {
  require_dim(s.dim(), law.dim(), "estimate_lt");
  const std::size_t d = law.dim();
  if (ilaw && n == 0) throw std::invalid_argument("estimate_lt: immigration transform needs n >= 1");
  if (cond == Condition::extinct_exactly_at_n && n == 0)
    throw std::invalid_argument("estimate_lt: extinction at generation 0 is impossible");
  Vector<double> log_s(d);
  for (std::size_t i = 0; i < d; ++i) log_s[i] = std::log1p(-s.complement[i]);
  const std::size_t target = ilaw ? n - 1 : n;
  const std::size_t horizon = cond == Condition::survival_at_n_plus_m ? target + opt.m : target;
  std::optional<MultiIndex> start;
  if (!ilaw) start = detail::unit_start(d, opt.start_type);

  auto acc = detail::run_paths(opt, [&](std::uint64_t path, FixedPointAccumulator& a) {
    ++a.used;
    Trajectory tr;
    try {
      tr = simulate_path(law, ilaw, start, horizon, opt.seed, path, opt.population_cap);
    } catch (const CappedPath&) {
      --a.used;
      ++a.capped;
      return;
    }
    const auto& g = tr.generations;
    bool accept = true;
    switch (cond) {
      case Condition::none: break;
      case Condition::survival_at_n: accept = detail::total(g[target].Z) > 0; break;
      case Condition::extinct_exactly_at_n:
        accept = detail::total(g[target].Z) == 0 && detail::total(g[target - 1].Z) > 0;
        break;
      case Condition::survival_at_n_plus_m: accept = detail::total(g[horizon].Z) > 0; break;
    }
    if (!accept) return;
    double exponent = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      if (g[target].Y[i] != 0) exponent += static_cast<double>(g[target].Y[i]) * log_s[i];
    a.add(std::exp(exponent));
  });
  return acc.finish();
}

enum class Event { survival, extinct_at };

/// Frequency of {Z_n > 0} or {N = n} from e_{start_type}, binomial standard error.
inline Estimate estimate_event(const OffspringLaw& law, std::size_t n, Event event,
                               const MonteCarloOptions& opt = {}) {
  if (event == Event::extinct_at && n == 0) throw std::invalid_argument("estimate_event: N >= 1");
  const auto start = detail::unit_start(law.dim(), opt.start_type);
  auto acc = detail::run_paths(opt, [&](std::uint64_t path, FixedPointAccumulator& a) {
    Trajectory tr;
    try {
      tr = simulate_path(law, nullptr, start, n, opt.seed, path, opt.population_cap);
    } catch (const CappedPath&) {
      ++a.capped;
      return;
    }
    ++a.used;
    const auto& g = tr.generations;
    const bool hit = event == Event::survival
                         ? detail::total(g[n].Z) > 0
                         : detail::total(g[n].Z) == 0 && detail::total(g[n - 1].Z) > 0;
    a.add(hit ? 1.0 : 0.0);
  });
  Estimate e = acc.finish();
  e.std_error = std::sqrt(e.value * (1.0 - e.value) / static_cast<double>(e.paths_accepted));
  return e;
}

}  // namespace gwlab

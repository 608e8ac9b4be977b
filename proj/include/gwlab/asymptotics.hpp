#pragma once

// Closed-form near-critical quantities: normalizing sequences, tail
// asymptotics and the limiting Laplace transforms of total progeny.
//
// Sign convention: regimes with rho > 1 take the upper signs (I_+, h_+, d_+,
// z_+, G1_+), regimes with rho < 1 the lower ones.

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "gwlab/linalg.hpp"
#include "gwlab/model.hpp"
#include "gwlab/recursion.hpp"
#include "gwlab/spectral.hpp"

namespace gwlab {

enum class Regime { I1_sub, I1_super, I2_sub, I2_super };

inline std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::I1_sub: return "I1_sub";
    case Regime::I1_super: return "I1_super";
    case Regime::I2_sub: return "I2_sub";
    case Regime::I2_super: return "I2_super";
  }
  return "?";
}

inline Regime parse_regime(std::string_view s) {
  if (s == "I1_sub") return Regime::I1_sub;
  if (s == "I1_super") return Regime::I1_super;
  if (s == "I2_sub") return Regime::I2_sub;
  if (s == "I2_super") return Regime::I2_super;
  throw std::invalid_argument("unknown regime '" + std::string(s) + "'");
}

struct RegimeSpec {
  Regime regime = Regime::I1_sub;
  double r = 1.0;  ///< lim n|1 - rho| = -ln r; only meaningful for i = 1

  RegimeSpec() = default;
  RegimeSpec(Regime reg, double r_limit = 1.0) : regime(reg), r(r_limit) {
    if (index() == 1 && !(r > 0.0 && r <= 1.0))
      throw std::invalid_argument("RegimeSpec: r must lie in (0, 1]");
    if (index() == 2) r = 0.0;
  }

  int index() const noexcept { return regime == Regime::I1_sub || regime == Regime::I1_super ? 1 : 2; }
  bool super() const noexcept { return regime == Regime::I1_super || regime == Regime::I2_super; }
  bool critical_limit() const noexcept { return index() == 1 && r == 1.0; }
  /// +1 for rho > 1 (upper signs), -1 for rho < 1.
  int sign() const noexcept { return super() ? 1 : -1; }
};

struct AsymptoticContext {
  SpectralData spectral;     ///< at s = 1
  SpectralData spectral_mu;  ///< at s = mu
  double Q = 0.0;
  double Q_mu = 0.0;
  Vector<double> mu;
  double lambda_dot_u = 0.0;
  double theta_n = 0.0;

  double rho() const noexcept { return spectral.rho; }
  double rho_mu() const noexcept { return spectral_mu.rho; }
  double theta(std::size_t n) const { return static_cast<double>(n) * std::log(rho_mu()); }
};

inline AsymptoticContext make_context(const OffspringLaw& law, const ImmigrationLaw* ilaw = nullptr,
                                      std::size_t n = 0) {
  AsymptoticContext ctx;
  const Vector<double> one(law.dim(), 1.0);
  ctx.spectral = spectral_at(law, one);
  ctx.mu = extinction_mu(law).value;
  ctx.spectral_mu = ctx.mu == one ? ctx.spectral : spectral_at(law, ctx.mu);
  ctx.Q = curvature_Q(law, ctx.spectral);
  ctx.Q_mu = weighted_Q(ctx.spectral_mu.v, law, ctx.mu, ctx.spectral_mu.u);
  if (ilaw) ctx.lambda_dot_u = dot(immigration_means(*ilaw), ctx.spectral.u);
  if (!(ctx.Q > 0.0)) throw std::invalid_argument("make_context: Q must be positive");
  if (ctx.rho_mu() > 1.0 + 1e-9) throw NumericalFailure("make_context: rho_mu exceeds 1", ctx.rho_mu() - 1.0);
  ctx.theta_n = ctx.theta(n);
  return ctx;
}

// ---------------------------------------------------------------------------
// Basic quantities

struct BasicQuantities {
  double theta_n = 0.0;
  double pi_n = 0.0;
  double psi_n = 0.0;
};

/// pi_n = sum_{j=1}^n rho^{j-2}; psi_n(x) = rho^n v'x / (1 + pi_n Q v'x).
inline BasicQuantities basic_quantities(const AsymptoticContext& ctx, std::size_t n, const Vector<double>& x) {
  require_dim(x.size(), ctx.spectral.v.size(), "basic_quantities");
  const double rho = ctx.rho();
  BasicQuantities out;
  out.theta_n = ctx.theta(n);
  double pw = 1.0 / rho;
  for (std::size_t j = 1; j <= n; ++j) {
    out.pi_n += pw;
    pw *= rho;
  }
  const double vx = dot(ctx.spectral.v, x);
  out.psi_n = std::pow(rho, static_cast<double>(n)) * vx / (1.0 + out.pi_n * ctx.Q * vx);
  return out;
}

struct WV {
  double W = 0.0;
  double V = 1.0;
};

/// W = 4 Q(mu) v_mu'(1 - s) / (1 - rho_mu)^2, V = sqrt(1 + W).
inline WV wv(const AsymptoticContext& ctx, const CubePoint<double>& s) {
  require_dim(s.dim(), ctx.spectral_mu.v.size(), "wv");
  const double gap = 1.0 - ctx.rho_mu();
  if (!(gap > 0.0)) throw std::invalid_argument("wv: requires rho_mu < 1");
  WV out;
  out.W = 4.0 * ctx.Q_mu * dot(ctx.spectral_mu.v, s.complement) / (gap * gap);
  out.V = std::sqrt(1.0 + out.W);
  return out;
}

/// Supercritical fixed-point correction kappa(s) (a d-vector along u).
inline Vector<double> kappa(const AsymptoticContext& ctx, const CubePoint<double>& s) {
  const double rho = ctx.rho();
  if (!(rho > 1.0)) throw std::invalid_argument("kappa: requires rho > 1");
  const auto& u = ctx.spectral.u;
  const auto& v = ctx.spectral.v;
  require_dim(s.dim(), u.size(), "kappa");
  const double vsu = dot(hadamard(v, s.value), u);
  const double a = rho * vsu - 1.0;
  if (a == 0.0) throw std::invalid_argument("kappa: rho (vs)'u equals 1");
  const double radical = std::sqrt(1.0 + 4.0 * vsu * ctx.Q * dot(v, s.complement) / (a * a));
  const double scale = a / (2.0 * vsu * ctx.Q) * (radical - 1.0);
  Vector<double> out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = 1.0 + u[i] * scale;
  return out;
}

// ---------------------------------------------------------------------------
// Helper functions of the limit laws

namespace limits {

inline constexpr double kSeriesThreshold = 1e-2;

inline double I(int sign, double x) { return sign > 0 ? std::exp(x) : 1.0; }

/// h_+(x) and h_-(x); both tend to 2/3 at x = 0.
inline double h_pm(int sign, double x) {
  if (std::abs(x) < kSeriesThreshold) {
    static constexpr double plus[] = {2.0 / 3, -5.0 / 6, 29.0 / 60, -31.0 / 180, 43.0 / 1008, -41.0 / 5040, 29.0 / 21600};
    static constexpr double minus[] = {2.0 / 3, -1.0 / 2, 3.0 / 20, -1.0 / 60, -1.0 / 560, 1.0 / 1680, 1.0 / 50400};
    const double* c = sign > 0 ? plus : minus;
    double acc = 0.0;
    for (int k = 6; k >= 0; --k) acc = acc * x + c[k];
    return acc;
  }
  const double one_minus = -std::expm1(x);
  const double num = one_minus * (std::exp(-sign * x) - 3.0) - 2.0 * x * I(sign, x);
  return num / (one_minus * one_minus * one_minus);
}

/// h(x) = [x(1 + e^x) - 2(1 - e^x)] / (e^x - 1)^3, as printed; behaves like 4/x^2 at 0.
inline double h(double x) {
  if (x == 0.0) throw std::invalid_argument("h: pole at x = 0");
  if (std::abs(x) < kSeriesThreshold) {
    static constexpr double c[] = {11.0 / 6, -1.0 / 2, 1.0 / 12, -1.0 / 180, -1.0 / 945, 1.0 / 3780, 1.0 / 100800};
    double acc = 0.0;
    for (int k = 6; k >= 0; --k) acc = acc * x + c[k];
    return 4.0 / (x * x) - 4.0 / x + acc;
  }
  const double em1 = std::expm1(x);
  return (x * (2.0 + em1) + 2.0 * em1) / (em1 * em1 * em1);
}

inline double d_pm(int sign, double y, double x) {
  const double gap = 1.0 - x;
  return std::sqrt(1.0 + 4.0 * y / (gap * gap * h_pm(sign, std::log(x))));
}

inline double d(double y, double x) {
  const double gap = 1.0 - x;
  return std::sqrt(1.0 + 2.0 * y / (gap * gap * h(std::log(x))));
}

namespace detail {
/// Denominator x^{-+1} - 1 +- ln x of z_+-.
/// Uses the series in delta = 1 - x near x = 1, where both forms cancel.
inline double z_denominator(int sign, double x) {
  const double delta = 1.0 - x;
  if (std::abs(delta) < 1e-2) {
    double acc = 0.0, pw = delta;
    for (int k = 2; k <= 12; ++k) {
      pw *= delta;
      acc += (sign > 0 ? (k - 1.0) / k : 1.0 / k) * pw;
    }
    return acc;
  }
  return sign > 0 ? (1.0 / x - 1.0 + std::log(x)) : (x - 1.0 - std::log(x));
}
}  // namespace detail

inline double z_pm(int sign, double x, double y, double Q) {
  return std::sqrt(1.0 + 4.0 * Q * y / detail::z_denominator(sign, x));
}

/// w_+-(x, y) = (z -+ 1) / (z +- 1).
inline double w_pm(int sign, double x, double y, double Q) {
  const double z = z_pm(sign, x, y, Q);
  return sign > 0 ? (z - 1.0) / (z + 1.0) : (z + 1.0) / (z - 1.0);
}

namespace detail {
/// 4 Q y / (x^{-+1} - 1 +- ln x), so that z_+- = sqrt(1 + radicand).
inline double z_radicand(int sign, double x, double y, double Q) { return 4.0 * Q * y / z_denominator(sign, x); }

/// (r^{z/2} + w r^{-z/2}) / (1 + w) with w = w_{w_sign} built from radicand a_w.
/// Switches to the reciprocal form when |w| > 1 so the pole of w_- at z = 1 never appears.
inline double w_blend(double r, double z, int w_sign, double a_w) {
  const double zw = std::sqrt(1.0 + a_w);
  const double zm1 = a_w / (zw + 1.0);
  const double zp1 = zw + 1.0;
  const double w = w_sign > 0 ? zm1 / zp1 : zp1 / zm1;
  const double up = std::pow(r, 0.5 * z);
  const double down = std::pow(r, -0.5 * z);
  if (std::abs(w) > 1.0) {
    const double w_inv = 1.0 / w;
    return (up * w_inv + down) / (w_inv + 1.0);
  }
  return (up + w * down) / (1.0 + w);
}
}  // namespace detail

inline double G1(int sign, double x, double r) {
  const double gap = 1.0 - r;
  const double a = 4.0 * x / (gap * gap * h_pm(sign, std::log(r)));
  const double dd = std::sqrt(1.0 + a);
  const double d_minus_sign = sign > 0 ? a / (dd + 1.0) : dd + 1.0;
  const double rd = std::pow(r, dd);
  const double num = 2.0 * gap * rd * dd * dd;
  const double den = std::pow(r, 0.5 * (1 - sign)) * (1.0 - rd) * (d_minus_sign + (dd + sign) * rd);
  return num / den;
}

inline double G2(double x, double r) {
  const double dd = d(x, r);
  const double rd = std::pow(r, dd);
  return (1.0 - r) * (1.0 - r) * rd * dd * dd / (r * (1.0 - rd) * (1.0 - rd));
}

inline double G3(int sign, double x, double r, double Q, double lambda_u) {
  if (x == 0.0) return 1.0;
  const double a = detail::z_radicand(sign, r, x, Q);
  const double base = std::pow(r, -0.5 * sign) * detail::w_blend(r, std::sqrt(1.0 + a), sign, a);
  return std::pow(base, -lambda_u / Q);
}

inline double theorem3_critical(double T) {
  if (T == 0.0) return 1.0;
  const double a = std::sqrt(6.0 * T);
  return a / std::sinh(a);
}

inline double theorem4_critical(double T) {
  if (T == 0.0) return 1.0;
  const double a = std::sinh(std::sqrt(3.0 * T));
  return 3.0 * T / (a * a);
}

}  // namespace limits

/// Which w enters the r < 1 branch of Psi_2; the printed formula leaves the subscript off.
enum class Psi2Weight { minus, plus };

struct LimitOptions {
  Psi2Weight psi2_weight = Psi2Weight::minus;
};

/// Limiting Laplace transform for theorem 3, 4, 5 or 6 at aggregate argument T.
/// Theorem 5 and 6 read Q and lambda'u from the context.
inline double limit_transform(int theorem, const RegimeSpec& regime, double T, const AsymptoticContext& ctx,
                              const LimitOptions& opt = {}) {
  if (!(T >= 0.0)) throw std::invalid_argument("limit_transform: T must be nonnegative");
  const int i = regime.index();
  const int sign = regime.sign();
  const double r = regime.r;
  const double Q = ctx.Q;
  const double lu = ctx.lambda_dot_u;
  auto check = [&] {
    if (theorem == 6 && regime.regime == Regime::I2_super)
      throw std::invalid_argument("limit_transform: theorem 6 has no i=2, rho>1 case");
    if (theorem < 3 || theorem > 6) throw std::invalid_argument("limit_transform: theorem must be 3..6");
  };
  check();
  if (T == 0.0) return 1.0;
  switch (theorem) {
    case 3:
      if (i == 1) return regime.critical_limit() ? limits::theorem3_critical(T) : limits::G1(sign, T, r);
      return regime.super() ? 1.0 / (1.0 + T) : std::exp(-T);
    case 4:
      if (i == 1) return regime.critical_limit() ? limits::theorem4_critical(T) : limits::G2(T, r);
      return std::exp(-T);
    case 5:
      if (i == 1) {
        if (regime.critical_limit()) return std::pow(std::cosh(std::sqrt(2.0 * Q * T)), -lu / Q);
        return limits::G3(sign, T, r, Q, lu);
      }
      return regime.super() ? std::pow(1.0 + Q * T, -lu / Q) : std::exp(-lu * T);
    case 6: {
      if (i == 2) return std::exp(-2.0 * Q * T);
      if (regime.critical_limit()) {
        const double c = std::cosh(std::sqrt(2.0 * Q * T));
        return 1.0 / (c * c);
      }
      const double z = limits::z_pm(-1, r, T, Q);
      const int w_sign = opt.psi2_weight == Psi2Weight::minus ? -1 : 1;
      const double a_w = limits::detail::z_radicand(w_sign, r, T, Q);
      const double base = std::sqrt(r) * limits::detail::w_blend(r, z, w_sign, a_w);
      return 1.0 / (base * base);
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Normalizers and tails

enum class NormalizerKind { m1, m2, m3, m4 };

inline NormalizerKind normalizer_for_theorem(int theorem) {
  switch (theorem) {
    case 3: return NormalizerKind::m1;
    case 4: return NormalizerKind::m2;
    case 5: return NormalizerKind::m3;
    case 6: return NormalizerKind::m4;
  }
  throw std::invalid_argument("normalizer_for_theorem: theorem must be 3..6");
}

/// Scalar factor of m_n^k; the normalizer itself is this times v.
inline double normalizer_scalar(const AsymptoticContext& ctx, NormalizerKind kind, const RegimeSpec& regime,
                                std::size_t n) {
  const double nn = static_cast<double>(n);
  const double Q = ctx.Q;
  const double rho = ctx.rho();
  const double rm = ctx.rho_mu();
  const double theta = ctx.theta(n);
  const int sign = regime.sign();
  const double one_minus_pow = -std::expm1(theta);  // 1 - rho_mu^n
  const double gap = 1.0 - rm;
  if (regime.index() == 1) {
    const bool crit = regime.critical_limit();
    switch (kind) {
      case NormalizerKind::m1:
        return crit ? 2.0 * Q * nn * nn / 3.0
                    : Q * one_minus_pow * one_minus_pow * limits::h_pm(sign, theta) / (gap * gap);
      case NormalizerKind::m2:
        return crit ? Q * nn * nn / 3.0 : 2.0 * Q * one_minus_pow * one_minus_pow * limits::h(theta) / (gap * gap);
      case NormalizerKind::m3:
        return crit ? nn * nn / 2.0
                    : (std::exp(-sign * theta) - 1.0 - sign * nn * gap) / (gap * gap);
      case NormalizerKind::m4:
        return crit ? nn * nn / 2.0 : (std::exp(theta) - 1.0 + nn * gap) / (gap * gap);
    }
  } else {
    const bool sup = regime.super();
    const double rgap = 1.0 - rho;
    switch (kind) {
      case NormalizerKind::m1:
        return sup ? Q * std::pow(rho, nn) / (rgap * rgap) : 2.0 * Q * nn / rgap;
      case NormalizerKind::m2:
        return 2.0 * Q * nn / gap;
      case NormalizerKind::m3:
        return sup ? std::pow(rho, nn) / (rgap * rgap) : nn / rgap;
      case NormalizerKind::m4:
        if (sup) throw std::invalid_argument("normalizer: m4 has no i=2, rho>1 case");
        return nn / rgap;
    }
  }
  throw std::invalid_argument("normalizer: unknown kind");
}

inline Vector<double> normalizer(const AsymptoticContext& ctx, NormalizerKind kind, const RegimeSpec& regime,
                                 std::size_t n) {
  const double c = normalizer_scalar(ctx, kind, regime, n);
  Vector<double> out = ctx.spectral.v;
  for (auto& x : out) x *= c;
  return out;
}

namespace detail {
inline Vector<double> scaled_u(const AsymptoticContext& ctx, double c) {
  Vector<double> out = ctx.spectral.u;
  for (auto& x : out) x *= c;
  return out;
}
inline bool at_criticality(double rho_mu) { return std::abs(1.0 - rho_mu) < 1e-14; }
}  // namespace detail

/// Leading-order P(Z_n > 0 | Z_0 = e_m). For i = 2, rho > 1 the factor is |1 - rho|.
inline Vector<double> tail_survival(const AsymptoticContext& ctx, const RegimeSpec& regime, std::size_t n) {
  const double nn = static_cast<double>(n);
  const double Q = ctx.Q;
  if (regime.index() == 1) {
    const double rm = ctx.rho_mu();
    if (detail::at_criticality(rm)) return detail::scaled_u(ctx, 1.0 / (Q * nn));
    const double theta = ctx.theta(n);
    const double c = (1.0 - rm) * limits::I(-regime.sign(), theta) / (Q * -std::expm1(theta));
    return detail::scaled_u(ctx, c);
  }
  const double rho = ctx.rho();
  if (regime.super()) return detail::scaled_u(ctx, std::abs(1.0 - rho) / Q);
  return detail::scaled_u(ctx, (1.0 - rho) * std::pow(rho, nn) / Q);
}

/// Leading-order P(N = n | Z_0 = e_m).
inline Vector<double> tail_extinction_time(const AsymptoticContext& ctx, const RegimeSpec& regime, std::size_t n) {
  const double nn = static_cast<double>(n);
  const double Q = ctx.Q;
  const double rm = ctx.rho_mu();
  if (regime.index() == 1) {
    if (detail::at_criticality(rm)) return detail::scaled_u(ctx, 1.0 / (Q * nn * nn));
    const double theta = ctx.theta(n);
    const double om = -std::expm1(theta);
    return detail::scaled_u(ctx, std::exp(theta) * (1.0 - rm) * (1.0 - rm) / (Q * om * om));
  }
  return detail::scaled_u(ctx, std::pow(rm, nn) * (1.0 - rm) * (1.0 - rm) / Q);
}

// ---------------------------------------------------------------------------
// Continuity diagnostics for the G-functions

struct RemarkCheck {
  std::string name;
  double x = 0.0;
  double r_far = 0.0;
  double r_near = 0.0;
  double value_far = 0.0;
  double value_near = 0.0;
  double target = 0.0;
  double abs_diff = 0.0;  ///< |value_near - target|
  bool holds = false;     ///< error shrinks towards the limit and ends below tol
};

/// Evaluates the G-functions on a pair of r values approaching 1 and 0 and
/// compares with their stated limits. Outcomes are recorded, never asserted.
/// The r -> 0 limits are approached at rate 1/|ln r|, hence the extreme r.
inline std::vector<RemarkCheck> remark_diagnostics(double x, double Q, double lambda_u, double tol = 1e-2) {
  const double one_far = 1.0 - 1e-3, one_near = 1.0 - 1e-6;
  const double zero_far = 1e-50, zero_near = 1e-300;
  std::vector<RemarkCheck> out;
  auto add = [&](std::string name, bool to_one, auto&& g, double target) {
    RemarkCheck c;
    c.name = std::move(name);
    c.x = x;
    c.r_far = to_one ? one_far : zero_far;
    c.r_near = to_one ? one_near : zero_near;
    c.value_far = g(c.r_far);
    c.value_near = g(c.r_near);
    c.target = target;
    c.abs_diff = std::abs(c.value_near - target);
    c.holds = c.abs_diff <= tol && c.abs_diff <= std::abs(c.value_far - target) + 1e-12;
    out.push_back(std::move(c));
  };
  const double ch = std::pow(std::cosh(std::sqrt(2.0 * Q * x)), -lambda_u / Q);
  auto g1p = [&](double r) { return limits::G1(1, x, r); };
  auto g1m = [&](double r) { return limits::G1(-1, x, r); };
  auto g2 = [&](double r) { return limits::G2(x, r); };
  auto g3p = [&](double r) { return limits::G3(1, x, r, Q, lambda_u); };
  auto g3m = [&](double r) { return limits::G3(-1, x, r, Q, lambda_u); };
  add("G1_plus r->1", true, g1p, limits::theorem3_critical(x));
  add("G1_minus r->1", true, g1m, limits::theorem3_critical(x));
  add("G1_plus r->0", false, g1p, 1.0 / (1.0 + x));
  add("G1_minus r->0", false, g1m, std::exp(-x));
  add("G2 r->1", true, g2, limits::theorem4_critical(x));
  add("G2 r->0", false, g2, std::exp(-x));
  add("G3_plus r->1", true, g3p, ch);
  add("G3_minus r->1", true, g3m, ch);
  add("G3_plus r->0", false, g3p, std::pow(1.0 + Q * x, -lambda_u / Q));
  add("G3_minus r->0", false, g3m, std::exp(-lambda_u * x));
  return out;
}

}  // namespace gwlab

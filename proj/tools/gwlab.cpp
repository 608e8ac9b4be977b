// gwlab command line: spectral, recurse, limits, simulate, verify, oracle.
// Every subcommand prints JSON on stdout; errors go to stderr with exit status 2.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gwlab/harness.hpp"

using namespace gwlab;
using nlohmann::json;

namespace {

Vector<double> point_or_fill(const std::string& text, std::size_t d, double fill) {
  if (text.empty()) return Vector<double>(d, fill);
  auto v = parse_real_list(text);
  if (v.size() == 1 && d > 1) v.assign(d, v[0]);
  require_dim(v.size(), d, "point");
  return v;
}

json spectral_cmd(const std::string& model_path) {
  const auto spec = load_model(model_path);
  const Vector<double> one(spec.law.dim(), 1.0);
  const auto sd = spectral_at(spec.law, one);
  return {{"rho", sd.rho}, {"u", sd.u}, {"v", sd.v}, {"Q", curvature_Q(spec.law, sd)}, {"residual", sd.residual}};
}

struct RecurseArgs {
  std::string model;
  std::size_t n = 1;
  std::string s, x, quantity = "tn";
  std::size_t m = 64;
};

json recurse_cmd(const RecurseArgs& a) {
  const auto spec = load_model(a.model);
  const auto& law = spec.law;
  const std::size_t d = law.dim();
  const auto s = CubePoint<double>::from_value(point_or_fill(a.s, d, 1.0));
  json out = json::array();
  auto push = [&](std::size_t k, const auto& value) { out.push_back({{"n", k}, {"value", value}}); };

  if (a.quantity == "fn") {
    const auto seq = iterate_fn(law, s.value, a.n);
    for (std::size_t k = 0; k <= a.n; ++k) push(k, seq[k]);
  } else if (a.quantity == "tn" || a.quantity == "hn" || a.quantity == "gn") {
    const auto seq = progeny_sequences(law, s, a.quantity == "gn" ? a.n + 1 : a.n);
    for (std::size_t k = 0; k <= a.n; ++k) {
      if (a.quantity == "tn") push(k, seq[k].t);
      else if (a.quantity == "hn") push(k, seq[k].h);
      else {
        Vector<double> g(d);
        for (std::size_t j = 0; j < d; ++j) g[j] = seq[k + 1].h[j] - seq[k].h[j];
        push(k, g);
      }
    }
  } else if (a.quantity == "phin") {
    if (!spec.immigration) throw std::invalid_argument("recurse: phin needs an immigration law in the model");
    for (std::size_t k = 1; k <= a.n; ++k) push(k, immigration_lt(law, *spec.immigration, s, k, {true}));
  } else if (a.quantity == "joint") {
    const auto seq = joint_pgf_sequence(law, point_or_fill(a.x, d, 1.0), s.value, a.n);
    for (std::size_t k = 0; k <= a.n; ++k) push(k, seq[k]);
  } else if (a.quantity == "doomed") {
    const auto mu = extinction_mu(law).value;
    for (std::size_t k = 0; k <= a.n; ++k) push(k, doomed_lt(law, s, k, a.m, {true}, mu));
  } else {
    throw std::invalid_argument("recurse: unknown quantity '" + a.quantity + "'");
  }
  return out;
}

struct LimitsArgs {
  std::string model;
  int theorem = 3;
  std::string regime = "I2_sub";
  double r = 1.0;
  std::string T = "1";
  std::size_t n = 0;
};

json limits_cmd(const LimitsArgs& a) {
  const auto spec = load_model(a.model);
  if (a.theorem == 5 && !spec.immigration) throw std::invalid_argument("limits: theorem 5 needs an immigration law");
  const auto ctx = make_context(spec.law, spec.immigration ? &*spec.immigration : nullptr, a.n);
  const RegimeSpec regime(parse_regime(a.regime), a.r);
  json values = json::array();
  for (double T : parse_real_list(a.T)) values.push_back({{"T", T}, {"value", limit_transform(a.theorem, regime, T, ctx)}});
  return {{"theorem", a.theorem},
          {"regime", std::string(to_string(regime.regime))},
          {"r", regime.r},
          {"context", {{"Q", ctx.Q}, {"lambda_dot_u", ctx.lambda_dot_u}, {"rho_mu", ctx.rho_mu()}}},
          {"values", values}};
}

struct SimulateArgs {
  std::string model;
  std::size_t n = 1;
  std::string s;
  std::string condition = "none";
  std::string event;
  bool immigration = false;
  MonteCarloOptions mc;
};

json simulate_cmd(SimulateArgs a) {
  const auto spec = load_model(a.model);
  const std::size_t d = spec.law.dim();
  if (a.immigration && !spec.immigration) throw std::invalid_argument("simulate: model has no immigration law");
  Estimate e;
  if (!a.event.empty()) {
    if (a.event != "survival" && a.event != "extinct_at")
      throw std::invalid_argument("simulate: event must be survival or extinct_at");
    e = estimate_event(spec.law, a.n, a.event == "survival" ? Event::survival : Event::extinct_at, a.mc);
  } else {
    const auto s = CubePoint<double>::from_value(point_or_fill(a.s, d, 1.0));
    e = estimate_lt(spec.law, a.immigration ? &*spec.immigration : nullptr, s, a.n, parse_condition(a.condition),
                    a.mc);
  }
  return {{"value", e.value},
          {"std_error", e.std_error},
          {"paths_used", e.paths_used},
          {"paths_accepted", e.paths_accepted},
          {"paths_capped", e.paths_capped}};
}

json oracle_cmd(const std::string& model_path, std::size_t n, std::size_t start, const DPLimits& lim) {
  const auto spec = load_model(model_path);
  const auto dp = dp_oracle(spec.law, start, n, lim);
  json states = json::array();
  for (const auto& [key, p] : dp.mass) states.push_back({{"Z", key.first}, {"Y", key.second}, {"p", p}});
  return {{"n", dp.n}, {"start_type", start}, {"defect", dp.defect}, {"total_mass", dp.total_mass()}, {"states", states}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-type branching process toolkit"};
  app.require_subcommand(1);

  std::string model;
  auto* spectral = app.add_subcommand("spectral", "Perron data of the mean matrix: rho, u, v, Q");
  spectral->add_option("--model", model, "model JSON file")->required();

  RecurseArgs ra;
  auto* recurse = app.add_subcommand("recurse", "Per-generation transforms from the pgf recursions");
  recurse->add_option("--model", ra.model, "model JSON file")->required();
  recurse->add_option("--n", ra.n, "last generation")->required();
  recurse->add_option("--s", ra.s, "comma-separated point in [0,1]^d (one value fills all types)");
  recurse->add_option("--quantity", ra.quantity, "fn|tn|hn|gn|phin|joint|doomed")
      ->check(CLI::IsMember({"fn", "tn", "hn", "gn", "phin", "joint", "doomed"}));
  recurse->add_option("--x", ra.x, "marker point for the joint pgf");
  recurse->add_option("--m", ra.m, "lookahead for the doomed transform");

  LimitsArgs la;
  auto* limits = app.add_subcommand("limits", "Limiting Laplace transforms over a T grid");
  limits->add_option("--model", la.model, "model JSON file")->required();
  limits->add_option("--theorem", la.theorem, "3, 4, 5 or 6")->required()->check(CLI::Range(3, 6));
  limits->add_option("--regime", la.regime, "I1_sub|I1_super|I2_sub|I2_super")->required();
  limits->add_option("--r", la.r, "i=1 parameter r in (0,1]");
  limits->add_option("--T", la.T, "comma-separated T values")->required();
  limits->add_option("--n", la.n, "generation used for theta_n in the context");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo estimate of a transform or event frequency");
  simulate->add_option("--model", sa.model, "model JSON file")->required();
  simulate->add_option("--n", sa.n, "generation")->required();
  simulate->add_option("--paths", sa.mc.paths, "number of paths")->required();
  simulate->add_option("--seed", sa.mc.seed, "RNG seed")->required();
  simulate->add_option("--s", sa.s, "comma-separated point in [0,1]^d");
  simulate->add_option("--condition", sa.condition, "none|survival_at_n|extinct_exactly_at_n|survival_at_n_plus_m");
  simulate->add_option("--m", sa.mc.m, "lookahead for survival_at_n_plus_m");
  simulate->add_option("--start-type", sa.mc.start_type, "ancestor type");
  simulate->add_option("--cap", sa.mc.population_cap, "population cap per generation");
  simulate->add_option("--event", sa.event, "survival|extinct_at (frequency instead of a transform)");
  simulate->add_flag("--immigration", sa.immigration, "use the model's immigration law");

  std::string config_path, T_text, n_text, regime_text = "I2_sub";
  double r = 1.0;
  std::optional<double> tolerance;
  ExperimentConfig vc;
  std::string precision = "double";
  auto* verify = app.add_subcommand("verify", "Exact-vs-limit sweep with hard checks; exit 0 iff all pass");
  verify->add_option("--config", config_path, "JSON experiment config");
  verify->add_option("--family", vc.family, "binary|pair|thinned");
  verify->add_option("--model", vc.model_path, "base law (thinned) or immigration law (theorem 5)");
  verify->add_option("--theorem", vc.theorem, "3..6");
  verify->add_option("--regime", regime_text, "I1_sub|I1_super|I2_sub|I2_super");
  verify->add_option("--r", r, "i=1 parameter r");
  verify->add_option("--T", T_text, "comma-separated T grid");
  verify->add_option("--n", n_text, "comma-separated increasing n grid");
  verify->add_option("--alpha", vc.alpha, "i=2 schedule exponent");
  verify->add_option("--tolerance", tolerance, "relative tolerance at the largest n");
  verify->add_flag("--require-decreasing", vc.require_decreasing, "errors must decrease in n");
  verify->add_flag("--require-converging", vc.require_converging, "exact differences must shrink in n");
  verify->add_option("--mc-paths", vc.mc_paths, "Monte Carlo paths per point (0 = none)");
  verify->add_option("--mc-max-n", vc.mc_max_n, "largest n that gets Monte Carlo");
  verify->add_option("--seed", vc.seed, "Monte Carlo seed");
  verify->add_option("--precision", precision, "double|quad")->check(CLI::IsMember({"double", "quad"}));
  verify->add_option("--format", vc.format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
  verify->add_option("--output", vc.output, "report file (default stdout)");

  std::size_t oracle_n = 1, oracle_start = 0;
  DPLimits oracle_lim;
  auto* oracle = app.add_subcommand("oracle", "Brute-force joint law of (Z_n, Y_n)");
  oracle->add_option("--model", model, "model JSON file")->required();
  oracle->add_option("--n", oracle_n, "generation")->required();
  oracle->add_option("--start-type", oracle_start, "ancestor type");
  oracle->add_option("--population-cap", oracle_lim.population_cap, "largest |Z_k| kept");
  oracle->add_option("--progeny-cap", oracle_lim.progeny_cap, "largest |Y_k| kept");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*spectral) std::cout << spectral_cmd(model).dump(2) << '\n';
    if (*recurse) std::cout << recurse_cmd(ra).dump(2) << '\n';
    if (*limits) std::cout << limits_cmd(la).dump(2) << '\n';
    if (*simulate) std::cout << simulate_cmd(sa).dump(2) << '\n';
    if (*oracle) std::cout << oracle_cmd(model, oracle_n, oracle_start, oracle_lim).dump(2) << '\n';
    if (*verify) {
      ExperimentConfig c;
      if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) throw std::runtime_error("cannot open config " + config_path);
        c = config_from_json(json::parse(in));
      } else {
        c = vc;
        c.regime = RegimeSpec(parse_regime(regime_text), r);
        if (!T_text.empty()) c.T_grid = parse_real_list(T_text);
        if (!n_text.empty()) {
          c.n_grid.clear();
          for (double v : parse_real_list(n_text)) c.n_grid.push_back(static_cast<std::size_t>(v));
        }
        c.tolerance = tolerance;
        c.precision = precision == "quad" ? Precision::quad : Precision::binary64;
      }
      const auto report = run_verification(c);
      if (c.output.empty()) {
        if (c.format == "csv") emit_csv(report, std::cout);
        else std::cout << report_to_json(report).dump(2) << '\n';
      } else {
        emit(report, c.format, c.output);
      }
      for (const auto& chk : report.checks)
        std::cerr << (chk.passed ? "PASS " : "FAIL ") << chk.name << ": " << chk.detail << '\n';
      return report.passed ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

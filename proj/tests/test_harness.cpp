#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "gwlab/harness.hpp"
#include "gwlab/io.hpp"
#include "laws.hpp"

using namespace gwlab;
using Catch::Approx;

namespace {

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) out.push_back(line);
  return out;
}

std::vector<std::string> fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) out.push_back(f);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

VerificationReport three_rows() {
  VerificationReport rep;
  for (std::size_t n : {64, 256, 1024}) {
    ResultRow r;
    r.theorem = 3;
    r.regime = Regime::I2_sub;
    r.n = n;
    r.rho = 1.0 - 1.0 / std::sqrt(static_cast<double>(n));
    r.T = 1.0;
    r.start_type = 0;
    r.exact = 0.37 + 1.0 / static_cast<double>(n);
    r.limit = std::exp(-1.0);
    r.abs_err = std::abs(r.exact - r.limit);
    r.rel_err = r.abs_err / r.limit;
    if (n == 64) {
      r.mc = 0.386;
      r.mc_stderr = 0.002;
    }
    rep.rows.push_back(r);
  }
  return rep;
}

std::string temp_path(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

}  // namespace

TEST_CASE("calibration of the built-in families", "[harness]") {
  CHECK(calibrate_perron(binary_family(), 0.9).knob == Approx(0.45).margin(1e-12));
  CHECK(calibrate_perron(binary_family(), 1.0).knob == Approx(0.5).margin(1e-12));
  const auto pair = calibrate_perron(pair_family(), 1.0);
  CHECK(pair.knob == Approx(0.5).margin(1e-11));
  CHECK(std::abs(perron_triple(mean_matrix(pair.law)).rho - 1.0) <= 1e-12);
  for (double target : {0.7, 0.95, 1.05, 1.25}) {
    const auto c = calibrate_perron(pair_family(), target);
    CHECK(std::abs(perron_triple(mean_matrix(c.law)).rho - target) <= 1e-12);
  }
  CHECK_THROWS_AS(calibrate_perron(binary_family(), 2.5), std::invalid_argument);
  const auto thin = calibrate_perron(thinned_family(test_laws::triple()), 1.0);
  CHECK(std::abs(perron_root(thin.law) - 1.0) <= 1e-12);
}

TEST_CASE("DP oracle examples", "[harness]") {
  const auto law = test_laws::binary(0.5);
  const auto dp = dp_oracle(law, 0, 2);
  CHECK(dp.mass.at({MultiIndex{0}, MultiIndex{1}}) == 0.5);
  CHECK(dp.mass.at({MultiIndex{0}, MultiIndex{3}}) == 0.125);
  CHECK(dp.h({0.9}) == Approx(0.541125).epsilon(1e-14));
  CHECK(dp.total_mass() + dp.defect == Approx(1.0).epsilon(1e-14));

  const auto zero = dp_oracle(test_laws::pair(), 1, 0);
  REQUIRE(zero.mass.size() == 1);
  CHECK(zero.mass.at({MultiIndex{0, 1}, MultiIndex{0, 1}}) == 1.0);

  DPLimits tiny;
  tiny.state_limit = 3;
  CHECK_THROWS_AS(dp_oracle(test_laws::triple(), 0, 4, tiny), ResourceLimit);
}

TEST_CASE("DP oracle agrees with the recursions", "[harness][property]") {
  for (const auto& law : {test_laws::binary(0.5), test_laws::pair(), test_laws::triple()}) {
    const std::size_t d = law.dim();
    for (std::size_t j = 0; j < d; ++j) {
      DPLimits lim;
      lim.population_cap = 256;
      lim.progeny_cap = 1024;
      const auto seq = dp_oracle_sequence(law, j, 4, lim);
      for (std::size_t n = 0; n <= 4; ++n) {
        CHECK(seq[n].defect < 1e-14);
        for (double sv : {0.3, 0.7, 0.9}) {
          const std::vector<double> s(d, sv);
          const auto st = progeny_sequences(law, CubePoint<double>::from_value(s), n)[n];
          CHECK(std::abs(seq[n].t(s) - st.t[j]) <= 1e-12);
          CHECK(std::abs(seq[n].h(s) - st.h[j]) <= 1e-12);
          for (double xv : {0.0, 0.5, 1.0}) {
            const std::vector<double> x(d, xv);
            CHECK(std::abs(seq[n].joint(x, s) - joint_pgf(law, x, s, n)[j]) <= 1e-12);
          }
        }
      }
    }
  }
}

TEST_CASE("i = 1 schedule reproduces -ln r", "[harness][property]") {
  for (double r : {0.1, 0.5, 0.9})
    for (Regime reg : {Regime::I1_sub, Regime::I1_super})
      for (std::size_t n : {10, 64, 1000, 4096}) {
        const double rho = rho_schedule(RegimeSpec(reg, r), n);
        // rho carries one rounding of size eps, which n amplifies
        const double nn = static_cast<double>(n);
        CHECK(std::abs(nn * std::abs(1.0 - rho) + std::log(r)) <= nn * std::numeric_limits<double>::epsilon());
      }
  CHECK(rho_schedule(RegimeSpec(Regime::I2_sub), 4096) == 1.0 - 1.0 / 64);
  CHECK(rho_schedule(RegimeSpec(Regime::I2_super), 4096, 0.25) == 1.0 + 0.125);
}

TEST_CASE("normalised points keep the complement", "[harness]") {
  const auto p = normalized_point({1.0}, {1e20});
  CHECK(p.value[0] == 1.0);
  CHECK(p.complement[0] == Approx(1e-20).epsilon(1e-15));
  CHECK(split_T(3.0, 3, {}) == std::vector<double>{1.0, 1.0, 1.0});
  CHECK(split_T(3.0, 2, {1.0, 2.0}) == std::vector<double>{1.0, 2.0});
}

TEST_CASE("CSV layout", "[harness]") {
  std::ostringstream out;
  emit_csv(three_rows(), out);
  const auto ls = lines(out.str());
  REQUIRE(ls.size() == 4);
  CHECK(ls[0] == "theorem,regime,r,n,rho,T,start_type,exact,limit,mc,mc_stderr,abs_err,rel_err");
  for (const auto& l : ls) CHECK(fields(l).size() == 13);
  CHECK(fields(ls[1])[9] == "0.38600000000000001");
  CHECK(fields(ls[2])[9].empty());
  CHECK(fields(ls[2])[10].empty());
  CHECK_THROWS_AS(emit_csv(VerificationReport{}, out), std::invalid_argument);
}

TEST_CASE("JSON round trip", "[harness]") {
  const auto rep = three_rows();
  const auto j = nlohmann::json::parse(report_to_json(rep).dump());
  const auto rows = rows_from_json(j);
  REQUIRE(rows.size() == rep.rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) CHECK(rows[i] == rep.rows[i]);
  CHECK(j.at("rows")[1].at("mc").is_null());
}

TEST_CASE("config round trip and validation", "[harness]") {
  ExperimentConfig c;
  c.theorem = 4;
  c.regime = RegimeSpec(Regime::I1_super, 0.5);
  c.T_grid = {0.5, 1.0};
  c.n_grid = {16, 32};
  c.tolerance = 0.05;
  c.precision = Precision::quad;
  const auto back = config_from_json(config_to_json(c));
  CHECK(back.theorem == 4);
  CHECK(back.regime.regime == Regime::I1_super);
  CHECK(back.regime.r == 0.5);
  CHECK(back.T_grid == c.T_grid);
  CHECK(back.n_grid == c.n_grid);
  CHECK(back.tolerance == c.tolerance);
  CHECK(back.precision == Precision::quad);

  auto bad = c;
  bad.n_grid = {32, 16};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.T_grid = {-1.0};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = c;
  bad.theorem = 6;
  bad.regime = RegimeSpec(Regime::I2_super);
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("T = 0 rows are exact", "[harness]") {
  for (int theorem : {3, 4, 5, 6}) {
    ExperimentConfig c;
    c.theorem = theorem;
    c.regime = RegimeSpec(Regime::I2_sub);
    c.T_grid = {0.0};
    c.n_grid = {64};
    const auto rep = run_verification(c);
    for (const auto& r : rep.rows) {
      INFO("theorem " << theorem);
      CHECK(r.exact == 1.0);
      CHECK(r.limit == 1.0);
      CHECK(r.rel_err == 0.0);
    }
  }
}

TEST_CASE("verification is a pure function of its config", "[harness][property]") {
  ExperimentConfig c;
  c.theorem = 3;
  c.regime = RegimeSpec(Regime::I1_sub, 0.5);
  c.family = "pair";
  c.T_grid = {0.5, 1.0};
  c.n_grid = {8, 16, 32};
  c.mc_paths = 2000;
  c.seed = 17;
  std::ostringstream a, b;
  emit_csv(run_verification(c), a);
  emit_csv(run_verification(c), b);
  CHECK(a.str() == b.str());
  CHECK(lines(a.str()).size() == 1 + 3 * 2 * 2);
  const auto first = fields(lines(a.str())[1]);
  CHECK_FALSE(first[9].empty());
}

TEST_CASE("verification report checks", "[harness]") {
  ExperimentConfig c;
  c.theorem = 3;
  c.regime = RegimeSpec(Regime::I2_sub);
  c.T_grid = {1.0};
  c.n_grid = {256, 1024, 4096};
  c.tolerance = 0.05;
  c.require_decreasing = true;
  const auto rep = run_verification(c);
  CHECK(rep.passed);
  CHECK(rep.checks.size() == 2);
  CHECK(rep.contexts.size() == 3);
  c.tolerance = 1e-6;
  CHECK_FALSE(run_verification(c).passed);
}

TEST_CASE("reports are written to disk", "[harness]") {
  const auto path = temp_path("gwlab_report_test.json");
  emit(three_rows(), "json", path);
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  CHECK(j.at("rows").size() == 3);
  std::remove(path.c_str());
  CHECK_THROWS(emit(three_rows(), "csv", "/nonexistent-dir/out.csv"));
}

TEST_CASE("model files", "[harness][io]") {
  const auto spec = parse_model(nlohmann::json::parse(R"({
    "dimension": 2,
    "offspring": [[{"counts": [0, 0], "p": 0.5}, {"counts": [1, 1], "p": 0.5}],
                  [{"counts": [0, 0], "p": 0.5}, {"counts": [2, 0], "p": 0.5}]],
    "immigration": [{"counts": [1, 0], "p": 1.0}]})"));
  CHECK(spec.law.dim() == 2);
  REQUIRE(spec.immigration);
  CHECK(immigration_means(*spec.immigration) == std::vector<double>{1.0, 0.0});
  const auto again = parse_model(model_to_json(spec.law, &*spec.immigration));
  CHECK(mean_matrix(again.law) == mean_matrix(spec.law));

  CHECK_THROWS_AS(parse_model(nlohmann::json::parse(R"({"dimension": 1,
    "offspring": [[{"counts": [0], "p": -0.5}, {"counts": [2], "p": 1.5}]]})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_model(nlohmann::json::parse(R"({"dimension": 1,
    "offspring": [[{"counts": [0], "p": 0.5}, {"counts": [2], "p": 0.5000001}]]})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(parse_model(nlohmann::json::parse(R"({"dimension": 2,
    "offspring": [[{"counts": [0], "p": 1.0}]]})")),
                  std::invalid_argument);
  CHECK_THROWS_AS(load_model("/nonexistent/model.json"), std::runtime_error);
  CHECK(parse_real_list("0.9,0.8") == std::vector<double>{0.9, 0.8});
  CHECK_THROWS_AS(parse_real_list("0.9,abc"), std::invalid_argument);
}

TEST_CASE("mean law against its asymptotic form", "[harness]") {
  const auto crit = calibrate_perron(pair_family(), 1.0);
  for (double e : mean_law_relative_error(crit.law, 200)) CHECK(e <= 1e-9);
  for (double target : {0.9, 1.2}) {
    const auto c = calibrate_perron(pair_family(), target);
    for (double e : mean_law_relative_error(c.law, 200)) CHECK(e <= 0.05);
  }
}

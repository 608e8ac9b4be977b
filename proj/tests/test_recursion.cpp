#include <catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "gwlab/recursion.hpp"
#include "laws.hpp"

using namespace gwlab;
using Catch::Approx;
using quad = boost::multiprecision::cpp_bin_float_quad;

namespace {

CubePoint<double> pt(std::vector<double> s) { return CubePoint<double>::from_value(std::move(s)); }

/// Smaller root of p s h^2 - h + q s = 0.
double binary_hstar(double p, double s) { return (1.0 - std::sqrt(1.0 - 4.0 * p * (1.0 - p) * s * s)) / (2.0 * p * s); }

}  // namespace

TEST_CASE("iterates of f", "[recursion]") {
  const auto f = iterate_fn(test_laws::binary(0.5), std::vector<double>{0.0}, 3);
  REQUIRE(f.size() == 4);
  CHECK(f[1][0] == 0.5);
  CHECK(f[2][0] == 0.625);
  CHECK(f[3][0] == 0.6953125);
  for (const auto& x : iterate_fn(test_laws::binary(0.5), std::vector<double>{1.0}, 5)) CHECK(x[0] == 1.0);
  const auto g = iterate_fn(test_laws::pair(), std::vector<double>{0.0, 0.0}, 2);
  CHECK(g[1] == std::vector<double>{0.5, 0.5});
  CHECK(g[2] == std::vector<double>{0.625, 0.625});
}

TEST_CASE("extinction probabilities", "[recursion]") {
  const auto sup = extinction_mu(test_laws::binary(0.6));
  CHECK(std::abs(sup.value[0] - 2.0 / 3) <= 1e-12);
  CHECK(sup.defect <= 1e-13);
  CHECK(extinction_mu(test_laws::binary(0.5)).value[0] == 1.0);
  CHECK(extinction_mu(test_laws::binary(0.45)).value[0] == 1.0);
  FixedPointOptions capped;
  capped.max_iterations = 3;
  CHECK_THROWS_AS(extinction_mu(test_laws::binary(0.6), capped), NumericalFailure);
}

TEST_CASE("h star fixed point", "[recursion]") {
  const auto crit = solve_hstar(test_laws::binary(0.5), {0.9});
  CHECK(std::abs(crit.value[0] - 0.626789006) <= 1e-9);
  CHECK(std::abs(crit.value[0] - binary_hstar(0.5, 0.9)) <= 1e-12);
  CHECK(solve_hstar(test_laws::binary(0.45), {1.0}).value[0] == 1.0);
  // smaller root of 0.594 h^2 - h + 0.396 = 0
  const auto sup = solve_hstar(test_laws::binary(0.6), {0.99});
  CHECK(std::abs(sup.value[0] - 0.637110149508) <= 1e-9);
  CHECK(std::abs(sup.value[0] - binary_hstar(0.6, 0.99)) <= 1e-12);
  CHECK_THROWS_AS(solve_hstar(test_laws::binary(0.5), {0.0}), std::invalid_argument);
  CHECK_THROWS_AS(solve_hstar(test_laws::binary(0.5), {1.5}), std::invalid_argument);
}

TEST_CASE("Aitken acceleration reaches the same fixed point", "[recursion]") {
  FixedPointOptions fast;
  fast.aitken = true;
  const auto plain = solve_hstar(test_laws::binary(0.5), {0.999});
  const auto acc = solve_hstar(test_laws::binary(0.5), {0.999}, fast);
  CHECK(std::abs(plain.value[0] - acc.value[0]) <= 1e-11);
  CHECK(acc.iterations < plain.iterations);
}

TEST_CASE("progeny sequences", "[recursion]") {
  const auto st = progeny_sequences(test_laws::binary(0.5), pt({0.9}), 2);
  CHECK(st[1].t[0] == Approx(0.8145).epsilon(1e-15));
  CHECK(st[1].h[0] == Approx(0.45).epsilon(1e-15));
  CHECK(st[2].h[0] == Approx(0.541125).epsilon(1e-15));

  const auto one = progeny_sequences(test_laws::binary(0.5), pt({1.0}), 2);
  CHECK(one[2].survival[0] == 0.375);

  const auto zero = progeny_sequences(test_laws::binary(0.5), pt({0.0}), 4);
  for (const auto& s : zero) {
    CHECK(s.t[0] == 0.0);
    CHECK(s.h[0] == 0.0);
  }
}

TEST_CASE("conditional transform given survival", "[recursion]") {
  CHECK(conditional_lt_survival(test_laws::binary(0.5), pt({0.9}), 1)[0] == Approx(0.729).epsilon(1e-14));
  for (std::size_t n : {1, 5, 40}) CHECK(conditional_lt_survival(test_laws::binary(0.5), pt({1.0}), n)[0] == 1.0);
  const auto pair = conditional_lt_survival(test_laws::pair(), pt({0.9, 0.9}), 1);
  CHECK(pair[0] == Approx(0.729).epsilon(1e-14));
  CHECK(pair[1] == Approx(0.729).epsilon(1e-14));
  const auto line = OffspringLaw::from_atoms({{{{0}, 1.0}}});
  CHECK_THROWS_AS(conditional_lt_survival(line, pt({0.5}), 1), std::invalid_argument);
}

TEST_CASE("conditional transform given extinction at n", "[recursion]") {
  const auto law = test_laws::binary(0.5);
  CHECK(conditional_lt_extinction(law, pt({0.9}), 1)[0] == Approx(0.9).epsilon(1e-14));
  CHECK(conditional_lt_extinction(law, pt({0.9}), 2)[0] == Approx(0.729).epsilon(1e-14));
  CHECK(conditional_lt_extinction(law, pt({1.0}), 6)[0] == Approx(1.0).epsilon(1e-14));
  CHECK_THROWS_AS(conditional_lt_extinction(law, pt({0.9}), 0), std::invalid_argument);
  const auto line = OffspringLaw::from_atoms({{{{1}, 1.0}}});
  CHECK_THROWS_AS(conditional_lt_extinction(line, pt({0.5}), 2), std::invalid_argument);
}

TEST_CASE("immigration transform", "[recursion]") {
  const auto law = test_laws::binary(0.5);
  const auto B = test_laws::one_immigrant();
  CHECK(immigration_lt(law, B, pt({0.9}), 2) == Approx(0.73305).epsilon(1e-14));
  CHECK(immigration_lt(law, B, pt({0.9}), 1) == Approx(0.9).epsilon(1e-15));
  CHECK(immigration_lt(law, B, pt({1.0}), 7) == 1.0);
  CHECK(immigration_lt(law, B, pt({0.9}), 5, {true}) ==
        Approx(immigration_lt(law, B, pt({0.9}), 5)).epsilon(1e-14));
}

TEST_CASE("joint pgf", "[recursion]") {
  const auto law = test_laws::binary(0.5);
  CHECK(joint_pgf(law, std::vector<double>{0.5}, std::vector<double>{1.0}, 1)[0] == 0.625);
  CHECK(joint_pgf(law, std::vector<double>{0.0}, std::vector<double>{0.9}, 2)[0] == Approx(0.541125).epsilon(1e-15));
  const auto st = progeny_sequences(law, pt({0.7}), 4);
  CHECK(joint_pgf(law, std::vector<double>{1.0}, std::vector<double>{0.7}, 4)[0] == st[4].t[0]);
}

TEST_CASE("doomed transform", "[recursion]") {
  const auto law = test_laws::binary(0.45);
  // Y_1 = 1 + Z_1 with Z_1 size-biased: s^2 f'(s) / rho
  const double oracle = 0.81 * 0.9 * 0.9 / 0.9;
  // plain differencing loses about |log10(0.9^200)| digits
  CHECK(std::abs(doomed_lt(law, pt({0.9}), 1, 200, {false})[0] - oracle) <= 1e-6);
  CHECK(doomed_lt(law, pt({0.9}), 1, 200, {true})[0] == Approx(oracle).epsilon(1e-12));
  CHECK(doomed_lt(law, pt({0.9}), 1, 5000, {true})[0] == Approx(oracle).epsilon(1e-12));
  for (bool comp : {false, true}) {
    CHECK(doomed_lt(law, pt({0.9}), 1, 30, {comp})[0] == Approx(oracle).epsilon(1e-12));
    CHECK(doomed_lt(law, pt({1.0}), 3, 50, {comp})[0] == Approx(1.0).epsilon(1e-12));
    CHECK(doomed_lt(law, pt({0.8}), 0, 30, {comp})[0] == Approx(0.8).epsilon(1e-12));
  }
  const auto lim = doomed_lt_limit(law, pt({0.9}), 1);
  CHECK(lim.converged);
  CHECK(lim.value[0] == Approx(oracle).epsilon(1e-10));
  CHECK_THROWS_AS(doomed_lt(law, pt({0.9}), 1, 1000, {false}), NumericalFailure);
}

TEST_CASE("doomed transform of a supercritical law uses the conjugate", "[recursion]") {
  const auto law = test_laws::binary(0.6);
  const auto mu = extinction_mu(law).value;
  const auto star = conjugate_subcritical(law, mu);
  // f*(s) = f(mu s)/mu = 0.6 + 0.4 s^2 for mu = 2/3
  REQUIRE(star.type(0).atoms().size() == 2);
  CHECK(star.type(0).atoms()[0].p == Approx(0.6).epsilon(1e-12));
  CHECK(star.type(0).atoms()[1].p == Approx(0.4).epsilon(1e-12));
  const auto direct = doomed_lt(law, pt({0.9}), 2, 200, {true}, mu);
  const auto conj = doomed_lt(star, pt({0.9}), 2, 200, {true});
  CHECK(direct[0] == Approx(conj[0]).epsilon(1e-9));
}

TEST_CASE("progeny means", "[recursion]") {
  CHECK(progeny_mean(test_laws::binary(0.5), 2)[0] == 3.0);
  CHECK(progeny_mean(test_laws::binary(0.6), 2)[0] == Approx(3.64).epsilon(1e-15));
  CHECK(progeny_mean(test_laws::pair(), 1) == std::vector<double>{2.0, 2.0});
}

TEST_CASE("progeny mean matches the slope of t_n at 1", "[recursion][property]") {
  for (const auto& law : {test_laws::binary(0.45), test_laws::binary(0.6), test_laws::pair(), test_laws::triple()}) {
    const std::size_t d = law.dim();
    for (std::size_t n : {1, 3, 6}) {
      const auto mean = progeny_mean(law, n);
      const double step = 1e-6;
      const auto t = progeny_sequences(law, CubePoint<double>::filled(d, 1.0 - step), n, {true})[n];
      for (std::size_t j = 0; j < d; ++j) {
        // d/ds t_n(s 1) at s = 1 equals E[sum of Y_n]
        const double slope = t.t_complement[j] / step;
        CHECK(std::abs(slope - mean[j]) <= 1e-4 * mean[j]);
      }
    }
  }
}

TEST_CASE("monotone sequences bracket h star", "[recursion][property]") {
  for (const auto& law : {test_laws::binary(0.5), test_laws::pair(), test_laws::triple()}) {
    const std::size_t d = law.dim();
    for (double s : {0.3, 0.7, 0.9}) {
      const auto hs = solve_hstar(law, std::vector<double>(d, s)).value;
      const auto mu = extinction_mu(law).value;
      const auto st = progeny_sequences(law, CubePoint<double>::filled(d, s), 12);
      for (std::size_t k = 0; k < st.size(); ++k)
        for (std::size_t j = 0; j < d; ++j) {
          CHECK(st[k].h[j] < hs[j] + 1e-12);  // solver stops at step 1e-13
          CHECK(hs[j] < st[k].t[j]);
          CHECK(hs[j] <= mu[j] + 1e-13);
          if (k > 0) {
            CHECK(st[k].h[j] >= st[k - 1].h[j]);
            CHECK(st[k].t[j] <= st[k - 1].t[j]);
          }
        }
    }
  }
}

TEST_CASE("recursion at s = 1 reduces to f_n(0)", "[recursion][property]") {
  const auto law = test_laws::triple();
  const auto st = progeny_sequences(law, CubePoint<double>::filled(2, 1.0), 8);
  const auto f = iterate_fn(law, std::vector<double>{0.0, 0.0}, 8);
  for (std::size_t k = 0; k <= 8; ++k)
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(st[k].t[j] == 1.0);
      CHECK(std::abs(st[k].h[j] - f[k][j]) <= 1e-12);
    }
}

TEST_CASE("joint pgf marginals", "[recursion][property]") {
  for (const auto& law : {test_laws::pair(), test_laws::triple()}) {
    const std::vector<double> s{0.7, 0.4};
    const auto st = progeny_sequences(law, pt(s), 5);
    const auto x1 = joint_pgf_sequence(law, std::vector<double>{1.0, 1.0}, s, 5);
    const auto x0 = joint_pgf_sequence(law, std::vector<double>{0.0, 0.0}, s, 5);
    for (std::size_t k = 0; k <= 5; ++k)
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(std::abs(x1[k][j] - st[k].t[j]) <= 1e-15);
        CHECK(std::abs(x0[k][j] - st[k].h[j]) <= 1e-15);
      }
  }
}

TEST_CASE("compensated mode agrees with direct differencing", "[recursion][property]") {
  const auto law = test_laws::triple();
  const auto s = pt({0.6, 0.85});
  const auto plain = progeny_sequences(law, s, 10);
  const auto comp = progeny_sequences(law, s, 10, {true});
  // plain differences of O(1) values are exact only to a few ulps of 1
  const double tol = 16 * std::numeric_limits<double>::epsilon();
  for (std::size_t k = 1; k <= 10; ++k)
    for (std::size_t j = 0; j < 2; ++j) {
      CHECK(std::abs(comp[k].t_minus_h[j] - plain[k].t_minus_h[j]) <= tol);
      CHECK(std::abs(comp[k].h_increment[j] - plain[k].h_increment[j]) <= tol);
      CHECK(std::abs(comp[k].survival[j] - plain[k].survival[j]) <= tol);
    }
}

TEST_CASE("extended precision agrees with binary64", "[recursion][property]") {
  const auto law = test_laws::binary(0.5);
  const double c = 1e-7;
  const auto d = conditional_lt_survival(law, CubePoint<double>::from_complement({c}), 1000, {true});
  const auto q = conditional_lt_survival(law, CubePoint<quad>::from_complement({quad(c)}), 1000, {true});
  CHECK(std::abs(d[0] - static_cast<double>(q[0])) <= 1e-12);
  const auto de = conditional_lt_extinction(law, CubePoint<double>::from_complement({c}), 500, {true});
  const auto qe = conditional_lt_extinction(law, CubePoint<quad>::from_complement({quad(c)}), 500, {true});
  CHECK(std::abs(de[0] - static_cast<double>(qe[0])) <= 1e-11);
}

TEST_CASE("compensated mode keeps precision where 1 - s is below one ulp", "[recursion]") {
  const auto law = test_laws::binary(0.5 + 0.5 / 64.0);
  const auto s = CubePoint<double>::from_complement({1e-30});
  const auto st = progeny_sequences(law, s, 50, {true});
  CHECK(s.value[0] == 1.0);
  // 1 - t_n is of order n (1 - s) and survives only through the complement
  CHECK(st[50].t_complement[0] > 1e-30);
  CHECK(st[50].t_complement[0] < 1e-25);
  const auto q = progeny_sequences(law, CubePoint<quad>::from_complement({quad(1e-30)}), 50, {true});
  CHECK(st[50].t_complement[0] == Approx(static_cast<double>(q[50].t_complement[0])).epsilon(1e-12));
}

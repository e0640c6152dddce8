#include <doctest.h>

#include <cmath>
#include <vector>

#include "fus/stats.hpp"

namespace {

// Simpson-rule integral of the chi-square density, as an independent check
// of the incomplete-gamma implementation.
double chi2_cdf_quadrature(double x, int df) {
  auto pdf = [&](double t) {
    if (t <= 0.0) return 0.0;
    double a = 0.5 * df;
    return std::exp((a - 1.0) * std::log(t) - 0.5 * t - a * std::log(2.0) - std::lgamma(a));
  };
  const int n = 20000;  // even
  double h = x / n;
  double sum = pdf(0.0) + pdf(x);
  for (int i = 1; i < n; ++i) sum += pdf(i * h) * (i % 2 ? 4.0 : 2.0);
  return sum * h / 3.0;
}

}  // namespace

TEST_CASE("chi-square survival function boundary and reference values") {
  CHECK(fus::chi_square_sf(0.0, 5) == doctest::Approx(1.0));
  CHECK(fus::chi_square_sf(3.841, 1) == doctest::Approx(0.050).epsilon(0.01));
  CHECK(fus::chi_square_sf(16788.03, 231) < 0.001);
  CHECK_THROWS(fus::chi_square_sf(1.0, 0));
  CHECK_THROWS(fus::chi_square_sf(-1.0, 3));
}

TEST_CASE("chi-square survival function matches quadrature oracle") {
  for (int df : {2, 4, 10, 50}) {
    for (double x : {0.5, 2.0, 1.0 * df, 2.5 * df}) {
      double oracle = 1.0 - chi2_cdf_quadrature(x, df);
      CHECK(fus::chi_square_sf(x, df) == doctest::Approx(oracle).epsilon(1e-8));
    }
  }
  // df = 1 via the normal-tail identity instead of the singular density
  for (double x : {0.5, 1.0, 4.0, 9.0}) {
    double oracle = 2.0 * (1.0 - fus::normal_cdf(std::sqrt(x)));
    CHECK(fus::chi_square_sf(x, 1) == doctest::Approx(oracle).epsilon(1e-10));
  }
}

TEST_CASE("survival function plus CDF is one and monotone") {
  for (int df : {1, 3, 8, 30}) {
    double prev = 1.1;
    for (double x = 0.0; x <= 10.0 * df; x += 0.37 * df) {
      double sf = fus::chi_square_sf(x, df);
      CHECK(sf + fus::chi_square_cdf(x, df) == doctest::Approx(1.0).epsilon(1e-10));
      CHECK(sf <= prev + 1e-14);
      prev = sf;
    }
  }
}

TEST_CASE("gamma_p basic identities") {
  for (double x : {0.1, 1.0, 3.0})
    CHECK(fus::gamma_p(1.0, x) == doctest::Approx(1.0 - std::exp(-x)).epsilon(1e-12));
  CHECK(fus::gamma_p(2.5, 0.0) == doctest::Approx(0.0));
  CHECK_THROWS(fus::gamma_p(0.0, 1.0));
}

TEST_CASE("normal CDF reference points") {
  CHECK(fus::normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(fus::normal_cdf(1.959964) == doctest::Approx(0.975).epsilon(1e-6));
  CHECK(fus::normal_cdf(-1.0) + fus::normal_cdf(1.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("p-value display clamps below 0.001") {
  CHECK(fus::format_p(0.0005) == "< 0.001");
  CHECK(fus::format_p(0.0456) == "0.0456");
  CHECK(fus::format_p(1.0) == "1.0000");
}

TEST_CASE("interpolated quantile") {
  std::vector<double> v = {1, 2, 3, 4};
  CHECK(fus::quantile(v, 0.5) == doctest::Approx(2.5));
  CHECK(fus::quantile(v, 0.0) == doctest::Approx(1.0));
  CHECK(fus::quantile(v, 1.0) == doctest::Approx(4.0));
  CHECK(fus::quantile({1, 2, 3, 4, 10}, 0.25) == doctest::Approx(2.0));
  CHECK_THROWS(fus::quantile({}, 0.5));
  CHECK_THROWS(fus::quantile({1.0}, 1.5));
}

TEST_CASE("box-plot whiskers") {
  std::vector<double> v = {1, 2, 3, 4, 5, 6, 7, 8};
  fus::Whiskers w = fus::tukey_whiskers(v);
  CHECK(w.lower == doctest::Approx(2.75 - 1.5 * 3.5));
  CHECK(w.upper == doctest::Approx(6.25 + 1.5 * 3.5));
}

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "cmcr/detection.hpp"

using namespace cmcr;
using namespace cmcr::detection;

namespace {

// Central chi-square density for the quadrature oracle.
double chi2_pdf(double x, int dof) {
  const double m = dof / 2.0;
  return std::exp((m - 1.0) * std::log(x) - 0.5 * x - m * std::log(2.0) - std::lgamma(m));
}

double simpson(double a, double b, int dof) {
  const double mid = 0.5 * (a + b);
  return (b - a) / 6.0 * (chi2_pdf(a, dof) + 4.0 * chi2_pdf(mid, dof) + chi2_pdf(b, dof));
}

double adaptive_quadrature(double a, double b, int dof, double whole, double tol, int depth) {
  const double mid = 0.5 * (a + b);
  const double left = simpson(a, mid, dof), right = simpson(mid, b, dof);
  if (depth > 40 || std::abs(left + right - whole) < 15.0 * tol)
    return left + right + (left + right - whole) / 15.0;
  return adaptive_quadrature(a, mid, dof, left, tol / 2, depth + 1) +
         adaptive_quadrature(mid, b, dof, right, tol / 2, depth + 1);
}

double chi2_cdf_oracle(double x, int dof) {
  if (x <= 0.0) return 0.0;
  const double eps = 1e-13;  // keep the integrand away from the x=0 singularity guard
  return adaptive_quadrature(eps, x, dof, simpson(eps, x, dof), 1e-13, 0);
}

RadarParams test_params(double snr_db, int m, int n = 16, double pfa = 1e-6) {
  RadarParams p;
  p.carrier_hz = 1.0e9;
  p.freq_step_hz = 1.0e6;
  p.num_channels = 16;
  p.num_selected = m;
  p.pulses_per_slot = n;
  p.noise_psd = 1.0;
  p.scatter_coeff = std::sqrt(std::pow(10.0, snr_db / 10.0) * p.noise_psd * p.freq_step_hz);
  p.false_alarm_rate = pfa;
  return p;
}

}  // namespace

TEST_CASE("chi-square CDF closed points") {
  CHECK(chi2_cdf(2.0 * std::log(2.0), 2) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(chi2_cdf(0.0, 8) == 0.0);
  CHECK_THROWS_AS(chi2_cdf(-1.0, 2), std::domain_error);
  CHECK_THROWS_AS(chi2_cdf(1.0, 7), std::domain_error);
}

TEST_CASE("chi-square CDF against adaptive quadrature of the density") {
  for (double x : {0.5, 3.0, 7.0, 20.0, 42.7}) {
    for (int dof : {2, 4, 8, 16}) {
      CHECK(std::abs(chi2_cdf(x, dof) - chi2_cdf_oracle(x, dof)) < 1e-10);
    }
  }
}

TEST_CASE("noncentral chi-square CDF reductions") {
  CHECK(noncentral_chi2_cdf(5.0, 4, 0.0) == chi2_cdf(5.0, 4));
  CHECK(noncentral_chi2_cdf(0.0, 4, 11.0) == 0.0);
  CHECK_THROWS_AS(noncentral_chi2_cdf(1.0, 5, 1.0), std::domain_error);
  CHECK_THROWS_AS(noncentral_chi2_cdf(1.0, 4, -1.0), std::domain_error);
}

TEST_CASE("noncentral chi-square CDF against a Monte Carlo oracle") {
  // X = (Z0 + sqrt(lambda))^2 + sum of 7 more squared normals.
  const double x = 30.0, lambda = 20.0;
  Rng rng(2024);
  const int trials = 10000000;
  long below = 0;
  const double shift = std::sqrt(lambda);
  for (int i = 0; i < trials; ++i) {
    double s = 0.0;
    const double z0 = standard_normal(rng) + shift;
    s += z0 * z0;
    for (int k = 0; k < 7; ++k) {
      const double z = standard_normal(rng);
      s += z * z;
    }
    below += (s <= x);
  }
  const double empirical = double(below) / trials;
  const double predicted = noncentral_chi2_cdf(x, 8, lambda);
  const double se = std::sqrt(predicted * (1 - predicted) / trials);
  CHECK(std::abs(empirical - predicted) < 3.0 * se);
}

TEST_CASE("threshold closed forms and round trip") {
  // Bisection stops on |tail residual| < 1e-12, which bounds the threshold
  // itself to ~2e-6 near p = 1e-6.
  CHECK(solve_threshold(1e-6, 1) == doctest::Approx(2.0 * std::log(1e6)).epsilon(1e-6));
  CHECK(solve_threshold(0.5, 1) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-9));
  for (double p : {1e-6, 1e-3, 1e-2, 0.5}) {
    for (int m : {1, 2, 4, 8}) {
      const double t = solve_threshold(p, m);
      CHECK(std::abs(1.0 - chi2_cdf(t, 2 * m) - p) < 1e-10);
    }
  }
}

TEST_CASE("detection probability degenerate and monotone behavior") {
  auto params = test_params(10.0, 4);
  const std::vector<double> j_psd(4, 10.0);

  SUBCASE("zero scattering reduces to the false alarm rate") {
    params.scatter_coeff = 0.0;
    const std::vector<std::uint8_t> occ = {0, 1, 0, 1};
    CHECK(detection_probability(params, occ, j_psd) ==
          doctest::Approx(params.false_alarm_rate).epsilon(1e-6));
  }
  SUBCASE("interference strictly lowers detection") {
    const std::vector<std::uint8_t> clean(4, 0), dirty(4, 1);
    CHECK(detection_probability(params, dirty, j_psd) <
          detection_probability(params, clean, j_psd));
  }
  SUBCASE("monotone in the number of clean channels and in SNR") {
    double previous = -1.0;
    for (int nclean = 0; nclean <= 4; ++nclean) {
      std::vector<std::uint8_t> occ(4, 1);
      for (int i = 0; i < nclean; ++i) occ[i] = 0;
      const double pd = detection_probability(params, occ, j_psd);
      CHECK(pd >= previous);
      CHECK(pd >= params.false_alarm_rate);
      previous = pd;
    }
    auto weak = test_params(0.0, 4);
    auto strong = test_params(5.0, 4);
    const std::vector<std::uint8_t> occ = {0, 0, 1, 1};
    CHECK(detection_probability(strong, occ, j_psd) >
          detection_probability(weak, occ, j_psd));
  }
}

TEST_CASE("simulate_slot degenerate cases") {
  auto params = test_params(10.0, 4);
  const std::vector<int> selected = {1, 5, 7, 12};
  const std::vector<std::uint8_t> occ(4, 0);
  const std::vector<double> j_psd(4, 10.0);
  Rng rng(5);

  SUBCASE("zero scattering and zero noise give the zero matrix") {
    params.scatter_coeff = 0.0;
    params.noise_psd = 0.0;
    const auto echoes = simulate_slot(params, selected, occ, j_psd, true, rng);
    for (const auto& e : echoes.data) CHECK(std::abs(e) == 0.0);
  }
  SUBCASE("zero speed repeats the same deterministic column") {
    params.target_speed = 0.0;
    params.noise_psd = 1e-300;
    const auto echoes = simulate_slot(params, selected, occ, j_psd, true, rng);
    for (int m = 0; m < 4; ++m)
      for (int n = 1; n < 16; ++n)
        CHECK(std::abs(echoes.at(m, n) - echoes.at(m, 0)) < 1e-12);
  }
  SUBCASE("duplicate selected indices are rejected") {
    const std::vector<int> dup = {1, 5, 5, 12};
    CHECK_THROWS_AS(simulate_slot(params, dup, occ, j_psd, true, rng), std::domain_error);
  }
}

TEST_CASE("H0 sample variance matches the interference model") {
  auto params = test_params(10.0, 2);
  params.pulses_per_slot = 100;
  const std::vector<int> selected = {3, 9};
  const std::vector<std::uint8_t> occ = {0, 1};
  const std::vector<double> j_psd = {10.0, 10.0};
  Rng rng(31);
  double sum_clean = 0.0, sum_dirty = 0.0;
  const int slots = 10000;
  for (int i = 0; i < slots; ++i) {
    const auto echoes = simulate_slot(params, selected, occ, j_psd, false, rng);
    for (int n = 0; n < 100; ++n) {
      sum_clean += std::norm(echoes.at(0, n));
      sum_dirty += std::norm(echoes.at(1, n));
    }
  }
  const double n_samples = 100.0 * slots;
  CHECK(sum_clean / n_samples == doctest::Approx(1e6).epsilon(0.01));
  CHECK(sum_dirty / n_samples == doctest::Approx(11e6).epsilon(0.01));
}

TEST_CASE("coherent integration") {
  auto params = test_params(10.0, 4);
  const std::vector<int> selected = {0, 3, 9, 15};
  const std::vector<std::uint8_t> occ(4, 0);
  const std::vector<double> j_psd(4, 10.0);

  SUBCASE("all-ones input at zero grid speed sums to N") {
    EchoMatrix ones;
    ones.rows = 4;
    ones.cols = 16;
    ones.data.assign(64, {1.0, 0.0});
    const auto result = coherent_integrate(ones, params, selected, occ, j_psd, 0.0);
    for (const auto& c : result.coherent_sum) CHECK(std::abs(c - 16.0) < 1e-12);
  }
  SUBCASE("matched grid recovers N|beta|/sqrt(M) exactly") {
    params.noise_psd = 1e-300;
    Rng rng(8);
    const auto echoes = simulate_slot(params, selected, occ, j_psd, true, rng);
    const auto result =
        coherent_integrate(echoes, params, selected, occ, j_psd, params.target_speed);
    const double expected = 16.0 * std::abs(params.scatter_coeff) / 2.0;
    for (const auto& c : result.coherent_sum)
      CHECK(std::abs(c) == doctest::Approx(expected).epsilon(1e-9));
  }
  SUBCASE("mismatched grid follows the Dirichlet kernel") {
    params.noise_psd = 1e-300;
    const double v_err = 40.0;
    Rng rng(8);
    const auto echoes = simulate_slot(params, selected, occ, j_psd, true, rng);
    const auto result = coherent_integrate(echoes, params, selected, occ, j_psd,
                                           params.target_speed - v_err);
    for (int m = 0; m < 4; ++m) {
      const double f_m = params.carrier_for(selected[m]);
      const double u = 2.0 * f_m * v_err * params.pri_s / params.wave_speed;
      const double kernel =
          std::abs(std::sin(16.0 * M_PI * u) / std::sin(M_PI * u));
      const double expected = std::abs(params.scatter_coeff) / 2.0 * kernel;
      CHECK(std::abs(result.coherent_sum[m]) == doctest::Approx(expected).epsilon(1e-9));
    }
  }
}

TEST_CASE("test statistic closed values") {
  auto params = test_params(10.0, 1);
  IntegrationResult result;
  SUBCASE("zero integration gives zero") {
    result.coherent_sum = {{0.0, 0.0}, {0.0, 0.0}};
    result.denominator_psd = {1.0, 11.0};
    params.num_selected = 2;
    CHECK(test_statistic(result, params) == 0.0);
  }
  SUBCASE("unit statistic at |c|^2 = N df N0 / 2") {
    result.coherent_sum = {{std::sqrt(16.0 * 1e6 * 0.5), 0.0}};
    result.denominator_psd = {1.0};
    CHECK(test_statistic(result, params) == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("H0 statistic distribution: tail and Kolmogorov-Smirnov") {
  auto params = test_params(10.0, 4);
  const std::vector<int> selected = {0, 4, 8, 12};
  const std::vector<std::uint8_t> occ = {0, 1, 0, 1};
  const std::vector<double> j_psd(4, 10.0);
  Rng rng(17);
  const int trials = 100000;
  std::vector<double> stats(trials);
  for (int i = 0; i < trials; ++i) {
    const auto echoes = simulate_slot(params, selected, occ, j_psd, false, rng);
    const auto integ =
        coherent_integrate(echoes, params, selected, occ, j_psd, params.target_speed);
    stats[i] = test_statistic(integ, params);
  }

  const double threshold = solve_threshold(0.01, 4);
  const double tail =
      double(std::count_if(stats.begin(), stats.end(), [&](double t) { return t > threshold; })) /
      trials;
  CHECK(std::abs(tail - 0.01) < 3.0 * std::sqrt(0.01 * 0.99 / trials));

  std::sort(stats.begin(), stats.end());
  double ks = 0.0;
  for (int i = 0; i < trials; ++i) {
    const double model = chi2_cdf(stats[i], 8);
    ks = std::max(ks, std::abs(model - double(i + 1) / trials));
    ks = std::max(ks, std::abs(model - double(i) / trials));
  }
  CHECK(ks < 1.63 / std::sqrt(double(trials)));  // 1% critical value
}

TEST_CASE("H1 statistic distribution matches the module noncentrality") {
  // Kolmogorov-Smirnov against the noncentral CDF using the module's lambda;
  // this is the check that pins the factor-2 convention.
  auto params = test_params(0.0, 4, 16, 0.01);
  const std::vector<int> selected = {0, 4, 8, 12};
  const std::vector<std::uint8_t> occ = {0, 0, 1, 1};
  const std::vector<double> j_psd(4, 10.0);
  const double lambda = noncentrality(params, occ, j_psd);
  CHECK(lambda == doctest::Approx(8.0 * (2.0 + 2.0 / 11.0)).epsilon(1e-12));

  Rng rng(18);
  const int trials = 100000;
  std::vector<double> stats(trials);
  for (int i = 0; i < trials; ++i) {
    const auto echoes = simulate_slot(params, selected, occ, j_psd, true, rng);
    const auto integ =
        coherent_integrate(echoes, params, selected, occ, j_psd, params.target_speed);
    stats[i] = test_statistic(integ, params);
  }
  std::sort(stats.begin(), stats.end());
  double ks = 0.0;
  for (int i = 0; i < trials; ++i) {
    const double model = noncentral_chi2_cdf(stats[i], 8, lambda);
    ks = std::max(ks, std::abs(model - double(i + 1) / trials));
    ks = std::max(ks, std::abs(model - double(i) / trials));
  }
  CHECK(ks < 1.63 / std::sqrt(double(trials)));
}

TEST_CASE("closed-form detection matches Monte Carlo at high SNR") {
  auto params = test_params(10.0, 4);
  const std::vector<int> selected = {1, 2, 3, 4};
  const std::vector<std::uint8_t> occ(4, 0);
  const std::vector<double> j_psd(4, 10.0);
  const double threshold = solve_threshold(params.false_alarm_rate, 4);
  Rng rng(23);
  const int trials = 100000;
  long detected = 0;
  for (int i = 0; i < trials; ++i) {
    const auto echoes = simulate_slot(params, selected, occ, j_psd, true, rng);
    const auto integ =
        coherent_integrate(echoes, params, selected, occ, j_psd, params.target_speed);
    detected += (test_statistic(integ, params) > threshold);
  }
  const double closed = detection_probability(params, occ, j_psd);
  CHECK(std::abs(double(detected) / trials - closed) < 0.01);
}

TEST_CASE("transmit power is independent of the carrier count") {
  // Deterministic per-pulse power summed over carriers equals |beta|^2.
  for (int m : {1, 2, 4, 8}) {
    auto params = test_params(10.0, m);
    params.noise_psd = 1e-300;
    std::vector<int> selected(m);
    for (int i = 0; i < m; ++i) selected[i] = 2 * i;
    const std::vector<std::uint8_t> occ(m, 0);
    const std::vector<double> j_psd(m, 10.0);
    Rng rng(40);
    const auto echoes = simulate_slot(params, selected, occ, j_psd, true, rng);
    for (int n = 0; n < params.pulses_per_slot; ++n) {
      double power = 0.0;
      for (int row = 0; row < m; ++row) power += std::norm(echoes.at(row, n));
      CHECK(power == doctest::Approx(std::norm(params.scatter_coeff)).epsilon(1e-9));
    }
  }
}

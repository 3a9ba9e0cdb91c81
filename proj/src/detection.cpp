#include "cmcr/detection.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

namespace cmcr::detection {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kPoissonTailTol = 1e-12;
}  // namespace

void RadarParams::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("radar params: " + msg); };
  if (num_channels < 1) fail("K must be >= 1");
  if (num_selected < 1 || num_selected > num_channels) fail("M must satisfy 1 <= M <= K");
  if (pulses_per_slot < 1) fail("N must be >= 1");
  if (!(false_alarm_rate > 0.0 && false_alarm_rate < 1.0)) fail("p_f must be in (0,1)");
  if (!(freq_step_hz > 0.0)) fail("frequency step must be positive");
  if (!(pulse_width_s > 0.0 && pulse_width_s <= pri_s)) fail("need 0 < T_p <= T_r");
  if (!(noise_psd > 0.0)) fail("N0 must be positive");
  if (!(wave_speed > 0.0)) fail("wave speed must be positive");
}

double chi2_cdf(double x, int dof) {
  if (dof <= 0 || dof % 2 != 0)
    throw std::domain_error("chi2_cdf: dof must be a positive even integer");
  if (!(x >= 0.0)) throw std::domain_error("chi2_cdf: x must be >= 0");
  if (x == 0.0) return 0.0;

  // Survival = sum_{k < dof/2} Poisson(k; x/2); each term evaluated in log
  // space so large x cannot overflow the running product.
  const double half = 0.5 * x;
  const double log_half = std::log(half);
  const int m = dof / 2;
  double survival = 0.0;
  for (int k = 0; k < m; ++k)
    survival += std::exp(-half + k * log_half - std::lgamma(k + 1.0));
  return 1.0 - std::min(1.0, survival);
}

double noncentral_chi2_cdf(double x, int dof, double lambda) {
  if (dof <= 0 || dof % 2 != 0)
    throw std::domain_error("noncentral_chi2_cdf: dof must be a positive even integer");
  if (!(x >= 0.0)) throw std::domain_error("noncentral_chi2_cdf: x must be >= 0");
  if (!(lambda >= 0.0)) throw std::domain_error("noncentral_chi2_cdf: lambda must be >= 0");
  if (lambda == 0.0) return chi2_cdf(x, dof);
  if (x == 0.0) return 0.0;

  const double hl = 0.5 * lambda;
  const double hx = 0.5 * x;
  const double log_hl = std::log(hl);
  const double log_hx = std::log(hx);

  // Start at the Poisson mode and expand in both directions; the mixture
  // weight and the central CDF both update incrementally:
  //   cdf(dof + 2(j+1)) = cdf(dof + 2j) - Poisson(dof/2 + j; x/2).
  const long j0 = static_cast<long>(hl);
  auto log_poisson = [](double log_rate_half, double rate_half, long n) {
    return -rate_half + n * log_rate_half - std::lgamma(double(n) + 1.0);
  };

  const double w0 = std::exp(log_poisson(log_hl, hl, j0));
  double cdf0 = chi2_cdf(x, dof + 2 * static_cast<int>(j0));

  double total = w0 * cdf0;
  double weight_sum = w0;

  // Upward sweep.
  {
    double w = w0, cdf = cdf0;
    // Poisson(dof/2 + j; hx) term that links cdf(j) to cdf(j+1).
    double chi_term = std::exp(log_poisson(log_hx, hx, dof / 2 + j0));
    for (long j = j0 + 1;; ++j) {
      w *= hl / double(j);
      cdf -= chi_term;
      if (cdf < 0.0) cdf = 0.0;
      chi_term *= hx / double(dof / 2 + j);
      total += w * cdf;
      weight_sum += w;
      const double ratio = hl / double(j + 1);
      if (ratio < 1.0 && w * ratio / (1.0 - ratio) < kPoissonTailTol) break;
      if (w == 0.0) break;
    }
  }
  // Downward sweep.
  {
    double w = w0, cdf = cdf0;
    double chi_term = std::exp(log_poisson(log_hx, hx, dof / 2 + j0 - 1));
    for (long j = j0 - 1; j >= 0; --j) {
      w *= double(j + 1) / hl;
      cdf += chi_term;
      if (cdf > 1.0) cdf = 1.0;
      chi_term *= double(dof / 2 + j) / hx;
      total += w * cdf;
      weight_sum += w;
      if (w < kPoissonTailTol && weight_sum > 1.0 - kPoissonTailTol) break;
    }
  }
  return std::min(1.0, total);
}

double solve_threshold(double false_alarm_rate, int num_selected) {
  if (!(false_alarm_rate > 0.0 && false_alarm_rate < 1.0))
    throw std::domain_error("solve_threshold: p_f must be in (0,1)");
  const int dof = 2 * num_selected;
  auto tail = [dof](double t) { return 1.0 - chi2_cdf(t, dof); };

  double lo = 0.0, hi = double(dof);
  while (tail(hi) > false_alarm_rate) hi *= 2.0;
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double r = tail(mid) - false_alarm_rate;
    if (std::abs(r) < 1e-12) return mid;
    if (r > 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-14 * std::max(1.0, lo)) break;
  }
  const double t = 0.5 * (lo + hi);
  if (std::abs(tail(t) - false_alarm_rate) > 1e-10)
    throw NumericalError("solve_threshold: bisection residual above tolerance");
  return t;
}

double noncentrality(const RadarParams& params, std::span<const std::uint8_t> occupied,
                     std::span<const double> interference_psd) {
  const auto m_count = static_cast<std::size_t>(params.num_selected);
  if (occupied.size() != m_count || interference_psd.size() != m_count)
    throw std::domain_error("noncentrality: occupancy/PSD vectors must have length M");
  double sum = 0.0;
  for (std::size_t m = 0; m < m_count; ++m) {
    const double denom =
        params.freq_step_hz * (params.noise_psd + (occupied[m] ? interference_psd[m] : 0.0));
    sum += 1.0 / denom;
  }
  return 2.0 * params.pulses_per_slot * std::norm(params.scatter_coeff) / params.num_selected * sum;
}

double detection_probability(const RadarParams& params, std::span<const std::uint8_t> occupied,
                             std::span<const double> interference_psd) {
  const double threshold = solve_threshold(params.false_alarm_rate, params.num_selected);
  const double lambda = noncentrality(params, occupied, interference_psd);
  return 1.0 - noncentral_chi2_cdf(threshold, 2 * params.num_selected, lambda);
}

EchoMatrix simulate_slot(const RadarParams& params, std::span<const int> selected,
                         std::span<const std::uint8_t> occupied,
                         std::span<const double> interference_psd, bool target_present, Rng& rng) {
  const int m_count = params.num_selected;
  if (static_cast<int>(selected.size()) != m_count)
    throw std::domain_error("simulate_slot: |selected| must equal M");
  if (occupied.size() != selected.size() || interference_psd.size() != selected.size())
    throw std::domain_error("simulate_slot: occupancy/PSD vectors must have length M");
  std::set<int> unique(selected.begin(), selected.end());
  if (unique.size() != selected.size())
    throw std::domain_error("simulate_slot: duplicate selected indices");

  const int n_count = params.pulses_per_slot;
  EchoMatrix echoes;
  echoes.rows = m_count;
  echoes.cols = n_count;
  echoes.data.resize(static_cast<std::size_t>(m_count) * n_count);

  const double amp = 1.0 / std::sqrt(double(m_count));
  for (int m = 0; m < m_count; ++m) {
    const double f_m = params.carrier_for(selected[m]);
    const double sigma2 =
        params.freq_step_hz * (params.noise_psd + (occupied[m] ? interference_psd[m] : 0.0));
    const double noise_scale = std::sqrt(0.5 * sigma2);
    const double range_phase = -2.0 * kTwoPi * f_m * params.initial_range / params.wave_speed;
    const double doppler_step =
        -2.0 * kTwoPi * f_m * params.target_speed * params.pri_s / params.wave_speed;
    const std::complex<double> base =
        params.scatter_coeff * amp *
        std::complex<double>(std::cos(range_phase), std::sin(range_phase));
    for (int n = 0; n < n_count; ++n) {
      std::complex<double> value(noise_scale * standard_normal(rng),
                                 noise_scale * standard_normal(rng));
      if (target_present) {
        const double phase = doppler_step * n;
        value += base * std::complex<double>(std::cos(phase), std::sin(phase));
      }
      echoes.at(m, n) = value;
    }
  }
  return echoes;
}

IntegrationResult coherent_integrate(const EchoMatrix& echoes, const RadarParams& params,
                                     std::span<const int> selected,
                                     std::span<const std::uint8_t> occupied,
                                     std::span<const double> interference_psd,
                                     double grid_speed) {
  if (!std::isfinite(grid_speed))
    throw std::domain_error("coherent_integrate: grid speed must be finite");
  const int m_count = echoes.rows;
  IntegrationResult result;
  result.coherent_sum.resize(m_count);
  result.denominator_psd.resize(m_count);
  for (int m = 0; m < m_count; ++m) {
    const double f_m = params.carrier_for(selected[m]);
    // Compensation phase mirrors the Doppler progression of simulate_slot so
    // a matched grid cancels it exactly.
    const double comp_step = 2.0 * kTwoPi * f_m * grid_speed * params.pri_s / params.wave_speed;
    std::complex<double> sum = 0.0;
    for (int n = 0; n < echoes.cols; ++n) {
      const double phase = comp_step * n;
      sum += echoes.at(m, n) * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    result.coherent_sum[m] = sum;
    result.denominator_psd[m] =
        params.noise_psd + (occupied[m] ? interference_psd[m] : 0.0);
  }
  return result;
}

double test_statistic(const IntegrationResult& result, const RadarParams& params) {
  double t = 0.0;
  for (std::size_t m = 0; m < result.coherent_sum.size(); ++m) {
    const double denom = params.pulses_per_slot * params.freq_step_hz * result.denominator_psd[m];
    if (!(denom > 0.0)) throw std::domain_error("test_statistic: nonpositive denominator");
    t += 2.0 * std::norm(result.coherent_sum[m]) / denom;
  }
  return t;
}

}  // namespace cmcr::detection

#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "cmcr/errors.hpp"
#include "cmcr/rng.hpp"

namespace cmcr::detection {

// Physical and processing constants of the multi-carrier radar.
struct RadarParams {
  double carrier_hz = 3.0e9;                     // f_c
  double freq_step_hz = 1.0e6;                   // channel bandwidth and carrier spacing
  int num_channels = 16;                         // K
  int num_selected = 4;                          // M
  int pulses_per_slot = 16;                      // N
  double pri_s = 50.0e-6;                        // T_r
  double pulse_width_s = 1.0e-6;                 // T_p
  double wave_speed = 299792458.0;               // c
  double noise_psd = 1.0;                        // N0 (power per Hz)
  std::complex<double> scatter_coeff = {1.0, 0.0};  // beta
  double target_speed = 150.0;                   // v, radial, m/s
  double initial_range = 5.0e3;                  // r(0), m
  double false_alarm_rate = 1.0e-6;              // p_f

  void validate() const;  // throws ConfigError

  double snr() const { return std::norm(scatter_coeff) / (noise_psd * freq_step_hz); }
  double carrier_for(int channel_index) const {
    return carrier_hz + channel_index * freq_step_hz;
  }
};

// CDF of the central chi-square distribution with even dof, evaluated through
// the finite Poisson series. Throws std::domain_error for x < 0 or odd dof.
double chi2_cdf(double x, int dof);

// CDF of the noncentral chi-square distribution (even dof), via the Poisson
// mixture over central CDFs, truncated when the remaining Poisson mass is
// below 1e-12.
double noncentral_chi2_cdf(double x, int dof, double lambda);

// Threshold T_th with Pr(T > T_th | H0) = p_f for the 2M-degree statistic,
// solved by bisection to |residual| < 1e-12.
double solve_threshold(double false_alarm_rate, int num_selected);

// Noncentrality of the detection statistic for the given per-selected-channel
// occupancy indicators (1 = occupied) and interference PSDs:
//   lambda = (2 N |beta|^2 / M) * sum_m 1 / (df * (N0 + occ_m * J_m)).
double noncentrality(const RadarParams& params, std::span<const std::uint8_t> occupied,
                     std::span<const double> interference_psd);

// Closed-form p_d = Pr(T > T_th | H1) through the noncentral CDF.
double detection_probability(const RadarParams& params, std::span<const std::uint8_t> occupied,
                             std::span<const double> interference_psd);

// Row-major M x N complex baseband samples for one slot.
struct EchoMatrix {
  int rows = 0, cols = 0;
  std::vector<std::complex<double>> data;

  std::complex<double>& at(int m, int n) { return data[static_cast<std::size_t>(m) * cols + n]; }
  const std::complex<double>& at(int m, int n) const {
    return data[static_cast<std::size_t>(m) * cols + n];
  }
};

// Noisy received echoes y_{m,n} for the selected channel indices. Under H1
// (target_present) the deterministic part (beta/sqrt(M)) e^{-j4pi f_m r0/c}
// e^{-j4pi f_m n v T_r / c} is added to circular complex noise of variance
// df*(N0 + occ*J). Throws std::domain_error on duplicate selected indices.
EchoMatrix simulate_slot(const RadarParams& params, std::span<const int> selected,
                         std::span<const std::uint8_t> occupied,
                         std::span<const double> interference_psd, bool target_present, Rng& rng);

struct IntegrationResult {
  std::vector<std::complex<double>> coherent_sum;  // c_m
  std::vector<double> denominator_psd;             // N0 + occ_m * J_m
};

// Phase-compensated pulse sum c_m = sum_n y_{m,n} e^{+j4pi f_m n v_t T_r/c}
// for the velocity-grid value grid_speed.
IntegrationResult coherent_integrate(const EchoMatrix& echoes, const RadarParams& params,
                                     std::span<const int> selected,
                                     std::span<const std::uint8_t> occupied,
                                     std::span<const double> interference_psd, double grid_speed);

// T = sum_m 2 |c_m|^2 / (N * df * (N0 + occ_m * J_m)).
double test_statistic(const IntegrationResult& result, const RadarParams& params);

}  // namespace cmcr::detection

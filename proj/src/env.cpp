#include "cmcr/env.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace cmcr::env {

void EnvConfig::validate() const {
  spectrum.validate();
  radar.validate();
  if (history_depth < 1) throw ConfigError("env config: history depth P must be >= 1");
  if (radar.num_channels != spectrum.num_channels)
    throw ConfigError("env config: radar K differs from spectrum K");
  if (radar.noise_psd != spectrum.noise_psd)
    throw ConfigError("env config: radar N0 differs from spectrum N0");
}

RadarEnv::RadarEnv(EnvConfig config, std::uint64_t seed) : config_(std::move(config)) {
  config_.validate();
  reset(seed);
}

void RadarEnv::reset(std::uint64_t seed) {
  rng_.seed(derive_seed(seed));
  state_ = spectrum::init_state(config_.spectrum, rng_);
  const auto k = static_cast<std::size_t>(num_channels());
  history_.assign(k * config_.history_depth, 0.0);
  mask_.assign(k, 0);
  chosen_.clear();
  records_.clear();
}

int RadarEnv::observation_dim(bool with_mask) const {
  return num_channels() * config_.history_depth + (with_mask ? num_channels() : 0);
}

void RadarEnv::write_observation(std::span<double> out, bool with_mask) const {
  const auto dim = static_cast<std::size_t>(observation_dim(with_mask));
  if (out.size() != dim) throw std::invalid_argument("observation buffer size mismatch");
  std::copy(history_.begin(), history_.end(), out.begin());
  if (with_mask) {
    double* dst = out.data() + history_.size();
    for (std::size_t m = 0; m < mask_.size(); ++m) dst[m] = mask_[m] ? 1.0 : 0.0;
  }
}

std::vector<double> RadarEnv::observation(bool with_mask) const {
  std::vector<double> out(static_cast<std::size_t>(observation_dim(with_mask)));
  write_observation(out, with_mask);
  return out;
}

void RadarEnv::push_history_column(std::span<const double> column) {
  const auto k = static_cast<std::size_t>(num_channels());
  std::copy(history_.begin() + k, history_.end(), history_.begin());
  std::copy(column.begin(), column.end(), history_.end() - k);
}

StepResult RadarEnv::step_sub_action(int channel) {
  if (channel < 0 || channel >= num_channels())
    throw InvalidActionError("sub-action channel index out of range");
  if (mask_[channel])
    throw InvalidActionError("channel " + std::to_string(channel) + " already chosen this slot");
  mask_[channel] = 1;
  chosen_.push_back(channel);
  if (static_cast<int>(chosen_.size()) < num_selected()) return {0.0, false};

  // Final sub-action: the radar transmits against the current slot state.
  const double n0 = config_.spectrum.noise_psd;
  double reward = 0.0;
  std::vector<double> column(static_cast<std::size_t>(num_channels()), 0.0);
  for (int c : chosen_) {
    const double j = state_.good[c] ? 0.0 : config_.spectrum.interference_psd[c];
    reward += n0 / (j + n0);
    if (config_.sampled_observation) {
      // Average power of the slot's N interference-plus-noise samples.
      const double sigma2 = config_.radar.freq_step_hz * (n0 + j);
      double power = 0.0;
      for (int n = 0; n < config_.radar.pulses_per_slot; ++n) {
        const double re = standard_normal(rng_) * std::sqrt(0.5 * sigma2);
        const double im = standard_normal(rng_) * std::sqrt(0.5 * sigma2);
        power += re * re + im * im;
      }
      column[c] = power / (config_.radar.pulses_per_slot * config_.radar.freq_step_hz * n0);
    } else {
      column[c] = (n0 + j) / n0;
    }
  }

  SlotRecord record;
  record.slot = state_.slot_index;
  record.selected = chosen_;
  record.good = state_.good;
  record.reward = reward;
  records_.push_back(std::move(record));

  push_history_column(column);
  spectrum::step(state_, config_.spectrum, rng_);
  std::fill(mask_.begin(), mask_.end(), 0);
  chosen_.clear();
  return {reward, true};
}

StepResult RadarEnv::step_subset(std::span<const int> channels) {
  if (static_cast<int>(channels.size()) != num_selected())
    throw InvalidActionError("subset size must equal M");
  StepResult result;
  for (int c : channels) result = step_sub_action(c);
  return result;
}

EpisodeMetrics episode_metrics(std::span<const SlotRecord> records,
                               const detection::RadarParams& radar,
                               const spectrum::SpectrumConfig& spectrum_config) {
  if (records.empty()) throw std::domain_error("episode_metrics: empty trajectory");

  const double threshold = detection::solve_threshold(radar.false_alarm_rate, radar.num_selected);
  std::map<long long, double> pd_cache;  // keyed by quantized noncentrality

  double reward_sum = 0.0, pd_sum = 0.0, pd_sq_sum = 0.0;
  std::vector<std::uint8_t> occupied(static_cast<std::size_t>(radar.num_selected));
  std::vector<double> psd(static_cast<std::size_t>(radar.num_selected));
  for (const auto& rec : records) {
    reward_sum += rec.reward;
    for (std::size_t i = 0; i < rec.selected.size(); ++i) {
      const int c = rec.selected[i];
      occupied[i] = rec.good[c] ? 0 : 1;
      psd[i] = spectrum_config.interference_psd[c];
    }
    const double lambda = detection::noncentrality(radar, occupied, psd);
    const long long key = std::llround(lambda * 1e9);
    auto it = pd_cache.find(key);
    double pd;
    if (it != pd_cache.end()) {
      pd = it->second;
    } else {
      pd = 1.0 - detection::noncentral_chi2_cdf(threshold, 2 * radar.num_selected, lambda);
      pd_cache.emplace(key, pd);
    }
    pd_sum += pd;
    pd_sq_sum += pd * pd;
  }
  const double n = static_cast<double>(records.size());
  EpisodeMetrics metrics;
  metrics.mean_reward = reward_sum / n;
  metrics.mean_detection = pd_sum / n;
  metrics.std_detection = std::sqrt(std::max(0.0, pd_sq_sum / n - metrics.mean_detection * metrics.mean_detection));
  return metrics;
}

double history_input_scale(const EnvConfig& config) {
  double max_j = 0.0;
  for (double j : config.spectrum.interference_psd) max_j = std::max(max_j, j);
  return config.spectrum.noise_psd / (config.spectrum.noise_psd + max_j);
}

std::string records_to_csv(std::span<const SlotRecord> records) {
  std::ostringstream out;
  out << "slot,sub_index,action,reward,occupancy_bits\n";
  for (const auto& rec : records) {
    std::string bits(rec.good.size(), '0');
    for (std::size_t m = 0; m < rec.good.size(); ++m)
      if (!rec.good[m]) bits[m] = '1';
    for (std::size_t i = 0; i < rec.selected.size(); ++i) {
      const bool last = i + 1 == rec.selected.size();
      out << rec.slot << ',' << i << ',' << rec.selected[i] << ',';
      out << (last ? rec.reward : 0.0) << ',' << bits << '\n';
    }
  }
  return out.str();
}

}  // namespace cmcr::env

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cmcr/detection.hpp"
#include "cmcr/errors.hpp"
#include "cmcr/rng.hpp"
#include "cmcr/spectrum.hpp"

namespace cmcr::env {

struct EnvConfig {
  spectrum::SpectrumConfig spectrum;
  detection::RadarParams radar;
  int history_depth = 8;  // P
  // When true, observed PSDs are the per-slot sample estimate
  // mean(|i_{m,n}|^2)/df instead of the exact interference-plus-noise PSD.
  bool sampled_observation = false;

  void validate() const;
};

// One completed slot: the channels picked (in pick order), the full good/bad
// state the radar transmitted against, and the realized reward.
struct SlotRecord {
  long slot = 0;
  std::vector<int> selected;
  std::vector<std::uint8_t> good;  // size K
  double reward = 0.0;
};

struct StepResult {
  double reward = 0.0;
  bool slot_complete = false;
};

// The iteratively-selecting MDP. One slot is M sub-actions; the spectrum
// advances exactly once per completed slot. Observations are the K x P
// history of measured PSDs (N0-normalized, zero where unobserved), flattened
// column-major oldest-column-first, optionally followed by the K-length mask.
class RadarEnv {
 public:
  RadarEnv(EnvConfig config, std::uint64_t seed);

  void reset(std::uint64_t seed);

  int num_channels() const { return config_.spectrum.num_channels; }
  int num_selected() const { return config_.radar.num_selected; }
  int history_depth() const { return config_.history_depth; }
  int observation_dim(bool with_mask) const;
  void write_observation(std::span<double> out, bool with_mask) const;
  std::vector<double> observation(bool with_mask) const;

  const std::vector<std::uint8_t>& mask() const { return mask_; }
  int sub_index() const { return static_cast<int>(chosen_.size()); }
  long slot_index() const { return state_.slot_index; }
  const spectrum::ChannelOccupancy& occupancy() const { return state_; }
  const EnvConfig& config() const { return config_; }

  // Reward is 0 except on the final sub-action of a slot, where it is
  // sum_m N0 / (1(d_m) J_m + N0) over the selected channels. Throws
  // InvalidActionError if the channel is already masked.
  StepResult step_sub_action(int channel);
  // Convenience for subset policies; equivalent to M sub-action steps.
  StepResult step_subset(std::span<const int> channels);

  const std::vector<SlotRecord>& records() const { return records_; }
  void clear_records() { records_.clear(); }

 private:
  void push_history_column(std::span<const double> column);

  EnvConfig config_;
  Rng rng_;
  spectrum::ChannelOccupancy state_;
  std::vector<double> history_;  // K * P, column-major, oldest first
  std::vector<std::uint8_t> mask_;
  std::vector<int> chosen_;
  std::vector<SlotRecord> records_;
};

struct EpisodeMetrics {
  double mean_reward = 0.0;      // per slot, N0-normalized units
  double mean_detection = 0.0;   // closed-form p_d averaged over slots
  double std_detection = 0.0;    // per-slot population standard deviation
};

// Multiplier applied to history PSD entries before they enter the policy and
// value networks, mapping them into [0, 1]: N0 / (N0 + max_m J_m). The window
// itself keeps the raw N0-normalized values.
double history_input_scale(const EnvConfig& config);

// Feeds each slot's realized selection and occupancy into the detection
// module. Throws std::domain_error on an empty trajectory.
EpisodeMetrics episode_metrics(std::span<const SlotRecord> records,
                               const detection::RadarParams& radar,
                               const spectrum::SpectrumConfig& spectrum_config);

// slot, sub_index, action, reward, occupancy bits (one row per sub-action).
std::string records_to_csv(std::span<const SlotRecord> records);

}  // namespace cmcr::env

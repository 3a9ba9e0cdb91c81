#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmcr/env.hpp"
#include "cmcr/eval.hpp"
#include "cmcr/ppo.hpp"

namespace cmcr::config {

enum class PolicyKind { kIsppo, kOsppo, kWhittle, kRandom };

std::string to_string(PolicyKind kind);
PolicyKind policy_from_string(const std::string& name);

// Flat experiment description, one JSON document with explicit units in the
// field names. Unknown keys are rejected.
struct ExperimentConfig {
  // Radar and channelization.
  int channel_count = 16;        // K
  int selected_count = 4;        // M
  int pulses_per_slot = 16;      // N
  double pri_us = 50.0;          // T_r
  double pulse_width_us = 1.0;   // T_p
  double carrier_ghz = 3.0;      // f_c
  double channel_bw_mhz = 1.0;   // frequency step
  double slot_ms = 1.0;
  double noise_psd = 1.0;        // N0
  double snr_db = 10.0;
  double inr_db = 10.0;
  double false_alarm_rate = 1e-6;
  double target_speed_mps = 150.0;
  double target_range_km = 5.0;

  // Spectrum model: fixed-pattern channels come first, then the Markov
  // groups (first channel of each group independent, the rest linked).
  int fixed_pattern_channels = 12;
  int fixed_pattern_groups = 4;
  double switch_prob = 0.8;      // p_sw
  int markov_groups = 2;
  int markov_group_size = 2;
  double markov_p01 = 0.2;
  double markov_p10 = 0.2;
  std::string markov_linkage = "mirror";  // or "opposite"

  // ISMDP.
  int history_slots = 8;                  // P
  std::string observed_psd = "exact";     // or "sampled"

  // PPO.
  double discount = 0.99;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;
  int epochs_per_iteration = 4;
  int minibatch_size = 32;
  int iterations = 250;
  int trajectories_per_iteration = 4;
  int slots_per_trajectory = 128;
  double learning_rate = 1e-5;
  double value_loss_coef = 0.5;
  double entropy_coef = 0.0;
  int hidden_units = 256;

  // Harness.
  std::string policy = "isppo";
  int eval_slots = 2000;
  std::string eval_mode = "greedy";  // or "sample"
  int checkpoint_every = 25;
  int whittle_warmup_slots = 10000;
  double whittle_belief_grid = 1e-3;
  double whittle_vi_tol = 1e-9;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string out_dir = "runs/out";

  void validate() const;

  spectrum::SpectrumConfig spectrum_config() const;
  detection::RadarParams radar_params() const;
  env::EnvConfig env_config() const;
  ppo::PpoHyperparams ppo_params() const;
  eval::WhittleEvalOptions whittle_options() const;
  PolicyKind policy_kind() const { return policy_from_string(policy); }

  bool operator==(const ExperimentConfig&) const = default;
};

// Canonical serialized form (sorted keys, two-space indent, trailing newline);
// parse -> serialize -> parse is the identity.
std::string serialize(const ExperimentConfig& config);
ExperimentConfig parse(const std::string& json_text);
ExperimentConfig load_file(const std::string& path);

// Named presets: c1..c4 (the sensitivity-study cases), fig1 (the 10+6
// channel-evolution illustration), markov16 (purely independent chains).
ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

// FNV-1a over the canonical serialization; ties checkpoints to their config.
std::uint64_t config_fingerprint(const ExperimentConfig& config);

}  // namespace cmcr::config

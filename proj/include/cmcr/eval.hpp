#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "cmcr/env.hpp"
#include "cmcr/nnet.hpp"
#include "cmcr/whittle.hpp"

namespace cmcr::eval {

enum class ActionMode { kGreedy, kSample };

// A frequency-selection policy driving one slot of the environment (M
// sub-actions or one subset step).
class SlotPolicy {
 public:
  virtual ~SlotPolicy() = default;
  virtual void play_slot(env::RadarEnv& env) = 0;
};

std::unique_ptr<SlotPolicy> make_isppo_policy(const nnet::Network& net, ActionMode mode,
                                              std::uint64_t seed);
std::unique_ptr<SlotPolicy> make_osppo_policy(const nnet::Network& net, ActionMode mode,
                                              std::uint64_t seed);
std::unique_ptr<SlotPolicy> make_random_policy(int num_channels, int num_selected,
                                               std::uint64_t seed);

struct WhittleEvalOptions {
  int warmup_slots = 10000;       // spectrum trace length used for chain fitting
  double discount = 0.99;
  whittle::WhittleOptions solver;
  // When set, skip fitting and use these per-channel parameters instead.
  std::vector<whittle::FittedChain> known_chains;
};

// Ranks channels by their Whittle index each slot and plays the top M. Every
// channel is modeled as an independent 2-state chain; parameters come from
// per-channel transition counts over a warmup spectrum trace (seeded from the
// policy seed) unless known_chains is provided.
std::unique_ptr<SlotPolicy> make_whittle_policy(const env::EnvConfig& config,
                                                const WhittleEvalOptions& options,
                                                std::uint64_t seed);

struct EvalSummary {
  long slots = 0;
  double mean_detection_pct = 0.0;
  double std_detection_pct = 0.0;  // per-slot dispersion
  double mean_reward = 0.0;
};

// Plays num_slots slots and summarizes the realized detection probabilities
// and rewards. Clears previously accumulated records first.
EvalSummary evaluate_policy(env::RadarEnv& env, SlotPolicy& policy, int num_slots);

}  // namespace cmcr::eval

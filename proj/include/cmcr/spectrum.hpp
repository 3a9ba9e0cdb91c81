#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cmcr/errors.hpp"
#include "cmcr/rng.hpp"

namespace cmcr::spectrum {

// How one channel's good/bad state evolves from slot to slot.
enum class ChannelKind : std::uint8_t {
  kFixedPattern,        // member of the cyclically switching group structure
  kMarkovIndependent,   // its own 2-state Markov chain
  kMarkovMirror,        // copies an independent channel
  kMarkovOpposite,      // negates an independent channel
};

struct MarkovChannelParams {
  double p01 = 0.0;  // bad -> good
  double p10 = 0.0;  // good -> bad

  double stationary_good() const {
    const double s = p01 + p10;
    return s > 0.0 ? p01 / s : 0.5;
  }
};

struct FixedPatternParams {
  std::vector<int> group_of_channel;  // size K; group id, -1 for non-fixed channels
  std::vector<int> group_order;       // cyclic visiting order of the good group
  double switch_prob = 0.0;           // p_sw
  std::optional<int> initial_group;   // defaults to group_order.front()
};

struct SpectrumConfig {
  int num_channels = 0;                     // K
  double noise_psd = 1.0;                   // N0
  std::vector<double> interference_psd;     // J_m per channel
  std::vector<ChannelKind> kind;            // per channel
  FixedPatternParams fixed;
  std::vector<MarkovChannelParams> markov;  // per channel; meaningful for independent ones
  std::vector<int> link_source;             // per channel; source index for mirror/opposite, else -1

  bool has_fixed_pattern() const;
  // Throws ConfigError on any invariant violation (sizes, unreferenced link
  // sources, empty groups, probabilities out of range).
  void validate() const;
};

// Good/bad indicator per channel at one slot. good[m] == 1 means channel m is
// free of communication users, i.e. the occupancy indicator 1(d_m) is 0.
struct ChannelOccupancy {
  std::vector<std::uint8_t> good;
  long slot_index = 0;
};

// Draw order (fixed for reproducibility): independent Markov channels in
// ascending channel index. The initial good group is deterministic.
ChannelOccupancy init_state(const SpectrumConfig& config, Rng& rng);
ChannelOccupancy init_state(const SpectrumConfig& config, std::uint64_t seed);

// Advances one slot in place. Draw order: one draw for the fixed-pattern
// group advance (if any fixed channels), then independent Markov channels in
// ascending channel index.
void step(ChannelOccupancy& state, const SpectrumConfig& config, Rng& rng);

// Entry m = N0 + 1(d_m) * J_m.
std::vector<double> interference_plus_noise_psd(const ChannelOccupancy& state,
                                                const SpectrumConfig& config);

// Good-state history, row-major K x num_slots; column 0 is the initial state.
struct EvolutionDump {
  int num_channels = 0;
  int num_slots = 0;
  std::vector<std::uint8_t> good;  // row-major [channel][slot]

  std::uint8_t at(int channel, int slot) const {
    return good[static_cast<std::size_t>(channel) * num_slots + slot];
  }
};

EvolutionDump dump_evolution(const SpectrumConfig& config, std::uint64_t seed, int num_slots);

// Plain PGM (P2), white = good, one pixel per (channel, slot).
std::string to_pgm(const EvolutionDump& dump);
// CSV, rows = channels, columns = slots, values 0/1.
std::string to_csv(const EvolutionDump& dump);

// Which fixed-pattern group is currently good; -1 if the config has no
// fixed-pattern channels.
int current_good_group(const ChannelOccupancy& state, const SpectrumConfig& config);

}  // namespace cmcr::spectrum

#include "cmcr/spectrum.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace cmcr::spectrum {

bool SpectrumConfig::has_fixed_pattern() const {
  return std::any_of(kind.begin(), kind.end(),
                     [](ChannelKind k) { return k == ChannelKind::kFixedPattern; });
}

void SpectrumConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("spectrum config: " + msg); };

  if (num_channels < 1) fail("K must be >= 1");
  const auto k = static_cast<std::size_t>(num_channels);
  if (interference_psd.size() != k) fail("interference_psd size != K");
  if (kind.size() != k) fail("kind size != K");
  if (markov.size() != k) fail("markov params size != K");
  if (link_source.size() != k) fail("link_source size != K");
  if (fixed.group_of_channel.size() != k) fail("group_of_channel size != K");
  if (!(noise_psd > 0.0)) fail("N0 must be positive");
  for (double j : interference_psd)
    if (!(j > 0.0)) fail("J_m must be positive");

  if (has_fixed_pattern()) {
    if (fixed.group_order.empty()) fail("fixed-pattern channels present but group_order empty");
    if (!(fixed.switch_prob >= 0.0 && fixed.switch_prob <= 1.0)) fail("p_sw out of [0,1]");
    std::set<int> order(fixed.group_order.begin(), fixed.group_order.end());
    if (order.size() != fixed.group_order.size()) fail("group_order has duplicates");
    for (int m = 0; m < num_channels; ++m) {
      if (kind[m] == ChannelKind::kFixedPattern) {
        if (!order.count(fixed.group_of_channel[m]))
          fail("channel assigned to a group missing from group_order");
      } else if (fixed.group_of_channel[m] != -1) {
        fail("non-fixed channel has a group assignment");
      }
    }
    for (int g : fixed.group_order) {
      bool member = false;
      for (int m = 0; m < num_channels; ++m)
        member |= (kind[m] == ChannelKind::kFixedPattern && fixed.group_of_channel[m] == g);
      if (!member) fail("empty fixed-pattern group " + std::to_string(g));
    }
    if (fixed.initial_group && !order.count(*fixed.initial_group))
      fail("initial_group not in group_order");
  }

  for (int m = 0; m < num_channels; ++m) {
    switch (kind[m]) {
      case ChannelKind::kMarkovIndependent: {
        const auto& p = markov[m];
        if (!(p.p01 >= 0.0 && p.p01 <= 1.0 && p.p10 >= 0.0 && p.p10 <= 1.0))
          fail("transition probability out of [0,1]");
        break;
      }
      case ChannelKind::kMarkovMirror:
      case ChannelKind::kMarkovOpposite: {
        const int src = link_source[m];
        if (src < 0 || src >= num_channels || kind[src] != ChannelKind::kMarkovIndependent)
          fail("mirror/opposite channel " + std::to_string(m) +
               " does not reference an independent Markov channel");
        break;
      }
      case ChannelKind::kFixedPattern:
        break;
    }
  }
}

namespace {

void resolve_links(ChannelOccupancy& state, const SpectrumConfig& config) {
  for (int m = 0; m < config.num_channels; ++m) {
    if (config.kind[m] == ChannelKind::kMarkovMirror)
      state.good[m] = state.good[config.link_source[m]];
    else if (config.kind[m] == ChannelKind::kMarkovOpposite)
      state.good[m] = static_cast<std::uint8_t>(1 - state.good[config.link_source[m]]);
  }
}

void set_good_group(ChannelOccupancy& state, const SpectrumConfig& config, int group) {
  for (int m = 0; m < config.num_channels; ++m)
    if (config.kind[m] == ChannelKind::kFixedPattern)
      state.good[m] = static_cast<std::uint8_t>(config.fixed.group_of_channel[m] == group);
}

}  // namespace

int current_good_group(const ChannelOccupancy& state, const SpectrumConfig& config) {
  for (int m = 0; m < config.num_channels; ++m)
    if (config.kind[m] == ChannelKind::kFixedPattern && state.good[m])
      return config.fixed.group_of_channel[m];
  return -1;
}

ChannelOccupancy init_state(const SpectrumConfig& config, Rng& rng) {
  config.validate();
  ChannelOccupancy state;
  state.good.assign(static_cast<std::size_t>(config.num_channels), 0);
  state.slot_index = 0;

  if (config.has_fixed_pattern()) {
    const int g = config.fixed.initial_group.value_or(config.fixed.group_order.front());
    set_good_group(state, config, g);
  }
  for (int m = 0; m < config.num_channels; ++m)
    if (config.kind[m] == ChannelKind::kMarkovIndependent)
      state.good[m] = bernoulli(rng, config.markov[m].stationary_good()) ? 1 : 0;
  resolve_links(state, config);
  return state;
}

ChannelOccupancy init_state(const SpectrumConfig& config, std::uint64_t seed) {
  Rng rng(derive_seed(seed));
  return init_state(config, rng);
}

void step(ChannelOccupancy& state, const SpectrumConfig& config, Rng& rng) {
  if (config.has_fixed_pattern()) {
    const int g = current_good_group(state, config);
    if (bernoulli(rng, config.fixed.switch_prob)) {
      const auto& order = config.fixed.group_order;
      const auto it = std::find(order.begin(), order.end(), g);
      const std::size_t pos = static_cast<std::size_t>(it - order.begin());
      set_good_group(state, config, order[(pos + 1) % order.size()]);
    }
  }
  for (int m = 0; m < config.num_channels; ++m) {
    if (config.kind[m] != ChannelKind::kMarkovIndependent) continue;
    const auto& p = config.markov[m];
    if (state.good[m])
      state.good[m] = bernoulli(rng, p.p10) ? 0 : 1;
    else
      state.good[m] = bernoulli(rng, p.p01) ? 1 : 0;
  }
  resolve_links(state, config);
  ++state.slot_index;
}

std::vector<double> interference_plus_noise_psd(const ChannelOccupancy& state,
                                                const SpectrumConfig& config) {
  std::vector<double> psd(static_cast<std::size_t>(config.num_channels));
  for (int m = 0; m < config.num_channels; ++m)
    psd[m] = config.noise_psd + (state.good[m] ? 0.0 : config.interference_psd[m]);
  return psd;
}

EvolutionDump dump_evolution(const SpectrumConfig& config, std::uint64_t seed, int num_slots) {
  if (num_slots < 1) throw ConfigError("dump_evolution: num_slots must be >= 1");
  Rng rng(derive_seed(seed));
  ChannelOccupancy state = init_state(config, rng);

  EvolutionDump dump;
  dump.num_channels = config.num_channels;
  dump.num_slots = num_slots;
  dump.good.assign(static_cast<std::size_t>(config.num_channels) * num_slots, 0);
  for (int l = 0; l < num_slots; ++l) {
    for (int m = 0; m < config.num_channels; ++m)
      dump.good[static_cast<std::size_t>(m) * num_slots + l] = state.good[m];
    if (l + 1 < num_slots) step(state, config, rng);
  }
  return dump;
}

std::string to_pgm(const EvolutionDump& dump) {
  std::ostringstream out;
  out << "P2\n" << dump.num_slots << ' ' << dump.num_channels << "\n1\n";
  for (int m = 0; m < dump.num_channels; ++m) {
    for (int l = 0; l < dump.num_slots; ++l)
      out << int(dump.at(m, l)) << (l + 1 < dump.num_slots ? ' ' : '\n');
  }
  return out.str();
}

std::string to_csv(const EvolutionDump& dump) {
  std::ostringstream out;
  for (int m = 0; m < dump.num_channels; ++m) {
    for (int l = 0; l < dump.num_slots; ++l)
      out << int(dump.at(m, l)) << (l + 1 < dump.num_slots ? ',' : '\n');
  }
  return out.str();
}

}  // namespace cmcr::spectrum

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cmcr/env.hpp"
#include "cmcr/ppo.hpp"
#include "cmcr/subset_codec.hpp"

namespace cmcr::baselines {

// Uniform draw over all C(K,M) subsets.
std::vector<int> random_subset(const SubsetCodec& codec, Rng& rng);

// One-step PPO over the combinatorial action space: a single decision per
// slot indexes an M-subset, the observation is the history matrix alone (no
// mask), and the slot reward arrives immediately. Shares the ISPPO update
// machinery and network architecture; only the action head width differs.
class OsppoTrainer {
 public:
  OsppoTrainer(env::EnvConfig env_config, ppo::PpoHyperparams hp, int hidden_dim,
               std::uint64_t seed);

  void restore(nnet::Network net, std::vector<ppo::IterationMetrics> metrics);
  void run(const std::function<void(const ppo::IterationMetrics&, const nnet::Network&)>&
               on_iteration = {});

  const nnet::Network& network() const { return net_; }
  const SubsetCodec& codec() const { return codec_; }
  const std::vector<ppo::IterationMetrics>& metrics() const { return metrics_; }
  int completed_iterations() const { return static_cast<int>(metrics_.size()); }

 private:
  ppo::IterationMetrics run_iteration(int iteration);

  env::EnvConfig env_config_;
  ppo::PpoHyperparams hp_;
  std::uint64_t seed_ = 0;
  SubsetCodec codec_;
  nnet::Network net_;
  std::vector<ppo::IterationMetrics> metrics_;
};

}  // namespace cmcr::baselines

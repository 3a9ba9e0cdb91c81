#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cmcr/env.hpp"
#include "cmcr/nnet.hpp"
#include "cmcr/rng.hpp"

namespace cmcr::ppo {

struct PpoHyperparams {
  double discount = 0.99;               // gamma
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;              // epsilon
  int epochs_per_iteration = 4;
  int minibatch_size = 32;              // sub-steps per minibatch
  int iterations = 250;                 // E
  int trajectories_per_iteration = 4;   // N_traj
  int slots_per_trajectory = 128;       // L
  double learning_rate = 1e-5;
  double value_loss_coef = 0.5;
  double entropy_coef = 0.0;
  bool normalize_advantages = true;

  void validate() const;
};

// Ordered transitions of one trajectory, t = 0..T-1, plus the bootstrap value
// for the state after the last transition.
struct TrajectoryBuffer {
  int num_steps = 0;    // T
  int obs_dim = 0;
  int num_actions = 0;
  std::vector<double> observations;       // T * obs_dim
  std::vector<std::uint8_t> masks;        // T * num_actions; empty = unmasked
  std::vector<int> actions;
  std::vector<double> log_probs;          // behavior policy log pi(a|o)
  std::vector<double> values;             // V(s_t)
  std::vector<double> rewards;            // r_{t+1}
  std::vector<std::uint8_t> slot_terminal;
  double bootstrap_value = 0.0;
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> value_targets;  // A_t + V(s_t)
};

// Backward recursion A_t = delta_t + gamma*lambda*A_{t+1} with
// delta_t = r_t + gamma V(s_{t+1}) - V(s_t); V(s_T) is the bootstrap value.
GaeResult compute_gae(const TrajectoryBuffer& buffer, double discount, double gae_lambda);

// Flattened minibatch view used by the loss/gradient path.
struct SampleBatch {
  int size = 0;
  int obs_dim = 0;
  int num_actions = 0;
  std::vector<double> observations;
  std::vector<std::uint8_t> masks;  // empty = unmasked
  std::vector<int> actions;
  std::vector<double> behavior_log_probs;
  std::vector<double> advantages;
  std::vector<double> value_targets;
};

struct LossTerms {
  double policy = 0.0;   // -mean clipped surrogate
  double value = 0.0;    // mean squared value error
  double entropy = 0.0;  // mean policy entropy

  double total(const PpoHyperparams& hp) const {
    return policy + hp.value_loss_coef * value - hp.entropy_coef * entropy;
  }
};

// Loss values only (no gradient). Throws std::logic_error if a batch action
// is masked.
LossTerms evaluate_losses(const nnet::Network& net, const SampleBatch& batch, double clip_ratio);

// Losses plus the exact gradient of total() with respect to every parameter.
LossTerms loss_and_gradient(const nnet::Network& net, const SampleBatch& batch,
                            const PpoHyperparams& hp, std::vector<double>& grad);

// Shuffled minibatch Adam updates over one collected batch; returns the mean
// loss terms across minibatches. Deterministic given (seed, iteration).
LossTerms run_update_phase(nnet::Network& net, const SampleBatch& batch,
                           const PpoHyperparams& hp, std::uint64_t seed, int iteration);

struct IterationMetrics {
  int iteration = 0;
  double wall_time_s = 0.0;
  double mean_reward = 0.0;      // per slot
  double mean_detection = 0.0;   // closed-form p_d averaged over slots
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double mean_entropy = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const IterationMetrics& m);

// Algorithm: per iteration, collect N_traj trajectories of L slots (M
// sub-actions each) by sampling from the masked policy, compute GAE, then run
// the minibatch update epochs. Environments and RNG streams are re-derived
// from (seed, iteration), so a restored trainer continues bit-identically.
class IsppoTrainer {
 public:
  IsppoTrainer(env::EnvConfig env_config, PpoHyperparams hp, int hidden_dim, std::uint64_t seed);

  // Replaces the network and the completed-iteration count (checkpoint resume).
  void restore(nnet::Network net, std::vector<IterationMetrics> metrics);

  // Runs remaining iterations; invokes on_iteration after each one.
  void run(const std::function<void(const IterationMetrics&, const nnet::Network&)>& on_iteration = {});

  const nnet::Network& network() const { return net_; }
  const std::vector<IterationMetrics>& metrics() const { return metrics_; }
  int completed_iterations() const { return static_cast<int>(metrics_.size()); }

 private:
  IterationMetrics run_iteration(int iteration);

  env::EnvConfig env_config_;
  PpoHyperparams hp_;
  std::uint64_t seed_ = 0;
  nnet::Network net_;
  std::vector<IterationMetrics> metrics_;
};

}  // namespace cmcr::ppo

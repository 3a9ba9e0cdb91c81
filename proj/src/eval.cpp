#include "cmcr/eval.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "cmcr/baselines.hpp"
#include "cmcr/subset_codec.hpp"

namespace cmcr::eval {

namespace {

// Mirrors the trainers' net-input preprocessing: history PSD entries are
// rescaled into [0, 1] before the forward pass.
void scale_history(std::vector<double>& obs, const env::RadarEnv& env) {
  const double scale = env::history_input_scale(env.config());
  const int history_len = env.num_channels() * env.history_depth();
  for (int c = 0; c < history_len; ++c) obs[c] *= scale;
}

class IsppoPolicy final : public SlotPolicy {
 public:
  IsppoPolicy(const nnet::Network& net, ActionMode mode, std::uint64_t seed)
      : net_(net), mode_(mode), rng_(derive_seed(seed, 0x15eaULL)) {}

  void play_slot(env::RadarEnv& env) override {
    for (int i = 0; i < env.num_selected(); ++i) {
      auto obs = env.observation(true);
      scale_history(obs, env);
      const auto dist = net_.policy_forward(obs, env.mask());
      const int action = mode_ == ActionMode::kGreedy ? dist.argmax() : dist.sample(rng_);
      env.step_sub_action(action);
    }
  }

 private:
  const nnet::Network& net_;
  ActionMode mode_;
  Rng rng_;
};

class OsppoPolicy final : public SlotPolicy {
 public:
  OsppoPolicy(const nnet::Network& net, ActionMode mode, std::uint64_t seed)
      : net_(net), mode_(mode), rng_(derive_seed(seed, 0x05eaULL)) {}

  void play_slot(env::RadarEnv& env) override {
    if (!codec_)
      codec_ = std::make_unique<baselines::SubsetCodec>(env.num_channels(), env.num_selected());
    auto obs = env.observation(false);
    scale_history(obs, env);
    const auto dist = net_.policy_forward(obs, {});
    const int action = mode_ == ActionMode::kGreedy ? dist.argmax() : dist.sample(rng_);
    env.step_subset(codec_->unrank(static_cast<std::uint64_t>(action)));
  }

 private:
  const nnet::Network& net_;
  ActionMode mode_;
  Rng rng_;
  std::unique_ptr<baselines::SubsetCodec> codec_;
};

class RandomPolicy final : public SlotPolicy {
 public:
  RandomPolicy(int num_channels, int num_selected, std::uint64_t seed)
      : codec_(num_channels, num_selected), rng_(derive_seed(seed, 0x7a2dULL)) {}

  void play_slot(env::RadarEnv& env) override {
    env.step_subset(baselines::random_subset(codec_, rng_));
  }

 private:
  baselines::SubsetCodec codec_;
  Rng rng_;
};

class WhittlePolicy final : public SlotPolicy {
 public:
  WhittlePolicy(const env::EnvConfig& config, const WhittleEvalOptions& options,
                std::uint64_t seed) {
    const int k = config.spectrum.num_channels;
    std::vector<whittle::FittedChain> chains;
    if (!options.known_chains.empty()) {
      if (static_cast<int>(options.known_chains.size()) != k)
        throw ConfigError("whittle policy: known_chains size != K");
      chains = options.known_chains;
    } else {
      const auto trace = spectrum::dump_evolution(config.spectrum,
                                                  derive_seed(seed, 0x3a97ULL),
                                                  options.warmup_slots);
      chains.resize(k);
      std::vector<std::uint8_t> row(options.warmup_slots);
      for (int m = 0; m < k; ++m) {
        for (int l = 0; l < options.warmup_slots; ++l) row[l] = trace.at(m, l);
        chains[m] = whittle::fit_markov_chain(row);
      }
    }

    beliefs_.resize(k);
    solver_of_channel_.resize(k);
    chains_ = std::move(chains);
    const double n0 = config.spectrum.noise_psd;
    for (int m = 0; m < k; ++m) {
      const double reward_bad = n0 / (config.spectrum.interference_psd[m] + n0);
      const auto key = std::make_tuple(chains_[m].p01, chains_[m].p10, reward_bad);
      auto it = solvers_.find(key);
      if (it == solvers_.end()) {
        it = solvers_
                 .emplace(key, std::make_unique<whittle::IndexSolver>(
                                   chains_[m].p01, chains_[m].p10, options.discount, 1.0,
                                   reward_bad, options.solver))
                 .first;
      }
      solver_of_channel_[m] = it->second.get();
      const double s = chains_[m].p01 + chains_[m].p10;
      beliefs_[m] = s > 0.0 ? chains_[m].p01 / s : 0.5;
    }
  }

  void play_slot(env::RadarEnv& env) override {
    const int k = env.num_channels();
    const int m_sel = env.num_selected();
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> indices(k);
    for (int m = 0; m < k; ++m) indices[m] = solver_of_channel_[m]->index(beliefs_[m]);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return indices[a] > indices[b]; });
    order.resize(m_sel);
    std::sort(order.begin(), order.end());
    env.step_subset(order);

    const auto& record = env.records().back();
    std::vector<std::uint8_t> selected_mask(k, 0);
    for (std::size_t i = 0; i < record.selected.size(); ++i) {
      const int c = record.selected[i];
      selected_mask[c] = 1;
      const auto obs = record.good[c] ? whittle::Observation::kGood : whittle::Observation::kBad;
      beliefs_[c] = whittle::belief_update(beliefs_[c], obs, chains_[c].p01, chains_[c].p10);
    }
    for (int m = 0; m < k; ++m)
      if (!selected_mask[m])
        beliefs_[m] = whittle::belief_update(beliefs_[m], whittle::Observation::kNone,
                                             chains_[m].p01, chains_[m].p10);
  }

 private:
  std::vector<whittle::FittedChain> chains_;
  std::vector<double> beliefs_;
  std::map<std::tuple<double, double, double>, std::unique_ptr<whittle::IndexSolver>> solvers_;
  std::vector<whittle::IndexSolver*> solver_of_channel_;
};

}  // namespace

std::unique_ptr<SlotPolicy> make_isppo_policy(const nnet::Network& net, ActionMode mode,
                                              std::uint64_t seed) {
  return std::make_unique<IsppoPolicy>(net, mode, seed);
}

std::unique_ptr<SlotPolicy> make_osppo_policy(const nnet::Network& net, ActionMode mode,
                                              std::uint64_t seed) {
  return std::make_unique<OsppoPolicy>(net, mode, seed);
}

std::unique_ptr<SlotPolicy> make_random_policy(int num_channels, int num_selected,
                                               std::uint64_t seed) {
  return std::make_unique<RandomPolicy>(num_channels, num_selected, seed);
}

std::unique_ptr<SlotPolicy> make_whittle_policy(const env::EnvConfig& config,
                                                const WhittleEvalOptions& options,
                                                std::uint64_t seed) {
  return std::make_unique<WhittlePolicy>(config, options, seed);
}

EvalSummary evaluate_policy(env::RadarEnv& env, SlotPolicy& policy, int num_slots) {
  if (num_slots < 1) throw std::domain_error("evaluate_policy: need at least one slot");
  env.clear_records();
  for (int l = 0; l < num_slots; ++l) policy.play_slot(env);
  const auto metrics =
      env::episode_metrics(env.records(), env.config().radar, env.config().spectrum);
  EvalSummary summary;
  summary.slots = num_slots;
  summary.mean_detection_pct = 100.0 * metrics.mean_detection;
  summary.std_detection_pct = 100.0 * metrics.std_detection;
  summary.mean_reward = metrics.mean_reward;
  return summary;
}

}  // namespace cmcr::eval

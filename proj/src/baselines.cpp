#include "cmcr/baselines.hpp"

#include <chrono>
#include <cmath>

namespace cmcr::baselines {

std::vector<int> random_subset(const SubsetCodec& codec, Rng& rng) {
  return codec.unrank(uniform_below(rng, codec.count()));
}

OsppoTrainer::OsppoTrainer(env::EnvConfig env_config, ppo::PpoHyperparams hp, int hidden_dim,
                           std::uint64_t seed)
    : env_config_(std::move(env_config)),
      hp_(hp),
      seed_(seed),
      codec_(env_config_.spectrum.num_channels, env_config_.radar.num_selected) {
  env_config_.validate();
  hp_.validate();
  if (codec_.count() > 2'000'000)
    throw ConfigError("osppo: C(K,M) action space too large for a one-step policy head");
  nnet::NetConfig net_config;
  net_config.input_dim = env_config_.spectrum.num_channels * env_config_.history_depth;
  net_config.hidden_dim = hidden_dim;
  net_config.num_actions = static_cast<int>(codec_.count());
  net_ = nnet::Network::random_init(net_config, derive_seed(seed, 0x05B0ULL));
}

void OsppoTrainer::restore(nnet::Network net, std::vector<ppo::IterationMetrics> metrics) {
  if (!(net.config() == net_.config()))
    throw StateMismatchError("osppo restore: network dimensions do not match configuration");
  net_ = std::move(net);
  metrics_ = std::move(metrics);
}

void OsppoTrainer::run(
    const std::function<void(const ppo::IterationMetrics&, const nnet::Network&)>& on_iteration) {
  for (int it = completed_iterations() + 1; it <= hp_.iterations; ++it) {
    ppo::IterationMetrics m = run_iteration(it);
    metrics_.push_back(m);
    if (on_iteration) on_iteration(m, net_);
  }
}

ppo::IterationMetrics OsppoTrainer::run_iteration(int iteration) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n_traj = hp_.trajectories_per_iteration;
  const int slots = hp_.slots_per_trajectory;
  const int obs_dim = net_.config().input_dim;
  const int num_actions = net_.config().num_actions;

  std::vector<env::RadarEnv> envs;
  envs.reserve(n_traj);
  for (int j = 0; j < n_traj; ++j)
    envs.emplace_back(env_config_, derive_seed(seed_, 0xE17ULL,
                                               static_cast<std::uint64_t>(iteration),
                                               static_cast<std::uint64_t>(j)));
  Rng action_rng(derive_seed(seed_, 0xAC7ULL, static_cast<std::uint64_t>(iteration)));

  std::vector<ppo::TrajectoryBuffer> buffers(n_traj);
  for (auto& buf : buffers) {
    buf.num_steps = slots;
    buf.obs_dim = obs_dim;
    buf.num_actions = num_actions;
    buf.observations.resize(static_cast<std::size_t>(slots) * obs_dim);
    buf.actions.resize(slots);
    buf.log_probs.resize(slots);
    buf.values.resize(slots);
    buf.rewards.resize(slots);
    buf.slot_terminal.assign(slots, 1);
  }

  std::vector<double> obs_block(static_cast<std::size_t>(n_traj) * obs_dim);
  std::vector<double> probs, values;
  double entropy_sum = 0.0;
  const double obs_scale = env::history_input_scale(env_config_);
  auto fill_observations = [&]() {
    for (int j = 0; j < n_traj; ++j) {
      double* row = obs_block.data() + static_cast<std::size_t>(j) * obs_dim;
      envs[j].write_observation({row, static_cast<std::size_t>(obs_dim)}, false);
      for (int c = 0; c < obs_dim; ++c) row[c] *= obs_scale;
    }
  };

  for (int l = 0; l < slots; ++l) {
    fill_observations();
    net_.forward(obs_block, {}, n_traj, probs, values, nullptr);
    for (int j = 0; j < n_traj; ++j) {
      const double* prow = probs.data() + static_cast<std::size_t>(j) * num_actions;
      const double u = uniform01(action_rng);
      double cum = 0.0;
      int action = num_actions - 1;
      for (int c = 0; c < num_actions; ++c) {
        cum += prow[c];
        if (u < cum) {
          action = c;
          break;
        }
      }
      for (int c = 0; c < num_actions; ++c)
        if (prow[c] > 0.0) entropy_sum -= prow[c] * std::log(prow[c]) / n_traj;

      ppo::TrajectoryBuffer& buf = buffers[j];
      std::copy_n(obs_block.begin() + static_cast<std::size_t>(j) * obs_dim, obs_dim,
                  buf.observations.begin() + static_cast<std::size_t>(l) * obs_dim);
      buf.actions[l] = action;
      buf.log_probs[l] = std::log(prow[action]);
      buf.values[l] = values[j];
      const auto step = envs[j].step_subset(codec_.unrank(static_cast<std::uint64_t>(action)));
      buf.rewards[l] = step.reward;
    }
  }

  fill_observations();
  net_.forward(obs_block, {}, n_traj, probs, values, nullptr);

  ppo::SampleBatch batch;
  batch.size = n_traj * slots;
  batch.obs_dim = obs_dim;
  batch.num_actions = num_actions;
  for (int j = 0; j < n_traj; ++j) {
    buffers[j].bootstrap_value = values[j];
    const ppo::GaeResult gae = compute_gae(buffers[j], hp_.discount, hp_.gae_lambda);
    batch.observations.insert(batch.observations.end(), buffers[j].observations.begin(),
                              buffers[j].observations.end());
    batch.actions.insert(batch.actions.end(), buffers[j].actions.begin(),
                         buffers[j].actions.end());
    batch.behavior_log_probs.insert(batch.behavior_log_probs.end(), buffers[j].log_probs.begin(),
                                    buffers[j].log_probs.end());
    batch.advantages.insert(batch.advantages.end(), gae.advantages.begin(),
                            gae.advantages.end());
    batch.value_targets.insert(batch.value_targets.end(), gae.value_targets.begin(),
                               gae.value_targets.end());
  }
  if (hp_.normalize_advantages) {
    double mean = 0.0;
    for (double a : batch.advantages) mean += a;
    mean /= batch.advantages.size();
    double var = 0.0;
    for (double a : batch.advantages) var += (a - mean) * (a - mean);
    const double scale = 1.0 / (std::sqrt(var / batch.advantages.size()) + 1e-8);
    for (double& a : batch.advantages) a = (a - mean) * scale;
  }

  const ppo::LossTerms losses = ppo::run_update_phase(net_, batch, hp_, seed_, iteration);

  std::vector<env::SlotRecord> all_records;
  for (auto& e : envs)
    all_records.insert(all_records.end(), e.records().begin(), e.records().end());
  const env::EpisodeMetrics ep =
      env::episode_metrics(all_records, env_config_.radar, env_config_.spectrum);

  ppo::IterationMetrics m;
  m.iteration = iteration;
  m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m.mean_reward = ep.mean_reward;
  m.mean_detection = ep.mean_detection;
  m.policy_loss = losses.policy;
  m.value_loss = losses.value;
  m.mean_entropy = entropy_sum / slots;
  return m;
}

}  // namespace cmcr::baselines

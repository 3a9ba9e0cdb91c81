#include "cmcr/ppo.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cmcr::ppo {

void PpoHyperparams::validate() const {
  auto fail = [](const char* msg) { throw ConfigError(std::string("ppo params: ") + msg); };
  if (!(discount > 0.0 && discount <= 1.0)) fail("gamma must be in (0,1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) fail("lambda must be in [0,1]");
  if (!(clip_ratio > 0.0)) fail("clip ratio must be positive");
  if (epochs_per_iteration < 1) fail("epochs must be >= 1");
  if (minibatch_size < 1) fail("minibatch size must be >= 1");
  if (iterations < 0) fail("iteration count must be >= 0");
  if (trajectories_per_iteration < 1) fail("N_traj must be >= 1");
  if (slots_per_trajectory < 1) fail("L must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning rate must be positive");
}

GaeResult compute_gae(const TrajectoryBuffer& buffer, double discount, double gae_lambda) {
  const int t_len = buffer.num_steps;
  GaeResult out;
  out.advantages.assign(t_len, 0.0);
  out.value_targets.assign(t_len, 0.0);
  double running = 0.0;
  double next_value = buffer.bootstrap_value;
  for (int t = t_len - 1; t >= 0; --t) {
    const double delta = buffer.rewards[t] + discount * next_value - buffer.values[t];
    running = delta + discount * gae_lambda * running;
    out.advantages[t] = running;
    out.value_targets[t] = running + buffer.values[t];
    next_value = buffer.values[t];
  }
  return out;
}

namespace {

struct BatchOutputs {
  std::vector<double> probs, values;
  nnet::ForwardCache cache;
};

LossTerms losses_from_forward(const nnet::Network& net, const SampleBatch& batch,
                              double clip_ratio, const std::vector<double>& probs,
                              const std::vector<double>& values,
                              std::vector<double>* dlogits, std::vector<double>* dvalues,
                              const PpoHyperparams* hp) {
  const int a = batch.num_actions;
  const int n = batch.size;
  const double inv_n = 1.0 / n;
  LossTerms terms;
  if (dlogits) dlogits->assign(static_cast<std::size_t>(n) * a, 0.0);
  if (dvalues) dvalues->assign(n, 0.0);

  for (int b = 0; b < n; ++b) {
    const double* prow = probs.data() + static_cast<std::size_t>(b) * a;
    const int act = batch.actions[b];
    if (!batch.masks.empty() && batch.masks[static_cast<std::size_t>(b) * a + act])
      throw std::logic_error("ppo loss: batch contains a masked action");
    const double adv = batch.advantages[b];
    const double log_p = std::log(prow[act]);
    const double ratio = std::exp(log_p - batch.behavior_log_probs[b]);
    const double unclipped = ratio * adv;
    const double clipped = std::clamp(ratio, 1.0 - clip_ratio, 1.0 + clip_ratio) * adv;
    terms.policy -= inv_n * std::min(unclipped, clipped);

    double entropy = 0.0;
    for (int j = 0; j < a; ++j)
      if (prow[j] > 0.0) entropy -= prow[j] * std::log(prow[j]);
    terms.entropy += inv_n * entropy;

    const double verr = values[b] - batch.value_targets[b];
    terms.value += inv_n * verr * verr;

    if (dlogits) {
      // d(-objective)/d log pi(a): the clipped branch has zero gradient.
      const double d_obj_dlp = (unclipped <= clipped) ? ratio * adv : 0.0;
      const double dlp = -inv_n * d_obj_dlp;
      double* drow = dlogits->data() + static_cast<std::size_t>(b) * a;
      for (int j = 0; j < a; ++j) drow[j] = -dlp * prow[j];
      drow[act] += dlp;
      if (hp && hp->entropy_coef != 0.0) {
        const double coef = hp->entropy_coef * inv_n;
        for (int j = 0; j < a; ++j)
          if (prow[j] > 0.0) drow[j] += coef * prow[j] * (std::log(prow[j]) + entropy);
      }
    }
    if (dvalues) (*dvalues)[b] = (hp ? hp->value_loss_coef : 1.0) * 2.0 * inv_n * verr;
  }
  return terms;
}

}  // namespace

LossTerms evaluate_losses(const nnet::Network& net, const SampleBatch& batch, double clip_ratio) {
  std::vector<double> probs, values;
  net.forward(batch.observations, batch.masks, batch.size, probs, values, nullptr);
  return losses_from_forward(net, batch, clip_ratio, probs, values, nullptr, nullptr, nullptr);
}

LossTerms loss_and_gradient(const nnet::Network& net, const SampleBatch& batch,
                            const PpoHyperparams& hp, std::vector<double>& grad) {
  std::vector<double> probs, values;
  nnet::ForwardCache cache;
  net.forward(batch.observations, batch.masks, batch.size, probs, values, &cache);
  std::vector<double> dlogits, dvalues;
  LossTerms terms =
      losses_from_forward(net, batch, hp.clip_ratio, probs, values, &dlogits, &dvalues, &hp);
  net.backward(cache, dlogits, dvalues, grad);
  return terms;
}

LossTerms run_update_phase(nnet::Network& net, const SampleBatch& batch,
                           const PpoHyperparams& hp, std::uint64_t seed, int iteration) {
  const int n = batch.size;
  const int a = batch.num_actions;
  const bool masked = !batch.masks.empty();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  LossTerms accum;
  int updates = 0;
  std::vector<double> grad;
  SampleBatch mb;
  mb.obs_dim = batch.obs_dim;
  mb.num_actions = a;

  for (int epoch = 0; epoch < hp.epochs_per_iteration; ++epoch) {
    Rng shuffle_rng(derive_seed(seed, 0x5f1eULL, static_cast<std::uint64_t>(iteration),
                                static_cast<std::uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i], order[uniform_below(shuffle_rng, static_cast<std::uint64_t>(i) + 1)]);

    for (int start = 0; start < n; start += hp.minibatch_size) {
      const int count = std::min(hp.minibatch_size, n - start);
      mb.size = count;
      mb.observations.resize(static_cast<std::size_t>(count) * batch.obs_dim);
      mb.masks.resize(masked ? static_cast<std::size_t>(count) * a : 0);
      mb.actions.resize(count);
      mb.behavior_log_probs.resize(count);
      mb.advantages.resize(count);
      mb.value_targets.resize(count);
      for (int i = 0; i < count; ++i) {
        const int src = order[start + i];
        std::copy_n(batch.observations.begin() + static_cast<std::size_t>(src) * batch.obs_dim,
                    batch.obs_dim, mb.observations.begin() + static_cast<std::size_t>(i) * batch.obs_dim);
        if (masked)
          std::copy_n(batch.masks.begin() + static_cast<std::size_t>(src) * a, a,
                      mb.masks.begin() + static_cast<std::size_t>(i) * a);
        mb.actions[i] = batch.actions[src];
        mb.behavior_log_probs[i] = batch.behavior_log_probs[src];
        mb.advantages[i] = batch.advantages[src];
        mb.value_targets[i] = batch.value_targets[src];
      }
      const LossTerms terms = loss_and_gradient(net, mb, hp, grad);
      if (!std::isfinite(terms.policy) || !std::isfinite(terms.value))
        throw TrainingError("iteration " + std::to_string(iteration) + ": non-finite loss");
      net.adam_step(grad, hp.learning_rate);
      accum.policy += terms.policy;
      accum.value += terms.value;
      accum.entropy += terms.entropy;
      ++updates;
    }
  }
  accum.policy /= updates;
  accum.value /= updates;
  accum.entropy /= updates;
  return accum;
}

std::string metrics_csv_header() {
  return "iteration,wall_time_s,mean_reward,mean_detection,policy_loss,value_loss,mean_entropy";
}

std::string metrics_csv_row(const IterationMetrics& m) {
  std::ostringstream out;
  out.precision(12);
  out << m.iteration << ',' << m.wall_time_s << ',' << m.mean_reward << ',' << m.mean_detection
      << ',' << m.policy_loss << ',' << m.value_loss << ',' << m.mean_entropy;
  return out.str();
}

IsppoTrainer::IsppoTrainer(env::EnvConfig env_config, PpoHyperparams hp, int hidden_dim,
                           std::uint64_t seed)
    : env_config_(std::move(env_config)), hp_(hp), seed_(seed) {
  env_config_.validate();
  hp_.validate();
  nnet::NetConfig net_config;
  net_config.input_dim = env_config_.spectrum.num_channels * (env_config_.history_depth + 1);
  net_config.hidden_dim = hidden_dim;
  net_config.num_actions = env_config_.spectrum.num_channels;
  net_ = nnet::Network::random_init(net_config, derive_seed(seed, 0x1217ULL));
}

void IsppoTrainer::restore(nnet::Network net, std::vector<IterationMetrics> metrics) {
  if (!(net.config() == net_.config()))
    throw StateMismatchError("trainer restore: network dimensions do not match configuration");
  net_ = std::move(net);
  metrics_ = std::move(metrics);
}

void IsppoTrainer::run(
    const std::function<void(const IterationMetrics&, const nnet::Network&)>& on_iteration) {
  for (int it = completed_iterations() + 1; it <= hp_.iterations; ++it) {
    IterationMetrics m = run_iteration(it);
    metrics_.push_back(m);
    if (on_iteration) on_iteration(m, net_);
  }
}

IterationMetrics IsppoTrainer::run_iteration(int iteration) {
  const auto t0 = std::chrono::steady_clock::now();
  const int n_traj = hp_.trajectories_per_iteration;
  const int slots = hp_.slots_per_trajectory;
  const int k = env_config_.spectrum.num_channels;
  const int m_sel = env_config_.radar.num_selected;
  const int obs_dim = k * (env_config_.history_depth + 1);
  const int t_len = slots * m_sel;

  std::vector<env::RadarEnv> envs;
  envs.reserve(n_traj);
  for (int j = 0; j < n_traj; ++j)
    envs.emplace_back(env_config_, derive_seed(seed_, 0xE17ULL,
                                               static_cast<std::uint64_t>(iteration),
                                               static_cast<std::uint64_t>(j)));
  Rng action_rng(derive_seed(seed_, 0xAC7ULL, static_cast<std::uint64_t>(iteration)));

  std::vector<TrajectoryBuffer> buffers(n_traj);
  for (auto& buf : buffers) {
    buf.num_steps = t_len;
    buf.obs_dim = obs_dim;
    buf.num_actions = k;
    buf.observations.resize(static_cast<std::size_t>(t_len) * obs_dim);
    buf.masks.resize(static_cast<std::size_t>(t_len) * k);
    buf.actions.resize(t_len);
    buf.log_probs.resize(t_len);
    buf.values.resize(t_len);
    buf.rewards.resize(t_len);
    buf.slot_terminal.resize(t_len);
  }

  std::vector<double> obs_block(static_cast<std::size_t>(n_traj) * obs_dim);
  std::vector<std::uint8_t> mask_block(static_cast<std::size_t>(n_traj) * k);
  std::vector<double> probs, values;
  double entropy_sum = 0.0;
  const double obs_scale = env::history_input_scale(env_config_);
  const int history_len = k * env_config_.history_depth;
  auto fill_observations = [&]() {
    for (int j = 0; j < n_traj; ++j) {
      double* row = obs_block.data() + static_cast<std::size_t>(j) * obs_dim;
      envs[j].write_observation({row, static_cast<std::size_t>(obs_dim)}, true);
      for (int c = 0; c < history_len; ++c) row[c] *= obs_scale;
      std::copy(envs[j].mask().begin(), envs[j].mask().end(),
                mask_block.begin() + static_cast<std::size_t>(j) * k);
    }
  };

  int t = 0;
  for (int l = 0; l < slots; ++l) {
    for (int i = 0; i < m_sel; ++i, ++t) {
      fill_observations();
      net_.forward(obs_block, mask_block, n_traj, probs, values, nullptr);
      for (int j = 0; j < n_traj; ++j) {
        const double* prow = probs.data() + static_cast<std::size_t>(j) * k;
        const double u = uniform01(action_rng);
        double cum = 0.0;
        int action = -1;
        for (int c = 0; c < k; ++c) {
          if (mask_block[static_cast<std::size_t>(j) * k + c]) continue;
          action = c;
          cum += prow[c];
          if (u < cum) break;
        }
        for (int c = 0; c < k; ++c) {
          const double p = prow[c];
          if (p > 0.0) entropy_sum -= p * std::log(p) / n_traj;
        }

        TrajectoryBuffer& buf = buffers[j];
        std::copy_n(obs_block.begin() + static_cast<std::size_t>(j) * obs_dim, obs_dim,
                    buf.observations.begin() + static_cast<std::size_t>(t) * obs_dim);
        std::copy_n(mask_block.begin() + static_cast<std::size_t>(j) * k, k,
                    buf.masks.begin() + static_cast<std::size_t>(t) * k);
        buf.actions[t] = action;
        buf.log_probs[t] = std::log(prow[action]);
        buf.values[t] = values[j];
        const auto step = envs[j].step_sub_action(action);
        buf.rewards[t] = step.reward;
        buf.slot_terminal[t] = step.slot_complete ? 1 : 0;
      }
    }
  }

  // Bootstrap values for the state after the last sub-action.
  fill_observations();
  net_.forward(obs_block, mask_block, n_traj, probs, values, nullptr);

  SampleBatch batch;
  batch.size = n_traj * t_len;
  batch.obs_dim = obs_dim;
  batch.num_actions = k;
  batch.observations.reserve(static_cast<std::size_t>(batch.size) * obs_dim);
  batch.masks.reserve(static_cast<std::size_t>(batch.size) * k);
  for (int j = 0; j < n_traj; ++j) {
    buffers[j].bootstrap_value = values[j];
    const GaeResult gae = compute_gae(buffers[j], hp_.discount, hp_.gae_lambda);
    batch.observations.insert(batch.observations.end(), buffers[j].observations.begin(),
                              buffers[j].observations.end());
    batch.masks.insert(batch.masks.end(), buffers[j].masks.begin(), buffers[j].masks.end());
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

  const LossTerms losses = run_update_phase(net_, batch, hp_, seed_, iteration);

  std::vector<env::SlotRecord> all_records;
  for (auto& e : envs) {
    all_records.insert(all_records.end(), e.records().begin(), e.records().end());
  }
  const env::EpisodeMetrics ep =
      env::episode_metrics(all_records, env_config_.radar, env_config_.spectrum);

  IterationMetrics m;
  m.iteration = iteration;
  m.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m.mean_reward = ep.mean_reward;
  m.mean_detection = ep.mean_detection;
  m.policy_loss = losses.policy;
  m.value_loss = losses.value;
  m.mean_entropy = entropy_sum / t_len;
  return m;
}

}  // namespace cmcr::ppo

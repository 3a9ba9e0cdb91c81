#include <doctest.h>

#include <cmath>

#include "cmcr/config.hpp"
#include "cmcr/ppo.hpp"

using namespace cmcr;
using namespace cmcr::ppo;

namespace {

TrajectoryBuffer random_buffer(int steps, Rng& rng, double bootstrap) {
  TrajectoryBuffer buf;
  buf.num_steps = steps;
  buf.rewards.resize(steps);
  buf.values.resize(steps);
  for (int t = 0; t < steps; ++t) {
    buf.rewards[t] = 2 * uniform01(rng) - 1;
    buf.values[t] = 2 * uniform01(rng) - 1;
  }
  buf.bootstrap_value = bootstrap;
  return buf;
}

// Direct truncated double sum: A_t = sum_k (gamma*lambda)^k delta_{t+k}.
std::vector<double> gae_direct(const TrajectoryBuffer& buf, double gamma, double lambda) {
  std::vector<double> adv(buf.num_steps, 0.0);
  for (int t = 0; t < buf.num_steps; ++t) {
    for (int k = t; k < buf.num_steps; ++k) {
      const double next = k + 1 < buf.num_steps ? buf.values[k + 1] : buf.bootstrap_value;
      const double delta = buf.rewards[k] + gamma * next - buf.values[k];
      adv[t] += std::pow(gamma * lambda, k - t) * delta;
    }
  }
  return adv;
}

// A tiny batch whose behavior log-probs come from the network itself.
SampleBatch on_policy_batch(const nnet::Network& net, int batch, Rng& rng,
                            bool with_mask = true) {
  const auto& cfg = net.config();
  SampleBatch b;
  b.size = batch;
  b.obs_dim = cfg.input_dim;
  b.num_actions = cfg.num_actions;
  b.observations.resize(static_cast<std::size_t>(batch) * cfg.input_dim);
  for (auto& x : b.observations) x = 2 * uniform01(rng) - 1;
  if (with_mask) {
    b.masks.assign(static_cast<std::size_t>(batch) * cfg.num_actions, 0);
    for (int i = 0; i < batch; ++i)
      b.masks[static_cast<std::size_t>(i) * cfg.num_actions + (i % cfg.num_actions)] = 1;
  }
  std::vector<double> probs, values;
  net.forward(b.observations, b.masks, batch, probs, values, nullptr);
  for (int i = 0; i < batch; ++i) {
    const double* prow = probs.data() + static_cast<std::size_t>(i) * cfg.num_actions;
    int action = (i + 1) % cfg.num_actions;
    if (with_mask && b.masks[static_cast<std::size_t>(i) * cfg.num_actions + action])
      action = (action + 1) % cfg.num_actions;
    b.actions.push_back(action);
    b.behavior_log_probs.push_back(std::log(prow[action]));
    b.advantages.push_back(2 * uniform01(rng) - 1);
    b.value_targets.push_back(values[i] + (2 * uniform01(rng) - 1));
  }
  return b;
}

}  // namespace

TEST_CASE("GAE closed forms") {
  SUBCASE("single step") {
    TrajectoryBuffer buf;
    buf.num_steps = 1;
    buf.rewards = {1.0};
    buf.values = {0.5};
    buf.bootstrap_value = 0.0;
    const auto gae = compute_gae(buf, 0.99, 0.95);
    CHECK(gae.advantages[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(gae.value_targets[0] == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("lambda = 0 reduces to one-step temporal differences") {
    Rng rng(5);
    const auto buf = random_buffer(12, rng, 0.4);
    const auto gae = compute_gae(buf, 0.9, 0.0);
    for (int t = 0; t < 12; ++t) {
      const double next = t + 1 < 12 ? buf.values[t + 1] : buf.bootstrap_value;
      const double delta = buf.rewards[t] + 0.9 * next - buf.values[t];
      CHECK(gae.advantages[t] == doctest::Approx(delta).epsilon(1e-12));
    }
  }
  SUBCASE("recursion equals the direct double sum on random 20-step buffers") {
    Rng rng(17);
    for (int rep = 0; rep < 20; ++rep) {
      const auto buf = random_buffer(20, rng, 2 * uniform01(rng) - 1);
      const auto gae = compute_gae(buf, 0.99, 0.95);
      const auto direct = gae_direct(buf, 0.99, 0.95);
      for (int t = 0; t < 20; ++t) CHECK(std::abs(gae.advantages[t] - direct[t]) < 1e-10);
    }
  }
  SUBCASE("lambda = 1 value targets equal discounted reward-to-go plus bootstrap") {
    TrajectoryBuffer buf;
    buf.num_steps = 3;
    buf.rewards = {1.0, -0.5, 2.0};
    buf.values = {0.3, -0.2, 0.9};
    buf.bootstrap_value = 0.7;
    const double g = 0.95;
    const auto gae = compute_gae(buf, g, 1.0);
    const double r2 = 2.0 + g * 0.7;
    const double r1 = -0.5 + g * r2;
    const double r0 = 1.0 + g * r1;
    CHECK(gae.value_targets[0] == doctest::Approx(r0).epsilon(1e-12));
    CHECK(gae.value_targets[1] == doctest::Approx(r1).epsilon(1e-12));
    CHECK(gae.value_targets[2] == doctest::Approx(r2).epsilon(1e-12));
  }
}

TEST_CASE("policy loss at the behavior policy") {
  nnet::NetConfig cfg{7, 10, 5};
  auto net = nnet::Network::random_init(cfg, 3);
  Rng rng(11);
  auto batch = on_policy_batch(net, 9, rng);
  const auto terms = evaluate_losses(net, batch, 0.2);
  double mean_adv = 0.0;
  for (double a : batch.advantages) mean_adv += a / batch.size;
  // Ratio is exactly 1, the clip is inactive, objective = mean advantage.
  CHECK(terms.policy == doctest::Approx(-mean_adv).epsilon(1e-10));
}

TEST_CASE("clip branch engages for large ratios") {
  nnet::NetConfig cfg{6, 8, 4};
  auto net = nnet::Network::random_init(cfg, 9);
  Rng rng(13);
  auto batch = on_policy_batch(net, 1, rng, false);
  const double eps = 0.2;
  batch.advantages[0] = 1.5;
  // Shift the behavior log-prob so the current ratio is exactly 1 + 2eps.
  batch.behavior_log_probs[0] -= std::log(1.0 + 2 * eps);
  const auto terms = evaluate_losses(net, batch, eps);
  CHECK(terms.policy == doctest::Approx(-(1.0 + eps) * 1.5).epsilon(1e-10));
}

TEST_CASE("value loss closed forms") {
  nnet::NetConfig cfg{6, 8, 4};
  auto net = nnet::Network::random_init(cfg, 21);
  Rng rng(15);
  auto batch = on_policy_batch(net, 5, rng);
  std::vector<double> probs, values;
  net.forward(batch.observations, batch.masks, batch.size, probs, values, nullptr);

  SUBCASE("zero when predictions equal targets") {
    batch.value_targets.assign(values.begin(), values.end());
    CHECK(evaluate_losses(net, batch, 0.2).value == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("constant offset c gives c squared") {
    for (int i = 0; i < batch.size; ++i) batch.value_targets[i] = values[i] - 0.75;
    CHECK(evaluate_losses(net, batch, 0.2).value == doctest::Approx(0.5625).epsilon(1e-10));
  }
}

TEST_CASE("total-loss gradient matches finite differences") {
  Rng rng(23);
  PpoHyperparams hp;
  hp.entropy_coef = 0.01;
  double worst = 0.0;
  for (int trial = 0; trial < 3; ++trial) {
    nnet::NetConfig cfg{5 + trial, 8, 4};
    auto net = nnet::Network::random_init(cfg, 31 + trial);
    auto batch = on_policy_batch(net, 6, rng);
    // Make some ratios differ from 1 so both clip branches appear.
    for (int i = 0; i < batch.size; i += 2) batch.behavior_log_probs[i] -= 0.3;
    std::vector<double> grad;
    loss_and_gradient(net, batch, hp, grad);
    for (std::size_t i = 0; i < net.num_params(); i += 5) {
      const double saved = net.params()[i];
      const double eps = 1e-5;
      net.params()[i] = saved + eps;
      const double up = evaluate_losses(net, batch, hp.clip_ratio).total(hp);
      net.params()[i] = saved - eps;
      const double down = evaluate_losses(net, batch, hp.clip_ratio).total(hp);
      net.params()[i] = saved;
      const double fd = (up - down) / (2 * eps);
      const double rel = std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
      worst = std::max(worst, rel);
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("masked action in a batch is an invariant violation") {
  nnet::NetConfig cfg{6, 8, 4};
  auto net = nnet::Network::random_init(cfg, 41);
  Rng rng(19);
  auto batch = on_policy_batch(net, 3, rng);
  batch.masks[static_cast<std::size_t>(0) * 4 + batch.actions[0]] = 1;
  CHECK_THROWS_AS(evaluate_losses(net, batch, 0.2), std::logic_error);
}

TEST_CASE("trainer loop counts and determinism") {
  auto cfg = config::preset("c1");
  cfg.hidden_units = 24;
  cfg.iterations = 2;
  cfg.trajectories_per_iteration = 2;
  cfg.slots_per_trajectory = 6;
  cfg.minibatch_size = 16;
  cfg.epochs_per_iteration = 2;

  SUBCASE("single-slot iteration produces one metrics row with a valid reward") {
    auto tiny = cfg;
    tiny.iterations = 1;
    tiny.trajectories_per_iteration = 1;
    tiny.slots_per_trajectory = 1;
    IsppoTrainer trainer(tiny.env_config(), tiny.ppo_params(), tiny.hidden_units, 7);
    trainer.run();
    REQUIRE(trainer.metrics().size() == 1);
    const double r = trainer.metrics()[0].mean_reward;
    CHECK(r >= 4.0 / 11.0 - 1e-12);
    CHECK(r <= 4.0 + 1e-12);
    CHECK(trainer.metrics()[0].mean_entropy == doctest::Approx(std::log(16.0)).epsilon(0.05));
  }

  SUBCASE("same seed gives identical logs, different seed differs") {
    IsppoTrainer a(cfg.env_config(), cfg.ppo_params(), cfg.hidden_units, 5);
    IsppoTrainer b(cfg.env_config(), cfg.ppo_params(), cfg.hidden_units, 5);
    IsppoTrainer c(cfg.env_config(), cfg.ppo_params(), cfg.hidden_units, 6);
    a.run();
    b.run();
    c.run();
    REQUIRE(a.metrics().size() == b.metrics().size());
    bool all_equal_to_c = true;
    for (std::size_t i = 0; i < a.metrics().size(); ++i) {
      CHECK(a.metrics()[i].mean_reward == b.metrics()[i].mean_reward);
      CHECK(a.metrics()[i].policy_loss == b.metrics()[i].policy_loss);
      CHECK(a.metrics()[i].value_loss == b.metrics()[i].value_loss);
      all_equal_to_c &= a.metrics()[i].mean_reward == c.metrics()[i].mean_reward;
    }
    CHECK_FALSE(all_equal_to_c);
    for (std::size_t i = 0; i < a.network().num_params(); ++i)
      CHECK(a.network().params()[i] == b.network().params()[i]);
  }

  SUBCASE("restore continues bit-identically") {
    IsppoTrainer full(cfg.env_config(), cfg.ppo_params(), cfg.hidden_units, 9);
    full.run();

    auto half_hp = cfg.ppo_params();
    half_hp.iterations = 1;
    IsppoTrainer first_half(cfg.env_config(), half_hp, cfg.hidden_units, 9);
    first_half.run();

    IsppoTrainer second_half(cfg.env_config(), cfg.ppo_params(), cfg.hidden_units, 9);
    std::vector<IterationMetrics> carried(first_half.metrics().begin(),
                                          first_half.metrics().end());
    second_half.restore(first_half.network(), carried);
    second_half.run();
    REQUIRE(second_half.metrics().size() == full.metrics().size());
    for (std::size_t i = 0; i < full.metrics().size(); ++i)
      CHECK(second_half.metrics()[i].mean_reward == full.metrics()[i].mean_reward);
    for (std::size_t i = 0; i < full.network().num_params(); ++i)
      CHECK(second_half.network().params()[i] == full.network().params()[i]);
  }
}

TEST_CASE("training improves the mean slot reward on the switching environment") {
  auto cfg = config::preset("c1");
  cfg.hidden_units = 32;
  cfg.iterations = 40;
  cfg.learning_rate = 3e-4;  // fast-learning regime for the smoke check
  IsppoTrainer trainer(cfg.env_config(), cfg.ppo_params(), cfg.hidden_units, 3);
  trainer.run();
  const auto& rows = trainer.metrics();
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 4; ++i) {
    first += rows[i].mean_reward / 4;
    last += rows[rows.size() - 1 - i].mean_reward / 4;
  }
  CHECK(last > first + 0.15);
}

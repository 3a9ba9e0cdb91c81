#include "cmcr/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "cmcr/baselines.hpp"
#include "cmcr/binio.hpp"
#include "cmcr/detection.hpp"
#include "cmcr/eval.hpp"
#include "cmcr/whittle.hpp"

namespace cmcr::harness {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[8] = {'C', 'M', 'C', 'R', 'C', 'K', '0', '1'};

void write_text_file(const std::string& path, const std::string& text) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("failed to write '" + path + "'");
}

std::string metrics_to_csv(const std::vector<ppo::IterationMetrics>& metrics) {
  std::ostringstream out;
  out << ppo::metrics_csv_header() << '\n';
  for (const auto& m : metrics) out << ppo::metrics_csv_row(m) << '\n';
  return out.str();
}

}  // namespace

int num_worker_threads() {
  if (const char* env = std::getenv("CMCR_THREADS")) {
    const int n = std::atoi(env);
    if (n >= 1) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

void TrainerCheckpoint::save(const std::string& path) const {
  fs::create_directories(fs::path(path).parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out.write(kMagic, sizeof(kMagic));
    binio::write_u64(out, 1);
    binio::write_u64(out, config_hash);
    binio::write_u64(out, seed);
    binio::write_u64(out, static_cast<std::uint64_t>(policy));
    binio::write_u64(out, metrics.size());
    for (const auto& m : metrics) {
      binio::write_f64(out, double(m.iteration));
      binio::write_f64(out, m.wall_time_s);
      binio::write_f64(out, m.mean_reward);
      binio::write_f64(out, m.mean_detection);
      binio::write_f64(out, m.policy_loss);
      binio::write_f64(out, m.value_loss);
      binio::write_f64(out, m.mean_entropy);
    }
    network.save(out);
    if (!out) throw std::runtime_error("failed to write checkpoint '" + path + "'");
  }
  fs::rename(tmp, path);
}

TrainerCheckpoint TrainerCheckpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StateMismatchError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw StateMismatchError("checkpoint '" + path + "': bad magic");
  if (binio::read_u64(in) != 1)
    throw StateMismatchError("checkpoint '" + path + "': unknown version");
  TrainerCheckpoint ck;
  ck.config_hash = binio::read_u64(in);
  ck.seed = binio::read_u64(in);
  ck.policy = static_cast<config::PolicyKind>(binio::read_u64(in));
  const std::uint64_t rows = binio::read_u64(in);
  ck.metrics.resize(rows);
  for (auto& m : ck.metrics) {
    m.iteration = static_cast<int>(binio::read_f64(in));
    m.wall_time_s = binio::read_f64(in);
    m.mean_reward = binio::read_f64(in);
    m.mean_detection = binio::read_f64(in);
    m.policy_loss = binio::read_f64(in);
    m.value_loss = binio::read_f64(in);
    m.mean_entropy = binio::read_f64(in);
  }
  ck.network = nnet::Network::load(in);
  if (!in) throw StateMismatchError("checkpoint '" + path + "': truncated");
  return ck;
}

std::string seed_dir(const std::string& out_dir, std::uint64_t seed) {
  return out_dir + "/seed_" + std::to_string(seed);
}

TrainerCheckpoint train_one_seed(const config::ExperimentConfig& config, std::uint64_t seed,
                                 const std::string& out_dir, bool resume) {
  config.validate();
  const auto kind = config.policy_kind();
  if (kind != config::PolicyKind::kIsppo && kind != config::PolicyKind::kOsppo)
    throw ConfigError("train: policy must be isppo or osppo");

  const std::string dir = seed_dir(out_dir, seed);
  const std::string ck_path = dir + "/checkpoint.bin";
  const std::string metrics_path = dir + "/metrics.csv";
  const std::uint64_t fingerprint = config::config_fingerprint(config);

  TrainerCheckpoint ck;
  ck.config_hash = fingerprint;
  ck.seed = seed;
  ck.policy = kind;

  auto save_state = [&](const std::vector<ppo::IterationMetrics>& metrics,
                        const nnet::Network& net) {
    ck.metrics = metrics;
    ck.network = net;
    ck.save(ck_path);
    write_text_file(metrics_path, metrics_to_csv(metrics));
  };

  std::optional<TrainerCheckpoint> restored;
  if (resume && fs::exists(ck_path)) {
    TrainerCheckpoint prev = TrainerCheckpoint::load(ck_path);
    if (prev.config_hash != fingerprint)
      throw StateMismatchError("checkpoint was trained with a different configuration");
    if (prev.seed != seed || prev.policy != kind)
      throw StateMismatchError("checkpoint seed/policy does not match the request");
    restored = std::move(prev);
  }

  const auto env_config = config.env_config();
  const auto hp = config.ppo_params();
  const int every = config.checkpoint_every;

  if (kind == config::PolicyKind::kIsppo) {
    ppo::IsppoTrainer trainer(env_config, hp, config.hidden_units, seed);
    if (restored) trainer.restore(std::move(restored->network), std::move(restored->metrics));
    trainer.run([&](const ppo::IterationMetrics& m, const nnet::Network& net) {
      if (m.iteration % every == 0 || m.iteration == hp.iterations)
        save_state(trainer.metrics(), net);
    });
    save_state(trainer.metrics(), trainer.network());
  } else {
    baselines::OsppoTrainer trainer(env_config, hp, config.hidden_units, seed);
    if (restored) trainer.restore(std::move(restored->network), std::move(restored->metrics));
    trainer.run([&](const ppo::IterationMetrics& m, const nnet::Network& net) {
      if (m.iteration % every == 0 || m.iteration == hp.iterations)
        save_state(trainer.metrics(), net);
    });
    save_state(trainer.metrics(), trainer.network());
  }
  return ck;
}

void cmd_train(const config::ExperimentConfig& config,
               std::optional<std::uint64_t> seed_override, const std::string& out_dir,
               bool resume) {
  std::vector<std::uint64_t> seeds =
      seed_override ? std::vector<std::uint64_t>{*seed_override} : config.seeds;
  const int workers = std::max(1, std::min<int>(num_worker_threads(), int(seeds.size())));

  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= seeds.size()) return;
      try {
        train_one_seed(config, seeds[i], out_dir, resume);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

nnet::Network load_network_for(const config::ExperimentConfig& config,
                               const std::string& checkpoint_path) {
  TrainerCheckpoint ck = TrainerCheckpoint::load(checkpoint_path);
  const int k = config.channel_count;
  nnet::NetConfig expected;
  expected.hidden_dim = config.hidden_units;
  if (ck.policy == config::PolicyKind::kIsppo) {
    expected.input_dim = k * (config.history_slots + 1);
    expected.num_actions = k;
  } else {
    baselines::SubsetCodec codec(k, config.selected_count);
    expected.input_dim = k * config.history_slots;
    expected.num_actions = static_cast<int>(codec.count());
  }
  if (!(ck.network.config() == expected))
    throw StateMismatchError("checkpoint dimensions do not match the configuration");
  return std::move(ck.network);
}

namespace {

std::unique_ptr<eval::SlotPolicy> make_policy(const config::ExperimentConfig& config,
                                              const nnet::Network* net, std::uint64_t seed) {
  const auto mode =
      config.eval_mode == "greedy" ? eval::ActionMode::kGreedy : eval::ActionMode::kSample;
  switch (config.policy_kind()) {
    case config::PolicyKind::kIsppo:
      return eval::make_isppo_policy(*net, mode, seed);
    case config::PolicyKind::kOsppo:
      return eval::make_osppo_policy(*net, mode, seed);
    case config::PolicyKind::kWhittle:
      return eval::make_whittle_policy(config.env_config(), config.whittle_options(), seed);
    case config::PolicyKind::kRandom:
      return eval::make_random_policy(config.channel_count, config.selected_count, seed);
  }
  throw ConfigError("unknown policy");
}

}  // namespace

std::vector<EvalRow> cmd_eval(const config::ExperimentConfig& config,
                              const std::string& checkpoint_path,
                              std::optional<std::uint64_t> seed_override, int slots,
                              const std::string& out_dir, std::ostream& log) {
  config.validate();
  const auto kind = config.policy_kind();
  nnet::Network net;
  const bool needs_net =
      kind == config::PolicyKind::kIsppo || kind == config::PolicyKind::kOsppo;
  if (needs_net) {
    if (checkpoint_path.empty()) throw ConfigError("eval: this policy requires --checkpoint");
    net = load_network_for(config, checkpoint_path);
  }

  std::vector<std::uint64_t> seeds =
      seed_override ? std::vector<std::uint64_t>{*seed_override} : config.seeds;
  std::vector<EvalRow> rows;
  for (std::uint64_t seed : seeds) {
    env::RadarEnv environment(config.env_config(), derive_seed(seed, 0xEA1ULL));
    auto policy = make_policy(config, needs_net ? &net : nullptr, seed);
    EvalRow row;
    row.seed = seed;
    row.summary = eval::evaluate_policy(environment, *policy, slots);
    rows.push_back(row);
    log << config.policy << " seed " << seed << ": detection " << row.summary.mean_detection_pct
        << " +/- " << row.summary.std_detection_pct << " %, mean slot reward "
        << row.summary.mean_reward << "\n";
  }

  std::ostringstream csv;
  csv << "policy,seed,slots,mean_detection_pct,std_detection_pct,mean_reward\n";
  csv.precision(12);
  for (const auto& row : rows)
    csv << config.policy << ',' << row.seed << ',' << row.summary.slots << ','
        << row.summary.mean_detection_pct << ',' << row.summary.std_detection_pct << ','
        << row.summary.mean_reward << '\n';
  write_text_file(out_dir + "/eval.csv", csv.str());
  return rows;
}

std::vector<CurvePoint> cmd_detection_curve(const config::ExperimentConfig& config,
                                            const std::string& checkpoint_path,
                                            const std::vector<double>& snr_db_list,
                                            const std::vector<int>& m_list, int slots,
                                            const std::string& out_dir, std::ostream& log) {
  config.validate();
  if (snr_db_list.empty() || m_list.empty())
    throw ConfigError("detection-curve: SNR and M lists must be nonempty");
  const auto kind = config.policy_kind();
  if (kind == config::PolicyKind::kOsppo)
    throw ConfigError("detection-curve: the osppo head is tied to one M; use isppo");

  nnet::Network net;
  if (kind == config::PolicyKind::kIsppo) {
    if (checkpoint_path.empty())
      throw ConfigError("detection-curve: isppo requires --checkpoint");
    net = load_network_for(config, checkpoint_path);
  }

  const std::uint64_t seed = config.seeds.front();
  std::vector<CurvePoint> points;
  for (double snr : snr_db_list) {
    for (int m : m_list) {
      config::ExperimentConfig point_config = config;
      point_config.snr_db = snr;
      point_config.selected_count = m;
      point_config.validate();
      env::RadarEnv environment(point_config.env_config(), derive_seed(seed, 0xEA1ULL));
      auto policy = make_policy(point_config, &net, seed);
      const auto summary = eval::evaluate_policy(environment, *policy, slots);
      CurvePoint point{snr, m, summary.mean_detection_pct};
      points.push_back(point);
      log << "snr " << snr << " dB, M=" << m << ": detection " << point.mean_detection_pct
          << " %\n";
    }
  }

  std::ostringstream csv;
  csv << "snr_db,num_selected,slots,mean_detection_pct\n";
  csv.precision(12);
  for (const auto& p : points)
    csv << p.snr_db << ',' << p.num_selected << ',' << slots << ',' << p.mean_detection_pct
        << '\n';
  write_text_file(out_dir + "/detection_curve.csv", csv.str());
  return points;
}

void cmd_spectrum_dump(const config::ExperimentConfig& config, std::uint64_t seed, int slots,
                       const std::string& out_dir, std::ostream& log) {
  config.validate();
  const auto dump = spectrum::dump_evolution(config.spectrum_config(), seed, slots);
  write_text_file(out_dir + "/evolution.pgm", spectrum::to_pgm(dump));
  write_text_file(out_dir + "/evolution.csv", spectrum::to_csv(dump));
  log << "wrote " << dump.num_channels << "x" << dump.num_slots << " evolution to " << out_dir
      << "\n";
}

}  // namespace cmcr::harness

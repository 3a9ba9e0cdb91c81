#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cmcr/config.hpp"
#include "cmcr/nnet.hpp"
#include "cmcr/ppo.hpp"

namespace cmcr::harness {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitStateMismatch = 3;
inline constexpr int kExitNumerical = 4;

// On-disk training state: config fingerprint, seed, policy kind, all metric
// rows so far, and the network with its optimizer moments. Training streams
// are re-derived per iteration, so this is everything resume needs.
struct TrainerCheckpoint {
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  config::PolicyKind policy = config::PolicyKind::kIsppo;
  std::vector<ppo::IterationMetrics> metrics;
  nnet::Network network;

  void save(const std::string& path) const;
  static TrainerCheckpoint load(const std::string& path);
};

std::string seed_dir(const std::string& out_dir, std::uint64_t seed);

// Trains one seed (ISPPO or OSPPO per the config policy), writing
// <out>/seed_<seed>/checkpoint.bin and metrics.csv. With resume=true an
// existing checkpoint is validated and continued.
TrainerCheckpoint train_one_seed(const config::ExperimentConfig& config, std::uint64_t seed,
                                 const std::string& out_dir, bool resume);

// Trains config.seeds (or the override) with up to CMCR_THREADS seeds in
// parallel.
void cmd_train(const config::ExperimentConfig& config,
               std::optional<std::uint64_t> seed_override, const std::string& out_dir,
               bool resume);

struct EvalRow {
  std::uint64_t seed = 0;
  eval::EvalSummary summary;
};

std::vector<EvalRow> cmd_eval(const config::ExperimentConfig& config,
                              const std::string& checkpoint_path,
                              std::optional<std::uint64_t> seed_override, int slots,
                              const std::string& out_dir, std::ostream& log);

struct CurvePoint {
  double snr_db = 0.0;
  int num_selected = 0;
  double mean_detection_pct = 0.0;
};

std::vector<CurvePoint> cmd_detection_curve(const config::ExperimentConfig& config,
                                            const std::string& checkpoint_path,
                                            const std::vector<double>& snr_db_list,
                                            const std::vector<int>& m_list, int slots,
                                            const std::string& out_dir, std::ostream& log);

void cmd_spectrum_dump(const config::ExperimentConfig& config, std::uint64_t seed, int slots,
                       const std::string& out_dir, std::ostream& log);

// Quick oracle suite (reduced trial counts); returns the number of failures.
int run_selftest(std::ostream& log);

int num_worker_threads();

// Loads a trainer checkpoint and validates it against the config,
// returning the embedded network. Throws StateMismatchError on dimension or
// fingerprint mismatch.
nnet::Network load_network_for(const config::ExperimentConfig& config,
                               const std::string& checkpoint_path);

}  // namespace cmcr::harness

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cmcr/errors.hpp"
#include "cmcr/rng.hpp"

namespace cmcr::nnet {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// All buffers fed to Eigen are kept 32-byte aligned so the vectorized kernels
// take the same code path on every call; heap-dependent alignment would
// otherwise change summation order in the last ULP and break bit-exact
// reproducibility of training runs.
using AlignedVector = std::vector<double, Eigen::aligned_allocator<double>>;

struct NetConfig {
  int input_dim = 0;
  int hidden_dim = 256;
  int num_actions = 0;

  bool operator==(const NetConfig&) const = default;
  void validate() const;
};

// Action distribution after masking. Masked channels carry exactly zero
// probability.
struct MaskedDistribution {
  std::vector<double> probs;
  std::vector<std::uint8_t> mask;  // 1 = excluded (may be empty: nothing masked)

  double log_prob(int action) const;  // throws std::domain_error for masked actions
  double entropy() const;
  int argmax() const;
  int sample(Rng& rng) const;
};

// Batch activations kept for the backward pass.
struct ForwardCache {
  RowMatrix input;          // B x in
  RowMatrix trunk1, trunk2; // B x h (post-tanh)
  RowMatrix policy_hidden;  // B x h
  RowMatrix value_hidden;   // B x h
};

// Shared-trunk MLP: two tanh trunk layers feeding a tanh policy branch with a
// linear head over the actions and a tanh value branch with a scalar head.
// Parameters, Adam moments and the step counter live in flat arrays so the
// optimizer, finite-difference checks and checkpoints all see one layout:
// [W1 b1 W2 b2 Wp3 bp3 Wpo bpo Wv3 bv3 Wvo bvo], matrices row-major (in x out).
class Network {
 public:
  Network() = default;
  // Orthogonal-style init, gain sqrt(2) on hidden layers, value head gain 1,
  // policy head scaled by 0.01 for a near-uniform initial policy.
  static Network random_init(const NetConfig& config, std::uint64_t seed);

  const NetConfig& config() const { return config_; }
  long step_count() const { return step_; }
  std::size_t num_params() const { return params_.size(); }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<const double> first_moment() const { return m_; }
  std::span<const double> second_moment() const { return v_; }

  // Batched forward pass. observations: batch x input_dim, row-major. masks:
  // batch x num_actions (empty span = no masking). Throws std::domain_error
  // if any sample has every action masked.
  void forward(std::span<const double> observations, std::span<const std::uint8_t> masks,
               int batch, std::vector<double>& probs, std::vector<double>& values,
               ForwardCache* cache) const;

  MaskedDistribution policy_forward(std::span<const double> observation,
                                    std::span<const std::uint8_t> mask) const;
  double value_forward(std::span<const double> observation) const;

  // Exact gradient of any loss expressed through d loss / d logits (batch x A,
  // already zero at masked entries) and d loss / d value (batch).
  void backward(const ForwardCache& cache, std::span<const double> dlogits,
                std::span<const double> dvalues, std::vector<double>& grad) const;

  // Adam with decay 0.9 / 0.999, epsilon 1e-8, bias correction. Throws
  // TrainingError on a non-finite gradient without touching any state.
  void adam_step(std::span<const double> grad, double learning_rate);

  // Versioned little-endian checkpoint: header + params + both moments.
  // Round-trips bit-exactly.
  void save(std::ostream& out) const;
  static Network load(std::istream& in);

  // Tensor offsets within the flat layout (exposed for tests).
  struct Layout {
    std::size_t w1, b1, w2, b2, wp3, bp3, wpo, bpo, wv3, bv3, wvo, bvo, total;
  };
  static Layout layout(const NetConfig& config);

 private:
  NetConfig config_{};
  Layout layout_{};
  AlignedVector params_, m_, v_;
  long step_ = 0;
};

}  // namespace cmcr::nnet

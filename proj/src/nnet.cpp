#include "cmcr/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>

#include "cmcr/binio.hpp"

namespace cmcr::nnet {

namespace {

using binio::read_f64_array;
using binio::read_u64;
using binio::write_f64_array;
using binio::write_u64;

constexpr char kMagic[8] = {'C', 'M', 'C', 'R', 'N', 'N', '0', '1'};

using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;
using MutVecMap = Eigen::Map<Eigen::RowVectorXd>;

// Orthogonal rows/columns from a seeded Gaussian draw via Householder QR.
RowMatrix orthogonal(int rows, int cols, double gain, Rng& rng) {
  const bool tall = rows >= cols;
  const int big = tall ? rows : cols;
  const int small = tall ? cols : rows;
  Eigen::MatrixXd a(big, small);
  for (int i = 0; i < big; ++i)
    for (int j = 0; j < small; ++j) a(i, j) = standard_normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  RowMatrix w(rows, cols);
  if (tall)
    w = gain * q;
  else
    w = gain * q.transpose();
  return w;
}

}  // namespace

void NetConfig::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || num_actions < 1)
    throw ConfigError("net config: all dimensions must be >= 1");
}

Network::Layout Network::layout(const NetConfig& c) {
  const auto in = static_cast<std::size_t>(c.input_dim);
  const auto h = static_cast<std::size_t>(c.hidden_dim);
  const auto a = static_cast<std::size_t>(c.num_actions);
  Layout l{};
  std::size_t off = 0;
  auto take = [&off](std::size_t n) {
    const std::size_t at = off;
    off += n;
    return at;
  };
  l.w1 = take(in * h);
  l.b1 = take(h);
  l.w2 = take(h * h);
  l.b2 = take(h);
  l.wp3 = take(h * h);
  l.bp3 = take(h);
  l.wpo = take(h * a);
  l.bpo = take(a);
  l.wv3 = take(h * h);
  l.bv3 = take(h);
  l.wvo = take(h);
  l.bvo = take(1);
  l.total = off;
  return l;
}

Network Network::random_init(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  Network net;
  net.config_ = config;
  net.layout_ = layout(config);
  net.params_.assign(net.layout_.total, 0.0);
  net.m_.assign(net.layout_.total, 0.0);
  net.v_.assign(net.layout_.total, 0.0);

  Rng rng(derive_seed(seed, 0x4e457457ULL));
  const int in = config.input_dim, h = config.hidden_dim, a = config.num_actions;
  const double root2 = std::sqrt(2.0);
  auto assign = [&](std::size_t off, const RowMatrix& w) {
    std::copy(w.data(), w.data() + w.size(), net.params_.begin() + off);
  };
  assign(net.layout_.w1, orthogonal(in, h, root2, rng));
  assign(net.layout_.w2, orthogonal(h, h, root2, rng));
  assign(net.layout_.wp3, orthogonal(h, h, root2, rng));
  assign(net.layout_.wpo, orthogonal(h, a, 0.01, rng));
  assign(net.layout_.wv3, orthogonal(h, h, root2, rng));
  assign(net.layout_.wvo, orthogonal(h, 1, 1.0, rng));
  return net;
}

void Network::forward(std::span<const double> observations, std::span<const std::uint8_t> masks,
                      int batch, std::vector<double>& probs, std::vector<double>& values,
                      ForwardCache* cache) const {
  const int in = config_.input_dim, h = config_.hidden_dim, a = config_.num_actions;
  if (observations.size() != static_cast<std::size_t>(batch) * in)
    throw std::invalid_argument("forward: observation buffer size mismatch");
  const bool masked = !masks.empty();
  if (masked && masks.size() != static_cast<std::size_t>(batch) * a)
    throw std::invalid_argument("forward: mask buffer size mismatch");

  // Copy into aligned storage; see AlignedVector.
  AlignedVector obs_aligned(observations.begin(), observations.end());
  ConstMap x(obs_aligned.data(), batch, in);
  ConstMap w1(params_.data() + layout_.w1, in, h);
  ConstMap w2(params_.data() + layout_.w2, h, h);
  ConstMap wp3(params_.data() + layout_.wp3, h, h);
  ConstMap wpo(params_.data() + layout_.wpo, h, a);
  ConstMap wv3(params_.data() + layout_.wv3, h, h);
  ConstVecMap b1(params_.data() + layout_.b1, h);
  ConstVecMap b2(params_.data() + layout_.b2, h);
  ConstVecMap bp3(params_.data() + layout_.bp3, h);
  ConstVecMap bpo(params_.data() + layout_.bpo, a);
  ConstVecMap bv3(params_.data() + layout_.bv3, h);
  ConstVecMap wvo(params_.data() + layout_.wvo, h);
  const double bvo = params_[layout_.bvo];

  RowMatrix h1 = ((x * w1).rowwise() + b1).array().tanh();
  RowMatrix h2 = ((h1 * w2).rowwise() + b2).array().tanh();
  RowMatrix hp = ((h2 * wp3).rowwise() + bp3).array().tanh();
  RowMatrix logits = (hp * wpo).rowwise() + bpo;
  RowMatrix hv = ((h2 * wv3).rowwise() + bv3).array().tanh();

  values.resize(batch);
  for (int b = 0; b < batch; ++b) values[b] = hv.row(b).dot(wvo) + bvo;

  probs.resize(static_cast<std::size_t>(batch) * a);
  for (int b = 0; b < batch; ++b) {
    const std::uint8_t* mrow = masked ? masks.data() + static_cast<std::size_t>(b) * a : nullptr;
    double max_logit = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < a; ++j)
      if (!(mrow && mrow[j])) max_logit = std::max(max_logit, logits(b, j));
    if (max_logit == -std::numeric_limits<double>::infinity())
      throw std::domain_error("forward: all actions masked");
    double sum = 0.0;
    double* prow = probs.data() + static_cast<std::size_t>(b) * a;
    for (int j = 0; j < a; ++j) {
      if (mrow && mrow[j]) {
        prow[j] = 0.0;
      } else {
        prow[j] = std::exp(logits(b, j) - max_logit);
        sum += prow[j];
      }
    }
    for (int j = 0; j < a; ++j) prow[j] /= sum;
  }

  if (cache) {
    cache->input = x;
    cache->trunk1 = std::move(h1);
    cache->trunk2 = std::move(h2);
    cache->policy_hidden = std::move(hp);
    cache->value_hidden = std::move(hv);
  }
}

MaskedDistribution Network::policy_forward(std::span<const double> observation,
                                           std::span<const std::uint8_t> mask) const {
  std::vector<double> probs, values;
  forward(observation, mask, 1, probs, values, nullptr);
  MaskedDistribution dist;
  dist.probs = std::move(probs);
  dist.mask.assign(mask.begin(), mask.end());
  return dist;
}

double Network::value_forward(std::span<const double> observation) const {
  std::vector<double> probs, values;
  forward(observation, {}, 1, probs, values, nullptr);
  return values[0];
}

void Network::backward(const ForwardCache& cache, std::span<const double> dlogits,
                       std::span<const double> dvalues, std::vector<double>& grad) const {
  const int h = config_.hidden_dim, a = config_.num_actions;
  const int batch = static_cast<int>(cache.input.rows());
  if (dlogits.size() != static_cast<std::size_t>(batch) * a ||
      dvalues.size() != static_cast<std::size_t>(batch))
    throw std::invalid_argument("backward: gradient buffer size mismatch");

  AlignedVector dlogits_aligned(dlogits.begin(), dlogits.end());
  AlignedVector dvalues_aligned(dvalues.begin(), dvalues.end());
  AlignedVector grad_aligned(layout_.total, 0.0);
  ConstMap dlg(dlogits_aligned.data(), batch, a);
  ConstMap w2(params_.data() + layout_.w2, h, h);
  ConstMap wp3(params_.data() + layout_.wp3, h, h);
  ConstMap wpo(params_.data() + layout_.wpo, h, a);
  ConstMap wv3(params_.data() + layout_.wv3, h, h);
  ConstVecMap wvo(params_.data() + layout_.wvo, h);

  MutMap g_w1(grad_aligned.data() + layout_.w1, config_.input_dim, h);
  MutVecMap g_b1(grad_aligned.data() + layout_.b1, h);
  MutMap g_w2(grad_aligned.data() + layout_.w2, h, h);
  MutVecMap g_b2(grad_aligned.data() + layout_.b2, h);
  MutMap g_wp3(grad_aligned.data() + layout_.wp3, h, h);
  MutVecMap g_bp3(grad_aligned.data() + layout_.bp3, h);
  MutMap g_wpo(grad_aligned.data() + layout_.wpo, h, a);
  MutVecMap g_bpo(grad_aligned.data() + layout_.bpo, a);
  MutMap g_wv3(grad_aligned.data() + layout_.wv3, h, h);
  MutVecMap g_bv3(grad_aligned.data() + layout_.bv3, h);
  MutVecMap g_wvo(grad_aligned.data() + layout_.wvo, h);

  // Policy branch.
  g_wpo = cache.policy_hidden.transpose() * dlg;
  g_bpo = dlg.colwise().sum();
  RowMatrix dhp =
      (dlg * wpo.transpose()).cwiseProduct((1.0 - cache.policy_hidden.array().square()).matrix());
  g_wp3 = cache.trunk2.transpose() * dhp;
  g_bp3 = dhp.colwise().sum();

  // Value branch.
  ConstVecMap dv(dvalues_aligned.data(), batch);
  RowMatrix dhv = (dv.transpose() * wvo)
                      .cwiseProduct((1.0 - cache.value_hidden.array().square()).matrix());
  g_wvo = dv * cache.value_hidden;
  grad_aligned[layout_.bvo] = dv.sum();
  g_wv3 = cache.trunk2.transpose() * dhv;
  g_bv3 = dhv.colwise().sum();

  // Shared trunk.
  RowMatrix dh2 = ((dhp * wp3.transpose()) + (dhv * wv3.transpose()))
                      .cwiseProduct((1.0 - cache.trunk2.array().square()).matrix());
  g_w2 = cache.trunk1.transpose() * dh2;
  g_b2 = dh2.colwise().sum();
  RowMatrix dh1 =
      (dh2 * w2.transpose()).cwiseProduct((1.0 - cache.trunk1.array().square()).matrix());
  g_w1 = cache.input.transpose() * dh1;
  g_b1 = dh1.colwise().sum();

  grad.assign(grad_aligned.begin(), grad_aligned.end());
}

void Network::adam_step(std::span<const double> grad, double learning_rate) {
  if (grad.size() != params_.size())
    throw std::invalid_argument("adam_step: gradient size mismatch");
  for (double g : grad)
    if (!std::isfinite(g)) throw TrainingError("adam_step: non-finite gradient");

  ++step_;
  const double c1 = 1.0 / (1.0 - std::pow(0.9, double(step_)));
  const double c2 = 1.0 / (1.0 - std::pow(0.999, double(step_)));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i] = 0.9 * m_[i] + 0.1 * grad[i];
    v_[i] = 0.999 * v_[i] + 0.001 * grad[i] * grad[i];
    params_[i] -= learning_rate * (m_[i] * c1) / (std::sqrt(v_[i] * c2) + 1e-8);
  }
}

void Network::save(std::ostream& out) const {
  out.write(kMagic, sizeof(kMagic));
  write_u64(out, 1);  // layout id
  write_u64(out, static_cast<std::uint64_t>(config_.input_dim));
  write_u64(out, static_cast<std::uint64_t>(config_.hidden_dim));
  write_u64(out, static_cast<std::uint64_t>(config_.num_actions));
  write_u64(out, static_cast<std::uint64_t>(step_));
  write_u64(out, params_.size());
  write_f64_array(out, params_);
  write_f64_array(out, m_);
  write_f64_array(out, v_);
  if (!out) throw std::runtime_error("network save failed");
}

Network Network::load(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw StateMismatchError("network checkpoint: bad magic");
  if (read_u64(in) != 1) throw StateMismatchError("network checkpoint: unknown layout id");
  Network net;
  net.config_.input_dim = static_cast<int>(read_u64(in));
  net.config_.hidden_dim = static_cast<int>(read_u64(in));
  net.config_.num_actions = static_cast<int>(read_u64(in));
  net.config_.validate();
  net.step_ = static_cast<long>(read_u64(in));
  net.layout_ = layout(net.config_);
  const std::uint64_t count = read_u64(in);
  if (count != net.layout_.total)
    throw StateMismatchError("network checkpoint: parameter count mismatch");
  net.params_.resize(count);
  net.m_.resize(count);
  net.v_.resize(count);
  read_f64_array(in, net.params_);
  read_f64_array(in, net.m_);
  read_f64_array(in, net.v_);
  if (!in) throw StateMismatchError("network checkpoint: truncated file");
  return net;
}

double MaskedDistribution::log_prob(int action) const {
  if (action < 0 || action >= static_cast<int>(probs.size()))
    throw std::domain_error("log_prob: action out of range");
  if (!mask.empty() && mask[action])
    throw std::domain_error("log_prob: action is masked");
  return std::log(probs[action]);
}

double MaskedDistribution::entropy() const {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

int MaskedDistribution::argmax() const {
  int best = -1;
  double best_p = -1.0;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (!mask.empty() && mask[j]) continue;
    if (probs[j] > best_p) {
      best_p = probs[j];
      best = static_cast<int>(j);
    }
  }
  return best;
}

int MaskedDistribution::sample(Rng& rng) const {
  const double u = uniform01(rng);
  double cum = 0.0;
  int last_valid = -1;
  for (std::size_t j = 0; j < probs.size(); ++j) {
    if (!mask.empty() && mask[j]) continue;
    last_valid = static_cast<int>(j);
    cum += probs[j];
    if (u < cum) return last_valid;
  }
  return last_valid;  // u landed in the rounding gap past the final entry
}

}  // namespace cmcr::nnet

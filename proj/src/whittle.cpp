#include "cmcr/whittle.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cmcr::whittle {

double belief_update(double omega, Observation observed, double p01, double p10) {
  switch (observed) {
    case Observation::kGood:
      return 1.0 - p10;  // p11
    case Observation::kBad:
      return p01;
    case Observation::kNone:
      return omega * (1.0 - p10) + (1.0 - omega) * p01;
  }
  return omega;
}

IndexSolver::IndexSolver(double p01, double p10, double discount, double reward_good,
                         double reward_bad, WhittleOptions options)
    : p01_(p01), p10_(p10), discount_(discount), reward_good_(reward_good),
      reward_bad_(reward_bad), opt_(options) {
  if (!(p01 >= 0.0 && p01 <= 1.0 && p10 >= 0.0 && p10 <= 1.0))
    throw std::domain_error("whittle: transition probabilities must be in [0,1]");
  if (!(discount > 0.0 && discount < 1.0))
    throw std::domain_error("whittle: discount must be in (0,1)");

  grid_n_ = static_cast<int>(std::lround(1.0 / opt_.grid_step)) + 1;
  grid_.resize(grid_n_);
  active_reward_.resize(grid_n_);
  passive_idx_.resize(grid_n_);
  passive_frac_.resize(grid_n_);
  value_.assign(grid_n_, 0.0);
  scratch_.assign(grid_n_, 0.0);
  for (int i = 0; i < grid_n_; ++i) {
    const double omega = std::min(1.0, i * opt_.grid_step);
    grid_[i] = omega;
    active_reward_[i] = omega * reward_good_ + (1.0 - omega) * reward_bad_;
    const double next = belief_update(omega, Observation::kNone, p01_, p10_);
    const double pos = std::clamp(next, 0.0, 1.0) / opt_.grid_step;
    int idx = static_cast<int>(pos);
    if (idx >= grid_n_ - 1) idx = grid_n_ - 2;
    passive_idx_[i] = idx;
    passive_frac_[i] = pos - idx;
  }
}

double IndexSolver::interpolate(double omega) const {
  const double pos = std::clamp(omega, 0.0, 1.0) / opt_.grid_step;
  int idx = static_cast<int>(pos);
  if (idx >= grid_n_ - 1) idx = grid_n_ - 2;
  const double frac = pos - idx;
  return value_[idx] * (1.0 - frac) + value_[idx + 1] * frac;
}

void IndexSolver::value_iterate(double subsidy) {
  const double p11 = 1.0 - p10_;
  int sweeps = 0;
  for (;;) {
    const double v_good = interpolate(p11);
    const double v_bad = interpolate(p01_);
    double diff = 0.0;
    for (int i = 0; i < grid_n_; ++i) {
      const double active =
          active_reward_[i] + discount_ * (grid_[i] * v_good + (1.0 - grid_[i]) * v_bad);
      const int idx = passive_idx_[i];
      const double passive =
          subsidy + discount_ * (value_[idx] * (1.0 - passive_frac_[i]) +
                                 value_[idx + 1] * passive_frac_[i]);
      scratch_[i] = std::max(active, passive);
      diff = std::max(diff, std::abs(scratch_[i] - value_[i]));
    }
    value_.swap(scratch_);
    if (diff < opt_.vi_tol) return;
    if (++sweeps > opt_.max_vi_sweeps)
      throw NumericalError("whittle value iteration did not converge (subsidy " +
                           std::to_string(subsidy) + ", residual " + std::to_string(diff) + ")");
  }
}

double IndexSolver::active_preference(double omega, double subsidy) {
  value_iterate(subsidy);
  const double p11 = 1.0 - p10_;
  const double active = omega * reward_good_ + (1.0 - omega) * reward_bad_ +
                        discount_ * (omega * interpolate(p11) + (1.0 - omega) * interpolate(p01_));
  const double next = belief_update(omega, Observation::kNone, p01_, p10_);
  const double passive = subsidy + discount_ * interpolate(next);
  return active - passive;
}

double IndexSolver::index(double omega) {
  if (!(omega >= 0.0 && omega <= 1.0))
    throw std::domain_error("whittle index: belief must be in [0,1]");
  const long long key = std::llround(omega * 1e12);
  if (auto it = memo_.find(key); it != memo_.end()) return it->second;

  const double span = std::max(1.0, std::abs(reward_good_) + std::abs(reward_bad_));
  double lo = std::min(reward_bad_, reward_good_) - span;
  double hi = std::max(reward_bad_, reward_good_) + span;
  // The preference is decreasing in the subsidy; widen until it brackets zero.
  for (int i = 0; i < 60 && active_preference(omega, lo) < 0.0; ++i) lo -= span;
  for (int i = 0; i < 60 && active_preference(omega, hi) > 0.0; ++i) hi += span;
  while (hi - lo > opt_.bisect_tol) {
    const double mid = 0.5 * (lo + hi);
    if (active_preference(omega, mid) > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  const double result = 0.5 * (lo + hi);
  memo_.emplace(key, result);
  return result;
}

FittedChain fit_markov_chain(const std::vector<std::uint8_t>& good_trace) {
  long n01 = 0, n0 = 0, n10 = 0, n1 = 0;
  for (std::size_t t = 0; t + 1 < good_trace.size(); ++t) {
    if (good_trace[t]) {
      ++n1;
      if (!good_trace[t + 1]) ++n10;
    } else {
      ++n0;
      if (good_trace[t + 1]) ++n01;
    }
  }
  FittedChain fit;
  if (n0 > 0) fit.p01 = double(n01) / double(n0);
  if (n1 > 0) fit.p10 = double(n10) / double(n1);
  return fit;
}

}  // namespace cmcr::whittle

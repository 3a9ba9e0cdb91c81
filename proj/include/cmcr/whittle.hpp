#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "cmcr/errors.hpp"

namespace cmcr::whittle {

enum class Observation { kNone, kGood, kBad };

// One-step belief propagation of a 2-state Markov channel. Observing the
// channel resets the belief to the corresponding transition row; an
// unobserved channel ages toward the stationary point p01/(p01+p10).
double belief_update(double omega, Observation observed, double p01, double p10);

struct WhittleOptions {
  double grid_step = 1e-3;     // belief discretization
  double vi_tol = 1e-9;        // sup-norm convergence of value iteration
  double bisect_tol = 1e-7;    // subsidy bracket width
  int max_vi_sweeps = 1000000; // across one value-iteration call
};

// Whittle index of a single restless channel: the subsidy at which the
// passive and active actions are indifferent at a given belief. Solved by
// bisection over the subsidy with discounted value iteration on a discretized
// belief space. Value tables are warm-started across calls, and indices are
// memoized per belief.
class IndexSolver {
 public:
  IndexSolver(double p01, double p10, double discount, double reward_good, double reward_bad,
              WhittleOptions options = {});

  double index(double omega);

  double p01() const { return p01_; }
  double p10() const { return p10_; }

 private:
  double interpolate(double omega) const;
  // Runs VI at the given subsidy, then returns QA(omega) - QP(omega).
  double active_preference(double omega, double subsidy);
  void value_iterate(double subsidy);

  double p01_, p10_, discount_, reward_good_, reward_bad_;
  WhittleOptions opt_;
  int grid_n_ = 0;
  std::vector<double> grid_, active_reward_, value_, scratch_;
  std::vector<int> passive_idx_;
  std::vector<double> passive_frac_;
  std::map<long long, double> memo_;
};

// Maximum-likelihood 2-state chain fit from a good/bad time series; states
// with no observed exits fall back to probability 0.5.
struct FittedChain {
  double p01 = 0.5;
  double p10 = 0.5;
};
FittedChain fit_markov_chain(const std::vector<std::uint8_t>& good_trace);

}  // namespace cmcr::whittle

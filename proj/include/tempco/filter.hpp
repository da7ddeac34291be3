// Copyright 2026 The Tempco Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Online smoothing of per-frame liveness logits.
//
// The uncertainty filter treats the latent liveness of frame t as Gaussian
// around a prior estimate (mean m, variance v) built from earlier frames, and
// the observed logit q_t as a noisy measurement whose variance is estimated
// from its own innovation, d2 = (q_t - m)^2. Combining the two Gaussians gives
//
//   theta   = v / (d2 + v)
//   mu_hat  = theta * q_t + (1 - theta) * m
//   var_hat = theta * d2            (= d2 * v / (d2 + v))
//
// An outlier (large d2 relative to v) gets a small weight, so short spikes are
// suppressed while genuine level changes pass once the prior variance grows.
//
// Two ways of forming the prior are provided:
//   UncertaintyWindowed   m, v = mean and population variance of the last
//                         `window` raw logits (deployment default).
//   UncertaintyRecursive  m, v = mu_hat and var_hat of the previous step.
//
// Bootstrap: frame 0 emits mu_hat = q_0, var_hat = init_var. When
// d2 + v <= degenerate_eps the weight is 0/0 and the step emits
// mu_hat = q_t, var_hat = 0. A windowed prior built from a single logit has
// no spread and takes the same branch, unless carry_init_var substitutes
// init_var for its variance. Fixing theta to a constant and dropping the
// variance turns the update into an exponential moving average.
//
// All smoothing happens in logit space; p = logistic(mu_hat).

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "tempco/error.hpp"
#include "tempco/parallel.hpp"
#include "tempco/stream.hpp"

namespace tempco {

enum class FilterMethod { UncertaintyWindowed, UncertaintyRecursive, Ema, Sma, None };

inline std::string_view to_string(FilterMethod method) {
  switch (method) {
    case FilterMethod::UncertaintyWindowed: return "fastco";
    case FilterMethod::UncertaintyRecursive: return "fastco-recursive";
    case FilterMethod::Ema: return "ema";
    case FilterMethod::Sma: return "sma";
    case FilterMethod::None: return "none";
  }
  return "unknown";
}

inline std::optional<FilterMethod> parse_filter_method(std::string_view name) {
  for (auto m : {FilterMethod::UncertaintyWindowed, FilterMethod::UncertaintyRecursive,
                 FilterMethod::Ema, FilterMethod::Sma, FilterMethod::None}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

inline bool is_uncertainty_method(FilterMethod method) {
  return method == FilterMethod::UncertaintyWindowed ||
         method == FilterMethod::UncertaintyRecursive;
}

struct FilterConfig {
  FilterMethod method = FilterMethod::UncertaintyWindowed;
  // Window length for the windowed prior and for SMA.
  std::size_t window = 5;
  double ema_alpha = 0.1;
  // Variance reported for frame 0, and the recursive mode's first prior.
  double init_var = 1.0;
  double degenerate_eps = 0.0;
  // Windowed mode: while the window holds a single logit its variance is 0;
  // with this set, init_var is used as the prior variance instead.
  bool carry_init_var = false;
  // Uncertainty methods only: use this constant weight in place of the
  // variance ratio and report var_hat = 0.
  std::optional<double> pinned_theta;

  void validate() const {
    if (window < 1) throw ValidationError("filter window must be >= 1");
    if (!(ema_alpha > 0.0 && ema_alpha <= 1.0)) {
      throw ValidationError("ema_alpha must lie in (0, 1]");
    }
    if (!(init_var >= 0.0) || !std::isfinite(init_var)) {
      throw ValidationError("init_var must be finite and non-negative");
    }
    if (!(degenerate_eps >= 0.0) || !std::isfinite(degenerate_eps)) {
      throw ValidationError("degenerate_eps must be finite and non-negative");
    }
    if (pinned_theta && !(*pinned_theta >= 0.0 && *pinned_theta <= 1.0)) {
      throw ValidationError("pinned_theta must lie in [0, 1]");
    }
  }
};

class FilterState;

struct StepResult;

inline StepResult filter_step(FilterState state, double q, const FilterConfig& config);

// Per-tracklet filter memory. A state at frame index t depends only on the
// config and q_0..q_{t-1}.
class FilterState {
 public:
  static FilterState initial(const FilterConfig& config) {
    config.validate();
    FilterState s;
    s.method_ = config.method;
    s.window_ = config.window;
    return s;
  }

  // Index of the next frame this state expects.
  std::size_t next_index() const { return t_; }
  // Raw logits retained for the window, oldest first.
  const std::deque<double>& history() const { return history_; }
  double previous_mean() const { return mu_prev_; }
  double previous_variance() const { return var_prev_; }
  FilterMethod method() const { return method_; }
  std::size_t window() const { return window_; }

 private:
  friend StepResult filter_step(FilterState state, double q, const FilterConfig& config);

  FilterMethod method_ = FilterMethod::UncertaintyWindowed;
  std::size_t window_ = 5;
  std::deque<double> history_;
  double mu_prev_ = 0.0;
  double var_prev_ = 0.0;
  std::size_t t_ = 0;
};

struct StepResult {
  SmoothedFrame frame;
  FilterState state;
  // Weight given to q_t. Absent at frame 0, for SMA/None, and when the
  // degenerate rule fired.
  std::optional<double> theta;
  bool degenerate = false;
};

namespace detail {

struct PriorMoments {
  double mean = 0.0;
  double variance = 0.0;
};

inline PriorMoments window_moments(const std::deque<double>& values) {
  double sum = 0.0;
  for (double v : values) sum += v;
  const double n = static_cast<double>(values.size());
  const double mean = sum / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, ss / n};
}

}  // namespace detail

// Advances one frame. Consumes the state by value; the updated state is
// returned in the result.
inline StepResult filter_step(FilterState state, double q, const FilterConfig& config) {
  if (!std::isfinite(q)) {
    throw ValidationError("frame " + std::to_string(state.t_) + ": logit is not finite");
  }
  config.validate();
  if (state.method_ != config.method || state.window_ != config.window ||
      state.history_.size() > config.window) {
    throw ValidationError("filter state was created for a different configuration");
  }

  StepResult result;
  result.frame.t = state.t_;
  result.frame.q = q;
  double mu = q;
  double var = 0.0;
  const bool first = state.t_ == 0;

  auto push_history = [&] {
    state.history_.push_back(q);
    while (state.history_.size() > config.window) state.history_.pop_front();
  };

  switch (config.method) {
    case FilterMethod::None:
      push_history();
      break;

    case FilterMethod::Sma: {
      push_history();
      double sum = 0.0;
      for (double v : state.history_) sum += v;
      mu = sum / static_cast<double>(state.history_.size());
      break;
    }

    case FilterMethod::Ema:
      if (!first) {
        const double alpha = config.ema_alpha;
        mu = alpha * q + (1.0 - alpha) * state.mu_prev_;
        result.theta = alpha;
      }
      push_history();
      break;

    case FilterMethod::UncertaintyWindowed:
    case FilterMethod::UncertaintyRecursive: {
      if (first) {
        var = config.pinned_theta ? 0.0 : config.init_var;
        push_history();
        break;
      }
      detail::PriorMoments prior;
      bool single = false;
      if (config.method == FilterMethod::UncertaintyWindowed) {
        prior = detail::window_moments(state.history_);
        single = state.history_.size() == 1;
        if (config.carry_init_var && single) {
          prior.variance = config.init_var;
          single = false;
        }
      } else {
        prior = {state.mu_prev_, state.var_prev_};
      }

      if (config.pinned_theta) {
        const double theta = *config.pinned_theta;
        mu = theta * q + (1.0 - theta) * prior.mean;
        result.theta = theta;
      } else {
        const double innovation = (q - prior.mean) * (q - prior.mean);
        const double denom = innovation + prior.variance;
        if (single || denom <= config.degenerate_eps) {
          result.degenerate = true;
        } else {
          const double theta = prior.variance / denom;
          mu = theta * q + (1.0 - theta) * prior.mean;
          var = theta * innovation;
          result.theta = theta;
        }
      }
      push_history();
      break;
    }
  }

  state.mu_prev_ = mu;
  state.var_prev_ = var;
  ++state.t_;

  result.frame.mu_hat = mu;
  result.frame.p = logistic(mu);
  result.frame.var_hat = var;
  result.state = std::move(state);
  return result;
}

// Mutable convenience wrapper for live streams: one instance per tracklet.
class StreamFilter {
 public:
  explicit StreamFilter(FilterConfig config)
      : config_(std::move(config)), state_(FilterState::initial(config_)) {}

  SmoothedFrame push(double q) {
    auto step = filter_step(std::move(state_), q, config_);
    state_ = std::move(step.state);
    return step.frame;
  }

  void reset() { state_ = FilterState::initial(config_); }

  const FilterState& state() const { return state_; }
  const FilterConfig& config() const { return config_; }

 private:
  FilterConfig config_;
  FilterState state_;
};

inline SmoothedTrack run_filter(std::span<const double> logits, const FilterConfig& config) {
  SmoothedTrack out;
  out.reserve(logits.size());
  auto state = FilterState::initial(config);
  for (double q : logits) {
    auto step = filter_step(std::move(state), q, config);
    state = std::move(step.state);
    out.push_back(step.frame);
  }
  return out;
}

// Folds filter_step over the tracklet from a fresh state.
inline SmoothedTrack run_filter(const Tracklet& tracklet, const FilterConfig& config) {
  try {
    return run_filter(tracklet.logits(), config);
  } catch (const ValidationError& e) {
    throw ValidationError("tracklet '" + tracklet.id() + "': " + e.what());
  }
}

// Filters every tracklet independently; output order matches input order
// regardless of the thread count.
inline std::vector<SmoothedTrack> run_filter_all(std::span<const Tracklet> tracklets,
                                                 const FilterConfig& config,
                                                 std::size_t threads = thread_budget()) {
  config.validate();
  std::vector<SmoothedTrack> out(tracklets.size());
  parallel_for(
      tracklets.size(), [&](std::size_t i) { out[i] = run_filter(tracklets[i], config); },
      threads);
  return out;
}

}  // namespace tempco

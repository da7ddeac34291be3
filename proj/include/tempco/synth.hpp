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

// Synthetic logit streams with the temporal-inconsistency pattern: a stable
// class-dependent level plus Gaussian jitter, interrupted by short spikes that
// push the logit toward the wrong class.
//
// Random source (portable, reproducible across platforms):
//   * tracklet k (live tracklets first, then attack) draws from std::mt19937_64
//     seeded with splitmix64(seed ^ splitmix64(k));
//   * uniforms are the top 53 bits of one draw, scaled to [0, 1);
//   * every frame consumes three uniforms, in order: the spike decision u0,
//     then u1, u2 for one Box-Muller normal sqrt(-2 ln(1 - u1)) cos(2 pi u2).
//     The draws happen whether or not a spike or noise is used, so changing
//     sigma or spike_prob never shifts the random stream.
//   * a spike starts when no spike is active and u0 < spike_prob and lasts
//     spike_len frames, the current one included.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "tempco/error.hpp"
#include "tempco/parallel.hpp"
#include "tempco/stream.hpp"

namespace tempco {

// calibrate_sigma(0.2, SynthConfig{}) frozen, so the live-frame probability
// std of the default corpus is 0.2.
inline constexpr double kDefaultSynthSigma = 0.72503083432093263;

struct SynthConfig {
  std::size_t n_live = 50;
  std::size_t n_attack = 50;
  std::size_t length = 200;
  double mu_live = 2.5;
  double mu_attack = -2.5;
  double sigma = kDefaultSynthSigma;
  double spike_prob = 0.065;
  double spike_shift = 4.5;
  std::size_t spike_len = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (length < 1) throw ValidationError("synthetic tracklet length must be >= 1");
    if (!std::isfinite(mu_live) || !std::isfinite(mu_attack) || !std::isfinite(spike_shift)) {
      throw ValidationError("synthetic means and spike shift must be finite");
    }
    if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be >= 0");
    if (!(spike_prob >= 0.0 && spike_prob <= 1.0)) {
      throw ValidationError("spike_prob must lie in [0, 1]");
    }
    if (spike_len < 1) throw ValidationError("spike_len must be >= 1");
  }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

namespace detail {

class SynthRandom {
 public:
  explicit SynthRandom(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

inline std::vector<double> synth_logits(const SynthConfig& config, std::uint64_t ordinal,
                                        double mean, double spike_offset) {
  SynthRandom rng(splitmix64(config.seed ^ splitmix64(ordinal)));
  std::vector<double> q(config.length);
  std::size_t remaining = 0;
  for (auto& value : q) {
    const double u = rng.uniform();
    const double z = rng.normal();
    if (remaining == 0 && u < config.spike_prob) remaining = config.spike_len;
    double v = mean + config.sigma * z;
    if (remaining > 0) {
      v += spike_offset;
      --remaining;
    }
    value = v;
  }
  return q;
}

inline std::string synth_id(const char* prefix, std::size_t index) {
  std::string digits = std::to_string(index);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return std::string(prefix) + "-" + digits;
}

}  // namespace detail

// Live tracklets first ("live-0000", ...), then attack tracklets
// ("attack-0000", ..., attack_type "synthetic"). Deterministic in the seed and
// independent of the thread count.
inline std::vector<Tracklet> generate(const SynthConfig& config,
                                      std::size_t threads = thread_budget()) {
  config.validate();
  const std::size_t total = config.n_live + config.n_attack;
  std::vector<std::optional<Tracklet>> slots(total);
  parallel_for(
      total,
      [&](std::size_t k) {
        const bool live = k < config.n_live;
        const auto logits =
            live ? detail::synth_logits(config, k, config.mu_live, -config.spike_shift)
                 : detail::synth_logits(config, k, config.mu_attack, config.spike_shift);
        slots[k] = live ? Tracklet::from_logits(detail::synth_id("live", k), ClassLabel::live(), logits)
                        : Tracklet::from_logits(detail::synth_id("attack", k - config.n_live),
                                                ClassLabel::attack("synthetic"), logits);
      },
      threads);
  std::vector<Tracklet> out;
  out.reserve(total);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

// Population standard deviation of logistic(q) over every frame of the
// corpus's live tracklets.
inline double live_probability_std(std::span<const Tracklet> tracklets) {
  std::vector<double> p;
  for (const auto& t : tracklets) {
    if (!t.label().is_live()) continue;
    for (const auto& f : t.frames()) p.push_back(logistic(f.q));
  }
  if (p.empty()) throw ValidationError("corpus has no live frames");
  double mean = 0.0;
  for (double v : p) mean += v;
  mean /= static_cast<double>(p.size());
  double ss = 0.0;
  for (double v : p) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(p.size()));
}

// Finds sigma such that the live-frame probability std of a generated corpus
// (the config's live settings and seed, at least 20000 frames) hits `target`.
// Bisection on a fixed random stream; the result is accepted when the
// achieved std is within 5% of the target.
inline double calibrate_sigma(double target, SynthConfig config) {
  if (target == 0.0) return 0.0;
  if (!(target > 0.0 && target < 0.5)) throw ValidationError("target std must lie in (0, 0.5)");
  config.validate();
  config.n_attack = 0;
  config.n_live = std::max<std::size_t>({config.n_live, 1, (20000 + config.length - 1) / config.length});

  auto achieved = [&](double sigma) {
    config.sigma = sigma;
    return live_probability_std(generate(config));
  };
  auto accept = [&](double sigma) {
    const double got = achieved(sigma);
    if (std::abs(got - target) > 0.05 * target) {
      throw ValidationError("target probability std " + std::to_string(target) +
                            " is unattainable (closest: " + std::to_string(got) + ")");
    }
    return sigma;
  };

  if (achieved(0.0) >= target) return accept(0.0);
  double lo = 0.0;
  double hi = 1.0;
  while (achieved(hi) < target) {
    lo = hi;
    hi *= 2.0;
    if (hi > 64.0) return accept(hi);
  }
  for (int iter = 0; iter < 60 && hi - lo > 1e-10; ++iter) {
    const double mid = 0.5 * (lo + hi);
    (achieved(mid) < target ? lo : hi) = mid;
  }
  const double pick = std::abs(achieved(lo) - target) <= std::abs(achieved(hi) - target) ? lo : hi;
  return accept(pick);
}

}  // namespace tempco

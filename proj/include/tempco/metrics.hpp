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

// Presentation-attack-detection metrics and segment-level evaluation.
//
// Positives are live samples. Decision rule: live iff score >= threshold.
//   APCER  fraction of attack samples accepted as live (false positive rate)
//   BPCER  fraction of live samples rejected (false negative rate)
//   ACER   (APCER + BPCER) / 2
//
// Segment-level evaluation cuts every tracklet into consecutive chunks of K
// frames (the last chunk may be shorter), filters each chunk from a fresh
// state, and scores the chunk by the smoothed probability at its last frame.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempco/error.hpp"
#include "tempco/filter.hpp"
#include "tempco/parallel.hpp"
#include "tempco/stream.hpp"

namespace tempco {

struct ScoredSample {
  double score = 0.0;  // liveness probability in [0, 1]
  ClassLabel label;
  std::string tracklet_id;
  std::size_t t = 0;
};

// FPR budgets reported by default, strictest first.
inline constexpr std::array<double, 5> kDefaultFprTargets = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};

// Segment lengths evaluated by default.
inline constexpr std::array<std::size_t, 6> kDefaultSegmentLengths = {1, 3, 5, 10, 15, 30};

struct Confusion {
  double threshold = 0.5;
  double apcer = 0.0;
  double bpcer = 0.0;
  double acer = 0.0;
  // ISO-style aggregate: worst per-type APCER.
  double apcer_max_over_types = 0.0;
  std::map<std::string, double> apcer_by_type;
  std::size_t n_live = 0;
  std::size_t n_attack = 0;
};

namespace detail {

inline void validate_samples(std::span<const ScoredSample> samples) {
  std::size_t live = 0;
  for (const auto& s : samples) {
    if (!std::isfinite(s.score) || s.score < 0.0 || s.score > 1.0) {
      throw ValidationError("tracklet '" + s.tracklet_id + "' frame " + std::to_string(s.t) +
                            ": score must lie in [0, 1]");
    }
    if (s.label.is_live()) ++live;
  }
  if (live == 0) throw UndefinedMetricError("no live samples; metric is undefined");
  if (live == samples.size()) throw UndefinedMetricError("no attack samples; metric is undefined");
}

}  // namespace detail

// Thresholds above every score reject everything; any finite value is accepted.
inline Confusion confusion_at(std::span<const ScoredSample> samples, double threshold) {
  detail::validate_samples(samples);
  if (!std::isfinite(threshold)) throw ValidationError("threshold must be finite");

  Confusion out;
  out.threshold = threshold;
  std::size_t accepted_attacks = 0;
  std::size_t rejected_lives = 0;
  std::map<std::string, std::pair<std::size_t, std::size_t>> per_type;  // accepted, total
  for (const auto& s : samples) {
    const bool accepted = s.score >= threshold;
    if (s.label.is_live()) {
      ++out.n_live;
      if (!accepted) ++rejected_lives;
    } else {
      ++out.n_attack;
      auto& counts = per_type[s.label.attack_type()];
      ++counts.second;
      if (accepted) {
        ++accepted_attacks;
        ++counts.first;
      }
    }
  }
  out.apcer = static_cast<double>(accepted_attacks) / static_cast<double>(out.n_attack);
  out.bpcer = static_cast<double>(rejected_lives) / static_cast<double>(out.n_live);
  out.acer = (out.apcer + out.bpcer) / 2.0;
  for (const auto& [type, counts] : per_type) {
    const double rate = static_cast<double>(counts.first) / static_cast<double>(counts.second);
    out.apcer_by_type[type] = rate;
    out.apcer_max_over_types = std::max(out.apcer_max_over_types, rate);
  }
  return out;
}

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double fnr = 0.0;
};

struct FnrAtFpr {
  double fpr_target = 0.0;
  double fnr = 1.0;
  double threshold = 0.0;
  // True when no sweep threshold meets the budget and the reject-all
  // sentinel was used.
  bool unachievable = false;
};

struct RocResult {
  // Increasing threshold: a sentinel below the minimum score, every distinct
  // score, and a sentinel above the maximum.
  std::vector<RocPoint> points;
  double eer = 0.0;
  double eer_threshold = 0.0;
  std::vector<FnrAtFpr> fnr_at_fpr;
};

namespace detail {

struct EerCrossing {
  double rate = 0.0;
  double threshold = 0.0;
};

// First sign change of (FPR - FNR) along the sweep. Between two points the
// rates are interpolated linearly; a run of points with FPR == FNR takes the
// midpoint of the threshold interval that yields that operating point.
inline EerCrossing eer_crossing(std::span<const RocPoint> points) {
  for (std::size_t k = 0; k + 1 < points.size(); ++k) {
    const double d0 = points[k].fpr - points[k].fnr;
    const double d1 = points[k + 1].fpr - points[k + 1].fnr;
    if (d0 <= 0.0) {
      // Only reachable at k == 0 if the lower sentinel already balances.
      return {points[k].fpr, points[k].threshold};
    }
    if (d1 > 0.0) continue;
    if (d1 == 0.0) {
      std::size_t last = k + 1;
      while (last + 1 < points.size() && points[last + 1].fpr == points[last + 1].fnr) ++last;
      return {points[k + 1].fpr, 0.5 * (points[k].threshold + points[last].threshold)};
    }
    const double alpha = d0 / (d0 - d1);
    const double rate = points[k].fpr + alpha * (points[k + 1].fpr - points[k].fpr);
    const double thr = points[k].threshold + alpha * (points[k + 1].threshold - points[k].threshold);
    return {rate, thr};
  }
  return {points.back().fpr, points.back().threshold};
}

}  // namespace detail

inline RocResult roc_and_eer(std::span<const ScoredSample> samples,
                             std::span<const double> fpr_targets = kDefaultFprTargets) {
  detail::validate_samples(samples);
  std::vector<double> live;
  std::vector<double> attack;
  for (const auto& s : samples) (s.label.is_live() ? live : attack).push_back(s.score);
  std::sort(live.begin(), live.end());
  std::sort(attack.begin(), attack.end());

  std::vector<double> thresholds;
  thresholds.reserve(samples.size() + 2);
  std::merge(live.begin(), live.end(), attack.begin(), attack.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  const double lo = std::nextafter(thresholds.front(), -std::numeric_limits<double>::infinity());
  const double hi = std::nextafter(thresholds.back(), std::numeric_limits<double>::infinity());
  thresholds.insert(thresholds.begin(), lo);
  thresholds.push_back(hi);

  const double n_live = static_cast<double>(live.size());
  const double n_attack = static_cast<double>(attack.size());
  RocResult out;
  out.points.reserve(thresholds.size());
  for (double thr : thresholds) {
    const auto attacks_below = std::lower_bound(attack.begin(), attack.end(), thr) - attack.begin();
    const auto lives_below = std::lower_bound(live.begin(), live.end(), thr) - live.begin();
    out.points.push_back(RocPoint{thr, (n_attack - static_cast<double>(attacks_below)) / n_attack,
                                  static_cast<double>(lives_below) / n_live});
  }

  const auto crossing = detail::eer_crossing(out.points);
  out.eer = crossing.rate;
  out.eer_threshold = crossing.threshold;

  for (double target : fpr_targets) {
    FnrAtFpr entry{target, 1.0, out.points.back().threshold, true};
    // Least strict threshold that still meets the budget.
    for (std::size_t k = 0; k + 1 < out.points.size(); ++k) {
      if (out.points[k].fpr <= target) {
        entry = FnrAtFpr{target, out.points[k].fnr, out.points[k].threshold, false};
        break;
      }
    }
    out.fnr_at_fpr.push_back(entry);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Threshold calibration.

struct ThresholdPolicy {
  enum class Kind { EerPoint, FprTarget, Fixed };
  Kind kind = Kind::EerPoint;
  double value = 0.0;

  static ThresholdPolicy eer_point() { return {Kind::EerPoint, 0.0}; }
  static ThresholdPolicy fpr_target(double f) { return {Kind::FprTarget, f}; }
  static ThresholdPolicy fixed(double v) { return {Kind::Fixed, v}; }

  std::string to_string() const {
    switch (kind) {
      case Kind::EerPoint: return "eer";
      case Kind::FprTarget: return "fpr:" + nlohmann::json(value).dump();
      case Kind::Fixed: return "fixed:" + nlohmann::json(value).dump();
    }
    return "?";
  }
};

// Accepts "eer", "fpr:F" and "fixed:V".
inline ThresholdPolicy parse_threshold_policy(std::string_view text) {
  if (text == "eer") return ThresholdPolicy::eer_point();
  auto number = [&](std::string_view body) {
    double v = 0.0;
    const auto* end = body.data() + body.size();
    const auto [ptr, ec] = std::from_chars(body.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v)) {
      throw ValidationError("bad threshold policy '" + std::string(text) + "'");
    }
    return v;
  };
  if (text.starts_with("fpr:")) {
    const double f = number(text.substr(4));
    if (f < 0.0 || f > 1.0) throw ValidationError("FPR target must lie in [0, 1]");
    return ThresholdPolicy::fpr_target(f);
  }
  if (text.starts_with("fixed:")) {
    const double v = number(text.substr(6));
    if (v < 0.0 || v > 1.0) throw ValidationError("fixed threshold must lie in [0, 1]");
    return ThresholdPolicy::fixed(v);
  }
  throw ValidationError("bad threshold policy '" + std::string(text) +
                        "' (expected eer, fpr:F or fixed:V)");
}

struct Calibration {
  double threshold = 0.5;
  bool unachievable = false;
};

inline Calibration calibrate_threshold(std::span<const ScoredSample> samples,
                                       const ThresholdPolicy& policy) {
  switch (policy.kind) {
    case ThresholdPolicy::Kind::Fixed:
      return {policy.value, false};
    case ThresholdPolicy::Kind::EerPoint:
      return {roc_and_eer(samples, {}).eer_threshold, false};
    case ThresholdPolicy::Kind::FprTarget: {
      const std::array<double, 1> target{policy.value};
      const auto roc = roc_and_eer(samples, target);
      return {roc.fnr_at_fpr.front().threshold, roc.fnr_at_fpr.front().unachievable};
    }
  }
  throw ValidationError("unknown threshold policy");
}

// ---------------------------------------------------------------------------
// Reports.

struct EvalReport {
  double threshold = 0.5;
  bool threshold_unachievable = false;
  double apcer = 0.0;
  double bpcer = 0.0;
  double acer = 0.0;
  double apcer_max_over_types = 0.0;
  double eer = 0.0;
  std::vector<FnrAtFpr> fnr_at_fpr;
  std::map<std::string, double> apcer_by_type;
  std::size_t n_live = 0;
  std::size_t n_attack = 0;
};

inline EvalReport evaluate(std::span<const ScoredSample> samples, const Calibration& calibration) {
  const auto confusion = confusion_at(samples, calibration.threshold);
  const auto roc = roc_and_eer(samples);
  EvalReport out;
  out.threshold = calibration.threshold;
  out.threshold_unachievable = calibration.unachievable;
  out.apcer = confusion.apcer;
  out.bpcer = confusion.bpcer;
  out.acer = confusion.acer;
  out.apcer_max_over_types = confusion.apcer_max_over_types;
  out.apcer_by_type = confusion.apcer_by_type;
  out.n_live = confusion.n_live;
  out.n_attack = confusion.n_attack;
  out.eer = roc.eer;
  out.fnr_at_fpr = roc.fnr_at_fpr;
  return out;
}

inline EvalReport evaluate(std::span<const ScoredSample> samples, double threshold) {
  return evaluate(samples, Calibration{threshold, false});
}

inline EvalReport evaluate(std::span<const ScoredSample> samples, const ThresholdPolicy& policy) {
  return evaluate(samples, calibrate_threshold(samples, policy));
}

struct SegmentReport {
  std::size_t segment_length = 1;
  std::size_t n_segments = 0;
  // Absent when the metrics are undefined at this K; `error` says why.
  std::optional<EvalReport> report;
  std::string error;
};

// ---------------------------------------------------------------------------
// Segment protocol.

// Consecutive non-overlapping chunks of length K; the remainder chunk is kept.
// Chunk k has id "<parent>#<k>" and frame indices re-based to 0.
inline std::vector<Tracklet> segment_split(const Tracklet& tracklet, std::size_t k) {
  if (k < 1) throw ValidationError("segment length must be >= 1");
  std::vector<Tracklet> out;
  const auto frames = tracklet.frames();
  for (std::size_t start = 0, ordinal = 0; start < frames.size(); start += k, ++ordinal) {
    const std::size_t end = std::min(frames.size(), start + k);
    std::string id = tracklet.id() + "#" + std::to_string(ordinal);
    std::vector<LogitFrame> chunk;
    chunk.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      chunk.push_back(LogitFrame{id, i - start, frames[i].q, frames[i].embedding});
    }
    out.emplace_back(std::move(id), tracklet.label(), std::move(chunk));
  }
  return out;
}

// One sample per frame, scored by the given smoothed probabilities.
inline std::vector<ScoredSample> frame_samples(std::span<const Tracklet> tracklets,
                                               std::span<const SmoothedTrack> smoothed) {
  if (smoothed.size() != tracklets.size()) throw ValidationError("smoothed output is misaligned");
  std::vector<ScoredSample> out;
  for (std::size_t k = 0; k < tracklets.size(); ++k) {
    if (smoothed[k].size() != tracklets[k].size()) {
      throw ValidationError("tracklet '" + tracklets[k].id() + "': smoothed output is misaligned");
    }
    for (const auto& s : smoothed[k]) {
      out.push_back(ScoredSample{s.p, tracklets[k].label(), tracklets[k].id(), s.t});
    }
  }
  return out;
}

// One sample per length-K segment: the filtered probability at the segment's
// last frame, with the filter reset at every segment boundary.
inline std::vector<ScoredSample> segment_samples(std::span<const Tracklet> tracklets,
                                                 const FilterConfig& config, std::size_t k,
                                                 std::size_t threads = thread_budget()) {
  if (k < 1) throw ValidationError("segment length must be >= 1");
  config.validate();
  std::vector<std::vector<ScoredSample>> per_tracklet(tracklets.size());
  parallel_for(
      tracklets.size(),
      [&](std::size_t i) {
        for (const auto& segment : segment_split(tracklets[i], k)) {
          const auto smoothed = run_filter(segment, config);
          per_tracklet[i].push_back(ScoredSample{smoothed.back().p, segment.label(), segment.id(),
                                                 segment.size() - 1});
        }
      },
      threads);
  std::vector<ScoredSample> out;
  for (auto& part : per_tracklet) {
    out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return out;
}

namespace detail {

template <typename ThresholdSource>
std::vector<SegmentReport> evaluate_segments_impl(std::span<const Tracklet> tracklets,
                                                  const FilterConfig& config,
                                                  std::span<const std::size_t> lengths,
                                                  const ThresholdSource& threshold,
                                                  std::size_t threads) {
  if (lengths.empty()) throw ValidationError("no segment lengths requested");
  std::vector<SegmentReport> out;
  for (std::size_t k : lengths) {
    SegmentReport r;
    r.segment_length = k;
    const auto samples = segment_samples(tracklets, config, k, threads);
    r.n_segments = samples.size();
    try {
      r.report = evaluate(samples, threshold);
    } catch (const UndefinedMetricError& e) {
      r.error = e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace detail

inline std::vector<SegmentReport> evaluate_segments(std::span<const Tracklet> tracklets,
                                                    const FilterConfig& config,
                                                    std::span<const std::size_t> lengths,
                                                    double threshold,
                                                    std::size_t threads = thread_budget()) {
  return detail::evaluate_segments_impl(tracklets, config, lengths, threshold, threads);
}

// As above, calibrating the threshold separately for every K.
inline std::vector<SegmentReport> evaluate_segments(std::span<const Tracklet> tracklets,
                                                    const FilterConfig& config,
                                                    std::span<const std::size_t> lengths,
                                                    const ThresholdPolicy& policy,
                                                    std::size_t threads = thread_budget()) {
  return detail::evaluate_segments_impl(tracklets, config, lengths, policy, threads);
}

// ---------------------------------------------------------------------------
// Serialization.

// Shortest decimal text that round-trips to the same double.
inline std::string format_number(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw ValidationError("number formatting failed");
  return std::string(buf.data(), ptr);
}

inline std::string fpr_key(double target) { return format_number(target); }

inline nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["threshold"] = r.threshold;
  j["threshold_unachievable"] = r.threshold_unachievable;
  j["apcer"] = r.apcer;
  j["bpcer"] = r.bpcer;
  j["acer"] = r.acer;
  j["apcer_max_over_types"] = r.apcer_max_over_types;
  j["eer"] = r.eer;
  nlohmann::ordered_json fnr = nlohmann::ordered_json::object();
  for (const auto& e : r.fnr_at_fpr) fnr[fpr_key(e.fpr_target)] = e.fnr;
  j["fnr_at_fpr"] = fnr;
  nlohmann::ordered_json by_type = nlohmann::ordered_json::object();
  for (const auto& [type, rate] : r.apcer_by_type) by_type[type] = rate;
  j["apcer_by_type"] = by_type;
  j["n_live"] = r.n_live;
  j["n_attack"] = r.n_attack;
  return j;
}

inline nlohmann::ordered_json to_json(const SegmentReport& r) {
  nlohmann::ordered_json j;
  j["K"] = r.segment_length;
  j["n_segments"] = r.n_segments;
  if (r.report) {
    j["report"] = to_json(*r.report);
  } else {
    j["report"] = nullptr;
    j["error"] = r.error;
  }
  return j;
}

// Header: K,threshold,apcer,bpcer,acer,eer,fnr@fpr=<target>... with FPR
// columns strictest first. The frame-level row (when given) has K = "frame";
// rows with undefined metrics leave the numeric cells empty.
inline std::string to_csv(const EvalReport* frame_level, std::span<const SegmentReport> segments,
                          std::span<const double> fpr_targets = kDefaultFprTargets) {
  std::vector<double> targets(fpr_targets.begin(), fpr_targets.end());
  std::sort(targets.begin(), targets.end());
  std::string out = "K,threshold,apcer,bpcer,acer,eer";
  for (double f : targets) out += ",fnr@fpr=" + fpr_key(f);
  out += '\n';

  auto row = [&](const std::string& k, const EvalReport* r) {
    out += k;
    if (!r) {
      out += std::string(5 + targets.size(), ',');
      out += '\n';
      return;
    }
    for (double v : {r->threshold, r->apcer, r->bpcer, r->acer, r->eer}) out += "," + format_number(v);
    for (double f : targets) {
      const auto it = std::find_if(r->fnr_at_fpr.begin(), r->fnr_at_fpr.end(),
                                   [&](const FnrAtFpr& e) { return e.fpr_target == f; });
      out += ",";
      if (it != r->fnr_at_fpr.end()) out += format_number(it->fnr);
    }
    out += '\n';
  };
  if (frame_level) row("frame", frame_level);
  for (const auto& s : segments) row(std::to_string(s.segment_length), s.report ? &*s.report : nullptr);
  return out;
}

}  // namespace tempco

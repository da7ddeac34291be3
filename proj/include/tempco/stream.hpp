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

// Score-stream domain types and the JSONL frame format.
//
// A frame line looks like
//   {"tracklet_id":"a","t":0,"q":1.25,"label":"attack","attack_type":"print",
//    "embedding":[...],"mu_hat":1.25,"p":0.777,"var_hat":1.0}
// where attack_type is present iff label is "attack", embedding is optional
// and the three smoothed fields are either all present or all absent.
//
// Logit sign convention: larger q means more likely live.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempco/error.hpp"

namespace tempco {

// Numerically stable logistic function.
inline double logistic(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

enum class LabelKind { Live, Attack };

class ClassLabel {
 public:
  ClassLabel() = default;

  static ClassLabel live() { return ClassLabel(LabelKind::Live, {}); }

  static ClassLabel attack(std::string attack_type) {
    if (attack_type.empty()) {
      throw ValidationError("attack label requires a non-empty attack_type");
    }
    return ClassLabel(LabelKind::Attack, std::move(attack_type));
  }

  LabelKind kind() const { return kind_; }
  bool is_live() const { return kind_ == LabelKind::Live; }
  bool is_attack() const { return kind_ == LabelKind::Attack; }
  // Empty for live labels.
  const std::string& attack_type() const { return attack_type_; }

  friend bool operator==(const ClassLabel&, const ClassLabel&) = default;

 private:
  ClassLabel(LabelKind kind, std::string attack_type)
      : kind_(kind), attack_type_(std::move(attack_type)) {}

  LabelKind kind_ = LabelKind::Live;
  std::string attack_type_;
};

struct LogitFrame {
  std::string tracklet_id;
  std::size_t t = 0;
  double q = 0.0;
  // Empty when the frame carries no embedding.
  std::vector<double> embedding;

  friend bool operator==(const LogitFrame&, const LogitFrame&) = default;
};

// An ordered, gapless run of frames for one tracked identity. Immutable once
// constructed; the constructor enforces every invariant.
class Tracklet {
 public:
  Tracklet(std::string id, ClassLabel label, std::vector<LogitFrame> frames)
      : id_(std::move(id)), label_(std::move(label)), frames_(std::move(frames)) {
    validate();
  }

  // Builds frames t = 0..n-1 from a bare logit sequence.
  static Tracklet from_logits(std::string id, ClassLabel label,
                              std::span<const double> logits) {
    std::vector<LogitFrame> frames;
    frames.reserve(logits.size());
    for (std::size_t t = 0; t < logits.size(); ++t) {
      frames.push_back(LogitFrame{id, t, logits[t], {}});
    }
    return Tracklet(std::move(id), std::move(label), std::move(frames));
  }

  const std::string& id() const { return id_; }
  const ClassLabel& label() const { return label_; }
  std::span<const LogitFrame> frames() const { return frames_; }
  std::size_t size() const { return frames_.size(); }

  std::vector<double> logits() const {
    std::vector<double> out;
    out.reserve(frames_.size());
    for (const auto& f : frames_) out.push_back(f.q);
    return out;
  }

  // 0 when frames carry no embeddings.
  std::size_t embedding_dim() const { return frames_.front().embedding.size(); }

  friend bool operator==(const Tracklet&, const Tracklet&) = default;

 private:
  void validate() const {
    if (frames_.empty()) {
      throw ValidationError("tracklet '" + id_ + "' is empty");
    }
    const std::size_t dim = frames_.front().embedding.size();
    for (std::size_t i = 0; i < frames_.size(); ++i) {
      const auto& f = frames_[i];
      const std::string where = "tracklet '" + id_ + "' frame " + std::to_string(i);
      if (f.tracklet_id != id_) {
        throw ValidationError(where + ": frame belongs to tracklet '" + f.tracklet_id + "'");
      }
      if (f.t != i) {
        throw ValidationError(where + ": expected t=" + std::to_string(i) + ", found t=" +
                              std::to_string(f.t));
      }
      if (!std::isfinite(f.q)) {
        throw ValidationError(where + ": logit is not finite");
      }
      if (f.embedding.size() != dim) {
        throw ValidationError(where + ": embedding dimension " +
                              std::to_string(f.embedding.size()) + " differs from " +
                              std::to_string(dim));
      }
      for (double v : f.embedding) {
        if (!std::isfinite(v)) throw ValidationError(where + ": embedding is not finite");
      }
    }
  }

  std::string id_;
  ClassLabel label_;
  std::vector<LogitFrame> frames_;
};

// Filter output for one frame. p == logistic(mu_hat); var_hat is a variance
// in squared-logit units.
struct SmoothedFrame {
  std::size_t t = 0;
  double q = 0.0;
  double mu_hat = 0.0;
  double p = 0.5;
  double var_hat = 0.0;

  friend bool operator==(const SmoothedFrame&, const SmoothedFrame&) = default;
};

using SmoothedTrack = std::vector<SmoothedFrame>;

// Result of reading a frame file: the tracklets plus, when every line carries
// mu_hat/p/var_hat, the aligned smoothed values.
struct FrameStream {
  std::vector<Tracklet> tracklets;
  std::optional<std::vector<SmoothedTrack>> smoothed;
};

namespace detail {

inline std::string line_prefix(std::size_t line) { return "line " + std::to_string(line) + ": "; }

inline double finite_number(const nlohmann::json& v, const char* key, std::size_t line) {
  if (!v.is_number()) {
    throw ValidationError(line_prefix(line) + "'" + key + "' must be a number");
  }
  const double x = v.get<double>();
  if (!std::isfinite(x)) {
    throw ValidationError(line_prefix(line) + "'" + key + "' is not finite");
  }
  return x;
}

}  // namespace detail

inline FrameStream read_stream(std::istream& in) {
  using nlohmann::json;

  struct PendingFrame {
    LogitFrame frame;
    std::optional<SmoothedFrame> smoothed;
    std::size_t line = 0;
  };
  struct PendingTracklet {
    std::string id;
    ClassLabel label;
    std::size_t first_line = 0;
    std::vector<PendingFrame> frames;
  };

  std::vector<PendingTracklet> groups;
  std::unordered_map<std::string, std::size_t> index;
  std::optional<bool> smoothed_mode;

  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto prefix = detail::line_prefix(line);

    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ValidationError(prefix + "malformed JSON: " + e.what());
    }
    if (!obj.is_object()) throw ValidationError(prefix + "expected a JSON object");

    for (const auto& [key, _] : obj.items()) {
      if (key != "tracklet_id" && key != "t" && key != "q" && key != "label" &&
          key != "attack_type" && key != "embedding" && key != "mu_hat" && key != "p" &&
          key != "var_hat") {
        throw ValidationError(prefix + "unknown key '" + key + "'");
      }
    }
    for (const char* key : {"tracklet_id", "t", "q", "label"}) {
      if (!obj.contains(key)) throw ValidationError(prefix + "missing key '" + key + "'");
    }

    if (!obj["tracklet_id"].is_string()) {
      throw ValidationError(prefix + "'tracklet_id' must be a string");
    }
    LogitFrame frame;
    frame.tracklet_id = obj["tracklet_id"].get<std::string>();
    if (frame.tracklet_id.empty()) throw ValidationError(prefix + "'tracklet_id' is empty");

    const auto& t = obj["t"];
    if (!t.is_number_integer() || (t.is_number_integer() && !t.is_number_unsigned() &&
                                   t.get<std::int64_t>() < 0)) {
      throw ValidationError(prefix + "'t' must be a non-negative integer");
    }
    frame.t = t.get<std::size_t>();
    frame.q = detail::finite_number(obj["q"], "q", line);

    const auto& label_json = obj["label"];
    if (!label_json.is_string()) throw ValidationError(prefix + "'label' must be a string");
    const auto label_text = label_json.get<std::string>();
    ClassLabel label;
    if (label_text == "live") {
      if (obj.contains("attack_type")) {
        throw ValidationError(prefix + "'attack_type' is only allowed on attack frames");
      }
      label = ClassLabel::live();
    } else if (label_text == "attack") {
      if (!obj.contains("attack_type") || !obj["attack_type"].is_string() ||
          obj["attack_type"].get<std::string>().empty()) {
        throw ValidationError(prefix + "attack frames need a non-empty string 'attack_type'");
      }
      label = ClassLabel::attack(obj["attack_type"].get<std::string>());
    } else {
      throw ValidationError(prefix + "'label' must be \"live\" or \"attack\"");
    }

    if (obj.contains("embedding")) {
      const auto& emb = obj["embedding"];
      if (!emb.is_array() || emb.empty()) {
        throw ValidationError(prefix + "'embedding' must be a non-empty array");
      }
      frame.embedding.reserve(emb.size());
      for (const auto& v : emb) frame.embedding.push_back(detail::finite_number(v, "embedding", line));
    }

    const int n_smoothed = static_cast<int>(obj.contains("mu_hat")) +
                           static_cast<int>(obj.contains("p")) +
                           static_cast<int>(obj.contains("var_hat"));
    if (n_smoothed != 0 && n_smoothed != 3) {
      throw ValidationError(prefix + "'mu_hat', 'p' and 'var_hat' must appear together");
    }
    const bool has_smoothed = n_smoothed == 3;
    if (smoothed_mode && *smoothed_mode != has_smoothed) {
      throw ValidationError(prefix + "smoothed fields present on some lines but not others");
    }
    smoothed_mode = has_smoothed;
    std::optional<SmoothedFrame> smoothed;
    if (has_smoothed) {
      SmoothedFrame s;
      s.t = frame.t;
      s.q = frame.q;
      s.mu_hat = detail::finite_number(obj["mu_hat"], "mu_hat", line);
      s.p = detail::finite_number(obj["p"], "p", line);
      s.var_hat = detail::finite_number(obj["var_hat"], "var_hat", line);
      if (s.var_hat < 0.0) throw ValidationError(prefix + "'var_hat' is negative");
      if (s.p < 0.0 || s.p > 1.0 || std::abs(s.p - logistic(s.mu_hat)) > 1e-9) {
        throw ValidationError(prefix + "'p' does not equal logistic(mu_hat)");
      }
      smoothed = s;
    }

    auto [it, inserted] = index.try_emplace(frame.tracklet_id, groups.size());
    if (inserted) {
      groups.push_back(PendingTracklet{frame.tracklet_id, label, line, {}});
    }
    auto& group = groups[it->second];
    if (group.label != label) {
      throw ValidationError(prefix + "label of tracklet '" + group.id +
                            "' differs from its first frame (line " +
                            std::to_string(group.first_line) + ")");
    }
    if (!group.frames.empty() &&
        group.frames.front().frame.embedding.size() != frame.embedding.size()) {
      throw ValidationError(prefix + "embedding dimension of tracklet '" + group.id +
                            "' frame t=" + std::to_string(frame.t) + " is " +
                            std::to_string(frame.embedding.size()) + ", expected " +
                            std::to_string(group.frames.front().frame.embedding.size()));
    }
    group.frames.push_back(PendingFrame{std::move(frame), smoothed, line});
  }
  if (in.bad()) throw IoError("read failure after line " + std::to_string(line));

  FrameStream out;
  out.tracklets.reserve(groups.size());
  if (smoothed_mode.value_or(false)) out.smoothed.emplace();

  for (auto& group : groups) {
    std::stable_sort(group.frames.begin(), group.frames.end(),
                     [](const PendingFrame& a, const PendingFrame& b) {
                       return a.frame.t < b.frame.t;
                     });
    std::vector<LogitFrame> frames;
    SmoothedTrack smoothed;
    frames.reserve(group.frames.size());
    for (std::size_t i = 0; i < group.frames.size(); ++i) {
      const auto& pending = group.frames[i];
      if (pending.frame.t < i) {
        throw ValidationError(detail::line_prefix(pending.line) + "duplicate frame (tracklet '" +
                              group.id + "', t=" + std::to_string(pending.frame.t) + ")");
      }
      if (pending.frame.t > i) {
        throw ValidationError("tracklet '" + group.id + "': gap at frame index " +
                              std::to_string(i) + " (next frame has t=" +
                              std::to_string(pending.frame.t) + ", line " +
                              std::to_string(pending.line) + ")");
      }
      frames.push_back(pending.frame);
      if (pending.smoothed) smoothed.push_back(*pending.smoothed);
    }
    out.tracklets.emplace_back(group.id, group.label, std::move(frames));
    if (out.smoothed) out.smoothed->push_back(std::move(smoothed));
  }
  return out;
}

inline std::vector<Tracklet> parse_stream(std::istream& in) { return read_stream(in).tracklets; }

inline std::vector<Tracklet> parse_stream(const std::string& text) {
  std::istringstream in(text);
  return parse_stream(in);
}

// Writes one JSON object per frame, tracklets in order. When `smoothed` is
// given it must align one-to-one with the frames; alignment is checked before
// anything is written.
inline void write_stream(std::ostream& out, std::span<const Tracklet> tracklets,
                         const std::vector<SmoothedTrack>* smoothed = nullptr) {
  if (smoothed) {
    if (smoothed->size() != tracklets.size()) {
      throw ValidationError("smoothed output has " + std::to_string(smoothed->size()) +
                            " tracks for " + std::to_string(tracklets.size()) + " tracklets");
    }
    for (std::size_t k = 0; k < tracklets.size(); ++k) {
      const auto& track = (*smoothed)[k];
      const auto frames = tracklets[k].frames();
      if (track.size() != frames.size()) {
        throw ValidationError("tracklet '" + tracklets[k].id() + "': " +
                              std::to_string(track.size()) + " smoothed frames for " +
                              std::to_string(frames.size()) + " input frames");
      }
      for (std::size_t i = 0; i < frames.size(); ++i) {
        if (track[i].t != frames[i].t || track[i].q != frames[i].q) {
          throw ValidationError("tracklet '" + tracklets[k].id() + "' frame " +
                                std::to_string(i) + ": smoothed frame is misaligned");
        }
      }
    }
  }

  for (std::size_t k = 0; k < tracklets.size(); ++k) {
    const auto& tracklet = tracklets[k];
    const auto frames = tracklet.frames();
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto& f = frames[i];
      nlohmann::ordered_json obj;
      obj["tracklet_id"] = f.tracklet_id;
      obj["t"] = f.t;
      obj["q"] = f.q;
      obj["label"] = tracklet.label().is_live() ? "live" : "attack";
      if (tracklet.label().is_attack()) obj["attack_type"] = tracklet.label().attack_type();
      if (!f.embedding.empty()) obj["embedding"] = f.embedding;
      if (smoothed) {
        const auto& s = (*smoothed)[k][i];
        obj["mu_hat"] = s.mu_hat;
        obj["p"] = s.p;
        obj["var_hat"] = s.var_hat;
      }
      out << obj.dump() << '\n';
    }
  }
}

inline std::string serialize_stream(std::span<const Tracklet> tracklets,
                                    const std::vector<SmoothedTrack>* smoothed = nullptr) {
  std::ostringstream out;
  write_stream(out, tracklets, smoothed);
  return out.str();
}

}  // namespace tempco

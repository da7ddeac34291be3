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

// Training losses on embedding batches, with analytic gradients.
//
//   classification     -(1/m) sum_i log softmax(logits_i)[y_i]
//   temporal           (1/m) sum_i max_{j != i, video(j) = video(i)} |x_i - x_j|^2
//   class consistency  (1/m) sum_i max_{j != i, class(j) = class(i)} |x_i - x_j|^2
//   combined           classification + beta * temporal + gamma * class consistency
//
// Anchors without a partner contribute zero. The max is subdifferentiable;
// ties resolve to the smallest partner index. PairReduction::PerGroup is the
// alternative reading with one max per group instead of one per anchor.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "tempco/error.hpp"

namespace tempco {

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    const std::size_t cols = rows.empty() ? 0 : rows.front().size();
    Matrix m(rows.size(), cols);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != cols) throw ValidationError("ragged matrix rows");
      std::copy(rows[i].begin(), rows[i].end(), m.row(i).begin());
    }
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

enum class PairReduction { PerAnchor, PerGroup };

struct EmbeddingBatch {
  Matrix x;  // m x d
  std::vector<std::string> video_id;
  std::vector<int> class_id;
  std::size_t num_classes = 2;
  std::optional<Matrix> logits;  // m x num_classes

  std::size_t size() const { return x.rows(); }
  std::size_t dim() const { return x.cols(); }

  void validate() const {
    const std::size_t m = x.rows();
    if (m < 1) throw ValidationError("batch is empty");
    if (x.cols() < 1) throw ValidationError("embedding dimension must be >= 1");
    if (num_classes < 2) throw ValidationError("batch needs at least 2 classes");
    if (video_id.size() != m || class_id.size() != m) {
      throw ValidationError("video_id/class_id length does not match the batch size");
    }
    for (std::size_t i = 0; i < m; ++i) {
      if (class_id[i] < 0 || static_cast<std::size_t>(class_id[i]) >= num_classes) {
        throw ValidationError("row " + std::to_string(i) + ": class_id " +
                              std::to_string(class_id[i]) + " outside [0, " +
                              std::to_string(num_classes) + ")");
      }
    }
    for (double v : x.values()) {
      if (!std::isfinite(v)) throw ValidationError("embedding is not finite");
    }
    if (logits) {
      if (logits->rows() != m || logits->cols() != num_classes) {
        throw ValidationError("logits must be m x num_classes");
      }
      for (double v : logits->values()) {
        if (!std::isfinite(v)) throw ValidationError("logit is not finite");
      }
    }
  }
};

struct LossComponents {
  double classification = 0.0;
  double temporal = 0.0;
  double class_consistency = 0.0;
};

struct LossResult {
  double value = 0.0;
  Matrix grad_x;                     // m x d; zero for the classification loss
  std::optional<Matrix> grad_logits; // present when the classification loss ran
  LossComponents components;
};

struct LossWeights {
  double beta = 1.0;
  double gamma = 0.5;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    s += diff * diff;
  }
  return s;
}

// Dense group index per row, in first-appearance order.
template <typename Key>
std::vector<std::size_t> group_index(const std::vector<Key>& keys) {
  std::map<Key, std::size_t> seen;
  std::vector<std::size_t> out;
  out.reserve(keys.size());
  for (const auto& k : keys) out.push_back(seen.try_emplace(k, seen.size()).first->second);
  return out;
}

inline void add_pair_gradient(Matrix& grad, const Matrix& x, std::size_t i, std::size_t j,
                              double scale) {
  auto gi = grad.row(i);
  auto gj = grad.row(j);
  const auto xi = x.row(i);
  const auto xj = x.row(j);
  for (std::size_t k = 0; k < xi.size(); ++k) {
    const double g = scale * (xi[k] - xj[k]);
    gi[k] += g;
    gj[k] -= g;
  }
}

inline LossResult max_pair_loss(const Matrix& x, const std::vector<std::size_t>& group,
                                PairReduction reduction) {
  const std::size_t m = x.rows();
  const double inv_m = 1.0 / static_cast<double>(m);
  LossResult out;
  out.grad_x = Matrix(m, x.cols());

  if (reduction == PairReduction::PerAnchor) {
    for (std::size_t i = 0; i < m; ++i) {
      std::optional<std::size_t> best;
      double best_d = 0.0;
      for (std::size_t j = 0; j < m; ++j) {
        if (j == i || group[j] != group[i]) continue;
        const double d = squared_distance(x.row(i), x.row(j));
        if (!best || d > best_d) {
          best = j;
          best_d = d;
        }
      }
      if (!best) continue;
      out.value += best_d;
      add_pair_gradient(out.grad_x, x, i, *best, 2.0 * inv_m);
    }
  } else {
    const std::size_t n_groups = group.empty() ? 0 : *std::max_element(group.begin(), group.end()) + 1;
    for (std::size_t g = 0; g < n_groups; ++g) {
      std::optional<std::pair<std::size_t, std::size_t>> best;
      double best_d = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (group[i] != g) continue;
        for (std::size_t j = i + 1; j < m; ++j) {
          if (group[j] != g) continue;
          const double d = squared_distance(x.row(i), x.row(j));
          if (!best || d > best_d) {
            best = {i, j};
            best_d = d;
          }
        }
      }
      if (!best) continue;
      out.value += best_d;
      add_pair_gradient(out.grad_x, x, best->first, best->second, 2.0 * inv_m);
    }
  }
  out.value *= inv_m;
  return out;
}

// Smallest gap between the winning candidate distance and the runner-up,
// over all anchors (or groups). Infinity when no max has two candidates.
inline double max_pair_margin(const Matrix& x, const std::vector<std::size_t>& group,
                              PairReduction reduction) {
  const std::size_t m = x.rows();
  double margin = std::numeric_limits<double>::infinity();
  auto consider = [&](std::vector<double>& candidates) {
    if (candidates.size() < 2) return;
    std::partial_sort(candidates.begin(), candidates.begin() + 2, candidates.end(),
                      std::greater<>());
    margin = std::min(margin, candidates[0] - candidates[1]);
  };
  std::vector<double> candidates;
  if (reduction == PairReduction::PerAnchor) {
    for (std::size_t i = 0; i < m; ++i) {
      candidates.clear();
      for (std::size_t j = 0; j < m; ++j) {
        if (j != i && group[j] == group[i]) candidates.push_back(squared_distance(x.row(i), x.row(j)));
      }
      consider(candidates);
    }
  } else {
    const std::size_t n_groups = group.empty() ? 0 : *std::max_element(group.begin(), group.end()) + 1;
    for (std::size_t g = 0; g < n_groups; ++g) {
      candidates.clear();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = i + 1; j < m; ++j) {
          if (group[i] == g && group[j] == g) candidates.push_back(squared_distance(x.row(i), x.row(j)));
        }
      }
      consider(candidates);
    }
  }
  return margin;
}

}  // namespace detail

// Softmax cross-entropy over explicit logits, averaged over the batch.
inline LossResult loss_classification(const EmbeddingBatch& batch) {
  batch.validate();
  if (!batch.logits) throw ValidationError("classification loss needs logits");
  const Matrix& z = *batch.logits;
  const std::size_t m = z.rows();
  const std::size_t c = z.cols();
  const double inv_m = 1.0 / static_cast<double>(m);

  LossResult out;
  out.grad_x = Matrix(m, batch.dim());
  Matrix grad(m, c);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = z.row(i);
    const auto top = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    const double zmax = row[top];
    // log-sum-exp as zmax + log1p(sum of the non-max terms), exact for the
    // dominant term.
    double rest = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      if (k != top) rest += std::exp(row[k] - zmax);
    }
    const double tail = std::log1p(rest);
    const double lse = zmax + tail;
    const auto y = static_cast<std::size_t>(batch.class_id[i]);
    // (zmax - z_y) first: exact zero when the target holds the max logit.
    total += (zmax - row[y]) + tail;
    for (std::size_t k = 0; k < c; ++k) {
      const double prob = std::exp(row[k] - lse);
      grad(i, k) = inv_m * (prob - (k == y ? 1.0 : 0.0));
    }
  }
  out.value = total * inv_m;
  out.components.classification = out.value;
  out.grad_logits = std::move(grad);
  return out;
}

// Pulls together frames of the same video.
inline LossResult loss_temporal(const EmbeddingBatch& batch,
                                PairReduction reduction = PairReduction::PerAnchor) {
  batch.validate();
  auto out = detail::max_pair_loss(batch.x, detail::group_index(batch.video_id), reduction);
  out.components.temporal = out.value;
  return out;
}

// Pulls together samples of the same class, across videos.
inline LossResult loss_class_consistency(const EmbeddingBatch& batch,
                                         PairReduction reduction = PairReduction::PerAnchor) {
  batch.validate();
  auto out = detail::max_pair_loss(batch.x, detail::group_index(batch.class_id), reduction);
  out.components.class_consistency = out.value;
  return out;
}

// Weighted sum. The classification term is skipped (contributes 0) when the
// batch has no logits.
inline LossResult loss_combined(const EmbeddingBatch& batch, LossWeights weights = {},
                                PairReduction reduction = PairReduction::PerAnchor) {
  if (!(weights.beta >= 0.0) || !(weights.gamma >= 0.0)) {
    throw ValidationError("loss weights must be non-negative");
  }
  const auto temporal = loss_temporal(batch, reduction);
  const auto consistency = loss_class_consistency(batch, reduction);

  LossResult out;
  out.grad_x = Matrix(batch.size(), batch.dim());
  if (batch.logits) {
    auto classification = loss_classification(batch);
    out.components.classification = classification.value;
    out.grad_logits = std::move(classification.grad_logits);
  }
  out.components.temporal = temporal.value;
  out.components.class_consistency = consistency.value;
  out.value = out.components.classification + weights.beta * temporal.value +
              weights.gamma * consistency.value;

  auto g = out.grad_x.values();
  const auto gt = temporal.grad_x.values();
  const auto ge = consistency.grad_x.values();
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = weights.beta * gt[k] + weights.gamma * ge[k];
  return out;
}

inline double temporal_margin(const EmbeddingBatch& batch,
                              PairReduction reduction = PairReduction::PerAnchor) {
  return detail::max_pair_margin(batch.x, detail::group_index(batch.video_id), reduction);
}

inline double class_consistency_margin(const EmbeddingBatch& batch,
                                       PairReduction reduction = PairReduction::PerAnchor) {
  return detail::max_pair_margin(batch.x, detail::group_index(batch.class_id), reduction);
}

// ---------------------------------------------------------------------------
// Finite-difference verification.

// max |a - b| / max(max |a|, max |b|, 1e-8).
inline double relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  double diff = 0.0;
  double scale = 1e-8;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    diff = std::max(diff, std::abs(analytic[k] - numeric[k]));
    scale = std::max({scale, std::abs(analytic[k]), std::abs(numeric[k])});
  }
  return diff / scale;
}

enum class LossKind { Classification, Temporal, ClassConsistency, Combined };

inline std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::Classification: return "L_c";
    case LossKind::Temporal: return "L_t";
    case LossKind::ClassConsistency: return "L_e";
    case LossKind::Combined: return "L";
  }
  return "?";
}

inline LossResult evaluate_loss(LossKind kind, const EmbeddingBatch& batch, LossWeights weights,
                                PairReduction reduction = PairReduction::PerAnchor) {
  switch (kind) {
    case LossKind::Classification: return loss_classification(batch);
    case LossKind::Temporal: return loss_temporal(batch, reduction);
    case LossKind::ClassConsistency: return loss_class_consistency(batch, reduction);
    case LossKind::Combined: return loss_combined(batch, weights, reduction);
  }
  throw ValidationError("unknown loss");
}

enum class CheckStatus { Pass, Fail, SkippedAtTie };

inline std::string_view to_string(CheckStatus status) {
  switch (status) {
    case CheckStatus::Pass: return "pass";
    case CheckStatus::Fail: return "fail";
    case CheckStatus::SkippedAtTie: return "skipped at tie";
  }
  return "?";
}

struct GradientCheck {
  LossKind loss = LossKind::Combined;
  double max_relative_error = 0.0;
  double tolerance = 0.0;
  double tie_margin = 0.0;  // smallest top-two gap among the max terms involved
  CheckStatus status = CheckStatus::Pass;
};

struct GradientCheckOptions {
  LossWeights weights;
  double fd_step = 1e-5;
  double tolerance = 1e-4;
  // Gaps at or below this count as ties.
  double tie_threshold = 1e-3;
};

// Compares analytic gradients (w.r.t. embeddings and, when present, logits)
// against central differences of the loss value. A mismatch is reported as
// SkippedAtTie instead of Fail when some max term involved is tied.
inline GradientCheck check_gradient(LossKind kind, const EmbeddingBatch& batch,
                                    const GradientCheckOptions& options) {
  if (!(options.fd_step > 0.0)) throw ValidationError("fd step must be positive");
  const auto analytic = evaluate_loss(kind, batch, options.weights);

  std::vector<double> a;
  std::vector<double> n;
  EmbeddingBatch probe = batch;
  auto central = [&](double& slot) {
    const double saved = slot;
    slot = saved + options.fd_step;
    const double up = evaluate_loss(kind, probe, options.weights).value;
    slot = saved - options.fd_step;
    const double down = evaluate_loss(kind, probe, options.weights).value;
    slot = saved;
    return (up - down) / (2.0 * options.fd_step);
  };

  if (kind != LossKind::Classification) {
    auto xs = probe.x.values();
    const auto g = analytic.grad_x.values();
    for (std::size_t k = 0; k < xs.size(); ++k) {
      a.push_back(g[k]);
      n.push_back(central(xs[k]));
    }
  }
  if (analytic.grad_logits) {
    auto zs = probe.logits->values();
    const auto g = analytic.grad_logits->values();
    for (std::size_t k = 0; k < zs.size(); ++k) {
      a.push_back(g[k]);
      n.push_back(central(zs[k]));
    }
  }

  GradientCheck out;
  out.loss = kind;
  out.tolerance = options.tolerance;
  out.max_relative_error = relative_error(a, n);
  out.tie_margin = std::numeric_limits<double>::infinity();
  if ((kind == LossKind::Temporal) || (kind == LossKind::Combined && options.weights.beta > 0.0)) {
    out.tie_margin = std::min(out.tie_margin, temporal_margin(batch));
  }
  if ((kind == LossKind::ClassConsistency) ||
      (kind == LossKind::Combined && options.weights.gamma > 0.0)) {
    out.tie_margin = std::min(out.tie_margin, class_consistency_margin(batch));
  }
  if (out.max_relative_error < options.tolerance) {
    out.status = CheckStatus::Pass;
  } else if (out.tie_margin <= options.tie_threshold) {
    out.status = CheckStatus::SkippedAtTie;
  } else {
    out.status = CheckStatus::Fail;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch JSONL: {"video_id": string, "class_id": int, "x": [float], "logits": [float]?}

inline EmbeddingBatch parse_batch(std::istream& in) {
  using nlohmann::json;
  std::vector<std::vector<double>> xs;
  std::vector<std::vector<double>> zs;
  EmbeddingBatch batch;
  std::optional<bool> with_logits;

  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string prefix = "line " + std::to_string(line) + ": ";
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::parse_error& e) {
      throw ValidationError(prefix + "malformed JSON: " + e.what());
    }
    if (!obj.is_object()) throw ValidationError(prefix + "expected a JSON object");
    for (const auto& [key, _] : obj.items()) {
      if (key != "video_id" && key != "class_id" && key != "x" && key != "logits") {
        throw ValidationError(prefix + "unknown key '" + key + "'");
      }
    }
    if (!obj.contains("video_id") || !obj["video_id"].is_string()) {
      throw ValidationError(prefix + "'video_id' must be a string");
    }
    if (!obj.contains("class_id") || !obj["class_id"].is_number_integer()) {
      throw ValidationError(prefix + "'class_id' must be an integer");
    }
    auto read_vector = [&](const char* key) {
      const auto& v = obj[key];
      if (!v.is_array() || v.empty()) throw ValidationError(prefix + "'" + key + "' must be a non-empty array");
      std::vector<double> out;
      for (const auto& e : v) {
        if (!e.is_number()) throw ValidationError(prefix + "'" + key + "' must hold numbers");
        out.push_back(e.get<double>());
        if (!std::isfinite(out.back())) throw ValidationError(prefix + "'" + key + "' is not finite");
      }
      return out;
    };
    if (!obj.contains("x")) throw ValidationError(prefix + "missing key 'x'");
    auto x = read_vector("x");
    if (!xs.empty() && x.size() != xs.front().size()) {
      throw ValidationError(prefix + "embedding dimension " + std::to_string(x.size()) +
                            " differs from " + std::to_string(xs.front().size()));
    }
    const bool has_logits = obj.contains("logits");
    if (with_logits && *with_logits != has_logits) {
      throw ValidationError(prefix + "'logits' present on some rows but not others");
    }
    with_logits = has_logits;
    if (has_logits) {
      auto z = read_vector("logits");
      if (!zs.empty() && z.size() != zs.front().size()) {
        throw ValidationError(prefix + "logit count differs from earlier rows");
      }
      zs.push_back(std::move(z));
    }
    const auto cls = obj["class_id"].get<std::int64_t>();
    if (cls < 0) throw ValidationError(prefix + "'class_id' is negative");
    xs.push_back(std::move(x));
    batch.video_id.push_back(obj["video_id"].get<std::string>());
    batch.class_id.push_back(static_cast<int>(cls));
  }
  if (xs.empty()) throw ValidationError("batch file has no rows");

  batch.x = Matrix::from_rows(xs);
  if (!zs.empty()) {
    batch.logits = Matrix::from_rows(zs);
    batch.num_classes = zs.front().size();
  } else {
    const int top = *std::max_element(batch.class_id.begin(), batch.class_id.end());
    batch.num_classes = std::max<std::size_t>(2, static_cast<std::size_t>(top) + 1);
  }
  batch.validate();
  return batch;
}

inline void write_batch(std::ostream& out, const EmbeddingBatch& batch) {
  batch.validate();
  for (std::size_t i = 0; i < batch.size(); ++i) {
    nlohmann::ordered_json obj;
    obj["video_id"] = batch.video_id[i];
    obj["class_id"] = batch.class_id[i];
    const auto x = batch.x.row(i);
    obj["x"] = std::vector<double>(x.begin(), x.end());
    if (batch.logits) {
      const auto z = batch.logits->row(i);
      obj["logits"] = std::vector<double>(z.begin(), z.end());
    }
    out << obj.dump() << '\n';
  }
}

}  // namespace tempco

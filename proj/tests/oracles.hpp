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

// Reference implementations used only by the tests. Each one is written
// independently of the library code it checks: straight loops, no shared
// helpers, and where possible a different algebraic form.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "tempco/filter.hpp"
#include "tempco/losses.hpp"
#include "tempco/metrics.hpp"

namespace tempco::oracle {

// ---------------------------------------------------------------------------
// Filter.

struct OracleFrame {
  double mu = 0.0;
  double var = 0.0;
};

// Recomputes every frame from scratch. The windowed prior is re-derived from
// the raw logits at every step; the update uses the product form
// mu = (v*q + d*m) / (d + v), var = d*v / (d + v).
inline std::vector<OracleFrame> filter(const std::vector<double>& q, bool windowed,
                                       std::size_t w, double init_var) {
  std::vector<OracleFrame> out(q.size());
  for (std::size_t t = 0; t < q.size(); ++t) {
    if (t == 0) {
      out[0] = {q[0], init_var};
      continue;
    }
    double m = 0.0;
    double v = 0.0;
    if (windowed) {
      const std::size_t begin = t >= w ? t - w : 0;
      const double n = static_cast<double>(t - begin);
      for (std::size_t k = begin; k < t; ++k) m += q[k];
      m /= n;
      for (std::size_t k = begin; k < t; ++k) v += (q[k] - m) * (q[k] - m);
      v /= n;
    } else {
      m = out[t - 1].mu;
      v = out[t - 1].var;
    }
    const double d = (q[t] - m) * (q[t] - m);
    // A one-element window has no spread: emit the raw logit.
    const bool single = windowed && t - (t >= w ? t - w : 0) == 1;
    if (single || d + v <= 0.0) {
      out[t] = {q[t], 0.0};
    } else {
      out[t] = {(v * q[t] + d * m) / (d + v), d * v / (d + v)};
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses.

// Sum over anchors of the largest squared distance to a partner, divided by
// m. Partners are enumerated as an explicit pair list.
inline double max_pair_value(const std::vector<std::vector<double>>& x,
                             const std::function<bool(std::size_t, std::size_t)>& partner) {
  const std::size_t m = x.size();
  std::vector<std::vector<double>> per_anchor(m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j || !partner(i, j)) continue;
      double d = 0.0;
      for (std::size_t k = 0; k < x[i].size(); ++k) d += std::pow(x[i][k] - x[j][k], 2);
      per_anchor[i].push_back(d);
    }
  }
  double total = 0.0;
  for (auto& c : per_anchor) {
    if (!c.empty()) total += *std::max_element(c.begin(), c.end());
  }
  return total / static_cast<double>(m);
}

// -(1/m) sum log softmax(z_i)[y_i], via a plain log of summed exponentials
// after max subtraction.
inline double cross_entropy(const std::vector<std::vector<double>>& z, const std::vector<int>& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double zmax = *std::max_element(z[i].begin(), z[i].end());
    double s = 0.0;
    for (double v : z[i]) s += std::exp(v - zmax);
    total += -(z[i][y[i]] - zmax - std::log(s));
  }
  return total / static_cast<double>(z.size());
}

// Central differences of f over every entry of `params`.
inline std::vector<double> numeric_gradient(std::vector<double> params,
                                            const std::function<double(const std::vector<double>&)>& f,
                                            double h) {
  std::vector<double> g(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    const double saved = params[k];
    params[k] = saved + h;
    const double up = f(params);
    params[k] = saved - h;
    const double down = f(params);
    params[k] = saved;
    g[k] = (up - down) / (2.0 * h);
  }
  return g;
}

inline std::vector<std::vector<double>> unflatten(const std::vector<double>& flat, std::size_t cols) {
  std::vector<std::vector<double>> rows(flat.size() / cols, std::vector<double>(cols));
  for (std::size_t k = 0; k < flat.size(); ++k) rows[k / cols][k % cols] = flat[k];
  return rows;
}

// ---------------------------------------------------------------------------
// Metrics.

struct Recount {
  double apcer = 0.0;
  double bpcer = 0.0;
  double acer = 0.0;
};

inline Recount recount(const std::vector<ScoredSample>& samples, double threshold) {
  double attacks = 0, lives = 0, accepted = 0, rejected = 0;
  for (const auto& s : samples) {
    if (s.label.is_attack()) {
      attacks += 1;
      if (s.score >= threshold) accepted += 1;
    } else {
      lives += 1;
      if (!(s.score >= threshold)) rejected += 1;
    }
  }
  Recount r;
  r.apcer = accepted / attacks;
  r.bpcer = rejected / lives;
  r.acer = (r.apcer + r.bpcer) / 2.0;
  return r;
}

struct Sweep {
  std::vector<double> thresholds;
  std::vector<double> fpr;
  std::vector<double> fnr;
};

// O(n^2): every distinct score plus one step outside each end, each counted
// over the whole sample set.
inline Sweep sweep(const std::vector<ScoredSample>& samples) {
  std::vector<double> scores;
  for (const auto& s : samples) scores.push_back(s.score);
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());
  Sweep out;
  out.thresholds.push_back(std::nextafter(scores.front(), -1.0));
  for (double s : scores) out.thresholds.push_back(s);
  out.thresholds.push_back(std::nextafter(scores.back(), 2.0));
  for (double thr : out.thresholds) {
    const auto r = recount(samples, thr);
    out.fpr.push_back(r.apcer);
    out.fnr.push_back(r.bpcer);
  }
  return out;
}

// Linear interpolation at the first point where FPR - FNR stops being
// positive.
inline double eer(const Sweep& s) {
  for (std::size_t k = 1; k < s.thresholds.size(); ++k) {
    const double a = s.fpr[k - 1] - s.fnr[k - 1];
    const double b = s.fpr[k] - s.fnr[k];
    if (a <= 0.0) return s.fpr[k - 1];
    if (b <= 0.0) {
      const double u = a / (a - b);
      return s.fpr[k - 1] + u * (s.fpr[k] - s.fpr[k - 1]);
    }
  }
  return s.fpr.back();
}

// FNR at the least strict threshold meeting the FPR budget; 1 when only the
// reject-all sentinel does.
inline double fnr_at_fpr(const Sweep& s, double target) {
  for (std::size_t k = 0; k + 1 < s.thresholds.size(); ++k) {
    if (s.fpr[k] <= target) return s.fnr[k];
  }
  return 1.0;
}

// ---------------------------------------------------------------------------
// Random inputs.

inline std::vector<double> random_stream(std::mt19937_64& rng, std::size_t n) {
  std::normal_distribution<double> noise(0.0, 1.5);
  std::uniform_real_distribution<double> center(-4.0, 4.0);
  std::bernoulli_distribution spike(0.1);
  const double c = center(rng);
  std::vector<double> q(n);
  for (auto& v : q) v = c + noise(rng) + (spike(rng) ? 5.0 : 0.0);
  return q;
}

// Scores on a 1/1024 grid (exactly representable, so 1 - s is exact and
// ties occur), two attack types.
inline std::vector<ScoredSample> random_samples(std::mt19937_64& rng, std::size_t n) {
  std::uniform_int_distribution<int> grid(0, 1024);
  std::bernoulli_distribution is_live(0.5);
  std::bernoulli_distribution type(0.5);
  std::vector<ScoredSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool live = i == 0 || (i != 1 && is_live(rng));
    double score = grid(rng) / 1024.0;
    // Shift the classes apart a little so the sets are not pure noise.
    if (live) score = std::min(1.0, score + 0.125);
    out.push_back(ScoredSample{score,
                               live ? ClassLabel::live()
                                    : ClassLabel::attack(type(rng) ? "print" : "replay"),
                               "s" + std::to_string(i), 0});
  }
  return out;
}

// Random batch whose max terms all have a top-two gap above `margin`.
inline EmbeddingBatch random_batch(std::mt19937_64& rng, std::size_t max_m, std::size_t max_d,
                                   std::size_t max_c, bool with_logits, double margin = 1e-3) {
  std::uniform_int_distribution<std::size_t> m_dist(2, max_m);
  std::uniform_int_distribution<std::size_t> d_dist(1, max_d);
  std::uniform_int_distribution<std::size_t> c_dist(2, max_c);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    EmbeddingBatch b;
    const std::size_t m = m_dist(rng);
    const std::size_t d = d_dist(rng);
    b.num_classes = c_dist(rng);
    std::uniform_int_distribution<std::size_t> video(0, std::max<std::size_t>(1, m / 3));
    std::uniform_int_distribution<int> cls(0, static_cast<int>(b.num_classes) - 1);
    b.x = Matrix(m, d);
    for (double& v : b.x.values()) v = normal(rng);
    for (std::size_t i = 0; i < m; ++i) {
      b.video_id.push_back("v" + std::to_string(video(rng)));
      b.class_id.push_back(cls(rng));
    }
    if (with_logits) {
      b.logits = Matrix(m, b.num_classes);
      for (double& v : b.logits->values()) v = 2.0 * normal(rng);
    }
    if (temporal_margin(b) > margin && class_consistency_margin(b) > margin) return b;
  }
}

inline std::vector<std::vector<double>> rows_of(const Matrix& m) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < m.rows(); ++i) out.emplace_back(m.row(i).begin(), m.row(i).end());
  return out;
}

}  // namespace tempco::oracle

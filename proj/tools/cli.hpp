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

// Command-line front end. Subcommands:
//   synth       write a synthetic frame JSONL corpus
//   smooth      add mu_hat/p/var_hat to every frame
//   eval        frame-level and segment-level PAD metrics (JSON + CSV)
//   grad-check  analytic vs. central-difference gradients for each loss
//   plot        SVG of one smoothed tracklet
//
// Exit codes: 0 success, 1 validation error (bad flags, bad input, failed
// check), 2 I/O error. Outputs are assembled in memory and written only
// after the command has fully succeeded.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tempco/error.hpp"
#include "tempco/filter.hpp"
#include "tempco/losses.hpp"
#include "tempco/metrics.hpp"
#include "tempco/plot.hpp"
#include "tempco/stream.hpp"
#include "tempco/synth.hpp"

namespace tempco::cli {

enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2 };

namespace detail {

inline std::string read_input(const std::string& path) {
  if (path == "-") {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    return buf.str();
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open input '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading '" + path + "'");
  return buf.str();
}

inline void write_output(const std::string& path, const std::string& content, std::ostream& out) {
  if (path == "-") {
    out << content;
    out.flush();
    if (!out) throw IoError("failed writing to standard output");
    return;
  }
  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open output '" + path + "'");
  file << content;
  file.close();
  if (!file) {
    std::error_code ec;
    std::filesystem::remove(path, ec);
    throw IoError("failed writing '" + path + "'");
  }
}

struct FilterFlags {
  std::string method = "fastco";
  std::size_t window = 5;
  double ema_alpha = 0.1;
  double init_var = 1.0;
  double degenerate_eps = 0.0;

  void attach(CLI::App& app) {
    app.add_option("--method", method, "fastco | fastco-recursive | ema | sma | none")
        ->capture_default_str();
    app.add_option("--window", window, "window length for fastco and sma")->capture_default_str();
    app.add_option("--ema-alpha", ema_alpha, "EMA smoothing factor")->capture_default_str();
    app.add_option("--init-var", init_var, "prior variance of the first frame")->capture_default_str();
    app.add_option("--degenerate-eps", degenerate_eps, "zero-denominator tolerance")
        ->capture_default_str();
  }

  FilterConfig config() const {
    const auto m = parse_filter_method(method);
    if (!m) throw ValidationError("unknown filter method '" + method + "'");
    FilterConfig c;
    c.method = *m;
    c.window = window;
    c.ema_alpha = ema_alpha;
    c.init_var = init_var;
    c.degenerate_eps = degenerate_eps;
    c.validate();
    return c;
  }
};

inline nlohmann::ordered_json to_json(const FilterConfig& c) {
  nlohmann::ordered_json j;
  j["method"] = std::string(to_string(c.method));
  j["window"] = c.window;
  j["ema_alpha"] = c.ema_alpha;
  j["init_var"] = c.init_var;
  j["degenerate_eps"] = c.degenerate_eps;
  return j;
}

inline FrameStream read_frames(const std::string& path) {
  std::istringstream in(read_input(path));
  return read_stream(in);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands. Each returns the bytes to write; the caller performs the write.

inline std::string cmd_smooth(const std::string& input_text, const FilterConfig& config) {
  std::istringstream in(input_text);
  const auto stream = read_stream(in);
  const auto smoothed = run_filter_all(stream.tracklets, config);
  return serialize_stream(stream.tracklets, &smoothed);
}

struct EvalOutput {
  std::string json;
  std::string csv;
};

inline EvalOutput cmd_eval(const std::string& input_text, const FilterConfig& config,
                           std::span<const std::size_t> lengths, const ThresholdPolicy& policy) {
  std::istringstream in(input_text);
  const auto stream = read_stream(in);
  const auto smoothed = run_filter_all(stream.tracklets, config);
  const auto frames = frame_samples(stream.tracklets, smoothed);
  const auto frame_report = evaluate(frames, policy);
  const auto segments = evaluate_segments(stream.tracklets, config, lengths, policy);

  nlohmann::ordered_json j;
  j["filter"] = detail::to_json(config);
  j["threshold_policy"] = policy.to_string();
  j["n_tracklets"] = stream.tracklets.size();
  j["n_frames"] = frames.size();
  j["frame"] = to_json(frame_report);
  nlohmann::ordered_json seg = nlohmann::ordered_json::array();
  for (const auto& s : segments) seg.push_back(to_json(s));
  j["segments"] = seg;
  return {j.dump(2) + "\n", to_csv(&frame_report, segments)};
}

struct GradCheckOutput {
  std::string report;
  bool passed = true;
};

inline GradCheckOutput cmd_grad_check(const std::string& input_text,
                                      const GradientCheckOptions& options) {
  std::istringstream in(input_text);
  const auto batch = parse_batch(in);
  std::vector<LossKind> kinds;
  if (batch.logits) kinds.push_back(LossKind::Classification);
  kinds.insert(kinds.end(), {LossKind::Temporal, LossKind::ClassConsistency, LossKind::Combined});

  GradCheckOutput out;
  std::ostringstream report;
  report << "batch m=" << batch.size() << " d=" << batch.dim() << " C=" << batch.num_classes
         << " beta=" << format_number(options.weights.beta)
         << " gamma=" << format_number(options.weights.gamma)
         << " fd_step=" << format_number(options.fd_step) << '\n';
  for (auto kind : kinds) {
    const auto check = check_gradient(kind, batch, options);
    const auto value = evaluate_loss(kind, batch, options.weights).value;
    report << to_string(kind) << ' ' << to_string(check.status)
           << " value=" << format_number(value)
           << " max_rel_error=" << format_number(check.max_relative_error)
           << " tolerance=" << format_number(check.tolerance) << '\n';
    if (check.status == CheckStatus::Fail) out.passed = false;
  }
  report << (out.passed ? "PASS" : "FAIL") << '\n';
  out.report = report.str();
  return out;
}

inline std::string cmd_plot(const std::string& input_text, const std::string& tracklet_id) {
  std::istringstream in(input_text);
  const auto stream = read_stream(in);
  if (!stream.smoothed) {
    throw ValidationError("input has no smoothed fields; run 'tempco smooth' first");
  }
  for (std::size_t k = 0; k < stream.tracklets.size(); ++k) {
    if (stream.tracklets[k].id() == tracklet_id) {
      return render_svg(stream.tracklets[k], (*stream.smoothed)[k]);
    }
  }
  throw ValidationError("tracklet '" + tracklet_id + "' not found in input");
}

inline std::string cmd_synth(const SynthConfig& config) {
  const auto corpus = generate(config);
  return serialize_stream(corpus);
}

// ---------------------------------------------------------------------------

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout,
               std::ostream& err = std::cerr) {
  CLI::App app{"Temporal-consistency toolkit for liveness score streams", "tempco"};
  app.require_subcommand(1);

  std::string input;
  std::string output = "-";

  auto* smooth = app.add_subcommand("smooth", "smooth a frame JSONL stream");
  detail::FilterFlags smooth_flags;
  smooth->add_option("--input", input, "frame JSONL ('-' for stdin)")->required();
  smooth->add_option("--output", output, "output JSONL ('-' for stdout)");
  smooth_flags.attach(*smooth);

  auto* eval = app.add_subcommand("eval", "frame- and segment-level metrics");
  detail::FilterFlags eval_flags;
  std::vector<std::size_t> segments(kDefaultSegmentLengths.begin(), kDefaultSegmentLengths.end());
  std::string policy_text = "eer";
  std::string csv_path;
  eval->add_option("--input", input, "frame JSONL ('-' for stdin)")->required();
  eval->add_option("--output", output, "report JSON ('-' for stdout)");
  eval->add_option("--csv", csv_path, "report CSV (default: next to --output, '.csv')");
  eval->add_option("--segments", segments, "segment lengths K")->delimiter(',')->capture_default_str();
  eval->add_option("--threshold-policy", policy_text, "eer | fpr:F | fixed:V")->capture_default_str();
  eval_flags.attach(*eval);

  auto* synth = app.add_subcommand("synth", "generate a synthetic frame corpus");
  SynthConfig synth_config;
  synth->add_option("--output", output, "output JSONL ('-' for stdout)");
  synth->add_option("--seed", synth_config.seed, "random seed")->capture_default_str();
  synth->add_option("--n-live", synth_config.n_live, "live tracklets")->capture_default_str();
  synth->add_option("--n-attack", synth_config.n_attack, "attack tracklets")->capture_default_str();
  synth->add_option("--length", synth_config.length, "frames per tracklet")->capture_default_str();
  synth->add_option("--mu-live", synth_config.mu_live, "live logit level")->capture_default_str();
  synth->add_option("--mu-attack", synth_config.mu_attack, "attack logit level")->capture_default_str();
  synth->add_option("--sigma", synth_config.sigma, "per-frame logit noise std")->capture_default_str();
  synth->add_option("--spike-prob", synth_config.spike_prob, "per-frame spike start probability")
      ->capture_default_str();
  synth->add_option("--spike-shift", synth_config.spike_shift, "logit offset toward the other class")
      ->capture_default_str();
  synth->add_option("--spike-len", synth_config.spike_len, "frames per spike")->capture_default_str();

  auto* grad = app.add_subcommand("grad-check", "verify loss gradients by central differences");
  GradientCheckOptions grad_options;
  grad->add_option("--input", input, "batch JSONL ('-' for stdin)")->required();
  grad->add_option("--output", output, "report ('-' for stdout)");
  grad->add_option("--beta", grad_options.weights.beta, "temporal loss weight")->capture_default_str();
  grad->add_option("--gamma", grad_options.weights.gamma, "class consistency loss weight")
      ->capture_default_str();
  grad->add_option("--fd-step", grad_options.fd_step, "central difference step")->capture_default_str();
  grad->add_option("--tolerance", grad_options.tolerance, "max relative error")->capture_default_str();

  auto* plot = app.add_subcommand("plot", "render one smoothed tracklet as SVG");
  std::string tracklet_id;
  plot->add_option("--input", input, "smoothed frame JSONL ('-' for stdin)")->required();
  plot->add_option("--tracklet", tracklet_id, "tracklet id")->required();
  plot->add_option("--output", output, "SVG path ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "tempco: " << e.what() << '\n';
    return kValidation;
  }

  try {
    if (smooth->parsed()) {
      const auto config = smooth_flags.config();
      detail::write_output(output, cmd_smooth(detail::read_input(input), config), out);
    } else if (eval->parsed()) {
      const auto config = eval_flags.config();
      const auto policy = parse_threshold_policy(policy_text);
      for (std::size_t k : segments) {
        if (k < 1) throw ValidationError("segment lengths must be >= 1");
      }
      const auto result = cmd_eval(detail::read_input(input), config, segments, policy);
      std::string csv_target = csv_path;
      if (csv_target.empty() && output != "-") {
        csv_target = std::filesystem::path(output).replace_extension(".csv").string();
      }
      detail::write_output(output, result.json, out);
      if (!csv_target.empty()) detail::write_output(csv_target, result.csv, out);
    } else if (synth->parsed()) {
      detail::write_output(output, cmd_synth(synth_config), out);
    } else if (grad->parsed()) {
      const auto result = cmd_grad_check(detail::read_input(input), grad_options);
      detail::write_output(output, result.report, out);
      if (!result.passed) {
        err << "tempco: gradient check failed\n";
        return kValidation;
      }
    } else if (plot->parsed()) {
      detail::write_output(output, cmd_plot(detail::read_input(input), tracklet_id), out);
    }
  } catch (const IoError& e) {
    err << "tempco: " << e.what() << '\n';
    return kIo;
  } catch (const ValidationError& e) {
    err << "tempco: " << e.what() << '\n';
    return kValidation;
  }
  return kOk;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("tempco");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace tempco::cli

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

// Static SVG rendering of one smoothed tracklet: raw probability (thin line),
// smoothed probability (thick line) and an uncertainty band spanning
// logistic(mu_hat - sqrt(var_hat)) .. logistic(mu_hat + sqrt(var_hat)),
// clipped to [0, 1].

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <span>
#include <string>
#include <string_view>

#include "tempco/error.hpp"
#include "tempco/stream.hpp"

namespace tempco {

struct PlotLayout {
  double width = 800.0;
  double height = 400.0;
  double margin_left = 60.0;
  double margin_right = 20.0;
  double margin_top = 36.0;
  double margin_bottom = 50.0;

  double plot_width() const { return width - margin_left - margin_right; }
  double plot_height() const { return height - margin_top - margin_bottom; }
};

inline constexpr std::string_view kBandMapping =
    "band = [logistic(mu_hat - sqrt(var_hat)), logistic(mu_hat + sqrt(var_hat))] clipped to [0,1]";

namespace detail {

inline std::string xml_escape(std::string_view text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace detail

inline std::string render_svg(const Tracklet& tracklet, std::span<const SmoothedFrame> smoothed,
                              const PlotLayout& layout = {}) {
  if (smoothed.size() != tracklet.size()) {
    throw ValidationError("tracklet '" + tracklet.id() + "': smoothed frames are misaligned");
  }
  const std::size_t n = smoothed.size();
  const double span_t = n > 1 ? static_cast<double>(n - 1) : 1.0;
  auto x_of = [&](std::size_t t) {
    return layout.margin_left + layout.plot_width() * static_cast<double>(t) / span_t;
  };
  auto y_of = [&](double p) { return layout.margin_top + layout.plot_height() * (1.0 - p); };
  auto point = [&](std::size_t t, double p) { return detail::fixed3(x_of(t)) + "," + detail::fixed3(y_of(p)); };

  std::string raw;
  std::string smooth;
  std::string upper;
  std::string lower;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = smoothed[i];
    const double sd = std::sqrt(s.var_hat);
    const double hi = std::clamp(logistic(s.mu_hat + sd), 0.0, 1.0);
    const char* sep = i == 0 ? "" : " ";
    raw += sep + point(i, logistic(s.q));
    smooth += sep + point(i, s.p);
    upper += sep + point(i, hi);
    const std::size_t back = n - 1 - i;
    const auto& sb = smoothed[back];
    const double sdb = std::sqrt(sb.var_hat);
    lower += sep + point(back, std::clamp(logistic(sb.mu_hat - sdb), 0.0, 1.0));
  }

  const std::string W = detail::fixed3(layout.width);
  const std::string H = detail::fixed3(layout.height);
  const double x0 = layout.margin_left;
  const double x1 = layout.margin_left + layout.plot_width();
  const double y0 = layout.margin_top;
  const double y1 = layout.margin_top + layout.plot_height();

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + W + "\" height=\"" + H +
         "\" viewBox=\"0 0 " + W + " " + H + "\">\n";
  svg += "  <title>" + detail::xml_escape(tracklet.id()) + "</title>\n";
  svg += "  <desc>" + std::string(kBandMapping) + "</desc>\n";
  svg += "  <rect x=\"0\" y=\"0\" width=\"" + W + "\" height=\"" + H + "\" fill=\"white\"/>\n";
  svg += "  <g id=\"axes\" stroke=\"black\" stroke-width=\"1\">\n";
  svg += "    <line x1=\"" + detail::fixed3(x0) + "\" y1=\"" + detail::fixed3(y1) + "\" x2=\"" +
         detail::fixed3(x1) + "\" y2=\"" + detail::fixed3(y1) + "\"/>\n";
  svg += "    <line x1=\"" + detail::fixed3(x0) + "\" y1=\"" + detail::fixed3(y0) + "\" x2=\"" +
         detail::fixed3(x0) + "\" y2=\"" + detail::fixed3(y1) + "\"/>\n";
  svg += "  </g>\n";
  svg += "  <g id=\"ticks\" font-family=\"sans-serif\" font-size=\"11\" fill=\"black\">\n";
  for (double p : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    svg += "    <text x=\"" + detail::fixed3(x0 - 6) + "\" y=\"" + detail::fixed3(y_of(p) + 4) +
           "\" text-anchor=\"end\">" + detail::fixed3(p).substr(0, 4) + "</text>\n";
  }
  const std::size_t ticks = std::min<std::size_t>(n, 6);
  for (std::size_t k = 0; k < ticks; ++k) {
    const std::size_t t = ticks > 1 ? (n - 1) * k / (ticks - 1) : 0;
    svg += "    <text x=\"" + detail::fixed3(x_of(t)) + "\" y=\"" + detail::fixed3(y1 + 16) +
           "\" text-anchor=\"middle\">" + std::to_string(t) + "</text>\n";
  }
  svg += "  </g>\n";
  svg += "  <text id=\"xlabel\" x=\"" + detail::fixed3((x0 + x1) / 2) + "\" y=\"" +
         detail::fixed3(layout.height - 10) +
         "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">frame index</text>\n";
  svg += "  <text id=\"ylabel\" x=\"16\" y=\"" + detail::fixed3((y0 + y1) / 2) +
         "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 16 " +
         detail::fixed3((y0 + y1) / 2) + ")\">probability</text>\n";
  svg += "  <polygon id=\"band\" data-mapping=\"" + std::string(kBandMapping) +
         "\" fill=\"#1f77b4\" fill-opacity=\"0.25\" stroke=\"none\" points=\"" + upper + " " +
         lower + "\"/>\n";
  svg += "  <polyline id=\"raw\" fill=\"none\" stroke=\"#888888\" stroke-width=\"1\" points=\"" +
         raw + "\"/>\n";
  svg += "  <polyline id=\"smoothed\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2.5\" points=\"" +
         smooth + "\"/>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace tempco

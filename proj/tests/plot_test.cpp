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

#include <gtest/gtest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <sstream>

#include "tempco/filter.hpp"
#include "tempco/plot.hpp"

namespace tempco {
namespace {

namespace pt = boost::property_tree;

pt::ptree parse_svg(const std::string& svg) {
  std::istringstream in(svg);
  pt::ptree tree;
  pt::read_xml(in, tree);
  return tree;
}

// The child of <svg> with the given id attribute.
const pt::ptree& by_id(const pt::ptree& svg, const std::string& id) {
  for (const auto& [name, child] : svg) {
    if (auto a = child.get_optional<std::string>("<xmlattr>.id"); a && *a == id) return child;
  }
  throw std::runtime_error("no element with id " + id);
}

std::vector<std::pair<double, double>> points_of(const pt::ptree& node) {
  std::vector<std::pair<double, double>> out;
  std::istringstream in(node.get<std::string>("<xmlattr>.points"));
  std::string pair;
  while (in >> pair) {
    const auto comma = pair.find(',');
    out.emplace_back(std::stod(pair.substr(0, comma)), std::stod(pair.substr(comma + 1)));
  }
  return out;
}

// Vertical band extent (in pixels) at every frame.
std::vector<double> band_widths(const pt::ptree& svg, std::size_t n) {
  const auto pts = points_of(by_id(svg, "band"));
  EXPECT_EQ(pts.size(), 2 * n);
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& up = pts[i];
    const auto& lo = pts[2 * n - 1 - i];
    EXPECT_EQ(up.first, lo.first);
    w[i] = lo.second - up.second;
  }
  return w;
}

Tracklet spiky_fixture() {
  std::vector<double> q;
  for (int t = 0; t < 60; ++t) q.push_back(2.0 + 0.3 * std::sin(0.7 * t) + (t == 20 ? -5.0 : 0.0));
  return Tracklet::from_logits("fixture", ClassLabel::live(), q);
}

TEST(Plot, ParsesAsSvg) {
  const auto tr = spiky_fixture();
  const auto svg = render_svg(tr, run_filter(tr, FilterConfig{}));
  const auto tree = parse_svg(svg);
  const auto& root = tree.get_child("svg");
  EXPECT_EQ(root.get<std::string>("<xmlattr>.xmlns"), "http://www.w3.org/2000/svg");
  EXPECT_EQ(root.get<std::string>("title"), "fixture");
  EXPECT_EQ(by_id(root, "xlabel").data(), "frame index");
  EXPECT_EQ(by_id(root, "ylabel").data(), "probability");
  EXPECT_EQ(by_id(root, "raw").get<double>("<xmlattr>.stroke-width"), 1.0);
  EXPECT_GT(by_id(root, "smoothed").get<double>("<xmlattr>.stroke-width"), 1.0);
  EXPECT_EQ(points_of(by_id(root, "raw")).size(), tr.size());
  EXPECT_EQ(by_id(root, "band").get<std::string>("<xmlattr>.data-mapping"), kBandMapping);
  EXPECT_EQ(root.get<std::string>("desc"), kBandMapping);
}

TEST(Plot, EscapesTrackletId) {
  const auto tr = Tracklet::from_logits("a<b&\"c\"", ClassLabel::live(), std::vector<double>{0.0});
  const auto tree = parse_svg(render_svg(tr, run_filter(tr, FilterConfig{})));
  EXPECT_EQ(tree.get<std::string>("svg.title"), "a<b&\"c\"");
}

TEST(Plot, ConstantStreamIsFlatWithZeroWidthBand) {
  const auto tr = Tracklet::from_logits("c", ClassLabel::live(), std::vector<double>(30, 1.3));
  const auto smoothed = run_filter(tr, FilterConfig{});
  const auto root = parse_svg(render_svg(tr, smoothed)).get_child("svg");
  const auto line = points_of(by_id(root, "smoothed"));
  for (const auto& p : line) EXPECT_EQ(p.second, line.front().second);
  const double expected_y = PlotLayout{}.margin_top + PlotLayout{}.plot_height() * (1.0 - logistic(1.3));
  EXPECT_NEAR(line.front().second, expected_y, 5e-4);
  const auto w = band_widths(root, tr.size());
  // Frame 0 carries the bootstrap variance; every later frame has none.
  for (std::size_t i = 1; i < w.size(); ++i) EXPECT_EQ(w[i], 0.0);
}

TEST(Plot, BandShrinksAfterSpikeLeavesWindow) {
  const auto tr = spiky_fixture();
  const auto root = parse_svg(render_svg(tr, run_filter(tr, FilterConfig{}))).get_child("svg");
  const auto w = band_widths(root, tr.size());
  const double during = *std::max_element(w.begin() + 21, w.begin() + 26);
  const double after = *std::max_element(w.begin() + 30, w.begin() + 45);
  EXPECT_GT(during, 0.0);
  EXPECT_LT(after, 0.5 * during);
  for (double v : w) EXPECT_GE(v, 0.0);
}

TEST(Plot, RejectsMisalignedInput) {
  const auto tr = spiky_fixture();
  auto smoothed = run_filter(tr, FilterConfig{});
  smoothed.pop_back();
  EXPECT_THROW(render_svg(tr, smoothed), ValidationError);
}

TEST(Plot, Deterministic) {
  const auto tr = spiky_fixture();
  const auto s = run_filter(tr, FilterConfig{});
  EXPECT_EQ(render_svg(tr, s), render_svg(tr, s));
}

}  // namespace
}  // namespace tempco

// Copyright 2026 The Panoptic Affinity Authors.
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "panoptic/panoptic_map.hpp"
#include "panoptic/tensor_io.hpp"
#include "test_support.hpp"

using namespace panoptic;
using namespace panoptic::testing;

namespace {

void check_consistent(const PanopticMap& m) {
  std::vector<std::uint64_t> area(m.segments.size(), 0);
  for (auto x : m.label_map.data()) {
    if (x == kVoid) continue;
    REQUIRE(x < m.segments.size());
    ++area[x];
  }
  std::set<std::uint32_t> stuff;
  for (std::size_t s = 0; s < m.segments.size(); ++s) {
    CHECK(m.segments[s].area == area[s]);
    if (m.segments[s].kind == SegmentKind::kStuff) CHECK(stuff.insert(m.segments[s].class_id).second);
  }
}

}  // namespace

TEST_CASE("argmax over one-hot stuff channels reproduces the partition") {
  const ClassCatalog cat{3, 0, {}};
  LabelMap cls(5, 6, 0);
  paint(cls, {0, 0, 3, 2}, 1);
  paint(cls, {3, 3, 6, 5}, 2);
  const Tensor3 p = one_hot_v(cls, 3);
  const auto dets = append_stuff_boxes({}, cat, 5, 6);
  const auto pot = build_potential(p, cat, dets, Variant::kB, false);
  const PanopticMap m = infer_panoptic(pot.psi, pot.channels);
  CHECK(m.class_map() == cls);
  CHECK(m.void_count() == 0);
  check_consistent(m);
}

TEST_CASE("disjoint thing channels give two instances") {
  std::vector<ChannelMeta> ch = {{SegmentKind::kStuff, 0, 0}, {SegmentKind::kThing, 1, 1},
                                 {SegmentKind::kThing, 1, 2}};
  Tensor3 p(4, 4, 3);
  for (std::size_t i = 0; i < 16; ++i) p.pixel(i)[0] = 0.5;
  for (std::size_t c = 0; c < 2; ++c) p(0, c, 1) = 1.0;
  for (std::size_t r = 2; r < 4; ++r) {
    for (std::size_t c = 1; c < 4; ++c) p(r, c, 2) = 1.0;
  }
  const PanopticMap m = infer_panoptic(p, ch);
  REQUIRE(m.segments.size() == 3);
  CHECK(m.segments[1].area == 2);
  CHECK(m.segments[1].instance_id == 1);
  CHECK(m.segments[2].area == 6);
  CHECK(m.segments[2].instance_id == 2);
  CHECK(m.segments[2].encoded_id() == 1002);
  CHECK_THROWS_AS(infer_panoptic(Tensor3(4, 4, 2), ch), DimensionError);
}

TEST_CASE("argmax never emits void on random potentials") {
  std::mt19937_64 rng(6);
  SynthConfig cfg;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SyntheticScene s = synth_scene(cfg, seed);
    const auto dets = append_stuff_boxes(s.cues.detections, s.cues.catalog, 32, 32);
    auto pot = build_potential(s.cues.v, s.cues.catalog, dets, Variant::kB, false);
    for (auto& x : pot.psi.data()) x += 0.01 * std::uniform_real_distribution<double>(0, 1)(rng);
    const PanopticMap m = infer_panoptic(pot.psi, pot.channels);
    CHECK(m.void_count() == 0);
    check_consistent(m);
  }
}

TEST_CASE("merger drops an instance that lost too much to a higher score") {
  const SceneCues s = conflict_scene();
  MergerParams mp;
  mp.overlap_threshold = 0.5;
  mp.stuff_area_threshold = 0;
  const PanopticMap m = heuristic_merge(s.v, s.catalog, s.detections, mp);
  std::size_t things = 0;
  for (const auto& seg : m.segments) things += seg.kind == SegmentKind::kThing;
  CHECK(things == 1);
  // Rows 5 and 6 belonged only to the dropped instance; the stuff fill takes them.
  for (std::size_t c = 0; c < 10; ++c) {
    CHECK(m.segments[m.label_map(5, c)].kind == SegmentKind::kStuff);
    CHECK(m.segments[m.label_map(6, c)].class_id == 0);
  }
  CHECK(m.void_count() == 0);
  check_consistent(m);

  mp.overlap_threshold = 0.7;
  const PanopticMap kept = heuristic_merge(s.v, s.catalog, s.detections, mp);
  things = 0;
  for (const auto& seg : kept.segments) things += seg.kind == SegmentKind::kThing;
  CHECK(things == 2);
}

TEST_CASE("merger voids small stuff regions and needs masks") {
  const SceneCues s = conflict_scene();
  MergerParams mp;
  mp.stuff_area_threshold = 16;
  const PanopticMap m = heuristic_merge(s.v, s.catalog, s.detections, mp);
  CHECK(m.void_count() == 9);
  for (std::size_t r = 12; r < 15; ++r) CHECK(m.label_map(r, 13) == kVoid);
  check_consistent(m);

  SceneCues bare = s;
  bare.detections[1].mask.reset();
  CHECK_THROWS_AS(heuristic_merge(bare.v, bare.catalog, bare.detections, mp), CueError);

  mp.instance_score_threshold = 0.95;
  const PanopticMap none = heuristic_merge(s.v, s.catalog, s.detections, mp);
  for (const auto& seg : none.segments) CHECK(seg.kind == SegmentKind::kStuff);
}

TEST_CASE("score ties fall back to detection order") {
  SceneCues s = conflict_scene();
  s.detections[1].score = s.detections[0].score;
  MergerParams mp;
  mp.stuff_area_threshold = 0;
  const PanopticMap m = heuristic_merge(s.v, s.catalog, s.detections, mp);
  CHECK(m.segments[m.label_map(0, 0)].kind == SegmentKind::kThing);
  CHECK(m.segments[m.label_map(6, 0)].kind == SegmentKind::kStuff);
  std::swap(s.detections[0], s.detections[1]);
  const PanopticMap sw = heuristic_merge(s.v, s.catalog, s.detections, mp);
  CHECK(sw.segments[sw.label_map(6, 0)].kind == SegmentKind::kThing);
}

TEST_CASE("trimming small stuff") {
  const SceneCues s = conflict_scene();
  const auto dets = append_stuff_boxes(s.detections, s.catalog, 16, 16);
  const auto pot = build_potential(s.v, s.catalog, dets, Variant::kB, false);
  const PanopticMap m = infer_panoptic(pot.psi, pot.channels);
  CHECK(trim_small_stuff(m, 0) == m);
  const PanopticMap t = trim_small_stuff(m, 16);
  CHECK(t.void_count() == 9);
  CHECK(trim_small_stuff(t, 16) == t);
  check_consistent(t);
  const PanopticMap huge = trim_small_stuff(m, 100000);
  for (const auto& seg : huge.segments) CHECK(seg.kind == SegmentKind::kThing);
}

TEST_CASE("ground truth conversion and map IO") {
  const SyntheticScene s = synth_scene(SynthConfig{}, 5);
  GroundTruthPanoptic gt = s.gt;
  gt.label_map[0] = kIgnore;
  const PanopticMap m = to_panoptic_map(gt, s.cues.catalog);
  CHECK(m.void_count() == 1);
  check_consistent(m);
  TempDir dir("map");
  save_panoptic(m, dir.path());
  CHECK(load_panoptic(dir.path()) == m);
  const auto raw = read_panc(dir / "panoptic.panc");
  CHECK(raw.dtype == DType::kU32);
  const LabelMap enc = labels_from_raw(raw);
  CHECK(enc[0] == kVoid);
  CHECK(enc[1] == m.segments[m.label_map[1]].encoded_id());
}

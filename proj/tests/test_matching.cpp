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

#include <cmath>
#include <set>

#include "panoptic/matching.hpp"
#include "test_support.hpp"

using namespace panoptic;
using namespace panoptic::testing;

TEST_CASE("tight boxes from segments") {
  LabelMap m(6, 8, 0);
  m(3, 5) = 1;
  m(0, 0) = 2;
  m(2, 2) = 2;
  const auto boxes = boxes_from_segments(make_gt(m, {0, 1, 1}));
  REQUIRE(boxes.size() == 3);
  CHECK(boxes[0].box == Box{0, 0, 8, 6});
  CHECK(boxes[1].box == Box{5, 3, 6, 4});
  CHECK(boxes[2].box == Box{0, 0, 3, 3});
}

TEST_CASE("box IoU") {
  CHECK(box_iou({1, 1, 4, 5}, {1, 1, 4, 5}, 3, 3) == 1.0);
  CHECK(box_iou({0, 0, 2, 2}, {1, 1, 3, 3}, 3, 3) == doctest::Approx(1.0 / 7.0).epsilon(1e-15));
  CHECK(box_iou({1, 1, 4, 5}, {1, 1, 4, 5}, 3, 4) == 0.0);
  CHECK(box_iou({0, 0, 2, 2}, {2, 0, 4, 2}, 3, 3) == 0.0);
}

TEST_CASE("assignment on the hand IoU matrix") {
  Matrix w(2, 3, std::vector<double>{0.9, 0.6, 0.0, 0.0, 0.7, 0.55});
  const auto a = solve_assignment(w);
  CHECK(a == std::vector<int>{0, 1});
  CHECK(w(0, 0) + w(1, 1) == doctest::Approx(brute_force_assignment(w)));
  CHECK(brute_force_assignment(w) == doctest::Approx(1.6));
}

TEST_CASE("assignment matches brute force on random rectangular matrices") {
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> dim(1, 7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t r = dim(rng), c = dim(rng);
    Matrix w(r, c);
    for (auto& x : w.data()) x = u(rng) < 0.3 ? 0.0 : u(rng);
    const auto a = solve_assignment(w);
    REQUIRE(a.size() == r);
    double total = 0.0;
    std::set<int> cols;
    for (std::size_t i = 0; i < r; ++i) {
      if (a[i] < 0) continue;
      CHECK(w(i, std::size_t(a[i])) > 0.0);
      CHECK(cols.insert(a[i]).second);
      total += w(i, std::size_t(a[i]));
    }
    CHECK(total == doctest::Approx(brute_force_assignment(w)).epsilon(1e-12));
  }
}

TEST_CASE("exact detections give the identity matching") {
  SynthConfig cfg;
  const SyntheticScene s = synth_scene(cfg, 12);
  const auto dets = append_stuff_boxes(s.cues.detections, s.cues.catalog, 32, 32);
  const MatchResult m = match_segments(s.gt, dets, s.cues.catalog, 0.5);
  CHECK(m.unmatched_gt.empty());
  CHECK(m.removed_duplicates.empty());
  CHECK(m.pairs.size() == s.gt.segments.size());
  for (const auto& p : m.pairs) {
    const auto& seg = s.gt.segments[p.gt_segment];
    CHECK(dets[p.detection].class_id == seg.class_id);
    if (s.cues.catalog.is_stuff(seg.class_id)) {
      CHECK(p.by_identity);
    } else {
      CHECK(p.box_iou == 1.0);
    }
  }
}

TEST_CASE("infeasible detections leave every thing unmatched") {
  LabelMap m(10, 10, 0);
  paint(m, {0, 0, 4, 4}, 1);
  paint(m, {6, 6, 10, 10}, 2);
  const ClassCatalog cat{1, 1, {}};
  const auto gt = make_gt(m, {0, 1, 1});
  const auto dets = append_stuff_boxes({make_det({3, 0, 7, 4}, 0.9, 1)}, cat, 10, 10);
  const MatchResult r = match_segments(gt, dets, cat, 0.5);
  CHECK(r.unmatched_gt == std::vector<std::uint32_t>{1, 2});
  CHECK(r.pairs.size() == 1);
  CHECK(r.removed_duplicates.empty());
}

TEST_CASE("losing contenders become duplicates") {
  LabelMap m(12, 12, 0);
  paint(m, {0, 0, 10, 10}, 1);
  const ClassCatalog cat{1, 1, {}};
  const auto gt = make_gt(m, {0, 1});
  std::vector<Detection> things = {make_det({0, 0, 10, 9}, 0.7, 1), make_det({0, 0, 10, 10}, 0.9, 1),
                                   make_det({11, 11, 12, 12}, 0.9, 1)};
  const auto dets = append_stuff_boxes(things, cat, 12, 12);
  const MatchResult r = match_segments(gt, dets, cat, 0.5);
  CHECK(r.removed_duplicates == std::vector<std::size_t>{0});
  bool thing_pair = false;
  for (const auto& p : r.pairs) {
    if (p.gt_segment == 1) {
      CHECK(p.detection == 1);
      thing_pair = true;
    }
  }
  CHECK(thing_pair);

  const PrunedDetections pruned = remove_duplicates(dets, r);
  CHECK(pruned.detections.size() == dets.size() - 1);
  CHECK(pruned.source_index.front() == 1);
}

TEST_CASE("matching optimum equals enumeration on random scenes") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> jit(-3, 3);
  std::uniform_int_distribution<int> extra(0, 3);
  SynthConfig cfg;
  cfg.n_instances = 5;
  cfg.min_instance_side = 5;
  cfg.max_instance_side = 10;
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    const SyntheticScene s = synth_scene(cfg, seed);
    std::vector<Detection> things;
    for (const auto& d : s.cues.detections) {
      Detection j = d;
      j.box = Box{d.box.x0 + jit(rng), d.box.y0 + jit(rng), d.box.x1 + jit(rng), d.box.y1 + jit(rng)}
                  .clipped(32, 32);
      if (j.box.area() > 0) things.push_back(j);
    }
    const int n_extra = extra(rng);
    for (int e = 0; e < n_extra && !s.cues.detections.empty(); ++e) {
      Detection j = s.cues.detections[std::size_t(e) % s.cues.detections.size()];
      j.box = Box{j.box.x0 + jit(rng), j.box.y0, j.box.x1, j.box.y1 + jit(rng)}.clipped(32, 32);
      if (j.box.area() > 0) things.push_back(j);
    }
    const auto dets = append_stuff_boxes(things, s.cues.catalog, 32, 32);
    const MatchResult r = match_segments(s.gt, dets, s.cues.catalog, 0.5);

    std::vector<std::uint32_t> thing_segs;
    for (const auto& seg : s.gt.segments) {
      if (s.cues.catalog.is_thing(seg.class_id)) thing_segs.push_back(seg.index);
    }
    Matrix w(thing_segs.size(), things.size());
    for (std::size_t i = 0; i < thing_segs.size(); ++i) {
      const auto& seg = s.gt.segments[thing_segs[i]];
      for (std::size_t j = 0; j < things.size(); ++j) {
        const double iou = box_iou(seg.box, things[j].box, seg.class_id, things[j].class_id);
        w(i, j) = iou >= 0.5 ? iou : 0.0;
      }
    }
    double thing_total = 0.0;
    std::set<std::size_t> used_dets;
    std::set<std::uint32_t> used_gt;
    for (const auto& p : r.pairs) {
      CHECK(used_dets.insert(p.detection).second);
      CHECK(used_gt.insert(p.gt_segment).second);
      if (!p.by_identity) {
        CHECK(p.box_iou >= 0.5);
        thing_total += p.box_iou;
      }
    }
    CHECK(thing_total == doctest::Approx(brute_force_assignment(w)).epsilon(1e-12));
  }
}

TEST_CASE("target map labels matched pixels and ignores the rest") {
  SynthConfig cfg;
  const SyntheticScene s = synth_scene(cfg, 2);
  const auto dets = append_stuff_boxes(s.cues.detections, s.cues.catalog, 32, 32);
  const MatchResult m = match_segments(s.gt, dets, s.cues.catalog, 0.5);
  const PrunedDetections pr = remove_duplicates(dets, m);
  const auto pot = build_potential(s.cues.v, s.cues.catalog, pr.detections, Variant::kB, false);
  const LabelMap t = build_target_map(s.gt, m, pot.channels, pr.source_index);
  CHECK(t.count(kIgnore) == 0);
  for (std::size_t p = 0; p < t.size(); ++p) {
    CHECK(pot.channels[t[p]].class_id == s.gt.segments[s.gt.label_map[p]].class_id);
  }

  LabelMap lm(10, 10, 0);
  paint(lm, {0, 0, 6, 6}, 1);
  lm(6, 0) = 1;  // 37 pixels
  const ClassCatalog cat{1, 1, {}};
  const auto gt = make_gt(lm, {0, 1});
  const auto only_stuff = append_stuff_boxes({}, cat, 10, 10);
  const MatchResult mm = match_segments(gt, only_stuff, cat, 0.5);
  const PrunedDetections pp = remove_duplicates(only_stuff, mm);
  const auto pot2 = build_potential(Tensor3(10, 10, 2, 0.5), cat, pp.detections, Variant::kB, false);
  const LabelMap t2 = build_target_map(gt, mm, pot2.channels, pp.source_index);
  CHECK(t2.count(kIgnore) == 37);
  CHECK(t2.count(0) == 63);
}

TEST_CASE("loss closed forms") {
  const Tensor3 uniform(3, 4, 5, 0.3);
  const LossResult u = panoptic_matching_loss(uniform, LabelMap(3, 4, 2));
  CHECK(u.loss == doctest::Approx(std::log(5.0)).epsilon(1e-15));
  CHECK(u.counted_pixels == 12);

  Tensor3 sharp(3, 3, 4);
  for (std::size_t p = 0; p < 9; ++p) sharp.pixel(p)[p % 4] = 50.0;
  LabelMap target(3, 3);
  for (std::size_t p = 0; p < 9; ++p) target[p] = std::uint32_t(p % 4);
  CHECK(panoptic_matching_loss(sharp, target).loss <= 1e-20);

  const LossResult ign = panoptic_matching_loss(sharp, LabelMap(3, 3, kIgnore));
  CHECK(ign.loss == 0.0);
  CHECK(ign.counted_pixels == 0);
  for (double x : ign.grad_p.data()) CHECK(x == 0.0);
}

TEST_CASE("loss gradient matches central differences") {
  std::mt19937_64 rng(44);
  std::uniform_int_distribution<std::uint32_t> lab(0, 6);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor3 p = random_tensor(8, 8, 6, rng, -3, 3);
    LabelMap t(8, 8);
    for (auto& x : t.data()) x = lab(rng) == 6 ? kIgnore : lab(rng) % 6;
    const LossResult an = panoptic_matching_loss(p, t);
    const double eps = 1e-6;
    double worst = 0.0, scale = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double keep = p.data()[i];
      p.data()[i] = keep + eps;
      const double up = panoptic_matching_loss(p, t).loss;
      p.data()[i] = keep - eps;
      const double dn = panoptic_matching_loss(p, t).loss;
      p.data()[i] = keep;
      const double num = (up - dn) / (2 * eps);
      worst = std::max(worst, std::abs(num - an.grad_p.data()[i]));
      scale = std::max({scale, std::abs(num), std::abs(an.grad_p.data()[i])});
    }
    CHECK(worst / scale <= 1e-6);
    for (std::size_t px = 0; px < t.size(); ++px) {
      if (t[px] != kIgnore) continue;
      for (double g : an.grad_p.pixel(px)) CHECK(g == 0.0);
    }
  }
}

TEST_CASE("loss is equivariant under channel permutation") {
  std::mt19937_64 rng(45);
  const Tensor3 p = random_tensor(6, 6, 5, rng, -2, 2);
  LabelMap t(6, 6);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::uint32_t(rng() % 5);
  const std::vector<std::uint32_t> perm = {3, 0, 4, 1, 2};
  Tensor3 q(6, 6, 5);
  LabelMap u(6, 6);
  for (std::size_t px = 0; px < t.size(); ++px) {
    for (std::size_t k = 0; k < 5; ++k) q.pixel(px)[perm[k]] = p.pixel(px)[k];
    u[px] = perm[t[px]];
  }
  CHECK(panoptic_matching_loss(p, t).loss == panoptic_matching_loss(q, u).loss);
}

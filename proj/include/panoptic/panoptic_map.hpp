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

// Panoptic outputs and the two ways of producing them: argmax over the
// panoptic logits, and the rule-based merger used as a baseline.

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "panoptic/potential.hpp"
#include "panoptic/scene.hpp"

namespace panoptic {

struct PanopticSegment {
  std::uint32_t class_id = 0;
  SegmentKind kind = SegmentKind::kStuff;
  std::uint32_t instance_id = 0;  // 0 for stuff, 1.. for things
  std::uint64_t area = 0;

  /// class_id * 1000 + instance_id, the on-disk encoding.
  std::uint32_t encoded_id() const { return class_id * 1000u + instance_id; }

  bool operator==(const PanopticSegment&) const = default;
};

/// label_map holds indices into `segments`, or kVoid.
struct PanopticMap {
  LabelMap label_map;
  std::vector<PanopticSegment> segments;

  std::size_t void_count() const { return label_map.count(kVoid); }
  /// Per-pixel class id; VOID pixels map to kIgnore.
  LabelMap class_map() const;

  bool operator==(const PanopticMap&) const = default;
};

/// Segment indices become ground-truth segments; IGNORE becomes VOID.
PanopticMap to_panoptic_map(const GroundTruthPanoptic& gt, const ClassCatalog& catalog);

/// Argmax over channels. Every pixel is assigned; channels that win no pixel
/// produce no segment. Thing instance ids follow channel order from 1.
PanopticMap infer_panoptic(const Tensor3& p, const std::vector<ChannelMeta>& channels);

struct MergerParams {
  double instance_score_threshold = 0.5;
  double overlap_threshold = 0.5;
  std::uint64_t stuff_area_threshold = 64;

  void check() const;
};

/// Rule-based merger: paste score-sorted binarised masks, drop instances that
/// lost too much of their mask to earlier ones, fill the rest with the stuff
/// argmax of V, and void small stuff regions. Requires masks (CueError).
PanopticMap heuristic_merge(const Tensor3& v, const ClassCatalog& catalog,
                            const std::vector<Detection>& dets, const MergerParams& params);

/// Stuff segments smaller than `area_threshold` become VOID.
PanopticMap trim_small_stuff(const PanopticMap& map, std::uint64_t area_threshold);

/// u32 grid of encoded ids (VOID = 0xFFFFFFFF) plus a segments.json sidecar.
void save_panoptic(const PanopticMap& map, const std::filesystem::path& dir);
PanopticMap load_panoptic(const std::filesystem::path& dir);

}  // namespace panoptic

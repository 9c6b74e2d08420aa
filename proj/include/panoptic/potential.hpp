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

// Dynamic potential: one channel per candidate panoptic segment, filled from
// semantic probabilities, detection scores and (optionally) instance masks.

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "panoptic/scene.hpp"

namespace panoptic {

/// How a thing channel combines V with its mask.
///   A: V * M, without the detection score
///   B: s * V * M
///   C: s * (V + M)
/// Without masks B and C reduce to s * V and A to V.
enum class Variant { kA, kB, kC };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view s);

enum class SegmentKind { kThing, kStuff };

std::string_view to_string(SegmentKind k);

struct ChannelMeta {
  SegmentKind kind = SegmentKind::kStuff;
  std::uint32_t class_id = 0;
  std::size_t detection_index = 0;  // index into the detection list given to build_potential

  bool operator==(const ChannelMeta&) const = default;
};

struct DynamicPotential {
  Tensor3 psi;
  std::vector<ChannelMeta> channels;  // stuff first, then things in detection order
  std::vector<std::string> warnings;  // detections dropped while rasterising

  std::size_t channel_of_detection(std::size_t detection_index) const;
};

/// Appends one full-image pseudo-detection per stuff class (score 1, no mask).
std::vector<Detection> append_stuff_boxes(std::vector<Detection> dets, const ClassCatalog& catalog,
                                          std::size_t height, std::size_t width);

/// Drops thing detections scoring below `threshold`; stuff pseudo-detections
/// always survive. Order is preserved.
std::vector<Detection> filter_by_score(const std::vector<Detection>& dets, double threshold,
                                       const ClassCatalog& catalog);

/// Rasterises `dets` (which must already include stuff pseudo-boxes) into Ψ.
/// With `use_masks`, every thing detection must carry a mask (CueError
/// otherwise). Boxes are clipped to the grid; detections left empty are
/// dropped and reported in `warnings`.
DynamicPotential build_potential(const Tensor3& v, const ClassCatalog& catalog,
                                 const std::vector<Detection>& dets, Variant variant,
                                 bool use_masks);

}  // namespace panoptic

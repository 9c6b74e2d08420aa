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

// Panoptic matching loss: ground-truth segments are assigned to detections by
// class-constrained box IoU, then P is supervised with softmax cross-entropy.

#pragma once

#include <cstdint>
#include <vector>

#include "panoptic/potential.hpp"
#include "panoptic/scene.hpp"

namespace panoptic {

struct ClassBox {
  std::uint32_t class_id = 0;
  Box box;

  bool operator==(const ClassBox&) const = default;
};

struct MatchPair {
  std::uint32_t gt_segment = 0;
  std::size_t detection = 0;
  double box_iou = 0.0;
  bool by_identity = false;  // stuff segment paired with its class pseudo-box

  bool operator==(const MatchPair&) const = default;
};

struct MatchResult {
  std::vector<MatchPair> pairs;
  std::vector<std::uint32_t> unmatched_gt;
  std::vector<std::size_t> removed_duplicates;

  double total_iou() const;
};

/// Tight box per ground-truth segment, in segment-list order.
std::vector<ClassBox> boxes_from_segments(const GroundTruthPanoptic& gt);

/// Half-open box IoU; 0 across different classes.
double box_iou(const Box& a, const Box& b, std::uint32_t class_a, std::uint32_t class_b);

/// Maximum-weight assignment on a rows x cols weight matrix. Entries <= 0 are
/// treated as forbidden. Returns, per row, the assigned column or -1.
std::vector<int> solve_assignment(const Matrix& weights);

/// Thing segments go through an optimal assignment on box IoU, with pairs
/// below `t` forbidden; stuff segments pair with their class pseudo-box.
/// Unmatched thing detections whose best IoU against any segment reaches `t`
/// are duplicates.
MatchResult match_segments(const GroundTruthPanoptic& gt, const std::vector<Detection>& dets,
                           const ClassCatalog& catalog, double t);

/// Detections with the duplicates removed, plus for every kept detection its
/// index in the input list.
struct PrunedDetections {
  std::vector<Detection> detections;
  std::vector<std::size_t> source_index;
};
PrunedDetections remove_duplicates(const std::vector<Detection>& dets, const MatchResult& match);

/// Per-pixel target channel of Ψ, or kIgnore. `channels` is the layout of
/// the potential built from the pruned detections and `source_index` maps
/// its detection indices back to the list `match` refers to.
LabelMap build_target_map(const GroundTruthPanoptic& gt, const MatchResult& match,
                          const std::vector<ChannelMeta>& channels,
                          const std::vector<std::size_t>& source_index);

struct LossResult {
  double loss = 0.0;
  Tensor3 grad_p;
  std::size_t counted_pixels = 0;
};

/// Mean softmax cross-entropy over non-ignored pixels, with its exact
/// gradient. An all-ignore target gives zero loss and zero gradient.
LossResult panoptic_matching_loss(const Tensor3& p, const LabelMap& target);

}  // namespace panoptic

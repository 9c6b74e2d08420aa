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

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "panoptic/numerics.hpp"

namespace panoptic {

/// Class ids 0..n_stuff-1 are stuff, n_stuff..n_stuff+n_thing-1 are things.
struct ClassCatalog {
  std::uint32_t n_stuff = 0;
  std::uint32_t n_thing = 0;
  std::vector<std::string> names;  // empty or n_stuff + n_thing entries

  std::uint32_t n_classes() const { return n_stuff + n_thing; }
  bool is_stuff(std::uint32_t class_id) const { return class_id < n_stuff; }
  bool is_thing(std::uint32_t class_id) const {
    return class_id >= n_stuff && class_id < n_classes();
  }

  bool operator==(const ClassCatalog&) const = default;
};

/// Axis-aligned box on the downsampled grid, half-open: [x0,x1) x [y0,y1).
struct Box {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long area() const { return x1 > x0 && y1 > y0 ? long(x1 - x0) * long(y1 - y0) : 0; }
  bool contains(int row, int col) const { return col >= x0 && col < x1 && row >= y0 && row < y1; }
  bool valid_in(std::size_t height, std::size_t width) const {
    return 0 <= x0 && x0 < x1 && x1 <= int(width) && 0 <= y0 && y0 < y1 && y1 <= int(height);
  }
  Box clipped(std::size_t height, std::size_t width) const;

  bool operator==(const Box&) const = default;
};

/// A mask plane covers the full downsampled grid (values in [0,1]).
using MaskPlane = BasicMatrix<double>;

struct Detection {
  Box box;
  double score = 1.0;
  std::uint32_t class_id = 0;
  std::optional<MaskPlane> mask;

  bool operator==(const Detection&) const = default;
};

struct SceneCues {
  ClassCatalog catalog;
  Tensor3 v;  // semantic probabilities, channels == n_classes
  std::vector<Detection> detections;
  Tensor3 features;

  std::size_t height() const { return v.height(); }
  std::size_t width() const { return v.width(); }

  bool operator==(const SceneCues&) const = default;
};

struct GtSegment {
  std::uint32_t index = 0;
  std::uint32_t class_id = 0;
  Box box;
  std::uint64_t area = 0;

  bool operator==(const GtSegment&) const = default;
};

struct GroundTruthPanoptic {
  LabelMap label_map;  // segment indices, kIgnore allowed
  std::vector<GtSegment> segments;

  const GtSegment* find(std::uint32_t index) const;

  bool operator==(const GroundTruthPanoptic&) const = default;
};

/// Knobs of the synthetic scene generator.
struct SynthConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::uint32_t n_stuff = 3;
  std::uint32_t n_thing = 2;
  std::uint32_t n_instances = 3;
  int min_instance_side = 8;
  int max_instance_side = 14;
  double box_truncation = 0.0;  // each side scaled by (1 - truncation), centred
  double box_jitter = 0.0;      // std-dev of per-coordinate offsets, in pixels
  double confusion_rate = 0.0;  // V mass moved off the true class on thing pixels
  double feature_noise = 0.1;
  std::size_t feature_channels = 16;
  bool with_masks = false;
  double mask_foreground = 0.85;
  double mask_background = 0.15;
  double mask_noise = 0.1;

  bool operator==(const SynthConfig&) const = default;
};

struct SyntheticScene {
  SceneCues cues;
  GroundTruthPanoptic gt;
};

/// Deterministic in (cfg, seed). Throws GenerationError when the instances
/// cannot be placed without overlap.
SyntheticScene synth_scene(const SynthConfig& cfg, std::uint64_t seed);

/// Applies the truncation rule to a box: each side is scaled by
/// (1 - truncation) and the result stays centred.
Box shrink_box(const Box& box, double truncation);

/// Tight half-open box around every pixel of `label_map` equal to `index`.
std::optional<Box> tight_box(const LabelMap& label_map, std::uint32_t index);

struct Violation {
  std::string field;
  std::string rule;
};

/// Empty iff every SceneCues invariant holds.
std::vector<Violation> validate_scene(const SceneCues& scene);
std::vector<Violation> validate_ground_truth(const GroundTruthPanoptic& gt,
                                             const ClassCatalog& catalog);

struct SceneContainer {
  SceneCues cues;
  std::optional<GroundTruthPanoptic> gt;
  std::optional<SynthConfig> synth_config;  // echoed when the scene was generated
  std::optional<std::uint64_t> seed;

  bool operator==(const SceneContainer&) const = default;
};

/// Writes `dir/manifest.json` plus one PANC file per tensor.
void save_scene(const SceneContainer& scene, const std::filesystem::path& dir);
SceneContainer load_scene(const std::filesystem::path& dir);

}  // namespace panoptic

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

#include "panoptic/potential.hpp"

namespace panoptic {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kA: return "A";
    case Variant::kB: return "B";
    case Variant::kC: return "C";
  }
  return "?";
}

Variant parse_variant(std::string_view s) {
  if (s == "A" || s == "a") return Variant::kA;
  if (s == "B" || s == "b") return Variant::kB;
  if (s == "C" || s == "c") return Variant::kC;
  throw CueError("unknown potential variant '" + std::string(s) + "'");
}

std::string_view to_string(SegmentKind k) { return k == SegmentKind::kThing ? "thing" : "stuff"; }

std::size_t DynamicPotential::channel_of_detection(std::size_t detection_index) const {
  for (std::size_t k = 0; k < channels.size(); ++k) {
    if (channels[k].detection_index == detection_index) return k;
  }
  throw IndexError("detection " + std::to_string(detection_index) + " has no channel");
}

std::vector<Detection> append_stuff_boxes(std::vector<Detection> dets, const ClassCatalog& catalog,
                                          std::size_t height, std::size_t width) {
  for (std::uint32_t l = 0; l < catalog.n_stuff; ++l) {
    Detection d;
    d.box = Box{0, 0, int(width), int(height)};
    d.score = 1.0;
    d.class_id = l;
    dets.push_back(std::move(d));
  }
  return dets;
}

std::vector<Detection> filter_by_score(const std::vector<Detection>& dets, double threshold,
                                       const ClassCatalog& catalog) {
  std::vector<Detection> out;
  for (const auto& d : dets) {
    if (catalog.is_stuff(d.class_id) || d.score >= threshold) out.push_back(d);
  }
  return out;
}

DynamicPotential build_potential(const Tensor3& v, const ClassCatalog& catalog,
                                 const std::vector<Detection>& dets, Variant variant,
                                 bool use_masks) {
  if (v.channels() != catalog.n_classes()) {
    throw DimensionError("V has " + std::to_string(v.channels()) + " channels, catalog has " +
                         std::to_string(catalog.n_classes()) + " classes");
  }
  const std::size_t H = v.height(), W = v.width();

  DynamicPotential out;
  struct Source {
    std::size_t det;
    Box box;
  };
  std::vector<Source> stuff, things;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const auto& d = dets[i];
    if (d.class_id >= catalog.n_classes()) {
      throw CueError("detection " + std::to_string(i) + " has unknown class " +
                     std::to_string(d.class_id));
    }
    const Box b = d.box.clipped(H, W);
    if (b.area() == 0) {
      out.warnings.push_back("detection " + std::to_string(i) + " dropped: empty after clipping");
      continue;
    }
    if (catalog.is_stuff(d.class_id)) {
      stuff.push_back({i, b});
    } else {
      if (use_masks && !d.mask) {
        throw CueError("detection " + std::to_string(i) +
                       " has no mask but masks are enabled for variant " +
                       std::string(to_string(variant)));
      }
      if (d.mask && (d.mask->rows() != H || d.mask->cols() != W)) {
        throw DimensionError("mask of detection " + std::to_string(i) + " is " +
                             d.mask->shape_string() + ", grid is " + std::to_string(H) + "x" +
                             std::to_string(W));
      }
      things.push_back({i, b});
    }
  }
  std::stable_sort(stuff.begin(), stuff.end(), [&](const Source& a, const Source& b) {
    return dets[a.det].class_id < dets[b.det].class_id;
  });

  const std::size_t K = stuff.size() + things.size();
  if (K == 0) throw CueError("no detections survive rasterisation");
  out.psi = Tensor3(H, W, K, 0.0);

  std::size_t k = 0;
  for (const auto& s : stuff) {
    const auto& d = dets[s.det];
    out.channels.push_back({SegmentKind::kStuff, d.class_id, s.det});
    for (int r = s.box.y0; r < s.box.y1; ++r)
      for (int c = s.box.x0; c < s.box.x1; ++c) out.psi(r, c, k) = d.score * v(r, c, d.class_id);
    ++k;
  }
  for (const auto& t : things) {
    const auto& d = dets[t.det];
    out.channels.push_back({SegmentKind::kThing, d.class_id, t.det});
    const bool masked = use_masks && d.mask.has_value();
    const double score = variant == Variant::kA ? 1.0 : d.score;
    for (int r = t.box.y0; r < t.box.y1; ++r) {
      for (int c = t.box.x0; c < t.box.x1; ++c) {
        const double vp = v(r, c, d.class_id);
        double value = vp;
        if (masked) {
          const double m = (*d.mask)(r, c);
          value = variant == Variant::kC ? vp + m : vp * m;
        }
        out.psi(r, c, k) = score * value;
      }
    }
    ++k;
  }
  return out;
}

}  // namespace panoptic

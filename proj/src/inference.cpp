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

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>

#include "panoptic/json_io.hpp"
#include "panoptic/panoptic_map.hpp"
#include "panoptic/tensor_io.hpp"

namespace panoptic {

LabelMap PanopticMap::class_map() const {
  LabelMap out(label_map.height(), label_map.width(), kIgnore);
  for (std::size_t p = 0; p < label_map.size(); ++p) {
    const std::uint32_t s = label_map[p];
    if (s != kVoid) out[p] = segments[s].class_id;
  }
  return out;
}

PanopticMap to_panoptic_map(const GroundTruthPanoptic& gt, const ClassCatalog& catalog) {
  PanopticMap out;
  out.label_map = LabelMap(gt.label_map.height(), gt.label_map.width(), kVoid);
  std::map<std::uint32_t, std::uint32_t> remap;
  std::uint32_t next_instance = 1;
  for (const auto& s : gt.segments) {
    PanopticSegment seg;
    seg.class_id = s.class_id;
    seg.kind = catalog.is_stuff(s.class_id) ? SegmentKind::kStuff : SegmentKind::kThing;
    seg.instance_id = seg.kind == SegmentKind::kThing ? next_instance++ : 0;
    remap[s.index] = std::uint32_t(out.segments.size());
    out.segments.push_back(seg);
  }
  for (std::size_t p = 0; p < gt.label_map.size(); ++p) {
    const std::uint32_t s = gt.label_map[p];
    if (s == kIgnore) continue;
    const auto it = remap.find(s);
    if (it == remap.end()) {
      throw CueError("ground-truth pixel references unlisted segment " + std::to_string(s));
    }
    out.label_map[p] = it->second;
    ++out.segments[it->second].area;
  }
  return out;
}

PanopticMap infer_panoptic(const Tensor3& p, const std::vector<ChannelMeta>& channels) {
  if (p.channels() != channels.size()) {
    throw DimensionError("logits " + p.shape_string() + " but " +
                         std::to_string(channels.size()) + " channel records");
  }
  const LabelMap winner = argmax_channels(p);
  std::vector<std::uint64_t> hits(channels.size(), 0);
  for (auto k : winner.data()) ++hits[k];

  // Channel -> segment, in channel order; stuff channels of one class share a segment.
  PanopticMap out;
  std::vector<std::uint32_t> channel_segment(channels.size(), kVoid);
  std::map<std::uint32_t, std::uint32_t> stuff_segment;
  std::uint32_t thing_ordinal = 0;
  for (std::size_t k = 0; k < channels.size(); ++k) {
    const auto& meta = channels[k];
    const bool thing = meta.kind == SegmentKind::kThing;
    if (thing) ++thing_ordinal;
    if (hits[k] == 0) continue;
    if (!thing) {
      const auto it = stuff_segment.find(meta.class_id);
      if (it != stuff_segment.end()) {
        channel_segment[k] = it->second;
        continue;
      }
    }
    PanopticSegment seg;
    seg.class_id = meta.class_id;
    seg.kind = meta.kind;
    seg.instance_id = thing ? thing_ordinal : 0;
    channel_segment[k] = std::uint32_t(out.segments.size());
    if (!thing) stuff_segment[meta.class_id] = channel_segment[k];
    out.segments.push_back(seg);
  }
  out.label_map = LabelMap(p.height(), p.width());
  for (std::size_t i = 0; i < winner.size(); ++i) {
    const std::uint32_t s = channel_segment[winner[i]];
    out.label_map[i] = s;
    ++out.segments[s].area;
  }
  return out;
}

void MergerParams::check() const {
  if (!(instance_score_threshold >= 0.0 && instance_score_threshold <= 1.0) ||
      !(overlap_threshold >= 0.0 && overlap_threshold <= 1.0)) {
    throw CueError("merger thresholds must lie in [0,1]");
  }
}

PanopticMap heuristic_merge(const Tensor3& v, const ClassCatalog& catalog,
                            const std::vector<Detection>& dets, const MergerParams& params) {
  params.check();
  if (v.channels() != catalog.n_classes()) {
    throw DimensionError("V has " + std::to_string(v.channels()) + " channels, catalog has " +
                         std::to_string(catalog.n_classes()));
  }
  const std::size_t H = v.height(), W = v.width();

  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (catalog.is_stuff(dets[i].class_id)) continue;
    if (!dets[i].mask) {
      throw CueError("heuristic merging needs instance masks; detection " + std::to_string(i) +
                     " has none");
    }
    if (dets[i].mask->rows() != H || dets[i].mask->cols() != W) {
      throw DimensionError("mask of detection " + std::to_string(i) + " is off-grid");
    }
    order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });

  PanopticMap out;
  out.label_map = LabelMap(H, W, kVoid);
  std::uint32_t next_instance = 1;
  for (std::size_t i : order) {
    const auto& d = dets[i];
    if (d.score < params.instance_score_threshold) continue;
    const Box b = d.box.clipped(H, W);
    std::uint64_t original = 0, remaining = 0;
    for (int r = b.y0; r < b.y1; ++r) {
      for (int c = b.x0; c < b.x1; ++c) {
        if ((*d.mask)(r, c) < 0.5) continue;
        ++original;
        if (out.label_map(r, c) == kVoid) ++remaining;
      }
    }
    if (original == 0) continue;
    if (double(remaining) / double(original) < 1.0 - params.overlap_threshold) continue;
    const auto seg = std::uint32_t(out.segments.size());
    out.segments.push_back({d.class_id, SegmentKind::kThing, next_instance++, remaining});
    for (int r = b.y0; r < b.y1; ++r) {
      for (int c = b.x0; c < b.x1; ++c) {
        if ((*d.mask)(r, c) >= 0.5 && out.label_map(r, c) == kVoid) out.label_map(r, c) = seg;
      }
    }
  }

  // Stuff fill of unclaimed pixels; a segment per stuff class, in class order.
  std::vector<std::uint32_t> fill(H * W, kVoid);
  std::vector<std::uint64_t> stuff_area(catalog.n_stuff, 0);
  for (std::size_t p = 0; p < H * W; ++p) {
    if (out.label_map[p] != kVoid) continue;
    const auto pv = v.pixel(p);
    std::uint32_t best = 0;
    for (std::uint32_t l = 1; l < catalog.n_stuff; ++l) {
      if (pv[l] > pv[best]) best = l;
    }
    fill[p] = best;
    ++stuff_area[best];
  }
  std::vector<std::uint32_t> stuff_seg(catalog.n_stuff, kVoid);
  for (std::uint32_t l = 0; l < catalog.n_stuff; ++l) {
    if (stuff_area[l] == 0 || stuff_area[l] < params.stuff_area_threshold) continue;
    stuff_seg[l] = std::uint32_t(out.segments.size());
    out.segments.push_back({l, SegmentKind::kStuff, 0, stuff_area[l]});
  }
  for (std::size_t p = 0; p < H * W; ++p) {
    if (fill[p] != kVoid) out.label_map[p] = stuff_seg[fill[p]];
  }
  return out;
}

PanopticMap trim_small_stuff(const PanopticMap& map, std::uint64_t area_threshold) {
  std::vector<std::uint32_t> remap(map.segments.size(), kVoid);
  PanopticMap out;
  for (std::size_t s = 0; s < map.segments.size(); ++s) {
    const auto& seg = map.segments[s];
    if (seg.kind == SegmentKind::kStuff && seg.area < area_threshold) continue;
    remap[s] = std::uint32_t(out.segments.size());
    out.segments.push_back(seg);
  }
  out.label_map = map.label_map;
  for (auto& x : out.label_map.data()) {
    if (x != kVoid) x = remap[x];
  }
  return out;
}

void save_panoptic(const PanopticMap& map, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  LabelMap encoded(map.label_map.height(), map.label_map.width(), kVoid);
  for (std::size_t p = 0; p < encoded.size(); ++p) {
    const std::uint32_t s = map.label_map[p];
    if (s != kVoid) encoded[p] = map.segments[s].encoded_id();
  }
  write_panc(dir / "panoptic.panc", to_raw(encoded));
  nlohmann::json j;
  j["format"] = "panoptic-map/1";
  j["grid"] = {{"file", "panoptic.panc"},
               {"shape", {map.label_map.height(), map.label_map.width()}}};
  j["segments"] = map.segments;
  j["void_pixels"] = map.void_count();
  std::ofstream out(dir / "segments.json", std::ios::trunc);
  out << j.dump(2) << '\n';
}

PanopticMap load_panoptic(const std::filesystem::path& dir) {
  std::ifstream in(dir / "segments.json");
  if (!in) throw FormatError("missing segments.json in " + dir.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("segments.json: " + std::string(e.what()), e.byte);
  }
  PanopticMap out;
  try {
    out.segments = j.at("segments").get<std::vector<PanopticSegment>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("segments.json: " + std::string(e.what()));
  }
  const LabelMap encoded =
      labels_from_raw(read_panc(dir / j.at("grid").at("file").get<std::string>()));
  std::map<std::uint32_t, std::uint32_t> by_id;
  for (std::size_t s = 0; s < out.segments.size(); ++s) {
    by_id[out.segments[s].encoded_id()] = std::uint32_t(s);
  }
  out.label_map = LabelMap(encoded.height(), encoded.width(), kVoid);
  std::vector<std::uint64_t> area(out.segments.size(), 0);
  for (std::size_t p = 0; p < encoded.size(); ++p) {
    if (encoded[p] == kVoid) continue;
    const auto it = by_id.find(encoded[p]);
    if (it == by_id.end()) {
      throw FormatError("panoptic grid id " + std::to_string(encoded[p]) + " has no segment",
                        8 + 4 * 2 + 4 * p);
    }
    out.label_map[p] = it->second;
    ++area[it->second];
  }
  for (std::size_t s = 0; s < area.size(); ++s) {
    if (area[s] != out.segments[s].area) {
      throw FormatError("segment " + std::to_string(s) + " area disagrees with the grid");
    }
  }
  return out;
}

}  // namespace panoptic

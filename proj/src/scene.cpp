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

#include "panoptic/scene.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

namespace panoptic {

Box Box::clipped(std::size_t height, std::size_t width) const {
  Box b;
  b.x0 = std::clamp(x0, 0, int(width));
  b.x1 = std::clamp(x1, 0, int(width));
  b.y0 = std::clamp(y0, 0, int(height));
  b.y1 = std::clamp(y1, 0, int(height));
  return b;
}

const GtSegment* GroundTruthPanoptic::find(std::uint32_t index) const {
  for (const auto& s : segments) {
    if (s.index == index) return &s;
  }
  return nullptr;
}

Box shrink_box(const Box& box, double truncation) {
  auto shrink_side = [truncation](int lo, int hi, int& out_lo, int& out_hi) {
    const int side = hi - lo;
    const int kept = std::max(1, int(std::lround(side * (1.0 - truncation))));
    out_lo = lo + (side - kept) / 2;
    out_hi = out_lo + kept;
  };
  Box out;
  shrink_side(box.x0, box.x1, out.x0, out.x1);
  shrink_side(box.y0, box.y1, out.y0, out.y1);
  return out;
}

std::optional<Box> tight_box(const LabelMap& label_map, std::uint32_t index) {
  int x0 = int(label_map.width()), y0 = int(label_map.height()), x1 = -1, y1 = -1;
  for (std::size_t r = 0; r < label_map.height(); ++r) {
    for (std::size_t c = 0; c < label_map.width(); ++c) {
      if (label_map(r, c) != index) continue;
      x0 = std::min(x0, int(c));
      y0 = std::min(y0, int(r));
      x1 = std::max(x1, int(c) + 1);
      y1 = std::max(y1, int(r) + 1);
    }
  }
  if (x1 < 0) return std::nullopt;
  return Box{x0, y0, x1, y1};
}

namespace {

struct Rect {
  int x0, y0, x1, y1;
  bool overlaps_with_gap(const Rect& o, int gap) const {
    return x0 < o.x1 + gap && o.x0 < x1 + gap && y0 < o.y1 + gap && o.y0 < y1 + gap;
  }
};

}  // namespace

SyntheticScene synth_scene(const SynthConfig& cfg, std::uint64_t seed) {
  if (cfg.height == 0 || cfg.width == 0 || cfg.height > 128 || cfg.width > 128) {
    throw GenerationError("grid must be between 1x1 and 128x128");
  }
  if (cfg.n_stuff == 0) throw GenerationError("at least one stuff class is required");
  if (cfg.n_instances > 0 && cfg.n_thing == 0) {
    throw GenerationError("instances requested without thing classes");
  }
  if (!(cfg.box_truncation >= 0.0 && cfg.box_truncation < 1.0)) {
    throw GenerationError("box_truncation must lie in [0,1)");
  }
  if (!(cfg.confusion_rate >= 0.0 && cfg.confusion_rate < 1.0)) {
    throw GenerationError("confusion_rate must lie in [0,1)");
  }
  if (cfg.box_jitter < 0.0 || cfg.feature_noise < 0.0) {
    throw GenerationError("box_jitter and feature_noise must be non-negative");
  }
  if (cfg.feature_channels == 0) throw GenerationError("feature_channels must be >= 1");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int H = int(cfg.height);
  const int W = int(cfg.width);
  const std::uint32_t K = cfg.n_stuff + cfg.n_thing;

  // Stuff background: nearest-seed partition, one seed per stuff class.
  std::vector<std::pair<double, double>> seeds(cfg.n_stuff);
  for (auto& s : seeds) s = {unit(rng) * H, unit(rng) * W};

  // Thing rectangles, non-overlapping with a one-pixel gap.
  const int side_hi = std::min({cfg.max_instance_side, H, W});
  const int side_lo = std::min(cfg.min_instance_side, side_hi);
  if (side_lo < 1) throw GenerationError("instance side bounds must be >= 1");
  std::vector<Rect> rects;
  std::vector<std::uint32_t> inst_class;
  for (std::uint32_t n = 0; n < cfg.n_instances; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      std::uniform_int_distribution<int> side(side_lo, side_hi);
      const int w = side(rng);
      const int h = side(rng);
      const int x0 = std::uniform_int_distribution<int>(0, W - w)(rng);
      const int y0 = std::uniform_int_distribution<int>(0, H - h)(rng);
      Rect r{x0, y0, x0 + w, y0 + h};
      if (std::none_of(rects.begin(), rects.end(),
                       [&](const Rect& o) { return r.overlaps_with_gap(o, 1); })) {
        rects.push_back(r);
        placed = true;
      }
    }
    if (!placed) {
      throw GenerationError("could not place instance " + std::to_string(n) + " of " +
                            std::to_string(cfg.n_instances) + " without overlap");
    }
    inst_class.push_back(cfg.n_stuff +
                         std::uniform_int_distribution<std::uint32_t>(0, cfg.n_thing - 1)(rng));
  }

  // Per-pixel class and "raw" segment id (stuff class, or n_stuff + instance).
  std::vector<std::uint32_t> pix_class(std::size_t(H) * W);
  std::vector<std::uint32_t> pix_raw(std::size_t(H) * W);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      const std::size_t p = std::size_t(r) * W + c;
      std::uint32_t best = 0;
      double best_d = 1e300;
      for (std::uint32_t s = 0; s < cfg.n_stuff; ++s) {
        const double dr = r + 0.5 - seeds[s].first;
        const double dc = c + 0.5 - seeds[s].second;
        const double d = dr * dr + dc * dc;
        if (d < best_d) {
          best_d = d;
          best = s;
        }
      }
      pix_class[p] = best;
      pix_raw[p] = best;
      for (std::size_t i = 0; i < rects.size(); ++i) {
        const auto& q = rects[i];
        if (c >= q.x0 && c < q.x1 && r >= q.y0 && r < q.y1) {
          pix_class[p] = inst_class[i];
          pix_raw[p] = cfg.n_stuff + std::uint32_t(i);
        }
      }
    }
  }

  // Compact segment indices: present stuff classes in class order, then instances.
  std::vector<std::uint32_t> raw_to_seg(cfg.n_stuff + rects.size(), kIgnore);
  std::vector<std::uint64_t> raw_area(raw_to_seg.size(), 0);
  for (auto raw : pix_raw) ++raw_area[raw];
  GroundTruthPanoptic gt;
  gt.label_map = LabelMap(cfg.height, cfg.width);
  std::uint32_t next = 0;
  for (std::uint32_t raw = 0; raw < raw_to_seg.size(); ++raw) {
    if (raw_area[raw] == 0) continue;
    raw_to_seg[raw] = next;
    GtSegment seg;
    seg.index = next;
    seg.class_id = raw < cfg.n_stuff ? raw : inst_class[raw - cfg.n_stuff];
    seg.area = raw_area[raw];
    gt.segments.push_back(seg);
    ++next;
  }
  for (std::size_t p = 0; p < pix_raw.size(); ++p) gt.label_map[p] = raw_to_seg[pix_raw[p]];
  for (auto& seg : gt.segments) seg.box = *tight_box(gt.label_map, seg.index);

  // Segment embeddings: distinct axes when they fit, random unit vectors otherwise.
  const std::size_t C = cfg.feature_channels;
  std::vector<std::vector<double>> embed(gt.segments.size(), std::vector<double>(C, 0.0));
  if (gt.segments.size() <= C) {
    std::vector<std::size_t> axes(C);
    std::iota(axes.begin(), axes.end(), 0);
    std::shuffle(axes.begin(), axes.end(), rng);
    for (std::size_t s = 0; s < gt.segments.size(); ++s) embed[s][axes[s]] = 1.0;
  } else {
    for (auto& e : embed) {
      double norm = 0.0;
      for (auto& x : e) {
        x = gauss(rng);
        norm += x * x;
      }
      norm = std::sqrt(norm);
      for (auto& x : e) x /= norm;
    }
  }

  SceneCues cues;
  cues.catalog.n_stuff = cfg.n_stuff;
  cues.catalog.n_thing = cfg.n_thing;
  cues.features = Tensor3(cfg.height, cfg.width, C);
  for (std::size_t p = 0; p < pix_raw.size(); ++p) {
    const auto& e = embed[gt.label_map[p]];
    auto f = cues.features.pixel(p);
    for (std::size_t k = 0; k < C; ++k) f[k] = e[k] + cfg.feature_noise * gauss(rng);
  }

  // Detections, one per instance, in placement order.
  for (std::size_t i = 0; i < rects.size(); ++i) {
    const Box tight{rects[i].x0, rects[i].y0, rects[i].x1, rects[i].y1};
    Box b = shrink_box(tight, cfg.box_truncation);
    const double j0 = gauss(rng), j1 = gauss(rng), j2 = gauss(rng), j3 = gauss(rng);
    b.x0 += int(std::lround(cfg.box_jitter * j0));
    b.y0 += int(std::lround(cfg.box_jitter * j1));
    b.x1 += int(std::lround(cfg.box_jitter * j2));
    b.y1 += int(std::lround(cfg.box_jitter * j3));
    b = b.clipped(cfg.height, cfg.width);
    if (b.x1 <= b.x0) {
      if (b.x0 >= W) b.x0 = W - 1;
      b.x1 = b.x0 + 1;
    }
    if (b.y1 <= b.y0) {
      if (b.y0 >= H) b.y0 = H - 1;
      b.y1 = b.y0 + 1;
    }
    Detection d;
    d.box = b;
    d.score = 0.6 + 0.4 * unit(rng);
    d.class_id = inst_class[i];
    if (cfg.with_masks) {
      MaskPlane m(cfg.height, cfg.width, 0.0);
      const std::uint32_t seg = raw_to_seg[cfg.n_stuff + i];
      for (int r = b.y0; r < b.y1; ++r) {
        for (int c = b.x0; c < b.x1; ++c) {
          const bool fg = gt.label_map(r, c) == seg;
          const double base = fg ? cfg.mask_foreground : cfg.mask_background;
          const double noise = cfg.mask_noise * (2.0 * unit(rng) - 1.0);
          m(r, c) = std::clamp(base + noise, 0.0, 1.0);
        }
      }
      d.mask = std::move(m);
    }
    cues.detections.push_back(std::move(d));
  }

  // V: one-hot truth; on thing pixels a fraction r of the mass moves to a
  // uniformly drawn class.
  cues.v = Tensor3(cfg.height, cfg.width, K);
  std::uniform_int_distribution<std::uint32_t> any_class(0, K - 1);
  for (std::size_t p = 0; p < pix_class.size(); ++p) {
    auto v = cues.v.pixel(p);
    const std::uint32_t truth = pix_class[p];
    if (truth >= cfg.n_stuff && cfg.confusion_rate > 0.0) {
      v[truth] += 1.0 - cfg.confusion_rate;
      v[any_class(rng)] += cfg.confusion_rate;
    } else {
      v[truth] = 1.0;
    }
    double sum = 0.0;
    for (double x : v) sum += x;
    for (double& x : v) x /= sum;
  }

  return {std::move(cues), std::move(gt)};
}

std::vector<Violation> validate_scene(const SceneCues& scene) {
  std::vector<Violation> out;
  const auto& cat = scene.catalog;
  if (!cat.names.empty() && cat.names.size() != cat.n_classes()) {
    out.push_back({"catalog.names", "length must equal n_stuff + n_thing"});
  }
  if (scene.v.channels() != cat.n_classes()) {
    out.push_back({"v", "channel count must equal n_stuff + n_thing"});
  }
  for (std::size_t p = 0; p < scene.v.pixels(); ++p) {
    double sum = 0.0;
    bool in_range = true;
    for (double x : scene.v.pixel(p)) {
      sum += x;
      in_range = in_range && x >= 0.0 && x <= 1.0;
    }
    if (!in_range) {
      out.push_back({"v", "probabilities must lie in [0,1] (pixel " + std::to_string(p) + ")"});
      break;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
      out.push_back({"v", "normalization: channel vector sums to " + std::to_string(sum) +
                              " at pixel " + std::to_string(p)});
      break;
    }
  }
  if (!scene.features.same_grid(scene.v)) {
    out.push_back({"features", "grid must match v"});
  }
  const std::size_t H = scene.v.height(), W = scene.v.width();
  for (std::size_t i = 0; i < scene.detections.size(); ++i) {
    const auto& d = scene.detections[i];
    const std::string f = "detections[" + std::to_string(i) + "]";
    if (d.box.x0 >= d.box.x1 || d.box.y0 >= d.box.y1) {
      out.push_back({f + ".box", "degenerate box: zero or negative area"});
    } else if (!d.box.valid_in(H, W)) {
      out.push_back({f + ".box", "box exceeds the grid"});
    }
    if (!(d.score >= 0.0 && d.score <= 1.0)) out.push_back({f + ".score", "must lie in [0,1]"});
    if (d.class_id >= cat.n_classes()) {
      out.push_back({f + ".class_id", "unknown class"});
    } else if (cat.is_stuff(d.class_id)) {
      if (d.score != 1.0 || !(d.box == Box{0, 0, int(W), int(H)})) {
        out.push_back({f, "stuff pseudo-detection must have score 1 and a full-image box"});
      }
    }
    if (d.mask) {
      if (d.mask->rows() != H || d.mask->cols() != W) {
        out.push_back({f + ".mask", "mask must cover the full grid"});
      } else {
        for (std::size_t r = 0; r < H; ++r) {
          for (std::size_t c = 0; c < W; ++c) {
            const double m = (*d.mask)(r, c);
            if (m < 0.0 || m > 1.0 || (m != 0.0 && !d.box.contains(int(r), int(c)))) {
              out.push_back({f + ".mask", "values must lie in [0,1] and vanish outside the box"});
              r = H;
              break;
            }
          }
        }
      }
    }
  }
  return out;
}

std::vector<Violation> validate_ground_truth(const GroundTruthPanoptic& gt,
                                             const ClassCatalog& catalog) {
  std::vector<Violation> out;
  std::map<std::uint32_t, std::uint64_t> area;
  for (auto idx : gt.label_map.data()) {
    if (idx != kIgnore) ++area[idx];
  }
  std::set<std::uint32_t> stuff_seen;
  std::set<std::uint32_t> listed;
  for (const auto& s : gt.segments) {
    const std::string f = "segments[" + std::to_string(s.index) + "]";
    listed.insert(s.index);
    if (s.class_id >= catalog.n_classes()) out.push_back({f + ".class_id", "unknown class"});
    if (catalog.is_stuff(s.class_id) && !stuff_seen.insert(s.class_id).second) {
      out.push_back({f, "more than one segment for stuff class " + std::to_string(s.class_id)});
    }
    const auto it = area.find(s.index);
    const std::uint64_t a = it == area.end() ? 0 : it->second;
    if (a != s.area) out.push_back({f + ".area", "does not match the label map"});
    const auto tb = tight_box(gt.label_map, s.index);
    if (!tb || !(*tb == s.box)) out.push_back({f + ".box", "is not the tight box of the segment"});
  }
  for (const auto& [idx, a] : area) {
    if (!listed.count(idx)) {
      out.push_back({"label_map", "index " + std::to_string(idx) + " has no segment record"});
    }
  }
  return out;
}

}  // namespace panoptic

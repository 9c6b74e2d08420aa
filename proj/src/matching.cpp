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

#include "panoptic/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace panoptic {

double MatchResult::total_iou() const {
  double s = 0.0;
  for (const auto& p : pairs) {
    if (!p.by_identity) s += p.box_iou;
  }
  return s;
}

std::vector<ClassBox> boxes_from_segments(const GroundTruthPanoptic& gt) {
  const std::size_t W = gt.label_map.width();
  std::map<std::uint32_t, Box> acc;
  for (std::size_t p = 0; p < gt.label_map.size(); ++p) {
    const std::uint32_t s = gt.label_map[p];
    if (s == kIgnore) continue;
    const int r = int(p / W), c = int(p % W);
    auto [it, fresh] = acc.try_emplace(s, Box{c, r, c + 1, r + 1});
    if (!fresh) {
      Box& b = it->second;
      b.x0 = std::min(b.x0, c);
      b.y0 = std::min(b.y0, r);
      b.x1 = std::max(b.x1, c + 1);
      b.y1 = std::max(b.y1, r + 1);
    }
  }
  std::vector<ClassBox> out;
  out.reserve(gt.segments.size());
  for (const auto& seg : gt.segments) {
    const auto it = acc.find(seg.index);
    out.push_back({seg.class_id, it == acc.end() ? Box{} : it->second});
  }
  return out;
}

double box_iou(const Box& a, const Box& b, std::uint32_t class_a, std::uint32_t class_b) {
  if (class_a != class_b) return 0.0;
  const long iw = std::max(0, std::min(a.x1, b.x1) - std::max(a.x0, b.x0));
  const long ih = std::max(0, std::min(a.y1, b.y1) - std::max(a.y0, b.y0));
  const long inter = iw * ih;
  const long uni = a.area() + b.area() - inter;
  return uni > 0 ? double(inter) / double(uni) : 0.0;
}

std::vector<int> solve_assignment(const Matrix& weights) {
  const std::size_t rows = weights.rows(), cols = weights.cols();
  if (rows == 0 || cols == 0) return std::vector<int>(rows, -1);
  if (rows > cols) {
    const std::vector<int> t = solve_assignment(transpose(weights));
    std::vector<int> out(rows, -1);
    for (std::size_t c = 0; c < cols; ++c) {
      if (t[c] >= 0) out[std::size_t(t[c])] = int(c);
    }
    return out;
  }

  // Shortest augmenting path Hungarian method on cost = -max(w, 0), with
  // 1-based potentials u (rows) and v (columns).
  const std::size_t n = rows, m = cols;
  const double inf = std::numeric_limits<double>::infinity();
  auto cost = [&](std::size_t i, std::size_t j) {
    const double w = weights(i - 1, j - 1);
    return w > 0.0 ? -w : 0.0;
  };
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> owner(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    owner[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = owner[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<int> out(n, -1);
  for (std::size_t j = 1; j <= m; ++j) {
    if (owner[j] != 0 && weights(owner[j] - 1, j - 1) > 0.0) out[owner[j] - 1] = int(j - 1);
  }
  return out;
}

MatchResult match_segments(const GroundTruthPanoptic& gt, const std::vector<Detection>& dets,
                           const ClassCatalog& catalog, double t) {
  if (!(t > 0.0 && t <= 1.0)) throw CueError("match threshold must lie in (0,1]");
  const std::vector<ClassBox> gt_boxes = boxes_from_segments(gt);

  std::vector<std::size_t> thing_gt, stuff_gt, thing_det;
  for (std::size_t s = 0; s < gt.segments.size(); ++s) {
    (catalog.is_stuff(gt.segments[s].class_id) ? stuff_gt : thing_gt).push_back(s);
  }
  for (std::size_t d = 0; d < dets.size(); ++d) {
    if (!catalog.is_stuff(dets[d].class_id)) thing_det.push_back(d);
  }

  Matrix iou(thing_gt.size(), thing_det.size());
  for (std::size_t i = 0; i < thing_gt.size(); ++i) {
    for (std::size_t j = 0; j < thing_det.size(); ++j) {
      const auto& g = gt_boxes[thing_gt[i]];
      const auto& d = dets[thing_det[j]];
      iou(i, j) = box_iou(g.box, d.box, g.class_id, d.class_id);
    }
  }
  Matrix feasible = iou;
  for (double& w : feasible.data()) {
    if (w < t) w = 0.0;
  }
  const std::vector<int> assign = solve_assignment(feasible);

  MatchResult out;
  std::vector<char> det_used(dets.size(), 0);
  std::vector<char> gt_used(gt.segments.size(), 0);
  for (std::size_t i = 0; i < thing_gt.size(); ++i) {
    if (assign[i] < 0) continue;
    const std::size_t d = thing_det[std::size_t(assign[i])];
    out.pairs.push_back({gt.segments[thing_gt[i]].index, d, iou(i, std::size_t(assign[i])), false});
    det_used[d] = 1;
    gt_used[thing_gt[i]] = 1;
  }
  for (std::size_t s : stuff_gt) {
    const auto& seg = gt.segments[s];
    for (std::size_t d = 0; d < dets.size(); ++d) {
      if (dets[d].class_id == seg.class_id && !det_used[d]) {
        out.pairs.push_back(
            {seg.index, d, box_iou(gt_boxes[s].box, dets[d].box, seg.class_id, seg.class_id),
             true});
        det_used[d] = 1;
        gt_used[s] = 1;
        break;
      }
    }
  }
  std::stable_sort(out.pairs.begin(), out.pairs.end(),
                   [](const MatchPair& a, const MatchPair& b) { return a.gt_segment < b.gt_segment; });
  for (std::size_t s = 0; s < gt.segments.size(); ++s) {
    if (!gt_used[s]) out.unmatched_gt.push_back(gt.segments[s].index);
  }
  for (std::size_t j = 0; j < thing_det.size(); ++j) {
    if (det_used[thing_det[j]]) continue;
    for (std::size_t i = 0; i < thing_gt.size(); ++i) {
      if (iou(i, j) >= t) {
        out.removed_duplicates.push_back(thing_det[j]);
        break;
      }
    }
  }
  return out;
}

PrunedDetections remove_duplicates(const std::vector<Detection>& dets, const MatchResult& match) {
  PrunedDetections out;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (std::find(match.removed_duplicates.begin(), match.removed_duplicates.end(), i) !=
        match.removed_duplicates.end()) {
      continue;
    }
    out.detections.push_back(dets[i]);
    out.source_index.push_back(i);
  }
  return out;
}

LabelMap build_target_map(const GroundTruthPanoptic& gt, const MatchResult& match,
                          const std::vector<ChannelMeta>& channels,
                          const std::vector<std::size_t>& source_index) {
  std::map<std::uint32_t, std::uint32_t> seg_to_channel;
  for (const auto& pair : match.pairs) {
    bool found = false;
    for (std::size_t k = 0; k < channels.size(); ++k) {
      const std::size_t local = channels[k].detection_index;
      if (local < source_index.size() && source_index[local] == pair.detection) {
        seg_to_channel[pair.gt_segment] = std::uint32_t(k);
        found = true;
        break;
      }
    }
    if (!found) {
      throw Error("match pairs segment " + std::to_string(pair.gt_segment) +
                  " with detection " + std::to_string(pair.detection) +
                  ", which has no channel in the potential");
    }
  }
  LabelMap target(gt.label_map.height(), gt.label_map.width(), kIgnore);
  for (std::size_t p = 0; p < target.size(); ++p) {
    const std::uint32_t s = gt.label_map[p];
    if (s == kIgnore) continue;
    const auto it = seg_to_channel.find(s);
    if (it != seg_to_channel.end()) target[p] = it->second;
  }
  return target;
}

LossResult panoptic_matching_loss(const Tensor3& p, const LabelMap& target) {
  if (target.height() != p.height() || target.width() != p.width()) {
    throw DimensionError("target grid does not match logits " + p.shape_string());
  }
  LossResult out;
  out.grad_p = Tensor3(p.height(), p.width(), p.channels(), 0.0);
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == kIgnore) continue;
    if (target[i] >= p.channels()) {
      throw IndexError("target channel " + std::to_string(target[i]) + " outside " +
                       p.shape_string());
    }
    ++out.counted_pixels;
  }
  if (out.counted_pixels == 0) return out;

  const double inv = 1.0 / double(out.counted_pixels);
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    if (target[i] == kIgnore) continue;
    const auto logits = p.pixel(i);
    const auto top = std::max_element(logits.begin(), logits.end());
    const double mx = *top;
    double rest = 0.0;  // mass of every channel except the first maximum
    for (auto it = logits.begin(); it != logits.end(); ++it) {
      if (it != top) rest += std::exp(*it - mx);
    }
    const double log_z = mx + std::log1p(rest);
    total += log_z - logits[target[i]];
    auto g = out.grad_p.pixel(i);
    for (std::size_t k = 0; k < logits.size(); ++k) g[k] = std::exp(logits[k] - log_z) * inv;
    g[target[i]] -= inv;
  }
  out.loss = total / double(out.counted_pixels);
  return out;
}

}  // namespace panoptic

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

#include "panoptic/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <utility>

namespace panoptic {
namespace {

void require_same_grid(const LabelMap& a, const LabelMap& b) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw DimensionError("prediction is " + std::to_string(a.height()) + "x" +
                         std::to_string(a.width()) + ", ground truth is " +
                         std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

void finish(ClassPQ& c) {
  c.sq = c.tp > 0 ? c.iou_sum / double(c.tp) : 0.0;
  const double denom = double(c.tp) + 0.5 * double(c.fp) + 0.5 * double(c.fn);
  c.rq = denom > 0.0 ? double(c.tp) / denom : 0.0;
  c.pq = c.sq * c.rq;
}

}  // namespace

void PQAccumulator::add(const PanopticMap& pred, const PanopticMap& gt) {
  require_same_grid(pred.label_map, gt.label_map);
  const std::size_t np = pred.segments.size(), ng = gt.segments.size();
  std::vector<std::uint64_t> pred_area(np, 0), gt_area(ng, 0), pred_on_void(np, 0);
  std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint64_t> inter;
  for (std::size_t p = 0; p < gt.label_map.size(); ++p) {
    const std::uint32_t g = gt.label_map[p], s = pred.label_map[p];
    if (s != kVoid) ++pred_area[s];
    if (g != kVoid) ++gt_area[g];
    if (s != kVoid && g == kVoid) ++pred_on_void[s];
    if (s != kVoid && g != kVoid) ++inter[{g, s}];
  }

  for (const auto& seg : gt.segments) gt_classes_.insert(seg.class_id);
  std::vector<char> gt_matched(ng, 0), pred_matched(np, 0);
  for (const auto& [key, n] : inter) {
    const auto [g, s] = key;
    if (gt.segments[g].class_id != pred.segments[s].class_id) continue;
    const double uni = double(pred_area[s] + gt_area[g] - n - pred_on_void[s]);
    const double iou = double(n) / uni;
    if (iou <= 0.5) continue;
    ClassPQ& c = counts_[gt.segments[g].class_id];
    ++c.tp;
    ious_[gt.segments[g].class_id].push_back(iou);
    gt_matched[g] = 1;
    pred_matched[s] = 1;
  }
  for (std::size_t g = 0; g < ng; ++g) {
    if (!gt_matched[g] && gt_area[g] > 0) ++counts_[gt.segments[g].class_id].fn;
  }
  for (std::size_t s = 0; s < np; ++s) {
    if (pred_matched[s] || pred_area[s] == 0) continue;
    if (2 * pred_on_void[s] > pred_area[s]) continue;
    ++counts_[pred.segments[s].class_id].fp;
  }
}

void PQAccumulator::merge(const PQAccumulator& other) {
  for (const auto& [cls, c] : other.counts_) {
    ClassPQ& mine = counts_[cls];
    mine.tp += c.tp;
    mine.fp += c.fp;
    mine.fn += c.fn;
  }
  for (const auto& [cls, v] : other.ious_) {
    auto& mine = ious_[cls];
    mine.insert(mine.end(), v.begin(), v.end());
  }
  gt_classes_.insert(other.gt_classes_.begin(), other.gt_classes_.end());
}

PQReport PQAccumulator::report() const {
  PQReport out;
  for (const auto& [cls, c] : counts_) {
    ClassPQ done = c;
    if (const auto it = ious_.find(cls); it != ious_.end()) {
      std::vector<double> sorted = it->second;
      std::sort(sorted.begin(), sorted.end());
      for (double x : sorted) done.iou_sum += x;
    }
    finish(done);
    out.per_class[cls] = done;
  }
  auto summarize = [&](auto keep) {
    PQSummary s;
    for (std::uint32_t cls : gt_classes_) {
      if (!keep(cls)) continue;
      const auto it = out.per_class.find(cls);
      const ClassPQ c = it == out.per_class.end() ? ClassPQ{} : it->second;
      s.pq += c.pq;
      s.sq += c.sq;
      s.rq += c.rq;
      ++s.n_classes;
    }
    if (s.n_classes > 0) {
      s.pq /= double(s.n_classes);
      s.sq /= double(s.n_classes);
      s.rq /= double(s.n_classes);
    }
    return s;
  };
  out.all = summarize([](std::uint32_t) { return true; });
  out.things = summarize([&](std::uint32_t c) { return catalog_.is_thing(c); });
  out.stuff = summarize([&](std::uint32_t c) { return catalog_.is_stuff(c); });
  return out;
}

PQReport panoptic_quality(const PanopticMap& pred, const PanopticMap& gt,
                          const ClassCatalog& catalog) {
  PQAccumulator acc(catalog);
  acc.add(pred, gt);
  return acc.report();
}

IoUAccumulator::IoUAccumulator(ClassCatalog catalog)
    : catalog_(std::move(catalog)),
      inter_(catalog_.n_classes(), 0),
      uni_(catalog_.n_classes(), 0) {}

void IoUAccumulator::add(const LabelMap& pred_classes, const LabelMap& gt_classes) {
  require_same_grid(pred_classes, gt_classes);
  const std::uint32_t K = catalog_.n_classes();
  for (std::size_t p = 0; p < gt_classes.size(); ++p) {
    const std::uint32_t g = gt_classes[p], s = pred_classes[p];
    if (g == kIgnore) continue;
    if (g >= K || (s != kIgnore && s >= K)) {
      throw IndexError("class id outside the catalog at pixel " + std::to_string(p));
    }
    ++uni_[g];
    if (s == g) {
      ++inter_[g];
    } else if (s != kIgnore) {
      ++uni_[s];
    }
  }
}

void IoUAccumulator::merge(const IoUAccumulator& other) {
  for (std::size_t k = 0; k < inter_.size(); ++k) {
    inter_[k] += other.inter_[k];
    uni_[k] += other.uni_[k];
  }
}

MeanIoU IoUAccumulator::result() const {
  MeanIoU out;
  double sum = 0.0;
  for (std::uint32_t k = 0; k < inter_.size(); ++k) {
    if (uni_[k] == 0) continue;
    out.per_class[k] = double(inter_[k]) / double(uni_[k]);
    sum += out.per_class[k];
  }
  if (!out.per_class.empty()) out.mean = sum / double(out.per_class.size());
  return out;
}

MeanIoU mean_iou(const LabelMap& pred_classes, const LabelMap& gt_classes,
                 const ClassCatalog& catalog) {
  IoUAccumulator acc(catalog);
  acc.add(pred_classes, gt_classes);
  return acc.result();
}

void ConfusionTS::add(const ConfusionTS& other) {
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) counts[r][c] += other.counts[r][c];
  }
  normalize();
}

void ConfusionTS::normalize() {
  for (int r = 0; r < 2; ++r) {
    const double total = double(counts[r][0] + counts[r][1]);
    for (int c = 0; c < 2; ++c) percent[r][c] = total > 0 ? 100.0 * double(counts[r][c]) / total : 0.0;
  }
}

ConfusionTS thing_stuff_confusion(const LabelMap& pred_classes, const LabelMap& gt_classes,
                                  const ClassCatalog& catalog) {
  require_same_grid(pred_classes, gt_classes);
  ConfusionTS out;
  for (std::size_t p = 0; p < gt_classes.size(); ++p) {
    const std::uint32_t g = gt_classes[p], s = pred_classes[p];
    if (g == kIgnore || s == kIgnore) continue;
    ++out.counts[catalog.is_stuff(g) ? 1 : 0][catalog.is_stuff(s) ? 1 : 0];
  }
  out.normalize();
  return out;
}

void BoxAPAccumulator::add(const std::vector<Detection>& dets,
                           const std::vector<ClassBox>& gt_boxes) {
  for (const auto& g : gt_boxes) ++n_gt_[g.class_id];

  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

  std::vector<Hit> scene_hits(dets.size());
  for (std::size_t i : order) scene_hits[i].score = dets[i].score;
  for (std::size_t t = 0; t < kApThresholds.size(); ++t) {
    std::vector<char> taken(gt_boxes.size(), 0);
    for (std::size_t i : order) {
      double best = -1.0;
      std::size_t best_g = gt_boxes.size();
      for (std::size_t g = 0; g < gt_boxes.size(); ++g) {
        if (taken[g]) continue;
        const double iou =
            box_iou(dets[i].box, gt_boxes[g].box, dets[i].class_id, gt_boxes[g].class_id);
        if (iou >= kApThresholds[t] && iou > best) {
          best = iou;
          best_g = g;
        }
      }
      scene_hits[i].tp[t] = best_g < gt_boxes.size();
      if (best_g < gt_boxes.size()) taken[best_g] = 1;
    }
  }
  for (std::size_t i : order) hits_[dets[i].class_id].push_back(scene_hits[i]);
}

void BoxAPAccumulator::merge(const BoxAPAccumulator& other) {
  for (const auto& [cls, h] : other.hits_) {
    auto& mine = hits_[cls];
    mine.insert(mine.end(), h.begin(), h.end());
  }
  for (const auto& [cls, n] : other.n_gt_) n_gt_[cls] += n;
}

double BoxAPAccumulator::value() const {
  double total = 0.0;
  std::size_t classes = 0;
  for (const auto& [cls, n_gt] : n_gt_) {
    if (n_gt == 0) continue;
    ++classes;
    const auto it = hits_.find(cls);
    if (it == hits_.end()) continue;
    std::vector<Hit> h = it->second;
    std::stable_sort(h.begin(), h.end(),
                     [](const Hit& a, const Hit& b) { return a.score > b.score; });
    double class_ap = 0.0;
    for (std::size_t t = 0; t < kApThresholds.size(); ++t) {
      std::vector<double> precision(h.size()), recall(h.size());
      std::uint64_t tp = 0;
      for (std::size_t i = 0; i < h.size(); ++i) {
        if (h[i].tp[t]) ++tp;
        precision[i] = double(tp) / double(i + 1);
        recall[i] = double(tp) / double(n_gt);
      }
      for (std::size_t i = h.size(); i-- > 1;) {
        precision[i - 1] = std::max(precision[i - 1], precision[i]);
      }
      double ap = 0.0, prev_recall = 0.0;
      for (std::size_t i = 0; i < h.size(); ++i) {
        ap += (recall[i] - prev_recall) * precision[i];
        prev_recall = recall[i];
      }
      class_ap += ap;
    }
    total += class_ap / double(kApThresholds.size());
  }
  return classes > 0 ? total / double(classes) : 0.0;
}

double box_average_precision(const std::vector<Detection>& dets,
                             const std::vector<ClassBox>& gt_boxes) {
  BoxAPAccumulator acc;
  acc.add(dets, gt_boxes);
  return acc.value();
}

std::string render_pq_report(const PQReport& report, const ClassCatalog& catalog) {
  std::string out = "         PQ      SQ      RQ   classes\n";
  auto line = [&](const char* name, const PQSummary& s) {
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-6s %6.1f  %6.1f  %6.1f   %zu\n", name, 100 * s.pq,
                  100 * s.sq, 100 * s.rq, s.n_classes);
    out += buf;
  };
  line("all", report.all);
  line("things", report.things);
  line("stuff", report.stuff);
  out += "\nclass              PQ      SQ      RQ    tp    fp    fn\n";
  for (const auto& [cls, c] : report.per_class) {
    std::string name = cls < catalog.names.size() ? catalog.names[cls]
                                                   : (catalog.is_stuff(cls) ? "stuff_" : "thing_") +
                                                         std::to_string(cls);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-14s %6.1f  %6.1f  %6.1f  %4llu  %4llu  %4llu\n",
                  name.c_str(), 100 * c.pq, 100 * c.sq, 100 * c.rq, (unsigned long long)c.tp,
                  (unsigned long long)c.fp, (unsigned long long)c.fn);
    out += buf;
  }
  return out;
}

std::string render_ablation_table(const std::vector<AblationRow>& rows) {
  std::size_t name_width = 5;
  for (const auto& r : rows) name_width = std::max(name_width, r.name.size());
  auto mark = [](bool b) { return b ? "  x  " : "  -  "; };
  std::string out = std::string("Model") + std::string(name_width - 5, ' ') +
                    " | msk. aff. e2e. heu. amx. |  PQ    th.   st.  |  SQ   |  RQ   |  IoU  | "
                    "AP box\n";
  for (const auto& r : rows) {
    out += r.name + std::string(name_width - r.name.size(), ' ') + " |";
    out += mark(r.masks);
    out += mark(r.affinity);
    out += mark(r.end_to_end);
    out += mark(r.heuristic);
    out += mark(r.argmax);
    out += "| " + fmt("%5.1f", 100 * r.pq.all.pq) + " " + fmt("%5.1f", 100 * r.pq.things.pq) +
           " " + fmt("%5.1f", 100 * r.pq.stuff.pq) + " | " + fmt("%5.1f", 100 * r.pq.all.sq) +
           " | " + fmt("%5.1f", 100 * r.pq.all.rq) + " | " + fmt("%5.1f", 100 * r.miou) +
           " | " + fmt("%5.1f", 100 * r.box_ap) + "\n";
  }
  return out;
}

std::string render_confusion(const ConfusionTS& c) {
  std::string out = "gt \\ pred      thing    stuff\n";
  out += "thing       " + fmt("%7.2f", c.percent[0][0]) + "  " + fmt("%7.2f", c.percent[0][1]) +
         "\n";
  out += "stuff       " + fmt("%7.2f", c.percent[1][0]) + "  " + fmt("%7.2f", c.percent[1][1]) +
         "\n";
  return out;
}

}  // namespace panoptic

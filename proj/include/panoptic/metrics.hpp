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

// Panoptic quality, mean IoU, thing/stuff confusion and box AP. Each metric
// has an accumulator so several scenes can be reduced in any grouping.

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "panoptic/matching.hpp"
#include "panoptic/panoptic_map.hpp"
#include "panoptic/scene.hpp"

namespace panoptic {

struct ClassPQ {
  double pq = 0.0;
  double sq = 0.0;
  double rq = 0.0;
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  double iou_sum = 0.0;

  bool operator==(const ClassPQ&) const = default;
};

struct PQSummary {
  double pq = 0.0;
  double sq = 0.0;
  double rq = 0.0;
  std::size_t n_classes = 0;

  bool operator==(const PQSummary&) const = default;
};

struct PQReport {
  std::map<std::uint32_t, ClassPQ> per_class;
  PQSummary all;
  PQSummary things;
  PQSummary stuff;

  bool operator==(const PQReport&) const = default;
};

class PQAccumulator {
 public:
  explicit PQAccumulator(ClassCatalog catalog) : catalog_(std::move(catalog)) {}

  void add(const PanopticMap& pred, const PanopticMap& gt);
  void merge(const PQAccumulator& other);
  PQReport report() const;

 private:
  ClassCatalog catalog_;
  std::map<std::uint32_t, ClassPQ> counts_;
  std::map<std::uint32_t, std::vector<double>> ious_;  // summed in sorted order by report()
  std::set<std::uint32_t> gt_classes_;
};

/// Segments match when they share a class and their mask IoU exceeds 0.5.
/// gt-VOID pixels are left out of the IoU, and unmatched predictions lying
/// mostly on gt-VOID are not false positives. Aggregates average over the
/// classes present in the ground truth.
PQReport panoptic_quality(const PanopticMap& pred, const PanopticMap& gt,
                          const ClassCatalog& catalog);

struct MeanIoU {
  std::map<std::uint32_t, double> per_class;
  double mean = 0.0;
};

class IoUAccumulator {
 public:
  explicit IoUAccumulator(ClassCatalog catalog);

  /// Class maps; kIgnore in gt is skipped, kIgnore in pred counts as a miss.
  void add(const LabelMap& pred_classes, const LabelMap& gt_classes);
  void merge(const IoUAccumulator& other);
  MeanIoU result() const;

 private:
  ClassCatalog catalog_;
  std::vector<std::uint64_t> inter_;
  std::vector<std::uint64_t> uni_;
};

MeanIoU mean_iou(const LabelMap& pred_classes, const LabelMap& gt_classes,
                 const ClassCatalog& catalog);

/// Rows: gt thing, gt stuff. Columns: predicted thing, predicted stuff.
struct ConfusionTS {
  std::array<std::array<std::uint64_t, 2>, 2> counts{};
  std::array<std::array<double, 2>, 2> percent{};

  void add(const ConfusionTS& other);
  void normalize();
};

/// Pixels ignored in gt or void in pred are skipped.
ConfusionTS thing_stuff_confusion(const LabelMap& pred_classes, const LabelMap& gt_classes,
                                  const ClassCatalog& catalog);

inline constexpr std::array<double, 10> kApThresholds = {0.50, 0.55, 0.60, 0.65, 0.70,
                                                         0.75, 0.80, 0.85, 0.90, 0.95};

class BoxAPAccumulator {
 public:
  void add(const std::vector<Detection>& dets, const std::vector<ClassBox>& gt_boxes);
  void merge(const BoxAPAccumulator& other);
  /// Mean over the ten thresholds and over classes with ground truth.
  double value() const;

 private:
  struct Hit {
    double score;
    std::array<bool, kApThresholds.size()> tp;
  };
  std::map<std::uint32_t, std::vector<Hit>> hits_;
  std::map<std::uint32_t, std::uint64_t> n_gt_;
};

/// Greedy score-descending matching per threshold, all-point interpolation.
double box_average_precision(const std::vector<Detection>& dets,
                             const std::vector<ClassBox>& gt_boxes);

/// One row of a Table-1-shaped comparison.
struct AblationRow {
  std::string name;
  bool masks = false;
  bool affinity = false;
  bool end_to_end = false;
  bool heuristic = false;
  bool argmax = false;
  PQReport pq;
  double miou = 0.0;
  double box_ap = 0.0;
};

std::string render_pq_report(const PQReport& report, const ClassCatalog& catalog);
std::string render_ablation_table(const std::vector<AblationRow>& rows);
std::string render_confusion(const ConfusionTS& c);

}  // namespace panoptic

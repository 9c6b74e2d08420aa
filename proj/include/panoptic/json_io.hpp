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

// nlohmann::json conversions for the value types that appear in manifests,
// sidecars and reports.

#pragma once

#include <json.hpp>

#include "panoptic/affinity.hpp"
#include "panoptic/matching.hpp"
#include "panoptic/metrics.hpp"
#include "panoptic/panoptic_map.hpp"
#include "panoptic/potential.hpp"
#include "panoptic/scene.hpp"
#include "panoptic/training.hpp"

namespace panoptic {

/// Boxes are written as [x0, y0, x1, y1].
inline void to_json(nlohmann::json& j, const Box& b) { j = {b.x0, b.y0, b.x1, b.y1}; }
inline void from_json(const nlohmann::json& j, Box& b) {
  if (!j.is_array() || j.size() != 4) {
    throw nlohmann::json::type_error::create(302, "box must be [x0, y0, x1, y1]", &j);
  }
  b = {j[0].get<int>(), j[1].get<int>(), j[2].get<int>(), j[3].get<int>()};
}

NLOHMANN_JSON_SERIALIZE_ENUM(SegmentKind, {{SegmentKind::kThing, "thing"},
                                           {SegmentKind::kStuff, "stuff"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Variant, {{Variant::kA, "A"}, {Variant::kB, "B"}, {Variant::kC, "C"}})

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ClassCatalog, n_stuff, n_thing, names)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(GtSegment, index, class_id, box, area)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthConfig, height, width, n_stuff, n_thing,
                                                n_instances, min_instance_side,
                                                max_instance_side, box_truncation, box_jitter,
                                                confusion_rate, feature_noise, feature_channels,
                                                with_masks, mask_foreground, mask_background,
                                                mask_noise)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ChannelMeta, kind, class_id, detection_index)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PanopticSegment, class_id, kind, instance_id, area)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MatchPair, gt_segment, detection, box_iou,
                                                by_identity)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MatchResult, pairs, unmatched_gt,
                                                removed_duplicates)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(CostReport, pixels, channels, naive_flops,
                                                factored_flops, projection_flops,
                                                affinity_matrix_bytes, reduction_percent)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(MergerParams, instance_score_threshold,
                                                overlap_threshold, stuff_area_threshold)

NLOHMANN_JSON_SERIALIZE_ENUM(DetectionSource, {{DetectionSource::kPredicted, "predicted"},
                                               {DetectionSource::kGroundTruth, "ground_truth"}})
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, name, steps, learning_rate, seed,
                                                use_affinity, detections, variant, use_masks,
                                                match_threshold, score_threshold, init_gain,
                                                init_scale, scenes, eval_scenes, scene)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ClassPQ, pq, sq, rq, tp, fp, fn, iou_sum)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PQSummary, pq, sq, rq, n_classes)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ObjectRecovery, scene, segment, area, recovered,
                                                in_box)

/// Per-class maps are written as objects keyed by the decimal class id.
inline void to_json(nlohmann::json& j, const PQReport& r) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [cls, c] : r.per_class) per[std::to_string(cls)] = c;
  j = {{"all", r.all}, {"things", r.things}, {"stuff", r.stuff}, {"per_class", per}};
}
inline void from_json(const nlohmann::json& j, PQReport& r) {
  j.at("all").get_to(r.all);
  j.at("things").get_to(r.things);
  j.at("stuff").get_to(r.stuff);
  r.per_class.clear();
  for (const auto& [key, c] : j.at("per_class").items()) {
    r.per_class[std::uint32_t(std::stoul(key))] = c.get<ClassPQ>();
  }
}

inline void to_json(nlohmann::json& j, const MeanIoU& m) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [cls, v] : m.per_class) per[std::to_string(cls)] = v;
  j = {{"mean", m.mean}, {"per_class", per}};
}

inline void to_json(nlohmann::json& j, const ConfusionTS& c) {
  j = {{"rows", nlohmann::json::array({"gt_thing", "gt_stuff"})},
       {"cols", nlohmann::json::array({"pred_thing", "pred_stuff"})},
       {"counts", c.counts},
       {"percent", c.percent}};
}

inline void to_json(nlohmann::json& j, const EvalResult& r) {
  j = {{"pq", r.pq},
       {"miou", r.miou},
       {"box_ap", r.box_ap},
       {"thing_stuff_confusion", r.confusion},
       {"void_pixels", r.void_pixels},
       {"recovery", r.recovery}};
}

inline void to_json(nlohmann::json& j, const GradCheckReport& r) {
  j = {{"loss", r.loss}, {"max_relative_error", r.max_relative_error}, {"all_zero", r.all_zero}};
}

inline void to_json(nlohmann::json& j, const TrainingReport& r) {
  j = {{"config", r.config},
       {"initial_loss", r.initial_loss},
       {"final_loss", r.final_loss},
       {"loss_curve", r.loss_curve},
       {"held_out", r.held_out}};
}

inline void to_json(nlohmann::json& j, const AblationRow& r) {
  j = {{"name", r.name},         {"msk", r.masks},     {"aff", r.affinity},
       {"e2e", r.end_to_end},    {"heu", r.heuristic}, {"amx", r.argmax},
       {"pq", r.pq},             {"miou", r.miou},     {"box_ap", r.box_ap}};
}

}  // namespace panoptic

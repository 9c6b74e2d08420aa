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

// Desk-scale training of the affinity head on synthetic scenes, gradient
// checking, held-out evaluation and ablation tables.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "panoptic/affinity.hpp"
#include "panoptic/matching.hpp"
#include "panoptic/metrics.hpp"
#include "panoptic/potential.hpp"
#include "panoptic/scene.hpp"

namespace panoptic {

enum class DetectionSource { kPredicted, kGroundTruth };

std::string_view to_string(DetectionSource s);
DetectionSource parse_detection_source(std::string_view s);

enum class InferenceMode { kArgmax, kHeuristic };

struct TrainConfig {
  std::string name = "model";
  std::size_t steps = 500;
  double learning_rate = 0.003;
  std::uint64_t seed = 0;
  bool use_affinity = true;
  DetectionSource detections = DetectionSource::kPredicted;
  Variant variant = Variant::kB;
  bool use_masks = false;
  double match_threshold = 0.5;
  double score_threshold = 0.0;
  double init_gain = 0.5;   // diagonal of the initial projections
  double init_scale = 0.05;  // std-dev of their Gaussian perturbation
  std::size_t scenes = 16;
  std::size_t eval_scenes = 8;
  SynthConfig scene;

  void check() const;
};

/// Training or evaluation pool; scene i uses a seed derived from (seed, i).
std::vector<SyntheticScene> make_pool(const SynthConfig& cfg, std::uint64_t seed,
                                      std::size_t count);
/// Seed of the held-out pool belonging to a training seed.
std::uint64_t held_out_seed(std::uint64_t seed);

/// Thing detections used for training: the scene's own, or one tight box per
/// ground-truth instance with score 1 (binary gt masks when `with_masks`).
std::vector<Detection> training_detections(const SyntheticScene& scene, DetectionSource source,
                                           bool with_masks);

/// Everything one loss evaluation needs, independent of the parameters.
struct TrainingSample {
  DynamicPotential potential;
  LabelMap target;
  MatchResult match;
};

TrainingSample prepare_sample(const SyntheticScene& scene, const TrainConfig& cfg);

/// Loss of one sample and, with `grads`, its gradients.
double sample_loss(const TrainingSample& sample, const Tensor3& features,
                   const AffinityParams& params, bool use_affinity, AffinityGrads* grads);

struct GradCheckReport {
  std::map<std::string, double> max_relative_error;  // psi, features, w0, b0, w1, b1
  double loss = 0.0;
  bool all_zero = false;  // every analytic gradient was exactly zero

  double worst() const;
};

/// Central differences of the loss against the analytic gradients. The
/// error of a tensor is max|analytic - numeric| / max(max|analytic|,
/// max|numeric|), or 0 when both vanish.
GradCheckReport grad_check(const TrainingSample& sample, const Tensor3& features,
                           const AffinityParams& params, double epsilon);

struct ObjectRecovery {
  std::size_t scene = 0;
  std::uint32_t segment = 0;
  std::uint64_t area = 0;
  double recovered = 0.0;  // share of gt pixels predicted to the best-matching channel
  double in_box = 0.0;     // share of gt pixels inside that detection's box
};

struct EvalResult {
  PQReport pq;
  MeanIoU miou;
  double box_ap = 0.0;
  ConfusionTS confusion;
  std::vector<ObjectRecovery> recovery;
  std::uint64_t void_pixels = 0;
};

struct EvalOptions {
  bool use_affinity = true;
  Variant variant = Variant::kB;
  bool use_masks = false;
  double score_threshold = 0.0;
  InferenceMode mode = InferenceMode::kArgmax;
  MergerParams merger;
  std::size_t threads = 1;
};

/// Runs inference with the scenes' own detections and scores the result
/// against their ground truth.
EvalResult evaluate(const std::vector<SyntheticScene>& pool, const AffinityParams& params,
                    const EvalOptions& opts);

struct TrainingReport {
  TrainConfig config;
  std::vector<double> loss_curve;
  AffinityParams params;
  EvalResult held_out;

  /// Mean loss over the whole training pool before the first and after the
  /// last update.
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

/// Plain gradient descent, one scene per step in round-robin order. Throws
/// NumericError with the step index when the loss stops being finite.
TrainingReport train_toy(const TrainConfig& cfg, std::size_t eval_threads = 1);

struct AblationResult {
  std::vector<TrainingReport> reports;
  std::vector<AblationRow> rows;
};

/// Trains every config and evaluates it on the held-out pool of the first
/// config, with argmax and, when masks are present, with the merger.
AblationResult ablate(const std::vector<TrainConfig>& configs, std::size_t eval_threads = 1);

/// Named config lists: "table1", "tableA", "tableC".
std::vector<TrainConfig> ablation_preset(std::string_view name, const TrainConfig& base);

}  // namespace panoptic

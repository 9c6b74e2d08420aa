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

#include "panoptic/training.hpp"

#include <algorithm>
#include <cmath>

#include "panoptic/panoptic_map.hpp"
#include "panoptic/parallel.hpp"

namespace panoptic {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

void axpy(std::vector<double>& y, double a, const std::vector<double>& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

double max_abs_of(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Central difference of `f` with respect to every entry of `x`.
template <typename F>
std::vector<double> numeric_gradient(std::vector<double>& x, double eps, F f) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + eps;
    const double up = f();
    x[i] = keep - eps;
    const double down = f();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff = std::max(diff, std::abs(analytic[i] - numeric[i]));
  }
  const double scale = std::max(max_abs_of(analytic), max_abs_of(numeric));
  return scale > 0.0 ? diff / scale : 0.0;
}

struct SceneEval {
  PQAccumulator pq;
  IoUAccumulator iou;
  BoxAPAccumulator ap;
  ConfusionTS confusion;
  std::vector<ObjectRecovery> recovery;
  std::uint64_t void_pixels = 0;

  explicit SceneEval(const ClassCatalog& c) : pq(c), iou(c) {}
};

void recovery_stats(std::size_t scene_index, const SyntheticScene& scene,
                    const std::vector<Detection>& dets, const DynamicPotential& pot,
                    const LabelMap& winner, std::vector<ObjectRecovery>& out) {
  const auto& catalog = scene.cues.catalog;
  const auto& labels = scene.gt.label_map;
  for (const auto& seg : scene.gt.segments) {
    if (!catalog.is_thing(seg.class_id)) continue;
    const auto box = tight_box(labels, seg.index);
    if (!box) continue;
    double best = 0.0;
    std::size_t best_d = dets.size();
    for (std::size_t d = 0; d < dets.size(); ++d) {
      const double iou = box_iou(*box, dets[d].box, seg.class_id, dets[d].class_id);
      if (iou > best) {
        best = iou;
        best_d = d;
      }
    }
    ObjectRecovery r;
    r.scene = scene_index;
    r.segment = seg.index;
    std::uint64_t hit = 0, inside = 0;
    const std::size_t channel = best_d < dets.size() ? pot.channel_of_detection(best_d) : kVoid;
    const Box b = best_d < dets.size() ? dets[best_d].box : Box{};
    for (std::size_t p = 0; p < labels.size(); ++p) {
      if (labels[p] != seg.index) continue;
      ++r.area;
      if (winner[p] == channel) ++hit;
      if (b.contains(int(p / labels.width()), int(p % labels.width()))) ++inside;
    }
    if (r.area > 0) {
      r.recovered = double(hit) / double(r.area);
      r.in_box = double(inside) / double(r.area);
    }
    out.push_back(r);
  }
}

}  // namespace

std::string_view to_string(DetectionSource s) {
  return s == DetectionSource::kPredicted ? "predicted" : "ground_truth";
}

DetectionSource parse_detection_source(std::string_view s) {
  if (s == "predicted") return DetectionSource::kPredicted;
  if (s == "ground_truth" || s == "gt") return DetectionSource::kGroundTruth;
  throw CueError("unknown detection source '" + std::string(s) + "'");
}

void TrainConfig::check() const {
  if (steps < 1) throw CueError("steps must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw CueError("learning_rate must be positive");
  }
  if (!(match_threshold > 0.0 && match_threshold <= 1.0)) {
    throw CueError("match threshold must lie in (0,1]");
  }
  if (scenes < 1 || eval_scenes < 1) throw CueError("scene pools must not be empty");
  if (use_masks && !scene.with_masks) throw CueError("use_masks needs scenes generated with masks");
}

std::uint64_t held_out_seed(std::uint64_t seed) { return splitmix64(seed ^ 0x68656c646f7574ull); }

std::vector<SyntheticScene> make_pool(const SynthConfig& cfg, std::uint64_t seed,
                                      std::size_t count) {
  std::vector<SyntheticScene> pool;
  pool.reserve(count);
  for (std::size_t i = 0; i < count; ++i) pool.push_back(synth_scene(cfg, splitmix64(seed + i)));
  return pool;
}

std::vector<Detection> training_detections(const SyntheticScene& scene, DetectionSource source,
                                           bool with_masks) {
  if (source == DetectionSource::kPredicted) return scene.cues.detections;
  const auto& catalog = scene.cues.catalog;
  const auto& labels = scene.gt.label_map;
  std::vector<Detection> out;
  for (const auto& seg : scene.gt.segments) {
    if (!catalog.is_thing(seg.class_id)) continue;
    const auto box = tight_box(labels, seg.index);
    if (!box) continue;
    Detection d;
    d.box = *box;
    d.score = 1.0;
    d.class_id = seg.class_id;
    if (with_masks) {
      MaskPlane m(labels.height(), labels.width());
      for (std::size_t p = 0; p < labels.size(); ++p) m.data()[p] = labels[p] == seg.index ? 1.0 : 0.0;
      d.mask = std::move(m);
    }
    out.push_back(std::move(d));
  }
  return out;
}

TrainingSample prepare_sample(const SyntheticScene& scene, const TrainConfig& cfg) {
  const auto& cues = scene.cues;
  auto dets = training_detections(scene, cfg.detections, cfg.use_masks);
  dets = filter_by_score(dets, cfg.score_threshold, cues.catalog);
  dets = append_stuff_boxes(std::move(dets), cues.catalog, cues.height(), cues.width());
  TrainingSample s;
  s.match = match_segments(scene.gt, dets, cues.catalog, cfg.match_threshold);
  const PrunedDetections pruned = remove_duplicates(dets, s.match);
  s.potential = build_potential(cues.v, cues.catalog, pruned.detections, cfg.variant, cfg.use_masks);
  s.target = build_target_map(scene.gt, s.match, s.potential.channels, pruned.source_index);
  return s;
}

double sample_loss(const TrainingSample& sample, const Tensor3& features,
                   const AffinityParams& params, bool use_affinity, AffinityGrads* grads) {
  const Tensor3& psi = sample.potential.psi;
  if (!use_affinity) {
    LossResult r = panoptic_matching_loss(psi, sample.target);
    if (grads) {
      *grads = AffinityGrads{};
      grads->d_psi = std::move(r.grad_p);
    }
    return r.loss;
  }
  LossResult r = panoptic_matching_loss(affinity_forward(psi, features, params), sample.target);
  if (grads) *grads = backward_affinity(psi, features, params, r.grad_p);
  return r.loss;
}

double GradCheckReport::worst() const {
  double w = 0.0;
  for (const auto& [name, e] : max_relative_error) w = std::max(w, e);
  return w;
}

GradCheckReport grad_check(const TrainingSample& sample, const Tensor3& features,
                           const AffinityParams& params, double epsilon) {
  if (!(epsilon > 0.0 && epsilon <= 1e-3)) throw CueError("epsilon must lie in (0, 1e-3]");
  AffinityGrads g;
  GradCheckReport out;
  out.loss = sample_loss(sample, features, params, true, &g);

  Tensor3 psi = sample.potential.psi;
  Tensor3 q = features;
  AffinityParams p = params;
  auto loss = [&] {
    return panoptic_matching_loss(affinity_forward(psi, q, p), sample.target).loss;
  };
  out.max_relative_error["psi"] =
      relative_error(g.d_psi.data(), numeric_gradient(psi.data(), epsilon, loss));
  out.max_relative_error["features"] =
      relative_error(g.d_features.data(), numeric_gradient(q.data(), epsilon, loss));
  out.max_relative_error["w0"] =
      relative_error(g.d_w0.data(), numeric_gradient(p.w0.data(), epsilon, loss));
  out.max_relative_error["b0"] = relative_error(g.d_b0, numeric_gradient(p.b0, epsilon, loss));
  out.max_relative_error["w1"] =
      relative_error(g.d_w1.data(), numeric_gradient(p.w1.data(), epsilon, loss));
  out.max_relative_error["b1"] = relative_error(g.d_b1, numeric_gradient(p.b1, epsilon, loss));
  out.all_zero = max_abs_of(g.d_psi.data()) == 0.0 && max_abs_of(g.d_features.data()) == 0.0 &&
                 max_abs_of(g.d_w0.data()) == 0.0 && max_abs_of(g.d_w1.data()) == 0.0 &&
                 max_abs_of(g.d_b0) == 0.0 && max_abs_of(g.d_b1) == 0.0;
  return out;
}

EvalResult evaluate(const std::vector<SyntheticScene>& pool, const AffinityParams& params,
                    const EvalOptions& opts) {
  if (pool.empty()) throw CueError("evaluation pool is empty");
  const ClassCatalog& catalog = pool.front().cues.catalog;
  std::vector<SceneEval> parts(pool.size(), SceneEval(catalog));

  parallel_blocks(pool.size(), opts.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& scene = pool[i];
      const auto& cues = scene.cues;
      SceneEval& part = parts[i];
      const auto things = filter_by_score(cues.detections, opts.score_threshold, cues.catalog);
      PanopticMap pred;
      if (opts.mode == InferenceMode::kHeuristic) {
        pred = heuristic_merge(cues.v, cues.catalog, things, opts.merger);
      } else {
        const auto dets = append_stuff_boxes(things, cues.catalog, cues.height(), cues.width());
        const DynamicPotential pot =
            build_potential(cues.v, cues.catalog, dets, opts.variant, opts.use_masks);
        const Tensor3 p =
            opts.use_affinity ? affinity_forward(pot.psi, cues.features, params) : pot.psi;
        pred = infer_panoptic(p, pot.channels);
        recovery_stats(i, scene, dets, pot, argmax_channels(p), part.recovery);
      }
      const PanopticMap gt = to_panoptic_map(scene.gt, cues.catalog);
      part.pq.add(pred, gt);
      const LabelMap pred_classes = pred.class_map(), gt_classes = gt.class_map();
      part.iou.add(pred_classes, gt_classes);
      part.confusion = thing_stuff_confusion(pred_classes, gt_classes, cues.catalog);
      std::vector<ClassBox> gt_boxes;
      for (const auto& b : boxes_from_segments(scene.gt)) {
        if (cues.catalog.is_thing(b.class_id)) gt_boxes.push_back(b);
      }
      part.ap.add(things, gt_boxes);
      part.void_pixels = pred.void_count();
    }
  });

  SceneEval total(catalog);
  EvalResult out;
  for (const auto& part : parts) {
    total.pq.merge(part.pq);
    total.iou.merge(part.iou);
    total.ap.merge(part.ap);
    out.confusion.add(part.confusion);
    out.recovery.insert(out.recovery.end(), part.recovery.begin(), part.recovery.end());
    out.void_pixels += part.void_pixels;
  }
  out.pq = total.pq.report();
  out.miou = total.iou.result();
  out.box_ap = total.ap.value();
  return out;
}

TrainingReport train_toy(const TrainConfig& cfg, std::size_t eval_threads) {
  cfg.check();
  TrainingReport report;
  report.config = cfg;
  const auto pool = make_pool(cfg.scene, cfg.seed, cfg.scenes);
  std::vector<TrainingSample> samples;
  samples.reserve(pool.size());
  for (const auto& scene : pool) samples.push_back(prepare_sample(scene, cfg));

  AffinityParams params = AffinityParams::near_identity(cfg.scene.feature_channels, cfg.init_gain,
                                                        cfg.init_scale, splitmix64(cfg.seed));
  auto pool_loss = [&] {
    double total = 0.0;
    for (std::size_t s = 0; s < samples.size(); ++s) {
      total += sample_loss(samples[s], pool[s].cues.features, params, cfg.use_affinity, nullptr);
    }
    return total / double(samples.size());
  };
  report.initial_loss = pool_loss();
  report.loss_curve.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const std::size_t s = step % samples.size();
    AffinityGrads g;
    const double loss =
        sample_loss(samples[s], pool[s].cues.features, params, cfg.use_affinity, &g);
    if (!std::isfinite(loss)) {
      throw NumericError("training loss became non-finite", static_cast<long>(step));
    }
    report.loss_curve.push_back(loss);
    if (!cfg.use_affinity) continue;
    axpy(params.w0.data(), -cfg.learning_rate, g.d_w0.data());
    axpy(params.b0, -cfg.learning_rate, g.d_b0);
    axpy(params.w1.data(), -cfg.learning_rate, g.d_w1.data());
    axpy(params.b1, -cfg.learning_rate, g.d_b1);
  }
  report.params = params;
  report.final_loss = pool_loss();

  EvalOptions opts;
  opts.use_affinity = cfg.use_affinity;
  opts.variant = cfg.variant;
  opts.use_masks = cfg.use_masks;
  opts.score_threshold = cfg.score_threshold;
  opts.threads = eval_threads;
  report.held_out =
      evaluate(make_pool(cfg.scene, held_out_seed(cfg.seed), cfg.eval_scenes), params, opts);
  return report;
}

AblationResult ablate(const std::vector<TrainConfig>& configs, std::size_t eval_threads) {
  if (configs.empty()) throw CueError("no configurations to compare");
  const TrainConfig& first = configs.front();
  const auto held_out = make_pool(first.scene, held_out_seed(first.seed), first.eval_scenes);
  const bool masks_available = first.scene.with_masks;

  AblationResult out;
  for (const auto& cfg : configs) {
    TrainingReport report = train_toy(cfg, eval_threads);
    EvalOptions opts;
    opts.use_affinity = cfg.use_affinity;
    opts.variant = cfg.variant;
    opts.use_masks = cfg.use_masks;
    opts.score_threshold = cfg.score_threshold;
    opts.threads = eval_threads;

    std::vector<InferenceMode> modes = {InferenceMode::kArgmax};
    if (masks_available && cfg.use_masks) modes.push_back(InferenceMode::kHeuristic);
    for (InferenceMode mode : modes) {
      opts.mode = mode;
      const EvalResult r = evaluate(held_out, report.params, opts);
      AblationRow row;
      row.name = cfg.name + (modes.size() > 1 ? (mode == InferenceMode::kArgmax ? "-amx" : "-heu")
                                              : std::string());
      row.masks = cfg.use_masks;
      row.affinity = cfg.use_affinity;
      row.end_to_end = cfg.use_affinity;
      row.heuristic = mode == InferenceMode::kHeuristic;
      row.argmax = mode == InferenceMode::kArgmax;
      row.pq = r.pq;
      row.miou = r.miou.mean;
      row.box_ap = r.box_ap;
      out.rows.push_back(std::move(row));
    }
    out.reports.push_back(std::move(report));
  }
  return out;
}

std::vector<TrainConfig> ablation_preset(std::string_view name, const TrainConfig& base) {
  auto make = [&](std::string n, auto tweak) {
    TrainConfig c = base;
    c.name = std::move(n);
    tweak(c);
    return c;
  };
  if (name == "table1") {
    return {
        make("no-aff", [](TrainConfig& c) {
          c.use_affinity = false;
          c.use_masks = false;
          c.variant = Variant::kA;
        }),
        make("aff", [](TrainConfig& c) {
          c.use_affinity = true;
          c.use_masks = false;
        }),
        make("msk", [](TrainConfig& c) {
          c.use_affinity = false;
          c.use_masks = c.scene.with_masks;
        }),
        make("msk-aff", [](TrainConfig& c) {
          c.use_affinity = true;
          c.use_masks = c.scene.with_masks;
        }),
    };
  }
  if (name == "tableA") {
    return {make("variant-B", [](TrainConfig& c) { c.variant = Variant::kB; }),
            make("variant-C", [](TrainConfig& c) { c.variant = Variant::kC; })};
  }
  if (name == "tableC") {
    return {make("pred-det", [](TrainConfig& c) { c.detections = DetectionSource::kPredicted; }),
            make("gt-det", [](TrainConfig& c) { c.detections = DetectionSource::kGroundTruth; })};
  }
  throw CueError("unknown ablation preset '" + std::string(name) + "'");
}

}  // namespace panoptic

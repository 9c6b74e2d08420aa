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

#include "panoptic/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "panoptic/json_io.hpp"
#include "panoptic/parallel.hpp"
#include "panoptic/tensor_io.hpp"

namespace panoptic {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string percent(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * x);
  return buf;
}

void add_synth_options(CLI::App* sub, SynthConfig& cfg) {
  sub->add_option("--height", cfg.height, "grid height")->capture_default_str();
  sub->add_option("--width", cfg.width, "grid width")->capture_default_str();
  sub->add_option("--n-stuff", cfg.n_stuff, "stuff classes")->capture_default_str();
  sub->add_option("--n-thing", cfg.n_thing, "thing classes")->capture_default_str();
  sub->add_option("--instances", cfg.n_instances, "thing instances per scene")
      ->capture_default_str();
  sub->add_option("--min-side", cfg.min_instance_side, "smallest instance side")
      ->capture_default_str();
  sub->add_option("--max-side", cfg.max_instance_side, "largest instance side")
      ->capture_default_str();
  sub->add_option("--truncation", cfg.box_truncation, "detection box shrink per side")
      ->capture_default_str();
  sub->add_option("--jitter", cfg.box_jitter, "detection box jitter std-dev (pixels)")
      ->capture_default_str();
  sub->add_option("--confusion", cfg.confusion_rate, "thing probability mass moved in V")
      ->capture_default_str();
  sub->add_option("--feature-noise", cfg.feature_noise, "feature noise std-dev")
      ->capture_default_str();
  sub->add_option("--channels", cfg.feature_channels, "feature width C")->capture_default_str();
  sub->add_flag("--masks", cfg.with_masks, "generate instance masks");
}

struct TrainFlags {
  std::string variant = "B";
  std::string detections = "predicted";
  bool no_affinity = false;
};

void add_train_options(CLI::App* sub, TrainConfig& cfg, TrainFlags& flags) {
  sub->add_option("--steps", cfg.steps, "gradient steps")->capture_default_str();
  sub->add_option("--lr", cfg.learning_rate, "learning rate")->capture_default_str();
  sub->add_option("--seed", cfg.seed, "seed of pools and initialisation")->capture_default_str();
  sub->add_option("--scenes", cfg.scenes, "training pool size")->capture_default_str();
  sub->add_option("--eval-scenes", cfg.eval_scenes, "held-out pool size")->capture_default_str();
  sub->add_option("--match-threshold", cfg.match_threshold, "box IoU threshold t")
      ->capture_default_str();
  sub->add_option("--score-threshold", cfg.score_threshold, "detection score threshold")
      ->capture_default_str();
  sub->add_option("--init-gain", cfg.init_gain, "initial projection diagonal")
      ->capture_default_str();
  sub->add_option("--init-scale", cfg.init_scale, "initial projection noise")
      ->capture_default_str();
  sub->add_option("--variant", flags.variant, "potential variant")
      ->check(CLI::IsMember({"A", "B", "C"}))
      ->capture_default_str();
  sub->add_option("--detections", flags.detections, "training boxes")
      ->check(CLI::IsMember({"predicted", "ground_truth"}))
      ->capture_default_str();
  sub->add_flag("--no-affinity", flags.no_affinity, "train and evaluate without the affinity");
  sub->add_flag("--use-masks", cfg.use_masks, "build the potential with masks");
  add_synth_options(sub, cfg.scene);
}

void apply_train_flags(TrainConfig& cfg, const TrainFlags& flags) {
  cfg.variant = parse_variant(flags.variant);
  cfg.detections = parse_detection_source(flags.detections);
  cfg.use_affinity = !flags.no_affinity;
}

std::string render_costs(const json& j) {
  auto u = [&](const char* k) { return std::to_string(j.at(k).get<std::uint64_t>()); };
  char gib[64];
  std::snprintf(gib, sizeof gib, "%.2f", double(j.at("affinity_matrix_bytes").get<std::uint64_t>()) /
                                             double(1ull << 30));
  char red[32];
  std::snprintf(red, sizeof red, "%.3f", j.at("reduction_percent").get<double>());
  return "pixels n             " + u("pixels") + "\nchannels k           " + u("channels") +
         "\naffinity bytes       " + u("affinity_matrix_bytes") + " (" + gib + " GiB)" +
         "\nnaive flops          " + u("naive_flops") + "\nfactored flops       " +
         u("factored_flops") + "\nprojection flops     " + u("projection_flops") +
         "\nreduction            " + red + " %\n";
}

std::string render_training(const json& j, const ClassCatalog& catalog) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "loss %.6f -> %.6f over %zu steps\n",
                j.at("initial_loss").get<double>(), j.at("final_loss").get<double>(),
                j.at("loss_curve").size());
  return buf + render_pq_report(j.at("held_out").at("pq").get<PQReport>(), catalog);
}

// One scene through the pipeline.
struct RunOutput {
  PanopticMap map;
  json summary;
};

struct RunOptions {
  std::optional<AffinityParams> params;
  bool use_affinity = false;
  Variant variant = Variant::kB;
  bool use_masks = false;
  double score_threshold = 0.0;
  InferenceMode mode = InferenceMode::kArgmax;
  MergerParams merger;
  std::uint64_t trim = 0;
  bool dump_match = false;
  double match_threshold = 0.5;
  std::vector<std::size_t> dump_affinity;
};

RunOutput run_scene(const SceneContainer& scene, const RunOptions& o, const fs::path& out_dir) {
  const auto& cues = scene.cues;
  const auto violations = validate_scene(cues);
  if (!violations.empty()) {
    throw CueError("scene invalid: " + violations.front().field + ": " + violations.front().rule);
  }
  const auto things = filter_by_score(cues.detections, o.score_threshold, cues.catalog);
  const auto dets = append_stuff_boxes(things, cues.catalog, cues.height(), cues.width());

  RunOutput r;
  json warnings = json::array();
  if (o.mode == InferenceMode::kHeuristic) {
    r.map = heuristic_merge(cues.v, cues.catalog, things, o.merger);
  } else {
    const DynamicPotential pot = build_potential(cues.v, cues.catalog, dets, o.variant, o.use_masks);
    for (const auto& w : pot.warnings) warnings.push_back(w);
    const Tensor3 p =
        o.use_affinity ? affinity_forward(pot.psi, cues.features, *o.params) : pot.psi;
    r.map = infer_panoptic(p, pot.channels);
  }
  if (o.trim > 0) r.map = trim_small_stuff(r.map, o.trim);
  save_panoptic(r.map, out_dir);

  if (o.dump_match) {
    if (!scene.gt) throw CueError("--dump-match needs ground truth in the scene");
    const MatchResult m = match_segments(*scene.gt, dets, cues.catalog, o.match_threshold);
    write_json(out_dir / "match.json", json{{"threshold", o.match_threshold},
                                            {"total_iou", m.total_iou()},
                                            {"match", m}});
  }
  if (!o.dump_affinity.empty()) {
    const AffinityParams params =
        o.params ? *o.params : AffinityParams::zeros(cues.features.channels());
    const Projections q = project_features(cues.features, params);
    const Matrix a = affinity_map_for_pixel(q.q0, q.q1, o.dump_affinity[0], o.dump_affinity[1]);
    write_panc(out_dir / ("affinity_" + std::to_string(o.dump_affinity[0]) + "_" +
                          std::to_string(o.dump_affinity[1]) + ".panc"),
               to_raw(a));
  }
  r.summary = {{"segments", r.map.segments.size()},
               {"void_pixels", r.map.void_count()},
               {"mode", o.mode == InferenceMode::kArgmax ? "argmax" : "heuristic"},
               {"affinity", o.use_affinity},
               {"variant", o.variant},
               {"warnings", warnings}};
  write_json(out_dir / "run.json", r.summary);
  return r;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Panoptic segmentation with a dense instance affinity head", "panoptic"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "print JSON instead of tables");
  app.fallthrough();

  // synth
  SynthConfig synth_cfg;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "generate a synthetic scene container");
  synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->required();
  add_synth_options(synth, synth_cfg);

  // run
  std::vector<std::string> run_scenes;
  std::string run_out, run_params, run_variant = "B", run_mode = "argmax";
  RunOptions run_opts;
  bool run_no_affinity = false;
  auto* run = app.add_subcommand("run", "run the pipeline on scene containers");
  run->add_option("--scene", run_scenes, "scene container(s)")->required();
  run->add_option("--out", run_out, "output directory")->required();
  run->add_option("--params", run_params, "affinity checkpoint directory");
  run->add_flag("--no-affinity", run_no_affinity, "skip the affinity even with --params");
  run->add_option("--variant", run_variant, "potential variant")
      ->check(CLI::IsMember({"A", "B", "C"}))
      ->capture_default_str();
  run->add_flag("--masks", run_opts.use_masks, "use instance masks in the potential");
  run->add_option("--score-threshold", run_opts.score_threshold, "detection score threshold")
      ->capture_default_str();
  run->add_option("--mode", run_mode, "inference mode")
      ->check(CLI::IsMember({"argmax", "heuristic"}))
      ->capture_default_str();
  run->add_option("--instance-threshold", run_opts.merger.instance_score_threshold,
                  "merger: minimum instance score")
      ->capture_default_str();
  run->add_option("--overlap-threshold", run_opts.merger.overlap_threshold,
                  "merger: tolerated claimed fraction")
      ->capture_default_str();
  run->add_option("--stuff-area", run_opts.merger.stuff_area_threshold,
                  "merger: minimum stuff area")
      ->capture_default_str();
  run->add_option("--trim", run_opts.trim, "void stuff segments smaller than this")
      ->capture_default_str();
  run->add_flag("--dump-match", run_opts.dump_match, "write match.json");
  run->add_option("--match-threshold", run_opts.match_threshold, "box IoU threshold t")
      ->capture_default_str();
  run->add_option("--dump-affinity", run_opts.dump_affinity, "write the affinity row of pixel r,c")
      ->delimiter(',')
      ->expected(2);

  // train
  TrainConfig train_cfg;
  TrainFlags train_flags;
  std::string train_out;
  auto* train = app.add_subcommand("train", "train the affinity head on synthetic scenes");
  train->add_option("--out", train_out, "checkpoint directory")->required();
  add_train_options(train, train_cfg, train_flags);

  // eval
  std::vector<std::string> eval_scenes, eval_preds;
  std::string eval_report;
  auto* eval = app.add_subcommand("eval", "score panoptic maps against scene ground truth");
  eval->add_option("--scene", eval_scenes, "scene container(s) with ground truth")->required();
  eval->add_option("--pred", eval_preds, "panoptic map directories, one per scene")->required();
  eval->add_option("--report", eval_report, "also write the JSON report here");

  // costs
  std::uint64_t ch = 0, cw = 0, cd = 4, cc = 128, cdet = 100, cstuff = 53, cbytes = 4;
  auto* costs = app.add_subcommand("costs", "memory and FLOP model of the affinity head");
  costs->set_help_flag("--help", "Print this help message and exit");
  costs->add_option("--h", ch, "image height")->required();
  costs->add_option("--w", cw, "image width")->required();
  costs->add_option("--d", cd, "downsampling factor")->capture_default_str();
  costs->add_option("--c", cc, "feature width")->capture_default_str();
  costs->add_option("--ndet", cdet, "detections")->capture_default_str();
  costs->add_option("--nstuff", cstuff, "stuff classes")->capture_default_str();
  costs->add_option("--bytes", cbytes, "bytes per scalar")->capture_default_str();

  // ablate
  TrainConfig ablate_cfg;
  TrainFlags ablate_flags;
  std::string preset;
  auto* ablate_cmd = app.add_subcommand("ablate", "train and compare configurations");
  ablate_cmd->add_option("--preset", preset, "comparison to run")
      ->check(CLI::IsMember({"table1", "tableA", "tableC"}))
      ->required();
  add_train_options(ablate_cmd, ablate_cfg, ablate_flags);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  const std::size_t threads = thread_budget();
  try {
    if (*synth) {
      const SyntheticScene s = synth_scene(synth_cfg, synth_seed);
      SceneContainer c{s.cues, s.gt, synth_cfg, synth_seed};
      save_scene(c, synth_out);
      const json j = {{"out", synth_out},
                      {"seed", synth_seed},
                      {"segments", s.gt.segments.size()},
                      {"detections", s.cues.detections.size()}};
      if (as_json) {
        out << j.dump(2) << '\n';
      } else {
        out << "wrote " << synth_out << ": " << s.gt.segments.size() << " segments, "
            << s.cues.detections.size() << " detections\n";
      }
    } else if (*run) {
      run_opts.variant = parse_variant(run_variant);
      run_opts.mode = run_mode == "heuristic" ? InferenceMode::kHeuristic : InferenceMode::kArgmax;
      if (!run_params.empty()) run_opts.params = load_params(run_params);
      run_opts.use_affinity = run_opts.params.has_value() && !run_no_affinity;
      std::vector<json> summaries(run_scenes.size());
      parallel_blocks(run_scenes.size(), threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
          const fs::path dir = run_scenes.size() == 1
                                   ? fs::path(run_out)
                                   : fs::path(run_out) / fs::path(run_scenes[i]).filename();
          summaries[i] = run_scene(load_scene(run_scenes[i]), run_opts, dir).summary;
          summaries[i]["scene"] = run_scenes[i];
          summaries[i]["out"] = dir.string();
        }
      });
      if (as_json) {
        out << json(summaries).dump(2) << '\n';
      } else {
        for (const auto& s : summaries) {
          out << s["scene"].get<std::string>() << " -> " << s["out"].get<std::string>() << ": "
              << s["segments"] << " segments, " << s["void_pixels"] << " void pixels\n";
        }
      }
    } else if (*train) {
      apply_train_flags(train_cfg, train_flags);
      const TrainingReport rep = train_toy(train_cfg, threads);
      save_params(rep.params, train_out);
      const json j = rep;
      write_json(fs::path(train_out) / "report.json", j);
      ClassCatalog catalog{train_cfg.scene.n_stuff, train_cfg.scene.n_thing, {}};
      out << (as_json ? j.dump(2) + "\n" : render_training(j, catalog));
    } else if (*eval) {
      if (eval_scenes.size() != eval_preds.size()) {
        err << "error: --scene and --pred must be given the same number of times\n";
        return kExitUsage;
      }
      const std::size_t n = eval_scenes.size();
      std::vector<SceneContainer> scenes(n);
      std::vector<PanopticMap> preds(n);
      parallel_blocks(n, threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
          scenes[i] = load_scene(eval_scenes[i]);
          if (!scenes[i].gt) throw CueError(eval_scenes[i] + " has no ground truth");
          preds[i] = load_panoptic(eval_preds[i]);
        }
      });
      const ClassCatalog catalog = scenes.front().cues.catalog;
      PQAccumulator pq(catalog);
      IoUAccumulator iou(catalog);
      BoxAPAccumulator ap;
      ConfusionTS confusion;
      for (std::size_t i = 0; i < n; ++i) {
        if (!(scenes[i].cues.catalog == catalog)) throw CueError("scenes use different catalogs");
        const PanopticMap gt = to_panoptic_map(*scenes[i].gt, catalog);
        pq.add(preds[i], gt);
        const LabelMap pc = preds[i].class_map(), gc = gt.class_map();
        iou.add(pc, gc);
        confusion.add(thing_stuff_confusion(pc, gc, catalog));
        std::vector<ClassBox> boxes;
        for (const auto& b : boxes_from_segments(*scenes[i].gt)) {
          if (catalog.is_thing(b.class_id)) boxes.push_back(b);
        }
        ap.add(scenes[i].cues.detections, boxes);
      }
      const json j = {{"scenes", n},
                      {"pq", pq.report()},
                      {"miou", iou.result()},
                      {"box_ap", ap.value()},
                      {"thing_stuff_confusion", confusion}};
      if (!eval_report.empty()) write_json(eval_report, j);
      if (as_json) {
        out << j.dump(2) << '\n';
      } else {
        out << render_pq_report(j.at("pq").get<PQReport>(), catalog) << "\nmIoU "
            << percent(j.at("miou").at("mean").get<double>()) << "   box AP "
            << percent(j.at("box_ap").get<double>()) << "\n\n"
            << render_confusion(confusion);
      }
    } else if (*costs) {
      const json j = estimate_costs(ch, cw, cd, cc, cdet, cstuff, cbytes);
      out << (as_json ? j.dump(2) + "\n" : render_costs(j));
    } else if (*ablate_cmd) {
      apply_train_flags(ablate_cfg, ablate_flags);
      if (preset == "table1") {
        ablate_cfg.scene.with_masks = true;
        ablate_cfg.use_masks = true;
      }
      const AblationResult res = ablate(ablation_preset(preset, ablate_cfg), threads);
      const json j = {{"preset", preset}, {"rows", res.rows}};
      out << (as_json ? j.dump(2) + "\n" : render_ablation_table(res.rows));
    }
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace panoptic

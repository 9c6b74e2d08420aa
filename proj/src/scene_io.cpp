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

#include <fstream>

#include "panoptic/json_io.hpp"
#include "panoptic/scene.hpp"
#include "panoptic/tensor_io.hpp"

namespace panoptic {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSceneFormat = "panoptic-scene/1";

json shape_json(const std::vector<std::uint32_t>& dims) { return json(dims); }

// Loads a tensor and checks it against the shape recorded in the manifest.
RawTensor load_checked(const fs::path& dir, const json& entry, const std::string& what) {
  const auto file = entry.at("file").get<std::string>();
  RawTensor raw = read_panc(dir / file);
  const auto expected = entry.at("shape").get<std::vector<std::uint32_t>>();
  if (expected != raw.dims) {
    std::string got, want;
    for (auto d : raw.dims) got += (got.empty() ? "" : "x") + std::to_string(d);
    for (auto d : expected) want += (want.empty() ? "" : "x") + std::to_string(d);
    throw ShapeError(what + " (" + file + "): manifest shape " + want + " but payload is " + got,
                     8);
  }
  return raw;
}

json tensor_entry(const std::string& file, const RawTensor& raw) {
  return {{"file", file}, {"shape", shape_json(raw.dims)}};
}

}  // namespace

void save_scene(const SceneContainer& scene, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& cues = scene.cues;
  json m;
  m["format"] = kSceneFormat;
  m["catalog"] = cues.catalog;
  m["height"] = cues.height();
  m["width"] = cues.width();

  const RawTensor v = to_raw(cues.v);
  write_panc(dir / "v.panc", v);
  m["v"] = tensor_entry("v.panc", v);
  const RawTensor f = to_raw(cues.features);
  write_panc(dir / "features.panc", f);
  m["features"] = tensor_entry("features.panc", f);

  json dets = json::array();
  for (std::size_t i = 0; i < cues.detections.size(); ++i) {
    const auto& d = cues.detections[i];
    json jd;
    jd["box"] = d.box;
    jd["score"] = d.score;
    jd["class_id"] = d.class_id;
    if (d.mask) {
      const std::string file = "mask_" + std::to_string(i) + ".panc";
      const RawTensor raw = to_raw(*d.mask);
      write_panc(dir / file, raw);
      jd["mask"] = tensor_entry(file, raw);
    } else {
      jd["mask"] = nullptr;
    }
    dets.push_back(jd);
  }
  m["detections"] = dets;

  if (scene.gt) {
    const RawTensor labels = to_raw(scene.gt->label_map);
    write_panc(dir / "gt_labels.panc", labels);
    json g;
    g["labels"] = tensor_entry("gt_labels.panc", labels);
    g["segments"] = scene.gt->segments;
    m["ground_truth"] = g;
  }
  if (scene.synth_config) m["synth"] = *scene.synth_config;
  if (scene.seed) m["seed"] = *scene.seed;

  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write " + (dir / "manifest.json").string());
  out << m.dump(2) << '\n';
}

SceneContainer load_scene(const fs::path& dir) {
  const fs::path manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("missing manifest " + manifest_path.string());
  json m;
  try {
    in >> m;
  } catch (const json::parse_error& e) {
    throw FormatError("manifest.json: " + std::string(e.what()), e.byte);
  }

  try {
    if (m.value("format", std::string()) != kSceneFormat) {
      throw FormatError("manifest.json: unsupported format tag", 0);
    }
    SceneContainer scene;
    auto& cues = scene.cues;
    cues.catalog = m.at("catalog").get<ClassCatalog>();
    const std::size_t H = m.at("height").get<std::size_t>();
    const std::size_t W = m.at("width").get<std::size_t>();
    cues.v = tensor3_from_raw(load_checked(dir, m.at("v"), "v"));
    cues.features = tensor3_from_raw(load_checked(dir, m.at("features"), "features"));
    if (cues.v.height() != H || cues.v.width() != W || !cues.features.same_grid(cues.v)) {
      throw ShapeError("tensor grids disagree with manifest height/width", 8);
    }
    if (cues.v.channels() != cues.catalog.n_classes()) {
      throw ShapeError("v channel count " + std::to_string(cues.v.channels()) +
                           " != catalog class count " + std::to_string(cues.catalog.n_classes()),
                       8);
    }
    for (const auto& jd : m.at("detections")) {
      Detection d;
      d.box = jd.at("box").get<Box>();
      d.score = jd.at("score").get<double>();
      d.class_id = jd.at("class_id").get<std::uint32_t>();
      if (!jd.at("mask").is_null()) {
        d.mask = matrix_from_raw(load_checked(dir, jd.at("mask"), "mask"));
        if (d.mask->rows() != H || d.mask->cols() != W) {
          throw ShapeError("mask does not cover the grid", 8);
        }
      }
      cues.detections.push_back(std::move(d));
    }
    if (m.contains("ground_truth")) {
      const auto& g = m.at("ground_truth");
      GroundTruthPanoptic gt;
      gt.label_map = labels_from_raw(load_checked(dir, g.at("labels"), "ground truth labels"));
      if (gt.label_map.height() != H || gt.label_map.width() != W) {
        throw ShapeError("ground-truth grid disagrees with manifest", 8);
      }
      gt.segments = g.at("segments").get<std::vector<GtSegment>>();
      scene.gt = std::move(gt);
    }
    if (m.contains("synth")) scene.synth_config = m.at("synth").get<SynthConfig>();
    if (m.contains("seed")) scene.seed = m.at("seed").get<std::uint64_t>();
    return scene;
  } catch (const json::exception& e) {
    throw FormatError("manifest.json: " + std::string(e.what()));
  }
}

}  // namespace panoptic

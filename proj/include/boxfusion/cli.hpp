/* Copyright 2026 The boxfusion Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "boxfusion/errors.hpp"
#include "boxfusion/evaluation.hpp"
#include "boxfusion/fusion.hpp"
#include "boxfusion/ingestion.hpp"
#include "boxfusion/synthetic.hpp"
#include "boxfusion/tuning.hpp"

namespace boxfusion::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitData = 1;
inline constexpr int kExitUsage = 2;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct FusionFlags {
  std::string method = "wbf";
  std::optional<double> iou_thr;
  double skip_thr = 0.0;
  std::string rescale = "clamped";
  double score_power = 1.0;
  double sigma = 0.5;
  double soft_thr = 1e-3;
};

struct InputFlags {
  std::vector<std::string> inputs;
  std::string format = "csv";
  std::string dims_path;
  int dim = 0;  // 0 = detect from the first input
};

struct Config {
  FusionFlags fusion;
  InputFlags input;
  std::string weights;
  std::string out_path;
  std::string out_format;
  std::string gt_path;
  std::string gt_format = "csv";
  std::string thresholds = "0.5:0.95:0.05";
  std::string report_path;
  std::string grid_path;
  std::size_t cap = 10000;
  std::size_t workers = 0;
  WorkloadSpec bench;
  std::size_t repeats = 3;
  std::string save_dir;
};

namespace detail {

inline Method require_method(const std::string& name) {
  auto m = parse_method(name);
  if (!m)
    throw UsageError("unknown method '" + name + "'; expected one of: " +
                     method_list());
  return *m;
}

inline FileFormat require_format(const std::string& name,
                                 const std::string& flag) {
  auto f = parse_format(name);
  if (!f)
    throw UsageError(flag + ": unknown format '" + name +
                     "'; expected csv, csv-pixel or coco");
  return *f;
}

inline FusionParams build_params(const FusionFlags& f) {
  FusionParams p = default_params(require_method(f.method));
  if (f.iou_thr) p.iou_threshold = *f.iou_thr;
  p.skip_threshold = f.skip_thr;
  auto r = parse_rescale(f.rescale);
  if (!r)
    throw UsageError("--rescale: expected clamped or unclamped, got '" +
                     f.rescale + "'");
  p.rescale = *r;
  p.score_power = f.score_power;
  p.soft_sigma = f.sigma;
  p.soft_score_threshold = f.soft_thr;
  try {
    validate(p);
  } catch (const InvalidParameter& e) {
    throw UsageError(e.what());
  }
  return p;
}

inline std::vector<double> parse_weights(const std::string& text,
                                         std::size_t n) {
  if (text.empty()) return std::vector<double>(n, 1.0);
  std::vector<double> w;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto v = boxfusion::detail::parse_number<double>(
        boxfusion::detail::trim(item));
    if (!v || !(*v >= 0.0) || !std::isfinite(*v))
      throw UsageError("--weights: bad weight '" + item + "'");
    w.push_back(*v);
  }
  if (w.size() != n)
    throw UsageError("--weights: got " + std::to_string(w.size()) +
                     " weights for " + std::to_string(n) + " input files");
  double sum = 0.0;
  for (double x : w) sum += x;
  if (!(sum > 0.0)) throw UsageError("--weights: all weights are zero");
  return w;
}

inline std::vector<double> thresholds_or_usage(const std::string& text) {
  try {
    return parse_thresholds(text);
  } catch (const InvalidParameter& e) {
    throw UsageError(std::string("--thresholds: ") + e.what());
  }
}

inline std::optional<ImageDimensions> load_dims(const std::string& path) {
  if (path.empty()) return std::nullopt;
  return load_dimensions(path);
}

inline const ImageDimensions* ptr(const std::optional<ImageDimensions>& d) {
  return d ? &*d : nullptr;
}

inline std::size_t resolve_dim(int dim, const std::string& first_input,
                               FileFormat format) {
  if (dim == 2 || dim == 3) return static_cast<std::size_t>(dim);
  if (dim != 0) throw UsageError("--dim must be 2 or 3");
  return detect_dimension(first_input, format);
}

inline std::string fmt(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string weights_text(const std::vector<double>& w) {
  std::string s = "[";
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) s += ",";
    s += boxfusion::detail::format_double(w[i]);
  }
  return s + "]";
}

inline nlohmann::ordered_json class_json(const ClassReport& c) {
  nlohmann::ordered_json j;
  j["label"] = c.label;
  j["ap"] = c.ap;
  j["gt"] = c.gt_count;
  j["pred"] = c.pred_count;
  j["precision"] = c.precision;
  std::vector<std::size_t> tp, fp, fn;
  for (const auto& m : c.counts) {
    tp.push_back(m.tp);
    fp.push_back(m.fp);
    fn.push_back(m.fn);
  }
  j["tp"] = tp;
  j["fp"] = fp;
  j["fn"] = fn;
  return j;
}

inline nlohmann::ordered_json report_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["thresholds"] = r.thresholds;
  j["map"] = r.map;
  j["classes"] = nlohmann::ordered_json::array();
  for (const auto& c : r.classes) j["classes"].push_back(class_json(c));
  j["prediction_only"] = nlohmann::ordered_json::array();
  for (const auto& c : r.prediction_only)
    j["prediction_only"].push_back(class_json(c));
  return j;
}

inline void write_json(const std::string& path,
                       const nlohmann::ordered_json& j) {
  boxfusion::detail::write_text(path, j.dump(2) + "\n");
}

inline std::string point_text(const GridPoint& p) {
  const auto& f = p.params;
  return "iou=" + boxfusion::detail::format_double(f.iou_threshold) +
         " skip=" + boxfusion::detail::format_double(f.skip_threshold) +
         " rescale=" + std::string(rescale_name(f.rescale)) +
         " power=" + boxfusion::detail::format_double(f.score_power) +
         " sigma=" + boxfusion::detail::format_double(f.soft_sigma) +
         " soft_thr=" + boxfusion::detail::format_double(f.soft_score_threshold) +
         " weights=" + weights_text(p.weights);
}

inline nlohmann::ordered_json point_json(const GridPoint& p) {
  const auto& f = p.params;
  nlohmann::ordered_json j;
  j["method"] = std::string(method_name(f.method));
  j["iou_threshold"] = f.iou_threshold;
  j["skip_threshold"] = f.skip_threshold;
  j["rescale"] = std::string(rescale_name(f.rescale));
  j["score_power"] = f.score_power;
  j["soft_sigma"] = f.soft_sigma;
  j["soft_score_threshold"] = f.soft_score_threshold;
  j["weights"] = p.weights;
  return j;
}

template <std::size_t D>
std::vector<DetectionGroups<D>> load_all(const InputFlags& in, FileFormat f,
                                         const ImageDimensions* dims) {
  std::vector<DetectionGroups<D>> out;
  for (const auto& path : in.inputs)
    out.push_back(load_detections<D>(path, f, dims));
  return out;
}

template <std::size_t D>
int fuse_impl(const Config& c, const FusionParams& params,
              const std::vector<double>& weights, FileFormat in_fmt,
              FileFormat out_fmt, std::ostream& out) {
  const auto dims = load_dims(c.input.dims_path);
  const auto per_model = load_all<D>(c.input, in_fmt, ptr(dims));
  std::size_t boxes_in = 0;
  for (const auto& g : per_model)
    for (const auto& [id, recs] : g) boxes_in += recs.size();
  const auto images = assemble(per_model, weights);
  const auto fused = fuse_images(images, params, c.workers);
  save_detections(fused, c.out_path, out_fmt, ptr(dims));
  out << "method: " << method_name(params.method) << "\n";
  out << "images: " << images.size() << "\n";
  out << "boxes in: " << boxes_in << "\n";
  out << "boxes out: " << fused.size() << "\n";
  return kExitOk;
}

template <std::size_t D>
int eval_impl(const Config& c, const std::vector<double>& thresholds,
              FileFormat pred_fmt, FileFormat gt_fmt, std::ostream& out) {
  const auto dims = load_dims(c.input.dims_path);
  const auto preds =
      flatten(load_detections<D>(c.input.inputs.front(), pred_fmt, ptr(dims)));
  const auto gts = load_ground_truth<D>(c.gt_path, gt_fmt, ptr(dims));
  const auto report = mean_ap(preds, gts, thresholds, c.workers);

  out << "thresholds (" << thresholds.size() << "):";
  for (double t : thresholds) out << ' ' << fmt(t, 2);
  out << "\n";
  for (const auto& cl : report.classes)
    out << "class " << cl.label << ": AP " << fmt(cl.ap, 6) << " (gt "
        << cl.gt_count << ", pred " << cl.pred_count << ")\n";
  for (const auto& cl : report.prediction_only)
    out << "class " << cl.label << ": no ground truth, " << cl.pred_count
        << " false positives\n";
  out << "mAP: " << fmt(report.map, 6) << "\n";
  if (!c.report_path.empty()) write_json(c.report_path, report_json(report));
  return kExitOk;
}

template <std::size_t D>
int tune_impl(const Config& c, Method method, const ParamGrid& grid,
              const std::vector<double>& thresholds, FileFormat pred_fmt,
              FileFormat gt_fmt, std::ostream& out) {
  const auto dims = load_dims(c.input.dims_path);
  const auto per_model = load_all<D>(c.input, pred_fmt, ptr(dims));
  const auto gts = load_ground_truth<D>(c.gt_path, gt_fmt, ptr(dims));
  TuneOptions opts;
  opts.cap = c.cap;
  opts.workers = c.workers;
  const auto result =
      grid_search(per_model, gts, method, grid, thresholds, opts);

  out << "method: " << method_name(method) << "\n";
  out << "grid points: " << result.table.size() << "\n";
  for (const auto& e : result.table)
    out << point_text(e.point) << " mAP=" << fmt(e.map, 6) << "\n";
  out << "best: " << point_text(result.best)
      << " mAP=" << fmt(result.best_map, 6) << "\n";

  if (!c.report_path.empty()) {
    nlohmann::ordered_json j;
    j["method"] = std::string(method_name(method));
    j["thresholds"] = thresholds;
    j["best"] = point_json(result.best);
    j["best_map"] = result.best_map;
    j["table"] = nlohmann::ordered_json::array();
    for (const auto& e : result.table) {
      auto row = point_json(e.point);
      row["map"] = e.map;
      j["table"].push_back(std::move(row));
    }
    write_json(c.report_path, j);
  }
  return kExitOk;
}

template <std::size_t D>
int bench_impl(const Config& c, std::ostream& out) {
  const auto w = generate_workload<D>(c.bench);
  if (!c.save_dir.empty()) {
    std::filesystem::create_directories(c.save_dir);
    for (std::size_t m = 0; m < w.per_model.size(); ++m) {
      const auto recs = flatten(w.per_model[m]);
      save_detections(recs,
                      (std::filesystem::path(c.save_dir) /
                       ("model" + std::to_string(m) + ".csv"))
                          .string(),
                      FileFormat::csv);
    }
    save_ground_truth(
        std::span<const GroundTruthBox<D>>(w.ground_truth),
        (std::filesystem::path(c.save_dir) / "gt.csv").string());
  }
  const auto rows = run_bench(w, c.repeats);
  out << "workload: " << c.bench.images << " images, " << c.bench.boxes_per_image
      << " boxes/image/model, " << c.bench.classes << " classes, "
      << c.bench.models << " models, " << D << "D, seed " << c.bench.seed
      << "\n";
  char line[128];
  std::snprintf(line, sizeof line, "%-18s %12s %10s %12s\n", "method",
                "seconds", "vs_nms", "boxes_out");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-18s %12.6f %10.2f %12zu\n",
                  std::string(method_name(r.method)).c_str(), r.seconds,
                  r.ratio_to_nms, r.boxes_out);
    out << line;
  }
  return kExitOk;
}

inline void add_fusion_flags(CLI::App* sub, FusionFlags& f) {
  sub->add_option("--method", f.method,
                  "Fusion method: " + method_list())
      ->capture_default_str();
  sub->add_option("--iou-thr", f.iou_thr,
                  "IoU threshold (default 0.55 for wbf, 0.5 otherwise)");
  sub->add_option("--skip-thr", f.skip_thr, "Drop boxes with weighted score below this")
      ->capture_default_str();
  sub->add_option("--rescale", f.rescale, "WBF score rescaling: clamped or unclamped")
      ->capture_default_str();
  sub->add_option("--score-power", f.score_power, "Exponent on scores in WBF coordinate weights")
      ->capture_default_str();
  sub->add_option("--sigma", f.sigma, "Soft-NMS Gaussian sigma")->capture_default_str();
  sub->add_option("--soft-thr", f.soft_thr, "Soft-NMS final score cutoff")
      ->capture_default_str();
}

inline void add_input_flags(CLI::App* sub, InputFlags& in, bool multiple) {
  if (multiple) {
    sub->add_option("--in", in.inputs, "Prediction files, one per model")
        ->required()
        ->expected(1, -1);
  } else {
    sub->add_option("--pred", in.inputs, "Prediction file")->required()->expected(1);
  }
  sub->add_option("--format", in.format, "Prediction format: csv, csv-pixel, coco")
      ->capture_default_str();
  sub->add_option("--dims", in.dims_path, "Image dimensions CSV (image,width,height[,depth])");
  sub->add_option("--dim", in.dim, "Box dimensionality 2 or 3 (default: detect)");
}

}  // namespace detail

// Entry point shared by the executable and the tests. Returns the process
// exit code: 0 success, 1 data error, 2 usage error.
inline int run(const std::vector<std::string>& args, std::ostream& out,
               std::ostream& err) {
  Config c;
  CLI::App app{"Detection ensemble fusion toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  auto* fuse_cmd = app.add_subcommand("fuse", "Fuse predictions of several models");
  detail::add_input_flags(fuse_cmd, c.input, true);
  detail::add_fusion_flags(fuse_cmd, c.fusion);
  fuse_cmd->add_option("--weights", c.weights, "Comma-separated model weights");
  fuse_cmd->add_option("--out", c.out_path, "Output file")->required();
  fuse_cmd->add_option("--out-format", c.out_format, "Output format (default: input format)");
  fuse_cmd->add_option("--workers", c.workers, "Worker threads (0 = auto)");

  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
  detail::add_input_flags(eval_cmd, c.input, false);
  eval_cmd->add_option("--gt", c.gt_path, "Ground-truth CSV")->required();
  eval_cmd->add_option("--gt-format", c.gt_format, "Ground-truth format: csv or csv-pixel")
      ->capture_default_str();
  eval_cmd->add_option("--thresholds", c.thresholds, "start:stop:step or comma list")
      ->capture_default_str();
  eval_cmd->add_option("--report", c.report_path, "Write a JSON report here");
  eval_cmd->add_option("--workers", c.workers, "Worker threads (0 = auto)");

  auto* tune_cmd = app.add_subcommand("tune", "Grid-search fusion parameters");
  detail::add_input_flags(tune_cmd, c.input, true);
  tune_cmd->add_option("--method", c.fusion.method, "Fusion method: " + method_list())
      ->capture_default_str();
  tune_cmd->add_option("--grid", c.grid_path, "Grid JSON (default: built-in grid)");
  tune_cmd->add_option("--gt", c.gt_path, "Ground-truth CSV")->required();
  tune_cmd->add_option("--gt-format", c.gt_format, "Ground-truth format: csv or csv-pixel")
      ->capture_default_str();
  tune_cmd->add_option("--thresholds", c.thresholds, "start:stop:step or comma list")
      ->capture_default_str();
  tune_cmd->add_option("--cap", c.cap, "Refuse grids larger than this")->capture_default_str();
  tune_cmd->add_option("--report", c.report_path, "Write a JSON report here");
  tune_cmd->add_option("--workers", c.workers, "Worker threads (0 = auto)");

  auto* bench_cmd = app.add_subcommand("bench", "Time all methods on a synthetic workload");
  bench_cmd->add_option("--boxes", c.bench.boxes_per_image, "Boxes per image per model")
      ->capture_default_str();
  bench_cmd->add_option("--classes", c.bench.classes)->capture_default_str();
  bench_cmd->add_option("--models", c.bench.models)->capture_default_str();
  bench_cmd->add_option("--images", c.bench.images)->capture_default_str();
  bench_cmd->add_option("--seed", c.bench.seed)->capture_default_str();
  bench_cmd->add_option("--repeats", c.repeats, "Best-of-N timing")->capture_default_str();
  bench_cmd->add_option("--dim", c.input.dim, "Box dimensionality 2 or 3")->capture_default_str();
  bench_cmd->add_option("--save-dir", c.save_dir, "Also write the workload as CSV files");

  std::vector<const char*> argv;
  argv.push_back("boxfusion");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*fuse_cmd) {
      const FusionParams params = detail::build_params(c.fusion);
      const auto weights = detail::parse_weights(c.weights, c.input.inputs.size());
      const FileFormat in_fmt = detail::require_format(c.input.format, "--format");
      const FileFormat out_fmt =
          c.out_format.empty() ? in_fmt
                               : detail::require_format(c.out_format, "--out-format");
      const auto dim = detail::resolve_dim(c.input.dim, c.input.inputs.front(), in_fmt);
      return dim == 3 ? detail::fuse_impl<3>(c, params, weights, in_fmt, out_fmt, out)
                      : detail::fuse_impl<2>(c, params, weights, in_fmt, out_fmt, out);
    }
    if (*eval_cmd) {
      const auto thresholds = detail::thresholds_or_usage(c.thresholds);
      const FileFormat pf = detail::require_format(c.input.format, "--format");
      const FileFormat gf = detail::require_format(c.gt_format, "--gt-format");
      if (gf == FileFormat::coco)
        throw UsageError("--gt-format: ground truth must be csv or csv-pixel");
      const auto dim = detail::resolve_dim(c.input.dim, c.input.inputs.front(), pf);
      return dim == 3 ? detail::eval_impl<3>(c, thresholds, pf, gf, out)
                      : detail::eval_impl<2>(c, thresholds, pf, gf, out);
    }
    if (*tune_cmd) {
      const Method method = detail::require_method(c.fusion.method);
      const auto thresholds = detail::thresholds_or_usage(c.thresholds);
      const FileFormat pf = detail::require_format(c.input.format, "--format");
      const FileFormat gf = detail::require_format(c.gt_format, "--gt-format");
      if (gf == FileFormat::coco)
        throw UsageError("--gt-format: ground truth must be csv or csv-pixel");
      const ParamGrid grid =
          c.grid_path.empty() ? default_grid(method) : load_grid(c.grid_path);
      const auto dim = detail::resolve_dim(c.input.dim, c.input.inputs.front(), pf);
      return dim == 3 ? detail::tune_impl<3>(c, method, grid, thresholds, pf, gf, out)
                      : detail::tune_impl<2>(c, method, grid, thresholds, pf, gf, out);
    }
    if (*bench_cmd) {
      if (c.input.dim == 3) return detail::bench_impl<3>(c, out);
      if (c.input.dim != 0 && c.input.dim != 2)
        throw UsageError("--dim must be 2 or 3");
      return detail::bench_impl<2>(c, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidParameter& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace boxfusion::cli

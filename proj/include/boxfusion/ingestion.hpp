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

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "boxfusion/detection.hpp"
#include "boxfusion/errors.hpp"
#include "boxfusion/fusion.hpp"
#include "boxfusion/geometry.hpp"

namespace boxfusion {

// On-disk layouts.
//   csv        image,label,score,x1,y1,x2,y2[,z1,z2]  normalized corners
//   csv-pixel  same columns, pixel corners (needs image dimensions)
//   coco       JSON array of {image_id, category_id, bbox:[x,y,w,h], score}
//              in pixels (2D only, needs image dimensions)
enum class FileFormat { csv, csv_pixel, coco };

inline std::optional<FileFormat> parse_format(std::string_view name) {
  if (name == "csv") return FileFormat::csv;
  if (name == "csv-pixel") return FileFormat::csv_pixel;
  if (name == "coco") return FileFormat::coco;
  return std::nullopt;
}

inline std::string_view format_name(FileFormat f) {
  switch (f) {
    case FileFormat::csv:
      return "csv";
    case FileFormat::csv_pixel:
      return "csv-pixel";
    case FileFormat::coco:
      return "coco";
  }
  return "unknown";
}

struct ImageSize {
  double width = 0.0;
  double height = 0.0;
  double depth = 1.0;
};

using ImageDimensions = std::map<std::string, ImageSize>;

template <std::size_t D>
using DetectionGroups = std::map<std::string, std::vector<DetectionRecord<D>>>;

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
    s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(pos)));
      break;
    }
    out.push_back(trim(line.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    return std::nullopt;
  return v;
}

// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 9; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading '" + path + "'");
  return ss.str();
}

inline bool is_blank(std::string_view s) { return trim(s).empty(); }

class CsvTable {
 public:
  CsvTable(std::string_view text, std::string source)
      : source_(std::move(source)) {
    std::size_t pos = 0;
    std::size_t line_no = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      if (nl == std::string_view::npos) nl = text.size();
      ++line_no;
      const std::string_view line = text.substr(pos, nl - pos);
      pos = nl + 1;
      if (is_blank(line)) continue;
      if (header_.empty()) {
        for (auto f : split_csv(line)) header_.emplace_back(f);
      } else {
        rows_.push_back({line_no, split_csv(line)});
      }
    }
  }

  bool empty() const { return header_.empty(); }
  const std::string& source() const { return source_; }
  const std::vector<std::string>& header() const { return header_; }

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
      if (header_[i] == name) return i;
    return std::nullopt;
  }

  std::size_t require(std::string_view name) const {
    if (auto c = column(name)) return *c;
    throw ParseError(source_, 1, "missing column '" + std::string(name) + "'");
  }

  struct Row {
    std::size_t line;
    std::vector<std::string_view> fields;
  };
  const std::vector<Row>& rows() const { return rows_; }

  std::string_view field(const Row& r, std::size_t col) const {
    if (r.fields.size() != header_.size())
      throw ParseError(source_, r.line,
                       "expected " + std::to_string(header_.size()) +
                           " fields, got " + std::to_string(r.fields.size()));
    return r.fields[col];
  }

  double number(const Row& r, std::size_t col) const {
    const auto f = field(r, col);
    auto v = parse_number<double>(f);
    if (!v || !std::isfinite(*v))
      throw ParseError(source_, r.line,
                       "bad number '" + std::string(f) + "' in column '" +
                           header_[col] + "'");
    return *v;
  }

  int integer(const Row& r, std::size_t col) const {
    const auto f = field(r, col);
    auto v = parse_number<int>(f);
    if (!v)
      throw ParseError(source_, r.line,
                       "bad integer '" + std::string(f) + "' in column '" +
                           header_[col] + "'");
    return *v;
  }

 private:
  std::string source_;
  std::vector<std::string> header_;
  // Fields view into the caller's text, which must outlive the table.
  std::vector<Row> rows_;
};

template <std::size_t D>
constexpr std::array<const char*, 2 * D> corner_columns() {
  if constexpr (D == 2) {
    return {"x1", "y1", "x2", "y2"};
  } else {
    return {"x1", "y1", "z1", "x2", "y2", "z2"};
  }
}

inline const ImageSize& lookup_size(const ImageDimensions* dims,
                                    const std::string& image) {
  if (dims) {
    auto it = dims->find(image);
    if (it != dims->end()) return it->second;
  }
  throw ConfigError("no image dimensions for image '" + image +
                    "' (pixel coordinates need a dimensions file)");
}

template <std::size_t D>
std::array<double, D> size_vector(const ImageSize& s) {
  if constexpr (D == 2) {
    return {s.width, s.height};
  } else {
    return {s.width, s.height, s.depth};
  }
}

template <std::size_t D>
void check_arity(const CsvTable& t) {
  const bool has_z = t.column("z1") || t.column("z2");
  if (D == 2 && has_z)
    throw ParseError(t.source(), 1, "file holds 3D boxes, expected 2D");
}

template <std::size_t D>
AxisBox<D> read_corners(const CsvTable& t, const CsvTable::Row& r,
                        const std::array<std::size_t, 2 * D>& cols) {
  AxisBox<D> b;
  for (std::size_t k = 0; k < D; ++k) {
    b.lo[k] = t.number(r, cols[k]);
    b.hi[k] = t.number(r, cols[D + k]);
  }
  return b;
}

// Pixel box -> normalized, clipped box.
template <std::size_t D>
AxisBox<D> normalize(const AxisBox<D>& px, const ImageSize& size) {
  const auto s = size_vector<D>(size);
  AxisBox<D> b;
  for (std::size_t k = 0; k < D; ++k) {
    b.lo[k] = px.lo[k] / s[k];
    b.hi[k] = px.hi[k] / s[k];
  }
  return clip(b);
}

template <std::size_t D>
AxisBox<D> denormalize(const AxisBox<D>& b, const ImageSize& size) {
  const auto s = size_vector<D>(size);
  AxisBox<D> px;
  for (std::size_t k = 0; k < D; ++k) {
    px.lo[k] = b.lo[k] * s[k];
    px.hi[k] = b.hi[k] * s[k];
  }
  return px;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("error writing '" + path + "'");
}

inline bool all_digits(const std::string& s) {
  return !s.empty() && s.size() < 19 &&
         std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isdigit(c); });
}

}  // namespace detail

// Sidecar CSV with header image,width,height[,depth].
inline ImageDimensions parse_dimensions(std::string_view text,
                                        const std::string& source) {
  const detail::CsvTable t(text, source);
  ImageDimensions dims;
  if (t.empty()) return dims;
  const auto ci = t.require("image");
  const auto cw = t.require("width");
  const auto ch = t.require("height");
  const auto cd = t.column("depth");
  for (const auto& r : t.rows()) {
    ImageSize s{t.number(r, cw), t.number(r, ch),
                cd ? t.number(r, *cd) : 1.0};
    if (!(s.width > 0 && s.height > 0 && s.depth > 0))
      throw ParseError(source, r.line, "image dimensions must be positive");
    dims[std::string(t.field(r, ci))] = s;
  }
  return dims;
}

inline ImageDimensions load_dimensions(const std::string& path) {
  const std::string text = detail::read_file(path);
  return parse_dimensions(text, path);
}

template <std::size_t D>
DetectionGroups<D> parse_detections_csv(std::string_view text,
                                        const std::string& source,
                                        bool pixel,
                                        const ImageDimensions* dims) {
  const detail::CsvTable t(text, source);
  DetectionGroups<D> out;
  if (t.empty()) return out;
  detail::check_arity<D>(t);
  const auto ci = t.require("image");
  const auto cl = t.require("label");
  const auto cs = t.require("score");
  std::array<std::size_t, 2 * D> cols{};
  const auto names = detail::corner_columns<D>();
  for (std::size_t k = 0; k < D; ++k) {
    cols[k] = t.require(names[k]);
    cols[D + k] = t.require(names[D + k]);
  }
  for (const auto& r : t.rows()) {
    DetectionRecord<D> rec;
    rec.image = std::string(t.field(r, ci));
    rec.label = t.integer(r, cl);
    rec.score = t.number(r, cs);
    if (rec.label < 0) throw ParseError(source, r.line, "negative label");
    if (!(rec.score >= 0.0 && rec.score <= 1.0))
      throw ParseError(source, r.line, "score outside [0,1]");
    const auto raw = detail::read_corners<D>(t, r, cols);
    rec.box = pixel ? detail::normalize(raw, detail::lookup_size(dims, rec.image))
                    : clip(raw);
    out[rec.image].push_back(std::move(rec));
  }
  return out;
}

inline DetectionGroups<2> parse_detections_coco(std::string_view text,
                                                const std::string& source,
                                                const ImageDimensions* dims) {
  DetectionGroups<2> out;
  if (detail::is_blank(text)) return out;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(source, 0, std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw ParseError(source, 0, "expected a JSON array");
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& j = doc[i];
    try {
      DetectionRecord<2> rec;
      const auto& id = j.at("image_id");
      rec.image = id.is_string() ? id.get<std::string>()
                                 : std::to_string(id.get<std::int64_t>());
      rec.label = j.at("category_id").get<int>();
      rec.score = j.at("score").get<double>();
      const auto bbox = j.at("bbox").get<std::vector<double>>();
      if (bbox.size() != 4) throw ParseError(source, i, "bbox needs 4 numbers");
      if (rec.label < 0) throw ParseError(source, i, "negative category_id");
      if (!(rec.score >= 0.0 && rec.score <= 1.0))
        throw ParseError(source, i, "score outside [0,1]");
      for (double v : bbox)
        if (!std::isfinite(v)) throw ParseError(source, i, "non-finite bbox");
      const Box2D px =
          make_box2d(bbox[0], bbox[1], bbox[0] + bbox[2], bbox[1] + bbox[3]);
      rec.box = detail::normalize(px, detail::lookup_size(dims, rec.image));
      out[rec.image].push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(source, i, std::string("malformed record: ") + e.what());
    }
  }
  return out;
}

// Reads one prediction file, grouped by image id. Pixel formats need
// `dims`; the first image without dimensions raises ConfigError.
template <std::size_t D>
DetectionGroups<D> load_detections(const std::string& path, FileFormat format,
                                   const ImageDimensions* dims = nullptr) {
  const std::string text = detail::read_file(path);
  switch (format) {
    case FileFormat::csv:
      return parse_detections_csv<D>(text, path, false, dims);
    case FileFormat::csv_pixel:
      return parse_detections_csv<D>(text, path, true, dims);
    case FileFormat::coco:
      if constexpr (D == 2) {
        return parse_detections_coco(text, path, dims);
      } else {
        throw ConfigError("coco format holds 2D boxes only");
      }
  }
  throw ConfigError("unknown file format");
}

// Ground truth uses the detection CSV layout with the score column omitted
// (a score column, if present, is ignored).
template <std::size_t D>
std::vector<GroundTruthBox<D>> parse_ground_truth_csv(
    std::string_view text, const std::string& source, bool pixel,
    const ImageDimensions* dims) {
  const detail::CsvTable t(text, source);
  std::vector<GroundTruthBox<D>> out;
  if (t.empty()) return out;
  detail::check_arity<D>(t);
  const auto ci = t.require("image");
  const auto cl = t.require("label");
  std::array<std::size_t, 2 * D> cols{};
  const auto names = detail::corner_columns<D>();
  for (std::size_t k = 0; k < D; ++k) {
    cols[k] = t.require(names[k]);
    cols[D + k] = t.require(names[D + k]);
  }
  for (const auto& r : t.rows()) {
    GroundTruthBox<D> g;
    g.image = std::string(t.field(r, ci));
    g.label = t.integer(r, cl);
    if (g.label < 0) throw ParseError(source, r.line, "negative label");
    const auto raw = detail::read_corners<D>(t, r, cols);
    g.box = pixel ? detail::normalize(raw, detail::lookup_size(dims, g.image))
                  : clip(raw);
    out.push_back(std::move(g));
  }
  return out;
}

template <std::size_t D>
std::vector<GroundTruthBox<D>> load_ground_truth(
    const std::string& path, FileFormat format = FileFormat::csv,
    const ImageDimensions* dims = nullptr) {
  if (format == FileFormat::coco)
    throw ConfigError("ground truth must be csv or csv-pixel");
  const std::string text = detail::read_file(path);
  return parse_ground_truth_csv<D>(text, path,
                                   format == FileFormat::csv_pixel, dims);
}

template <std::size_t D>
std::vector<DetectionRecord<D>> flatten(const DetectionGroups<D>& groups) {
  std::vector<DetectionRecord<D>> out;
  for (const auto& [image, recs] : groups)
    out.insert(out.end(), recs.begin(), recs.end());
  return out;
}

// Serializes detections ordered by image id, then score descending.
template <std::size_t D>
std::string format_detections(std::span<const DetectionRecord<D>> records,
                              FileFormat format,
                              const ImageDimensions* dims = nullptr) {
  std::vector<const DetectionRecord<D>*> sorted;
  for (const auto& r : records) sorted.push_back(&r);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const DetectionRecord<D>* a, const DetectionRecord<D>* b) {
                     if (a->image != b->image) return a->image < b->image;
                     return a->score > b->score;
                   });
  std::ostringstream out;
  if (format == FileFormat::coco) {
    if constexpr (D != 2) {
      throw ConfigError("coco format holds 2D boxes only");
    } else {
      nlohmann::ordered_json doc = nlohmann::ordered_json::array();
      for (const auto* r : sorted) {
        const auto px = detail::denormalize(r->box, detail::lookup_size(dims, r->image));
        nlohmann::ordered_json j;
        if (detail::all_digits(r->image))
          j["image_id"] = std::stoll(r->image);
        else
          j["image_id"] = r->image;
        j["category_id"] = r->label;
        j["bbox"] = {px.lo[0], px.lo[1], px.hi[0] - px.lo[0],
                     px.hi[1] - px.lo[1]};
        j["score"] = r->score;
        doc.push_back(std::move(j));
      }
      out << doc.dump(1) << '\n';
    }
    return out.str();
  }
  out << "image,label,score,x1,y1,x2,y2" << (D == 3 ? ",z1,z2" : "") << '\n';
  for (const auto* r : sorted) {
    AxisBox<D> b = r->box;
    if (format == FileFormat::csv_pixel)
      b = detail::denormalize(b, detail::lookup_size(dims, r->image));
    out << r->image << ',' << r->label << ',' << detail::format_double(r->score);
    // Columns go x1,y1,x2,y2 then z1,z2.
    out << ',' << detail::format_double(b.lo[0]) << ','
        << detail::format_double(b.lo[1]) << ','
        << detail::format_double(b.hi[0]) << ','
        << detail::format_double(b.hi[1]);
    if constexpr (D == 3)
      out << ',' << detail::format_double(b.lo[2]) << ','
          << detail::format_double(b.hi[2]);
    out << '\n';
  }
  return out.str();
}

template <std::size_t D>
void save_detections(std::span<const DetectionRecord<D>> records,
                     const std::string& path, FileFormat format,
                     const ImageDimensions* dims = nullptr) {
  detail::write_text(path, format_detections(records, format, dims));
}

template <std::size_t D>
void save_detections(const std::vector<DetectionRecord<D>>& records,
                     const std::string& path, FileFormat format,
                     const ImageDimensions* dims = nullptr) {
  save_detections(std::span<const DetectionRecord<D>>(records), path, format,
                  dims);
}

// Ground truth in normalized CSV (no score column).
template <std::size_t D>
void save_ground_truth(std::span<const GroundTruthBox<D>> gts,
                       const std::string& path) {
  std::ostringstream out;
  out << "image,label,x1,y1,x2,y2" << (D == 3 ? ",z1,z2" : "") << '\n';
  for (const auto& g : gts) {
    out << g.image << ',' << g.label << ',' << detail::format_double(g.box.lo[0])
        << ',' << detail::format_double(g.box.lo[1]) << ','
        << detail::format_double(g.box.hi[0]) << ','
        << detail::format_double(g.box.hi[1]);
    if constexpr (D == 3)
      out << ',' << detail::format_double(g.box.lo[2]) << ','
          << detail::format_double(g.box.hi[2]);
    out << '\n';
  }
  detail::write_text(path, out.str());
}

// Box dimensionality of a file: 3 when a CSV header carries z columns,
// otherwise 2. Empty files report 2.
inline std::size_t detect_dimension(const std::string& path,
                                    FileFormat format) {
  if (format == FileFormat::coco) return 2;
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string line;
  while (std::getline(in, line)) {
    if (detail::is_blank(line)) continue;
    for (auto f : detail::split_csv(line))
      if (f == "z1" || f == "z2") return 3;
    return 2;
  }
  return 2;
}

// Merges per-model prediction files into one PredictionSet per image. A
// model with no boxes for an image contributes an empty list, and its
// weight still counts toward the ensemble total.
template <std::size_t D>
std::map<std::string, PredictionSet<D>> assemble(
    std::span<const DetectionGroups<D>> per_model,
    std::span<const double> weights) {
  if (weights.size() != per_model.size())
    throw ConfigError("got " + std::to_string(weights.size()) +
                      " weights for " + std::to_string(per_model.size()) +
                      " prediction files");
  std::map<std::string, PredictionSet<D>> out;
  auto blank = [&] {
    PredictionSet<D> s;
    s.per_model.resize(per_model.size());
    s.model_weights.assign(weights.begin(), weights.end());
    return s;
  };
  for (std::size_t m = 0; m < per_model.size(); ++m) {
    for (const auto& [image, recs] : per_model[m]) {
      auto it = out.find(image);
      if (it == out.end()) it = out.emplace(image, blank()).first;
      auto& list = it->second.per_model[m];
      for (const auto& r : recs) list.push_back(to_scored(r, m));
    }
  }
  return out;
}

template <std::size_t D>
std::map<std::string, PredictionSet<D>> assemble(
    const std::vector<DetectionGroups<D>>& per_model,
    const std::vector<double>& weights) {
  return assemble(std::span<const DetectionGroups<D>>(per_model),
                  std::span<const double>(weights));
}

}  // namespace boxfusion

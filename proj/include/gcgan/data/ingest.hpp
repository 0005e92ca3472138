#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcgan/data/dataset.hpp"
#include "gcgan/data/image_io.hpp"

namespace gcgan::data {

struct IngestError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr int kCsvFields = 3 + kLandmarkDims;

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  for (auto& f : out) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
    while (!f.empty() && f.front() == ' ') f.erase(f.begin());
  }
  return out;
}

inline double parse_number(const std::string& s, int line, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IngestError("line " + std::to_string(line) + ": invalid " + what + " '" + s + "'");
  }
}

}  // namespace detail

/// Reads a landmark CSV (`file,identity,emotion,x1,y1,...,x68,y68`, pixel units) and the referenced
/// pre-aligned images. Images are resized to 64x64; pixels and coordinates are mapped to [-1,1]
/// relative to the source image extent.
inline Dataset ingest_external(const std::filesystem::path& image_dir, const std::filesystem::path& landmark_csv) {
  std::ifstream in(landmark_csv);
  if (!in) throw IngestError("cannot open landmark file: " + landmark_csv.string());
  Dataset out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line.rfind("file,", 0) != 0) throw IngestError("line 1: expected header starting with 'file,'");
      continue;
    }
    if (line.find_first_not_of(" \r\t") == std::string::npos) continue;
    const auto fields = detail::split_csv_line(line);
    if (static_cast<int>(fields.size()) != kCsvFields) {
      throw IngestError("line " + std::to_string(line_no) + ": expected " + std::to_string(kCsvFields) +
                        " fields, got " + std::to_string(fields.size()));
    }
    const auto path = image_dir / fields[0];
    if (!std::filesystem::exists(path)) throw IngestError("line " + std::to_string(line_no) + ": missing file " + path.string());
    FaceSample s;
    s.identity = static_cast<int>(detail::parse_number(fields[1], line_no, "identity"));
    s.emotion = static_cast<int>(detail::parse_number(fields[2], line_no, "emotion"));
    if (s.emotion < 0 || s.emotion >= kNumEmotions)
      throw IngestError("line " + std::to_string(line_no) + ": emotion label out of range");
    RgbImage raw;
    try {
      raw = read_png(path);
    } catch (const ImageIoError& e) {
      throw IngestError("line " + std::to_string(line_no) + ": " + e.what());
    }
    for (int i = 0; i < kLandmarkDims; ++i) {
      const double v = detail::parse_number(fields[3 + i], line_no, "coordinate");
      const double extent = (i % 2 == 0) ? raw.width : raw.height;
      if (!(v >= 0 && v <= extent))
        throw IngestError("line " + std::to_string(line_no) + ": coordinate " + std::to_string(i + 1) +
                          " outside image bounds");
      s.landmarks[i] = normalize_coordinate(v, extent);
    }
    s.image = from_rgb(resize_bilinear(raw, kImageSize, kImageSize));
    out.push_back(std::move(s));
  }
  return out;
}

struct DatasetManifest {
  int n_identities = 0;
  double jitter = 0;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  std::vector<int> train_ids, test_ids;

  nlohmann::json to_json() const {
    return {{"n_identities", n_identities}, {"jitter", jitter},       {"seed", seed},
            {"split_seed", split_seed},     {"train_ids", train_ids}, {"test_ids", test_ids}};
  }
  static DatasetManifest from_json(const nlohmann::json& j) {
    DatasetManifest m;
    m.n_identities = j.at("n_identities").get<int>();
    m.jitter = j.at("jitter").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.split_seed = j.at("split_seed").get<std::uint64_t>();
    m.train_ids = j.at("train_ids").get<std::vector<int>>();
    m.test_ids = j.at("test_ids").get<std::vector<int>>();
    return m;
  }
  bool operator==(const DatasetManifest&) const = default;
};

}  // namespace gcgan::data

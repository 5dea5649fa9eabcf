#pragma once

// Run artifacts: binary row-major float64 dumps with a JSON sidecar, CSV
// mirrors for small fields, and JSON documents. Every file carries the
// schema version; nothing time- or host-dependent is written, so equal
// inputs give byte-identical outputs.

#include <bit>
#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

namespace mfgsig::io {

inline constexpr const char* kSchemaVersion = "1";
inline constexpr std::size_t kCsvMirrorLimit = 1u << 18;  // values

static_assert(std::endian::native == std::endian::little, "dumps are written little-endian");

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  if (res.ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf, res.ptr);
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline void write_json(const std::filesystem::path& path, nlohmann::json doc) {
  if (doc.is_object() && !doc.contains("schema_version")) doc["schema_version"] = kSchemaVersion;
  write_text(path, doc.dump(2) + "\n");
}

// CSV with a leading "# schema_version=" comment line.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : path_(path) {
    text_ = std::string("# schema_version=") + kSchemaVersion + "\n";
    for (std::size_t n = 0; n < header.size(); ++n) text_ += (n ? "," : "") + header[n];
    text_ += "\n";
  }
  void row(const std::vector<double>& values) {
    for (std::size_t n = 0; n < values.size(); ++n) {
      if (n) text_ += ",";
      text_ += format_double(values[n]);
    }
    text_ += "\n";
  }
  void close() { write_text(path_, text_); }

 private:
  std::filesystem::path path_;
  std::string text_;
};

struct Axis {
  std::string name;
  std::vector<double> coordinates;  // one per index
};

// Writes <name>.bin (row-major float64) and <name>.json; a <name>.csv mirror
// with one row per entry follows when the field is small enough.
inline void write_field(const std::filesystem::path& dir, const std::string& name,
                        const std::vector<double>& data, const std::vector<Axis>& axes,
                        std::size_t csv_limit = kCsvMirrorLimit) {
  std::size_t total = 1;
  for (const auto& a : axes) total *= a.coordinates.size();
  if (total != data.size()) throw std::invalid_argument("write_field: shape does not match data");
  std::ofstream bin(dir / (name + ".bin"), std::ios::binary | std::ios::trunc);
  if (!bin) throw std::runtime_error("cannot open '" + (dir / (name + ".bin")).string() + "'");
  bin.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!bin) throw std::runtime_error("write failed for '" + name + ".bin'");

  nlohmann::json header;
  header["schema_version"] = kSchemaVersion;
  header["file"] = name + ".bin";
  header["dtype"] = "float64";
  header["dtype_width"] = sizeof(double);
  header["byte_order"] = "little";
  header["order"] = "row-major";
  header["shape"] = nlohmann::json::array();
  header["axes"] = nlohmann::json::array();
  header["coordinates"] = nlohmann::json::object();
  for (const auto& a : axes) {
    header["shape"].push_back(a.coordinates.size());
    header["axes"].push_back(a.name);
    header["coordinates"][a.name] = a.coordinates;
  }
  const bool mirrored = total <= csv_limit;
  header["csv_mirror"] = mirrored ? nlohmann::json(name + ".csv") : nlohmann::json(nullptr);
  write_json(dir / (name + ".json"), header);
  if (!mirrored) return;

  std::vector<std::string> cols;
  for (const auto& a : axes) cols.push_back(a.name);
  cols.push_back("value");
  CsvWriter csv(dir / (name + ".csv"), cols);
  std::vector<std::size_t> idx(axes.size(), 0);
  std::vector<double> row(axes.size() + 1);
  for (std::size_t n = 0; n < total; ++n) {
    for (std::size_t d = 0; d < axes.size(); ++d) row[d] = axes[d].coordinates[idx[d]];
    row.back() = data[n];
    csv.row(row);
    for (std::size_t d = axes.size(); d-- > 0;) {
      if (++idx[d] < axes[d].coordinates.size()) break;
      idx[d] = 0;
    }
  }
  csv.close();
}

}  // namespace mfgsig::io

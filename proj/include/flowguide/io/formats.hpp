#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "flowguide/core/tensor.hpp"
#include "flowguide/motion/flow.hpp"

namespace flowguide::io {

namespace fs = std::filesystem;

/// Middlebury .flo: float 202021.25, int32 width, int32 height, then
/// row-major interleaved (dx, dy) float32, all little-endian.
void write_flo(const fs::path& path, const FlowField<float>& flow);
FlowField<float> read_flo(const fs::path& path);

/// Binary PGM (P5, maxval 255) for C = 1 frames, PPM (P6) for C = 3.
/// Values in [0, 1] are rounded to 8 bits.
void write_frame(const fs::path& path, const Tensor<float>& frame);
Tensor<float> read_frame(const fs::path& path);

/// Masks as P5 with 0 / 255.
void write_mask(const fs::path& path, const OcclusionMask<float>& mask);
OcclusionMask<float> read_mask(const fs::path& path);

/// Plain-text manifest of `key=value` lines in key order.
void write_manifest(const fs::path& path, const std::map<std::string, std::string>& entries);
std::map<std::string, std::string> read_manifest(const fs::path& path);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

/// Creates `dir` (and parents); throws IoError naming the path on failure.
void ensure_directory(const fs::path& dir);

/// Zero-padded frame file name, e.g. frame_name("hr", 3, ".pgm") -> "hr_0003.pgm".
std::string indexed_name(const std::string& prefix, std::size_t index, const std::string& ext);

/// CSV writer with RFC 4180 quoting (fields containing , " CR or LF are quoted,
/// embedded quotes doubled). Rows end with CRLF-free '\n'.
class CsvWriter {
 public:
  CsvWriter(const fs::path& path, const std::vector<std::string>& header, bool append = false);
  void row(const std::vector<std::string>& fields);
  static std::string quote(const std::string& field);

 private:
  fs::path path_;
};

/// Reads a CSV written by CsvWriter back into rows of fields.
std::vector<std::vector<std::string>> read_csv(const fs::path& path);

/// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace flowguide::io

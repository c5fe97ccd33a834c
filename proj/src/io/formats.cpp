#include "flowguide/io/formats.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace flowguide::io {

namespace {

constexpr float kFloMagic = 202021.25f;

template <typename T>
void put_le(std::ostream& os, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  os.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <typename T>
T get_le(std::istream& is, const fs::path& path) {
  unsigned char bytes[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw IoError("truncated file: " + path.string());
  }
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::binary) {
  std::ofstream os(path, mode);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for reading: " + path.string());
  return is;
}

unsigned char to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned char>(std::lround(c * 255.0f));
}

std::string next_token(std::istream& is) {
  std::string tok;
  while (is) {
    const int ch = is.peek();
    if (ch == '#') {
      std::string skip;
      std::getline(is, skip);
    } else if (std::isspace(ch)) {
      is.get();
    } else {
      break;
    }
  }
  is >> tok;
  return tok;
}

struct Netpbm {
  int channels;
  Index width, height;
  std::vector<unsigned char> bytes;
};

void write_netpbm(const fs::path& path, int channels, Index height, Index width,
                  const std::vector<unsigned char>& bytes) {
  auto os = open_out(path);
  os << (channels == 1 ? "P5" : "P6") << '\n' << width << ' ' << height << "\n255\n";
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

Netpbm read_netpbm(const fs::path& path) {
  auto is = open_in(path);
  const std::string magic = next_token(is);
  Netpbm img{};
  if (magic == "P5") {
    img.channels = 1;
  } else if (magic == "P6") {
    img.channels = 3;
  } else {
    throw IoError("not a binary PGM/PPM: " + path.string());
  }
  img.width = std::stol(next_token(is));
  img.height = std::stol(next_token(is));
  const int maxval = std::stoi(next_token(is));
  if (maxval != 255 || img.width <= 0 || img.height <= 0) {
    throw IoError("unsupported netpbm header: " + path.string());
  }
  is.get();  // single whitespace after maxval
  img.bytes.resize(static_cast<std::size_t>(img.width * img.height * img.channels));
  if (!is.read(reinterpret_cast<char*>(img.bytes.data()), static_cast<std::streamsize>(img.bytes.size()))) {
    throw IoError("truncated netpbm data: " + path.string());
  }
  return img;
}

}  // namespace

void write_flo(const fs::path& path, const FlowField<float>& flow) {
  auto os = open_out(path);
  put_le(os, kFloMagic);
  put_le(os, static_cast<std::int32_t>(flow.width()));
  put_le(os, static_cast<std::int32_t>(flow.height()));
  for (Index y = 0; y < flow.height(); ++y) {
    for (Index x = 0; x < flow.width(); ++x) {
      put_le(os, flow.dx(y, x));
      put_le(os, flow.dy(y, x));
    }
  }
  if (!os) throw IoError("write failed: " + path.string());
}

FlowField<float> read_flo(const fs::path& path) {
  auto is = open_in(path);
  if (get_le<float>(is, path) != kFloMagic) throw IoError("bad .flo magic: " + path.string());
  const auto width = get_le<std::int32_t>(is, path);
  const auto height = get_le<std::int32_t>(is, path);
  if (width <= 0 || height <= 0) throw IoError("bad .flo dimensions: " + path.string());
  FlowField<float> flow(height, width);
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      flow.dx(y, x) = get_le<float>(is, path);
      flow.dy(y, x) = get_le<float>(is, path);
    }
  }
  return flow;
}

void write_frame(const fs::path& path, const Tensor<float>& frame) {
  require_rank(frame.rank(), 3, "write_frame");
  const Index c = frame.dim(0), h = frame.dim(1), w = frame.dim(2);
  if (c != 1 && c != 3) throw ShapeError("write_frame: expected 1 or 3 channels");
  std::vector<unsigned char> bytes(static_cast<std::size_t>(c * h * w));
  std::size_t k = 0;
  for (Index y = 0; y < h; ++y) {
    for (Index x = 0; x < w; ++x) {
      for (Index ch = 0; ch < c; ++ch) bytes[k++] = to_byte(frame(ch, y, x));
    }
  }
  write_netpbm(path, static_cast<int>(c), h, w, bytes);
}

Tensor<float> read_frame(const fs::path& path) {
  const Netpbm img = read_netpbm(path);
  Tensor<float> frame({img.channels, img.height, img.width});
  std::size_t k = 0;
  for (Index y = 0; y < img.height; ++y) {
    for (Index x = 0; x < img.width; ++x) {
      for (Index ch = 0; ch < img.channels; ++ch) frame(ch, y, x) = img.bytes[k++] / 255.0f;
    }
  }
  return frame;
}

void write_mask(const fs::path& path, const OcclusionMask<float>& mask) {
  std::vector<unsigned char> bytes(static_cast<std::size_t>(mask.height() * mask.width()));
  std::size_t k = 0;
  for (Index y = 0; y < mask.height(); ++y) {
    for (Index x = 0; x < mask.width(); ++x) bytes[k++] = mask(y, x) > 0.5f ? 255 : 0;
  }
  write_netpbm(path, 1, mask.height(), mask.width(), bytes);
}

OcclusionMask<float> read_mask(const fs::path& path) {
  const Netpbm img = read_netpbm(path);
  if (img.channels != 1) throw IoError("mask must be PGM: " + path.string());
  Tensor<float> m({1, img.height, img.width});
  for (Index i = 0; i < m.size(); ++i) m[i] = img.bytes[static_cast<std::size_t>(i)] >= 128 ? 1.0f : 0.0f;
  return OcclusionMask<float>(std::move(m));
}

void write_manifest(const fs::path& path, const std::map<std::string, std::string>& entries) {
  std::ostringstream os;
  for (const auto& [k, v] : entries) os << k << '=' << v << '\n';
  write_text(path, os.str());
}

std::map<std::string, std::string> read_manifest(const fs::path& path) {
  std::istringstream is(read_text(path));
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    out[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return out;
}

std::string read_text(const fs::path& path) {
  auto is = open_in(path);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  auto os = open_out(path);
  os << text;
  if (!os) throw IoError("write failed: " + path.string());
}

void ensure_directory(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw IoError("cannot create directory " + dir.string() + (ec ? ": " + ec.message() : ""));
  }
}

std::string indexed_name(const std::string& prefix, std::size_t index, const std::string& ext) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04zu", index);
  return prefix + "_" + buf + ext;
}

CsvWriter::CsvWriter(const fs::path& path, const std::vector<std::string>& header, bool append)
    : path_(path) {
  const bool existing = append && fs::exists(path);
  auto os = open_out(path, existing ? std::ios::app : std::ios::trunc);
  if (!existing && !header.empty()) {
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << quote(header[i]);
    os << '\n';
  }
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  auto os = open_out(path_, std::ios::app);
  for (std::size_t i = 0; i < fields.size(); ++i) os << (i ? "," : "") << quote(fields[i]);
  os << '\n';
  if (!os) throw IoError("write failed: " + path_.string());
}

std::string CsvWriter::quote(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char ch : field) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + '"';
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
  const std::string text = read_text(path);
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      row.push_back(std::move(field));
      field.clear();
    } else if (ch == '\n') {
      row.push_back(std::move(field));
      field.clear();
      rows.push_back(std::move(row));
      row.clear();
    } else if (ch != '\r') {
      field += ch;
    }
  }
  if (!field.empty() || !row.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace flowguide::io

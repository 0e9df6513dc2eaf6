#pragma once

// Snippet feature sequences and the "TAGF" binary matrix format:
//   "TAGF" | u32 version=1 | u32 rows | u32 cols | rows*cols f32, row-major, LE.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "tags/binary_io.hpp"
#include "tags/errors.hpp"
#include "tags/matrix.hpp"

namespace tags {

inline constexpr std::string_view kFeatureMagic = "TAGF";
inline constexpr std::uint32_t kFeatureVersion = 1;

struct FeatureSequence {
  std::string video_id;
  Matrix values;  // T x dim, snippet-major
  double duration_s = 0.0;

  std::size_t length() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }

  /// Time interval [begin, end) covered by snippet i.
  std::pair<double, double> snippet_interval(std::size_t i) const {
    const double step = duration_s / static_cast<double>(length());
    return {static_cast<double>(i) * step, static_cast<double>(i + 1) * step};
  }

  void validate() const {
    if (values.rows() < 1 || values.cols() < 1)
      throw ValidationError("feature sequence '" + video_id + "' is empty (" + shape_string(values) + ")");
    if (!values.all_finite()) throw FormatError(FormatErrorKind::kNonFinite, "features of '" + video_id + "'");
    if (!(duration_s > 0.0) || !std::isfinite(duration_s))
      throw ValidationError("feature sequence '" + video_id + "' has non-positive duration");
  }
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& data) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

inline std::string encode_matrix(const Matrix& m) {
  binary::Writer w;
  w.bytes(kFeatureMagic);
  w.u32(kFeatureVersion);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (double v : m.flat()) w.f32(static_cast<float>(v));
  return w.buffer();
}

inline Matrix decode_matrix(std::string_view data, const std::string& context) {
  binary::Reader r(data, context);
  if (data.size() < 4 || r.bytes(4) != kFeatureMagic)
    throw FormatError(FormatErrorKind::kBadMagic, context + ": expected \"TAGF\"");
  const std::uint32_t version = r.u32();
  if (version != kFeatureVersion)
    throw FormatError(FormatErrorKind::kVersionMismatch,
                      context + ": version " + std::to_string(version) + ", expected " + std::to_string(kFeatureVersion));
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  const std::uint64_t count = static_cast<std::uint64_t>(rows) * cols;
  if (r.remaining() < count * 4)
    throw FormatError(FormatErrorKind::kTruncated, context + ": payload holds " + std::to_string(r.remaining()) +
                                                       " bytes, header declares " + std::to_string(count * 4));
  Matrix m(rows, cols);
  for (double& v : m.flat()) {
    v = static_cast<double>(r.f32());
    if (!std::isfinite(v)) throw FormatError(FormatErrorKind::kNonFinite, context);
  }
  return m;
}

inline void write_matrix(const Matrix& m, const std::filesystem::path& path) {
  write_file(path, encode_matrix(m));
}

inline Matrix read_matrix(const std::filesystem::path& path) {
  return decode_matrix(read_file(path), path.string());
}

/// Reads "<video_id>.tagf"; the duration is not stored in the file.
inline FeatureSequence read_features(const std::filesystem::path& path, double duration_s) {
  FeatureSequence seq{path.stem().string(), read_matrix(path), duration_s};
  seq.validate();
  return seq;
}

inline void write_features(const FeatureSequence& seq, const std::filesystem::path& path) {
  seq.validate();
  write_matrix(seq.values, path);
}

/// Rounds every entry to float precision so the in-memory copy matches
/// what a write/read cycle produces.
inline void round_to_float(Matrix& m) {
  for (double& v : m.flat()) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace tags

#pragma once

// "TAGC" checkpoint:
//   "TAGC" | u32 version | u32 tensor count |
//   per tensor: u16 name length, name, u8 rank, u32 dims[rank], f64 payload |
//   u32 config length | TrainConfig JSON
// All integers and floats little-endian.

#include <cstdint>
#include <filesystem>
#include <string>

#include "tags/binary_io.hpp"
#include "tags/config.hpp"
#include "tags/errors.hpp"
#include "tags/features.hpp"
#include "tags/params.hpp"

namespace tags {

inline constexpr std::string_view kCheckpointMagic = "TAGC";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ParamTable params;
  TrainConfig config;
};

inline std::string encode_checkpoint(const ParamTable& params, const TrainConfig& config) {
  binary::Writer w;
  w.bytes(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& t : params) {
    if (t.name.size() > 0xFFFF) throw std::invalid_argument("tensor name too long: " + t.name);
    w.u16(static_cast<std::uint16_t>(t.name.size()));
    w.bytes(t.name);
    w.u8(t.rank);
    if (t.rank == 1) {
      w.u32(static_cast<std::uint32_t>(t.value.cols()));
    } else {
      w.u32(static_cast<std::uint32_t>(t.value.rows()));
      w.u32(static_cast<std::uint32_t>(t.value.cols()));
    }
    for (double v : t.value.flat()) w.f64(v);
  }
  const std::string blob = to_json(config).dump();
  w.u32(static_cast<std::uint32_t>(blob.size()));
  w.bytes(blob);
  return w.buffer();
}

inline Checkpoint decode_checkpoint(std::string_view data, const std::string& context) {
  binary::Reader r(data, context);
  if (data.size() < 4 || r.bytes(4) != kCheckpointMagic)
    throw FormatError(FormatErrorKind::kBadMagic, context + ": expected \"TAGC\"");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw FormatError(FormatErrorKind::kVersionMismatch, context + ": checkpoint version " + std::to_string(version));
  Checkpoint ck;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t len = r.u16();
    std::string name(r.bytes(len));
    const std::uint8_t rank = r.u8();
    if (rank != 1 && rank != 2)
      throw FormatError(FormatErrorKind::kParse, context + ": tensor '" + name + "' has rank " + std::to_string(rank));
    std::size_t rows = 1, cols;
    if (rank == 1) {
      cols = r.u32();
    } else {
      rows = r.u32();
      cols = r.u32();
    }
    Matrix m(rows, cols);
    for (double& v : m.flat()) {
      v = r.f64();
      if (!std::isfinite(v)) throw FormatError(FormatErrorKind::kNonFinite, context + ": tensor '" + name + "'");
    }
    ck.params.add(std::move(name), rank, std::move(m));
  }
  const std::uint32_t blob_len = r.u32();
  const std::string blob(r.bytes(blob_len));
  try {
    from_json(json::parse(blob), ck.config);
  } catch (const json::exception& e) {
    throw FormatError(FormatErrorKind::kParse, context + ": config blob: " + e.what());
  }
  return ck;
}

inline void write_checkpoint(const ParamTable& params, const TrainConfig& config, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(params, config));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file(path), path.string());
}

}  // namespace tags

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tcmgc/representation.hpp"

namespace tcmgc {

enum class ArchiveKind : std::uint8_t { kText = 0, kVideo = 1 };

struct ArchiveItem {
  std::string id;
  std::uint32_t valid_len = 1;
  std::vector<float> sentence;  // d values, text archives only
  std::vector<float> sequence;  // max_len x d, row-major
};

/// Embedding collection as stored on disk. Values stay in single precision
/// so a save/load round trip is bit-exact.
struct EmbeddingArchive {
  ArchiveKind kind = ArchiveKind::kText;
  std::uint32_t d = 0;
  std::uint32_t max_len = 0;
  std::vector<ArchiveItem> items;

  /// Throws FormatError(kInconsistent) describing the first violation.
  void validate() const;

  std::vector<TextFeatures> texts() const;
  std::vector<VideoFeatures> videos() const;
};

inline constexpr char kArchiveMagic[4] = {'M', 'G', 'C', 'A'};
inline constexpr std::uint32_t kArchiveVersion = 1;

std::vector<std::uint8_t> encode_archive(const EmbeddingArchive& archive);
EmbeddingArchive decode_archive(std::span<const std::uint8_t> bytes);

void save_archive(const EmbeddingArchive& archive, const std::string& path);
EmbeddingArchive load_archive(const std::string& path);

/// Matches every text to its video: by position when the ids line up,
/// otherwise by id. Returns the video index for each text.
std::vector<std::size_t> pair_archives(const EmbeddingArchive& texts, const EmbeddingArchive& videos);

// Little-endian framing shared with checkpoints.
namespace wire {

class Writer {
 public:
  void bytes(const void* data, std::size_t n);
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void string(const std::string& s);
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}
  void bytes(void* out, std::size_t n, const char* what);
  std::uint8_t u8(const char* what);
  std::uint32_t u32(const char* what);
  std::uint64_t u64(const char* what);
  float f32(const char* what);
  double f64(const char* what);
  std::string string(const char* what);
  std::size_t remaining() const { return data_.size() - pos_; }
  std::size_t position() const { return pos_; }

 private:
  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace wire

}  // namespace tcmgc

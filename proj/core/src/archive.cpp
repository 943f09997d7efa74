// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include "tcmgc/error.hpp"

namespace tcmgc {

namespace wire {

void Writer::bytes(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  out_.insert(out_.end(), p, p + n);
}

void Writer::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
void Writer::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void Writer::string(const std::string& s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void Reader::bytes(void* out, std::size_t n, const char* what) {
  if (remaining() < n) {
    throw FormatError(FormatError::Kind::kTruncated, std::string("truncated while reading ") + what + " at byte " +
                                                         std::to_string(pos_));
  }
  std::memcpy(out, data_.data() + pos_, n);
  pos_ += n;
}

std::uint8_t Reader::u8(const char* what) {
  std::uint8_t v;
  bytes(&v, 1, what);
  return v;
}

std::uint32_t Reader::u32(const char* what) {
  std::uint8_t b[4];
  bytes(b, 4, what);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t Reader::u64(const char* what) {
  std::uint8_t b[8];
  bytes(b, 8, what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

float Reader::f32(const char* what) { return std::bit_cast<float>(u32(what)); }
double Reader::f64(const char* what) { return std::bit_cast<double>(u64(what)); }

std::string Reader::string(const char* what) {
  const std::uint32_t n = u32(what);
  std::string s(n, '\0');
  bytes(s.data(), n, what);
  return s;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::kIo, "cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw FormatError(FormatError::Kind::kIo, "error reading '" + path + "'");
  return bytes;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatError::Kind::kIo, "cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatError::Kind::kIo, "error writing '" + path + "'");
}

}  // namespace wire

namespace {

[[noreturn]] void inconsistent(const std::string& what) {
  throw FormatError(FormatError::Kind::kInconsistent, what);
}

std::vector<double> widen(const std::vector<float>& v) { return {v.begin(), v.end()}; }

}  // namespace

void EmbeddingArchive::validate() const {
  if (kind != ArchiveKind::kText && kind != ArchiveKind::kVideo) inconsistent("unknown archive kind");
  if (d == 0 || max_len == 0) inconsistent("archive dimensions must be positive");
  const std::size_t seq = static_cast<std::size_t>(max_len) * d;
  for (const auto& item : items) {
    if (item.valid_len < 1 || item.valid_len > max_len) {
      inconsistent("item '" + item.id + "' has valid_len " + std::to_string(item.valid_len) + " outside [1, " +
                   std::to_string(max_len) + "]");
    }
    const std::size_t want_sentence = kind == ArchiveKind::kText ? d : 0;
    if (item.sentence.size() != want_sentence || item.sequence.size() != seq) {
      inconsistent("item '" + item.id + "' has the wrong number of values");
    }
  }
}

std::vector<TextFeatures> EmbeddingArchive::texts() const {
  if (kind != ArchiveKind::kText) inconsistent("expected a text archive");
  std::vector<TextFeatures> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    out.push_back({item.id, Tensor::from({d}, widen(item.sentence)), Tensor::from({max_len, d}, widen(item.sequence)),
                   item.valid_len});
  }
  return out;
}

std::vector<VideoFeatures> EmbeddingArchive::videos() const {
  if (kind != ArchiveKind::kVideo) inconsistent("expected a video archive");
  std::vector<VideoFeatures> out;
  out.reserve(items.size());
  for (const auto& item : items) {
    out.push_back({item.id, Tensor::from({max_len, d}, widen(item.sequence)), item.valid_len});
  }
  return out;
}

std::vector<std::uint8_t> encode_archive(const EmbeddingArchive& archive) {
  archive.validate();
  wire::Writer w;
  w.bytes(kArchiveMagic, 4);
  w.u32(kArchiveVersion);
  w.u8(static_cast<std::uint8_t>(archive.kind));
  w.u32(archive.d);
  w.u32(archive.max_len);
  w.u32(static_cast<std::uint32_t>(archive.items.size()));
  for (const auto& item : archive.items) {
    w.string(item.id);
    w.u32(item.valid_len);
    for (float v : item.sentence) w.f32(v);
    for (float v : item.sequence) w.f32(v);
  }
  return w.take();
}

EmbeddingArchive decode_archive(std::span<const std::uint8_t> bytes) {
  wire::Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kArchiveMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kMagicMismatch, "not an embedding archive (bad magic)");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kArchiveVersion) {
    throw FormatError(FormatError::Kind::kVersionMismatch, "archive version " + std::to_string(version) +
                                                               ", expected " + std::to_string(kArchiveVersion));
  }
  EmbeddingArchive a;
  const std::uint8_t kind = r.u8("kind");
  if (kind > 1) inconsistent("unknown archive kind " + std::to_string(kind));
  a.kind = static_cast<ArchiveKind>(kind);
  a.d = r.u32("d");
  a.max_len = r.u32("max_len");
  const std::uint32_t count = r.u32("item count");
  if (a.d == 0 || a.max_len == 0) inconsistent("archive dimensions must be positive");
  const std::size_t seq = static_cast<std::size_t>(a.max_len) * a.d;
  const std::size_t sentence = a.kind == ArchiveKind::kText ? a.d : 0;
  for (std::uint32_t i = 0; i < count; ++i) {
    ArchiveItem item;
    item.id = r.string("item id");
    item.valid_len = r.u32("valid_len");
    if (item.valid_len < 1 || item.valid_len > a.max_len) {
      inconsistent("item '" + item.id + "' has valid_len " + std::to_string(item.valid_len) + " outside [1, " +
                   std::to_string(a.max_len) + "]");
    }
    if (r.remaining() < 4 * (sentence + seq)) {
      throw FormatError(FormatError::Kind::kTruncated, "truncated payload for item '" + item.id + "'");
    }
    item.sentence.resize(sentence);
    for (auto& v : item.sentence) v = r.f32("sentence");
    item.sequence.resize(seq);
    for (auto& v : item.sequence) v = r.f32("sequence");
    a.items.push_back(std::move(item));
  }
  if (r.remaining() != 0) inconsistent(std::to_string(r.remaining()) + " trailing bytes after the last item");
  return a;
}

void save_archive(const EmbeddingArchive& archive, const std::string& path) {
  wire::write_file(path, encode_archive(archive));
}

EmbeddingArchive load_archive(const std::string& path) { return decode_archive(wire::read_file(path)); }

std::vector<std::size_t> pair_archives(const EmbeddingArchive& texts, const EmbeddingArchive& videos) {
  if (texts.kind != ArchiveKind::kText || videos.kind != ArchiveKind::kVideo) {
    throw PairingError("expected a text archive and a video archive");
  }
  if (texts.d != videos.d) {
    throw DimensionError("text d = " + std::to_string(texts.d) + " but video d = " + std::to_string(videos.d));
  }
  if (texts.items.size() != videos.items.size()) {
    throw PairingError(std::to_string(texts.items.size()) + " texts cannot pair with " +
                       std::to_string(videos.items.size()) + " videos");
  }
  const std::size_t n = texts.items.size();
  std::vector<std::size_t> match(n);
  bool positional = true;
  for (std::size_t i = 0; i < n && positional; ++i) positional = texts.items[i].id == videos.items[i].id;
  if (positional) {
    for (std::size_t i = 0; i < n; ++i) match[i] = i;
    return match;
  }
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t j = 0; j < n; ++j) {
    if (!by_id.emplace(videos.items[j].id, j).second) {
      throw PairingError("duplicate video id '" + videos.items[j].id + "'");
    }
  }
  std::vector<bool> used(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const auto it = by_id.find(texts.items[i].id);
    if (it == by_id.end()) throw PairingError("text '" + texts.items[i].id + "' has no matching video");
    if (used[it->second]) throw PairingError("video '" + texts.items[i].id + "' matched twice");
    used[it->second] = true;
    match[i] = it->second;
  }
  return match;
}

}  // namespace tcmgc

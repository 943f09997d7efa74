// SPDX-License-Identifier: Apache-2.0
#include "tcmgc/checkpoint.hpp"

#include <cstring>

#include "tcmgc/archive.hpp"
#include "tcmgc/error.hpp"

namespace tcmgc {

const StoredTensor* Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint) {
  wire::Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u32(kCheckpointVersion);
  w.string(checkpoint.config_text);
  w.u64(checkpoint.step);
  w.u64(checkpoint.epoch);
  w.string(checkpoint.rng_state);
  w.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& t : checkpoint.tensors) {
    if (t.values.size() != shape_numel(t.shape)) {
      throw FormatError(FormatError::Kind::kInconsistent, "tensor '" + t.name + "' does not match its shape");
    }
    w.string(t.name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto e : t.shape) w.u32(static_cast<std::uint32_t>(e));
    for (double v : t.values) w.f64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  wire::Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::kMagicMismatch, "not a checkpoint (bad magic)");
  }
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::kVersionMismatch, "checkpoint version " + std::to_string(version) +
                                                               ", expected " + std::to_string(kCheckpointVersion));
  }
  Checkpoint c;
  c.config_text = r.string("config");
  c.step = r.u64("step");
  c.epoch = r.u64("epoch");
  c.rng_state = r.string("rng state");
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.string("tensor name");
    const std::uint32_t rank = r.u32("tensor rank");
    if (rank > 8) throw FormatError(FormatError::Kind::kInconsistent, "tensor '" + t.name + "' has rank " + std::to_string(rank));
    for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(r.u32("tensor extent"));
    const std::size_t n = shape_numel(t.shape);
    if (r.remaining() / 8 < n) {
      throw FormatError(FormatError::Kind::kTruncated, "truncated values for tensor '" + t.name + "'");
    }
    t.values.resize(n);
    for (auto& v : t.values) v = r.f64("tensor values");
    c.tensors.push_back(std::move(t));
  }
  if (r.remaining() != 0) {
    throw FormatError(FormatError::Kind::kInconsistent, std::to_string(r.remaining()) + " trailing bytes in checkpoint");
  }
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  wire::write_file(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path) { return decode_checkpoint(wire::read_file(path)); }

}  // namespace tcmgc

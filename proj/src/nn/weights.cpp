#include "dyslab/nn/weights.hpp"

#include "../binary.hpp"
#include "dyslab/audio_io.hpp"
#include "dyslab/error.hpp"

namespace dyslab::nn {

void WeightStore::add(std::string name, Tensor value) {
  if (index_.contains(name)) throw Error(ErrorCode::DuplicateName, name);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

Tensor& WeightStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::ShapeMismatch, "no weight named " + name);
  return entries_[it->second].second;
}

const Tensor& WeightStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error(ErrorCode::ShapeMismatch, "no weight named " + name);
  return entries_[it->second].second;
}

std::size_t WeightStore::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

WeightStore WeightStore::zeros_like() const {
  WeightStore z;
  for (const auto& [name, t] : entries_) z.add(name, Tensor(t.shape()));
  return z;
}

void WeightStore::set_zero() {
  for (auto& [_, t] : entries_) t.fill(0.0f);
}

void WeightStore::accumulate(const WeightStore& other) {
  if (other.entries_.size() != entries_.size()) throw Error(ErrorCode::ShapeMismatch, "weight store size mismatch");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& dst = entries_[i].second;
    const auto& src = other.entries_[i].second;
    require_same_shape(dst, src, entries_[i].first.c_str());
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
  }
}

void WeightStore::scale(real s) {
  for (auto& [_, t] : entries_)
    for (auto& v : t.values()) v *= s;
}

void WeightStore::assign_from(const WeightStore& other) {
  if (other.entries_.size() != entries_.size()) {
    throw Error(ErrorCode::ArchMismatch, "expected " + std::to_string(entries_.size()) + " weight tensors, got " +
                                             std::to_string(other.entries_.size()));
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& [name, src] = other.entries_[i];
    if (name != entries_[i].first || src.shape() != entries_[i].second.shape()) {
      throw Error(ErrorCode::ArchMismatch, "weight " + name + " " + shape_to_string(src.shape()) +
                                               " does not match " + entries_[i].first + " " +
                                               shape_to_string(entries_[i].second.shape()));
    }
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) entries_[i].second = other.entries_[i].second;
}

std::vector<std::uint8_t> encode_weights(const WeightStore& ws) {
  detail::ByteWriter w;
  w.bytes("DYSW");
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(ws.size()));
  for (const auto& [name, t] : ws.entries()) {
    if (name.size() > 0xFFFF) throw Error(ErrorCode::InvalidArgument, "weight name too long");
    if (t.rank() == 0 || t.rank() > 255) throw Error(ErrorCode::InvalidArgument, "weight rank must be 1..255");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (real v : t.values()) w.f32(v);
  }
  return w.take();
}

WeightStore decode_weights(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(bytes.begin(), bytes.begin() + 4, "DYSW")) {
    throw Error(ErrorCode::BadMagic, "not a DYSW weight file");
  }
  detail::ByteReader r(bytes.subspan(4));
  const std::uint32_t version = r.u32();
  const std::uint32_t count = r.u32();
  if (!r.ok()) throw Error(ErrorCode::ShapeOverflow, "truncated DYSW header");
  if (version != 1) throw Error(ErrorCode::BadMagic, "unsupported DYSW version " + std::to_string(version));

  WeightStore ws;
  for (std::uint32_t e = 0; e < count; ++e) {
    const std::uint16_t name_len = r.u16();
    auto name_bytes = r.take(name_len);
    const std::uint8_t rank = r.u8();
    if (!r.ok()) throw Error(ErrorCode::ShapeOverflow, "truncated entry header " + std::to_string(e));
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    if (!r.ok()) throw Error(ErrorCode::ShapeOverflow, "truncated dims in entry " + std::to_string(e));
    const std::size_t n = shape_size(shape);
    if (r.remaining() / 4 < n) {
      throw Error(ErrorCode::ShapeOverflow, "entry " + std::to_string(e) + " declares " + std::to_string(n) +
                                                " floats, only " + std::to_string(r.remaining()) +
                                                " bytes remain");
    }
    std::vector<real> data(n);
    for (auto& v : data) v = r.f32();
    ws.add(std::string(name_bytes.begin(), name_bytes.end()), Tensor(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 0) throw Error(ErrorCode::ShapeOverflow, "trailing bytes after last entry");
  return ws;
}

void save_weights(const WeightStore& ws, const std::filesystem::path& path) {
  write_file_bytes(path, encode_weights(ws));
}

WeightStore load_weights(const std::filesystem::path& path) {
  if (!std::filesystem::is_regular_file(path)) throw Error(ErrorCode::MissingFile, path.string());
  return decode_weights(read_file_bytes(path));
}

}  // namespace dyslab::nn

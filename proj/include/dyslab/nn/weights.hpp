#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dyslab/tensor.hpp"

namespace dyslab::nn {

/// Ordered name -> tensor map. Insertion order is the serialization order.
class WeightStore {
 public:
  using Entry = std::pair<std::string, Tensor>;

  /// Throws DuplicateName.
  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const { return index_.contains(name); }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t parameter_count() const noexcept;

  /// Same names and shapes, all zeros.
  WeightStore zeros_like() const;
  void set_zero();
  /// this += other, entry by entry.
  void accumulate(const WeightStore& other);
  void scale(real s);
  /// Copies values from `other`; names and shapes must match exactly.
  void assign_from(const WeightStore& other);

  friend bool operator==(const WeightStore& a, const WeightStore& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// DYSW: "DYSW" | u32 version=1 | u32 count | per entry:
//   u16 name length | UTF-8 name | u8 rank | rank x u32 dims | float32 payload (all LE)
std::vector<std::uint8_t> encode_weights(const WeightStore& ws);
WeightStore decode_weights(std::span<const std::uint8_t> bytes);
void save_weights(const WeightStore& ws, const std::filesystem::path& path);
WeightStore load_weights(const std::filesystem::path& path);

}  // namespace dyslab::nn

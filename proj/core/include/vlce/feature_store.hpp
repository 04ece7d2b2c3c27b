#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vlce {

// id -> fixed-dimension f32 vector, in file order.
//
// On disk (VLCF, little-endian):
//   "VLCF" | u8 version=1 | u32 dim | u32 count |
//   count x ( u16 id_len | id bytes (UTF-8) | dim x f32 )
class FeatureStore {
 public:
  static constexpr std::uint8_t kVersion = 1;

  explicit FeatureStore(std::uint32_t dim = 0) : dim_(dim) {}

  std::uint32_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return ids_.size(); }
  bool empty() const noexcept { return ids_.empty(); }

  // kData on a dim mismatch or a non-finite component, kConflict on a
  // duplicate id, kFormat if the id does not fit the u16 length prefix.
  void add(std::string id, std::span<const float> vector);

  bool contains(std::string_view id) const;
  // Empty optional when the id is unknown.
  std::optional<std::span<const float>> find(std::string_view id) const;
  std::span<const float> at(std::string_view id) const;

  const std::vector<std::string>& ids() const noexcept { return ids_; }
  std::span<const float> row(std::size_t i) const;

  std::string serialize() const;
  static FeatureStore deserialize(std::string_view bytes);

 private:
  std::uint32_t dim_;
  std::vector<std::string> ids_;
  std::vector<float> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

FeatureStore load_feature_store(const std::filesystem::path& path);
void save_feature_store(const FeatureStore& store, const std::filesystem::path& path);

}  // namespace vlce

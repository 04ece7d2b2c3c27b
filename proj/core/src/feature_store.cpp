#include "vlce/feature_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include "vlce/error.hpp"
#include "vlce/io.hpp"

namespace vlce {
namespace {

static_assert(std::endian::native == std::endian::little, "VLCF codec assumes a little-endian host");

constexpr char kMagic[4] = {'V', 'L', 'C', 'F'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  bool has(std::size_t n) const { return bytes_.size() - pos_ >= n; }

  template <typename T>
  T get() {
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string_view take(std::size_t n) {
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void FeatureStore::add(std::string id, std::span<const float> vector) {
  if (vector.size() != dim_) {
    fail(ErrorKind::kData, "feature '" + id + "' has " + std::to_string(vector.size()) + " components, store dim is " +
                               std::to_string(dim_));
  }
  if (id.size() > 0xFFFF) fail(ErrorKind::kFormat, "feature id longer than 65535 bytes");
  for (float v : vector) {
    if (!std::isfinite(v)) fail(ErrorKind::kData, "non-finite component in feature '" + id + "'");
  }
  if (index_.contains(id)) fail(ErrorKind::kConflict, "duplicate feature id '" + id + "'");
  index_.emplace(id, ids_.size());
  ids_.push_back(std::move(id));
  values_.insert(values_.end(), vector.begin(), vector.end());
}

bool FeatureStore::contains(std::string_view id) const { return index_.contains(std::string(id)); }

std::optional<std::span<const float>> FeatureStore::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return row(it->second);
}

std::span<const float> FeatureStore::at(std::string_view id) const {
  auto r = find(id);
  if (!r) fail(ErrorKind::kData, "no feature for id '" + std::string(id) + "'");
  return *r;
}

std::span<const float> FeatureStore::row(std::size_t i) const {
  return std::span<const float>(values_).subspan(i * dim_, dim_);
}

std::string FeatureStore::serialize() const {
  std::string out;
  out.reserve(13 + ids_.size() * (2 + 16 + 4 * static_cast<std::size_t>(dim_)));
  out.append(kMagic, 4);
  put<std::uint8_t>(out, kVersion);
  put<std::uint32_t>(out, dim_);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ids_.size()));
  for (std::size_t i = 0; i < ids_.size(); ++i) {
    put<std::uint16_t>(out, static_cast<std::uint16_t>(ids_[i].size()));
    out += ids_[i];
    auto r = row(i);
    out.append(reinterpret_cast<const char*>(r.data()), r.size_bytes());
  }
  return out;
}

FeatureStore FeatureStore::deserialize(std::string_view bytes) {
  Reader in(bytes);
  if (!in.has(13)) fail(ErrorKind::kFormat, "VLCF header truncated (" + std::to_string(bytes.size()) + " bytes)");
  if (in.take(4) != std::string_view(kMagic, 4)) fail(ErrorKind::kFormat, "bad VLCF magic");
  const auto version = in.get<std::uint8_t>();
  if (version != kVersion) fail(ErrorKind::kFormat, "unsupported VLCF version " + std::to_string(version));
  const auto dim = in.get<std::uint32_t>();
  const auto count = in.get<std::uint32_t>();
  if (dim == 0) fail(ErrorKind::kFormat, "VLCF dim must be positive");

  FeatureStore store(dim);
  std::vector<float> buffer(dim);
  for (std::uint32_t r = 0; r < count; ++r) {
    if (!in.has(2)) fail(ErrorKind::kCorruption, "record " + std::to_string(r) + " truncated at id length");
    const auto id_len = in.get<std::uint16_t>();
    if (!in.has(id_len)) fail(ErrorKind::kCorruption, "record " + std::to_string(r) + " truncated in id");
    std::string id(in.take(id_len));
    if (!in.has(std::size_t{4} * dim)) fail(ErrorKind::kCorruption, "record " + std::to_string(r) + " truncated in vector");
    std::memcpy(buffer.data(), in.take(std::size_t{4} * dim).data(), std::size_t{4} * dim);
    for (float v : buffer) {
      if (std::isnan(v)) fail(ErrorKind::kData, "NaN component in record '" + id + "'");
      if (!std::isfinite(v)) fail(ErrorKind::kData, "infinite component in record '" + id + "'");
    }
    store.add(std::move(id), buffer);
  }
  if (in.remaining() != 0) {
    fail(ErrorKind::kCorruption, std::to_string(in.remaining()) + " trailing bytes after " + std::to_string(count) + " records");
  }
  return store;
}

FeatureStore load_feature_store(const std::filesystem::path& path) {
  try {
    return FeatureStore::deserialize(io::read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

void save_feature_store(const FeatureStore& store, const std::filesystem::path& path) {
  io::write_file(path, store.serialize());
}

}  // namespace vlce

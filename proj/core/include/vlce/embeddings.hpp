#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vlce/corpus.hpp"
#include "vlce/feature_store.hpp"

namespace vlce {

// Pretrained word vectors keyed by term (Numberbatch text format).
class VectorTable {
 public:
  VectorTable() = default;
  VectorTable(std::size_t dim, std::string source_name) : dim_(dim), source_name_(std::move(source_name)) {}

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return keys_.size(); }
  const std::string& source_name() const noexcept { return source_name_; }

  // kConflict for a duplicate key, kData for a wrong length or non-finite value.
  void add(std::string key, std::span<const float> vector);
  std::optional<std::span<const float>> find(std::string_view key) const;
  const std::vector<std::string>& keys() const noexcept { return keys_; }

 private:
  std::size_t dim_ = 0;
  std::string source_name_;
  std::vector<std::string> keys_;
  std::vector<float> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Lines "key v1 ... vd"; a leading "/c/en/" is stripped from keys. An optional
// first line "count dim" is accepted. Ragged rows are kFormat errors carrying
// the line number.
VectorTable parse_vector_table(std::string_view text, std::string source_name = "table");
VectorTable load_vector_table(const std::filesystem::path& path);

enum class RowSource { kPad, kExact, kPrefix, kRandom };

struct RowProvenance {
  RowSource source = RowSource::kRandom;
  std::string key;  // matched table key for kExact / kPrefix
};

// |index space| x dim, f32 storage, row 0 is the all-zero pad row.
struct EmbeddingMatrix {
  std::size_t rows = 0;
  std::size_t dim = 0;
  std::vector<float> values;
  std::vector<RowProvenance> provenance;
  double epsilon = 0.05;
  std::uint64_t seed = 0;
  bool frozen = true;

  std::span<const float> row(std::size_t i) const { return std::span<const float>(values).subspan(i * dim, dim); }
};

inline constexpr std::size_t kMinPrefixLength = 3;
inline constexpr double kDefaultEpsilon = 0.05;

// Longest table key of at least kMinPrefixLength characters that is a prefix
// of `token` (the token itself excluded).
std::optional<std::string> longest_prefix_key(const VectorTable& table, std::string_view token);

// Per token: exact key, else longest-prefix key, else U(-eps, eps) drawn in
// index order. Boundary tokens are always random. kConfig if epsilon <= 0.
EmbeddingMatrix build_matrix(const Vocabulary& vocab, const VectorTable& table, double epsilon, std::uint64_t seed);

struct CoverageReport {
  std::size_t exact = 0;
  std::size_t prefix = 0;
  std::size_t random = 0;
};

CoverageReport coverage_report(const EmbeddingMatrix& matrix);

// kUndefinedSimilarity on a zero-norm input, kShape on a length mismatch.
// Accumulates in double; clamped to [-1, 1].
double cosine_similarity(std::span<const float> a, std::span<const float> b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

// A source of fixed-dimension word and text vectors.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dim() const = 0;
  virtual std::optional<std::vector<float>> embed_word(std::string_view word) const = 0;
  virtual std::optional<std::vector<float>> embed_text(const std::vector<std::string>& tokens) const = 0;
  // Providers backed by precomputed per-image text features key on the id.
  virtual std::optional<std::vector<float>> embed_caption(std::string_view image_id,
                                                          const std::vector<std::string>& tokens) const {
    (void)image_id;
    return embed_text(tokens);
  }
};

// Self-contained default: mean of the table vectors of the tokens it can
// resolve (exact, then longest prefix). Empty when nothing resolves.
class MeanWordVectorProvider final : public EmbeddingProvider {
 public:
  explicit MeanWordVectorProvider(const VectorTable& table) : table_(table) {}
  std::size_t dim() const override { return table_.dim(); }
  std::optional<std::vector<float>> embed_word(std::string_view word) const override;
  std::optional<std::vector<float>> embed_text(const std::vector<std::string>& tokens) const override;

 private:
  const VectorTable& table_;
};

// Precomputed vectors from a VLCF file: ids are words for embed_word and image
// ids for embed_caption (e.g. exported CLIP text features).
class FeatureStoreProvider final : public EmbeddingProvider {
 public:
  explicit FeatureStoreProvider(const FeatureStore& store) : store_(store) {}
  std::size_t dim() const override { return store_.dim(); }
  std::optional<std::vector<float>> embed_word(std::string_view word) const override;
  std::optional<std::vector<float>> embed_text(const std::vector<std::string>& tokens) const override;
  std::optional<std::vector<float>> embed_caption(std::string_view image_id,
                                                  const std::vector<std::string>& tokens) const override;

 private:
  const FeatureStore& store_;
};

// Contextual path: rows come from provider.embed_word; misses and boundary
// tokens get seeded random rows as in build_matrix.
EmbeddingMatrix build_matrix_from_provider(const Vocabulary& vocab, const EmbeddingProvider& provider, double epsilon,
                                           std::uint64_t seed);

// VLCF with one record per index (pad row id "<pad>") plus a JSON sidecar
// {seed, epsilon, frozen, histogram, provenance}.
void save_embedding_matrix(const EmbeddingMatrix& matrix, const Vocabulary& vocab, const std::filesystem::path& vlcf_path,
                           const std::filesystem::path& sidecar_path);
EmbeddingMatrix load_embedding_matrix(const Vocabulary& vocab, const std::filesystem::path& vlcf_path,
                                      const std::filesystem::path& sidecar_path);

}  // namespace vlce

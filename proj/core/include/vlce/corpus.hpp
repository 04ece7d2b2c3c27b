#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vlce/feature_store.hpp"

namespace vlce {

inline constexpr std::string_view kStartToken = "startseq";
inline constexpr std::string_view kEndToken = "endseq";
inline constexpr std::size_t kDefaultMaxSeqLen = 192;

struct CaptionRecord {
  std::string image_id;
  std::string raw_caption;
  std::vector<std::string> clean_tokens;
  std::vector<std::string> detector_labels;  // metadata only
  bool missing_feature = false;
  bool empty_caption = false;

  // Flagged records are reported but kept out of training and evaluation.
  bool flagged() const noexcept { return missing_feature || empty_caption; }
};

// Lowercases, splits on every non-alphabetic byte and keeps tokens of two or
// more letters, in order.
std::vector<std::string> preprocess_caption(std::string_view raw);

// "images/img_01.jpg" -> "img_01"
std::string image_id_from_filename(std::string_view filename);

struct CaptionCsvOptions {
  std::string id_column = "image";
  std::string caption_column = "caption";
  std::string objects_column = "objects";
  std::size_t max_seq_len = kDefaultMaxSeqLen;
};

// Content tokens are capped at max_seq_len - 2 so the boundary-wrapped
// sequence never exceeds max_seq_len. If `features` is given, rows whose id
// has no entry are flagged (never dropped).
std::vector<CaptionRecord> parse_caption_csv(std::string_view text, const CaptionCsvOptions& options,
                                             const FeatureStore* features = nullptr);
std::vector<CaptionRecord> load_caption_csv(const std::filesystem::path& path, const CaptionCsvOptions& options,
                                            const FeatureStore* features = nullptr);

class Vocabulary {
 public:
  static constexpr std::int32_t kPadIndex = 0;

  Vocabulary() = default;
  // Tokens are deduplicated, sorted, and the boundary tokens appended last.
  explicit Vocabulary(std::vector<std::string> tokens, std::size_t max_seq_len = kDefaultMaxSeqLen);

  // Number of real tokens (boundary tokens included, pad excluded).
  std::size_t size() const noexcept { return tokens_.size(); }
  // Size of the index space including pad: rows of an embedding matrix and
  // width of the output layer.
  std::size_t index_space() const noexcept { return tokens_.size() + 1; }
  std::size_t max_seq_len() const noexcept { return max_seq_len_; }

  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  std::optional<std::int32_t> find(std::string_view word) const;
  // kVocab for unknown words.
  std::int32_t index(std::string_view word) const;
  // kVocab for 0 or out-of-range.
  const std::string& word(std::int32_t index) const;

  std::int32_t start_index() const { return index(kStartToken); }
  std::int32_t end_index() const { return index(kEndToken); }

  bool is_boundary(std::int32_t index) const;

  // One token per line, in index order (line n holds index n).
  std::string serialize() const;
  static Vocabulary deserialize(std::string_view text, std::size_t max_seq_len = kDefaultMaxSeqLen);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::int32_t> word_to_idx_;
  std::size_t max_seq_len_ = kDefaultMaxSeqLen;
};

Vocabulary build_vocabulary(const std::vector<CaptionRecord>& records, const std::vector<std::string>& extra_terms,
                            std::size_t max_seq_len = kDefaultMaxSeqLen);

// [startseq, w1..wn, endseq], truncated from the right so the sequence length
// is at most max_seq_len with endseq still last.
std::vector<std::int32_t> encode_caption(const Vocabulary& vocab, const std::vector<std::string>& tokens);

struct SplitSpec {
  std::uint64_t seed = 0;
  double ratio = 0.8;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

// Ids are sorted first, so the result depends only on the id set and the
// seed. |train| = round(ratio * N). kConfig when ratio is outside (0, 1),
// kConflict on duplicate ids.
SplitSpec split_dataset(std::vector<std::string> ids, double ratio, std::uint64_t seed);

std::string split_to_json(const SplitSpec& split);
SplitSpec split_from_json(std::string_view text);

}  // namespace vlce

#include "vlce/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

#include "vlce/error.hpp"
#include "vlce/io.hpp"
#include "vlce/rng.hpp"

namespace vlce {
namespace {

bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
char lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::vector<std::string> split_labels(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto end = s.find(';', start);
    if (end == std::string_view::npos) end = s.size();
    auto label = io::trim(s.substr(start, end - start));
    if (!label.empty()) out.push_back(std::move(label));
    start = end + 1;
  }
  return out;
}

}  // namespace

std::vector<std::string> preprocess_caption(std::string_view raw) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (current.size() >= 2) tokens.push_back(current);
    current.clear();
  };
  for (char c : raw) {
    if (is_alpha(c)) {
      current.push_back(lower(c));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

std::string image_id_from_filename(std::string_view filename) {
  auto slash = filename.find_last_of("/\\");
  if (slash != std::string_view::npos) filename.remove_prefix(slash + 1);
  auto dot = filename.find_last_of('.');
  if (dot != std::string_view::npos && dot > 0) filename = filename.substr(0, dot);
  return io::trim(filename);
}

std::vector<CaptionRecord> parse_caption_csv(std::string_view text, const CaptionCsvOptions& options,
                                             const FeatureStore* features) {
  auto rows = io::parse_csv(text);
  if (rows.empty()) fail(ErrorKind::kSchema, "caption CSV has no header row");
  const auto& header = rows.front().fields;
  auto column = [&](const std::string& name) -> std::optional<std::size_t> {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (io::trim(header[i]) == name) return i;
    }
    return std::nullopt;
  };
  auto id_col = column(options.id_column);
  if (!id_col) fail(ErrorKind::kSchema, "caption CSV lacks id column '" + options.id_column + "'");
  auto caption_col = column(options.caption_column);
  if (!caption_col) fail(ErrorKind::kSchema, "caption CSV lacks caption column '" + options.caption_column + "'");
  auto objects_col = column(options.objects_column);

  const std::size_t max_content = options.max_seq_len > 2 ? options.max_seq_len - 2 : 0;
  std::vector<CaptionRecord> records;
  std::set<std::string> seen;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.fields.size() != header.size()) {
      fail(ErrorKind::kParse, "line " + std::to_string(row.line) + ": expected " + std::to_string(header.size()) +
                                  " fields, found " + std::to_string(row.fields.size()));
    }
    CaptionRecord rec;
    rec.image_id = image_id_from_filename(row.fields[*id_col]);
    if (rec.image_id.empty()) fail(ErrorKind::kParse, "line " + std::to_string(row.line) + ": empty image id");
    if (!seen.insert(rec.image_id).second) {
      fail(ErrorKind::kConflict, "line " + std::to_string(row.line) + ": duplicate image id '" + rec.image_id + "'");
    }
    rec.raw_caption = row.fields[*caption_col];
    rec.clean_tokens = preprocess_caption(rec.raw_caption);
    if (rec.clean_tokens.size() > max_content) rec.clean_tokens.resize(max_content);
    if (objects_col) rec.detector_labels = split_labels(row.fields[*objects_col]);
    rec.empty_caption = rec.clean_tokens.empty();
    rec.missing_feature = features != nullptr && !features->contains(rec.image_id);
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<CaptionRecord> load_caption_csv(const std::filesystem::path& path, const CaptionCsvOptions& options,
                                            const FeatureStore* features) {
  try {
    return parse_caption_csv(io::read_file(path), options, features);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::size_t max_seq_len) : max_seq_len_(max_seq_len) {
  std::erase_if(tokens, [](const std::string& t) { return t.empty() || t == kStartToken || t == kEndToken; });
  std::sort(tokens.begin(), tokens.end());
  tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
  tokens.emplace_back(kStartToken);
  tokens.emplace_back(kEndToken);
  tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < tokens_.size(); ++i) word_to_idx_.emplace(tokens_[i], static_cast<std::int32_t>(i + 1));
}

std::optional<std::int32_t> Vocabulary::find(std::string_view word) const {
  auto it = word_to_idx_.find(std::string(word));
  if (it == word_to_idx_.end()) return std::nullopt;
  return it->second;
}

std::int32_t Vocabulary::index(std::string_view word) const {
  auto i = find(word);
  if (!i) fail(ErrorKind::kVocab, "word '" + std::string(word) + "' not in vocabulary");
  return *i;
}

const std::string& Vocabulary::word(std::int32_t index) const {
  if (index <= 0 || static_cast<std::size_t>(index) > tokens_.size()) {
    fail(ErrorKind::kVocab, "token index " + std::to_string(index) + " outside 1.." + std::to_string(tokens_.size()));
  }
  return tokens_[static_cast<std::size_t>(index - 1)];
}

bool Vocabulary::is_boundary(std::int32_t index) const {
  if (index <= 0 || static_cast<std::size_t>(index) > tokens_.size()) return false;
  const auto& w = tokens_[static_cast<std::size_t>(index - 1)];
  return w == kStartToken || w == kEndToken;
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (const auto& t : tokens_) {
    out += t;
    out.push_back('\n');
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::string_view text, std::size_t max_seq_len) {
  auto lines = io::split_lines(text);
  std::erase_if(lines, [](const std::string& l) { return l.empty(); });
  Vocabulary v(lines, max_seq_len);
  if (v.tokens_ != lines) fail(ErrorKind::kFormat, "vocabulary file is not in canonical order");
  return v;
}

Vocabulary build_vocabulary(const std::vector<CaptionRecord>& records, const std::vector<std::string>& extra_terms,
                            std::size_t max_seq_len) {
  std::vector<std::string> tokens;
  for (const auto& r : records) tokens.insert(tokens.end(), r.clean_tokens.begin(), r.clean_tokens.end());
  tokens.insert(tokens.end(), extra_terms.begin(), extra_terms.end());
  return Vocabulary(std::move(tokens), max_seq_len);
}

std::vector<std::int32_t> encode_caption(const Vocabulary& vocab, const std::vector<std::string>& tokens) {
  std::vector<std::int32_t> seq;
  seq.reserve(tokens.size() + 2);
  seq.push_back(vocab.start_index());
  for (const auto& t : tokens) seq.push_back(vocab.index(t));
  const std::size_t cap = std::max<std::size_t>(vocab.max_seq_len(), 2);
  if (seq.size() + 1 > cap) seq.resize(cap - 1);
  seq.push_back(vocab.end_index());
  return seq;
}

SplitSpec split_dataset(std::vector<std::string> ids, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) fail(ErrorKind::kConfig, "split ratio must lie in (0, 1), got " + io::format_double(ratio));
  std::sort(ids.begin(), ids.end());
  if (auto dup = std::adjacent_find(ids.begin(), ids.end()); dup != ids.end()) {
    fail(ErrorKind::kConflict, "duplicate id '" + *dup + "' in split input");
  }
  Rng rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    std::swap(ids[i - 1], ids[rng.below(i)]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(ids.size())));
  SplitSpec split;
  split.seed = seed;
  split.ratio = ratio;
  split.train_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.test_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  return split;
}

std::string split_to_json(const SplitSpec& split) {
  nlohmann::ordered_json j;
  j["seed"] = split.seed;
  j["ratio"] = split.ratio;
  j["train"] = split.train_ids;
  j["test"] = split.test_ids;
  return j.dump(2) + "\n";
}

SplitSpec split_from_json(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    SplitSpec s;
    s.seed = j.at("seed").get<std::uint64_t>();
    s.ratio = j.at("ratio").get<double>();
    s.train_ids = j.at("train").get<std::vector<std::string>>();
    s.test_ids = j.at("test").get<std::vector<std::string>>();
    return s;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("split file: ") + e.what());
  }
}

}  // namespace vlce

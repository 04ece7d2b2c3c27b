#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vlce/embeddings.hpp"
#include "vlce/feature_store.hpp"
#include "vlce/keywords.hpp"
#include "vlce/knowledge.hpp"

namespace vlce {

// Corpus word counts. P(w) = count / total for known words and
// 1 / (total + vocab_size) for unknown ones.
class FrequencyTable {
 public:
  // kData for count < 1, kConflict for a repeated word.
  void add(std::string word, std::uint64_t count);
  std::uint64_t count(std::string_view word) const;
  std::uint64_t total() const noexcept { return total_; }
  std::size_t vocab_size() const noexcept { return counts_.size(); }
  double probability(std::string_view word) const;

 private:
  std::unordered_map<std::string, std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

// "word<TAB>count" lines; '#' comments, blank lines and a "word\tcount" header
// are skipped. Words are lowercased.
FrequencyTable parse_frequency_table(std::string_view text);
FrequencyTable load_frequency_table(const std::filesystem::path& path);

enum class ScoreMode { kProduct, kWeighted };

struct EvalConfig {
  ScoreMode mode = ScoreMode::kProduct;
  // Weighted mode: S = alpha * I + beta * R + gamma * Precision, where
  // Precision is currently R (provisional stand-in).
  std::optional<double> alpha;
  std::optional<double> beta;
  std::optional<double> gamma;
  // Original CLIPScore scaling 2.5 * max(cos, 0).
  bool rescale_clip = false;

  void validate() const;  // kConfig when weighted mode lacks a weight
};

// Sum of -ln P(w) over tokens, repeats included.
double informativeness(std::span<const std::string> tokens, const FrequencyTable& freq);
double clip_score(std::span<const float> image, std::span<const float> text, bool rescale = false);
double infometic(double relevance, double info, const EvalConfig& cfg);

struct CaptionEntry {
  std::string image_id;
  std::string raw;
  std::vector<std::string> tokens;
};

// Reads `caption_column` (tokenized with the corpus rules) keyed by
// `id_column`, which may hold file names. kSchema for a missing column,
// kConflict for a repeated id.
std::vector<CaptionEntry> parse_caption_set(std::string_view csv_text, const std::string& id_column,
                                            const std::string& caption_column);
std::vector<CaptionEntry> load_caption_set(const std::filesystem::path& path, const std::string& id_column,
                                           const std::string& caption_column);
std::string caption_set_csv(const std::vector<CaptionEntry>& captions);  // image,caption

struct EvalRecord {
  std::string image_id;
  double clip_score = 0.0;
  double informativeness = 0.0;
  double infometic = 0.0;
  bool scored = false;
  std::string error;  // why the record was excluded when !scored
};

// One record per caption, in input order. Missing image features, captions
// the provider cannot embed and zero-norm vectors produce unscored records.
std::vector<EvalRecord> score_caption_set(const std::vector<CaptionEntry>& captions, const FeatureStore& image_features,
                                          const EmbeddingProvider& text_provider, const FrequencyTable& freq,
                                          const EvalConfig& cfg, std::size_t jobs = 1);

enum class Metric { kClipScore, kInformativeness, kInfometic };
inline constexpr Metric kAllMetrics[] = {Metric::kClipScore, Metric::kInformativeness, Metric::kInfometic};
std::string metric_name(Metric m);  // clipscore, informativeness, infometic
double metric_value(const EvalRecord& r, Metric m);

struct Comparison {
  Metric metric = Metric::kInfometic;
  std::size_t n_better = 0;
  std::size_t n = 0;          // ids scored on both sides
  double percentage = 0.0;    // 100 * n_better / n (0 when n == 0)
  std::map<std::string, int> better;  // per joint id, 1 iff custom > baseline
  std::vector<std::string> orphans_custom;    // ids only the custom side has
  std::vector<std::string> orphans_baseline;  // ids only the baseline side has
  std::vector<std::string> unscored;          // joint ids excluded by a scoring error
};

Comparison compare_sets(const std::vector<EvalRecord>& custom, const std::vector<EvalRecord>& baseline, Metric metric);

struct NounCoverage {
  std::size_t count = 0;
  std::set<std::string> nouns;
};

// Unique tokens the lexical source tags as nouns, stopwords excluded.
NounCoverage noun_coverage(const std::vector<CaptionEntry>& captions, const LexicalSource& lexical,
                           const StopwordSet& stopwords);

// Histogram over the observed range of all values given, 20 equal-width bins;
// the last bin is closed. A degenerate range uses bins of width 1/20 from min.
struct Histogram {
  double lower = 0.0;
  double width = 0.0;
  std::vector<std::size_t> custom;
  std::vector<std::size_t> baseline;
};
inline constexpr std::size_t kHistogramBins = 20;
Histogram make_histogram(std::span<const double> custom, std::span<const double> baseline, std::size_t bins = kHistogramBins);

struct ReportInput {
  std::string custom_name = "custom";
  std::string baseline_name = "baseline";
  std::vector<EvalRecord> custom;
  std::vector<EvalRecord> baseline;
  EvalConfig config;
  std::string corpus_name;  // frequency table used for informativeness
};

// scores.csv, summary.json, hist_<metric>.csv, hist_<metric>.svg and
// compare_<metric>.svg for every metric. Byte-identical for identical input.
void emit_report(const ReportInput& input, const std::filesystem::path& out_dir);

std::string scores_csv(const ReportInput& input);
std::string summary_json(const ReportInput& input);
std::string histogram_csv(const Histogram& h, const std::string& custom_name, const std::string& baseline_name);
std::string histogram_svg(const Histogram& h, const std::string& title, const std::string& custom_name,
                          const std::string& baseline_name);
std::string comparison_svg(const Comparison& c, const std::string& custom_name, const std::string& baseline_name);

// One row of the per-configuration comparison tables (model x dataset x KG x
// backbone, CLIPScore and InfoMetIC shares for custom vs baseline).
struct MetricTableRow {
  std::string model;
  std::string baseline;
  std::string dataset;
  std::string kg;  // "with" / "without"
  std::string backbone;
  double clip_custom = 0.0;
  double infometic_custom = 0.0;
  // Baseline shares are 100 - custom: ties count against the custom model.
  double clip_baseline() const { return 100.0 - clip_custom; }
  double infometic_baseline() const { return 100.0 - infometic_custom; }
};
std::string metric_table_csv(const std::vector<MetricTableRow>& rows);

// Unique object-noun counts per configuration for the custom model and each
// baseline caption source.
struct NounTableRow {
  std::string dataset;
  std::string backbone;
  std::string model;
  std::string configuration;  // "With Knowledge Graph" / "Without Knowledge Graph"
  std::size_t custom = 0;
  std::map<std::string, std::size_t> baselines;
};
// Columns: exp,dataset,backbone,model,configuration,custom,<baselines...>,best_model
std::string noun_table_csv(const std::vector<NounTableRow>& rows);

}  // namespace vlce

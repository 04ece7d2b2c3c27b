#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "vlce/corpus.hpp"
#include "vlce/evaluation.hpp"
#include "vlce/models.hpp"

namespace vlce {

inline constexpr std::string_view kVersion = "0.3.0";
// Environment variable naming the cache directory for live ConceptNet lookups.
inline constexpr const char* kCacheDirEnv = "VLCE_CACHE_DIR";

struct ModelSpec {
  std::string name;      // unique, used in artifact paths
  std::string type;      // transformer | lstm
  std::string backbone;  // label for report tables, e.g. "ViT (UAV)"
  std::filesystem::path features;
  // image_dim and emb_dim are taken from the feature file and the embedding
  // matrix at train time.
  TransformerConfig transformer;
  LstmConfig lstm;
};

struct BaselineSpec {
  std::string name;    // e.g. llava
  std::string column;  // column of the caption CSV holding its captions
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string dataset = "dataset";

  std::filesystem::path captions;
  std::filesystem::path stopwords;
  std::filesystem::path vectors;
  std::filesystem::path lexical;
  std::filesystem::path concepts;  // TSV edge file (file source only)
  std::filesystem::path frequency;
  std::filesystem::path clip_image;
  std::optional<std::filesystem::path> contextual;  // word-keyed VLCF for the without-KG path
  std::filesystem::path output;

  CaptionCsvOptions csv;
  double split_ratio = 0.8;
  std::size_t top_k = 10;
  std::string concept_source = "file";  // file | http
  std::set<std::string> relations;
  std::optional<std::filesystem::path> cache_dir;
  double epsilon = kDefaultEpsilon;

  std::vector<ModelSpec> models;
  std::vector<std::string> kg_variants{"with", "without"};
  TrainSchedule schedule;
  std::string generate_split = "test";  // test | all
  std::size_t max_len = kDefaultMaxSeqLen;

  EvalConfig eval;
  std::vector<BaselineSpec> baselines;
  std::string corpus_name = "corpus";

  std::string canonical_json;  // effective configuration, keys sorted
  std::string hash() const;
};

// JSON configuration. Relative paths resolve against `base_dir`. Each
// override is "dotted.key=value" (value parsed as JSON, else taken as a
// string; array elements by index, e.g. models.0.config.layers=1).
// kConfig with the key path for unknown keys or wrong types.
PipelineConfig parse_pipeline_config(std::string_view json_text, const std::filesystem::path& base_dir,
                                     const std::vector<std::string>& overrides = {});
PipelineConfig load_pipeline_config(const std::filesystem::path& file, const std::vector<std::string>& overrides = {});

// kConfig naming the key of the first input path that does not exist.
void validate_paths(const PipelineConfig& cfg);

enum class Stage { kPreprocess, kKeywords, kEnrich, kEmbed, kTrain, kGenerate, kEvaluate, kReport };
inline constexpr Stage kAllStages[] = {Stage::kPreprocess, Stage::kKeywords, Stage::kEnrich,   Stage::kEmbed,
                                       Stage::kTrain,      Stage::kGenerate, Stage::kEvaluate, Stage::kReport};
std::string stage_name(Stage s);
std::optional<Stage> parse_stage(std::string_view name);

struct RunOptions {
  unsigned jobs = 1;
  std::function<void(const std::string&)> log;
};

// Reads the previous stages' artifacts from cfg.output (kMissingArtifact naming
// the producing subcommand when one is absent), writes this stage's artifacts
// and <output>/<stage>/manifest.json.
void run_stage(const PipelineConfig& cfg, Stage stage, const RunOptions& options = {});
void run_pipeline(const PipelineConfig& cfg, const RunOptions& options = {});

// Human-readable lineage of every manifest under out_dir.
std::string manifest_lineage(const std::filesystem::path& out_dir);

// Preprocess artifact: image,caption,tokens,objects,missing_feature,empty_caption.
std::string corpus_to_csv(const std::vector<CaptionRecord>& records);
std::vector<CaptionRecord> corpus_from_csv(std::string_view text);

// Evaluation artifact: image_id,clip_score,informativeness,infometic,scored,error.
std::string records_to_csv(const std::vector<EvalRecord>& records);
std::vector<EvalRecord> records_from_csv(std::string_view text);

}  // namespace vlce

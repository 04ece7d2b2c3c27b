#include "vlce/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <map>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "vlce/embeddings.hpp"
#include "vlce/error.hpp"
#include "vlce/io.hpp"
#include "vlce/keywords.hpp"
#include "vlce/knowledge.hpp"
#include "vlce/rng.hpp"

namespace vlce {
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// ---- schema-checked JSON access ---------------------------------------------

class Obj {
 public:
  Obj(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorKind::kConfig, where() + ": expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& at(const std::string& key) {
    if (!has(key)) fail(ErrorKind::kConfig, key_path(key) + ": required key missing");
    return j_.at(key);
  }

  std::string str(const std::string& key, std::optional<std::string> def = std::nullopt) {
    if (!has(key)) {
      if (def) return *def;
      at(key);
    }
    const auto& v = j_.at(key);
    if (!v.is_string()) fail(ErrorKind::kConfig, key_path(key) + ": expected a string");
    return v.get<std::string>();
  }

  double num(const std::string& key, double def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number()) fail(ErrorKind::kConfig, key_path(key) + ": expected a number");
    return v.get<double>();
  }

  std::optional<double> opt_num(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return num(key, 0.0);
  }

  std::uint64_t uint(const std::string& key, std::uint64_t def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      fail(ErrorKind::kConfig, key_path(key) + ": expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) fail(ErrorKind::kConfig, key_path(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::vector<std::string> strings(const std::string& key, std::vector<std::string> def) {
    if (!has(key)) return def;
    const auto& v = j_.at(key);
    if (!v.is_array()) fail(ErrorKind::kConfig, key_path(key) + ": expected an array of strings");
    std::vector<std::string> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_string()) fail(ErrorKind::kConfig, key_path(key) + "." + std::to_string(i) + ": expected a string");
      out.push_back(v[i].get<std::string>());
    }
    return out;
  }

  Obj sub(const std::string& key) {
    static const json empty = json::object();
    return has(key) ? Obj(j_.at(key), key_path(key)) : Obj(empty, key_path(key));
  }

  // Rejects keys that were never asked for.
  void done() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) fail(ErrorKind::kConfig, key_path(k) + ": unknown key");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : path_; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void apply_override(json& root, const std::string& item) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || eq == 0) fail(ErrorKind::kConfig, "override '" + item + "' is not key=value");
  const auto key = item.substr(0, eq);
  const auto text = item.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &root;
  std::stringstream ss(key);
  std::string seg, walked;
  while (std::getline(ss, seg, '.')) {
    walked += (walked.empty() ? "" : ".") + seg;
    if (node->is_array()) {
      std::size_t idx = 0;
      try {
        idx = std::stoul(seg);
      } catch (const std::exception&) {
        fail(ErrorKind::kConfig, walked + ": expected an array index");
      }
      if (idx >= node->size()) fail(ErrorKind::kConfig, walked + ": index out of range");
      node = &(*node)[idx];
    } else if (node->is_object() || node->is_null()) {
      node = &(*node)[seg];
    } else {
      fail(ErrorKind::kConfig, walked + ": cannot descend into a scalar");
    }
  }
  *node = std::move(value);
}

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : (base / path).lexically_normal();
}

std::string hex_hash(std::string_view bytes) { return io::to_hex(fnv1a64(bytes)); }

std::string variant_name(const ModelSpec& m, const std::string& kg) { return m.name + "_" + kg + "_kg"; }

// ---- stage bookkeeping --------------------------------------------------------

class StageRun {
 public:
  StageRun(const PipelineConfig& cfg, Stage stage, const RunOptions& options)
      : cfg_(cfg), stage_(stage), options_(options), start_(std::chrono::steady_clock::now()) {}

  fs::path dir() const { return cfg_.output / stage_name(stage_); }
  fs::path artifact(Stage producer, const fs::path& rel) const { return cfg_.output / stage_name(producer) / rel; }

  std::string read_artifact(Stage producer, const fs::path& rel) {
    const auto p = artifact(producer, rel);
    require(p, producer);
    auto text = io::read_file(p);
    note_input(p, text);
    return text;
  }

  void require(const fs::path& p, Stage producer) const {
    if (!fs::exists(p)) {
      fail(ErrorKind::kMissingArtifact, p.string() + " not found; run `vlce " + stage_name(producer) + "` first");
    }
  }

  std::string read_input(const fs::path& p) {
    auto text = io::read_file(p);
    note_input(p, text);
    return text;
  }

  void note_input(const fs::path& p, std::string_view bytes) { inputs_[label(p)] = hex_hash(bytes); }
  void note_input_file(const fs::path& p) { note_input(p, io::read_file(p)); }

  void write(const fs::path& rel, std::string_view content) {
    io::write_file(dir() / rel, content);
    outputs_[label(dir() / rel)] = hex_hash(content);
  }

  // For files written by other helpers.
  void note_output(const fs::path& rel) { outputs_[label(dir() / rel)] = hex_hash(io::read_file(dir() / rel)); }

  void log(const std::string& msg) const {
    if (options_.log) options_.log("[" + stage_name(stage_) + "] " + msg);
  }

  unsigned jobs() const { return std::max(1u, options_.jobs); }

  void finish() const {
    nlohmann::ordered_json m;
    m["stage"] = stage_name(stage_);
    m["version"] = std::string(kVersion);
    m["config_hash"] = cfg_.hash();
    m["seed"] = cfg_.seed;
    m["stage_seed"] = derive_seed(cfg_.seed, stage_name(stage_));
    auto list = [](const std::map<std::string, std::string>& files) {
      auto arr = nlohmann::ordered_json::array();
      for (const auto& [p, h] : files) arr.push_back({{"path", p}, {"fnv1a64", h}});
      return arr;
    };
    m["inputs"] = list(inputs_);
    m["outputs"] = list(outputs_);
    m["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    io::write_file(dir() / "manifest.json", m.dump(2) + "\n");
  }

 private:
  std::string label(const fs::path& p) const {
    const auto rel = p.lexically_relative(cfg_.output);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return p.generic_string();
  }

  const PipelineConfig& cfg_;
  Stage stage_;
  const RunOptions& options_;
  std::chrono::steady_clock::time_point start_;
  std::map<std::string, std::string> inputs_;
  std::map<std::string, std::string> outputs_;
};

std::vector<CaptionRecord> select(const std::vector<CaptionRecord>& records, const std::vector<std::string>& ids) {
  std::map<std::string, const CaptionRecord*> by_id;
  for (const auto& r : records) by_id.emplace(r.image_id, &r);
  std::vector<CaptionRecord> out;
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) fail(ErrorKind::kData, "split names unknown image '" + id + "'");
    out.push_back(*it->second);
  }
  return out;
}

std::vector<std::string> eval_ids(const PipelineConfig& cfg, const SplitSpec& split) {
  if (cfg.generate_split == "test") return split.test_ids;
  std::vector<std::string> ids = split.train_ids;
  ids.insert(ids.end(), split.test_ids.begin(), split.test_ids.end());
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::string join(const std::vector<std::string>& words, char sep = ' ') {
  std::string out;
  for (const auto& w : words) out += (out.empty() ? "" : std::string(1, sep)) + w;
  return out;
}

// ---- stages ---------------------------------------------------------------------

void stage_preprocess(const PipelineConfig& cfg, StageRun& run) {
  auto records = parse_caption_csv(run.read_input(cfg.captions), cfg.csv);
  for (const auto& m : cfg.models) {
    const auto store = load_feature_store(m.features);
    run.note_input_file(m.features);
    for (auto& r : records) {
      if (!store.contains(r.image_id)) r.missing_feature = true;
    }
  }
  std::vector<std::string> ids;
  std::size_t flagged = 0;
  for (const auto& r : records) {
    if (r.flagged()) {
      ++flagged;
      run.log("flagged " + r.image_id + (r.missing_feature ? " (missing feature)" : " (empty caption)"));
    } else {
      ids.push_back(r.image_id);
    }
  }
  if (ids.size() < 2) fail(ErrorKind::kData, "fewer than two usable captions");
  const auto split = split_dataset(ids, cfg.split_ratio, derive_seed(cfg.seed, "split"));
  run.write("corpus.csv", corpus_to_csv(records));
  run.write("split.json", split_to_json(split));
  run.log(std::to_string(records.size()) + " captions, " + std::to_string(flagged) + " flagged, split " +
          std::to_string(split.train_ids.size()) + "/" + std::to_string(split.test_ids.size()));
}

struct Corpus {
  std::vector<CaptionRecord> records;
  SplitSpec split;
  std::vector<CaptionRecord> train;
};

Corpus read_corpus(StageRun& run) {
  Corpus c;
  c.records = corpus_from_csv(run.read_artifact(Stage::kPreprocess, "corpus.csv"));
  c.split = split_from_json(run.read_artifact(Stage::kPreprocess, "split.json"));
  c.train = select(c.records, c.split.train_ids);
  return c;
}

void stage_keywords(const PipelineConfig& cfg, StageRun& run) {
  const auto corpus = read_corpus(run);
  const auto stopwords = parse_stopwords(run.read_input(cfg.stopwords));
  const auto kw = extract_keywords(corpus.train, stopwords, cfg.top_k, run.jobs());
  run.write("keywords.csv", keywords_to_csv(kw));
  std::size_t n = 0;
  for (const auto& [id, phrases] : kw) n += phrases.size();
  run.log(std::to_string(n) + " phrases from " + std::to_string(kw.size()) + " training captions");
}

std::unique_ptr<ConceptSource> concept_source(const PipelineConfig& cfg, StageRun& run) {
  if (cfg.concept_source == "file") {
    return std::make_unique<FileConceptSource>(FileConceptSource::parse(run.read_input(cfg.concepts)));
  }
  HttpConceptOptions opts;
  if (const char* env = std::getenv(kCacheDirEnv); env && *env) {
    opts.cache_dir = env;
  } else if (cfg.cache_dir) {
    opts.cache_dir = *cfg.cache_dir;
  } else {
    opts.cache_dir = cfg.output / "cache" / "conceptnet";
  }
  return std::make_unique<HttpConceptSource>(opts);
}

void stage_enrich(const PipelineConfig& cfg, StageRun& run) {
  const auto phrases = keywords_from_csv(run.read_artifact(Stage::kKeywords, "keywords.csv"));
  const auto lexical = FileLexicalSource::parse(run.read_input(cfg.lexical));
  auto concepts = concept_source(cfg, run);
  const auto base = keyword_terms(phrases);
  const auto wordnet = expand_synonyms(phrases, lexical);
  const auto report = expand_concepts(base, *concepts, cfg.relations);
  for (const auto& t : report.skipped_terms) run.log("warning: concept lookup for '" + t + "' failed; skipped");
  const auto enriched = merge_enriched(base, wordnet, report.terms);
  run.write("enriched.tsv", enriched.serialize());
  nlohmann::ordered_json s;
  s["base"] = enriched.base_terms.size();
  s["wordnet"] = enriched.wordnet_terms.size();
  s["conceptnet"] = enriched.conceptnet_terms.size();
  s["merged"] = enriched.merged.size();
  s["skipped_terms"] = report.skipped_terms;
  run.write("summary.json", s.dump(2) + "\n");
  run.log(std::to_string(enriched.merged.size()) + " enriched terms");
}

void stage_embed(const PipelineConfig& cfg, StageRun& run) {
  const auto corpus = read_corpus(run);
  const auto table = parse_vector_table(run.read_input(cfg.vectors), cfg.vectors.filename().string());
  for (const auto& kg : cfg.kg_variants) {
    EmbeddingMatrix matrix;
    Vocabulary vocab;
    const auto seed = derive_seed(cfg.seed, "embed/" + kg);
    if (kg == "with") {
      const auto enriched = EnrichedVocabulary::deserialize(run.read_artifact(Stage::kEnrich, "enriched.tsv"));
      vocab = build_vocabulary(corpus.train, enriched.merged, cfg.csv.max_seq_len);
      matrix = build_matrix(vocab, table, cfg.epsilon, seed);
    } else {
      vocab = build_vocabulary(corpus.train, {}, cfg.csv.max_seq_len);
      if (cfg.contextual) {
        const auto store = load_feature_store(*cfg.contextual);
        run.note_input_file(*cfg.contextual);
        matrix = build_matrix_from_provider(vocab, FeatureStoreProvider(store), cfg.epsilon, seed);
      } else {
        matrix = build_matrix_from_provider(vocab, MeanWordVectorProvider(table), cfg.epsilon, seed);
      }
    }
    run.write(fs::path(kg) / "vocab.txt", vocab.serialize());
    save_embedding_matrix(matrix, vocab, run.dir() / kg / "embedding.vlcf", run.dir() / kg / "embedding.json");
    run.note_output(fs::path(kg) / "embedding.vlcf");
    run.note_output(fs::path(kg) / "embedding.json");
    const auto cov = coverage_report(matrix);
    run.log(kg + " KG: " + std::to_string(vocab.size()) + " tokens, exact " + std::to_string(cov.exact) + ", prefix " +
            std::to_string(cov.prefix) + ", random " + std::to_string(cov.random));
  }
}

struct Embedded {
  Vocabulary vocab;
  EmbeddingMatrix matrix;
};

Embedded read_embedding(const PipelineConfig& cfg, StageRun& run, const std::string& kg) {
  Embedded e;
  e.vocab = Vocabulary::deserialize(run.read_artifact(Stage::kEmbed, fs::path(kg) / "vocab.txt"), cfg.csv.max_seq_len);
  const auto vlcf = run.artifact(Stage::kEmbed, fs::path(kg) / "embedding.vlcf");
  const auto side = run.artifact(Stage::kEmbed, fs::path(kg) / "embedding.json");
  run.require(vlcf, Stage::kEmbed);
  run.require(side, Stage::kEmbed);
  run.note_input_file(vlcf);
  run.note_input_file(side);
  e.matrix = load_embedding_matrix(e.vocab, vlcf, side);
  return e;
}

std::string schedule_json(const TrainSchedule& s) {
  nlohmann::ordered_json j;
  j["phase1"] = {{"learning_rate", s.phase1.learning_rate}, {"epochs", s.phase1.epochs}};
  j["phase2"] = {{"learning_rate", s.phase2.learning_rate}, {"epochs", s.phase2.epochs}};
  j["batch_size"] = s.batch_size;
  j["target_loss"] = s.target_loss;
  j["seed"] = s.seed;
  return j.dump();
}

void stage_train(const PipelineConfig& cfg, StageRun& run) {
  const auto corpus = read_corpus(run);
  for (const auto& kg : cfg.kg_variants) {
    const auto emb = read_embedding(cfg, run, kg);
    for (const auto& spec : cfg.models) {
      const auto variant = variant_name(spec, kg);
      const auto features = load_feature_store(spec.features);
      run.note_input_file(spec.features);
      std::unique_ptr<CaptionModel> model;
      const auto init_seed = derive_seed(cfg.seed, "init/" + variant);
      if (spec.type == "transformer") {
        auto tc = spec.transformer;
        tc.image_dim = features.dim();
        tc.model_dim = tc.emb_dim = emb.matrix.dim;
        tc.max_seq_len = cfg.csv.max_seq_len;
        model = std::make_unique<TransformerCaptioner>(tc, emb.vocab.index_space(), &emb.matrix, init_seed);
      } else {
        auto lc = spec.lstm;
        lc.image_dim = features.dim();
        lc.emb_dim = emb.matrix.dim;
        lc.max_seq_len = cfg.csv.max_seq_len;
        model = std::make_unique<LstmCaptioner>(lc, emb.vocab.index_space(), &emb.matrix, init_seed);
      }
      auto schedule = cfg.schedule;
      schedule.seed = derive_seed(cfg.seed, "train/" + variant);
      nlohmann::ordered_json extra;
      extra["variant"] = variant;
      extra["schedule"] = json::parse(schedule_json(schedule));
      extra["vocab_fnv1a64"] = hex_hash(emb.vocab.serialize());
      const auto dir = run.dir() / variant;
      auto checkpoint = [&](int phase, const nn::Adam& adam) {
        const auto rel = fs::path(variant) / ("phase" + std::to_string(phase));
        save_model(*model, run.dir() / rel, extra.dump());
        nn::save_optimizer(adam, run.dir() / rel / "optimizer.json", run.dir() / rel / "optimizer_moments.vlcf");
        for (const auto* f : {"model.vlcf", "model.json", "optimizer.json", "optimizer_moments.vlcf"}) run.note_output(rel / f);
      };
      run.log("training " + variant + " on " + std::to_string(corpus.train.size()) + " captions");
      const auto result = train(*model, schedule, TrainingData{corpus.train, features, emb.vocab}, checkpoint);
      save_model(*model, dir, extra.dump());
      run.note_output(fs::path(variant) / "model.vlcf");
      run.note_output(fs::path(variant) / "model.json");
      run.write(fs::path(variant) / "loss.csv", loss_curve_csv(result.curve));
      run.log(variant + ": " + std::to_string(result.steps) + " steps, final loss " +
              io::format_double(result.curve.back().loss));
    }
  }
}

void stage_generate(const PipelineConfig& cfg, StageRun& run) {
  const auto corpus = read_corpus(run);
  const auto ids = eval_ids(cfg, corpus.split);
  for (const auto& kg : cfg.kg_variants) {
    const auto vocab =
        Vocabulary::deserialize(run.read_artifact(Stage::kEmbed, fs::path(kg) / "vocab.txt"), cfg.csv.max_seq_len);
    for (const auto& spec : cfg.models) {
      const auto variant = variant_name(spec, kg);
      const auto model_dir = run.artifact(Stage::kTrain, variant);
      run.require(model_dir / "model.vlcf", Stage::kTrain);
      run.note_input_file(model_dir / "model.vlcf");
      const auto model = load_model(model_dir);
      if (model->vocab_size() != vocab.index_space()) {
        fail(ErrorKind::kData, variant + ": model and vocabulary disagree; rerun `vlce train`");
      }
      const auto features = load_feature_store(spec.features);
      std::vector<CaptionEntry> out;
      for (const auto& id : ids) {
        CaptionEntry e;
        e.image_id = id;
        e.tokens = generate_caption(*model, features.at(id), vocab, cfg.max_len);
        e.raw = join(e.tokens);
        out.push_back(std::move(e));
      }
      run.write(fs::path(variant) / "captions.csv", caption_set_csv(out));
      run.log(variant + ": " + std::to_string(out.size()) + " captions");
    }
  }
}

std::string nouns_text(const NounCoverage& n) {
  std::string out;
  for (const auto& w : n.nouns) out += w + "\n";
  return out;
}

void stage_evaluate(const PipelineConfig& cfg, StageRun& run) {
  const auto corpus = read_corpus(run);
  const auto ids = eval_ids(cfg, corpus.split);
  const std::set<std::string> id_set(ids.begin(), ids.end());
  const auto freq = parse_frequency_table(run.read_input(cfg.frequency));
  const auto table = parse_vector_table(run.read_input(cfg.vectors), cfg.vectors.filename().string());
  const auto clip = load_feature_store(cfg.clip_image);
  run.note_input_file(cfg.clip_image);
  const auto lexical = FileLexicalSource::parse(run.read_input(cfg.lexical));
  const auto stopwords = parse_stopwords(run.read_input(cfg.stopwords));
  const MeanWordVectorProvider provider(table);

  auto score = [&](const std::vector<CaptionEntry>& captions, const fs::path& rel) {
    const auto records = score_caption_set(captions, clip, provider, freq, cfg.eval, run.jobs());
    for (const auto& r : records) {
      if (!r.scored) run.log("warning: " + rel.generic_string() + ": " + r.image_id + " excluded (" + r.error + ")");
    }
    run.write(rel / "scores.csv", records_to_csv(records));
    run.write(rel / "nouns.txt", nouns_text(noun_coverage(captions, lexical, stopwords)));
  };

  const auto captions_text = run.read_input(cfg.captions);
  for (const auto& b : cfg.baselines) {
    auto all = parse_caption_set(captions_text, cfg.csv.id_column, b.column);
    std::vector<CaptionEntry> kept;
    for (auto& e : all) {
      if (id_set.contains(e.image_id)) kept.push_back(std::move(e));
    }
    score(kept, fs::path("baselines") / b.name);
  }
  for (const auto& kg : cfg.kg_variants) {
    for (const auto& spec : cfg.models) {
      const auto variant = variant_name(spec, kg);
      // Captions without their model are stale; point at the earliest gap.
      run.require(run.artifact(Stage::kTrain, variant) / "model.vlcf", Stage::kTrain);
      const auto captions =
          parse_caption_set(run.read_artifact(Stage::kGenerate, fs::path(variant) / "captions.csv"), "image", "caption");
      score(captions, variant);
    }
  }
  run.log("scored " + std::to_string(ids.size()) + " images per caption set");
}

std::size_t count_lines(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

void stage_report(const PipelineConfig& cfg, StageRun& run) {
  std::map<std::string, std::vector<EvalRecord>> baseline_records;
  std::map<std::string, std::size_t> baseline_nouns;
  for (const auto& b : cfg.baselines) {
    const auto rel = fs::path("baselines") / b.name;
    baseline_records[b.name] = records_from_csv(run.read_artifact(Stage::kEvaluate, rel / "scores.csv"));
    baseline_nouns[b.name] = count_lines(run.read_artifact(Stage::kEvaluate, rel / "nouns.txt"));
  }
  std::vector<MetricTableRow> metric_rows;
  std::vector<NounTableRow> noun_rows;
  for (const auto& spec : cfg.models) {
    for (const auto& kg : cfg.kg_variants) {
      const auto variant = variant_name(spec, kg);
      const auto custom = records_from_csv(run.read_artifact(Stage::kEvaluate, fs::path(variant) / "scores.csv"));
      const auto nouns = count_lines(run.read_artifact(Stage::kEvaluate, fs::path(variant) / "nouns.txt"));
      const std::string kg_label = kg == "with" ? "With" : "Without";
      NounTableRow nr{cfg.dataset, spec.backbone, spec.name, kg_label + " Knowledge Graph", nouns, baseline_nouns};
      noun_rows.push_back(std::move(nr));
      for (const auto& b : cfg.baselines) {
        ReportInput in;
        in.custom_name = "custom";
        in.baseline_name = b.name;
        in.custom = custom;
        in.baseline = baseline_records[b.name];
        in.config = cfg.eval;
        in.corpus_name = cfg.corpus_name;
        const auto rel = fs::path(variant) / b.name;
        emit_report(in, run.dir() / rel);
        for (const auto* f : {"scores.csv", "summary.json"}) run.note_output(rel / f);
        for (auto m : kAllMetrics) {
          const auto name = metric_name(m);
          run.note_output(rel / ("hist_" + name + ".csv"));
          run.note_output(rel / ("hist_" + name + ".svg"));
          run.note_output(rel / ("compare_" + name + ".svg"));
        }
        MetricTableRow row;
        row.model = spec.name;
        row.baseline = b.name;
        row.dataset = cfg.dataset;
        row.kg = kg_label;
        row.backbone = spec.backbone;
        row.clip_custom = compare_sets(in.custom, in.baseline, Metric::kClipScore).percentage;
        row.infometic_custom = compare_sets(in.custom, in.baseline, Metric::kInfometic).percentage;
        metric_rows.push_back(std::move(row));
      }
    }
  }
  run.write("table_metrics.csv", metric_table_csv(metric_rows));
  run.write("table_nouns.csv", noun_table_csv(noun_rows));
  run.log(std::to_string(metric_rows.size()) + " comparison rows");
}

}  // namespace

// ---- config -------------------------------------------------------------------

std::string PipelineConfig::hash() const { return hex_hash(canonical_json); }

PipelineConfig parse_pipeline_config(std::string_view json_text, const fs::path& base_dir,
                                     const std::vector<std::string>& overrides) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  for (const auto& o : overrides) apply_override(root, o);

  PipelineConfig cfg;
  Obj top(root, "");
  cfg.seed = top.uint("seed", 0);
  cfg.dataset = top.str("dataset", "dataset");

  {
    auto p = top.sub("paths");
    cfg.captions = resolve(base_dir, p.str("captions"));
    cfg.stopwords = resolve(base_dir, p.str("stopwords"));
    cfg.vectors = resolve(base_dir, p.str("vectors"));
    cfg.lexical = resolve(base_dir, p.str("lexical"));
    if (p.has("concepts")) cfg.concepts = resolve(base_dir, p.str("concepts"));
    cfg.frequency = resolve(base_dir, p.str("frequency"));
    cfg.clip_image = resolve(base_dir, p.str("clip_image"));
    if (p.has("contextual")) cfg.contextual = resolve(base_dir, p.str("contextual"));
    cfg.output = resolve(base_dir, p.str("output", "out"));
    p.done();
  }
  {
    auto c = top.sub("corpus");
    cfg.csv.id_column = c.str("id_column", "image");
    cfg.csv.caption_column = c.str("caption_column", "caption");
    cfg.csv.objects_column = c.str("objects_column", "objects");
    cfg.csv.max_seq_len = c.uint("max_seq_len", kDefaultMaxSeqLen);
    if (cfg.csv.max_seq_len < 3) fail(ErrorKind::kConfig, "corpus.max_seq_len: must be at least 3");
    cfg.split_ratio = c.num("split_ratio", 0.8);
    if (!(cfg.split_ratio > 0.0 && cfg.split_ratio < 1.0)) fail(ErrorKind::kConfig, "corpus.split_ratio: must lie in (0, 1)");
    c.done();
  }
  {
    auto k = top.sub("keywords");
    cfg.top_k = k.uint("top_k", 10);
    if (cfg.top_k == 0) fail(ErrorKind::kConfig, "keywords.top_k: must be positive");
    k.done();
  }
  {
    auto k = top.sub("knowledge");
    cfg.concept_source = k.str("source", "file");
    if (cfg.concept_source != "file" && cfg.concept_source != "http") {
      fail(ErrorKind::kConfig, "knowledge.source: expected \"file\" or \"http\"");
    }
    const auto def = default_allowed_relations();
    for (const auto& r : k.strings("relations", std::vector<std::string>(def.begin(), def.end()))) {
      if (!known_relations().contains(r)) fail(ErrorKind::kConfig, "knowledge.relations: unknown relation '" + r + "'");
      cfg.relations.insert(r);
    }
    if (k.has("cache_dir")) cfg.cache_dir = resolve(base_dir, k.str("cache_dir"));
    k.done();
    if (cfg.concept_source == "file" && cfg.concepts.empty()) {
      fail(ErrorKind::kConfig, "paths.concepts: required when knowledge.source is \"file\"");
    }
  }
  {
    auto e = top.sub("embeddings");
    cfg.epsilon = e.num("epsilon", kDefaultEpsilon);
    if (!(cfg.epsilon > 0.0)) fail(ErrorKind::kConfig, "embeddings.epsilon: must be positive");
    e.done();
  }
  {
    const auto& arr = top.at("models");
    if (!arr.is_array() || arr.empty()) fail(ErrorKind::kConfig, "models: expected a non-empty array");
    std::set<std::string> names;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto path = "models." + std::to_string(i);
      Obj m(arr[i], path);
      ModelSpec spec;
      spec.type = m.str("type");
      spec.name = m.str("name", spec.type);
      spec.backbone = m.str("backbone", spec.type == "transformer" ? "ViT (UAV)" : "ResNet50");
      spec.features = resolve(base_dir, m.str("features"));
      if (!names.insert(spec.name).second) fail(ErrorKind::kConfig, path + ".name: duplicate model name");
      for (char ch : spec.name) {
        if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_' && ch != '-') {
          fail(ErrorKind::kConfig, path + ".name: use letters, digits, '_' or '-'");
        }
      }
      auto c = m.sub("config");
      if (spec.type == "transformer") {
        auto& t = spec.transformer;
        t.layers = c.uint("layers", t.layers);
        t.heads = c.uint("heads", t.heads);
        t.ffn_dim = c.uint("ffn_dim", t.ffn_dim);
        t.regional_patches = c.uint("regional_patches", t.regional_patches);
        t.local_patches = c.uint("local_patches", t.local_patches);
        t.dropout = c.num("dropout", t.dropout);
        t.embedding_frozen = c.boolean("embedding_frozen", t.embedding_frozen);
      } else if (spec.type == "lstm") {
        auto& l = spec.lstm;
        l.hidden = c.uint("hidden", l.hidden);
        l.fusion_dim = c.uint("fusion_dim", l.fusion_dim);
        l.dropout = c.num("dropout", l.dropout);
        l.embedding_frozen = c.boolean("embedding_frozen", l.embedding_frozen);
      } else {
        fail(ErrorKind::kConfig, path + ".type: expected \"transformer\" or \"lstm\"");
      }
      c.done();
      m.done();
      cfg.models.push_back(std::move(spec));
    }
  }
  cfg.kg_variants = top.strings("kg", {"with", "without"});
  if (cfg.kg_variants.empty()) fail(ErrorKind::kConfig, "kg: at least one variant required");
  for (const auto& kg : cfg.kg_variants) {
    if (kg != "with" && kg != "without") fail(ErrorKind::kConfig, "kg: expected \"with\" or \"without\", got '" + kg + "'");
  }
  if (std::set<std::string>(cfg.kg_variants.begin(), cfg.kg_variants.end()).size() != cfg.kg_variants.size()) {
    fail(ErrorKind::kConfig, "kg: duplicate variant");
  }
  {
    auto t = top.sub("training");
    auto phase = [&](const std::string& key, TrainPhase def) {
      auto p = t.sub(key);
      def.learning_rate = p.num("learning_rate", def.learning_rate);
      def.epochs = p.uint("epochs", def.epochs);
      p.done();
      return def;
    };
    cfg.schedule.phase1 = phase("phase1", cfg.schedule.phase1);
    cfg.schedule.phase2 = phase("phase2", cfg.schedule.phase2);
    cfg.schedule.batch_size = t.uint("batch_size", cfg.schedule.batch_size);
    cfg.schedule.target_loss = t.num("target_loss", cfg.schedule.target_loss);
    cfg.schedule.prefetch = t.uint("prefetch", cfg.schedule.prefetch);
    t.done();
    try {
      cfg.schedule.validate();
    } catch (const Error& e) {
      fail(ErrorKind::kConfig, "training: " + e.detail());
    }
  }
  {
    auto g = top.sub("generation");
    cfg.generate_split = g.str("split", "test");
    if (cfg.generate_split != "test" && cfg.generate_split != "all") {
      fail(ErrorKind::kConfig, "generation.split: expected \"test\" or \"all\"");
    }
    cfg.max_len = g.uint("max_len", kDefaultMaxSeqLen);
    g.done();
  }
  {
    auto e = top.sub("evaluation");
    const auto mode = e.str("mode", "product");
    if (mode == "product") {
      cfg.eval.mode = ScoreMode::kProduct;
    } else if (mode == "weighted") {
      cfg.eval.mode = ScoreMode::kWeighted;
    } else {
      fail(ErrorKind::kConfig, "evaluation.mode: expected \"product\" or \"weighted\"");
    }
    cfg.eval.alpha = e.opt_num("alpha");
    cfg.eval.beta = e.opt_num("beta");
    cfg.eval.gamma = e.opt_num("gamma");
    cfg.eval.rescale_clip = e.boolean("rescale_clip", false);
    cfg.corpus_name = e.str("corpus_name", cfg.frequency.filename().string());
    if (e.has("baselines")) {
      const auto& arr = e.at("baselines");
      if (!arr.is_array()) fail(ErrorKind::kConfig, "evaluation.baselines: expected an array");
      std::set<std::string> names;
      for (std::size_t i = 0; i < arr.size(); ++i) {
        Obj b(arr[i], "evaluation.baselines." + std::to_string(i));
        BaselineSpec spec{b.str("name"), ""};
        spec.column = b.str("column", spec.name);
        if (!names.insert(spec.name).second) fail(ErrorKind::kConfig, "evaluation.baselines." + std::to_string(i) + ".name: duplicate");
        b.done();
        cfg.baselines.push_back(std::move(spec));
      }
    }
    e.done();
    try {
      cfg.eval.validate();
    } catch (const Error& err) {
      fail(ErrorKind::kConfig, "evaluation: " + err.detail());
    }
  }
  top.done();
  cfg.canonical_json = root.dump();
  return cfg;
}

PipelineConfig load_pipeline_config(const fs::path& file, const std::vector<std::string>& overrides) {
  if (!fs::exists(file)) fail(ErrorKind::kConfig, "config file " + file.string() + " not found");
  const auto base = fs::absolute(file).parent_path();
  try {
    return parse_pipeline_config(io::read_file(file), base, overrides);
  } catch (const Error& e) {
    fail(e.kind(), file.string() + ": " + e.detail());
  }
}

void validate_paths(const PipelineConfig& cfg) {
  auto check = [](const fs::path& p, const std::string& key) {
    if (!fs::is_regular_file(p)) fail(ErrorKind::kConfig, key + ": " + p.string() + " does not exist");
  };
  check(cfg.captions, "paths.captions");
  check(cfg.stopwords, "paths.stopwords");
  check(cfg.vectors, "paths.vectors");
  check(cfg.lexical, "paths.lexical");
  if (cfg.concept_source == "file") check(cfg.concepts, "paths.concepts");
  check(cfg.frequency, "paths.frequency");
  check(cfg.clip_image, "paths.clip_image");
  if (cfg.contextual) check(*cfg.contextual, "paths.contextual");
  for (std::size_t i = 0; i < cfg.models.size(); ++i) check(cfg.models[i].features, "models." + std::to_string(i) + ".features");
}

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::kPreprocess: return "preprocess";
    case Stage::kKeywords: return "keywords";
    case Stage::kEnrich: return "enrich";
    case Stage::kEmbed: return "embed";
    case Stage::kTrain: return "train";
    case Stage::kGenerate: return "generate";
    case Stage::kEvaluate: return "evaluate";
    case Stage::kReport: return "report";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view name) {
  for (auto s : kAllStages) {
    if (stage_name(s) == name) return s;
  }
  return std::nullopt;
}

void run_stage(const PipelineConfig& cfg, Stage stage, const RunOptions& options) {
  validate_paths(cfg);
  StageRun run(cfg, stage, options);
  switch (stage) {
    case Stage::kPreprocess: stage_preprocess(cfg, run); break;
    case Stage::kKeywords: stage_keywords(cfg, run); break;
    case Stage::kEnrich: stage_enrich(cfg, run); break;
    case Stage::kEmbed: stage_embed(cfg, run); break;
    case Stage::kTrain: stage_train(cfg, run); break;
    case Stage::kGenerate: stage_generate(cfg, run); break;
    case Stage::kEvaluate: stage_evaluate(cfg, run); break;
    case Stage::kReport: stage_report(cfg, run); break;
  }
  run.finish();
}

void run_pipeline(const PipelineConfig& cfg, const RunOptions& options) {
  validate_paths(cfg);
  for (auto s : kAllStages) {
    // The without-KG path never reads enrichment, but the stage still runs so
    // every artifact of a pipeline run exists.
    run_stage(cfg, s, options);
  }
}

std::string manifest_lineage(const fs::path& out_dir) {
  std::string out;
  for (auto s : kAllStages) {
    const auto p = out_dir / stage_name(s) / "manifest.json";
    if (!fs::exists(p)) {
      out += stage_name(s) + ": not run\n";
      continue;
    }
    json m;
    try {
      m = json::parse(io::read_file(p));
    } catch (const json::parse_error& e) {
      fail(ErrorKind::kFormat, p.string() + ": " + e.what());
    }
    out += stage_name(s) + ": config " + m.value("config_hash", "?") + ", seed " + std::to_string(m.value("seed", 0ULL)) +
           ", " + io::format_double(m.value("seconds", 0.0)) + " s\n";
    for (const auto& f : m.at("inputs")) out += "  < " + f.at("path").get<std::string>() + " " + f.at("fnv1a64").get<std::string>() + "\n";
    for (const auto& f : m.at("outputs")) out += "  > " + f.at("path").get<std::string>() + " " + f.at("fnv1a64").get<std::string>() + "\n";
  }
  return out;
}

// ---- artifact codecs -----------------------------------------------------------

std::string corpus_to_csv(const std::vector<CaptionRecord>& records) {
  std::string out = "image,caption,tokens,objects,missing_feature,empty_caption\n";
  for (const auto& r : records) {
    out += io::csv_line({r.image_id, r.raw_caption, join(r.clean_tokens),
                         join(r.detector_labels, ';'), r.missing_feature ? "1" : "0",
                         r.empty_caption ? "1" : "0"});
  }
  return out;
}

std::vector<CaptionRecord> corpus_from_csv(std::string_view text) {
  const auto rows = io::parse_csv(text);
  const std::vector<std::string> header{"image", "caption", "tokens", "objects", "missing_feature", "empty_caption"};
  if (rows.empty() || rows.front().fields != header) fail(ErrorKind::kFormat, "corpus artifact has an unexpected header");
  auto split = [](const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
      if (!item.empty()) out.push_back(item);
    }
    return out;
  };
  std::vector<CaptionRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    if (f.size() != header.size()) fail(ErrorKind::kFormat, "corpus artifact line " + std::to_string(rows[i].line) + ": wrong field count");
    CaptionRecord r;
    r.image_id = f[0];
    r.raw_caption = f[1];
    r.clean_tokens = split(f[2], ' ');
    r.detector_labels = split(f[3], ';');
    r.missing_feature = f[4] == "1";
    r.empty_caption = f[5] == "1";
    out.push_back(std::move(r));
  }
  return out;
}

std::string records_to_csv(const std::vector<EvalRecord>& records) {
  std::string out = "image_id,clip_score,informativeness,infometic,scored,error\n";
  for (const auto& r : records) {
    out += io::csv_line({r.image_id, io::format_double(r.clip_score), io::format_double(r.informativeness),
                         io::format_double(r.infometic), r.scored ? "1" : "0", r.error});
  }
  return out;
}

std::vector<EvalRecord> records_from_csv(std::string_view text) {
  const auto rows = io::parse_csv(text);
  const std::vector<std::string> header{"image_id", "clip_score", "informativeness", "infometic", "scored", "error"};
  if (rows.empty() || rows.front().fields != header) fail(ErrorKind::kFormat, "score artifact has an unexpected header");
  auto num = [](const std::string& s, std::size_t line) {
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      fail(ErrorKind::kFormat, "score artifact line " + std::to_string(line) + ": bad number '" + s + "'");
    }
  };
  std::vector<EvalRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    if (f.size() != header.size()) fail(ErrorKind::kFormat, "score artifact line " + std::to_string(rows[i].line) + ": wrong field count");
    EvalRecord r;
    r.image_id = f[0];
    r.clip_score = num(f[1], rows[i].line);
    r.informativeness = num(f[2], rows[i].line);
    r.infometic = num(f[3], rows[i].line);
    r.scored = f[4] == "1";
    r.error = f[5];
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace vlce

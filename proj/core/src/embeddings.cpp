#include "vlce/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <json.hpp>

#include "vlce/error.hpp"
#include "vlce/io.hpp"
#include "vlce/rng.hpp"

namespace vlce {
namespace {

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

// One float in (-eps, eps) after rounding to f32.
float draw_uniform(Rng& rng, double epsilon) {
  while (true) {
    const auto v = static_cast<float>(rng.uniform(-epsilon, epsilon));
    if (std::abs(static_cast<double>(v)) < epsilon) return v;
  }
}

void fill_random(std::span<float> row, Rng& rng, double epsilon) {
  for (auto& v : row) v = draw_uniform(rng, epsilon);
}

const char* source_name(RowSource s) {
  switch (s) {
    case RowSource::kPad: return "pad";
    case RowSource::kExact: return "exact";
    case RowSource::kPrefix: return "prefix";
    case RowSource::kRandom: return "random";
  }
  return "random";
}

template <typename T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::kShape, "cosine of vectors with " + std::to_string(a.size()) + " and " + std::to_string(b.size()) + " components");
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) fail(ErrorKind::kUndefinedSimilarity, "cosine similarity with a zero-norm vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

}  // namespace

void VectorTable::add(std::string key, std::span<const float> vector) {
  if (vector.size() != dim_) {
    fail(ErrorKind::kData, "vector for '" + key + "' has " + std::to_string(vector.size()) + " components, table dim is " +
                               std::to_string(dim_));
  }
  for (float v : vector) {
    if (!std::isfinite(v)) fail(ErrorKind::kData, "non-finite component in vector for '" + key + "'");
  }
  if (index_.contains(key)) fail(ErrorKind::kConflict, "duplicate table key '" + key + "'");
  index_.emplace(key, keys_.size());
  keys_.push_back(std::move(key));
  values_.insert(values_.end(), vector.begin(), vector.end());
}

std::optional<std::span<const float>> VectorTable::find(std::string_view key) const {
  auto it = index_.find(std::string(key));
  if (it == index_.end()) return std::nullopt;
  return std::span<const float>(values_).subspan(it->second * dim_, dim_);
}

VectorTable parse_vector_table(std::string_view text, std::string source_name) {
  auto lines = io::split_lines(text);
  std::size_t first = 0;
  std::size_t dim = 0;
  while (first < lines.size() && io::trim(lines[first]).empty()) ++first;
  if (first < lines.size()) {
    auto f = split_ws(lines[first]);
    std::size_t count = 0, d = 0;
    if (f.size() == 2 && parse_number(f[0], count) && parse_number(f[1], d)) {
      dim = d;
      ++first;
    }
  }
  VectorTable table;
  bool initialized = false;
  std::vector<float> buf;
  for (std::size_t i = first; i < lines.size(); ++i) {
    auto f = split_ws(lines[i]);
    if (f.empty()) continue;
    const auto line_no = std::to_string(i + 1);
    if (f.size() < 2) fail(ErrorKind::kFormat, "vector table line " + line_no + ": no components");
    if (!initialized) {
      if (dim == 0) dim = f.size() - 1;
      table = VectorTable(dim, source_name);
      initialized = true;
    }
    if (f.size() - 1 != dim) {
      fail(ErrorKind::kFormat, "vector table line " + line_no + ": " + std::to_string(f.size() - 1) +
                                   " components, expected " + std::to_string(dim));
    }
    std::string_view key = f[0];
    if (key.starts_with("/c/en/")) key.remove_prefix(6);
    buf.resize(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      if (!parse_number(f[k + 1], buf[k])) {
        fail(ErrorKind::kFormat, "vector table line " + line_no + ": bad number '" + std::string(f[k + 1]) + "'");
      }
    }
    try {
      table.add(std::string(key), buf);
    } catch (const Error& e) {
      throw Error(e.kind(), "vector table line " + line_no + ": " + e.detail());
    }
  }
  if (!initialized) table = VectorTable(dim, source_name);
  return table;
}

VectorTable load_vector_table(const std::filesystem::path& path) {
  try {
    return parse_vector_table(io::read_file(path), path.filename().string());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

std::optional<std::string> longest_prefix_key(const VectorTable& table, std::string_view token) {
  if (token.size() <= kMinPrefixLength) return std::nullopt;
  // Only one key can match per length, so the lexicographic tie-break never
  // has to choose.
  for (std::size_t len = token.size() - 1; len >= kMinPrefixLength; --len) {
    const auto candidate = token.substr(0, len);
    if (table.find(candidate)) return std::string(candidate);
  }
  return std::nullopt;
}

EmbeddingMatrix build_matrix(const Vocabulary& vocab, const VectorTable& table, double epsilon, std::uint64_t seed) {
  if (!(epsilon > 0.0)) fail(ErrorKind::kConfig, "embedding epsilon must be positive");
  EmbeddingMatrix m;
  m.rows = vocab.index_space();
  m.dim = table.dim();
  m.epsilon = epsilon;
  m.seed = seed;
  m.values.assign(m.rows * m.dim, 0.0f);
  m.provenance.resize(m.rows);
  m.provenance[0] = {RowSource::kPad, {}};
  Rng rng(seed);
  for (std::size_t i = 1; i < m.rows; ++i) {
    const auto idx = static_cast<std::int32_t>(i);
    const auto& token = vocab.word(idx);
    std::span<float> row(m.values.data() + i * m.dim, m.dim);
    if (!vocab.is_boundary(idx)) {
      if (auto v = table.find(token)) {
        std::copy(v->begin(), v->end(), row.begin());
        m.provenance[i] = {RowSource::kExact, token};
        continue;
      }
      if (auto key = longest_prefix_key(table, token)) {
        auto v = *table.find(*key);
        std::copy(v.begin(), v.end(), row.begin());
        m.provenance[i] = {RowSource::kPrefix, *key};
        continue;
      }
    }
    fill_random(row, rng, epsilon);
    m.provenance[i] = {RowSource::kRandom, {}};
  }
  return m;
}

EmbeddingMatrix build_matrix_from_provider(const Vocabulary& vocab, const EmbeddingProvider& provider, double epsilon,
                                           std::uint64_t seed) {
  if (!(epsilon > 0.0)) fail(ErrorKind::kConfig, "embedding epsilon must be positive");
  EmbeddingMatrix m;
  m.rows = vocab.index_space();
  m.dim = provider.dim();
  m.epsilon = epsilon;
  m.seed = seed;
  m.values.assign(m.rows * m.dim, 0.0f);
  m.provenance.resize(m.rows);
  m.provenance[0] = {RowSource::kPad, {}};
  Rng rng(seed);
  for (std::size_t i = 1; i < m.rows; ++i) {
    const auto idx = static_cast<std::int32_t>(i);
    std::span<float> row(m.values.data() + i * m.dim, m.dim);
    if (!vocab.is_boundary(idx)) {
      if (auto v = provider.embed_word(vocab.word(idx)); v && v->size() == m.dim) {
        std::copy(v->begin(), v->end(), row.begin());
        m.provenance[i] = {RowSource::kExact, vocab.word(idx)};
        continue;
      }
    }
    fill_random(row, rng, epsilon);
    m.provenance[i] = {RowSource::kRandom, {}};
  }
  return m;
}

CoverageReport coverage_report(const EmbeddingMatrix& matrix) {
  CoverageReport r;
  for (const auto& p : matrix.provenance) {
    switch (p.source) {
      case RowSource::kExact: ++r.exact; break;
      case RowSource::kPrefix: ++r.prefix; break;
      case RowSource::kRandom: ++r.random; break;
      case RowSource::kPad: break;
    }
  }
  return r;
}

double cosine_similarity(std::span<const float> a, std::span<const float> b) { return cosine_impl(a, b); }
double cosine_similarity(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b); }

std::optional<std::vector<float>> MeanWordVectorProvider::embed_word(std::string_view word) const {
  auto v = table_.find(word);
  if (!v) {
    if (auto key = longest_prefix_key(table_, word)) v = table_.find(*key);
  }
  if (!v) return std::nullopt;
  return std::vector<float>(v->begin(), v->end());
}

std::optional<std::vector<float>> MeanWordVectorProvider::embed_text(const std::vector<std::string>& tokens) const {
  std::vector<double> acc(table_.dim(), 0.0);
  std::size_t n = 0;
  for (const auto& t : tokens) {
    auto v = embed_word(t);
    if (!v) continue;
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += (*v)[k];
    ++n;
  }
  if (n == 0) return std::nullopt;
  std::vector<float> out(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k) out[k] = static_cast<float>(acc[k] / static_cast<double>(n));
  return out;
}

std::optional<std::vector<float>> FeatureStoreProvider::embed_word(std::string_view word) const {
  auto v = store_.find(word);
  if (!v) return std::nullopt;
  return std::vector<float>(v->begin(), v->end());
}

std::optional<std::vector<float>> FeatureStoreProvider::embed_text(const std::vector<std::string>& tokens) const {
  std::vector<double> acc(store_.dim(), 0.0);
  std::size_t n = 0;
  for (const auto& t : tokens) {
    auto v = store_.find(t);
    if (!v) continue;
    for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += (*v)[k];
    ++n;
  }
  if (n == 0) return std::nullopt;
  std::vector<float> out(acc.size());
  for (std::size_t k = 0; k < acc.size(); ++k) out[k] = static_cast<float>(acc[k] / static_cast<double>(n));
  return out;
}

std::optional<std::vector<float>> FeatureStoreProvider::embed_caption(std::string_view image_id,
                                                                      const std::vector<std::string>& tokens) const {
  (void)tokens;
  return embed_word(image_id);
}

void save_embedding_matrix(const EmbeddingMatrix& matrix, const Vocabulary& vocab, const std::filesystem::path& vlcf_path,
                           const std::filesystem::path& sidecar_path) {
  if (matrix.rows != vocab.index_space()) fail(ErrorKind::kShape, "embedding matrix rows do not match vocabulary");
  FeatureStore store(static_cast<std::uint32_t>(matrix.dim));
  for (std::size_t i = 0; i < matrix.rows; ++i) {
    store.add(i == 0 ? std::string("<pad>") : vocab.word(static_cast<std::int32_t>(i)), matrix.row(i));
  }
  save_feature_store(store, vlcf_path);

  const auto cov = coverage_report(matrix);
  nlohmann::ordered_json j;
  j["seed"] = matrix.seed;
  j["epsilon"] = matrix.epsilon;
  j["frozen"] = matrix.frozen;
  j["rows"] = matrix.rows;
  j["dim"] = matrix.dim;
  j["histogram"] = {{"exact", cov.exact}, {"prefix", cov.prefix}, {"random", cov.random}};
  auto prov = nlohmann::ordered_json::array();
  for (std::size_t i = 1; i < matrix.rows; ++i) {
    const auto& p = matrix.provenance[i];
    nlohmann::ordered_json row;
    row["token"] = vocab.word(static_cast<std::int32_t>(i));
    row["source"] = source_name(p.source);
    if (!p.key.empty()) row["key"] = p.key;
    prov.push_back(std::move(row));
  }
  j["provenance"] = std::move(prov);
  io::write_file(sidecar_path, j.dump(2) + "\n");
}

EmbeddingMatrix load_embedding_matrix(const Vocabulary& vocab, const std::filesystem::path& vlcf_path,
                                      const std::filesystem::path& sidecar_path) {
  const auto store = load_feature_store(vlcf_path);
  if (store.size() != vocab.index_space()) {
    fail(ErrorKind::kData, vlcf_path.string() + ": " + std::to_string(store.size()) + " rows, vocabulary needs " +
                               std::to_string(vocab.index_space()));
  }
  EmbeddingMatrix m;
  m.rows = store.size();
  m.dim = store.dim();
  m.values.reserve(m.rows * m.dim);
  for (std::size_t i = 0; i < m.rows; ++i) {
    const auto expected = i == 0 ? std::string("<pad>") : vocab.word(static_cast<std::int32_t>(i));
    if (store.ids()[i] != expected) fail(ErrorKind::kData, vlcf_path.string() + ": row " + std::to_string(i) + " is '" +
                                                               store.ids()[i] + "', expected '" + expected + "'");
    auto r = store.row(i);
    m.values.insert(m.values.end(), r.begin(), r.end());
  }
  m.provenance.resize(m.rows);
  m.provenance[0] = {RowSource::kPad, {}};
  try {
    auto j = nlohmann::json::parse(io::read_file(sidecar_path));
    m.seed = j.at("seed").get<std::uint64_t>();
    m.epsilon = j.at("epsilon").get<double>();
    m.frozen = j.at("frozen").get<bool>();
    const auto& prov = j.at("provenance");
    if (prov.size() + 1 != m.rows) fail(ErrorKind::kData, sidecar_path.string() + ": provenance length mismatch");
    for (std::size_t i = 1; i < m.rows; ++i) {
      const auto& p = prov[i - 1];
      const auto s = p.at("source").get<std::string>();
      RowProvenance rp;
      rp.source = s == "exact" ? RowSource::kExact : s == "prefix" ? RowSource::kPrefix : RowSource::kRandom;
      rp.key = p.value("key", "");
      m.provenance[i] = std::move(rp);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, sidecar_path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace vlce

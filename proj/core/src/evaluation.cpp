#include "vlce/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <charconv>

#include <json.hpp>

#include "vlce/error.hpp"
#include "vlce/io.hpp"
#include "vlce/parallel.hpp"

namespace vlce {
namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  std::string s(buf);
  if (s == "-0.00" || s == "-0") s.erase(0, 1);
  return s;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

// Scored records by id, sorted.
std::map<std::string, const EvalRecord*> by_id(const std::vector<EvalRecord>& records) {
  std::map<std::string, const EvalRecord*> out;
  for (const auto& r : records) {
    if (!out.emplace(r.image_id, &r).second) fail(ErrorKind::kConflict, "image '" + r.image_id + "' scored twice");
  }
  return out;
}

std::vector<double> scored_values(const std::vector<EvalRecord>& records, Metric m) {
  std::vector<double> out;
  for (const auto& [id, r] : by_id(records)) {
    if (r->scored) out.push_back(metric_value(*r, m));
  }
  return out;
}

double mean_in_order(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

// ---- frequency table ----------------------------------------------------------

void FrequencyTable::add(std::string word, std::uint64_t count) {
  if (count < 1) fail(ErrorKind::kData, "frequency of '" + word + "' must be >= 1");
  if (counts_.contains(word)) fail(ErrorKind::kConflict, "word '" + word + "' listed twice in frequency table");
  total_ += count;
  counts_.emplace(std::move(word), count);
}

std::uint64_t FrequencyTable::count(std::string_view word) const {
  auto it = counts_.find(std::string(word));
  return it == counts_.end() ? 0 : it->second;
}

double FrequencyTable::probability(std::string_view word) const {
  const auto c = count(word);
  if (c > 0) return static_cast<double>(c) / static_cast<double>(total_);
  return 1.0 / static_cast<double>(total_ + counts_.size());
}

FrequencyTable parse_frequency_table(std::string_view text) {
  FrequencyTable table;
  std::size_t line_no = 0;
  bool first = true;
  for (const auto& raw : io::split_lines(text)) {
    ++line_no;
    const auto line = io::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const bool header_allowed = std::exchange(first, false);
    const auto tab = line.find('\t');
    if (tab == std::string::npos) fail(ErrorKind::kParse, "frequency table line " + std::to_string(line_no) + ": expected word<TAB>count");
    const auto word = lower(io::trim(line.substr(0, tab)));
    const auto count_text = io::trim(line.substr(tab + 1));
    if (header_allowed && word == "word" && count_text == "count") continue;
    std::uint64_t count = 0;
    auto [p, ec] = std::from_chars(count_text.data(), count_text.data() + count_text.size(), count);
    if (ec != std::errc() || p != count_text.data() + count_text.size() || word.empty()) {
      fail(ErrorKind::kParse, "frequency table line " + std::to_string(line_no) + ": bad entry '" + line + "'");
    }
    table.add(word, count);
  }
  if (table.total() == 0) fail(ErrorKind::kData, "frequency table is empty");
  return table;
}

FrequencyTable load_frequency_table(const std::filesystem::path& path) {
  try {
    return parse_frequency_table(io::read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    fail(e.kind(), path.string() + ": " + e.detail());
  }
}

// ---- scoring ------------------------------------------------------------------

void EvalConfig::validate() const {
  if (mode == ScoreMode::kWeighted && !(alpha && beta && gamma)) {
    fail(ErrorKind::kConfig, "weighted InfoMetIC needs alpha, beta and gamma");
  }
}

double informativeness(std::span<const std::string> tokens, const FrequencyTable& freq) {
  double total = 0.0;
  for (const auto& w : tokens) total -= std::log(freq.probability(w));
  return total;
}

double clip_score(std::span<const float> image, std::span<const float> text, bool rescale) {
  const double c = cosine_similarity(image, text);
  return rescale ? 2.5 * std::max(c, 0.0) : c;
}

double infometic(double relevance, double info, const EvalConfig& cfg) {
  if (cfg.mode == ScoreMode::kProduct) return relevance * info;
  const double precision = relevance;
  return *cfg.alpha * info + *cfg.beta * relevance + *cfg.gamma * precision;
}

std::vector<CaptionEntry> parse_caption_set(std::string_view csv_text, const std::string& id_column,
                                            const std::string& caption_column) {
  const auto rows = io::parse_csv(csv_text);
  if (rows.empty()) fail(ErrorKind::kSchema, "caption CSV has no header");
  const auto& header = rows.front().fields;
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::kSchema, "caption CSV lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto id_col = column(id_column);
  const auto cap_col = column(caption_column);
  std::vector<CaptionEntry> out;
  std::set<std::string> seen;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    if (f.size() != header.size()) {
      fail(ErrorKind::kParse, "line " + std::to_string(rows[i].line) + ": expected " + std::to_string(header.size()) +
                                  " fields, got " + std::to_string(f.size()));
    }
    CaptionEntry e;
    e.image_id = image_id_from_filename(f[id_col]);
    if (!seen.insert(e.image_id).second) fail(ErrorKind::kConflict, "image '" + e.image_id + "' appears twice");
    e.raw = f[cap_col];
    e.tokens = preprocess_caption(e.raw);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<CaptionEntry> load_caption_set(const std::filesystem::path& path, const std::string& id_column,
                                           const std::string& caption_column) {
  try {
    return parse_caption_set(io::read_file(path), id_column, caption_column);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    fail(e.kind(), path.string() + ": " + e.detail());
  }
}

std::string caption_set_csv(const std::vector<CaptionEntry>& captions) {
  std::string out = "image,caption\n";
  for (const auto& c : captions) out += io::csv_line({c.image_id, c.raw});
  return out;
}

std::vector<EvalRecord> score_caption_set(const std::vector<CaptionEntry>& captions, const FeatureStore& image_features,
                                          const EmbeddingProvider& text_provider, const FrequencyTable& freq,
                                          const EvalConfig& cfg, std::size_t jobs) {
  cfg.validate();
  if (image_features.dim() != text_provider.dim()) {
    fail(ErrorKind::kShape, "image vectors are " + std::to_string(image_features.dim()) + "-d, text vectors " +
                                std::to_string(text_provider.dim()) + "-d");
  }
  std::vector<EvalRecord> out(captions.size());
  parallel_for(captions.size(), static_cast<unsigned>(jobs), [&](std::size_t i) {
    const auto& c = captions[i];
    auto& r = out[i];
    r.image_id = c.image_id;
    r.informativeness = informativeness(c.tokens, freq);
    auto image = image_features.find(c.image_id);
    if (!image) {
      r.error = "missing image feature";
      return;
    }
    auto text = text_provider.embed_caption(c.image_id, c.tokens);
    if (!text) {
      r.error = "caption has no embeddable token";
      return;
    }
    try {
      r.clip_score = clip_score(*image, *text, cfg.rescale_clip);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kUndefinedSimilarity) throw;
      r.error = "zero-norm vector";
      return;
    }
    r.infometic = infometic(r.clip_score, r.informativeness, cfg);
    r.scored = true;
  });
  return out;
}

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::kClipScore: return "clipscore";
    case Metric::kInformativeness: return "informativeness";
    case Metric::kInfometic: return "infometic";
  }
  return "?";
}

double metric_value(const EvalRecord& r, Metric m) {
  switch (m) {
    case Metric::kClipScore: return r.clip_score;
    case Metric::kInformativeness: return r.informativeness;
    case Metric::kInfometic: return r.infometic;
  }
  return 0.0;
}

Comparison compare_sets(const std::vector<EvalRecord>& custom, const std::vector<EvalRecord>& baseline, Metric metric) {
  Comparison c;
  c.metric = metric;
  const auto a = by_id(custom);
  const auto b = by_id(baseline);
  for (const auto& [id, rec] : a) {
    auto it = b.find(id);
    if (it == b.end()) {
      c.orphans_custom.push_back(id);
      continue;
    }
    if (!rec->scored || !it->second->scored) {
      c.unscored.push_back(id);
      continue;
    }
    const int better = metric_value(*rec, metric) > metric_value(*it->second, metric) ? 1 : 0;
    c.better.emplace(id, better);
    c.n_better += static_cast<std::size_t>(better);
    ++c.n;
  }
  for (const auto& [id, rec] : b) {
    if (!a.contains(id)) c.orphans_baseline.push_back(id);
  }
  c.percentage = c.n ? 100.0 * static_cast<double>(c.n_better) / static_cast<double>(c.n) : 0.0;
  return c;
}

NounCoverage noun_coverage(const std::vector<CaptionEntry>& captions, const LexicalSource& lexical,
                           const StopwordSet& stopwords) {
  NounCoverage out;
  std::set<std::string> checked;
  for (const auto& c : captions) {
    for (const auto& t : c.tokens) {
      if (!checked.insert(t).second || stopwords.contains(t)) continue;
      auto entry = lexical.lookup(t);
      if (entry && entry->is_noun()) out.nouns.insert(t);
    }
  }
  out.count = out.nouns.size();
  return out;
}

Histogram make_histogram(std::span<const double> custom, std::span<const double> baseline, std::size_t bins) {
  if (bins == 0) fail(ErrorKind::kConfig, "histogram needs at least one bin");
  Histogram h;
  h.custom.assign(bins, 0);
  h.baseline.assign(bins, 0);
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (auto side : {custom, baseline}) {
    for (double v : side) {
      lo = any ? std::min(lo, v) : v;
      hi = any ? std::max(hi, v) : v;
      any = true;
    }
  }
  h.lower = lo;
  h.width = hi > lo ? (hi - lo) / static_cast<double>(bins) : 1.0 / static_cast<double>(bins);
  auto bin_of = [&](double v) {
    if (!(hi > lo)) return std::size_t{0};
    auto k = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    return std::min(k, bins - 1);
  };
  for (double v : custom) ++h.custom[bin_of(v)];
  for (double v : baseline) ++h.baseline[bin_of(v)];
  return h;
}

// ---- reports ------------------------------------------------------------------

std::string scores_csv(const ReportInput& input) {
  const auto a = by_id(input.custom);
  const auto b = by_id(input.baseline);
  std::set<std::string> ids;
  for (const auto& [id, r] : a) ids.insert(id);
  for (const auto& [id, r] : b) ids.insert(id);
  std::vector<Comparison> comps;
  for (auto m : kAllMetrics) comps.push_back(compare_sets(input.custom, input.baseline, m));

  std::vector<std::string> header{"image_id"};
  for (const auto* side : {"custom", "baseline"}) {
    for (auto m : kAllMetrics) header.push_back(std::string(side) + "_" + metric_name(m));
    header.push_back(std::string(side) + "_status");
  }
  for (auto m : kAllMetrics) header.push_back("better_" + metric_name(m));
  std::string out = io::csv_line(header);

  auto side_fields = [](const std::map<std::string, const EvalRecord*>& side, const std::string& id,
                        std::vector<std::string>& row) {
    auto it = side.find(id);
    if (it == side.end()) {
      for (std::size_t i = 0; i < std::size(kAllMetrics); ++i) row.emplace_back();
      row.emplace_back("absent");
      return;
    }
    const auto& r = *it->second;
    for (auto m : kAllMetrics) {
      const bool has = r.scored || m == Metric::kInformativeness;
      row.push_back(has ? io::format_double(metric_value(r, m)) : "");
    }
    row.push_back(r.scored ? "ok" : r.error);
  };
  for (const auto& id : ids) {
    std::vector<std::string> row{id};
    side_fields(a, id, row);
    side_fields(b, id, row);
    for (const auto& c : comps) {
      auto it = c.better.find(id);
      row.push_back(it == c.better.end() ? "" : std::to_string(it->second));
    }
    out += io::csv_line(row);
  }
  return out;
}

std::string summary_json(const ReportInput& input) {
  nlohmann::ordered_json j;
  j["log_base"] = "e";
  j["mode"] = input.config.mode == ScoreMode::kProduct ? "product" : "weighted";
  if (input.config.mode == ScoreMode::kWeighted) {
    j["weights"] = {{"alpha", *input.config.alpha}, {"beta", *input.config.beta}, {"gamma", *input.config.gamma}};
  }
  j["clip_rescaled"] = input.config.rescale_clip;
  j["corpus"] = input.corpus_name;
  j["custom"] = input.custom_name;
  j["baseline"] = input.baseline_name;
  j["n_custom"] = input.custom.size();
  j["n_baseline"] = input.baseline.size();
  auto metrics = nlohmann::ordered_json::object();
  for (auto m : kAllMetrics) {
    const auto c = compare_sets(input.custom, input.baseline, m);
    const auto cv = scored_values(input.custom, m);
    const auto bv = scored_values(input.baseline, m);
    nlohmann::ordered_json e;
    e["custom_mean"] = mean_in_order(cv);
    e["custom_median"] = median(cv);
    e["baseline_mean"] = mean_in_order(bv);
    e["baseline_median"] = median(bv);
    e["n_better"] = c.n_better;
    e["n"] = c.n;
    e["percentage_custom"] = c.percentage;
    e["percentage_baseline"] = 100.0 - c.percentage;
    metrics[metric_name(m)] = std::move(e);
  }
  j["metrics"] = std::move(metrics);
  const auto c = compare_sets(input.custom, input.baseline, Metric::kClipScore);
  j["orphans"] = {{"custom", c.orphans_custom}, {"baseline", c.orphans_baseline}};
  auto excluded = [](const std::vector<EvalRecord>& records) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& [id, r] : by_id(records)) {
      if (!r->scored) arr.push_back({{"image_id", id}, {"error", r->error}});
    }
    return arr;
  };
  j["excluded"] = {{"custom", excluded(input.custom)}, {"baseline", excluded(input.baseline)}};
  return j.dump(2) + "\n";
}

std::string histogram_csv(const Histogram& h, const std::string& custom_name, const std::string& baseline_name) {
  std::string out = io::csv_line({"bin", "lower", "upper", custom_name, baseline_name});
  for (std::size_t k = 0; k < h.custom.size(); ++k) {
    const double lo = h.lower + h.width * static_cast<double>(k);
    out += io::csv_line({std::to_string(k), io::format_double(lo), io::format_double(lo + h.width),
                         std::to_string(h.custom[k]), std::to_string(h.baseline[k])});
  }
  return out;
}

namespace {

constexpr double kSvgWidth = 640, kSvgHeight = 360, kMarginLeft = 50, kMarginRight = 20, kMarginTop = 40,
                 kMarginBottom = 50;
constexpr const char* kCustomColor = "#1f77b4";
constexpr const char* kBaselineColor = "#ff7f0e";

std::string svg_open(const std::string& title) {
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(kSvgWidth, 0) + "\" height=\"" +
                  fixed(kSvgHeight, 0) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect x=\"0\" y=\"0\" width=\"" + fixed(kSvgWidth, 0) + "\" height=\"" + fixed(kSvgHeight, 0) + "\" fill=\"white\"/>\n";
  s += "<text x=\"" + fixed(kSvgWidth / 2, 2) + "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" + xml_escape(title) +
       "</text>\n";
  return s;
}

std::string rect(double x, double y, double w, double h, const char* color) {
  return "<rect x=\"" + fixed(x, 2) + "\" y=\"" + fixed(y, 2) + "\" width=\"" + fixed(w, 2) + "\" height=\"" + fixed(h, 2) +
         "\" fill=\"" + color + "\"/>\n";
}

std::string text(double x, double y, const std::string& body, const char* anchor = "middle") {
  return "<text x=\"" + fixed(x, 2) + "\" y=\"" + fixed(y, 2) + "\" text-anchor=\"" + anchor + "\">" + xml_escape(body) +
         "</text>\n";
}

std::string axes() {
  const double x0 = kMarginLeft, y0 = kSvgHeight - kMarginBottom;
  return "<line x1=\"" + fixed(x0, 2) + "\" y1=\"" + fixed(kMarginTop, 2) + "\" x2=\"" + fixed(x0, 2) + "\" y2=\"" +
         fixed(y0, 2) + "\" stroke=\"black\"/>\n<line x1=\"" + fixed(x0, 2) + "\" y1=\"" + fixed(y0, 2) + "\" x2=\"" +
         fixed(kSvgWidth - kMarginRight, 2) + "\" y2=\"" + fixed(y0, 2) + "\" stroke=\"black\"/>\n";
}

std::string legend(const std::string& custom_name, const std::string& baseline_name) {
  const double x = kSvgWidth - kMarginRight - 150;
  std::string s = rect(x, 28, 10, 10, kCustomColor) + text(x + 14, 37, custom_name, "start");
  s += rect(x + 75, 28, 10, 10, kBaselineColor) + text(x + 89, 37, baseline_name, "start");
  return s;
}

}  // namespace

std::string histogram_svg(const Histogram& h, const std::string& title, const std::string& custom_name,
                          const std::string& baseline_name) {
  std::string s = svg_open(title) + axes() + legend(custom_name, baseline_name);
  std::size_t peak = 1;
  for (std::size_t k = 0; k < h.custom.size(); ++k) peak = std::max({peak, h.custom[k], h.baseline[k]});
  const double plot_w = kSvgWidth - kMarginLeft - kMarginRight;
  const double plot_h = kSvgHeight - kMarginTop - kMarginBottom;
  const double slot = plot_w / static_cast<double>(h.custom.size());
  const double y0 = kSvgHeight - kMarginBottom;
  for (std::size_t k = 0; k < h.custom.size(); ++k) {
    const double x = kMarginLeft + slot * static_cast<double>(k);
    const double hc = plot_h * static_cast<double>(h.custom[k]) / static_cast<double>(peak);
    const double hb = plot_h * static_cast<double>(h.baseline[k]) / static_cast<double>(peak);
    if (h.custom[k]) s += rect(x + 1, y0 - hc, slot / 2 - 1, hc, kCustomColor);
    if (h.baseline[k]) s += rect(x + slot / 2, y0 - hb, slot / 2 - 1, hb, kBaselineColor);
  }
  for (std::size_t k = 0; k <= h.custom.size(); k += 5) {
    const double x = kMarginLeft + slot * static_cast<double>(k);
    s += text(x, y0 + 15, fixed(h.lower + h.width * static_cast<double>(k), 3));
  }
  s += text(kMarginLeft - 5, kMarginTop + 4, std::to_string(peak), "end");
  s += text(kMarginLeft - 5, y0, "0", "end");
  s += "</svg>\n";
  return s;
}

std::string comparison_svg(const Comparison& c, const std::string& custom_name, const std::string& baseline_name) {
  std::string s = svg_open(metric_name(c.metric) + ": share of images where each side scores higher") + axes();
  const double plot_h = kSvgHeight - kMarginTop - kMarginBottom;
  const double y0 = kSvgHeight - kMarginBottom;
  const double values[2] = {c.percentage, 100.0 - c.percentage};
  const char* colors[2] = {kCustomColor, kBaselineColor};
  const std::string names[2] = {custom_name, baseline_name};
  const double bar_w = 120;
  for (int i = 0; i < 2; ++i) {
    const double x = kMarginLeft + 100 + i * 220;
    const double h = plot_h * values[i] / 100.0;
    s += rect(x, y0 - h, bar_w, h, colors[i]);
    s += text(x + bar_w / 2, y0 - h - 5, fixed(values[i], 2) + "%");
    s += text(x + bar_w / 2, y0 + 15, names[i]);
  }
  s += text(kMarginLeft - 5, kMarginTop + 4, "100", "end");
  s += text(kMarginLeft - 5, y0, "0", "end");
  s += text(kSvgWidth / 2, kSvgHeight - 12, "n = " + std::to_string(c.n) + " images");
  s += "</svg>\n";
  return s;
}

void emit_report(const ReportInput& input, const std::filesystem::path& out_dir) {
  input.config.validate();
  io::write_file(out_dir / "scores.csv", scores_csv(input));
  io::write_file(out_dir / "summary.json", summary_json(input));
  for (auto m : kAllMetrics) {
    const auto name = metric_name(m);
    const auto cv = scored_values(input.custom, m);
    const auto bv = scored_values(input.baseline, m);
    const auto h = make_histogram(cv, bv);
    io::write_file(out_dir / ("hist_" + name + ".csv"), histogram_csv(h, input.custom_name, input.baseline_name));
    io::write_file(out_dir / ("hist_" + name + ".svg"),
                   histogram_svg(h, name + " distribution", input.custom_name, input.baseline_name));
    io::write_file(out_dir / ("compare_" + name + ".svg"),
                   comparison_svg(compare_sets(input.custom, input.baseline, m), input.custom_name, input.baseline_name));
  }
}

std::string metric_table_csv(const std::vector<MetricTableRow>& rows) {
  std::string out = io::csv_line({"model", "baseline", "dataset", "kg", "backbone", "clipscore_custom_pct",
                                  "clipscore_baseline_pct", "infometic_custom_pct", "infometic_baseline_pct"});
  for (const auto& r : rows) {
    out += io::csv_line({r.model, r.baseline, r.dataset,
                         r.kg, r.backbone, fixed(r.clip_custom, 2),
                         fixed(r.clip_baseline(), 2), fixed(r.infometic_custom, 2), fixed(r.infometic_baseline(), 2)});
  }
  return out;
}

std::string noun_table_csv(const std::vector<NounTableRow>& rows) {
  std::vector<std::string> sources;
  for (const auto& r : rows) {
    for (const auto& [name, n] : r.baselines) {
      if (std::find(sources.begin(), sources.end(), name) == sources.end()) sources.push_back(name);
    }
  }
  std::vector<std::string> header{"exp", "dataset", "backbone", "model", "configuration", "custom"};
  for (const auto& s : sources) header.push_back(s);
  header.push_back("best_model");
  std::string out = io::csv_line(header);
  std::size_t exp = 0;
  for (const auto& r : rows) {
    std::vector<std::string> row{std::to_string(++exp), r.dataset, r.backbone,
                                 r.model, r.configuration, std::to_string(r.custom)};
    std::size_t best = r.custom;
    for (const auto& s : sources) {
      auto it = r.baselines.find(s);
      row.push_back(it == r.baselines.end() ? "" : std::to_string(it->second));
      if (it != r.baselines.end()) best = std::max(best, it->second);
    }
    std::string winners = r.custom == best ? "custom" : "";
    for (const auto& s : sources) {
      auto it = r.baselines.find(s);
      if (it != r.baselines.end() && it->second == best) winners += (winners.empty() ? "" : "/") + s;
    }
    row.push_back(winners);
    out += io::csv_line(row);
  }
  return out;
}

}  // namespace vlce

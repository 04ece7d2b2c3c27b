#include "vlce/keywords.hpp"

#include <algorithm>
#include <charconv>
#include <unordered_map>

#include "vlce/error.hpp"
#include "vlce/io.hpp"
#include "vlce/parallel.hpp"

namespace vlce {
namespace {

bool valid_keyword_token(const std::string& w) {
  if (w.size() < 2) return false;
  return std::all_of(w.begin(), w.end(), [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); });
}

}  // namespace

StopwordSet parse_stopwords(std::string_view text) {
  StopwordSet words;
  for (const auto& line : io::split_lines(text)) {
    auto w = io::trim(line);
    if (w.empty() || w.front() == '#') continue;
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    words.insert(std::move(w));
  }
  return words;
}

StopwordSet load_stopwords(const std::filesystem::path& path) { return parse_stopwords(io::read_file(path)); }

std::string KeywordPhrase::text() const {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

std::vector<KeywordPhrase> rake_caption(const std::vector<std::string>& tokens, const StopwordSet& stopwords,
                                        std::size_t top_k, std::string_view image_id) {
  std::vector<std::vector<std::string>> candidates;
  std::vector<std::string> run;
  auto close_run = [&] {
    if (!run.empty()) candidates.push_back(std::move(run));
    run.clear();
  };
  for (const auto& t : tokens) {
    if (stopwords.contains(t)) {
      close_run();
    } else {
      run.push_back(t);
    }
  }
  close_run();

  std::erase_if(candidates, [](const auto& phrase) { return !std::all_of(phrase.begin(), phrase.end(), valid_keyword_token); });

  std::unordered_map<std::string, double> freq;
  std::unordered_map<std::string, double> degree;
  for (const auto& phrase : candidates) {
    for (const auto& w : phrase) {
      freq[w] += 1.0;
      degree[w] += static_cast<double>(phrase.size());
    }
  }

  std::vector<KeywordPhrase> phrases;
  std::vector<std::string> seen;
  for (const auto& words : candidates) {
    KeywordPhrase p;
    p.words = words;
    p.source_image_id = std::string(image_id);
    const auto key = p.text();
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    for (const auto& w : words) p.score += degree[w] / freq[w];
    phrases.push_back(std::move(p));
  }
  std::sort(phrases.begin(), phrases.end(), [](const KeywordPhrase& a, const KeywordPhrase& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.text() < b.text();
  });
  if (phrases.size() > top_k) phrases.resize(top_k);
  return phrases;
}

std::map<std::string, std::vector<KeywordPhrase>> extract_keywords(const std::vector<CaptionRecord>& records,
                                                                   const StopwordSet& stopwords, std::size_t top_k,
                                                                   unsigned jobs) {
  if (stopwords.empty()) fail(ErrorKind::kConfig, "keyword extraction needs a non-empty stopword set");
  std::vector<std::vector<KeywordPhrase>> per_record(records.size());
  parallel_for(records.size(), jobs, [&](std::size_t i) {
    per_record[i] = rake_caption(records[i].clean_tokens, stopwords, top_k, records[i].image_id);
  });
  std::map<std::string, std::vector<KeywordPhrase>> out;
  for (std::size_t i = 0; i < records.size(); ++i) out[records[i].image_id] = std::move(per_record[i]);
  return out;
}

std::string keywords_to_csv(const std::map<std::string, std::vector<KeywordPhrase>>& keywords) {
  std::string out = "image,phrase,score\n";
  for (const auto& [id, phrases] : keywords) {
    for (const auto& p : phrases) out += io::csv_line({id, p.text(), io::format_double(p.score)});
  }
  return out;
}

std::map<std::string, std::vector<KeywordPhrase>> keywords_from_csv(std::string_view text) {
  auto rows = io::parse_csv(text);
  if (rows.empty() || rows[0].fields != std::vector<std::string>{"image", "phrase", "score"}) {
    fail(ErrorKind::kSchema, "keyword CSV must have header image,phrase,score");
  }
  std::map<std::string, std::vector<KeywordPhrase>> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    if (f.size() != 3) fail(ErrorKind::kParse, "line " + std::to_string(rows[r].line) + ": expected 3 fields");
    KeywordPhrase p;
    p.source_image_id = f[0];
    std::size_t start = 0;
    while (start < f[1].size()) {
      auto end = f[1].find(' ', start);
      if (end == std::string::npos) end = f[1].size();
      if (end > start) p.words.push_back(f[1].substr(start, end - start));
      start = end + 1;
    }
    auto [ptr, ec] = std::from_chars(f[2].data(), f[2].data() + f[2].size(), p.score);
    if (ec != std::errc() || ptr != f[2].data() + f[2].size()) {
      fail(ErrorKind::kParse, "line " + std::to_string(rows[r].line) + ": bad score '" + f[2] + "'");
    }
    out[f[0]].push_back(std::move(p));
  }
  return out;
}

}  // namespace vlce

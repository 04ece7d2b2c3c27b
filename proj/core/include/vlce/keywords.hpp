#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "vlce/corpus.hpp"

namespace vlce {

using StopwordSet = std::unordered_set<std::string>;

// One word per line; blank lines and lines starting with '#' are ignored.
StopwordSet parse_stopwords(std::string_view text);
StopwordSet load_stopwords(const std::filesystem::path& path);

struct KeywordPhrase {
  std::vector<std::string> words;
  double score = 0.0;
  std::string source_image_id;

  std::string text() const;  // words joined by a single space
};

// RAKE over each caption independently. Candidates are maximal runs of
// non-stopword tokens; word score = degree / frequency, where degree sums the
// lengths of the candidate occurrences containing the word. Distinct phrases
// are ranked by (score desc, text asc) and cut to top_k.
std::vector<KeywordPhrase> rake_caption(const std::vector<std::string>& tokens, const StopwordSet& stopwords,
                                        std::size_t top_k = 10, std::string_view image_id = {});

// kConfig when the stopword set is empty. `jobs` > 1 fans records out over
// worker threads; the result does not depend on it.
std::map<std::string, std::vector<KeywordPhrase>> extract_keywords(const std::vector<CaptionRecord>& records,
                                                                   const StopwordSet& stopwords, std::size_t top_k = 10,
                                                                   unsigned jobs = 1);

// CSV with header image,phrase,score.
std::string keywords_to_csv(const std::map<std::string, std::vector<KeywordPhrase>>& keywords);
std::map<std::string, std::vector<KeywordPhrase>> keywords_from_csv(std::string_view text);

}  // namespace vlce

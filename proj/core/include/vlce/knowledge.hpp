#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "vlce/keywords.hpp"

namespace vlce {

using TermSet = std::set<std::string>;

struct LexicalEntry {
  TermSet synonyms;
  TermSet pos_tags;  // "noun", "verb", "adj", ... (WordNet letters n/v/a/r accepted)

  bool is_noun() const { return pos_tags.contains("noun") || pos_tags.contains("n"); }
};

// WordNet-style lookup.
class LexicalSource {
 public:
  virtual ~LexicalSource() = default;
  virtual std::optional<LexicalEntry> lookup(std::string_view word) const = 0;
};

// {"damaged": {"synonyms": ["broken", "impaired"], "pos": ["adj"]}, ...}
class FileLexicalSource final : public LexicalSource {
 public:
  static FileLexicalSource parse(std::string_view json_text);
  static FileLexicalSource load(const std::filesystem::path& path);

  std::optional<LexicalEntry> lookup(std::string_view word) const override;
  std::size_t size() const { return entries_.size(); }

 private:
  std::unordered_map<std::string, LexicalEntry> entries_;
};

struct ConceptEdge {
  std::string relation;
  std::string start;
  std::string end;
  double weight = 1.0;
};

// ConceptNet relation names this module understands.
const std::set<std::string>& known_relations();
// RelatedTo, IsA, PartOf, HasA, UsedFor, CapableOf, AtLocation, Causes, HasSubevent.
std::set<std::string> default_allowed_relations();

// Normalizes a concept endpoint to a vocabulary term: strips a "/c/en/"
// prefix and any trailing "/pos" segment, lowercases, joins words with '_'.
// Empty when the result is not [a-z]+(_[a-z]+)* or is shorter than 2.
std::string normalize_concept_term(std::string_view raw);

class ConceptSource {
 public:
  virtual ~ConceptSource() = default;
  // Edges touching `term` (either endpoint). Throws kIo when the source is
  // unreachable after its retries.
  virtual std::vector<ConceptEdge> edges(std::string_view term) = 0;
};

// TSV lines "relation<TAB>start<TAB>end<TAB>weight"; '#' comments and an
// optional "relation\tstart\tend\tweight" header are skipped. Malformed lines
// and unknown relations are kParse errors with the line number.
class FileConceptSource final : public ConceptSource {
 public:
  static FileConceptSource parse(std::string_view tsv_text);
  static FileConceptSource load(const std::filesystem::path& path);

  std::vector<ConceptEdge> edges(std::string_view term) override;
  std::size_t size() const { return edges_.size(); }

 private:
  std::vector<ConceptEdge> edges_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_term_;
};

struct HttpConceptOptions {
  std::string host = "api.conceptnet.io";
  std::filesystem::path cache_dir;  // empty = no disk cache
  int retries = 2;
  std::chrono::milliseconds min_interval{1000};
  std::chrono::seconds timeout{10};
  std::size_t limit = 1000;
};

// Live client for the public ConceptNet API. Responses are cached on disk keyed
// by term. At most one request is in flight per client, and consecutive
// requests are spaced by min_interval.
class HttpConceptSource final : public ConceptSource {
 public:
  explicit HttpConceptSource(HttpConceptOptions options);
  std::vector<ConceptEdge> edges(std::string_view term) override;

  // Parses a ConceptNet /c/en/<term> JSON response body.
  static std::vector<ConceptEdge> parse_response(std::string_view body);

 private:
  HttpConceptOptions options_;
  std::mutex mutex_;
  std::chrono::steady_clock::time_point last_request_{};
};

// First word of each of the first ten phrases per caption, looked up in the
// lexical source. Synonyms are lowercased; anything non-alphabetic is dropped.
TermSet expand_synonyms(const std::map<std::string, std::vector<KeywordPhrase>>& phrases, const LexicalSource& source);
TermSet expand_synonyms(const std::vector<KeywordPhrase>& phrases, const LexicalSource& source);

struct ConceptExpansionReport {
  TermSet terms;
  std::vector<std::string> skipped_terms;  // unreachable after retries
};

// Opposite endpoints of edges whose relation is allowed. Synonym edges never
// contribute, whatever the allowlist says.
ConceptExpansionReport expand_concepts(const TermSet& terms, ConceptSource& source,
                                       const std::set<std::string>& allowed_relations);

// Drops every term that is a strict substring of another term; the survivors
// come back in lexicographic order.
std::vector<std::string> remove_overlaps(const TermSet& terms);

enum Provenance : unsigned { kFromBase = 1u, kFromWordNet = 2u, kFromConceptNet = 4u };

struct EnrichedVocabulary {
  TermSet base_terms;
  TermSet wordnet_terms;
  TermSet conceptnet_terms;
  std::vector<std::string> merged;
  std::map<std::string, unsigned> provenance;  // merged term -> Provenance bits

  // "term<TAB>base,wordnet,conceptnet" per line, merged order.
  std::string serialize() const;
  static EnrichedVocabulary deserialize(std::string_view text);
};

EnrichedVocabulary merge_enriched(const TermSet& base, const TermSet& wordnet, const TermSet& conceptnet);

// Words of every ranked phrase, the base layer of the enriched vocabulary.
TermSet keyword_terms(const std::map<std::string, std::vector<KeywordPhrase>>& phrases);

}  // namespace vlce

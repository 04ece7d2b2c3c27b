#include "vlce/knowledge.hpp"

#include <algorithm>
#include <charconv>

#include <json.hpp>

#include "vlce/error.hpp"
#include "vlce/io.hpp"

namespace vlce {
namespace {

bool all_alpha_lower(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= 'a' && c <= 'z'; });
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto end = line.find('\t', start);
    out.push_back(line.substr(start, end == std::string::npos ? std::string::npos : end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

}  // namespace

FileLexicalSource FileLexicalSource::parse(std::string_view json_text) {
  FileLexicalSource src;
  try {
    auto j = nlohmann::json::parse(json_text);
    if (!j.is_object()) fail(ErrorKind::kFormat, "lexical source must be a JSON object");
    for (const auto& [word, entry] : j.items()) {
      LexicalEntry e;
      if (entry.contains("synonyms")) {
        for (const auto& s : entry.at("synonyms")) e.synonyms.insert(s.get<std::string>());
      }
      if (entry.contains("pos")) {
        for (const auto& p : entry.at("pos")) e.pos_tags.insert(to_lower(p.get<std::string>()));
      }
      src.entries_.emplace(to_lower(word), std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("lexical source: ") + e.what());
  }
  return src;
}

FileLexicalSource FileLexicalSource::load(const std::filesystem::path& path) {
  try {
    return parse(io::read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

std::optional<LexicalEntry> FileLexicalSource::lookup(std::string_view word) const {
  auto it = entries_.find(std::string(word));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

const std::set<std::string>& known_relations() {
  static const std::set<std::string> relations = {
      "RelatedTo",  "FormOf",      "IsA",          "PartOf",        "HasA",          "UsedFor",       "CapableOf",
      "AtLocation", "Causes",      "HasSubevent",  "HasFirstSubevent", "HasLastSubevent", "HasPrerequisite",
      "HasProperty", "MotivatedByGoal", "ObstructedBy", "Desires", "CreatedBy", "Synonym", "Antonym",
      "DistinctFrom", "DerivedFrom", "SymbolOf", "DefinedAs", "MannerOf", "LocatedNear", "HasContext",
      "SimilarTo", "EtymologicallyRelatedTo", "EtymologicallyDerivedFrom", "CausesDesire", "MadeOf",
      "ReceivesAction", "ExternalURL", "NotDesires", "NotUsedFor", "NotCapableOf", "NotHasProperty",
      "InstanceOf", "Entails", "dbpedia/genre", "dbpedia/occupation", "dbpedia/language", "dbpedia/field",
      "dbpedia/knownFor", "dbpedia/capital", "dbpedia/product", "dbpedia/influencedBy", "dbpedia/genus",
      "dbpedia/leader"};
  return relations;
}

std::set<std::string> default_allowed_relations() {
  return {"RelatedTo", "IsA", "PartOf", "HasA", "UsedFor", "CapableOf", "AtLocation", "Causes", "HasSubevent"};
}

std::string normalize_concept_term(std::string_view raw) {
  std::string_view s = raw;
  if (s.starts_with("/c/")) {
    if (!s.starts_with("/c/en/")) return {};
    s.remove_prefix(6);
    if (auto slash = s.find('/'); slash != std::string_view::npos) s = s.substr(0, slash);
  }
  std::string out;
  bool pending_sep = false;
  for (char c : s) {
    if (c == ' ' || c == '_' || c == '\t') {
      pending_sep = !out.empty();
      continue;
    }
    if (pending_sep) {
      out.push_back('_');
      pending_sep = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  if (out.size() < 2) return {};
  std::size_t start = 0;
  while (start <= out.size()) {
    auto end = out.find('_', start);
    if (end == std::string::npos) end = out.size();
    if (!all_alpha_lower(std::string_view(out).substr(start, end - start))) return {};
    start = end + 1;
  }
  return out;
}

FileConceptSource FileConceptSource::parse(std::string_view tsv_text) {
  FileConceptSource src;
  auto lines = io::split_lines(tsv_text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    const auto line_no = std::to_string(i + 1);
    if (io::trim(line).empty() || line.front() == '#') continue;
    auto fields = split_tabs(line);
    if (i == 0 && fields.size() == 4 && fields[0] == "relation") continue;
    if (fields.size() != 4) fail(ErrorKind::kParse, "concept TSV line " + line_no + ": expected 4 tab-separated fields");
    ConceptEdge e;
    e.relation = io::trim(fields[0]);
    if (e.relation.starts_with("/r/")) e.relation = e.relation.substr(3);
    if (!known_relations().contains(e.relation)) {
      fail(ErrorKind::kParse, "concept TSV line " + line_no + ": unknown relation '" + e.relation + "'");
    }
    e.start = normalize_concept_term(io::trim(fields[1]));
    e.end = normalize_concept_term(io::trim(fields[2]));
    const auto w = io::trim(fields[3]);
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), e.weight);
    if (ec != std::errc() || ptr != w.data() + w.size()) {
      fail(ErrorKind::kParse, "concept TSV line " + line_no + ": bad weight '" + w + "'");
    }
    if (e.start.empty() || e.end.empty() || e.start == e.end) continue;
    const auto idx = src.edges_.size();
    src.by_term_[e.start].push_back(idx);
    src.by_term_[e.end].push_back(idx);
    src.edges_.push_back(std::move(e));
  }
  return src;
}

FileConceptSource FileConceptSource::load(const std::filesystem::path& path) {
  try {
    return parse(io::read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kIo) throw;
    throw Error(e.kind(), path.string() + ": " + e.detail());
  }
}

std::vector<ConceptEdge> FileConceptSource::edges(std::string_view term) {
  std::vector<ConceptEdge> out;
  auto it = by_term_.find(std::string(term));
  if (it == by_term_.end()) return out;
  for (auto idx : it->second) out.push_back(edges_[idx]);
  return out;
}

TermSet expand_synonyms(const std::vector<KeywordPhrase>& phrases, const LexicalSource& source) {
  TermSet out;
  const std::size_t n = std::min<std::size_t>(phrases.size(), 10);
  for (std::size_t i = 0; i < n; ++i) {
    if (phrases[i].words.empty()) continue;
    auto entry = source.lookup(phrases[i].words.front());
    if (!entry) continue;
    for (const auto& syn : entry->synonyms) {
      auto s = to_lower(syn);
      if (all_alpha_lower(s)) out.insert(std::move(s));
    }
  }
  return out;
}

TermSet expand_synonyms(const std::map<std::string, std::vector<KeywordPhrase>>& phrases, const LexicalSource& source) {
  TermSet out;
  for (const auto& [id, list] : phrases) out.merge(expand_synonyms(list, source));
  return out;
}

ConceptExpansionReport expand_concepts(const TermSet& terms, ConceptSource& source,
                                       const std::set<std::string>& allowed_relations) {
  ConceptExpansionReport report;
  if (allowed_relations.empty()) return report;
  for (const auto& term : terms) {
    std::vector<ConceptEdge> edges;
    try {
      edges = source.edges(term);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kIo) throw;
      report.skipped_terms.push_back(term);
      continue;
    }
    for (const auto& e : edges) {
      if (e.relation == "Synonym" || !allowed_relations.contains(e.relation)) continue;
      std::string other;
      if (e.start == term) {
        other = e.end;
      } else if (e.end == term) {
        other = e.start;
      } else {
        continue;
      }
      other = normalize_concept_term(other);
      if (!other.empty() && other != term) report.terms.insert(std::move(other));
    }
  }
  return report;
}

std::vector<std::string> remove_overlaps(const TermSet& terms) {
  std::vector<std::string> all(terms.begin(), terms.end());
  // Longer terms first so each candidate is only compared with possible containers.
  std::vector<const std::string*> by_length;
  for (const auto& t : all) by_length.push_back(&t);
  std::stable_sort(by_length.begin(), by_length.end(),
                   [](const std::string* a, const std::string* b) { return a->size() > b->size(); });
  std::vector<std::string> kept;
  for (const auto& t : all) {
    bool contained = false;
    for (const auto* other : by_length) {
      if (other->size() <= t.size()) break;
      if (other->find(t) != std::string::npos) {
        contained = true;
        break;
      }
    }
    if (!contained) kept.push_back(t);
  }
  return kept;
}

EnrichedVocabulary merge_enriched(const TermSet& base, const TermSet& wordnet, const TermSet& conceptnet) {
  EnrichedVocabulary ev;
  ev.base_terms = base;
  ev.wordnet_terms = wordnet;
  ev.conceptnet_terms = conceptnet;
  TermSet all;
  for (const auto* set : {&base, &wordnet, &conceptnet}) {
    for (const auto& t : *set) {
      if (t.empty() || t == kStartToken || t == kEndToken) continue;
      all.insert(t);
    }
  }
  ev.merged = remove_overlaps(all);
  for (const auto& t : ev.merged) {
    unsigned bits = 0;
    if (base.contains(t)) bits |= kFromBase;
    if (wordnet.contains(t)) bits |= kFromWordNet;
    if (conceptnet.contains(t)) bits |= kFromConceptNet;
    ev.provenance[t] = bits;
  }
  return ev;
}

std::string EnrichedVocabulary::serialize() const {
  std::string out;
  for (const auto& t : merged) {
    const unsigned bits = provenance.contains(t) ? provenance.at(t) : 0u;
    std::string tags;
    auto add = [&](const char* name) {
      if (!tags.empty()) tags.push_back(',');
      tags += name;
    };
    if (bits & kFromBase) add("base");
    if (bits & kFromWordNet) add("wordnet");
    if (bits & kFromConceptNet) add("conceptnet");
    out += t + "\t" + tags + "\n";
  }
  return out;
}

EnrichedVocabulary EnrichedVocabulary::deserialize(std::string_view text) {
  EnrichedVocabulary ev;
  auto lines = io::split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    auto tab = lines[i].find('\t');
    if (tab == std::string::npos) fail(ErrorKind::kParse, "enriched vocabulary line " + std::to_string(i + 1) + ": missing tab");
    auto term = lines[i].substr(0, tab);
    auto tags = lines[i].substr(tab + 1);
    unsigned bits = 0;
    if (tags.find("base") != std::string::npos) {
      bits |= kFromBase;
      ev.base_terms.insert(term);
    }
    if (tags.find("wordnet") != std::string::npos) {
      bits |= kFromWordNet;
      ev.wordnet_terms.insert(term);
    }
    if (tags.find("conceptnet") != std::string::npos) {
      bits |= kFromConceptNet;
      ev.conceptnet_terms.insert(term);
    }
    ev.provenance[term] = bits;
    ev.merged.push_back(std::move(term));
  }
  return ev;
}

TermSet keyword_terms(const std::map<std::string, std::vector<KeywordPhrase>>& phrases) {
  TermSet out;
  for (const auto& [id, list] : phrases) {
    for (const auto& p : list) out.insert(p.words.begin(), p.words.end());
  }
  return out;
}

}  // namespace vlce

#include <gtest/gtest.h>

#include <map>

#include "test_util.hpp"
#include "vlce/keywords.hpp"

using namespace vlce;

namespace {

// Plain RAKE: candidates, per-word degree/frequency, phrase = sum of words.
std::map<std::string, double> naive_rake(const std::vector<std::string>& tokens, const StopwordSet& stop) {
  std::vector<std::vector<std::string>> cands;
  std::vector<std::string> cur;
  for (const auto& t : tokens) {
    if (stop.contains(t)) {
      if (!cur.empty()) cands.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(t);
    }
  }
  if (!cur.empty()) cands.push_back(cur);
  std::map<std::string, double> freq, deg;
  for (const auto& c : cands) {
    for (const auto& w : c) {
      freq[w] += 1;
      deg[w] += static_cast<double>(c.size());
    }
  }
  std::map<std::string, double> out;
  for (const auto& c : cands) {
    std::string text;
    double s = 0;
    for (const auto& w : c) {
      text += (text.empty() ? "" : " ") + w;
      s += deg[w] / freq[w];
    }
    out[text] = s;
  }
  return out;
}

}  // namespace

TEST(Rake, DocumentedExample) {
  const auto phrases = rake_caption({"deep", "learning", "is", "deep"}, {"is"});
  ASSERT_EQ(phrases.size(), 2u);
  EXPECT_EQ(phrases[0].text(), "deep learning");
  EXPECT_EQ(phrases[0].score, 3.5);
  EXPECT_EQ(phrases[1].text(), "deep");
  EXPECT_EQ(phrases[1].score, 1.5);
}

TEST(Rake, TopK) {
  const auto phrases = rake_caption({"deep", "learning", "is", "deep"}, {"is"}, 1);
  ASSERT_EQ(phrases.size(), 1u);
  EXPECT_EQ(phrases[0].text(), "deep learning");
}

TEST(Rake, OnlyStopwords) { EXPECT_TRUE(rake_caption({"the", "is"}, {"the", "is"}).empty()); }

TEST(Rake, MatchesNaiveOracle) {
  const StopwordSet stop{"the", "a", "of", "and", "in", "is", "with"};
  const std::vector<std::string> tokens{"the",  "flooded", "road", "and", "collapsed", "roof",  "of",  "a",
                                        "house", "in",     "the",  "flooded", "area",  "with", "debris", "road"};
  const auto expected = naive_rake(tokens, stop);
  const auto phrases = rake_caption(tokens, stop, 100);
  ASSERT_EQ(phrases.size(), expected.size());
  for (const auto& p : phrases) EXPECT_DOUBLE_EQ(p.score, expected.at(p.text())) << p.text();
  for (std::size_t i = 1; i < phrases.size(); ++i) {
    EXPECT_TRUE(phrases[i - 1].score > phrases[i].score ||
                (phrases[i - 1].score == phrases[i].score && phrases[i - 1].text() < phrases[i].text()));
  }
}

TEST(Keywords, ParallelEqualsSerial) {
  std::vector<CaptionRecord> recs;
  for (int i = 0; i < 40; ++i) {
    CaptionRecord r;
    r.image_id = "img_" + std::to_string(i);
    r.clean_tokens = preprocess_caption("a flooded road near the collapsed house number " + std::string(1 + i % 5, 'x') +
                                        " and debris");
    recs.push_back(r);
  }
  const auto stop = parse_stopwords("# header\nthe\na\nand\nnear\n\n");
  const auto serial = extract_keywords(recs, stop, 10, 1);
  const auto parallel = extract_keywords(recs, stop, 10, 4);
  EXPECT_EQ(keywords_to_csv(serial), keywords_to_csv(parallel));
}

TEST(Keywords, CsvRoundTrip) {
  std::vector<CaptionRecord> recs(1);
  recs[0].image_id = "img";
  recs[0].clean_tokens = {"deep", "learning", "is", "deep"};
  const auto kw = extract_keywords(recs, {"is"});
  const auto csv = keywords_to_csv(kw);
  EXPECT_EQ(keywords_to_csv(keywords_from_csv(csv)), csv);
  EXPECT_EQ(keywords_from_csv(csv).at("img")[0].score, 3.5);
}

TEST(Keywords, EmptyStopwordsRejected) {
  EXPECT_VLCE_ERROR(extract_keywords({}, {}), ErrorKind::kConfig);
}

TEST(Stopwords, BundledListLoads) {
  const auto stop = load_stopwords(VLCE_STOPWORDS);
  EXPECT_TRUE(stop.contains("the"));
  EXPECT_FALSE(stop.contains("flood"));
}

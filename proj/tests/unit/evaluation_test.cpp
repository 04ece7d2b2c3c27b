#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "test_util.hpp"
#include "vlce/evaluation.hpp"
#include "vlce/io.hpp"
#include "vlce/rng.hpp"

using namespace vlce;

namespace {

FrequencyTable table_with(std::uint64_t total_rest, std::vector<std::pair<std::string, std::uint64_t>> words) {
  FrequencyTable t;
  for (auto& [w, c] : words) t.add(w, c);
  if (total_rest) t.add("filler", total_rest);
  return t;
}

EvalRecord rec(const std::string& id, double clip, double info, bool scored = true) {
  EvalRecord r;
  r.image_id = id;
  r.clip_score = clip;
  r.informativeness = info;
  r.infometic = clip * info;
  r.scored = scored;
  if (!scored) r.error = "missing image feature";
  return r;
}

}  // namespace

TEST(Frequency, ParseAndProbabilities) {
  const auto t = parse_frequency_table("# counts\nword\tcount\nRoad\t3\nflood\t1\n\n");
  EXPECT_EQ(t.total(), 4u);
  EXPECT_EQ(t.vocab_size(), 2u);
  EXPECT_EQ(t.count("road"), 3u);
  EXPECT_DOUBLE_EQ(t.probability("road"), 0.75);
  EXPECT_DOUBLE_EQ(t.probability("zzz"), 1.0 / 6.0);
  FrequencyTable bad;
  EXPECT_VLCE_ERROR(bad.add("x", 0), ErrorKind::kData);
  bad.add("x", 1);
  EXPECT_VLCE_ERROR(bad.add("x", 2), ErrorKind::kConflict);
}

TEST(Informativeness, Examples) {
  FrequencyTable t;
  t.add("rare", 1);
  for (int i = 0; i < 99; ++i) t.add("w" + std::string(1, static_cast<char>('a' + i % 26)) + std::to_string(i), i < 98 ? 10 : 19);
  ASSERT_EQ(t.total(), 1000u);
  ASSERT_EQ(t.vocab_size(), 100u);
  const std::vector<std::string> rare{"rare"};
  EXPECT_NEAR(informativeness(rare, t), 6.9078, 1e-3);
  EXPECT_EQ(informativeness(std::vector<std::string>{}, t), 0.0);
  FrequencyTable one;
  one.add("only", 5);
  EXPECT_EQ(informativeness(std::vector<std::string>{"only", "only"}, one), 0.0);
  EXPECT_NEAR(informativeness(std::vector<std::string>{"unknown"}, t), std::log(1100.0), 1e-12);
}

TEST(Informativeness, AdditiveAndMonotone) {
  const auto t = table_with(50, {{"a", 5}, {"b", 20}, {"c", 1}});
  const std::vector<std::string> x{"a", "b"}, y{"c", "zzz", "a"}, xy{"a", "b", "c", "zzz", "a"};
  EXPECT_NEAR(informativeness(xy, t), informativeness(x, t) + informativeness(y, t), 1e-12);
  // raising a word's count never raises its surprisal
  double prev = 1e300;
  for (std::uint64_t c = 1; c < 40; ++c) {
    const auto u = table_with(50, {{"a", c}});
    const double v = informativeness(std::vector<std::string>{"a"}, u);
    EXPECT_LE(v, prev);
    prev = v;
  }
}

TEST(Infometic, ProductAndWeighted) {
  EvalConfig cfg;
  EXPECT_DOUBLE_EQ(infometic(0.5, 4.0, cfg), 2.0);
  EXPECT_EQ(infometic(0.73, 0.0, cfg), 0.0);
  EXPECT_LT(infometic(0.3, 2.0, cfg), infometic(0.31, 2.0, cfg));
  EXPECT_LT(infometic(0.3, 2.0, cfg), infometic(0.3, 2.1, cfg));
  EvalConfig w;
  w.mode = ScoreMode::kWeighted;
  EXPECT_VLCE_ERROR(w.validate(), ErrorKind::kConfig);
  w.alpha = 0.5;
  w.beta = 0.3;
  w.gamma = 0.2;
  EXPECT_DOUBLE_EQ(infometic(0.5, 4.0, w), 0.5 * 4.0 + 0.3 * 0.5 + 0.2 * 0.5);
}

TEST(ClipScore, Examples) {
  const std::vector<float> a{1, 0}, b{0, 1}, c{-1, 0};
  EXPECT_DOUBLE_EQ(clip_score(a, a), 1.0);
  EXPECT_DOUBLE_EQ(clip_score(a, b), 0.0);
  EXPECT_DOUBLE_EQ(clip_score(a, c), -1.0);
  EXPECT_DOUBLE_EQ(clip_score(a, c, true), 0.0);
  EXPECT_DOUBLE_EQ(clip_score(a, a, true), 2.5);
  EXPECT_DOUBLE_EQ(clip_score(a, b), cosine_similarity(std::span<const float>(a), std::span<const float>(b)));
}

TEST(Compare, Percentages) {
  std::vector<EvalRecord> custom, base;
  for (int i = 0; i < 4; ++i) {
    custom.push_back(rec("i" + std::to_string(i), 0.5, 3.0));
    base.push_back(rec("i" + std::to_string(i), 0.4, 3.0));
  }
  auto c = compare_sets(custom, base, Metric::kInfometic);
  EXPECT_EQ(c.n, 4u);
  EXPECT_DOUBLE_EQ(c.percentage, 100.0);
  c = compare_sets(custom, custom, Metric::kInfometic);
  EXPECT_DOUBLE_EQ(c.percentage, 0.0);
  for (const auto& [id, b] : c.better) EXPECT_EQ(b, 0);
  c = compare_sets(custom, base, Metric::kInformativeness);
  EXPECT_DOUBLE_EQ(c.percentage, 0.0);
}

TEST(Compare, OrphansAndUnscoredExcluded) {
  std::vector<EvalRecord> custom{rec("a", 0.9, 1), rec("b", 0.9, 1), rec("c", 0.9, 1, false), rec("x", 1, 1)};
  std::vector<EvalRecord> base{rec("a", 0.1, 1), rec("b", 0.95, 1), rec("c", 0.1, 1), rec("y", 1, 1)};
  const auto c = compare_sets(custom, base, Metric::kClipScore);
  EXPECT_EQ(c.n, 2u);
  EXPECT_EQ(c.n_better, 1u);
  EXPECT_DOUBLE_EQ(c.percentage, 50.0);
  EXPECT_EQ(c.orphans_custom, std::vector<std::string>{"x"});
  EXPECT_EQ(c.orphans_baseline, std::vector<std::string>{"y"});
  EXPECT_EQ(c.unscored, std::vector<std::string>{"c"});
}

TEST(Compare, InvariantUnderMonotoneTransform) {
  Rng rng(3);
  std::vector<EvalRecord> custom, base, tc, tb;
  for (int i = 0; i < 50; ++i) {
    const auto id = "i" + std::to_string(i);
    const double a = rng.uniform(0, 1), b = i % 7 == 0 ? a : rng.uniform(0, 1);
    custom.push_back(rec(id, a, 1));
    base.push_back(rec(id, b, 1));
    tc.push_back(rec(id, std::exp(3 * a) - 2, 1));
    tb.push_back(rec(id, std::exp(3 * b) - 2, 1));
  }
  EXPECT_EQ(compare_sets(custom, base, Metric::kClipScore).percentage,
            compare_sets(tc, tb, Metric::kClipScore).percentage);
}

TEST(Nouns, Coverage) {
  const auto lex = FileLexicalSource::parse(R"({"road": {"synonyms": [], "pos": ["noun"]},
                                               "flooded": {"synonyms": [], "pos": ["adj"]},
                                               "the": {"synonyms": [], "pos": ["noun"]}})");
  std::vector<CaptionEntry> caps{{"a", "", {"flooded", "road"}}, {"b", "", {"damaged", "road", "the"}}};
  const auto n = noun_coverage(caps, lex, {"the"});
  EXPECT_EQ(n.count, 1u);
  EXPECT_EQ(n.nouns, std::set<std::string>{"road"});
  EXPECT_EQ(noun_coverage({}, lex, {}).count, 0u);
}

TEST(Histogram, Bins) {
  const std::vector<double> c{0.0, 0.25, 1.0}, b{0.5};
  const auto h = make_histogram(c, b);
  EXPECT_DOUBLE_EQ(h.lower, 0.0);
  EXPECT_DOUBLE_EQ(h.width, 0.05);
  ASSERT_EQ(h.custom.size(), 20u);
  EXPECT_EQ(h.custom[0], 1u);
  EXPECT_EQ(h.custom[5], 1u);
  EXPECT_EQ(h.custom[19], 1u);
  EXPECT_EQ(h.baseline[10], 1u);
  const std::vector<double> same{2.0, 2.0};
  const auto d = make_histogram(same, {});
  EXPECT_DOUBLE_EQ(d.width, 0.05);
  EXPECT_EQ(d.custom[0], 2u);
}

TEST(CaptionSet, ParseAndWrite) {
  const auto caps = parse_caption_set("image,caption,llava\nimages/a.png,Flooded road,A road\nb,,x\n", "image", "llava");
  ASSERT_EQ(caps.size(), 2u);
  EXPECT_EQ(caps[0].image_id, "a");
  EXPECT_EQ(caps[0].tokens, (std::vector<std::string>{"road"}));
  const auto back = parse_caption_set(caption_set_csv(caps), "image", "caption");
  EXPECT_EQ(back[1].raw, "x");
  EXPECT_VLCE_ERROR(parse_caption_set("image,caption\na,x\n", "image", "qwen"), ErrorKind::kSchema);
  EXPECT_VLCE_ERROR(parse_caption_set("image,caption\na,x\na,y\n", "image", "caption"), ErrorKind::kConflict);
}

TEST(Scoring, PerRecordErrors) {
  FeatureStore img(2);
  img.add("a", std::vector<float>{1, 0});
  img.add("z", std::vector<float>{0, 0});
  const auto table = parse_vector_table("road 1 1\nflood 0 1\n");
  MeanWordVectorProvider p(table);
  const auto freq = parse_frequency_table("road\t2\nflood\t2\n");
  std::vector<CaptionEntry> caps{{"a", "", {"road"}}, {"b", "", {"road"}}, {"a2", "", {"road"}}, {"z", "", {"flood"}}};
  caps[2].image_id = "a";
  caps.pop_back();
  caps.push_back({"z", "", {"flood"}});
  caps.push_back({"q", "", {"qqq"}});
  img.add("q", std::vector<float>{1, 1});
  const auto r = score_caption_set(caps, img, p, freq, {});
  EXPECT_TRUE(r[0].scored);
  EXPECT_NEAR(r[0].clip_score, std::sqrt(0.5), 1e-12);
  EXPECT_NEAR(r[0].informativeness, std::log(2.0), 1e-12);
  EXPECT_FALSE(r[1].scored);
  EXPECT_EQ(r[1].error, "missing image feature");
  EXPECT_FALSE(r[3].scored);
  EXPECT_EQ(r[3].error, "zero-norm vector");
  EXPECT_FALSE(r[4].scored);
  EXPECT_EQ(r[4].error, "caption has no embeddable token");
  FeatureStore wrong(3);
  EXPECT_VLCE_ERROR(score_caption_set(caps, wrong, p, freq, {}), ErrorKind::kShape);
  const auto par = score_caption_set(caps, img, p, freq, {}, 3);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(par[i].infometic, r[i].infometic);
}

TEST(Report, SummaryRecomputableFromCsv) {
  ReportInput in;
  in.baseline_name = "llava";
  in.corpus_name = "test counts";
  Rng rng(9);
  for (int i = 0; i < 12; ++i) {
    const auto id = "img_" + std::to_string(i);
    in.custom.push_back(rec(id, rng.uniform(0, 1), rng.uniform(0, 10), i != 3));
    in.baseline.push_back(rec(id, rng.uniform(0, 1), rng.uniform(0, 10)));
  }
  in.baseline.push_back(rec("extra", 0.5, 1));
  const auto csv = io::parse_csv(scores_csv(in));
  const auto summary = nlohmann::json::parse(summary_json(in));
  const auto& header = csv[0].fields;
  auto col = [&](const std::string& name) {
    return static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  };
  for (Metric m : kAllMetrics) {
    const auto name = metric_name(m);
    double sum = 0;
    std::size_t n = 0, better = 0;
    for (std::size_t r = 1; r < csv.size(); ++r) {
      const auto& f = csv[r].fields;
      const auto& b = f[col("better_" + name)];
      if (b.empty()) continue;
      ++n;
      better += b == "1" ? 1 : 0;
    }
    for (std::size_t r = 1; r < csv.size(); ++r) {
      // unscored rows still carry informativeness but stay out of the summary
      if (csv[r].fields[col("custom_clipscore")].empty()) continue;
      const auto& v = csv[r].fields[col("custom_" + name)];
      if (!v.empty()) sum += std::stod(v);
    }
    const auto& s = summary["metrics"][name];
    EXPECT_EQ(s["n"].get<std::size_t>(), n);
    EXPECT_EQ(s["n_better"].get<std::size_t>(), better);
    EXPECT_DOUBLE_EQ(s["percentage_custom"].get<double>(), 100.0 * static_cast<double>(better) / static_cast<double>(n));
    EXPECT_NEAR(s["custom_mean"].get<double>(), sum / 11.0, 1e-12);
    const auto cmp = compare_sets(in.custom, in.baseline, m);
    EXPECT_EQ(s["percentage_custom"].get<double>(), cmp.percentage);
  }
}

TEST(Report, DeterministicFiles) {
  ReportInput in;
  for (int i = 0; i < 5; ++i) {
    in.custom.push_back(rec("i" + std::to_string(i), 0.1 * i, 2.0));
    in.baseline.push_back(rec("i" + std::to_string(i), 0.2, 1.0 + i));
  }
  testutil::TempDir a, b;
  emit_report(in, a.path());
  emit_report(in, b.path());
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(a.path())) {
    ++files;
    EXPECT_EQ(io::read_file(e.path()), io::read_file(b.path() / e.path().filename())) << e.path();
  }
  EXPECT_EQ(files, 2u + 3u * 3u);
  const auto svg = io::read_file(a / "hist_infometic.svg");
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
}

TEST(Tables, Shapes) {
  MetricTableRow r{"lstm", "llava", "fixture", "with", "ResNet50", 62.5, 40.0};
  const auto csv = io::parse_csv(metric_table_csv({r}));
  ASSERT_EQ(csv.size(), 2u);
  EXPECT_EQ(csv[0].fields.size(), 9u);
  EXPECT_EQ(csv[1].fields[6], "37.50");
  NounTableRow n{"fixture", "ResNet50", "lstm", "With Knowledge Graph", 7, {{"llava", 7}, {"qwenvl", 3}}};
  const auto nt = io::parse_csv(noun_table_csv({n}));
  ASSERT_EQ(nt[0].fields.size(), 9u);
  EXPECT_EQ(nt[1].fields.back(), "custom/llava");
}

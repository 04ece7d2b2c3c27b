// Writes the bundled 10-image fixture: captions, feature files, a word-vector
// table, lexical and concept sources, a frequency table.
//
//   vlce_make_fixture <out_dir>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "vlce/corpus.hpp"
#include "vlce/feature_store.hpp"
#include "vlce/io.hpp"
#include "vlce/rng.hpp"

namespace {

using vlce::Rng;

constexpr std::size_t kTopics = 8;  // water, fire, structure, damage, road, vegetation, storm, scene
constexpr std::size_t kWordDim = 300;

struct Image {
  std::string id;
  std::string caption;
  std::string llava;
  std::string qwenvl;
  std::string objects;
  std::vector<double> topics;
};

const std::vector<Image> kImages = {
    {"img_01", "Flood water covers the residential road near damaged houses.",
     "An aerial image of a town with some water.", "A picture of houses and a road in an area with water.",
     "house;road", {1.0, 0, 0.4, 0.5, 0.6, 0, 0, 0.2}},
    {"img_02", "Collapsed building with debris scattered across the street.",
     "An aerial image of a city area.", "A building in a city with some debris.", "building",
     {0, 0, 1.0, 0.8, 0.4, 0, 0, 0.2}},
    {"img_03", "Wildfire smoke rises over burned trees and vegetation.", "An image of smoke over an area.",
     "Smoke and trees in a picture of an area.", "", {0, 1.0, 0, 0.5, 0, 0.7, 0, 0.2}},
    {"img_04", "Flooded farmland with submerged crops and muddy water.", "An aerial image of green fields.",
     "A picture of fields and some water.", "", {1.0, 0, 0, 0.3, 0, 0.6, 0, 0.2}},
    {"img_05", "Damaged roof of a house after the hurricane winds.", "An image of a house in a town.",
     "A house with a roof in a picture.", "house", {0, 0, 0.7, 0.8, 0, 0, 1.0, 0.2}},
    {"img_06", "Debris blocks the road and vehicles are stranded.", "An aerial image of a road in a town.",
     "Cars on a road in a city area.", "car;truck", {0, 0, 0.2, 0.8, 1.0, 0, 0, 0.2}},
    {"img_07", "Intact buildings beside a flooded parking lot.", "An aerial image of buildings in a city.",
     "A picture of a parking lot and buildings.", "building;car", {0.8, 0, 0.8, 0.2, 0.5, 0, 0, 0.2}},
    {"img_08", "Burned houses and destroyed vehicles after the fire.", "An image of a town with smoke.",
     "Houses and cars in a picture of a town.", "house;car", {0, 1.0, 0.5, 0.8, 0.4, 0, 0, 0.2}},
    {"img_09", "Fallen trees block the road after the storm.", "An aerial image of trees and a road.",
     "Trees near a road in a picture.", "", {0, 0, 0, 0.5, 0.7, 0.8, 0.8, 0.2}},
    {"img_10", "Aerial view of a destroyed neighborhood with collapsed roofs.", "An aerial image of a town.",
     "A picture of a neighborhood with houses.", "house", {0, 0, 0.9, 1.0, 0, 0, 0.3, 0.3}},
};

// Word-vector table entries: key -> topic weights. Several caption words are
// deliberately absent so the embedding stage exercises prefix matches
// ("damaged" -> "damage") and random rows.
const std::map<std::string, std::vector<double>> kWords = {
    {"flood", {1, 0, 0, 0.3, 0, 0, 0.2, 0}},       {"water", {1, 0, 0, 0, 0, 0, 0, 0.1}},
    {"inundation", {1, 0, 0, 0.3, 0, 0, 0, 0}},    {"deluge", {1, 0, 0, 0.2, 0, 0, 0.3, 0}},
    {"submerge", {0.9, 0, 0, 0.2, 0, 0, 0, 0}},    {"mud", {0.6, 0, 0, 0.1, 0, 0.3, 0, 0}},
    {"fire", {0, 1, 0, 0.4, 0, 0, 0, 0}},          {"wildfire", {0, 1, 0, 0.4, 0, 0.4, 0, 0}},
    {"smoke", {0, 0.9, 0, 0.1, 0, 0, 0, 0.1}},     {"burn", {0, 1, 0, 0.5, 0, 0, 0, 0}},
    {"blaze", {0, 1, 0, 0.3, 0, 0, 0, 0}},         {"flame", {0, 1, 0, 0.2, 0, 0, 0, 0}},
    {"house", {0, 0, 1, 0, 0, 0, 0, 0.2}},         {"building", {0, 0, 1, 0, 0, 0, 0, 0.2}},
    {"roof", {0, 0, 0.9, 0.1, 0, 0, 0.2, 0}},      {"neighborhood", {0, 0, 0.8, 0, 0.2, 0, 0, 0.3}},
    {"residential", {0, 0, 0.8, 0, 0, 0, 0, 0.3}}, {"parking", {0, 0, 0.3, 0, 0.8, 0, 0, 0.2}},
    {"damage", {0, 0, 0.2, 1, 0, 0, 0, 0}},        {"destroy", {0, 0.1, 0.2, 1, 0, 0, 0, 0}},
    {"collapse", {0, 0, 0.4, 0.9, 0, 0, 0, 0}},    {"debris", {0, 0, 0.3, 0.9, 0.1, 0, 0, 0}},
    {"rubble", {0, 0, 0.4, 0.9, 0, 0, 0, 0}},      {"wreckage", {0, 0, 0.2, 1, 0.2, 0, 0, 0}},
    {"broken", {0, 0, 0.1, 0.8, 0, 0, 0, 0.1}},    {"ruin", {0, 0, 0.3, 0.9, 0, 0, 0, 0}},
    {"road", {0, 0, 0, 0, 1, 0, 0, 0.1}},          {"street", {0, 0, 0.1, 0, 1, 0, 0, 0.1}},
    {"highway", {0, 0, 0, 0, 1, 0, 0, 0}},         {"vehicle", {0, 0, 0, 0, 0.9, 0, 0, 0.1}},
    {"car", {0, 0, 0, 0, 0.9, 0, 0, 0.1}},         {"automobile", {0, 0, 0, 0, 0.9, 0, 0, 0}},
    {"strand", {0.2, 0, 0, 0.3, 0.5, 0, 0, 0}},    {"block", {0, 0, 0.2, 0.3, 0.5, 0, 0, 0}},
    {"tree", {0, 0, 0, 0, 0, 1, 0.1, 0}},          {"vegetation", {0, 0, 0, 0, 0, 1, 0, 0}},
    {"crop", {0.1, 0, 0, 0, 0, 0.9, 0, 0}},        {"farmland", {0.1, 0, 0, 0, 0, 0.9, 0, 0.1}},
    {"field", {0, 0, 0, 0, 0, 0.8, 0, 0.2}},       {"green", {0, 0, 0, 0, 0, 0.6, 0, 0.3}},
    {"hurricane", {0.3, 0, 0, 0.4, 0, 0, 1, 0}},   {"storm", {0.3, 0, 0, 0.3, 0, 0, 1, 0}},
    {"wind", {0, 0, 0, 0.1, 0, 0, 1, 0}},          {"cyclone", {0.3, 0, 0, 0.4, 0, 0, 1, 0}},
    {"fall", {0, 0, 0, 0.4, 0, 0.3, 0.3, 0}},      {"aerial", {0, 0, 0, 0, 0, 0, 0, 1}},
    {"view", {0, 0, 0, 0, 0, 0, 0, 1}},            {"image", {0, 0, 0, 0, 0, 0, 0, 1}},
    {"picture", {0, 0, 0, 0, 0, 0, 0, 1}},         {"area", {0, 0, 0, 0, 0, 0, 0, 1}},
    {"town", {0, 0, 0.4, 0, 0, 0, 0, 0.8}},        {"city", {0, 0, 0.5, 0, 0.1, 0, 0, 0.8}},
    {"intact", {0, 0, 0.6, -0.3, 0, 0, 0, 0.3}},   {"scatter", {0, 0, 0, 0.5, 0, 0, 0.2, 0.2}},
    {"rise", {0, 0.3, 0, 0, 0, 0, 0, 0.5}},        {"cover", {0.3, 0, 0, 0, 0, 0, 0, 0.5}},
    {"lot", {0, 0, 0.1, 0, 0.4, 0, 0, 0.5}},       {"truck", {0, 0, 0, 0, 0.9, 0, 0, 0}},
};

std::vector<std::vector<double>> topic_bases(Rng& rng, std::size_t dim) {
  std::vector<std::vector<double>> bases(kTopics, std::vector<double>(dim));
  for (auto& b : bases) {
    double norm = 0.0;
    for (auto& v : b) {
      v = rng.uniform(-1.0, 1.0);
      norm += v * v;
    }
    for (auto& v : b) v /= std::sqrt(norm);
  }
  return bases;
}

std::vector<float> mix(const std::vector<std::vector<double>>& bases, const std::vector<double>& w, double noise,
                       Rng& rng, bool non_negative = false) {
  const std::size_t dim = bases.front().size();
  std::vector<float> out(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    double v = 0.0;
    for (std::size_t k = 0; k < kTopics; ++k) v += w[k] * bases[k][i];
    v += noise * rng.uniform(-1.0, 1.0) / std::sqrt(static_cast<double>(dim));
    if (non_negative) v = std::abs(v);
    out[i] = static_cast<float>(v);
  }
  return out;
}

std::string lexical_json() {
  // Synonyms for the first words of the training keyword phrases, plus POS tags
  // for the noun analysis.
  return R"({
  "flood": {"synonyms": ["deluge", "inundation", "overflow"], "pos": ["noun", "verb"]},
  "water": {"synonyms": ["h2o"], "pos": ["noun"]},
  "collapsed": {"synonyms": ["fallen", "ruined"], "pos": ["adj"]},
  "building": {"synonyms": ["edifice", "structure"], "pos": ["noun"]},
  "buildings": {"synonyms": [], "pos": ["noun"]},
  "debris": {"synonyms": ["rubble", "wreckage"], "pos": ["noun"]},
  "wildfire": {"synonyms": ["blaze", "conflagration"], "pos": ["noun"]},
  "burned": {"synonyms": ["charred", "scorched"], "pos": ["adj", "verb"]},
  "flooded": {"synonyms": ["submerged", "inundated"], "pos": ["adj"]},
  "damaged": {"synonyms": ["broken", "impaired"], "pos": ["adj"]},
  "intact": {"synonyms": ["undamaged", "whole"], "pos": ["adj"]},
  "fallen": {"synonyms": ["downed"], "pos": ["adj"]},
  "aerial": {"synonyms": ["overhead"], "pos": ["adj"]},
  "road": {"synonyms": ["route", "roadway"], "pos": ["noun"]},
  "street": {"synonyms": ["roadway"], "pos": ["noun"]},
  "house": {"synonyms": ["home", "dwelling"], "pos": ["noun"]},
  "houses": {"synonyms": [], "pos": ["noun"]},
  "roof": {"synonyms": ["rooftop"], "pos": ["noun"]},
  "roofs": {"synonyms": [], "pos": ["noun"]},
  "smoke": {"synonyms": ["fume"], "pos": ["noun", "verb"]},
  "trees": {"synonyms": [], "pos": ["noun"]},
  "vegetation": {"synonyms": ["flora", "greenery"], "pos": ["noun"]},
  "farmland": {"synonyms": ["cropland"], "pos": ["noun"]},
  "crops": {"synonyms": [], "pos": ["noun"]},
  "hurricane": {"synonyms": ["cyclone"], "pos": ["noun"]},
  "winds": {"synonyms": [], "pos": ["noun"]},
  "vehicles": {"synonyms": [], "pos": ["noun"]},
  "fire": {"synonyms": ["flame", "blaze"], "pos": ["noun", "verb"]},
  "storm": {"synonyms": ["tempest"], "pos": ["noun"]},
  "neighborhood": {"synonyms": ["district", "vicinity"], "pos": ["noun"]},
  "parking": {"synonyms": [], "pos": ["noun"]},
  "lot": {"synonyms": [], "pos": ["noun"]},
  "town": {"synonyms": [], "pos": ["noun"]},
  "city": {"synonyms": [], "pos": ["noun"]},
  "image": {"synonyms": [], "pos": ["noun"]},
  "picture": {"synonyms": [], "pos": ["noun"]},
  "area": {"synonyms": [], "pos": ["noun"]},
  "fields": {"synonyms": [], "pos": ["noun"]},
  "cars": {"synonyms": [], "pos": ["noun"]},
  "view": {"synonyms": ["vista"], "pos": ["noun", "verb"]},
  "destroyed": {"synonyms": ["wrecked"], "pos": ["adj"]}
}
)";
}

std::string concepts_tsv() {
  return "relation\tstart\tend\tweight\n"
         "# small ConceptNet-style edge sample\n"
         "RelatedTo\t/c/en/flood\t/c/en/water\t2.0\n"
         "RelatedTo\t/c/en/flood\t/c/en/inundation\t1.5\n"
         "Causes\t/c/en/flood\t/c/en/damage\t1.0\n"
         "Synonym\t/c/en/flood\t/c/en/deluge\t2.0\n"
         "IsA\t/c/en/wildfire\t/c/en/fire\t2.0\n"
         "Causes\t/c/en/fire\t/c/en/smoke\t1.5\n"
         "RelatedTo\t/c/en/hurricane\t/c/en/wind\t2.0\n"
         "Synonym\t/c/en/hurricane\t/c/en/cyclone\t2.0\n"
         "PartOf\t/c/en/roof\t/c/en/house\t1.0\n"
         "HasA\t/c/en/building\t/c/en/roof\t1.0\n"
         "RelatedTo\t/c/en/debris\t/c/en/rubble\t1.5\n"
         "AtLocation\t/c/en/vehicle\t/c/en/road\t1.0\n"
         "AtLocation\t/c/en/car\t/c/en/parking_lot\t1.0\n"
         "UsedFor\t/c/en/road\t/c/en/driving\t1.0\n"
         "RelatedTo\t/c/en/storm\t/c/en/rain\t1.0\n"
         "Antonym\t/c/en/intact\t/c/en/broken\t1.0\n"
         "RelatedTo\t/c/en/farmland\t/c/en/agriculture/n\t1.0\n"
         "DerivedFrom\t/c/en/flooded\t/c/en/flood\t1.0\n";
}

std::string frequency_tsv() {
  // Brown-corpus-like counts for common words; disaster vocabulary is rarer.
  const std::vector<std::pair<std::string, int>> counts = {
      {"the", 69971}, {"of", 36412}, {"and", 28853}, {"to", 26158}, {"in", 21341}, {"with", 7289},
      {"on", 6741},   {"an", 3740},  {"after", 1070}, {"over", 1236}, {"near", 198}, {"across", 282},
      {"are", 4394},  {"some", 1617}, {"image", 117}, {"picture", 162}, {"area", 324}, {"town", 212},
      {"city", 393},  {"water", 442}, {"road", 197}, {"street", 244}, {"house", 591}, {"houses", 109},
      {"building", 212}, {"buildings", 108}, {"trees", 128}, {"fields", 82}, {"green", 116}, {"aerial", 14},
      {"view", 186},  {"cars", 48},  {"roof", 59},   {"fire", 187},  {"smoke", 49},  {"storm", 24},
      {"parking", 17}, {"lot", 127}, {"neighborhood", 21}, {"flood", 19}, {"damaged", 11}, {"destroyed", 18},
      {"burned", 31}, {"fallen", 19}, {"block", 66},  {"blocks", 18}, {"covers", 27}, {"rises", 17},
      {"vehicles", 46}, {"winds", 21}, {"hurricane", 8}, {"debris", 6}, {"collapsed", 6}, {"scattered", 18},
      {"vegetation", 6}, {"crops", 21}, {"farmland", 3}, {"muddy", 4}, {"submerged", 3}, {"stranded", 3},
      {"residential", 14}, {"intact", 8}, {"beside", 48}, {"wildfire", 1}, {"flooded", 4}, {"roofs", 9},
  };
  std::string out = "word\tcount\n";
  for (const auto& [w, c] : counts) out += w + "\t" + std::to_string(c) + "\n";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: vlce_make_fixture <out_dir>\n";
    return 2;
  }
  const std::filesystem::path out = argv[1];
  Rng rng(20240601);

  const auto word_bases = topic_bases(rng, kWordDim);
  const auto bases_768 = topic_bases(rng, 768);
  const auto bases_2048 = topic_bases(rng, 2048);

  std::string table = std::to_string(kWords.size()) + " " + std::to_string(kWordDim) + "\n";
  for (const auto& [word, topics] : kWords) {
    const auto v = mix(word_bases, topics, 0.6, rng);
    table += "/c/en/" + word;
    for (float x : v) table += " " + vlce::io::format_double(static_cast<double>(x));
    table += "\n";
  }
  vlce::io::write_file(out / "vectors_300.txt", table);

  vlce::FeatureStore f768(768), f2048(2048), clip(kWordDim);
  std::string csv = "image,caption,llava,qwenvl,objects\n";
  for (const auto& img : kImages) {
    f768.add(img.id, mix(bases_768, img.topics, 0.3, rng));
    f2048.add(img.id, mix(bases_2048, img.topics, 0.3, rng, true));
    clip.add(img.id, mix(word_bases, img.topics, 0.5, rng));
    csv += vlce::io::csv_line({vlce::io::csv_escape("images/" + img.id + ".png"), vlce::io::csv_escape(img.caption),
                               vlce::io::csv_escape(img.llava), vlce::io::csv_escape(img.qwenvl),
                               vlce::io::csv_escape(img.objects)});
  }
  vlce::save_feature_store(f768, out / "features_768.vlcf");
  vlce::save_feature_store(f2048, out / "features_2048.vlcf");
  vlce::save_feature_store(clip, out / "clip_image.vlcf");
  vlce::io::write_file(out / "captions.csv", csv);
  vlce::io::write_file(out / "lexical.json", lexical_json());
  vlce::io::write_file(out / "concepts.tsv", concepts_tsv());
  vlce::io::write_file(out / "frequency.tsv", frequency_tsv());
  std::cout << "fixture written to " << out.string() << "\n";
  return 0;
}

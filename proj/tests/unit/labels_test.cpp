#include <doctest.h>

#include <numeric>

#include "check_error.hpp"
#include "labels.hpp"
#include "util.hpp"

using namespace discosyn;
using L = RelationLabel;

TEST_CASE("training label set in connective-table order") {
  const std::vector<std::string> expected = {"conjunction", "level-of-detail", "instantiation", "manner",
                                             "substitution", "equivalence", "cause", "purpose",
                                             "cause+belief", "condition", "concession", "contrast",
                                             "asynchronous", "synchronous"};
  const auto labels = training_label_set();
  REQUIRE(labels.size() == 14);
  for (std::size_t i = 0; i < labels.size(); ++i) CHECK(label_name(labels[i]) == expected[i]);
  CHECK_FALSE(is_training_label(L::kSimilarity));
  CHECK(generation_label_set(false).size() == 14);
  CHECK(generation_label_set(true).size() == 15);
}

TEST_CASE("label parsing folds case, hyphens and sense paths") {
  CHECK(parse_label("Level-of-detail") == L::kLevelOfDetail);
  CHECK(parse_label("level of detail") == L::kLevelOfDetail);
  CHECK(parse_label("LEVEL_OF_DETAIL") == L::kLevelOfDetail);
  CHECK(parse_label("Contingency.Cause+Belief") == L::kCauseBelief);
  CHECK(level1_of(L::kCause) == Level1::kContingency);
  CHECK(label_title(L::kLevelOfDetail) == "Level-of-detail");
  CHECK(label_upper(L::kCauseBelief) == "CAUSE+BELIEF");
  try {
    parse_label("frobnication");
    FAIL("expected unknown label");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnknownLabel);
    CHECK(std::string(e.what()).find("frobnication") != std::string::npos);
  }
}

TEST_CASE("bundled connectives") {
  const auto map = ConnectiveMap::bundled();
  CHECK(map.connectives_for(L::kCause) == ConnectiveMap::Options{"It is/was because", "Therefore,"});
  CHECK(map.connectives_for(L::kConjunction) == ConnectiveMap::Options{"In addition,", "Furthermore,"});
  CHECK_THROWS_AS(map.connectives_for(L::kSimilarity), Error);
  std::vector<L> keys;
  for (const auto& [label, options] : map.entries()) keys.push_back(label);
  const auto training = training_label_set();
  CHECK(keys == std::vector<L>(training.begin(), training.end()));

  const auto extended = ConnectiveMap::bundled_extended();
  CHECK(extended.entries().size() == 15);
  CHECK_FALSE(extended.connective(L::kSimilarity, 1).empty());
}

TEST_CASE("connective map text format") {
  CHECK_THROWS_AS(ConnectiveMap::from_text("cause: because\n"), Error);
  CHECK_THROWS_AS(ConnectiveMap::from_text("cause: | so\n"), Error);
}

TEST_CASE("bundled confusion map") {
  const auto cmap = ConfusionMap::bundled();
  CHECK(confusion_of(L::kCauseBelief, cmap) == L::kCause);
  CHECK(confusion_of(L::kPurpose, cmap) == L::kCondition);
  CHECK(confusion_of(L::kCause, cmap) == L::kLevelOfDetail);
  for (const auto& [from, to] : cmap.entries()) CHECK(from != to);
  CHECK_THROWS_AS(confusion_of(L::kDisjunction, cmap), Error);
  CHECK_THROWS_AS(ConfusionMap::from_text("cause -> cause\n"), Error);
  CHECK(ConfusionMap::from_text(cmap.to_text()) == cmap);
}

TEST_CASE("derived confusion maps") {
  ConfusionMatrix m{};
  const auto idx = [](L l) { return training_index(l); };
  m[idx(L::kCauseBelief)][idx(L::kCause)] = 9;
  m[idx(L::kCauseBelief)][idx(L::kCauseBelief)] = 3;
  m[idx(L::kCauseBelief)][idx(L::kLevelOfDetail)] = 1;
  m[idx(L::kContrast)][idx(L::kSynchronous)] = 5;
  m[idx(L::kContrast)][idx(L::kManner)] = 5;
  const auto derived = derive_confusion_map(m);
  CHECK(confusion_of(L::kCauseBelief, derived.map) == L::kCause);
  CHECK(confusion_of(L::kContrast, derived.map) == L::kManner);
  CHECK(derived.map.entries().size() == 2);
  CHECK(derived.warnings.size() == 12);

  ConfusionMatrix diagonal{};
  for (std::size_t i = 0; i < kTrainingLabelCount; ++i) diagonal[i][i] = 7;
  const auto perfect = derive_confusion_map(diagonal);
  CHECK(perfect.map.entries().empty());
  CHECK(perfect.warnings.size() == 14);
}

TEST_CASE("derived confusion equals a brute-force row scan") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    ConfusionMatrix m{};
    for (auto& row : m) {
      for (auto& cell : row) cell = static_cast<std::int64_t>(rng.uniform_index(6));
    }
    const auto derived = derive_confusion_map(m);
    const auto labels = training_label_set();
    for (std::size_t r = 0; r < kTrainingLabelCount; ++r) {
      std::int64_t best = 0;
      std::optional<std::size_t> best_c;
      for (std::size_t c = 0; c < kTrainingLabelCount; ++c) {
        if (c != r && m[r][c] > best) {
          best = m[r][c];
          best_c = c;
        }
      }
      if (best_c) {
        CHECK(confusion_of(labels[r], derived.map) == labels[*best_c]);
      } else {
        CHECK_FALSE(derived.map.contains(labels[r]));
      }
    }
  }
}

TEST_CASE("frequency tables and rarity") {
  const auto freq = FrequencyTable::bundled_source_train();
  CHECK(freq.frequency(L::kCause) == doctest::Approx(4469.0 / 17016.0).epsilon(1e-9));
  CHECK_FALSE(is_rare(L::kCause, freq));
  CHECK(is_rare(L::kCauseBelief, freq));
  double sum = 0;
  for (const auto& [label, f] : freq.entries()) sum += f;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

  const auto edge = FrequencyTable::from_counts({{L::kCause, 5}, {L::kContrast, 95}}, FrequencyScope::kAll);
  CHECK_FALSE(is_rare(L::kCause, edge));  // exactly 5% is not rare
  CHECK_THROWS_AS(is_rare(L::kManner, edge), Error);
}

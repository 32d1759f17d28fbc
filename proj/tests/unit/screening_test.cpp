#include <doctest.h>

#include "check_error.hpp"
#include "screening.hpp"
#include "support.hpp"

using namespace discosyn;
using L = RelationLabel;

namespace {

SyntheticInstance candidate(L intended, std::optional<L> predicted, const std::string& domain = "EP") {
  SyntheticInstance inst;
  inst.pair = make_pair("a", "b", "d");
  inst.intended = intended;
  inst.backend = "mock";
  inst.domain = DomainTag::parse(domain);
  if (predicted) inst.set_predicted(*predicted);
  return inst;
}

const ConfusionMap& cmap() {
  static const ConfusionMap map = ConfusionMap::bundled();
  return map;
}

const FrequencyTable& freq() {
  static const FrequencyTable table = FrequencyTable::bundled_source_train();
  return table;
}

}  // namespace

TEST_CASE("strict screen") {
  CHECK(strict_screen(candidate(L::kCause, L::kCause)));
  CHECK_FALSE(strict_screen(candidate(L::kCause, L::kLevelOfDetail)));
  CHECK_ERROR_CODE(strict_screen(candidate(L::kCause, std::nullopt)), ErrorCode::kState);
}

TEST_CASE("confusion screen") {
  CHECK_FALSE(confusion_screen(candidate(L::kCauseBelief, L::kCause), cmap()));
  CHECK(confusion_screen(candidate(L::kCauseBelief, L::kConcession), cmap()));
  CHECK(confusion_screen(candidate(L::kCause, L::kCause), cmap()));

  const ConfusionMap partial(std::map<L, L>{{L::kCause, L::kLevelOfDetail}});
  CHECK_THROWS_AS(confusion_screen(candidate(L::kManner, L::kCause), partial), Error);
  std::vector<std::string> warnings;
  CHECK(confusion_screen(candidate(L::kManner, L::kCause), partial, MissingConfusionPolicy::kPassThrough, &warnings));
  CHECK(warnings.size() == 1);
}

TEST_CASE("combi screen") {
  CHECK(combi_screen(candidate(L::kCauseBelief, L::kSynchronous), cmap(), freq()));
  CHECK_FALSE(combi_screen(candidate(L::kCause, L::kLevelOfDetail), cmap(), freq()));
  CHECK(combi_screen(candidate(L::kCause, L::kCause), cmap(), freq()));
}

TEST_CASE("verdicts are immutable and need a prediction") {
  auto inst = candidate(L::kCause, std::nullopt);
  CHECK_THROWS_AS(inst.set_verdict(ScreenKind::kStrict, true), Error);
  inst.set_predicted(L::kCause);
  inst.set_verdict(ScreenKind::kStrict, true);
  inst.set_verdict(ScreenKind::kStrict, true);
  CHECK_THROWS_AS(inst.set_verdict(ScreenKind::kStrict, false), Error);
}

TEST_CASE("batch screening keeps order and consistent reports") {
  std::vector<SyntheticInstance> batch;
  Rng rng(3);
  const auto labels = training_label_set();
  for (int i = 0; i < 500; ++i) {
    const L intended = labels[rng.uniform_index(labels.size())];
    const L predicted = rng.uniform01() < 0.4 ? intended : labels[rng.uniform_index(labels.size())];
    auto inst = candidate(intended, predicted, i % 2 ? "EP" : "WK");
    inst.sentence_index = static_cast<std::size_t>(i);
    batch.push_back(inst);
  }
  const ScreenContext context{&cmap(), &freq()};
  for (ScreenKind kind : {ScreenKind::kStrict, ScreenKind::kConfusion, ScreenKind::kCombi}) {
    const auto result = screen_batch(batch, kind, context);
    CHECK(result.report.total_candidates() == batch.size());
    CHECK(result.report.total_kept() == result.kept.size());
    for (std::size_t i = 1; i < result.kept.size(); ++i) {
      CHECK(result.kept[i - 1].sentence_index < result.kept[i].sentence_index);
    }
    for (const auto& [key, counts] : result.report.strata()) {
      std::size_t histogram = 0;
      for (const auto& [label, n] : counts.kept_per_label) histogram += n;
      CHECK(histogram == counts.kept);
      CHECK(counts.kept <= counts.candidates);
    }
  }

  std::vector<SyntheticInstance> agreeing;
  for (L label : labels) agreeing.push_back(candidate(label, label));
  for (ScreenKind kind : {ScreenKind::kStrict, ScreenKind::kConfusion, ScreenKind::kCombi}) {
    CHECK(screen_batch(agreeing, kind, context).kept.size() == agreeing.size());
  }
  const auto empty = screen_batch({}, ScreenKind::kStrict, context);
  CHECK(empty.kept.empty());
  CHECK(empty.report.total_candidates() == 0);
}

TEST_CASE("report merge is order independent and serializes") {
  ScreeningReport a, b;
  const StratumKey ep{DomainTag::parse("EP"), "mock", TemplateKind::kDC, ScreenKind::kStrict};
  const StratumKey wk{DomainTag::parse("WK"), "mock", TemplateKind::kDR, ScreenKind::kCombi};
  a.record(ep, L::kCause, true);
  a.record(wk, L::kManner, false);
  b.record(ep, L::kCause, false);
  b.record(ep, L::kContrast, true);
  ScreeningReport ab = a, ba = b;
  ab.merge(b);
  ba.merge(a);
  CHECK(ab.to_json() == ba.to_json());
  CHECK(ab.total_candidates() == 4);
  CHECK(ab.total_kept() == 2);
  CHECK(ScreeningReport::from_json(ab.to_json()).to_json() == ab.to_json());
  const std::string table = ab.to_table();
  CHECK(table == "LLM\tmock\tmock\nprompt\tDC\tDR\nscreen\tstrict\tcombi\nEP\t2/3\t\nWK\t\t0/1\n");
}

TEST_CASE("synthetic records round-trip") {
  auto inst = candidate(L::kCause, L::kContrast);
  inst.connective = "Therefore,";
  inst.example_id = "ex1";
  inst.set_verdict(ScreenKind::kConfusion, true);
  const auto back = read_synthetic_records(write_synthetic_records({inst}));
  REQUIRE(back.size() == 1);
  CHECK(back[0] == inst);
  CHECK(inst.as_labeled().provenance == Provenance::kSynthetic);
  CHECK(inst.as_labeled().label == L::kCause);
}

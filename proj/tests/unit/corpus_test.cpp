#include <doctest.h>

#include "check_error.hpp"
#include "corpus.hpp"
#include "support.hpp"

using namespace discosyn;

namespace {

CrowdAnnotatedInstance crowd(std::map<RelationLabel, int> votes) {
  CrowdAnnotatedInstance inst;
  inst.pair = make_pair("a", "b", "d");
  inst.votes = std::move(votes);
  inst.domain = DomainTag::parse("EP");
  return inst;
}

}  // namespace

TEST_CASE("domain tags") {
  CHECK(DomainTag::parse("EP").code() == "EP");
  CHECK(DomainTag::parse("NEWS2").code() == "NEWS2");
  CHECK_ERROR_CODE(DomainTag::parse("ep"), ErrorCode::kInvalidArgument);
  CHECK_ERROR_CODE(DomainTag::parse(""), ErrorCode::kInvalidArgument);
  REQUIRE(default_target_domains().size() == 3);
}

TEST_CASE("argument pairs are whitespace-normalized and non-empty") {
  const auto pair = make_pair("  two   words ", "x\ty", "doc");
  CHECK(pair.arg1 == "two words");
  CHECK(pair.arg2 == "x y");
  CHECK_THROWS_AS(make_pair("   ", "b", "doc"), Error);
}

TEST_CASE("gold label sets at the 40% threshold") {
  using L = RelationLabel;
  CHECK(gold_label_set(crowd({{L::kCause, 5}, {L::kConcession, 4}, {L::kConjunction, 1}})) ==
        std::set<L>{L::kCause, L::kConcession});
  CHECK(gold_label_set(crowd({{L::kCause, 10}})) == std::set<L>{L::kCause});
  CHECK(gold_label_set(crowd({{L::kCause, 4}, {L::kConcession, 3}, {L::kConjunction, 3}})) == std::set<L>{L::kCause});
  // nothing reaches 40%: the majority stands in
  CHECK(gold_label_set(crowd({{L::kCause, 3}, {L::kConcession, 3}, {L::kConjunction, 2}, {L::kContrast, 2}})) ==
        std::set<L>{L::kCause});
}

TEST_CASE("majority ties follow the global label order") {
  using L = RelationLabel;
  CHECK(crowd({{L::kContrast, 5}, {L::kConjunction, 5}}).majority_label() == L::kConjunction);
  CHECK(crowd({{L::kSynchronous, 4}, {L::kCause, 4}, {L::kManner, 2}}).majority_label() == L::kCause);
}

TEST_CASE("majority label is always in the gold set") {
  Rng rng(7);
  const auto labels = all_labels();
  for (int trial = 0; trial < 2000; ++trial) {
    std::map<RelationLabel, int> votes;
    for (int v = 0; v < 10; ++v) {
      RelationLabel l = labels[rng.uniform_index(labels.size())];
      if (l == RelationLabel::kNoRelation) l = RelationLabel::kCause;
      ++votes[l];
    }
    const auto inst = crowd(votes);
    CHECK(gold_label_set(inst).contains(inst.majority_label()));
  }
}

TEST_CASE("source ingestion: split, dropped labels and errors") {
  const std::string content =
      R"({"doc_id":"wsj_0501","arg1":"A.","arg2":"B.","label":"Contingency.Cause.Reason"})" "\n"
      R"({"doc_id":"wsj_0102","arg1":"C.","arg2":"D.","label":"conjunction"})" "\n"
      R"({"doc_id":"wsj_0603","arg1":"E.","arg2":"F.","label":"disjunction"})" "\n"
      R"({"doc_id":"x","section":23,"arg1":"G.","arg2":"H.","label":["Level-of-detail","cause"]})" "\n";
  const auto result = ingest_source_records(content, SplitSpec::parse("2-20:0-1"));
  REQUIRE(result.train.size() == 1);
  CHECK(result.train[0].label == RelationLabel::kCause);
  CHECK(result.train[0].section == 5);
  REQUIRE(result.dev.size() == 1);
  CHECK(result.dev[0].label == RelationLabel::kConjunction);
  CHECK(result.dropped_labels == 1);
  CHECK(result.outside_split == 1);

  const auto empty = ingest_source_records("", SplitSpec::standard());
  CHECK(empty.train.empty());
  CHECK(empty.dropped_labels == 0);

  CHECK_ERROR_CODE(ingest_source_records(R"({"section":3,"arg1":"a","arg2":"b","label":"bogus"})", SplitSpec::standard()),
                   ErrorCode::kUnknownLabel);
  try {
    ingest_source_records("{\"section\":3}\nnot json\n", SplitSpec::standard());
    FAIL("expected a format error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kFormat);
    CHECK(std::string(e.what()).find("line 1") != std::string::npos);
  }
}

TEST_CASE("split specs") {
  const auto split = SplitSpec::parse("2-20:0,1");
  CHECK(split.train_sections.size() == 19);
  CHECK(split.dev_sections == std::set<int>{0, 1});
  CHECK(split.to_string() == "2-20:0-1");
  CHECK_THROWS(SplitSpec::parse("2-20:2-3"));  // overlapping
}

TEST_CASE("target ingestion excludes no-relation majorities and checks vote totals") {
  const std::string content =
      R"({"doc_id":"e1","domain":"EP","arg1":"a","arg2":"b","votes":{"cause":10}})" "\n"
      R"({"doc_id":"e2","domain":"EP","arg1":"a","arg2":"b","votes":{"no-relation":6,"cause":4}})" "\n"
      R"({"doc_id":"w1","domain":"WK","arg1":"a","arg2":"b","votes":{"cause":5,"concession":5}})" "\n";
  const auto result = ingest_target_records(content);
  REQUIRE(result.instances.size() == 2);
  CHECK(result.instances[0].majority_label() == RelationLabel::kCause);
  CHECK(result.excluded_no_relation == 1);
  std::size_t sum = 0;
  for (const auto& [domain, n] : result.per_domain) sum += n;
  CHECK(sum == result.instances.size());

  CHECK_ERROR_CODE(ingest_target_records(R"({"domain":"EP","arg1":"a","arg2":"b","votes":{"cause":9}})"),
                   ErrorCode::kFormat);
}

TEST_CASE("records round-trip") {
  const auto instances = testing::cue_corpus(2, 3);
  const std::string text = write_records(instances);
  CHECK(read_labeled_records(text) == instances);
  CHECK(write_records(read_labeled_records(text)) == text);

  const auto target = ingest_target_corpus(testing::fixture_dir() / "target.jsonl").instances;
  const auto again = ingest_target_records(write_records(target)).instances;
  CHECK(again == target);
}

TEST_CASE("adjacent pairs") {
  RawDocument doc{"d", DomainTag::parse("NV"), {"s1.", "s2.", "s3."}};
  const auto result = make_adjacent_pairs(doc);
  REQUIRE(result.pairs.size() == 2);
  CHECK(result.pairs[0].arg1 == "s1.");
  CHECK(result.pairs[0].arg2 == "s2.");
  CHECK(result.pairs[1].arg1 == "s2.");
  CHECK(result.pairs[1].adjacency == Adjacency::kInterSentential);

  RawDocument single{"d", DomainTag::parse("NV"), {"only."}};
  const auto none = make_adjacent_pairs(single);
  CHECK(none.pairs.empty());
  CHECK(none.warnings.size() == 1);

  RawDocument big{"d", DomainTag::parse("NV"), {}};
  for (int i = 0; i < 4000; ++i) big.sentences.push_back("s" + std::to_string(i) + ".");
  CHECK(make_adjacent_pairs(big).pairs.size() == 3999);
}

TEST_CASE("bundled fixtures ingest") {
  const auto source = ingest_source_corpus(testing::fixture_dir() / "source.jsonl", SplitSpec::standard());
  CHECK(source.train.size() == 342);
  CHECK(source.dev.size() == 28);
  CHECK(source.dropped_labels == 1);
  const auto target = ingest_target_corpus(testing::fixture_dir() / "target.jsonl");
  CHECK(target.instances.size() == 126);
  CHECK(target.excluded_no_relation == 3);
  const auto raw = ingest_raw_corpus(testing::fixture_dir() / "raw.jsonl");
  CHECK(raw.size() == 6);
  CHECK(raw[0].sentences.size() == 30);
}

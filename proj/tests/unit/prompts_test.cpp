#include <doctest.h>

#include <cmath>
#include <set>

#include "check_error.hpp"
#include "prompts.hpp"
#include "support.hpp"

using namespace discosyn;
using L = RelationLabel;

namespace {

InContextExample example(L label, const std::string& domain = "EP", const std::string& id = "ex") {
  InContextExample ex;
  ex.id = id;
  ex.arg1 = "The Artist has his routine.";
  ex.arg2 = "at night he returns home.";
  ex.label = label;
  ex.domain = DomainTag::parse(domain);
  return ex;
}

std::size_t occurrences(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("template slots") {
  const PromptTemplate t("a {x} b {y}");
  CHECK(t.slots() == std::vector<std::string>{"x", "y"});
  CHECK(t.render({{"x", "{y}"}, {"y", "2"}}) == "a {y} b 2");
  CHECK_THROWS_AS(t.render({{"x", "1"}}), Error);
  CHECK_THROWS_AS(PromptTemplate("a {x"), Error);
}

TEST_CASE("DC prompts embed the stored connective") {
  const PromptEngine engine;
  const std::string arg1 = "The brokerage firms learned a lesson the last time around.";
  const auto prompt = engine.render_dc(arg1, L::kCause, 2, example(L::kCause));
  CHECK(prompt.text.find(arg1 + " Therefore, ...") != std::string::npos);
  CHECK(prompt.metadata.connective == "Therefore,");
  CHECK(prompt.metadata.kind == TemplateKind::kDC);
  CHECK(engine.render_dc(arg1, L::kCause, 2, example(L::kCause)).text == prompt.text);

  std::set<std::string> distinct;
  for (L label : training_label_set()) {
    for (int option : {1, 2}) {
      const auto p = engine.render_dc(arg1, label, option, example(label));
      const auto& connective = engine.connectives().connective(label, option);
      CHECK(p.text.find(arg1 + " " + connective + " ...") != std::string::npos);
      CHECK(p.text.find('{') == std::string::npos);
      CHECK(occurrences(p.text, arg1) == 1);
      distinct.insert(p.text);
    }
  }
  CHECK(distinct.size() == 28);
  CHECK_THROWS_AS(engine.render_dc(arg1, L::kCause, 3, example(L::kCause)), Error);
  CHECK_THROWS_AS(engine.render_dc(arg1, L::kSimilarity, 1, example(L::kSimilarity)), Error);
}

TEST_CASE("DR prompts name the relation and carry its definition") {
  const PromptEngine engine;
  const auto conj = engine.render_dr("Some first argument.", L::kConjunction, example(L::kConjunction));
  CHECK(conj.text.find("both arguments, which don’t directly relate to each other") != std::string::npos);
  for (L label : training_label_set()) {
    const auto p = engine.render_dr("Some first argument.", label, example(label));
    const std::string upper = label_upper(label);
    CHECK(p.text.find("The Artist has his routine. " + upper + "\n") != std::string::npos);
    CHECK(p.text.find("have the relation " + upper + " to the first argument") != std::string::npos);
    CHECK(p.text.ends_with("Here list several second arguments:"));
  }
  CHECK_THROWS_AS(engine.render_dr("   ", L::kCause, example(L::kCause)), Error);
  CHECK_THROWS_AS(engine.render_dr("x", L::kDisjunction, example(L::kDisjunction)), Error);
}

TEST_CASE("example selection") {
  std::vector<InContextExample> pool = {example(L::kCause, "EP", "only")};
  CHECK(select_example(pool, DomainTag::parse("EP"), L::kCause, 1).id == "only");
  CHECK(select_example(pool, DomainTag::parse("WK"), L::kCause, 1).id == "only");  // cross-domain fallback
  CHECK_THROWS_AS(select_example(pool, DomainTag::parse("EP"), L::kManner, 1), Error);

  std::vector<InContextExample> ten;
  for (int i = 0; i < 10; ++i) ten.push_back(example(L::kCause, "EP", "e" + std::to_string(i)));
  CHECK(select_example(ten, DomainTag::parse("EP"), L::kCause, 5).id ==
        select_example(ten, DomainTag::parse("EP"), L::kCause, 5).id);

  // chi-square against uniform, 9 degrees of freedom; 21.666 is the 0.01 critical value
  std::map<std::string, int> counts;
  const int draws = 1000;
  for (int seed = 0; seed < draws; ++seed) ++counts[select_example(ten, DomainTag::parse("EP"), L::kCause, seed).id];
  double chi2 = 0;
  for (const auto& ex : ten) {
    const double expected = draws / 10.0;
    chi2 += std::pow(counts[ex.id] - expected, 2) / expected;
  }
  CHECK(chi2 < 21.666);
}

TEST_CASE("example pool parsing") {
  const auto pool = read_example_pool(read_file(testing::fixture_dir() / "examples.jsonl"));
  CHECK(pool.size() == 45);
  CHECK_THROWS_AS(read_example_pool(R"({"arg1":"a","arg2":"b","label":"cause"})"), Error);
}

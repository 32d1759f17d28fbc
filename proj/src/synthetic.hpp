#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "corpus.hpp"
#include "labels.hpp"
#include "prompts.hpp"

namespace discosyn {

enum class ScreenKind { kStrict, kConfusion, kCombi };

std::string_view screen_kind_name(ScreenKind kind);
// Accepts "smooth" as a synonym of combi.
ScreenKind parse_screen_kind(std::string_view text);

struct DecodingParams {
  int max_new_tokens = 80;
  double temperature = 0.7;
  std::uint64_t seed = 0;

  friend bool operator==(const DecodingParams&, const DecodingParams&) = default;
};

// A generated pair and everything needed to trace it back to its request.
class SyntheticInstance {
 public:
  ArgumentPair pair;
  RelationLabel intended = RelationLabel::kConjunction;
  std::string backend;
  TemplateKind kind = TemplateKind::kDC;
  DomainTag domain;
  std::optional<std::string> connective;
  std::string example_id;
  DecodingParams decoding;
  std::size_t sentence_index = 0;

  const std::optional<RelationLabel>& predicted() const { return predicted_; }
  void set_predicted(RelationLabel label) { predicted_ = label; }

  const std::map<ScreenKind, bool>& verdicts() const { return verdicts_; }
  // Requires a prediction; a verdict cannot change once recorded.
  void set_verdict(ScreenKind kind, bool keep);

  LabeledInstance as_labeled() const;

  friend bool operator==(const SyntheticInstance&, const SyntheticInstance&) = default;

 private:
  std::optional<RelationLabel> predicted_;
  std::map<ScreenKind, bool> verdicts_;
};

nlohmann::ordered_json to_record(const SyntheticInstance& instance);
SyntheticInstance synthetic_from_record(const nlohmann::json& record);
std::string write_synthetic_records(const std::vector<SyntheticInstance>& instances);
std::vector<SyntheticInstance> read_synthetic_records(std::string_view content);

}  // namespace discosyn

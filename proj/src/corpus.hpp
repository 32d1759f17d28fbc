#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "labels.hpp"

namespace discosyn {

// Short upper-case domain code, e.g. EP, WK, NV. Any code matching
// [A-Z][A-Z0-9]{0,15} is accepted so deployments can add domains by config.
class DomainTag {
 public:
  DomainTag() = default;
  static DomainTag parse(std::string_view code);

  const std::string& code() const { return code_; }
  friend auto operator<=>(const DomainTag&, const DomainTag&) = default;

 private:
  explicit DomainTag(std::string code) : code_(std::move(code)) {}
  std::string code_;
};

std::vector<DomainTag> default_target_domains();
DomainTag source_domain();

enum class Adjacency { kInterSentential, kIntraSentential };
enum class Provenance { kSourceAnnotated, kSynthetic, kPseudoLabeled };

std::string_view adjacency_name(Adjacency adjacency);
std::string_view provenance_name(Provenance provenance);
Provenance parse_provenance(std::string_view text);

struct ArgumentPair {
  std::string arg1;
  std::string arg2;
  std::string doc_id;
  Adjacency adjacency = Adjacency::kInterSentential;

  friend bool operator==(const ArgumentPair&, const ArgumentPair&) = default;
};

// Whitespace-normalizes both arguments; throws if either ends up empty.
ArgumentPair make_pair(std::string_view arg1, std::string_view arg2, std::string doc_id,
                       Adjacency adjacency = Adjacency::kInterSentential);

struct LabeledInstance {
  ArgumentPair pair;
  RelationLabel label = RelationLabel::kConjunction;
  DomainTag domain;
  Provenance provenance = Provenance::kSourceAnnotated;
  std::optional<int> section;

  friend bool operator==(const LabeledInstance&, const LabeledInstance&) = default;
};

inline constexpr int kDefaultAnnotators = 10;
inline constexpr double kGoldThreshold = 0.4;

struct CrowdAnnotatedInstance {
  ArgumentPair pair;
  std::map<RelationLabel, int> votes;
  DomainTag domain;

  int total_votes() const;
  // argmax of votes, earlier global label order on ties.
  RelationLabel majority_label() const;

  friend bool operator==(const CrowdAnnotatedInstance&, const CrowdAnnotatedInstance&) = default;
};

// Labels holding at least `threshold` of the votes. no-relation is never a gold
// label. If nothing qualifies the majority label is returned, so the set is
// never empty.
std::set<RelationLabel> gold_label_set(const CrowdAnnotatedInstance& instance,
                                       double threshold = kGoldThreshold);

struct RawDocument {
  std::string doc_id;
  DomainTag domain;
  std::vector<std::string> sentences;
};

struct SplitSpec {
  std::set<int> train_sections;
  std::set<int> dev_sections;

  // "2-20:0-1" or "2-20:0,1". Ranges are inclusive.
  static SplitSpec parse(std::string_view text);
  static SplitSpec standard();
  std::string to_string() const;
};

struct SourceIngestResult {
  std::vector<LabeledInstance> train;
  std::vector<LabeledInstance> dev;
  std::size_t dropped_labels = 0;   // label outside the training set
  std::size_t outside_split = 0;    // section in neither split
};

struct TargetIngestResult {
  std::vector<CrowdAnnotatedInstance> instances;
  std::size_t excluded_no_relation = 0;
  std::map<DomainTag, std::size_t> per_domain;
};

struct PairsResult {
  std::vector<ArgumentPair> pairs;
  std::vector<std::string> warnings;
};

// Canonical line-delimited records (one JSON object per line).
SourceIngestResult ingest_source_corpus(const std::filesystem::path& path, const SplitSpec& split);
SourceIngestResult ingest_source_records(std::string_view content, const SplitSpec& split);
TargetIngestResult ingest_target_corpus(const std::filesystem::path& path,
                                        int annotators = kDefaultAnnotators);
TargetIngestResult ingest_target_records(std::string_view content,
                                         int annotators = kDefaultAnnotators);
// One sentence per record: {"doc_id", "domain", "sentence"}; documents keep
// first-appearance order and sentence order.
std::vector<RawDocument> ingest_raw_corpus(const std::filesystem::path& path);
std::vector<RawDocument> ingest_raw_records(std::string_view content);

PairsResult make_adjacent_pairs(const RawDocument& doc);

FrequencyTable frequency_table(const std::vector<LabeledInstance>& instances, FrequencyScope scope);

// Record (de)serialization. Output is deterministic: fixed key order, labels
// written by canonical name.
nlohmann::ordered_json to_record(const LabeledInstance& instance);
nlohmann::ordered_json to_record(const CrowdAnnotatedInstance& instance);
LabeledInstance labeled_from_record(const nlohmann::json& record);
CrowdAnnotatedInstance crowd_from_record(const nlohmann::json& record, int annotators);

std::string write_records(const std::vector<LabeledInstance>& instances);
std::string write_records(const std::vector<CrowdAnnotatedInstance>& instances);
std::string write_raw_records(const std::vector<RawDocument>& docs);
std::vector<LabeledInstance> read_labeled_records(std::string_view content);

// Parses JSONL content, reporting the 1-based line number on malformed input.
// Blank lines are skipped.
std::vector<std::pair<int, nlohmann::json>> parse_jsonl(std::string_view content);

}  // namespace discosyn

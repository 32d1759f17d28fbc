#include "labels.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "error.hpp"
#include "resources.hpp"
#include "util.hpp"

namespace discosyn {
namespace {

struct LabelInfo {
  RelationLabel label;
  std::string_view name;
  Level1 level1;
};

constexpr std::array<LabelInfo, kLabelCount> kLabels = {{
    {RelationLabel::kConjunction, "conjunction", Level1::kExpansion},
    {RelationLabel::kLevelOfDetail, "level-of-detail", Level1::kExpansion},
    {RelationLabel::kInstantiation, "instantiation", Level1::kExpansion},
    {RelationLabel::kManner, "manner", Level1::kExpansion},
    {RelationLabel::kSubstitution, "substitution", Level1::kExpansion},
    {RelationLabel::kEquivalence, "equivalence", Level1::kExpansion},
    {RelationLabel::kCause, "cause", Level1::kContingency},
    {RelationLabel::kPurpose, "purpose", Level1::kContingency},
    {RelationLabel::kCauseBelief, "cause+belief", Level1::kContingency},
    {RelationLabel::kCondition, "condition", Level1::kContingency},
    {RelationLabel::kConcession, "concession", Level1::kContrast},
    {RelationLabel::kContrast, "contrast", Level1::kContrast},
    {RelationLabel::kAsynchronous, "asynchronous", Level1::kTemporal},
    {RelationLabel::kSynchronous, "synchronous", Level1::kTemporal},
    {RelationLabel::kCauseSpeechAct, "cause+speechact", Level1::kContingency},
    {RelationLabel::kConcessionSpeechAct, "concession+speechact", Level1::kContrast},
    {RelationLabel::kConditionSpeechAct, "condition+speechact", Level1::kContingency},
    {RelationLabel::kDisjunction, "disjunction", Level1::kExpansion},
    {RelationLabel::kException, "exception", Level1::kExpansion},
    {RelationLabel::kNegativeCondition, "negative-condition", Level1::kContingency},
    {RelationLabel::kNegativeConditionSpeechAct, "negative-condition+speechact", Level1::kContingency},
    {RelationLabel::kNoRelation, "no-relation", Level1::kNone},
    {RelationLabel::kSimilarity, "similarity", Level1::kContrast},
}};

constexpr std::array<RelationLabel, kLabelCount> kAllLabels = [] {
  std::array<RelationLabel, kLabelCount> out{};
  for (std::size_t i = 0; i < kLabelCount; ++i) out[i] = static_cast<RelationLabel>(i);
  return out;
}();

const LabelInfo& info(RelationLabel label) {
  const auto index = static_cast<std::size_t>(label);
  if (index >= kLabelCount) fail(ErrorCode::kUnknownLabel, "label index out of range");
  return kLabels[index];
}

std::string fold_key(std::string_view text) {
  std::string key;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c)) || c == '-' || c == '_') continue;
    key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return key;
}

bool is_comment_or_blank(const std::string& line) {
  return line.empty() || line.front() == '#';
}

std::string_view bundled_resource(std::string_view name) {
  const auto text = resources::find(name);
  if (!text) fail(ErrorCode::kState, "missing bundled resource " + std::string(name));
  return *text;
}

}  // namespace

std::string_view label_name(RelationLabel label) { return info(label).name; }

Level1 level1_of(RelationLabel label) { return info(label).level1; }

std::string_view level1_name(Level1 level) {
  switch (level) {
    case Level1::kExpansion: return "Expansion";
    case Level1::kContingency: return "Contingency";
    case Level1::kContrast: return "Contrast";
    case Level1::kTemporal: return "Temporal";
    case Level1::kNone: return "None";
  }
  return "None";
}

std::string label_title(RelationLabel label) {
  std::string out(label_name(label));
  if (!out.empty()) out[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(out[0])));
  return out;
}

std::string label_upper(RelationLabel label) {
  std::string out(label_name(label));
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::optional<RelationLabel> try_parse_label(std::string_view text) {
  std::string cleaned = trim(text);
  // Dotted sense paths: Level1.Level2[.Level3]
  if (cleaned.find('.') != std::string::npos) {
    const auto parts = split(cleaned, '.');
    if (parts.size() >= 2 && !trim(parts[1]).empty()) cleaned = parts[1];
  }
  const std::string key = fold_key(cleaned);
  if (key.empty()) return std::nullopt;
  for (const auto& entry : kLabels) {
    if (fold_key(entry.name) == key) return entry.label;
  }
  return std::nullopt;
}

RelationLabel parse_label(std::string_view text) {
  if (auto label = try_parse_label(text)) return *label;
  fail(ErrorCode::kUnknownLabel, "unknown relation label '" + std::string(text) + "'");
}

std::span<const RelationLabel> all_labels() { return kAllLabels; }

std::span<const RelationLabel> training_label_set() {
  return std::span<const RelationLabel>(kAllLabels).first(kTrainingLabelCount);
}

bool is_training_label(RelationLabel label) {
  return static_cast<std::size_t>(label) < kTrainingLabelCount;
}

std::size_t training_index(RelationLabel label) {
  if (!is_training_label(label)) {
    fail(ErrorCode::kUnknownLabel,
         "label '" + std::string(label_name(label)) + "' is not in the training label set");
  }
  return static_cast<std::size_t>(label);
}

std::vector<RelationLabel> generation_label_set(bool include_similarity) {
  const auto training = training_label_set();
  std::vector<RelationLabel> out(training.begin(), training.end());
  if (include_similarity) out.push_back(RelationLabel::kSimilarity);
  return out;
}

// ConnectiveMap

ConnectiveMap::ConnectiveMap(std::map<RelationLabel, Options> entries) : entries_(std::move(entries)) {
  for (RelationLabel label : training_label_set()) {
    if (!entries_.contains(label)) {
      fail(ErrorCode::kConfig, "connective map lacks label " + std::string(label_name(label)));
    }
  }
  for (const auto& [label, options] : entries_) {
    if (!is_training_label(label) && label != RelationLabel::kSimilarity) {
      fail(ErrorCode::kConfig,
           "connective map has non-generation label " + std::string(label_name(label)));
    }
    if (options.first.empty() || options.second.empty()) {
      fail(ErrorCode::kConfig, "empty connective for " + std::string(label_name(label)));
    }
  }
}

ConnectiveMap ConnectiveMap::bundled() { return from_text(bundled_resource("connectives")); }

ConnectiveMap ConnectiveMap::bundled_extended() {
  return from_text(std::string(bundled_resource("connectives")) + "\n" + std::string(bundled_resource("connectives_extra")));
}

ConnectiveMap ConnectiveMap::from_text(std::string_view text) {
  std::map<RelationLabel, Options> entries;
  int line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw);
    if (is_comment_or_blank(line)) continue;
    const auto colon = line.find(':');
    const auto bar = line.find('|', colon == std::string::npos ? 0 : colon);
    if (colon == std::string::npos || bar == std::string::npos) {
      fail(ErrorCode::kFormat, "connective map line " + std::to_string(line_no) +
                                   ": expected 'label: option1 | option2'");
    }
    const RelationLabel label = parse_label(line.substr(0, colon));
    Options options{trim(line.substr(colon + 1, bar - colon - 1)), trim(line.substr(bar + 1))};
    if (!entries.emplace(label, std::move(options)).second) {
      fail(ErrorCode::kFormat, "connective map line " + std::to_string(line_no) + ": duplicate label");
    }
  }
  return ConnectiveMap(std::move(entries));
}

const ConnectiveMap::Options& ConnectiveMap::connectives_for(RelationLabel label) const {
  const auto it = entries_.find(label);
  if (it == entries_.end()) {
    fail(ErrorCode::kUnknownLabel, "no connectives for label " + std::string(label_name(label)));
  }
  return it->second;
}

const std::string& ConnectiveMap::connective(RelationLabel label, int option) const {
  const auto& options = connectives_for(label);
  if (option == 1) return options.first;
  if (option == 2) return options.second;
  fail(ErrorCode::kInvalidArgument, "connective option must be 1 or 2");
}

// ConfusionMap

ConfusionMap::ConfusionMap(std::map<RelationLabel, RelationLabel> entries) : entries_(std::move(entries)) {
  for (const auto& [intended, confused] : entries_) {
    if (intended == confused) {
      fail(ErrorCode::kConfig,
           "confusion map sends " + std::string(label_name(intended)) + " to itself");
    }
  }
}

ConfusionMap ConfusionMap::bundled() { return from_text(bundled_resource("confusion")); }

ConfusionMap ConfusionMap::from_text(std::string_view text) {
  std::map<RelationLabel, RelationLabel> entries;
  int line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw);
    if (is_comment_or_blank(line)) continue;
    const auto arrow = line.find("->");
    if (arrow == std::string::npos) {
      fail(ErrorCode::kFormat,
           "confusion map line " + std::to_string(line_no) + ": expected 'label -> label'");
    }
    const RelationLabel intended = parse_label(line.substr(0, arrow));
    const RelationLabel confused = parse_label(line.substr(arrow + 2));
    if (!entries.emplace(intended, confused).second) {
      fail(ErrorCode::kFormat, "confusion map line " + std::to_string(line_no) + ": duplicate label");
    }
  }
  return ConfusionMap(std::move(entries));
}

std::string ConfusionMap::to_text() const {
  std::ostringstream out;
  for (const auto& [intended, confused] : entries_) {
    out << label_name(intended) << " -> " << label_name(confused) << '\n';
  }
  return out.str();
}

RelationLabel confusion_of(RelationLabel label, const ConfusionMap& cmap) {
  const auto it = cmap.entries().find(label);
  if (it == cmap.entries().end()) {
    fail(ErrorCode::kUnknownLabel,
         "confusion map has no entry for " + std::string(label_name(label)));
  }
  return it->second;
}

DerivedConfusion derive_confusion_map(const ConfusionMatrix& matrix) {
  std::map<RelationLabel, RelationLabel> entries;
  std::vector<std::string> warnings;
  for (std::size_t row = 0; row < kTrainingLabelCount; ++row) {
    std::int64_t best = 0;
    std::optional<std::size_t> best_col;
    for (std::size_t col = 0; col < kTrainingLabelCount; ++col) {
      if (col == row) continue;
      if (matrix[row][col] > best) {
        best = matrix[row][col];
        best_col = col;
      }
    }
    const auto intended = training_label_set()[row];
    if (!best_col) {
      warnings.push_back("no off-diagonal predictions for " + std::string(label_name(intended)) +
                         "; entry omitted");
      continue;
    }
    entries.emplace(intended, training_label_set()[*best_col]);
  }
  return {ConfusionMap(std::move(entries)), std::move(warnings)};
}

// FrequencyTable

std::string_view frequency_scope_name(FrequencyScope scope) {
  return scope == FrequencyScope::kAll ? "all" : "inter-sentential-only";
}

FrequencyScope parse_frequency_scope(std::string_view text) {
  const std::string key = to_lower_ascii(trim(text));
  if (key == "all") return FrequencyScope::kAll;
  if (key == "inter-sentential-only" || key == "inter" || key == "inter-sentential") {
    return FrequencyScope::kInterSentential;
  }
  fail(ErrorCode::kConfig, "unknown frequency scope '" + std::string(text) + "'");
}

FrequencyTable FrequencyTable::from_counts(const std::map<RelationLabel, std::int64_t>& counts,
                                           FrequencyScope scope) {
  std::int64_t total = 0;
  for (const auto& [label, count] : counts) {
    if (count < 0) fail(ErrorCode::kInvalidArgument, "negative label count");
    total += count;
  }
  if (total == 0) fail(ErrorCode::kInvalidArgument, "frequency table needs at least one instance");
  FrequencyTable table;
  table.scope_ = scope;
  for (const auto& [label, count] : counts) {
    table.entries_[label] = static_cast<double>(count) / static_cast<double>(total);
  }
  return table;
}

FrequencyTable FrequencyTable::bundled_source_train() {
  std::map<RelationLabel, std::int64_t> counts;
  for (const auto& raw : split(bundled_resource("pdtb_train_counts"), '\n')) {
    const std::string line = trim(raw);
    if (is_comment_or_blank(line)) continue;
    const auto colon = line.find(':');
    counts[parse_label(line.substr(0, colon))] = std::stoll(line.substr(colon + 1));
  }
  // These counts cover intra- and inter-sentential relations alike.
  return from_counts(counts, FrequencyScope::kAll);
}

double FrequencyTable::frequency(RelationLabel label) const {
  const auto it = entries_.find(label);
  if (it == entries_.end()) {
    fail(ErrorCode::kUnknownLabel,
         "frequency table has no entry for " + std::string(label_name(label)));
  }
  return it->second;
}

bool is_rare(RelationLabel label, const FrequencyTable& freq, double threshold) {
  return freq.frequency(label) < threshold;
}

}  // namespace discosyn

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace discosyn {

enum class Level1 : std::uint8_t { kExpansion, kContingency, kContrast, kTemporal, kNone };

// Level-2 relation senses. Enumerator order is the global label order used for
// every tie-break: the 14 training labels in connective-table order, then the
// remaining senses alphabetically.
enum class RelationLabel : std::uint8_t {
  kConjunction,
  kLevelOfDetail,
  kInstantiation,
  kManner,
  kSubstitution,
  kEquivalence,
  kCause,
  kPurpose,
  kCauseBelief,
  kCondition,
  kConcession,
  kContrast,
  kAsynchronous,
  kSynchronous,
  kCauseSpeechAct,
  kConcessionSpeechAct,
  kConditionSpeechAct,
  kDisjunction,
  kException,
  kNegativeCondition,
  kNegativeConditionSpeechAct,
  kNoRelation,
  kSimilarity,
};

inline constexpr std::size_t kLabelCount = 23;
inline constexpr std::size_t kTrainingLabelCount = 14;

std::string_view label_name(RelationLabel label);
Level1 level1_of(RelationLabel label);
std::string_view level1_name(Level1 level);
// "Level-of-detail", as used in the DR prompt's quoted relation name.
std::string label_title(RelationLabel label);
// "LEVEL-OF-DETAIL".
std::string label_upper(RelationLabel label);

// Case-insensitive, ignores whitespace, hyphens and underscores, and accepts
// dotted sense paths ("Contingency.Cause.Reason" -> cause).
std::optional<RelationLabel> try_parse_label(std::string_view text);
// Throws Error(kUnknownLabel) naming the offending string.
RelationLabel parse_label(std::string_view text);

std::span<const RelationLabel> all_labels();
std::span<const RelationLabel> training_label_set();
bool is_training_label(RelationLabel label);
// Position of a training label in score vectors; throws for other labels.
std::size_t training_index(RelationLabel label);

// Labels used for generation: the training set, optionally plus similarity.
std::vector<RelationLabel> generation_label_set(bool include_similarity);

class ConnectiveMap {
 public:
  using Options = std::pair<std::string, std::string>;

  static ConnectiveMap bundled();
  // Bundled map plus rows for generation-only labels such as similarity.
  static ConnectiveMap bundled_extended();
  // Lines "label: option1 | option2"; '#' starts a comment line.
  static ConnectiveMap from_text(std::string_view text);

  const Options& connectives_for(RelationLabel label) const;
  // option is 1 or 2.
  const std::string& connective(RelationLabel label, int option) const;
  const std::map<RelationLabel, Options>& entries() const { return entries_; }

 private:
  explicit ConnectiveMap(std::map<RelationLabel, Options> entries);
  std::map<RelationLabel, Options> entries_;
};

class ConfusionMap {
 public:
  ConfusionMap() = default;
  explicit ConfusionMap(std::map<RelationLabel, RelationLabel> entries);

  static ConfusionMap bundled();
  // Lines "label -> label".
  static ConfusionMap from_text(std::string_view text);

  bool contains(RelationLabel label) const { return entries_.contains(label); }
  const std::map<RelationLabel, RelationLabel>& entries() const { return entries_; }
  std::string to_text() const;

  friend bool operator==(const ConfusionMap&, const ConfusionMap&) = default;

 private:
  std::map<RelationLabel, RelationLabel> entries_;
};

RelationLabel confusion_of(RelationLabel label, const ConfusionMap& cmap);

// Prediction counts on a dev set: rows are true labels, columns predicted
// labels, both indexed in training-label order.
using ConfusionMatrix = std::array<std::array<std::int64_t, kTrainingLabelCount>, kTrainingLabelCount>;

struct DerivedConfusion {
  ConfusionMap map;
  std::vector<std::string> warnings;
};

// confuse(L') = argmax over predicted labels other than L' of the row count,
// earlier global label order on ties. Rows with no off-diagonal mass are
// omitted with a warning.
DerivedConfusion derive_confusion_map(const ConfusionMatrix& matrix);

enum class FrequencyScope { kAll, kInterSentential };

std::string_view frequency_scope_name(FrequencyScope scope);
FrequencyScope parse_frequency_scope(std::string_view text);

class FrequencyTable {
 public:
  FrequencyTable() = default;

  static FrequencyTable from_counts(const std::map<RelationLabel, std::int64_t>& counts,
                                    FrequencyScope scope);
  // Reference table of source training counts shipped with the library.
  static FrequencyTable bundled_source_train();

  double frequency(RelationLabel label) const;
  bool contains(RelationLabel label) const { return entries_.contains(label); }
  FrequencyScope scope() const { return scope_; }
  const std::map<RelationLabel, double>& entries() const { return entries_; }

 private:
  std::map<RelationLabel, double> entries_;
  FrequencyScope scope_ = FrequencyScope::kInterSentential;
};

inline constexpr double kRareThreshold = 0.05;

// True iff freq(label) < threshold. Missing label -> Error.
bool is_rare(RelationLabel label, const FrequencyTable& freq, double threshold = kRareThreshold);

}  // namespace discosyn

#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "labels.hpp"
#include "synthetic.hpp"

namespace discosyn {

enum class MissingConfusionPolicy { kError, kPassThrough };

struct ScreenContext {
  const ConfusionMap* cmap = nullptr;
  const FrequencyTable* freq = nullptr;
  MissingConfusionPolicy missing = MissingConfusionPolicy::kError;
  double rare_threshold = kRareThreshold;
};

// Keep iff L_pred == L'.
bool strict_screen(const SyntheticInstance& instance);
// Keep iff L_pred != confuse(L').
bool confusion_screen(const SyntheticInstance& instance, const ConfusionMap& cmap,
                      MissingConfusionPolicy missing = MissingConfusionPolicy::kError,
                      std::vector<std::string>* warnings = nullptr);
// Confusion screen for rare intended labels, strict otherwise.
bool combi_screen(const SyntheticInstance& instance, const ConfusionMap& cmap, const FrequencyTable& freq,
                  MissingConfusionPolicy missing = MissingConfusionPolicy::kError,
                  double rare_threshold = kRareThreshold, std::vector<std::string>* warnings = nullptr);

bool apply_screen(ScreenKind kind, const SyntheticInstance& instance, const ScreenContext& context,
                  std::vector<std::string>* warnings = nullptr);

struct StratumKey {
  DomainTag domain;
  std::string backend;
  TemplateKind kind = TemplateKind::kDC;
  ScreenKind screen = ScreenKind::kStrict;

  friend auto operator<=>(const StratumKey&, const StratumKey&) = default;
};

struct StratumCounts {
  std::size_t candidates = 0;
  std::size_t kept = 0;
  std::map<RelationLabel, std::size_t> kept_per_label;
};

class ScreeningReport {
 public:
  void record(const StratumKey& key, RelationLabel intended, bool kept);
  // Associative, order-independent merge.
  void merge(const ScreeningReport& other);

  const std::map<StratumKey, StratumCounts>& strata() const { return strata_; }
  std::size_t total_candidates() const;
  std::size_t total_kept() const;

  // Tab-separated: one row per domain, one column per backend/template/screen.
  std::string to_table() const;

  nlohmann::ordered_json to_json() const;
  static ScreeningReport from_json(const nlohmann::json& j);

 private:
  std::map<StratumKey, StratumCounts> strata_;
};

struct ScreenBatchResult {
  std::vector<SyntheticInstance> kept;  // input order, verdict recorded
  ScreeningReport report;
  std::vector<std::string> warnings;
};

ScreenBatchResult screen_batch(const std::vector<SyntheticInstance>& batch, ScreenKind kind,
                               const ScreenContext& context);

}  // namespace discosyn

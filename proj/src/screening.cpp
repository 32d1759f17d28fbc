#include "screening.hpp"

#include <set>
#include <sstream>

#include "error.hpp"

namespace discosyn {
namespace {

RelationLabel prediction_of(const SyntheticInstance& instance) {
  if (!instance.predicted()) fail(ErrorCode::kState, "instance " + instance.pair.doc_id + " has no prediction");
  return *instance.predicted();
}

}  // namespace

bool strict_screen(const SyntheticInstance& instance) { return prediction_of(instance) == instance.intended; }

bool confusion_screen(const SyntheticInstance& instance, const ConfusionMap& cmap, MissingConfusionPolicy missing,
                      std::vector<std::string>* warnings) {
  const RelationLabel predicted = prediction_of(instance);
  if (!cmap.contains(instance.intended)) {
    if (missing == MissingConfusionPolicy::kError) {
      fail(ErrorCode::kUnknownLabel,
           "confusion map has no entry for " + std::string(label_name(instance.intended)));
    }
    if (warnings) warnings->push_back("no confusion entry for " + std::string(label_name(instance.intended)) + "; kept");
    return true;
  }
  return predicted != confusion_of(instance.intended, cmap);
}

bool combi_screen(const SyntheticInstance& instance, const ConfusionMap& cmap, const FrequencyTable& freq,
                  MissingConfusionPolicy missing, double rare_threshold, std::vector<std::string>* warnings) {
  if (is_rare(instance.intended, freq, rare_threshold)) return confusion_screen(instance, cmap, missing, warnings);
  return strict_screen(instance);
}

bool apply_screen(ScreenKind kind, const SyntheticInstance& instance, const ScreenContext& context,
                  std::vector<std::string>* warnings) {
  switch (kind) {
    case ScreenKind::kStrict:
      return strict_screen(instance);
    case ScreenKind::kConfusion:
      if (!context.cmap) fail(ErrorCode::kConfig, "confusion screen needs a confusion map");
      return confusion_screen(instance, *context.cmap, context.missing, warnings);
    case ScreenKind::kCombi:
      if (!context.cmap || !context.freq) fail(ErrorCode::kConfig, "combi screen needs a confusion map and frequencies");
      return combi_screen(instance, *context.cmap, *context.freq, context.missing, context.rare_threshold, warnings);
  }
  fail(ErrorCode::kInvalidArgument, "unknown screen kind");
}

void ScreeningReport::record(const StratumKey& key, RelationLabel intended, bool kept) {
  StratumCounts& counts = strata_[key];
  ++counts.candidates;
  if (kept) {
    ++counts.kept;
    ++counts.kept_per_label[intended];
  }
}

void ScreeningReport::merge(const ScreeningReport& other) {
  for (const auto& [key, counts] : other.strata_) {
    StratumCounts& mine = strata_[key];
    mine.candidates += counts.candidates;
    mine.kept += counts.kept;
    for (const auto& [label, n] : counts.kept_per_label) mine.kept_per_label[label] += n;
  }
}

std::size_t ScreeningReport::total_candidates() const {
  std::size_t total = 0;
  for (const auto& [key, counts] : strata_) total += counts.candidates;
  return total;
}

std::size_t ScreeningReport::total_kept() const {
  std::size_t total = 0;
  for (const auto& [key, counts] : strata_) total += counts.kept;
  return total;
}

std::string ScreeningReport::to_table() const {
  struct Column {
    std::string backend;
    TemplateKind kind;
    ScreenKind screen;
    auto operator<=>(const Column&) const = default;
  };
  std::set<Column> columns;
  std::set<DomainTag> domains;
  for (const auto& [key, counts] : strata_) {
    columns.insert({key.backend, key.kind, key.screen});
    domains.insert(key.domain);
  }
  std::ostringstream out;
  out << "LLM";
  for (const auto& c : columns) out << '\t' << c.backend;
  out << "\nprompt";
  for (const auto& c : columns) out << '\t' << template_kind_name(c.kind);
  out << "\nscreen";
  for (const auto& c : columns) out << '\t' << screen_kind_name(c.screen);
  out << '\n';
  for (const auto& domain : domains) {
    out << domain.code();
    for (const auto& c : columns) {
      const auto it = strata_.find({domain, c.backend, c.kind, c.screen});
      out << '\t';
      if (it != strata_.end()) out << it->second.kept << '/' << it->second.candidates;
    }
    out << '\n';
  }
  return out.str();
}

nlohmann::ordered_json ScreeningReport::to_json() const {
  nlohmann::ordered_json strata = nlohmann::ordered_json::array();
  for (const auto& [key, counts] : strata_) {
    nlohmann::ordered_json per_label = nlohmann::ordered_json::object();
    for (const auto& [label, n] : counts.kept_per_label) per_label[std::string(label_name(label))] = n;
    strata.push_back({{"domain", key.domain.code()},
                      {"backend", key.backend},
                      {"template", template_kind_name(key.kind)},
                      {"screen", screen_kind_name(key.screen)},
                      {"candidates", counts.candidates},
                      {"kept", counts.kept},
                      {"kept_per_label", per_label}});
  }
  return {{"strata", strata}};
}

ScreeningReport ScreeningReport::from_json(const nlohmann::json& j) {
  ScreeningReport report;
  try {
    for (const auto& s : j.at("strata")) {
      StratumKey key{DomainTag::parse(s.at("domain").get<std::string>()), s.at("backend").get<std::string>(),
                     parse_template_kind(s.at("template").get<std::string>()),
                     parse_screen_kind(s.at("screen").get<std::string>())};
      StratumCounts& counts = report.strata_[key];
      counts.candidates = s.at("candidates").get<std::size_t>();
      counts.kept = s.at("kept").get<std::size_t>();
      for (const auto& [label, n] : s.at("kept_per_label").items()) {
        counts.kept_per_label[parse_label(label)] = n.get<std::size_t>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("screening report: ") + e.what());
  }
  return report;
}

ScreenBatchResult screen_batch(const std::vector<SyntheticInstance>& batch, ScreenKind kind,
                               const ScreenContext& context) {
  ScreenBatchResult result;
  for (const auto& instance : batch) {
    const bool keep = apply_screen(kind, instance, context, &result.warnings);
    result.report.record({instance.domain, instance.backend, instance.kind, kind}, instance.intended, keep);
    if (keep) {
      SyntheticInstance kept = instance;
      kept.set_verdict(kind, true);
      result.kept.push_back(std::move(kept));
    }
  }
  return result;
}

}  // namespace discosyn

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaptation.hpp"
#include "corpus.hpp"

namespace discosyn {

struct PseudoLabeledInstance {
  ArgumentPair pair;
  RelationLabel label = RelationLabel::kConjunction;
  double confidence = 0.0;
  std::vector<double> scores;  // over training_label_set()
  DomainTag domain;

  LabeledInstance as_labeled() const;
  friend bool operator==(const PseudoLabeledInstance&, const PseudoLabeledInstance&) = default;
};

struct PseudoLabelResult {
  std::vector<PseudoLabeledInstance> instances;  // grouped by domain in request order
  std::map<DomainTag, std::size_t> available_pairs;
  std::vector<std::string> warnings;
};

inline constexpr std::size_t kDefaultPseudoPerDomain = 12000;

// Labels every adjacent pair of the documents in each requested domain, then
// keeps a uniform sample of per_domain_n per domain in document order. An
// empty domain list means every domain present in docs, in sorted order.
PseudoLabelResult pseudo_label_corpus(const std::vector<RawDocument>& docs, const Model& model,
                                      std::size_t per_domain_n = kDefaultPseudoPerDomain, std::uint64_t seed = 0,
                                      const std::vector<DomainTag>& domains = {}, std::size_t parallelism = 1);

std::vector<PseudoLabeledInstance> filter_by_confidence(const std::vector<PseudoLabeledInstance>& instances,
                                                        double min_confidence);

nlohmann::ordered_json to_record(const PseudoLabeledInstance& instance);
PseudoLabeledInstance pseudo_from_record(const nlohmann::json& record);
std::string write_pseudo_records(const std::vector<PseudoLabeledInstance>& instances);
std::vector<PseudoLabeledInstance> read_pseudo_records(std::string_view content);

}  // namespace discosyn

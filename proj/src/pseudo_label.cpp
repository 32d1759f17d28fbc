#include "pseudo_label.hpp"

#include <algorithm>
#include <sstream>

#include "error.hpp"

namespace discosyn {

LabeledInstance PseudoLabeledInstance::as_labeled() const {
  LabeledInstance out;
  out.pair = pair;
  out.label = label;
  out.domain = domain;
  out.provenance = Provenance::kPseudoLabeled;
  return out;
}

PseudoLabelResult pseudo_label_corpus(const std::vector<RawDocument>& docs, const Model& model,
                                      std::size_t per_domain_n, std::uint64_t seed,
                                      const std::vector<DomainTag>& domains, std::size_t parallelism) {
  if (!model.trained()) fail(ErrorCode::kState, "pseudo-labeling needs a trained model");
  std::vector<DomainTag> requested = domains;
  if (requested.empty()) {
    std::set<DomainTag> present;
    for (const auto& doc : docs) present.insert(doc.domain);
    requested.assign(present.begin(), present.end());
  }

  PseudoLabelResult result;
  for (const DomainTag& domain : requested) {
    std::vector<ArgumentPair> pairs;
    for (const auto& doc : docs) {
      if (doc.domain != domain) continue;
      auto built = make_adjacent_pairs(doc);
      pairs.insert(pairs.end(), built.pairs.begin(), built.pairs.end());
      result.warnings.insert(result.warnings.end(), built.warnings.begin(), built.warnings.end());
    }
    if (pairs.empty()) fail(ErrorCode::kInvalidArgument, "no adjacent sentence pairs for domain " + domain.code());
    result.available_pairs[domain] = pairs.size();
    if (pairs.size() < per_domain_n) {
      std::ostringstream msg;
      msg << "domain " << domain.code() << ": only " << pairs.size() << " pairs available, " << per_domain_n
          << " requested";
      result.warnings.push_back(msg.str());
    }

    Rng rng(mix_seed(seed, "pseudo-label:" + domain.code()));
    const auto chosen = rng.sample_indices(pairs.size(), std::min(per_domain_n, pairs.size()));
    std::vector<ArgumentPair> sample;
    sample.reserve(chosen.size());
    for (std::size_t index : chosen) sample.push_back(std::move(pairs[index]));

    // The baseline sees the raw text, as it did during source training.
    const auto predictions = predict_batch(model, sample, std::nullopt, parallelism);
    for (std::size_t i = 0; i < sample.size(); ++i) {
      PseudoLabeledInstance instance;
      instance.pair = std::move(sample[i]);
      instance.label = predictions[i].label;
      instance.scores = predictions[i].scores;
      instance.confidence = *std::max_element(instance.scores.begin(), instance.scores.end());
      instance.domain = domain;
      result.instances.push_back(std::move(instance));
    }
  }
  return result;
}

std::vector<PseudoLabeledInstance> filter_by_confidence(const std::vector<PseudoLabeledInstance>& instances,
                                                        double min_confidence) {
  if (!(min_confidence >= 0.0 && min_confidence <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "confidence threshold must lie in [0, 1]");
  }
  std::vector<PseudoLabeledInstance> out;
  std::copy_if(instances.begin(), instances.end(), std::back_inserter(out),
               [&](const PseudoLabeledInstance& i) { return i.confidence >= min_confidence; });
  return out;
}

nlohmann::ordered_json to_record(const PseudoLabeledInstance& instance) {
  auto record = to_record(instance.as_labeled());
  record["confidence"] = instance.confidence;
  record["scores"] = instance.scores;
  return record;
}

PseudoLabeledInstance pseudo_from_record(const nlohmann::json& record) {
  const LabeledInstance base = labeled_from_record(record);
  PseudoLabeledInstance out;
  out.pair = base.pair;
  out.label = base.label;
  out.domain = base.domain;
  try {
    out.confidence = record.at("confidence").get<double>();
    if (record.contains("scores")) out.scores = record["scores"].get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormat, std::string("pseudo-labeled record: ") + e.what());
  }
  if (!out.scores.empty()) {
    if (out.scores.size() != kTrainingLabelCount) fail(ErrorCode::kFormat, "score vector has the wrong length");
    if (training_label_set()[argmax_index(out.scores)] != out.label) {
      fail(ErrorCode::kFormat, "pseudo label disagrees with its score vector");
    }
  }
  return out;
}

std::string write_pseudo_records(const std::vector<PseudoLabeledInstance>& instances) {
  std::string out;
  for (const auto& instance : instances) out += to_record(instance).dump() + "\n";
  return out;
}

std::vector<PseudoLabeledInstance> read_pseudo_records(std::string_view content) {
  std::vector<PseudoLabeledInstance> out;
  for (const auto& [line, record] : parse_jsonl(content)) {
    try {
      out.push_back(pseudo_from_record(record));
    } catch (const Error& e) {
      fail(e.code(), "line " + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace discosyn

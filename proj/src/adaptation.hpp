#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "classifier.hpp"
#include "error.hpp"
#include "corpus.hpp"
#include "synthetic.hpp"
#include "util.hpp"

namespace discosyn {

std::string_view loss_kind_name(LossKind kind);
LossKind parse_loss_kind(std::string_view text);

struct TrainingConfig {
  int epochs = 3;
  double learning_rate = 1e-4;
  // Full-batch gradient steps per epoch.
  int steps_per_epoch = 1;
  std::uint64_t seed = 0;
  LossSpec loss;
  // Empty means the regime's default groups.
  std::set<ParamGroup> trainable_groups;
  // Invariance adaptation: whether the relation head is updated too.
  bool invariance_trains_head = true;

  void validate() const;
  nlohmann::ordered_json to_json() const;
};

struct AdapterState {
  std::vector<double> prefix;
  std::size_t prefix_length = 0;
  std::size_t width = 0;
  std::string base_checksum;  // encoder + head of the frozen base
};

class Model {
 public:
  Model() = default;
  explicit Model(std::unique_ptr<ClassifierBackend> backend);
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  bool trained() const { return trained_; }
  const ClassifierBackend& backend() const;
  ClassifierBackend& backend();
  const std::string& id() const { return id_; }
  const nlohmann::ordered_json& manifest() const { return manifest_; }
  const std::optional<AdapterState>& adapter() const { return adapter_; }

  // Encoder and head parameters together.
  std::string base_checksum() const;

  void mark_trained(nlohmann::ordered_json manifest, std::optional<AdapterState> adapter = std::nullopt);

 private:
  std::unique_ptr<ClassifierBackend> backend_;
  bool trained_ = false;
  std::string id_;
  nlohmann::ordered_json manifest_;
  std::optional<AdapterState> adapter_;
};

struct Prediction {
  RelationLabel label = RelationLabel::kConjunction;
  std::vector<double> scores;
};

Prediction predict(const Model& model, const ArgumentPair& pair, const std::optional<DomainTag>& domain = std::nullopt);
std::vector<Prediction> predict_batch(const Model& model, const std::vector<ArgumentPair>& pairs,
                                      const std::optional<DomainTag>& domain = std::nullopt,
                                      std::size_t parallelism = 1);

struct BaseTrainingResult {
  Model model;
  ConfusionMatrix dev_confusion{};
  double dev_accuracy = 0.0;
};

BaseTrainingResult train_base(const std::vector<LabeledInstance>& train, const std::vector<LabeledInstance>& dev,
                              const TrainingConfig& config, const ClassifierBackend& prototype);

// Trains from scratch on the seeded shuffle of source + synthetic.
Model adapt_concat(const std::vector<LabeledInstance>& source, const std::vector<LabeledInstance>& synthetic,
                   const TrainingConfig& config, const ClassifierBackend& prototype);

// Only the prefix group moves; encoder and head stay bit-identical.
Model adapt_prefix(const Model& base, const std::vector<LabeledInstance>& synthetic, const TrainingConfig& config);

// Minimizes L_CE - lambda * L_IV over the synthetic data, where L_IV is the
// discriminator's real-vs-synthetic cross-entropy and the discriminator itself
// minimizes L_IV. Each epoch draws a real sample matched to the synthetic
// size. With config.loss.kind == kCE this is plain fine-tuning.
Model adapt_invariance(const Model& base, const std::vector<LabeledInstance>& synthetic,
                       const std::vector<LabeledInstance>& real_reference, const TrainingConfig& config);

// Prefix parameter budget at a transformer shape: key and value prefixes of
// width prefix_dim at every layer.
struct TransformerShape {
  std::size_t layers = 12;
  std::size_t hidden = 768;
  std::size_t prefix_dim = 512;
};

std::size_t prefix_parameter_count(const TransformerShape& shape, std::size_t prefix_length);
// Prefix length whose parameter count is closest to the budget.
std::size_t prefix_length_for_budget(const TransformerShape& shape, std::size_t budget = 7'000'000);

LabeledInstance prepend_domain_token(LabeledInstance instance, const DomainTag& domain);
SyntheticInstance prepend_domain_token(SyntheticInstance instance, const DomainTag& domain);

// Largest-remainder allocation of target_size over strata proportional to
// their sizes; ties go to the earlier stratum. Returns per-stratum quotas in
// the order of `sizes`.
std::vector<std::size_t> largest_remainder_quotas(const std::vector<std::size_t>& sizes, std::size_t target_size);

template <typename T, typename KeyFn>
std::vector<T> stratified_downsample(const std::vector<T>& data, std::size_t target_size, KeyFn key_of,
                                     std::uint64_t seed);

std::vector<LabeledInstance> stratified_downsample(const std::vector<LabeledInstance>& data, std::size_t target_size,
                                                   std::uint64_t seed);

// Model artifacts: a directory with params.bin, model.json (backend shape,
// checksums, adapter) and manifest.json (training manifest); written to a
// temporary sibling and renamed into place.
void save_model(const Model& model, const std::filesystem::path& dir);
Model load_model(const std::filesystem::path& dir);

// Digest of a training set, recorded in model manifests.
std::string data_fingerprint(const std::vector<LabeledInstance>& data);

// Template implementation

template <typename T, typename KeyFn>
std::vector<T> stratified_downsample(const std::vector<T>& data, std::size_t target_size, KeyFn key_of,
                                     std::uint64_t seed) {
  if (target_size > data.size()) {
    fail(ErrorCode::kInvalidArgument, "target size exceeds the data size");
  }
  using Key = std::decay_t<decltype(key_of(data.front()))>;
  std::map<Key, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < data.size(); ++i) strata[key_of(data[i])].push_back(i);
  std::vector<std::size_t> sizes;
  for (const auto& [key, members] : strata) sizes.push_back(members.size());
  const auto quotas = largest_remainder_quotas(sizes, target_size);
  Rng rng(mix_seed(seed, "stratified-downsample"));
  std::vector<std::size_t> chosen;
  std::size_t s = 0;
  for (const auto& [key, members] : strata) {
    for (std::size_t pick : rng.sample_indices(members.size(), quotas[s])) chosen.push_back(members[pick]);
    ++s;
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<T> out;
  out.reserve(chosen.size());
  for (std::size_t index : chosen) out.push_back(data[index]);
  return out;
}

}  // namespace discosyn

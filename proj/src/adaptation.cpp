#include "adaptation.hpp"

#include <atomic>
#include <cmath>
#include <cstring>
#include <thread>

#include "error.hpp"

namespace discosyn {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view loss_kind_name(LossKind kind) { return kind == LossKind::kCE ? "CE" : "CE_minus_IV"; }

LossKind parse_loss_kind(std::string_view text) {
  const std::string key = to_lower_ascii(trim(text));
  if (key == "ce") return LossKind::kCE;
  if (key == "ce_minus_iv" || key == "ce-iv" || key == "invariance") return LossKind::kCEMinusIV;
  fail(ErrorCode::kConfig, "unknown loss kind '" + std::string(text) + "'");
}

void TrainingConfig::validate() const {
  if (epochs < 1) fail(ErrorCode::kConfig, "epochs must be at least 1");
  if (!(learning_rate > 0.0)) fail(ErrorCode::kConfig, "learning rate must be positive");
  if (steps_per_epoch < 0) fail(ErrorCode::kConfig, "steps per epoch must be non-negative");
  if (loss.lambda < 0.0) fail(ErrorCode::kConfig, "lambda must be non-negative");
}

ordered_json TrainingConfig::to_json() const {
  ordered_json out;
  out["epochs"] = epochs;
  out["learning_rate"] = learning_rate;
  out["steps_per_epoch"] = steps_per_epoch;
  out["seed"] = seed;
  out["loss"] = loss_kind_name(loss.kind);
  if (loss.kind == LossKind::kCEMinusIV) out["lambda"] = loss.lambda;
  ordered_json groups = ordered_json::array();
  for (ParamGroup g : trainable_groups) groups.push_back(param_group_name(g));
  out["trainable_groups"] = groups;
  out["invariance_trains_head"] = invariance_trains_head;
  return out;
}

// Model

Model::Model(std::unique_ptr<ClassifierBackend> backend) : backend_(std::move(backend)) {}

Model::Model(const Model& other)
    : backend_(other.backend_ ? other.backend_->clone() : nullptr),
      trained_(other.trained_),
      id_(other.id_),
      manifest_(other.manifest_),
      adapter_(other.adapter_) {}

Model& Model::operator=(const Model& other) {
  if (this != &other) *this = Model(other);
  return *this;
}

const ClassifierBackend& Model::backend() const {
  if (!backend_) fail(ErrorCode::kState, "model has no backend");
  return *backend_;
}

ClassifierBackend& Model::backend() {
  if (!backend_) fail(ErrorCode::kState, "model has no backend");
  return *backend_;
}

std::string Model::base_checksum() const {
  return sha256_hex(backend().checksum(ParamGroup::kEncoder) + backend().checksum(ParamGroup::kHead));
}

void Model::mark_trained(ordered_json manifest, std::optional<AdapterState> adapter) {
  trained_ = true;
  manifest_ = std::move(manifest);
  adapter_ = std::move(adapter);
  const auto params = backend().parameters();
  id_ = sha256_hex(sha256_hex(std::string_view(reinterpret_cast<const char*>(params.data()), params.size_bytes())) +
                   manifest_.dump())
            .substr(0, 16);
}

// Prediction

Prediction predict(const Model& model, const ArgumentPair& pair, const std::optional<DomainTag>& domain) {
  if (!model.trained()) fail(ErrorCode::kState, "predict called on an untrained model");
  Prediction prediction;
  prediction.scores = model.backend().classify(model.backend().encode(pair, domain));
  prediction.label = training_label_set()[argmax_index(prediction.scores)];
  return prediction;
}

std::vector<Prediction> predict_batch(const Model& model, const std::vector<ArgumentPair>& pairs,
                                      const std::optional<DomainTag>& domain, std::size_t parallelism) {
  if (!model.trained()) fail(ErrorCode::kState, "predict called on an untrained model");
  std::vector<Prediction> out(pairs.size());
  const std::size_t workers = std::max<std::size_t>(1, std::min(parallelism, pairs.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < pairs.size(); ++i) out[i] = predict(model, pairs[i], domain);
    return out;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < pairs.size(); i = next++) out[i] = predict(model, pairs[i], domain);
      });
    }
  }
  return out;
}

// Training

namespace {

struct LabeledData {
  std::vector<ArgumentPair> pairs;
  std::vector<std::size_t> labels;
};

LabeledData split_labeled(const std::vector<LabeledInstance>& data) {
  LabeledData out;
  out.pairs.reserve(data.size());
  out.labels.reserve(data.size());
  for (const auto& instance : data) {
    out.pairs.push_back(instance.pair);
    out.labels.push_back(training_index(instance.label));
  }
  return out;
}

std::map<std::string, std::size_t> provenance_counts(const std::vector<LabeledInstance>& data) {
  std::map<std::string, std::size_t> counts;
  for (const auto& instance : data) ++counts[std::string(provenance_name(instance.provenance))];
  return counts;
}

// Supplies the real-data sample for an epoch; empty when the loss has no IV term.
using RealSampler = std::function<std::vector<ArgumentPair>(int epoch)>;

void gradient_descent(ClassifierBackend& backend, const LabeledData& data, const std::set<ParamGroup>& groups,
                      const TrainingConfig& config, const RealSampler& real_sampler) {
  const auto labeled = backend.prepare(data.pairs);
  const bool with_iv = config.loss.kind == LossKind::kCEMinusIV;
  std::vector<double> gradient;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shared_ptr<const PreparedInputs> real;
    if (with_iv) real = backend.prepare(real_sampler(epoch));
    ObjectiveInputs inputs{labeled.get(), data.labels, real.get(), with_iv ? labeled.get() : nullptr};
    for (int step = 0; step < config.steps_per_epoch; ++step) {
      backend.objective(inputs, config.loss, &gradient);
      auto params = backend.parameters();
      for (ParamGroup g : groups) {
        const GroupRange range = backend.group(g);
        for (std::size_t i = range.offset; i < range.offset + range.size; ++i) {
          params[i] -= config.learning_rate * gradient[i];
        }
      }
    }
  }
}

void check_training_labels(const std::vector<LabeledInstance>& data) {
  for (const auto& instance : data) {
    if (!is_training_label(instance.label)) {
      fail(ErrorCode::kInvalidArgument,
           "label " + std::string(label_name(instance.label)) + " is outside the training label set");
    }
  }
}

Model fit_from_scratch(std::vector<LabeledInstance> data, const TrainingConfig& config,
                       const ClassifierBackend& prototype, ordered_json manifest) {
  config.validate();
  if (data.empty()) fail(ErrorCode::kInvalidArgument, "training set is empty");
  check_training_labels(data);
  Rng rng(mix_seed(config.seed, "shuffle"));
  rng.shuffle(data);
  Model model(prototype.clone());
  model.backend().initialize(config.seed);
  const std::set<ParamGroup> groups =
      config.trainable_groups.empty() ? std::set<ParamGroup>{ParamGroup::kEncoder, ParamGroup::kHead}
                                      : config.trainable_groups;
  gradient_descent(model.backend(), split_labeled(data), groups, config, {});
  manifest["training_size"] = data.size();
  manifest["provenance_counts"] = provenance_counts(data);
  manifest["data_fingerprint"] = data_fingerprint(data);
  manifest["config"] = config.to_json();
  manifest["backend"] = model.backend().shape_json();
  model.mark_trained(std::move(manifest));
  return model;
}

}  // namespace

BaseTrainingResult train_base(const std::vector<LabeledInstance>& train, const std::vector<LabeledInstance>& dev,
                              const TrainingConfig& config, const ClassifierBackend& prototype) {
  ordered_json manifest;
  manifest["method"] = "base";
  BaseTrainingResult result{fit_from_scratch(train, config, prototype, std::move(manifest)), {}, 0.0};
  std::size_t correct = 0;
  for (const auto& instance : dev) {
    const auto prediction = predict(result.model, instance.pair);
    ++result.dev_confusion[training_index(instance.label)][training_index(prediction.label)];
    if (prediction.label == instance.label) ++correct;
  }
  result.dev_accuracy = dev.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(dev.size());
  return result;
}

Model adapt_concat(const std::vector<LabeledInstance>& source, const std::vector<LabeledInstance>& synthetic,
                   const TrainingConfig& config, const ClassifierBackend& prototype) {
  if (source.empty()) fail(ErrorCode::kInvalidArgument, "concat adaptation needs source data");
  std::vector<LabeledInstance> union_data = source;
  union_data.insert(union_data.end(), synthetic.begin(), synthetic.end());
  ordered_json manifest;
  manifest["method"] = synthetic.empty() ? "base" : "concat";
  if (synthetic.empty()) return fit_from_scratch(std::move(union_data), config, prototype, std::move(manifest));
  manifest["n_source"] = source.size();
  manifest["n_synthetic"] = synthetic.size();
  return fit_from_scratch(std::move(union_data), config, prototype, std::move(manifest));
}

Model adapt_prefix(const Model& base, const std::vector<LabeledInstance>& synthetic, const TrainingConfig& config) {
  config.validate();
  if (!base.trained()) fail(ErrorCode::kState, "prefix adaptation needs a trained base model");
  if (synthetic.empty()) fail(ErrorCode::kInvalidArgument, "prefix adaptation needs data");
  for (ParamGroup g : config.trainable_groups) {
    if (g != ParamGroup::kPrefix) {
      fail(ErrorCode::kConfig, "prefix adaptation cannot train the " + std::string(param_group_name(g)) + " group");
    }
  }
  check_training_labels(synthetic);
  Model model = base;
  const std::string before = model.base_checksum();
  std::vector<LabeledInstance> data = synthetic;
  Rng rng(mix_seed(config.seed, "shuffle"));
  rng.shuffle(data);
  gradient_descent(model.backend(), split_labeled(data), {ParamGroup::kPrefix}, config, {});
  if (model.base_checksum() != before) fail(ErrorCode::kState, "prefix adaptation modified frozen parameters");

  AdapterState adapter;
  const auto prefix = model.backend().group_view(ParamGroup::kPrefix);
  adapter.prefix.assign(prefix.begin(), prefix.end());
  adapter.width = model.backend().shape_json().value("hidden_dim", std::size_t{0});
  adapter.prefix_length = adapter.width == 0 ? 0 : adapter.prefix.size() / adapter.width;
  adapter.base_checksum = before;

  ordered_json manifest;
  manifest["method"] = "prefix";
  manifest["base_model"] = base.id();
  manifest["training_size"] = data.size();
  manifest["provenance_counts"] = provenance_counts(data);
  manifest["data_fingerprint"] = data_fingerprint(data);
  manifest["config"] = config.to_json();
  manifest["backend"] = model.backend().shape_json();
  manifest["trainable_parameters"] = model.backend().parameter_count(ParamGroup::kPrefix);
  model.mark_trained(std::move(manifest), std::move(adapter));
  return model;
}

Model adapt_invariance(const Model& base, const std::vector<LabeledInstance>& synthetic,
                       const std::vector<LabeledInstance>& real_reference, const TrainingConfig& config) {
  config.validate();
  if (!base.trained()) fail(ErrorCode::kState, "invariance adaptation needs a trained base model");
  if (synthetic.empty()) fail(ErrorCode::kInvalidArgument, "invariance adaptation needs synthetic data");
  const bool with_iv = config.loss.kind == LossKind::kCEMinusIV;
  if (with_iv && real_reference.empty()) {
    fail(ErrorCode::kInvalidArgument, "invariance loss needs real reference data");
  }
  check_training_labels(synthetic);

  Model model = base;
  std::vector<LabeledInstance> data = synthetic;
  Rng rng(mix_seed(config.seed, "shuffle"));
  rng.shuffle(data);

  std::set<ParamGroup> groups = config.trainable_groups;
  if (groups.empty()) {
    groups = {ParamGroup::kEncoder};
    if (config.invariance_trains_head) groups.insert(ParamGroup::kHead);
  }
  if (with_iv) {
    groups.insert(ParamGroup::kDiscriminator);
    model.backend().zero_group(ParamGroup::kDiscriminator);
  }
  const std::size_t matched = std::min(data.size(), real_reference.size());
  RealSampler sampler = [&](int epoch) {
    Rng sample_rng(mix_seed(config.seed, "real-sample:" + std::to_string(epoch)));
    std::vector<ArgumentPair> pairs;
    for (std::size_t index : sample_rng.sample_indices(real_reference.size(), matched)) {
      pairs.push_back(real_reference[index].pair);
    }
    return pairs;
  };
  gradient_descent(model.backend(), split_labeled(data), groups, config, sampler);
  // The discriminator only exists during training.
  model.backend().zero_group(ParamGroup::kDiscriminator);

  ordered_json manifest;
  manifest["method"] = with_iv ? "invariance" : "finetune";
  manifest["base_model"] = base.id();
  manifest["training_size"] = data.size();
  if (with_iv) manifest["real_sample_size"] = matched;
  manifest["provenance_counts"] = provenance_counts(data);
  manifest["data_fingerprint"] = data_fingerprint(data);
  manifest["config"] = config.to_json();
  manifest["backend"] = model.backend().shape_json();
  model.mark_trained(std::move(manifest));
  return model;
}

// Prefix budget

std::size_t prefix_parameter_count(const TransformerShape& shape, std::size_t prefix_length) {
  return prefix_length * shape.layers * 2 * shape.prefix_dim;
}

std::size_t prefix_length_for_budget(const TransformerShape& shape, std::size_t budget) {
  const std::size_t per_position = prefix_parameter_count(shape, 1);
  if (per_position == 0) fail(ErrorCode::kConfig, "degenerate transformer shape");
  return std::max<std::size_t>(1, (budget + per_position / 2) / per_position);
}

// Domain tokens

LabeledInstance prepend_domain_token(LabeledInstance instance, const DomainTag& domain) {
  instance.pair.arg1 = with_domain_token(instance.pair.arg1, domain);
  return instance;
}

SyntheticInstance prepend_domain_token(SyntheticInstance instance, const DomainTag& domain) {
  instance.pair.arg1 = with_domain_token(instance.pair.arg1, domain);
  return instance;
}

// Downsampling

std::vector<std::size_t> largest_remainder_quotas(const std::vector<std::size_t>& sizes, std::size_t target_size) {
  std::size_t total = 0;
  for (std::size_t s : sizes) total += s;
  if (target_size > total) fail(ErrorCode::kInvalidArgument, "target size exceeds the data size");
  std::vector<std::size_t> quotas(sizes.size(), 0);
  if (total == 0) return quotas;
  // exact integer arithmetic: share_i = sizes_i * target / total
  std::vector<std::pair<std::size_t, std::size_t>> remainders;  // (remainder numerator, index)
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    const unsigned __int128 product = static_cast<unsigned __int128>(sizes[i]) * target_size;
    quotas[i] = static_cast<std::size_t>(product / total);
    remainders.emplace_back(static_cast<std::size_t>(product % total), i);
    assigned += quotas[i];
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < target_size; ++r, ++assigned) ++quotas[remainders[r].second];
  return quotas;
}

std::vector<LabeledInstance> stratified_downsample(const std::vector<LabeledInstance>& data, std::size_t target_size,
                                                   std::uint64_t seed) {
  return stratified_downsample(
      data, target_size, [](const LabeledInstance& i) { return std::make_pair(i.domain, i.label); }, seed);
}

// Artifacts

std::string data_fingerprint(const std::vector<LabeledInstance>& data) { return sha256_hex(write_records(data)); }

void save_model(const Model& model, const std::filesystem::path& dir) {
  if (!model.trained()) fail(ErrorCode::kState, "cannot save an untrained model");
  const auto& backend = model.backend();
  const auto params = backend.parameters();
  ordered_json meta;
  meta["artifact_id"] = model.id();
  meta["shape"] = backend.shape_json();
  meta["parameter_count"] = params.size();
  ordered_json groups;
  for (ParamGroup g : {ParamGroup::kEncoder, ParamGroup::kPrefix, ParamGroup::kHead, ParamGroup::kDiscriminator}) {
    groups[std::string(param_group_name(g))] = {{"size", backend.parameter_count(g)}, {"sha256", backend.checksum(g)}};
  }
  meta["groups"] = groups;
  if (const auto& adapter = model.adapter()) {
    meta["adapter"] = {{"prefix_length", adapter->prefix_length},
                       {"width", adapter->width},
                       {"base_checksum", adapter->base_checksum}};
  }

  std::filesystem::path tmp = dir;
  tmp += ".tmp";
  std::filesystem::remove_all(tmp);
  std::filesystem::create_directories(tmp);
  write_file_atomic(tmp / "params.bin",
                    std::string_view(reinterpret_cast<const char*>(params.data()), params.size_bytes()));
  write_file_atomic(tmp / "model.json", meta.dump(2) + "\n");
  write_file_atomic(tmp / "manifest.json", model.manifest().dump(2) + "\n");
  std::filesystem::remove_all(dir);
  std::filesystem::rename(tmp, dir);
}

Model load_model(const std::filesystem::path& dir) {
  json meta;
  ordered_json manifest;
  try {
    meta = json::parse(read_file(dir / "model.json"));
    manifest = ordered_json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, "corrupt model artifact " + dir.string() + ": " + e.what());
  }
  Model model(make_classifier_backend(meta.at("shape")));
  const std::string blob = read_file(dir / "params.bin");
  auto params = model.backend().parameters();
  if (blob.size() != params.size_bytes()) fail(ErrorCode::kFormat, "parameter blob size mismatch in " + dir.string());
  std::memcpy(params.data(), blob.data(), blob.size());
  std::optional<AdapterState> adapter;
  if (meta.contains("adapter")) {
    AdapterState state;
    const auto prefix = model.backend().group_view(ParamGroup::kPrefix);
    state.prefix.assign(prefix.begin(), prefix.end());
    state.prefix_length = meta["adapter"].at("prefix_length").get<std::size_t>();
    state.width = meta["adapter"].at("width").get<std::size_t>();
    state.base_checksum = meta["adapter"].at("base_checksum").get<std::string>();
    adapter = std::move(state);
  }
  model.mark_trained(std::move(manifest), std::move(adapter));
  if (model.id() != meta.at("artifact_id").get<std::string>()) {
    fail(ErrorCode::kFormat, "artifact id mismatch in " + dir.string());
  }
  return model;
}

}  // namespace discosyn

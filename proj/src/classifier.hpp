#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "corpus.hpp"
#include "labels.hpp"

namespace discosyn {

enum class ParamGroup { kEncoder, kHead, kPrefix, kDiscriminator };

std::string_view param_group_name(ParamGroup group);
ParamGroup parse_param_group(std::string_view text);

enum class LossKind { kCE, kCEMinusIV };

struct LossSpec {
  LossKind kind = LossKind::kCE;
  double lambda = 0.1;
};

struct GroupRange {
  std::size_t offset = 0;
  std::size_t size = 0;
};

// Backend-specific encoding of a list of pairs, computed once per training run.
class PreparedInputs {
 public:
  virtual ~PreparedInputs() = default;
  virtual std::size_t size() const = 0;
};

struct ObjectiveInputs {
  const PreparedInputs* labeled = nullptr;       // cross-entropy examples
  std::span<const std::size_t> labels;           // training-label indices, one per labeled example
  const PreparedInputs* real = nullptr;          // invariance: real source pairs
  const PreparedInputs* synthetic = nullptr;     // invariance: synthetic pairs
};

struct ObjectiveValue {
  double ce = 0.0;
  double iv = 0.0;
  double total = 0.0;  // ce - lambda * iv
};

// What the adaptation regimes need from a relation classifier. Parameters are
// one flat vector partitioned into groups, so regimes can freeze, checksum
// and update groups without knowing the architecture.
class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;

  virtual std::unique_ptr<ClassifierBackend> clone() const = 0;
  virtual std::string name() const = 0;
  virtual nlohmann::json shape_json() const = 0;

  // Pooled encoder features; the domain token, when given, is prepended to Arg1.
  virtual std::vector<double> encode(const ArgumentPair& pair, const std::optional<DomainTag>& domain) const = 0;
  // Probabilities over training_label_set(), in that order.
  virtual std::vector<double> classify(const std::vector<double>& features) const = 0;

  virtual std::shared_ptr<const PreparedInputs> prepare(std::span<const ArgumentPair> pairs) const = 0;

  // Returns the objective; if gradient is non-null it receives, per parameter,
  // d(total)/d(theta) for encoder, prefix and head, and d(iv)/d(theta) for the
  // discriminator, which minimizes its own loss.
  virtual ObjectiveValue objective(const ObjectiveInputs& inputs, const LossSpec& loss,
                                   std::vector<double>* gradient) const = 0;

  virtual void initialize(std::uint64_t seed) = 0;
  virtual std::span<double> parameters() = 0;
  virtual std::span<const double> parameters() const = 0;
  virtual GroupRange group(ParamGroup group) const = 0;

  std::size_t parameter_count(ParamGroup g) const { return group(g).size; }
  std::span<const double> group_view(ParamGroup g) const;
  // sha256 over the raw bytes of the group's parameters.
  std::string checksum(ParamGroup g) const;
  void zero_group(ParamGroup g);
};

// Index of the largest score; the earliest index wins ties, i.e. the first
// label in global order.
std::size_t argmax_index(std::span<const double> scores);

struct ReferenceShape {
  std::size_t feature_dim = 4096;
  std::size_t hidden_dim = 32;
  std::size_t prefix_length = 1;
  double init_scale = 0.1;
};

// Hashed token-count features fed through a tanh encoder, a softmax relation
// head and a logistic domain discriminator. The prefix group is a block of
// learned vectors added to the encoder pre-activation, standing in for
// prepended continuous prompts.
class ReferenceClassifier : public ClassifierBackend {
 public:
  explicit ReferenceClassifier(ReferenceShape shape = {});

  std::unique_ptr<ClassifierBackend> clone() const override;
  std::string name() const override { return "reference"; }
  nlohmann::json shape_json() const override;

  std::vector<double> encode(const ArgumentPair& pair, const std::optional<DomainTag>& domain) const override;
  std::vector<double> classify(const std::vector<double>& features) const override;
  std::shared_ptr<const PreparedInputs> prepare(std::span<const ArgumentPair> pairs) const override;
  ObjectiveValue objective(const ObjectiveInputs& inputs, const LossSpec& loss,
                           std::vector<double>* gradient) const override;

  void initialize(std::uint64_t seed) override;
  std::span<double> parameters() override { return params_; }
  std::span<const double> parameters() const override { return params_; }
  GroupRange group(ParamGroup group) const override;

  const ReferenceShape& shape() const { return shape_; }

  using SparseVector = std::vector<std::pair<std::uint32_t, double>>;
  SparseVector featurize(const ArgumentPair& pair) const;

 private:
  std::vector<double> hidden(const SparseVector& x) const;
  double discriminator_logit(std::span<const double> h) const;

  ReferenceShape shape_;
  std::vector<double> params_;
  // offsets into params_
  std::size_t enc_w_ = 0, enc_b_ = 0, prefix_ = 0, head_w_ = 0, head_b_ = 0, disc_w_ = 0, disc_b_ = 0;
};

std::unique_ptr<ClassifierBackend> make_classifier_backend(const nlohmann::json& shape);

// Domain tokens: "⟨EP⟩", registered as a single unit by the reference featurizer.
std::string domain_token(const DomainTag& domain);
// Replaces any existing leading domain token, so repeated calls are idempotent.
std::string with_domain_token(std::string_view arg1, const DomainTag& domain);

}  // namespace discosyn

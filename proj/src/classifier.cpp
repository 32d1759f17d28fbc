#include "classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>

#include "error.hpp"
#include "util.hpp"

namespace discosyn {

std::string_view param_group_name(ParamGroup group) {
  switch (group) {
    case ParamGroup::kEncoder: return "encoder";
    case ParamGroup::kHead: return "head";
    case ParamGroup::kPrefix: return "prefix";
    case ParamGroup::kDiscriminator: return "discriminator";
  }
  return "encoder";
}

ParamGroup parse_param_group(std::string_view text) {
  const std::string key = to_lower_ascii(trim(text));
  if (key == "encoder") return ParamGroup::kEncoder;
  if (key == "head") return ParamGroup::kHead;
  if (key == "prefix") return ParamGroup::kPrefix;
  if (key == "discriminator") return ParamGroup::kDiscriminator;
  fail(ErrorCode::kConfig, "unknown parameter group '" + std::string(text) + "'");
}

std::span<const double> ClassifierBackend::group_view(ParamGroup g) const {
  const GroupRange range = group(g);
  return parameters().subspan(range.offset, range.size);
}

std::string ClassifierBackend::checksum(ParamGroup g) const {
  const auto view = group_view(g);
  return sha256_hex(std::string_view(reinterpret_cast<const char*>(view.data()), view.size_bytes()));
}

void ClassifierBackend::zero_group(ParamGroup g) {
  const GroupRange range = group(g);
  auto params = parameters().subspan(range.offset, range.size);
  std::fill(params.begin(), params.end(), 0.0);
}

std::size_t argmax_index(std::span<const double> scores) {
  if (scores.empty()) fail(ErrorCode::kInvalidArgument, "argmax over an empty score vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

// Domain tokens

namespace {
constexpr std::string_view kTokenOpen = "\xE2\x9F\xA8";   // ⟨
constexpr std::string_view kTokenClose = "\xE2\x9F\xA9";  // ⟩
}  // namespace

std::string domain_token(const DomainTag& domain) {
  return std::string(kTokenOpen) + domain.code() + std::string(kTokenClose);
}

std::string with_domain_token(std::string_view arg1, const DomainTag& domain) {
  std::string_view rest = arg1;
  if (rest.starts_with(kTokenOpen)) {
    const auto close = rest.find(kTokenClose);
    if (close != std::string_view::npos) rest.remove_prefix(close + kTokenClose.size());
  }
  return domain_token(domain) + " " + trim(rest);
}

// Reference classifier

namespace {

class SparseInputs : public PreparedInputs {
 public:
  std::vector<ReferenceClassifier::SparseVector> rows;
  std::size_t size() const override { return rows.size(); }
};

const SparseInputs* as_sparse(const PreparedInputs* inputs) {
  if (inputs == nullptr) return nullptr;
  const auto* sparse = dynamic_cast<const SparseInputs*>(inputs);
  if (sparse == nullptr) fail(ErrorCode::kInvalidArgument, "inputs were prepared by a different backend");
  return sparse;
}

bool is_token_byte(unsigned char c) { return c >= 0x80 || std::isalnum(c) || c == '+' || c == '\''; }

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (is_token_byte(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

double log_sum_exp(std::span<const double> values) {
  const double peak = *std::max_element(values.begin(), values.end());
  double sum = 0.0;
  for (double v : values) sum += std::exp(v - peak);
  return peak + std::log(sum);
}

// log(1 + exp(s)), stable for large |s|
double softplus(double s) { return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

double sigmoid(double s) {
  if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
  const double e = std::exp(s);
  return e / (1.0 + e);
}

}  // namespace

ReferenceClassifier::ReferenceClassifier(ReferenceShape shape) : shape_(shape) {
  if (shape_.feature_dim == 0 || shape_.hidden_dim == 0) {
    fail(ErrorCode::kConfig, "reference classifier needs positive feature and hidden dimensions");
  }
  const std::size_t v = shape_.feature_dim;
  const std::size_t h = shape_.hidden_dim;
  const std::size_t k = kTrainingLabelCount;
  enc_w_ = 0;
  enc_b_ = enc_w_ + h * v;
  prefix_ = enc_b_ + h;
  head_w_ = prefix_ + shape_.prefix_length * h;
  head_b_ = head_w_ + k * h;
  disc_w_ = head_b_ + k;
  disc_b_ = disc_w_ + h;
  params_.assign(disc_b_ + 1, 0.0);
}

std::unique_ptr<ClassifierBackend> ReferenceClassifier::clone() const {
  return std::make_unique<ReferenceClassifier>(*this);
}

nlohmann::json ReferenceClassifier::shape_json() const {
  return {{"backend", "reference"},
          {"feature_dim", shape_.feature_dim},
          {"hidden_dim", shape_.hidden_dim},
          {"prefix_length", shape_.prefix_length},
          {"init_scale", shape_.init_scale}};
}

GroupRange ReferenceClassifier::group(ParamGroup group) const {
  switch (group) {
    case ParamGroup::kEncoder: return {enc_w_, prefix_ - enc_w_};
    case ParamGroup::kPrefix: return {prefix_, head_w_ - prefix_};
    case ParamGroup::kHead: return {head_w_, disc_w_ - head_w_};
    case ParamGroup::kDiscriminator: return {disc_w_, params_.size() - disc_w_};
  }
  fail(ErrorCode::kInvalidArgument, "unknown parameter group");
}

void ReferenceClassifier::initialize(std::uint64_t seed) {
  std::fill(params_.begin(), params_.end(), 0.0);
  Rng rng(mix_seed(seed, "reference-init"));
  for (std::size_t i = enc_w_; i < enc_b_; ++i) params_[i] = rng.normal(0.0, shape_.init_scale);
}

ReferenceClassifier::SparseVector ReferenceClassifier::featurize(const ArgumentPair& pair) const {
  std::map<std::uint32_t, double> acc;
  auto add = [&](std::string_view text, std::string_view ns) {
    const auto tokens = tokenize(text);
    if (tokens.empty()) return;
    const double weight = 1.0 / std::sqrt(static_cast<double>(tokens.size()));
    for (const auto& token : tokens) {
      const auto index = static_cast<std::uint32_t>(fnv1a64(std::string(ns) + token) % shape_.feature_dim);
      acc[index] += weight;
    }
  };
  add(pair.arg1, "1:");
  add(pair.arg2, "2:");
  return SparseVector(acc.begin(), acc.end());
}

std::vector<double> ReferenceClassifier::hidden(const SparseVector& x) const {
  const std::size_t h = shape_.hidden_dim;
  std::vector<double> z(params_.begin() + static_cast<std::ptrdiff_t>(enc_b_),
                        params_.begin() + static_cast<std::ptrdiff_t>(enc_b_ + h));
  for (std::size_t l = 0; l < shape_.prefix_length; ++l) {
    for (std::size_t j = 0; j < h; ++j) z[j] += params_[prefix_ + l * h + j];
  }
  for (const auto& [index, value] : x) {
    for (std::size_t j = 0; j < h; ++j) z[j] += params_[enc_w_ + j * shape_.feature_dim + index] * value;
  }
  for (double& v : z) v = std::tanh(v);
  return z;
}

std::vector<double> ReferenceClassifier::encode(const ArgumentPair& pair, const std::optional<DomainTag>& domain) const {
  if (!domain) return hidden(featurize(pair));
  ArgumentPair tagged = pair;
  tagged.arg1 = with_domain_token(pair.arg1, *domain);
  return hidden(featurize(tagged));
}

std::vector<double> ReferenceClassifier::classify(const std::vector<double>& features) const {
  const std::size_t h = shape_.hidden_dim;
  if (features.size() != h) fail(ErrorCode::kInvalidArgument, "feature vector has the wrong dimension");
  std::vector<double> logits(kTrainingLabelCount);
  for (std::size_t k = 0; k < kTrainingLabelCount; ++k) {
    double s = params_[head_b_ + k];
    for (std::size_t j = 0; j < h; ++j) s += params_[head_w_ + k * h + j] * features[j];
    logits[k] = s;
  }
  const double norm = log_sum_exp(logits);
  for (double& v : logits) v = std::exp(v - norm);
  return logits;
}

double ReferenceClassifier::discriminator_logit(std::span<const double> h) const {
  double s = params_[disc_b_];
  for (std::size_t j = 0; j < h.size(); ++j) s += params_[disc_w_ + j] * h[j];
  return s;
}

std::shared_ptr<const PreparedInputs> ReferenceClassifier::prepare(std::span<const ArgumentPair> pairs) const {
  auto prepared = std::make_shared<SparseInputs>();
  prepared->rows.reserve(pairs.size());
  for (const auto& pair : pairs) prepared->rows.push_back(featurize(pair));
  return prepared;
}

ObjectiveValue ReferenceClassifier::objective(const ObjectiveInputs& inputs, const LossSpec& loss,
                                              std::vector<double>* gradient) const {
  const std::size_t v = shape_.feature_dim;
  const std::size_t h = shape_.hidden_dim;
  const std::size_t k_count = kTrainingLabelCount;
  const bool with_iv = loss.kind == LossKind::kCEMinusIV;
  const double lambda = with_iv ? loss.lambda : 0.0;

  std::vector<double> grad_ce;
  std::vector<double> grad_iv;  // encoder/prefix contribution of the invariance term
  if (gradient) {
    gradient->assign(params_.size(), 0.0);
    if (with_iv) grad_iv.assign(prefix_ + shape_.prefix_length * h, 0.0);
  }

  // Backpropagates an encoder-output gradient into `target` for input x.
  auto backprop_encoder = [&](const SparseVector& x, std::span<const double> hid, std::span<const double> dh,
                              std::vector<double>& target) {
    for (std::size_t j = 0; j < h; ++j) {
      const double dz = dh[j] * (1.0 - hid[j] * hid[j]);
      if (dz == 0.0) continue;
      target[enc_b_ + j] += dz;
      for (std::size_t l = 0; l < shape_.prefix_length; ++l) target[prefix_ + l * h + j] += dz;
      for (const auto& [index, value] : x) target[enc_w_ + j * v + index] += dz * value;
    }
  };

  ObjectiveValue value;
  const SparseInputs* labeled = as_sparse(inputs.labeled);
  if (labeled != nullptr && labeled->size() > 0) {
    if (inputs.labels.size() != labeled->size()) fail(ErrorCode::kInvalidArgument, "labels and inputs differ in length");
    const double scale = 1.0 / static_cast<double>(labeled->size());
    std::vector<double> logits(k_count);
    std::vector<double> dh(h);
    for (std::size_t i = 0; i < labeled->size(); ++i) {
      const auto& x = labeled->rows[i];
      const std::size_t y = inputs.labels[i];
      if (y >= k_count) fail(ErrorCode::kInvalidArgument, "label index out of range");
      const auto hid = hidden(x);
      for (std::size_t k = 0; k < k_count; ++k) {
        double s = params_[head_b_ + k];
        for (std::size_t j = 0; j < h; ++j) s += params_[head_w_ + k * h + j] * hid[j];
        logits[k] = s;
      }
      const double norm = log_sum_exp(logits);
      value.ce += (norm - logits[y]) * scale;
      if (!gradient) continue;
      std::fill(dh.begin(), dh.end(), 0.0);
      auto& g = *gradient;
      for (std::size_t k = 0; k < k_count; ++k) {
        const double d_logit = (std::exp(logits[k] - norm) - (k == y ? 1.0 : 0.0)) * scale;
        g[head_b_ + k] += d_logit;
        for (std::size_t j = 0; j < h; ++j) {
          g[head_w_ + k * h + j] += d_logit * hid[j];
          dh[j] += d_logit * params_[head_w_ + k * h + j];
        }
      }
      backprop_encoder(x, hid, dh, g);
    }
  }

  if (with_iv) {
    const SparseInputs* real = as_sparse(inputs.real);
    const SparseInputs* synthetic = as_sparse(inputs.synthetic);
    const std::size_t n_real = real ? real->size() : 0;
    const std::size_t n_syn = synthetic ? synthetic->size() : 0;
    if (n_real + n_syn > 0) {
      const double scale = 1.0 / static_cast<double>(n_real + n_syn);
      std::vector<double> dh(h);
      auto visit = [&](const SparseVector& x, double target_domain) {
        const auto hid = hidden(x);
        const double s = discriminator_logit(hid);
        // binary cross-entropy of the real(1)/synthetic(0) decision
        value.iv += (target_domain > 0.5 ? softplus(-s) : softplus(s)) * scale;
        if (!gradient) return;
        const double ds = (sigmoid(s) - target_domain) * scale;
        auto& g = *gradient;
        g[disc_b_] += ds;
        for (std::size_t j = 0; j < h; ++j) {
          g[disc_w_ + j] += ds * hid[j];
          dh[j] = ds * params_[disc_w_ + j];
        }
        backprop_encoder(x, hid, dh, grad_iv);
      };
      for (std::size_t i = 0; i < n_real; ++i) visit(real->rows[i], 1.0);
      for (std::size_t i = 0; i < n_syn; ++i) visit(synthetic->rows[i], 0.0);
    }
    if (gradient && lambda != 0.0) {
      for (std::size_t i = 0; i < grad_iv.size(); ++i) (*gradient)[i] -= lambda * grad_iv[i];
    }
  }
  value.total = value.ce - lambda * value.iv;
  return value;
}

std::unique_ptr<ClassifierBackend> make_classifier_backend(const nlohmann::json& shape) {
  const std::string backend = shape.value("backend", "reference");
  if (backend != "reference") fail(ErrorCode::kConfig, "unknown classifier backend '" + backend + "'");
  ReferenceShape s;
  s.feature_dim = shape.value("feature_dim", s.feature_dim);
  s.hidden_dim = shape.value("hidden_dim", s.hidden_dim);
  s.prefix_length = shape.value("prefix_length", s.prefix_length);
  s.init_scale = shape.value("init_scale", s.init_scale);
  return std::make_unique<ReferenceClassifier>(s);
}

}  // namespace discosyn

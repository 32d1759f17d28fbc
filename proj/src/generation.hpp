#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "prompts.hpp"
#include "synthetic.hpp"

namespace discosyn {

struct BackendDescriptor {
  std::string name;       // e.g. mistral-7b-instruct
  std::string endpoint;   // service locator; "mock" for the built-in generator
  DecodingParams decoding;
};

// Text-in/text-out generation service. Implementations throw
// Error(kTransport) for failures worth retrying.
class TextBackend {
 public:
  virtual ~TextBackend() = default;
  virtual std::string complete(const std::string& prompt, const DecodingParams& decoding) = 0;
};

class FunctionBackend : public TextBackend {
 public:
  using Fn = std::function<std::string(const std::string&, const DecodingParams&)>;
  explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(const std::string& prompt, const DecodingParams& decoding) override {
    return fn_(prompt, decoding);
  }

 private:
  Fn fn_;
};

// Deterministic stand-in for an instruction-tuned LLM. It recovers the
// intended relation from the prompt and answers with a sentence built from
// that relation's cue words with probability `fidelity`, otherwise from a
// random relation's cues. Answers echo connectives, add list markers and
// trailing sentences the way real models do, so post-processing is exercised.
class MockBackend : public TextBackend {
 public:
  explicit MockBackend(double fidelity = 0.6);
  std::string complete(const std::string& prompt, const DecodingParams& decoding) override;

  // Recovers the relation a rendered prompt asks for; nullopt if unrecognized.
  std::optional<RelationLabel> intended_label(const std::string& prompt) const;

 private:
  double fidelity_;
  ConnectiveMap connectives_;
  std::map<RelationLabel, std::vector<std::string>> cues_;
};

// Cue lexicon shared by the mock generator and the bundled fixtures.
std::map<RelationLabel, std::vector<std::string>> bundled_cue_lexicon();

// POSTs {"model", "prompt", "max_new_tokens", "temperature", "seed"} as JSON
// to an http:// endpoint and reads {"text"} back. Connection failures and 5xx
// responses are transport errors.
class HttpBackend : public TextBackend {
 public:
  HttpBackend(std::string model, std::string endpoint, std::optional<std::string> api_key,
              int timeout_seconds = 60);
  std::string complete(const std::string& prompt, const DecodingParams& decoding) override;

 private:
  std::string model_;
  std::string base_;
  std::string path_;
  std::optional<std::string> api_key_;
  int timeout_seconds_;
};

// Builds the backend named by a descriptor: endpoint "mock" (or "mock:0.8"
// for a custom fidelity) selects MockBackend, http:// URLs select HttpBackend
// with the API key from DISCOSYN_API_KEY_<NAME> or DISCOSYN_API_KEY.
std::unique_ptr<TextBackend> make_backend(const BackendDescriptor& descriptor);

// Persistent raw-text cache. Lookups never modify stored values; the file is
// append-only and replayed on open.
class GenerationCache {
 public:
  GenerationCache() = default;
  explicit GenerationCache(std::filesystem::path file);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& text);
  std::size_t size() const;

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, std::string> entries_;
  std::optional<std::filesystem::path> file_;
};

struct GenerationRequest {
  RenderedPrompt prompt;
  std::string arg1;
  RelationLabel intended = RelationLabel::kConjunction;
  DomainTag domain;
};

struct GenerationResult {
  std::string raw_text;
  std::string arg2;
  GenerationRequest request;
  BackendDescriptor backend;
  bool cache_hit = false;
};

std::string cache_key(const GenerationRequest& request, const BackendDescriptor& backend);

// Normalizes a raw continuation into a single Arg2 sentence: drops an echoed
// "A:" cue, takes the first list item for DR prompts, strips leading
// repetitions of the connective (case-insensitive, optional comma) and cuts
// at the first terminal punctuation followed by space or end. Throws
// Error(kGenerationRejected) when nothing is left.
std::string postprocess(std::string_view raw, TemplateKind kind, std::optional<std::string_view> connective);

// True when text begins with the connective (any is/was variant) at a word
// boundary.
bool begins_with_connective(std::string_view text, std::string_view connective);

struct RetryPolicy {
  int max_attempts = 3;
  int backoff_ms = 100;
};

class Generator {
 public:
  Generator(std::shared_ptr<GenerationCache> cache, RetryPolicy retry = {});

  GenerationResult generate_arg2(const GenerationRequest& request, const BackendDescriptor& descriptor,
                                 TextBackend& backend) const;

  const std::shared_ptr<GenerationCache>& cache() const { return cache_; }

 private:
  std::shared_ptr<GenerationCache> cache_;
  RetryPolicy retry_;
};

enum class ExampleMode { kFixedPerDomainLabel, kPerRequest };

struct BackendSlot {
  BackendDescriptor descriptor;
  std::shared_ptr<TextBackend> backend;
};

struct BatchSpec {
  std::map<DomainTag, std::vector<std::string>> sentences;
  std::vector<RelationLabel> labels;
  std::vector<BackendSlot> backends;
  TemplateKind kind = TemplateKind::kDC;
  std::uint64_t seed = 0;
  std::vector<InContextExample> examples;
  ExampleMode example_mode = ExampleMode::kFixedPerDomainLabel;
  int connective_option = 0;  // 0: seeded choice per request; 1 or 2 pins it
  std::size_t parallelism = 1;
};

struct FailedItem {
  DomainTag domain;
  std::string backend;
  std::size_t sentence_index = 0;
  RelationLabel label = RelationLabel::kConjunction;
  std::string error;
};

struct BatchResult {
  std::vector<SyntheticInstance> instances;
  std::vector<FailedItem> failures;
  std::size_t cache_hits = 0;
};

// One candidate per (domain, backend, sentence, label), ordered by that tuple
// whatever the completion order. Item failures are recorded, never fatal.
BatchResult generate_batch(const BatchSpec& spec, const PromptEngine& engine, const Generator& generator);

// Seeded uniform sample of n of the domain's raw sentences, in corpus order.
std::vector<std::string> sample_sentences(const std::vector<RawDocument>& docs, const DomainTag& domain,
                                          std::size_t n, std::uint64_t seed);

}  // namespace discosyn

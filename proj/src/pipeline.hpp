#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaptation.hpp"
#include "config.hpp"
#include "corpus.hpp"
#include "evaluation.hpp"
#include "generation.hpp"
#include "pseudo_label.hpp"
#include "screening.hpp"

namespace discosyn {

struct BackendSpec {
  std::string name;
  std::string endpoint;
};

enum class AdaptMethod { kConcat, kPrefix, kInvariance };
enum class DataSource { kSynthetic, kPseudo };
enum class DomainMode { kSpecific, kMixed };

std::string_view adapt_method_name(AdaptMethod method);
AdaptMethod parse_adapt_method(std::string_view text);
std::string_view data_source_name(DataSource source);
DataSource parse_data_source(std::string_view text);
std::string_view domain_mode_name(DomainMode mode);
DomainMode parse_domain_mode(std::string_view text);

struct PipelineConfig {
  // data
  std::filesystem::path source;
  std::filesystem::path target;
  std::filesystem::path raw;
  std::filesystem::path examples;
  SplitSpec split = SplitSpec::standard();
  int annotators = kDefaultAnnotators;
  std::vector<DomainTag> domains;
  std::vector<std::uint64_t> seeds;
  std::optional<std::filesystem::path> output_dir;
  std::size_t parallelism = 1;

  nlohmann::json classifier_shape;
  TrainingConfig base_training;
  TrainingConfig adapt_training;

  // generation
  std::vector<BackendSpec> backends;
  std::vector<TemplateKind> templates;
  bool include_similarity = false;
  std::size_t n_arg1 = 4000;
  std::uint64_t generation_seed = 0;
  DecodingParams decoding;
  ExampleMode example_mode = ExampleMode::kFixedPerDomainLabel;
  int connective_option = 0;
  RetryPolicy retry;
  std::optional<std::filesystem::path> cache_file;

  // screening
  std::vector<ScreenKind> screens;
  std::string confusion_source = "derived";  // derived | bundled | path to a map file
  std::string frequency_source = "bundled";  // bundled | source
  double rare_threshold = kRareThreshold;
  MissingConfusionPolicy missing_confusion = MissingConfusionPolicy::kError;

  // adaptation
  std::vector<AdaptMethod> methods;
  std::vector<DataSource> data_sources;
  std::vector<DomainMode> modes;
  std::size_t mixed_target = 10000;
  std::size_t pseudo_per_domain = kDefaultPseudoPerDomain;
  double pseudo_min_confidence = 0.0;

  // evaluation
  EvalProtocol protocol = EvalProtocol::kDiscardAlternatives;
  double alpha = 0.05;
  bool paired = false;

  // Effective configuration, defaults included.
  std::map<std::string, std::string> snapshot;
  std::string resolved_snapshot;

  // Reads every key, validates, and rejects keys nothing consumed.
  static PipelineConfig from_config(const Config& config);
};

struct Variant {
  std::string id;
  AdaptMethod method = AdaptMethod::kConcat;
  DataSource data = DataSource::kSynthetic;
  std::string backend;
  TemplateKind kind = TemplateKind::kDC;
  ScreenKind screen = ScreenKind::kStrict;
  DomainMode mode = DomainMode::kSpecific;
};

std::vector<Variant> enumerate_variants(const PipelineConfig& config);

enum class StageStatus { kPending, kRan, kUpToDate, kFailed, kBlocked, kWouldRun };
std::string_view stage_status_name(StageStatus status);

struct StageOutcome {
  std::string id;
  StageStatus status = StageStatus::kPending;
  std::string message;
};

struct RunOptions {
  // Stage id prefixes to bring up to date (with their dependencies); empty
  // means every stage.
  std::vector<std::string> targets;
  bool dry_run = false;
  // Called as each stage settles.
  std::function<void(const StageOutcome&)> on_stage;
};

struct RunOutcome {
  std::vector<StageOutcome> stages;
  std::vector<std::string> warnings;
  int exit_code = 0;  // 0 success, 1 stage failure, 2 config error, 3 backend error
  std::optional<std::string> report;

  std::size_t count(StageStatus status) const;
};

// The experiment graph over one output directory. Every stage writes one
// directory named by its id; state/stages.json records the parameter and
// input digests each stage last ran with, so reruns skip what is current.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::filesystem::path output_dir);
  // Stages capture the pipeline, so it stays put.
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;
  ~Pipeline();

  // Output directory's stored configuration.
  static Pipeline resume(const std::filesystem::path& output_dir);

  RunOutcome run(const RunOptions& options = {});

  std::vector<std::string> stage_ids() const;
  std::vector<std::string> dependencies(const std::string& stage_id) const;
  const std::filesystem::path& output_dir() const { return out_; }
  const PipelineConfig& config() const { return config_; }

  struct Stage;

 private:
  void build();
  Stage& add(std::string id, std::vector<std::string> deps, nlohmann::ordered_json params,
             std::vector<std::filesystem::path> external_inputs,
             std::function<void(const std::filesystem::path&, nlohmann::ordered_json&, std::vector<std::string>&)> fn);
  std::filesystem::path dir(const std::string& stage_id) const { return out_ / stage_id; }
  void write_manifests(const std::map<std::string, StageOutcome>& outcomes) const;
  void render_report(const std::filesystem::path& out, nlohmann::ordered_json& artifacts,
                     std::vector<std::string>& warnings) const;

  PipelineConfig config_;
  std::filesystem::path out_;
  std::vector<Variant> variants_;
  std::vector<std::unique_ptr<Stage>> stages_;
  std::map<std::string, std::size_t> index_;
  std::shared_ptr<GenerationCache> cache_;
  // Dependencies of the running stage that completed; soft stages read only these.
  std::set<std::string> usable_;
};

}  // namespace discosyn

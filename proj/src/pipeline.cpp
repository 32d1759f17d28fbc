#include "pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <set>
#include <sstream>

#include "error.hpp"
#include "pseudo_label.hpp"
#include "util.hpp"

namespace discosyn {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

std::string_view adapt_method_name(AdaptMethod method) {
  switch (method) {
    case AdaptMethod::kConcat: return "concat";
    case AdaptMethod::kPrefix: return "prefix";
    case AdaptMethod::kInvariance: return "invariance";
  }
  return "concat";
}

AdaptMethod parse_adapt_method(std::string_view text) {
  const std::string key = to_lower_ascii(trim(text));
  if (key == "concat") return AdaptMethod::kConcat;
  if (key == "prefix") return AdaptMethod::kPrefix;
  if (key == "invariance" || key == "iv") return AdaptMethod::kInvariance;
  fail(ErrorCode::kConfig, "unknown adaptation method '" + std::string(text) + "'");
}

std::string_view data_source_name(DataSource source) {
  return source == DataSource::kSynthetic ? "synthetic" : "pseudo";
}

DataSource parse_data_source(std::string_view text) {
  const std::string key = to_lower_ascii(trim(text));
  if (key == "synthetic" || key == "syn") return DataSource::kSynthetic;
  if (key == "pseudo") return DataSource::kPseudo;
  fail(ErrorCode::kConfig, "unknown adaptation data source '" + std::string(text) + "'");
}

std::string_view domain_mode_name(DomainMode mode) { return mode == DomainMode::kSpecific ? "specific" : "mixed"; }

DomainMode parse_domain_mode(std::string_view text) {
  const std::string key = to_lower_ascii(trim(text));
  if (key == "specific") return DomainMode::kSpecific;
  if (key == "mixed") return DomainMode::kMixed;
  fail(ErrorCode::kConfig, "unknown domain mode '" + std::string(text) + "'");
}

std::string_view stage_status_name(StageStatus status) {
  switch (status) {
    case StageStatus::kPending: return "pending";
    case StageStatus::kRan: return "ran";
    case StageStatus::kUpToDate: return "up-to-date";
    case StageStatus::kFailed: return "failed";
    case StageStatus::kBlocked: return "blocked";
    case StageStatus::kWouldRun: return "would-run";
  }
  return "pending";
}

std::size_t RunOutcome::count(StageStatus status) const {
  return static_cast<std::size_t>(
      std::count_if(stages.begin(), stages.end(), [&](const StageOutcome& s) { return s.status == status; }));
}

// Configuration

namespace {

bool is_safe_name(std::string_view name) {
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_' || c == '.';
  });
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::vector<std::string>& items, Parse parse) {
  std::vector<T> out;
  for (const auto& item : items) {
    T value = parse(item);
    if (std::find(out.begin(), out.end(), value) == out.end()) out.push_back(value);
  }
  return out;
}

std::size_t get_count(const Config& config, const std::string& key, long long fallback) {
  const long long value = config.get_int(key, fallback);
  if (value < 0) fail(ErrorCode::kConfig, "config key " + key + " must be non-negative");
  return static_cast<std::size_t>(value);
}

TrainingConfig read_training(const Config& config, const std::string& prefix) {
  TrainingConfig t;
  t.epochs = static_cast<int>(config.get_int(prefix + ".epochs", t.epochs));
  t.learning_rate = config.get_double(prefix + ".learning_rate", t.learning_rate);
  t.steps_per_epoch = static_cast<int>(config.get_int(prefix + ".steps_per_epoch", t.steps_per_epoch));
  return t;
}

}  // namespace

PipelineConfig PipelineConfig::from_config(const Config& config) {
  PipelineConfig c;
  auto required_path = [&](const std::string& key) {
    const auto path = config.get_path(key);
    if (!path) fail(ErrorCode::kConfig, "config key " + key + " is required");
    return *path;
  };
  c.source = required_path("data.source");
  c.target = required_path("data.target");
  c.raw = config.get_path("data.raw").value_or(fs::path());
  c.examples = config.get_path("data.examples").value_or(fs::path());
  c.split = SplitSpec::parse(config.get_string("data.split", SplitSpec::standard().to_string()));
  c.annotators = static_cast<int>(config.get_int("data.annotators", kDefaultAnnotators));
  if (c.annotators < 1) fail(ErrorCode::kConfig, "data.annotators must be positive");

  std::vector<std::string> default_domains;
  for (const auto& d : default_target_domains()) default_domains.push_back(d.code());
  c.domains = parse_list<DomainTag>(config.get_list("domains", default_domains), DomainTag::parse);
  if (c.domains.empty()) fail(ErrorCode::kConfig, "at least one target domain is required");

  for (const auto& item : config.get_list("seeds", {"1", "2", "3"})) {
    try {
      std::size_t used = 0;
      const auto seed = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      if (std::find(c.seeds.begin(), c.seeds.end(), seed) == c.seeds.end()) c.seeds.push_back(seed);
    } catch (const std::exception&) {
      fail(ErrorCode::kConfig, "seeds: '" + item + "' is not a non-negative integer");
    }
  }
  if (c.seeds.empty()) fail(ErrorCode::kConfig, "at least one seed is required");
  c.output_dir = config.get_path("run.output_dir");
  c.parallelism = std::max<std::size_t>(1, get_count(config, "run.parallelism", 1));

  ReferenceShape shape;
  c.classifier_shape = {{"backend", config.get_string("classifier.backend", "reference")},
                        {"feature_dim", get_count(config, "classifier.feature_dim", shape.feature_dim)},
                        {"hidden_dim", get_count(config, "classifier.hidden_dim", shape.hidden_dim)},
                        {"prefix_length", get_count(config, "classifier.prefix_length", shape.prefix_length)},
                        {"init_scale", config.get_double("classifier.init_scale", shape.init_scale)}};
  make_classifier_backend(c.classifier_shape);  // validates the shape

  c.base_training = read_training(config, "base");
  c.base_training.validate();
  c.adapt_training = read_training(config, "adaptation");
  c.adapt_training.loss.lambda = config.get_double("adaptation.lambda", c.adapt_training.loss.lambda);
  c.adapt_training.invariance_trains_head =
      config.get_bool("adaptation.invariance_trains_head", c.adapt_training.invariance_trains_head);
  c.adapt_training.validate();

  for (const auto& item : config.get_list("generation.backends", {"mock"})) {
    BackendSpec spec;
    const auto eq = item.find('=');
    spec.name = trim(eq == std::string::npos ? item : item.substr(0, eq));
    spec.endpoint = trim(eq == std::string::npos ? item : item.substr(eq + 1));
    if (spec.name.starts_with("mock:")) spec.name = "mock";
    // a bare non-mock name takes its endpoint from the environment
    if (eq == std::string::npos && !spec.endpoint.starts_with("mock")) {
      const std::string var = "DISCOSYN_ENDPOINT_" + env_suffix(spec.name);
      const auto endpoint = getenv_string(var.c_str());
      if (!endpoint) fail(ErrorCode::kConfig, "backend " + spec.name + " has no endpoint; set " + var + " or use name=endpoint");
      spec.endpoint = *endpoint;
    }
    if (!is_safe_name(spec.name)) fail(ErrorCode::kConfig, "backend name '" + spec.name + "' is not a safe identifier");
    for (const auto& other : c.backends) {
      if (other.name == spec.name) fail(ErrorCode::kConfig, "duplicate backend name " + spec.name);
    }
    c.backends.push_back(spec);
  }
  c.templates = parse_list<TemplateKind>(config.get_list("generation.templates", {"DC"}), parse_template_kind);
  c.include_similarity = config.get_bool("generation.include_similarity", false);
  c.n_arg1 = get_count(config, "generation.n_arg1", 4000);
  c.generation_seed = static_cast<std::uint64_t>(get_count(config, "generation.seed", 0));
  c.decoding.max_new_tokens = static_cast<int>(config.get_int("generation.max_new_tokens", c.decoding.max_new_tokens));
  c.decoding.temperature = config.get_double("generation.temperature", c.decoding.temperature);
  c.decoding.seed = c.generation_seed;
  const std::string example_mode = config.get_string("generation.example_mode", "fixed");
  if (example_mode == "fixed") {
    c.example_mode = ExampleMode::kFixedPerDomainLabel;
  } else if (example_mode == "per-request") {
    c.example_mode = ExampleMode::kPerRequest;
  } else {
    fail(ErrorCode::kConfig, "generation.example_mode must be 'fixed' or 'per-request'");
  }
  c.connective_option = static_cast<int>(config.get_int("generation.connective_option", 0));
  if (c.connective_option < 0 || c.connective_option > 2) {
    fail(ErrorCode::kConfig, "generation.connective_option must be 0, 1 or 2");
  }
  c.retry.max_attempts = static_cast<int>(config.get_int("generation.max_attempts", c.retry.max_attempts));
  c.retry.backoff_ms = static_cast<int>(config.get_int("generation.backoff_ms", c.retry.backoff_ms));
  if (c.retry.max_attempts < 1) fail(ErrorCode::kConfig, "generation.max_attempts must be at least 1");
  c.cache_file = config.get_path("generation.cache");

  c.screens = parse_list<ScreenKind>(config.get_list("screening.kinds", {"strict"}), parse_screen_kind);
  c.confusion_source = config.get_string("screening.confusion", "derived");
  if (c.confusion_source != "derived" && c.confusion_source != "bundled") {
    // anything else names a map file
    c.confusion_source = config.get_path("screening.confusion")->string();
  }
  c.frequency_source = config.get_string("screening.frequency", "bundled");
  if (c.frequency_source != "bundled" && c.frequency_source != "source") {
    fail(ErrorCode::kConfig, "screening.frequency must be 'bundled' or 'source'");
  }
  c.rare_threshold = config.get_double("screening.rare_threshold", kRareThreshold);
  const std::string missing = config.get_string("screening.missing_confusion", "error");
  if (missing == "error") {
    c.missing_confusion = MissingConfusionPolicy::kError;
  } else if (missing == "pass") {
    c.missing_confusion = MissingConfusionPolicy::kPassThrough;
  } else {
    fail(ErrorCode::kConfig, "screening.missing_confusion must be 'error' or 'pass'");
  }

  c.methods = parse_list<AdaptMethod>(config.get_list("adaptation.methods", {"concat", "prefix", "invariance"}),
                                      parse_adapt_method);
  c.data_sources = parse_list<DataSource>(config.get_list("adaptation.data", {"synthetic"}), parse_data_source);
  c.modes = parse_list<DomainMode>(config.get_list("adaptation.modes", {"specific"}), parse_domain_mode);
  c.mixed_target = get_count(config, "adaptation.mixed_target", 10000);
  c.pseudo_per_domain = get_count(config, "adaptation.pseudo_per_domain", kDefaultPseudoPerDomain);
  c.pseudo_min_confidence = config.get_double("adaptation.pseudo_min_confidence", 0.0);
  if (c.pseudo_min_confidence < 0.0 || c.pseudo_min_confidence > 1.0) {
    fail(ErrorCode::kConfig, "adaptation.pseudo_min_confidence must lie in [0, 1]");
  }

  c.protocol = parse_eval_protocol(config.get_string("evaluation.protocol", "discard-alternatives"));
  c.alpha = config.get_double("evaluation.alpha", 0.05);
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) fail(ErrorCode::kConfig, "evaluation.alpha must lie in (0, 1)");
  c.paired = config.get_bool("evaluation.paired", false);

  const bool synthetic = std::find(c.data_sources.begin(), c.data_sources.end(), DataSource::kSynthetic) !=
                         c.data_sources.end();
  const bool pseudo = std::find(c.data_sources.begin(), c.data_sources.end(), DataSource::kPseudo) !=
                      c.data_sources.end();
  if ((synthetic || pseudo) && c.raw.empty()) fail(ErrorCode::kConfig, "data.raw is required for adaptation data");
  if (synthetic && c.examples.empty()) fail(ErrorCode::kConfig, "data.examples is required for generation");
  if (synthetic && (c.backends.empty() || c.templates.empty() || c.screens.empty())) {
    fail(ErrorCode::kConfig, "synthetic adaptation needs backends, templates and screens");
  }

  const auto unused = config.unused_keys();
  if (!unused.empty()) {
    std::string keys;
    for (const auto& k : unused) keys += (keys.empty() ? "" : ", ") + k;
    fail(ErrorCode::kConfig, "unknown config keys: " + keys);
  }
  c.snapshot = config.snapshot();
  c.resolved_snapshot = config.resolved_snapshot_text();
  return c;
}

std::vector<Variant> enumerate_variants(const PipelineConfig& config) {
  std::vector<Variant> out;
  for (AdaptMethod method : config.methods) {
    for (DataSource data : config.data_sources) {
      auto push = [&](Variant v) {
        v.method = method;
        v.data = data;
        std::string id = std::string(adapt_method_name(method)) + "." + std::string(data_source_name(data));
        if (data == DataSource::kSynthetic) {
          id += "." + v.backend + "." + std::string(template_kind_name(v.kind)) + "." +
                std::string(screen_kind_name(v.screen));
        }
        v.id = id + "." + std::string(domain_mode_name(v.mode));
        out.push_back(std::move(v));
      };
      for (DomainMode mode : config.modes) {
        if (data == DataSource::kPseudo) {
          Variant v;
          v.mode = mode;
          push(v);
          continue;
        }
        for (const auto& backend : config.backends) {
          for (TemplateKind kind : config.templates) {
            for (ScreenKind screen : config.screens) {
              Variant v;
              v.backend = backend.name;
              v.kind = kind;
              v.screen = screen;
              v.mode = mode;
              push(v);
            }
          }
        }
      }
    }
  }
  return out;
}

// Stages

using StageFn = std::function<void(const fs::path&, ordered_json&, std::vector<std::string>&)>;

struct Pipeline::Stage {
  std::string id;
  std::vector<std::string> deps;
  // Soft stages run with whichever optional dependencies succeeded.
  bool soft = false;
  std::set<std::string> required;
  ordered_json params;
  std::vector<fs::path> external_inputs;
  StageFn fn;
};

namespace {

std::string seed_str(std::uint64_t seed) { return std::to_string(seed); }

void write_text(const fs::path& path, std::string_view text) {
  fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

void write_json(const fs::path& path, const ordered_json& value) { write_text(path, value.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, "corrupt artifact " + path.string() + ": " + e.what());
  }
}

// Keeps the first occurrence of each message.
void append_unique(std::vector<std::string>& out, const std::vector<std::string>& messages) {
  std::set<std::string> seen(out.begin(), out.end());
  for (const auto& m : messages) {
    if (seen.insert(m).second) out.push_back(m);
  }
}

struct IngestData {
  std::vector<LabeledInstance> train;
  std::vector<LabeledInstance> dev;
  std::vector<CrowdAnnotatedInstance> target;
  std::vector<RawDocument> raw;
  std::vector<InContextExample> examples;
};

IngestData load_ingest(const fs::path& dir, int annotators) {
  IngestData data;
  data.train = read_labeled_records(read_file(dir / "train.jsonl"));
  data.dev = read_labeled_records(read_file(dir / "dev.jsonl"));
  data.target = ingest_target_records(read_file(dir / "target.jsonl"), annotators).instances;
  if (fs::exists(dir / "raw.jsonl")) data.raw = ingest_raw_records(read_file(dir / "raw.jsonl"));
  if (fs::exists(dir / "examples.jsonl")) data.examples = read_example_pool(read_file(dir / "examples.jsonl"));
  return data;
}

ordered_json confusion_to_json(const ConfusionMatrix& matrix) {
  ordered_json rows = ordered_json::object();
  const auto labels = training_label_set();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ordered_json row = ordered_json::object();
    for (std::size_t j = 0; j < labels.size(); ++j) row[std::string(label_name(labels[j]))] = matrix[i][j];
    rows[std::string(label_name(labels[i]))] = row;
  }
  return rows;
}

ConfusionMatrix confusion_from_json(const json& rows) {
  ConfusionMatrix matrix{};
  const auto labels = training_label_set();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = 0; j < labels.size(); ++j) {
      matrix[i][j] = rows.at(std::string(label_name(labels[i]))).at(std::string(label_name(labels[j])));
    }
  }
  return matrix;
}

std::vector<LabeledInstance> load_adaptation_data(const fs::path& stage_dir, DataSource source) {
  std::vector<LabeledInstance> out;
  if (source == DataSource::kSynthetic) {
    for (const auto& s : read_synthetic_records(read_file(stage_dir / "kept.jsonl"))) out.push_back(s.as_labeled());
  } else {
    for (const auto& p : read_pseudo_records(read_file(stage_dir / "pseudo.jsonl"))) out.push_back(p.as_labeled());
  }
  return out;
}

std::string row_model_name(const Variant& v) {
  const std::string source = source_domain().code();
  const std::string data = v.data == DataSource::kSynthetic ? "DG_syn" : "DG_pseudo";
  switch (v.method) {
    case AdaptMethod::kConcat: return source + " + " + data;
    case AdaptMethod::kPrefix: return source + " -> " + data;
    case AdaptMethod::kInvariance: return source + " ->IV " + data;
  }
  return source;
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config, fs::path output_dir)
    : config_(std::move(config)), out_(fs::absolute(std::move(output_dir)).lexically_normal()) {
  variants_ = enumerate_variants(config_);
  build();
}

Pipeline::~Pipeline() = default;

Pipeline Pipeline::resume(const fs::path& output_dir) {
  const fs::path stored = output_dir / "state" / "config.cfg";
  if (!fs::exists(stored)) fail(ErrorCode::kConfig, "no stored configuration under " + output_dir.string());
  PipelineConfig config = PipelineConfig::from_config(Config::load(stored));
  // keep the snapshot exactly as the original run recorded it
  const fs::path snapshot = output_dir / "state" / "snapshot.json";
  if (fs::exists(snapshot)) config.snapshot = read_json(snapshot).get<std::map<std::string, std::string>>();
  return Pipeline(std::move(config), output_dir);
}

Pipeline::Stage& Pipeline::add(std::string id, std::vector<std::string> deps, ordered_json params,
                               std::vector<fs::path> external_inputs, StageFn fn) {
  for (const auto& dep : deps) {
    if (!index_.contains(dep)) fail(ErrorCode::kState, "stage " + id + " depends on unknown stage " + dep);
  }
  auto stage = std::make_unique<Stage>();
  stage->id = id;
  stage->deps = std::move(deps);
  stage->params = std::move(params);
  stage->external_inputs = std::move(external_inputs);
  stage->fn = std::move(fn);
  index_[id] = stages_.size();
  stages_.push_back(std::move(stage));
  return *stages_.back();
}

std::vector<std::string> Pipeline::stage_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : stages_) ids.push_back(s->id);
  return ids;
}

std::vector<std::string> Pipeline::dependencies(const std::string& stage_id) const {
  const auto it = index_.find(stage_id);
  if (it == index_.end()) fail(ErrorCode::kInvalidArgument, "unknown stage " + stage_id);
  return stages_[it->second]->deps;
}

void Pipeline::build() {
  const PipelineConfig& c = config_;
  const std::uint64_t first_seed = c.seeds.front();
  const std::string screening_base = "train-base/" + seed_str(first_seed);
  auto has_source = [&](DataSource s) {
    return std::find(c.data_sources.begin(), c.data_sources.end(), s) != c.data_sources.end();
  };
  const bool synthetic = has_source(DataSource::kSynthetic) && !c.methods.empty();
  const bool pseudo = has_source(DataSource::kPseudo) && !c.methods.empty();

  ordered_json domain_codes = ordered_json::array();
  for (const auto& d : c.domains) domain_codes.push_back(d.code());

  // ingest
  {
    std::vector<fs::path> inputs = {c.source, c.target};
    if (!c.raw.empty()) inputs.push_back(c.raw);
    if (!c.examples.empty()) inputs.push_back(c.examples);
    ordered_json params = {{"split", c.split.to_string()}, {"annotators", c.annotators}, {"domains", domain_codes}};
    add("ingest", {}, params, inputs, [this](const fs::path& out, ordered_json& artifacts, std::vector<std::string>& warnings) {
      const PipelineConfig& c = config_;
      auto source = ingest_source_corpus(c.source, c.split);
      auto target = ingest_target_corpus(c.target, c.annotators);
      std::vector<CrowdAnnotatedInstance> kept_target;
      std::size_t other_domains = 0;
      for (auto& inst : target.instances) {
        if (std::find(c.domains.begin(), c.domains.end(), inst.domain) == c.domains.end()) {
          ++other_domains;
          continue;
        }
        kept_target.push_back(std::move(inst));
      }
      if (other_domains > 0) {
        warnings.push_back(std::to_string(other_domains) + " target instances outside the configured domains dropped");
      }
      if (source.train.empty()) fail(ErrorCode::kInvalidArgument, "source corpus has no training instances");
      write_text(out / "train.jsonl", write_records(source.train));
      write_text(out / "dev.jsonl", write_records(source.dev));
      write_text(out / "target.jsonl", write_records(kept_target));

      ordered_json summary;
      summary["train"] = source.train.size();
      summary["dev"] = source.dev.size();
      summary["dropped_labels"] = source.dropped_labels;
      summary["outside_split"] = source.outside_split;
      summary["excluded_no_relation"] = target.excluded_no_relation;
      ordered_json per_domain = ordered_json::object();
      for (const auto& d : c.domains) {
        per_domain[d.code()] = std::count_if(kept_target.begin(), kept_target.end(),
                                             [&](const CrowdAnnotatedInstance& i) { return i.domain == d; });
      }
      summary["target_per_domain"] = per_domain;
      if (!c.raw.empty()) {
        const auto docs = ingest_raw_corpus(c.raw);
        write_text(out / "raw.jsonl", write_raw_records(docs));
        ordered_json sentences = ordered_json::object();
        for (const auto& d : c.domains) {
          std::size_t n = 0;
          for (const auto& doc : docs) {
            if (doc.domain == d) n += doc.sentences.size();
          }
          sentences[d.code()] = n;
        }
        summary["raw_sentences"] = sentences;
      }
      if (!c.examples.empty()) {
        const std::string text = read_file(c.examples);
        summary["examples"] = read_example_pool(text).size();
        write_text(out / "examples.jsonl", text);
      }
      write_json(out / "summary.json", summary);
      artifacts["train"] = source.train.size();
      artifacts["target"] = kept_target.size();
    });
  }

  // base models
  for (std::uint64_t seed : c.seeds) {
    ordered_json params = {{"seed", seed}, {"shape", ordered_json::parse(c.classifier_shape.dump())}, {"training", c.base_training.to_json()}};
    add("train-base/" + seed_str(seed), {"ingest"}, params, {},
        [this, seed](const fs::path& out, ordered_json& artifacts, std::vector<std::string>&) {
          const auto data = load_ingest(dir("ingest"), config_.annotators);
          TrainingConfig training = config_.base_training;
          training.seed = seed;
          const auto prototype = make_classifier_backend(config_.classifier_shape);
          auto result = train_base(data.train, data.dev, training, *prototype);
          save_model(result.model, out / "model");
          write_json(out / "dev_confusion.json", confusion_to_json(result.dev_confusion));
          write_json(out / "summary.json", {{"model_id", result.model.id()},
                                            {"dev_size", data.dev.size()},
                                            {"dev_accuracy", result.dev_accuracy}});
          artifacts["model_id"] = result.model.id();
        });
  }

  std::vector<std::string> screen_stages;
  if (synthetic) {
    ordered_json params = {{"confusion", c.confusion_source}, {"frequency", c.frequency_source}};
    std::vector<fs::path> inputs;
    if (c.confusion_source != "derived" && c.confusion_source != "bundled") inputs.push_back(c.confusion_source);
    add("screen-context", {"ingest", screening_base}, params, inputs,
        [this, screening_base](const fs::path& out, ordered_json& artifacts, std::vector<std::string>& warnings) {
          const PipelineConfig& c = config_;
          ConfusionMap cmap;
          if (c.confusion_source == "derived") {
            auto derived = derive_confusion_map(confusion_from_json(read_json(dir(screening_base) / "dev_confusion.json")));
            append_unique(warnings, derived.warnings);
            cmap = std::move(derived.map);
          } else if (c.confusion_source == "bundled") {
            cmap = ConfusionMap::bundled();
          } else {
            cmap = ConfusionMap::from_text(read_file(c.confusion_source));
          }
          write_text(out / "cmap.txt", cmap.to_text());
          const FrequencyTable freq =
              c.frequency_source == "source"
                  ? frequency_table(load_ingest(dir("ingest"), c.annotators).train, FrequencyScope::kAll)
                  : FrequencyTable::bundled_source_train();
          ordered_json entries = ordered_json::object();
          for (const auto& [label, f] : freq.entries()) entries[std::string(label_name(label))] = f;
          write_json(out / "frequency.json", {{"scope", frequency_scope_name(freq.scope())}, {"entries", entries}});
          artifacts["confusion_entries"] = cmap.entries().size();
        });

    for (const auto& domain : c.domains) {
      for (const auto& backend : c.backends) {
        for (TemplateKind kind : c.templates) {
          const std::string tail = domain.code() + "/" + backend.name + "/" + std::string(template_kind_name(kind));
          ordered_json gen_params = {{"domain", domain.code()},
                                     {"backend", backend.name},
                                     {"endpoint", backend.endpoint},
                                     {"template", template_kind_name(kind)},
                                     {"include_similarity", c.include_similarity},
                                     {"n_arg1", c.n_arg1},
                                     {"seed", c.generation_seed},
                                     {"max_new_tokens", c.decoding.max_new_tokens},
                                     {"temperature", c.decoding.temperature},
                                     {"example_mode", c.example_mode == ExampleMode::kPerRequest ? "per-request" : "fixed"},
                                     {"connective_option", c.connective_option}};
          add("generate/" + tail, {"ingest"}, gen_params, {},
              [this, domain, backend, kind](const fs::path& out, ordered_json& artifacts,
                                            std::vector<std::string>& warnings) {
                const PipelineConfig& c = config_;
                const auto data = load_ingest(dir("ingest"), c.annotators);
                BatchSpec spec;
                spec.sentences[domain] = sample_sentences(data.raw, domain, c.n_arg1, c.generation_seed);
                if (spec.sentences[domain].size() < c.n_arg1) {
                  warnings.push_back("domain " + domain.code() + ": only " +
                                     std::to_string(spec.sentences[domain].size()) + " raw sentences for " +
                                     std::to_string(c.n_arg1) + " requested");
                }
                if (spec.sentences[domain].empty()) {
                  fail(ErrorCode::kInvalidArgument, "no raw sentences for domain " + domain.code());
                }
                spec.labels = generation_label_set(c.include_similarity);
                BackendDescriptor descriptor{backend.name, backend.endpoint, c.decoding};
                spec.backends.push_back({descriptor, std::shared_ptr<TextBackend>(make_backend(descriptor))});
                spec.kind = kind;
                spec.seed = c.generation_seed;
                spec.examples = data.examples;
                spec.example_mode = c.example_mode;
                spec.connective_option = c.connective_option;
                spec.parallelism = c.parallelism;
                const PromptEngine engine(c.include_similarity);
                const Generator generator(cache_, c.retry);
                const auto batch = generate_batch(spec, engine, generator);
                if (batch.instances.empty() && !batch.failures.empty()) {
                  fail(ErrorCode::kTransport, "every generation request failed; first error: " + batch.failures.front().error);
                }
                ordered_json failures = ordered_json::array();
                for (const auto& f : batch.failures) {
                  failures.push_back({{"sentence_index", f.sentence_index}, {"label", label_name(f.label)}, {"error", f.error}});
                }
                if (!batch.failures.empty()) {
                  warnings.push_back(std::to_string(batch.failures.size()) + " generation requests failed");
                }
                write_text(out / "candidates.jsonl", write_synthetic_records(batch.instances));
                write_json(out / "summary.json", {{"requested", spec.sentences[domain].size() * spec.labels.size()},
                                                  {"candidates", batch.instances.size()},
                                                  {"failures", failures}});
                artifacts["candidates"] = batch.instances.size();
              });

          add("label-synthetic/" + tail, {"generate/" + tail, screening_base}, ordered_json::object(), {},
              [this, tail, screening_base](const fs::path& out, ordered_json& artifacts, std::vector<std::string>&) {
                auto candidates = read_synthetic_records(read_file(dir("generate/" + tail) / "candidates.jsonl"));
                const Model model = load_model(dir(screening_base) / "model");
                std::vector<ArgumentPair> pairs;
                for (const auto& s : candidates) pairs.push_back(s.pair);
                const auto predictions = predict_batch(model, pairs, std::nullopt, config_.parallelism);
                for (std::size_t i = 0; i < candidates.size(); ++i) candidates[i].set_predicted(predictions[i].label);
                write_text(out / "labeled.jsonl", write_synthetic_records(candidates));
                write_json(out / "summary.json", {{"screening_model", model.id()}, {"labeled", candidates.size()}});
                artifacts["screening_model"] = model.id();
              });

          for (ScreenKind screen : c.screens) {
            const std::string id = "screen/" + tail + "/" + std::string(screen_kind_name(screen));
            // only the settings the screen reads, so unrelated edits leave it current
            ordered_json screen_params = {{"screen", screen_kind_name(screen)}};
            if (screen != ScreenKind::kStrict) {
              screen_params["confusion"] = c.confusion_source;
              screen_params["missing"] = c.missing_confusion == MissingConfusionPolicy::kError ? "error" : "pass";
            }
            if (screen == ScreenKind::kCombi) {
              screen_params["rare_threshold"] = c.rare_threshold;
              screen_params["frequency"] = c.frequency_source;
            }
            add(id, {"label-synthetic/" + tail, "screen-context", "ingest"}, screen_params, {},
                [this, tail, screen](const fs::path& out, ordered_json& artifacts, std::vector<std::string>& warnings) {
                  const PipelineConfig& c = config_;
                  const auto labeled = read_synthetic_records(read_file(dir("label-synthetic/" + tail) / "labeled.jsonl"));
                  const ConfusionMap cmap = ConfusionMap::from_text(read_file(dir("screen-context") / "cmap.txt"));
                  const FrequencyTable freq =
                      c.frequency_source == "source"
                          ? frequency_table(load_ingest(dir("ingest"), c.annotators).train, FrequencyScope::kAll)
                          : FrequencyTable::bundled_source_train();
                  ScreenContext context{&cmap, &freq, c.missing_confusion, c.rare_threshold};
                  auto result = screen_batch(labeled, screen, context);
                  append_unique(warnings, result.warnings);
                  write_text(out / "kept.jsonl", write_synthetic_records(result.kept));
                  write_json(out / "report.json", result.report.to_json());
                  artifacts["kept"] = result.kept.size();
                  artifacts["candidates"] = labeled.size();
                });
            screen_stages.push_back(id);
          }
        }
      }
    }

    Stage& report = add("screen-report", screen_stages, ordered_json::object(), {},
                        [this, screen_stages](const fs::path& out, ordered_json& artifacts, std::vector<std::string>&) {
                          ScreeningReport merged;
                          for (const auto& id : screen_stages) {
                            if (!usable_.contains(id)) continue;
                            merged.merge(ScreeningReport::from_json(read_json(dir(id) / "report.json")));
                          }
                          write_text(out / "screening.tsv", merged.to_table());
                          write_json(out / "screening.json", merged.to_json());
                          artifacts["kept"] = merged.total_kept();
                          artifacts["candidates"] = merged.total_candidates();
                        });
    report.soft = true;
  }

  if (pseudo) {
    for (const auto& domain : c.domains) {
      ordered_json params = {{"domain", domain.code()},
                             {"per_domain", c.pseudo_per_domain},
                             {"seed", c.generation_seed},
                             {"min_confidence", c.pseudo_min_confidence}};
      add("pseudo-label/" + domain.code(), {"ingest", screening_base}, params, {},
          [this, domain, screening_base](const fs::path& out, ordered_json& artifacts, std::vector<std::string>& warnings) {
            const PipelineConfig& c = config_;
            const auto data = load_ingest(dir("ingest"), c.annotators);
            const Model model = load_model(dir(screening_base) / "model");
            auto result = pseudo_label_corpus(data.raw, model, c.pseudo_per_domain, c.generation_seed, {domain},
                                              c.parallelism);
            append_unique(warnings, result.warnings);
            const auto kept = filter_by_confidence(result.instances, c.pseudo_min_confidence);
            write_text(out / "pseudo.jsonl", write_pseudo_records(kept));
            write_json(out / "summary.json", {{"labeling_model", model.id()},
                                              {"available_pairs", result.available_pairs.at(domain)},
                                              {"sampled", result.instances.size()},
                                              {"kept", kept.size()}});
            artifacts["kept"] = kept.size();
          });
    }
  }

  // adaptation and evaluation
  std::vector<std::string> evaluations;
  for (std::uint64_t seed : c.seeds) {
    const std::string base = "train-base/" + seed_str(seed);
    const std::string id = "evaluate/baseline/" + seed_str(seed);
    add(id, {"ingest", base}, {{"protocol", eval_protocol_name(c.protocol)}}, {},
        [this, seed, base](const fs::path& out, ordered_json& artifacts, std::vector<std::string>& warnings) {
          const auto data = load_ingest(dir("ingest"), config_.annotators);
          const Model model = load_model(dir(base) / "model");
          ordered_json metrics = {{"variant", "baseline"}, {"seed", seed}, {"protocol", eval_protocol_name(config_.protocol)}};
          ordered_json per_domain = ordered_json::object();
          ordered_json sizes = ordered_json::object();
          for (const auto& domain : config_.domains) {
            std::vector<CrowdAnnotatedInstance> test;
            for (const auto& inst : data.target) {
              if (inst.domain == domain) test.push_back(inst);
            }
            if (test.empty()) {
              warnings.push_back("no test items for domain " + domain.code());
              continue;
            }
            const auto records = predict_records(model, test, false, config_.parallelism);
            write_text(out / ("predictions-" + domain.code() + ".jsonl"), write_prediction_records(records));
            auto report = score(records, config_.protocol);
            report.run_id = "baseline/" + seed_str(seed);
            per_domain[domain.code()] = report.to_json();
            sizes[domain.code()] = 0;
          }
          metrics["domains"] = per_domain;
          metrics["data_sizes"] = sizes;
          metrics["model_ids"] = {model.id()};
          write_json(out / "metrics.json", metrics);
          artifacts["model_id"] = model.id();
        });
    evaluations.push_back(id);
  }

  for (const Variant& v : variants_) {
    for (std::uint64_t seed : c.seeds) {
      const std::string base = "train-base/" + seed_str(seed);
      std::vector<std::string> model_stages;
      std::vector<std::string> units;
      if (v.mode == DomainMode::kMixed) {
        units.push_back("mixed");
      } else {
        for (const auto& d : c.domains) units.push_back(d.code());
      }
      for (const std::string& unit : units) {
        std::vector<std::string> data_stages;
        for (const auto& d : c.domains) {
          if (unit != "mixed" && unit != d.code()) continue;
          data_stages.push_back(v.data == DataSource::kPseudo
                                    ? "pseudo-label/" + d.code()
                                    : "screen/" + d.code() + "/" + v.backend + "/" +
                                          std::string(template_kind_name(v.kind)) + "/" +
                                          std::string(screen_kind_name(v.screen)));
        }
        std::vector<std::string> deps = {"ingest"};
        if (v.method != AdaptMethod::kConcat) deps.push_back(base);
        deps.insert(deps.end(), data_stages.begin(), data_stages.end());
        // concat retrains from scratch, so it follows the base schedule
        TrainingConfig training = v.method == AdaptMethod::kConcat ? c.base_training : c.adapt_training;
        training.seed = seed;
        if (v.method == AdaptMethod::kInvariance) training.loss.kind = LossKind::kCEMinusIV;
        ordered_json params = {{"method", adapt_method_name(v.method)},
                               {"mode", domain_mode_name(v.mode)},
                               {"unit", unit},
                               {"training", training.to_json()},
                               {"shape", ordered_json::parse(c.classifier_shape.dump())}};
        if (v.mode == DomainMode::kMixed) params["mixed_target"] = c.mixed_target;
        const std::string id = "adapt/" + v.id + "/" + seed_str(seed) + "/" + unit;
        add(id, deps, params, {},
            [this, v, seed, base, data_stages, training](const fs::path& out, ordered_json& artifacts,
                                                       std::vector<std::string>& warnings) {
              const PipelineConfig& c = config_;
              std::vector<LabeledInstance> data;
              for (const auto& stage : data_stages) {
                auto part = load_adaptation_data(dir(stage), v.data);
                data.insert(data.end(), part.begin(), part.end());
              }
              if (v.mode == DomainMode::kMixed) {
                for (auto& inst : data) {
                  const DomainTag domain = inst.domain;
                  inst = prepend_domain_token(std::move(inst), domain);
                }
                if (data.size() > c.mixed_target) {
                  data = stratified_downsample(data, c.mixed_target, mix_seed(seed, "domain-mixed"));
                } else if (data.size() < c.mixed_target) {
                  warnings.push_back("domain-mixed data has " + std::to_string(data.size()) +
                                     " instances, below the target " + std::to_string(c.mixed_target));
                }
              }
              const auto ingest = load_ingest(dir("ingest"), c.annotators);
              const auto prototype = make_classifier_backend(c.classifier_shape);
              std::optional<Model> model;
              switch (v.method) {
                case AdaptMethod::kConcat:
                  if (data.empty()) fail(ErrorCode::kInvalidArgument, "no adaptation data");
                  model = adapt_concat(ingest.train, data, training, *prototype);
                  break;
                case AdaptMethod::kPrefix:
                  model = adapt_prefix(load_model(dir(base) / "model"), data, training);
                  break;
                case AdaptMethod::kInvariance:
                  model = adapt_invariance(load_model(dir(base) / "model"), data, ingest.train, training);
                  break;
              }
              save_model(*model, out / "model");
              write_json(out / "summary.json", {{"model_id", model->id()}, {"data_size", data.size()}});
              artifacts["model_id"] = model->id();
              artifacts["data_size"] = data.size();
            });
        model_stages.push_back(id);
      }

      const std::string eval_id = "evaluate/" + v.id + "/" + seed_str(seed);
      std::vector<std::string> deps = {"ingest"};
      deps.insert(deps.end(), model_stages.begin(), model_stages.end());
      add(eval_id, deps, {{"protocol", eval_protocol_name(c.protocol)}}, {},
          [this, v, seed, model_stages](const fs::path& out, ordered_json& artifacts, std::vector<std::string>& warnings) {
            const auto data = load_ingest(dir("ingest"), config_.annotators);
            ordered_json metrics = {{"variant", v.id}, {"seed", seed}, {"protocol", eval_protocol_name(config_.protocol)}};
            ordered_json per_domain = ordered_json::object();
            ordered_json sizes = ordered_json::object();
            ordered_json ids = ordered_json::array();
            std::optional<Model> mixed;
            if (v.mode == DomainMode::kMixed) {
              mixed = load_model(dir(model_stages.front()) / "model");
              ids.push_back(mixed->id());
            }
            for (std::size_t k = 0; k < config_.domains.size(); ++k) {
              const DomainTag& domain = config_.domains[k];
              const fs::path model_dir = dir(v.mode == DomainMode::kMixed ? model_stages.front() : model_stages[k]);
              std::optional<Model> specific;
              if (!mixed) {
                specific = load_model(model_dir / "model");
                ids.push_back(specific->id());
              }
              sizes[domain.code()] = read_json(model_dir / "summary.json").at("data_size");
              std::vector<CrowdAnnotatedInstance> test;
              for (const auto& inst : data.target) {
                if (inst.domain == domain) test.push_back(inst);
              }
              if (test.empty()) {
                warnings.push_back("no test items for domain " + domain.code());
                continue;
              }
              const Model& model = mixed ? *mixed : *specific;
              const auto records = predict_records(model, test, mixed.has_value(), config_.parallelism);
              write_text(out / ("predictions-" + domain.code() + ".jsonl"), write_prediction_records(records));
              auto report = score(records, config_.protocol);
              report.run_id = v.id + "/" + seed_str(seed);
              per_domain[domain.code()] = report.to_json();
            }
            metrics["domains"] = per_domain;
            metrics["data_sizes"] = sizes;
            metrics["model_ids"] = ids;
            write_json(out / "metrics.json", metrics);
            artifacts["model_ids"] = ids;
          });
      evaluations.push_back(eval_id);
    }
  }

  ordered_json report_params = {{"alpha", c.alpha}, {"paired", c.paired}, {"protocol", eval_protocol_name(c.protocol)}};
  Stage& report = add("report", evaluations, report_params, {},
                      [this](const fs::path& out, ordered_json& artifacts, std::vector<std::string>& warnings) {
                        render_report(out, artifacts, warnings);
                      });
  report.soft = true;
  for (std::uint64_t seed : c.seeds) report.required.insert("evaluate/baseline/" + seed_str(seed));
}

void Pipeline::render_report(const fs::path& out, ordered_json& artifacts, std::vector<std::string>& warnings) const {
  const PipelineConfig& c = config_;
  struct RowRuns {
    VariantRow row;
    // per domain, per seed
    std::map<DomainTag, std::map<std::uint64_t, MetricReport>> reports;
  };
  std::vector<RowRuns> rows;

  auto collect = [&](const std::string& variant_id, VariantRow row) {
    RowRuns runs{std::move(row), {}};
    bool sized = false;
    for (std::uint64_t seed : c.seeds) {
      const std::string stage = "evaluate/" + variant_id + "/" + seed_str(seed);
      if (!usable_.contains(stage)) continue;
      const json metrics = read_json(dir(stage) / "metrics.json");
      if (!sized) {
        for (const auto& d : c.domains) {
          if (metrics.at("data_sizes").contains(d.code())) {
            runs.row.domain_sizes.push_back(metrics["data_sizes"][d.code()].get<std::size_t>());
          }
        }
        sized = true;
      }
      for (const auto& d : c.domains) {
        const fs::path file = dir(stage) / ("predictions-" + d.code() + ".jsonl");
        if (!fs::exists(file)) continue;
        auto report = score(read_prediction_records(read_file(file)), c.protocol);
        report.run_id = variant_id + "/" + seed_str(seed);
        runs.reports[d].emplace(seed, std::move(report));
      }
    }
    if (runs.reports.empty()) {
      warnings.push_back("variant " + variant_id + " has no completed runs; left out of the report");
      return;
    }
    rows.push_back(std::move(runs));
  };

  VariantRow baseline{"baseline", "Baseline " + source_domain().code(), "-", "-", "-", "-", {}, true};
  collect("baseline", baseline);
  if (rows.empty() || rows.front().row.id != "baseline") fail(ErrorCode::kState, "baseline has no completed runs");
  for (const Variant& v : variants_) {
    const bool syn = v.data == DataSource::kSynthetic;
    collect(v.id, VariantRow{v.id, row_model_name(v), syn ? v.backend : "-",
                             syn ? std::string(template_kind_name(v.kind)) : "-",
                             syn ? std::string(screen_kind_name(v.screen)) : "-",
                             std::string(domain_mode_name(v.mode)), {}, false});
  }

  ResultsTable table;
  table.domains = c.domains;
  ordered_json cells = ordered_json::array();
  const RowRuns& base = rows.front();
  for (const auto& r : rows) {
    table.rows.push_back(r.row);
    for (const auto& [domain, by_seed] : r.reports) {
      std::vector<MetricReport> reports;
      for (const auto& [seed, report] : by_seed) reports.push_back(report);
      const RunSummary summary = aggregate_runs(reports);
      table.summaries[{r.row.id, domain}] = summary;
      ordered_json cell = {{"variant", r.row.id}, {"domain", domain.code()}, {"summary", summary.to_json()}};

      const auto base_it = base.reports.find(domain);
      if (!r.row.baseline && base_it != base.reports.end()) {
        std::vector<double> model_f1, base_f1, model_acc, base_acc;
        for (const auto& [seed, report] : by_seed) {
          const auto match = base_it->second.find(seed);
          if (c.paired && match == base_it->second.end()) continue;
          model_f1.push_back(report.macro_f1_value());
          model_acc.push_back(report.accuracy_value());
          if (c.paired) {
            base_f1.push_back(match->second.macro_f1_value());
            base_acc.push_back(match->second.accuracy_value());
          }
        }
        if (!c.paired) {
          for (const auto& [seed, report] : base_it->second) {
            base_f1.push_back(report.macro_f1_value());
            base_acc.push_back(report.accuracy_value());
          }
        }
        if (model_f1.size() >= 2 && base_f1.size() >= 2) {
          const auto f1 = t_test(model_f1, base_f1, c.alpha, c.paired, "macro_f1");
          const auto acc = t_test(model_acc, base_acc, c.alpha, c.paired, "accuracy");
          table.significance[{r.row.id, domain, Metric::kF1}] = f1;
          table.significance[{r.row.id, domain, Metric::kAccuracy}] = acc;
          cell["significance"] = {{"macro_f1", f1.to_json()}, {"accuracy", acc.to_json()}};
        } else {
          cell["significance"] = nullptr;
        }
      }
      cells.push_back(std::move(cell));
    }
  }

  std::ostringstream head;
  head << "Protocol: " << eval_protocol_name(c.protocol) << "; seeds:";
  for (std::uint64_t seed : c.seeds) head << " " << seed;
  head << "; * marks p < " << c.alpha << " against the baseline (" << (c.paired ? "paired" : "Welch") << " t-test)\n\n";
  const std::string markdown = head.str() + render_results_table(table);
  write_text(out / "results.md", markdown);
  write_text(out / "results.tsv", render_results_tsv(table));

  ordered_json row_meta = ordered_json::array();
  for (const auto& r : table.rows) {
    row_meta.push_back({{"id", r.id},
                        {"model", r.model},
                        {"llm", r.llm},
                        {"prompt", r.prompt},
                        {"screen", r.screen},
                        {"config", r.config},
                        {"domain_sizes", r.domain_sizes},
                        {"size", rounded_mean_size(r.domain_sizes).value_or(0)}});
  }
  write_json(out / "summary.json", {{"protocol", eval_protocol_name(c.protocol)},
                                    {"alpha", c.alpha},
                                    {"paired", c.paired},
                                    {"seeds", c.seeds},
                                    {"rows", row_meta},
                                    {"cells", cells}});
  artifacts["rows"] = table.rows.size();
}

// Execution

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kTransport:
    case ErrorCode::kGenerationRejected: return 3;
    case ErrorCode::kConfig: return 2;
    default: return 1;
  }
}

int worse(int a, int b) {
  auto rank = [](int code) { return code == 3 ? 3 : code == 2 ? 2 : code == 0 ? 0 : 1; };
  return rank(a) >= rank(b) ? a : b;
}

}  // namespace

RunOutcome Pipeline::run(const RunOptions& options) {
  RunOutcome outcome;

  std::set<std::string> selected;
  std::function<void(const std::string&)> select = [&](const std::string& id) {
    if (!selected.insert(id).second) return;
    for (const auto& dep : stages_[index_.at(id)]->deps) select(dep);
  };
  if (options.targets.empty()) {
    for (const auto& s : stages_) selected.insert(s->id);
  } else {
    for (const auto& target : options.targets) {
      bool matched = false;
      for (const auto& s : stages_) {
        if (s->id == target || s->id.starts_with(target + "/")) {
          select(s->id);
          matched = true;
        }
      }
      if (!matched) fail(ErrorCode::kConfig, "no stage matches '" + target + "'");
    }
  }

  const fs::path state_file = out_ / "state" / "stages.json";
  json state = json::object();
  if (fs::exists(state_file)) {
    try {
      state = json::parse(read_file(state_file));
    } catch (const json::exception&) {
      outcome.warnings.push_back("state file is corrupt; every stage will re-run");
      state = json::object();
    }
  }

  if (!options.dry_run) {
    fs::create_directories(out_ / "state");
    write_text(out_ / "state" / "config.cfg", config_.resolved_snapshot);
    write_text(out_ / "state" / "snapshot.json", ordered_json(config_.snapshot).dump(2) + "\n");
    cache_ = std::make_shared<GenerationCache>(config_.cache_file.value_or(out_ / "cache" / "generation.jsonl"));
  }

  std::map<std::string, StageOutcome> outcomes;
  std::set<std::string> executed;
  ordered_json timings = ordered_json::object();

  for (const auto& stage_ptr : stages_) {
    const Stage& stage = *stage_ptr;
    if (!selected.contains(stage.id)) continue;
    StageOutcome so{stage.id, StageStatus::kPending, ""};

    std::vector<std::string> usable;
    for (const auto& dep : stage.deps) {
      const StageStatus st = outcomes.at(dep).status;
      if (st == StageStatus::kFailed || st == StageStatus::kBlocked) {
        if (stage.soft && !stage.required.contains(dep)) continue;
        so.status = StageStatus::kBlocked;
        so.message = "dependency " + dep + " did not complete";
        break;
      }
      usable.push_back(dep);
    }

    if (so.status != StageStatus::kBlocked) {
      const auto started = std::chrono::steady_clock::now();
      try {
        const std::string params_digest = sha256_hex(stage.params.dump());
        json inputs = json::object();
        bool upstream_ran = false;
        for (std::size_t i = 0; i < stage.external_inputs.size(); ++i) {
          const auto digest = path_digest(stage.external_inputs[i]);
          if (!digest) fail(ErrorCode::kConfig, "input file not found: " + stage.external_inputs[i].string());
          inputs["input:" + std::to_string(i)] = *digest;
        }
        for (const auto& dep : usable) {
          if (executed.contains(dep)) upstream_ran = true;
          inputs["stage:" + dep] = path_digest(dir(dep)).value_or("");
        }

        bool current = false;
        if (!upstream_ran && state.contains(stage.id)) {
          const json& record = state[stage.id];
          const auto output = path_digest(dir(stage.id));
          const bool same_inputs = record.value("params", "") == params_digest && record.value("inputs", json()) == inputs;
          if (same_inputs && output && *output == record.value("output", "")) {
            current = true;
          } else if (same_inputs && output) {
            outcome.warnings.push_back("stage " + stage.id + ": artifact changed or corrupted; re-running");
          }
        }

        if (current) {
          so.status = StageStatus::kUpToDate;
        } else if (options.dry_run) {
          so.status = StageStatus::kWouldRun;
          executed.insert(stage.id);
        } else {
          const fs::path final_dir = dir(stage.id);
          fs::path staging = final_dir;
          staging += ".tmp";
          fs::remove_all(staging);
          fs::create_directories(staging);
          ordered_json artifacts = ordered_json::object();
          std::vector<std::string> warnings;
          usable_ = std::set<std::string>(usable.begin(), usable.end());
          stage.fn(staging, artifacts, warnings);
          if (!warnings.empty()) {
            std::string text;
            for (const auto& w : warnings) text += w + "\n";
            write_text(staging / "warnings.txt", text);
            for (const auto& w : warnings) outcome.warnings.push_back(stage.id + ": " + w);
          }
          fs::remove_all(final_dir);
          fs::create_directories(final_dir.parent_path());
          fs::rename(staging, final_dir);
          json record = {{"params", params_digest},
                         {"inputs", inputs},
                         {"output", path_digest(final_dir).value_or("")},
                         {"artifacts", artifacts}};
          state[stage.id] = record;
          write_text(state_file, state.dump(1) + "\n");
          so.status = StageStatus::kRan;
          executed.insert(stage.id);
        }
      } catch (const Error& e) {
        so.status = StageStatus::kFailed;
        so.message = e.what();
        outcome.exit_code = worse(outcome.exit_code, exit_code_for(e.code()));
      } catch (const std::exception& e) {
        so.status = StageStatus::kFailed;
        so.message = e.what();
        outcome.exit_code = worse(outcome.exit_code, 1);
      }
      const double seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
      timings[stage.id] = {{"status", stage_status_name(so.status)}, {"seconds", seconds}};
    } else {
      timings[stage.id] = {{"status", stage_status_name(so.status)}, {"seconds", 0.0}};
    }
    if (options.on_stage) options.on_stage(so);
    outcomes[stage.id] = so;
    outcome.stages.push_back(so);
  }
  usable_.clear();

  if (!options.dry_run) {
    write_manifests(outcomes);
    write_text(out_ / "timings.json", timings.dump(2) + "\n");
    if (outcomes.contains("report")) {
      const auto st = outcomes["report"].status;
      if ((st == StageStatus::kRan || st == StageStatus::kUpToDate) && fs::exists(dir("report") / "results.md")) {
        outcome.report = read_file(dir("report") / "results.md");
      }
    }
  }
  return outcome;
}

void Pipeline::write_manifests(const std::map<std::string, StageOutcome>& outcomes) const {
  json state = json::object();
  if (fs::exists(out_ / "state" / "stages.json")) state = read_json(out_ / "state" / "stages.json");

  std::map<std::string, ordered_json> entries;
  for (const auto& s : stages_) {
    ordered_json entry;
    entry["id"] = s->id;
    const auto it = outcomes.find(s->id);
    std::string status = "missing";
    if (it != outcomes.end() && it->second.status == StageStatus::kFailed) {
      status = "failed";
      entry["error"] = it->second.message;
    } else if (it != outcomes.end() && it->second.status == StageStatus::kBlocked) {
      status = "blocked";
      entry["error"] = it->second.message;
    } else if (state.contains(s->id)) {
      const auto output = path_digest(dir(s->id));
      if (output && *output == state[s->id].value("output", "")) status = "complete";
    }
    entry["status"] = status;
    ordered_json deps = ordered_json::array();
    for (const auto& d : s->deps) deps.push_back(d);
    entry["depends_on"] = deps;
    if (status == "complete") {
      const json& record = state[s->id];
      entry["params_sha256"] = record["params"].get<std::string>();
      entry["inputs"] = ordered_json::parse(record["inputs"].dump());
      entry["output"] = {{"path", s->id}, {"sha256", record["output"].get<std::string>()}};
      entry["artifacts"] = ordered_json::parse(record["artifacts"].dump());
    }
    entries[s->id] = std::move(entry);
  }

  const ordered_json config(config_.snapshot);
  ordered_json all = ordered_json::array();
  for (const auto& s : stages_) all.push_back(entries[s->id]);
  ordered_json variant_ids = ordered_json::array();
  variant_ids.push_back("baseline");
  for (const auto& v : variants_) variant_ids.push_back(v.id);
  write_json(out_ / "manifests" / "run.json", {{"config", config}, {"variants", variant_ids}, {"stages", all}});

  // one manifest per (variant, seed): the evaluation stage and everything it needs
  for (const auto& variant : variant_ids) {
    for (std::uint64_t seed : config_.seeds) {
      const std::string root = "evaluate/" + variant.get<std::string>() + "/" + seed_str(seed);
      std::set<std::string> closure;
      std::function<void(const std::string&)> walk = [&](const std::string& id) {
        if (!closure.insert(id).second) return;
        for (const auto& dep : stages_[index_.at(id)]->deps) walk(dep);
      };
      walk(root);
      ordered_json stages = ordered_json::array();
      bool complete = true;
      for (const auto& s : stages_) {
        if (!closure.contains(s->id)) continue;
        stages.push_back(entries[s->id]);
        complete = complete && entries[s->id]["status"] == "complete";
      }
      write_json(out_ / "manifests" / variant.get<std::string>() / ("seed-" + seed_str(seed) + ".json"),
                 {{"variant", variant},
                  {"seed", seed},
                  {"complete", complete},
                  {"config", config},
                  {"stages", stages}});
    }
  }
}

}  // namespace discosyn

#include "discosyn/discosyn.h"

#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "config.hpp"
#include "error.hpp"
#include "evaluation.hpp"
#include "pipeline.hpp"
#include "prompts.hpp"
#include "util.hpp"

using namespace discosyn;

struct ds_config {
  Config config;
};

struct ds_pipeline {
  std::unique_ptr<Pipeline> pipeline;
  ds_stage_callback callback = nullptr;
  void* user = nullptr;
};

struct ds_run_result {
  RunOutcome outcome;
  std::vector<std::string> statuses;
};

namespace {

thread_local std::string g_last_error;

ds_status status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return DS_ERR_INVALID_ARGUMENT;
    case ErrorCode::kFormat: return DS_ERR_FORMAT;
    case ErrorCode::kUnknownLabel: return DS_ERR_UNKNOWN_LABEL;
    case ErrorCode::kConfig: return DS_ERR_CONFIG;
    case ErrorCode::kTransport: return DS_ERR_TRANSPORT;
    case ErrorCode::kGenerationRejected: return DS_ERR_GENERATION_REJECTED;
    case ErrorCode::kState: return DS_ERR_STATE;
    case ErrorCode::kIo: return DS_ERR_IO;
  }
  return DS_ERR_INTERNAL;
}

template <typename Fn>
ds_status guarded(Fn&& fn) {
  try {
    fn();
    return DS_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_for(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return DS_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return DS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DS_ERR_INTERNAL;
  }
}

char* dup_string(std::string_view s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size());
  out[s.size()] = '\0';
  return out;
}

void require(const void* p, const char* what) {
  if (p == nullptr) fail(ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

InContextExample make_example(const char* arg1, const char* arg2, RelationLabel label, const char* connective) {
  InContextExample example;
  example.id = "inline";
  example.arg1 = arg1;
  example.arg2 = arg2;
  example.label = label;
  example.domain = source_domain();
  if (connective) example.connective = connective;
  return example;
}

}  // namespace

extern "C" {

const char* ds_version(void) { return "0.1.0"; }

const char* ds_status_name(ds_status status) {
  switch (status) {
    case DS_OK: return "ok";
    case DS_ERR_INVALID_ARGUMENT: return "invalid-argument";
    case DS_ERR_FORMAT: return "format";
    case DS_ERR_UNKNOWN_LABEL: return "unknown-label";
    case DS_ERR_CONFIG: return "config";
    case DS_ERR_TRANSPORT: return "transport";
    case DS_ERR_GENERATION_REJECTED: return "generation-rejected";
    case DS_ERR_STATE: return "state";
    case DS_ERR_IO: return "io";
    case DS_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* ds_last_error(void) { return g_last_error.c_str(); }

void ds_string_free(char* s) { std::free(s); }

ds_status ds_config_load(const char* path, ds_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new ds_config{Config::load(path)};
  });
}

ds_status ds_config_create(ds_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new ds_config{};
  });
}

ds_status ds_config_set(ds_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    config->config.set(key, value);
  });
}

void ds_config_destroy(ds_config* config) { delete config; }

ds_status ds_pipeline_create(const ds_config* config, const char* output_dir, ds_pipeline** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    // lookups record into the snapshot, so work on a copy
    Config copy = config->config;
    PipelineConfig pc = PipelineConfig::from_config(copy);
    std::filesystem::path dir;
    if (output_dir) {
      dir = output_dir;
    } else if (pc.output_dir) {
      dir = *pc.output_dir;
    } else {
      fail(ErrorCode::kConfig, "no output directory given and run.output_dir is unset");
    }
    auto handle = std::make_unique<ds_pipeline>();
    handle->pipeline = std::make_unique<Pipeline>(std::move(pc), dir);
    *out = handle.release();
  });
}

ds_status ds_pipeline_open(const char* output_dir, ds_pipeline** out) {
  return guarded([&] {
    require(output_dir, "output_dir");
    require(out, "out");
    auto handle = std::make_unique<ds_pipeline>();
    handle->pipeline.reset(new Pipeline(Pipeline::resume(output_dir)));
    *out = handle.release();
  });
}

void ds_pipeline_destroy(ds_pipeline* pipeline) { delete pipeline; }

ds_status ds_pipeline_stages(const ds_pipeline* pipeline, char** json_out) {
  return guarded([&] {
    require(pipeline, "pipeline");
    require(json_out, "json_out");
    *json_out = dup_string(nlohmann::json(pipeline->pipeline->stage_ids()).dump());
  });
}

ds_status ds_pipeline_set_callback(ds_pipeline* pipeline, ds_stage_callback callback, void* user) {
  return guarded([&] {
    require(pipeline, "pipeline");
    pipeline->callback = callback;
    pipeline->user = user;
  });
}

ds_status ds_pipeline_run(ds_pipeline* pipeline, const char* const* targets, size_t n_targets, int dry_run,
                          ds_run_result** out) {
  return guarded([&] {
    require(pipeline, "pipeline");
    require(out, "out");
    if (n_targets > 0) require(targets, "targets");
    RunOptions options;
    for (size_t i = 0; i < n_targets; ++i) {
      require(targets[i], "target");
      options.targets.emplace_back(targets[i]);
    }
    options.dry_run = dry_run != 0;
    if (pipeline->callback) {
      options.on_stage = [pipeline](const StageOutcome& s) {
        pipeline->callback(s.id.c_str(), std::string(stage_status_name(s.status)).c_str(), s.message.c_str(),
                           pipeline->user);
      };
    }
    auto result = std::make_unique<ds_run_result>();
    result->outcome = pipeline->pipeline->run(options);
    for (const auto& s : result->outcome.stages) result->statuses.emplace_back(stage_status_name(s.status));
    *out = result.release();
  });
}

int ds_run_result_exit_code(const ds_run_result* result) { return result ? result->outcome.exit_code : 1; }

size_t ds_run_result_stage_count(const ds_run_result* result) { return result ? result->outcome.stages.size() : 0; }

ds_status ds_run_result_stage(const ds_run_result* result, size_t index, const char** stage_id, const char** status,
                              const char** message) {
  return guarded([&] {
    require(result, "result");
    if (index >= result->outcome.stages.size()) fail(ErrorCode::kInvalidArgument, "stage index out of range");
    const auto& s = result->outcome.stages[index];
    if (stage_id) *stage_id = s.id.c_str();
    if (status) *status = result->statuses[index].c_str();
    if (message) *message = s.message.c_str();
  });
}

size_t ds_run_result_warning_count(const ds_run_result* result) {
  return result ? result->outcome.warnings.size() : 0;
}

const char* ds_run_result_warning(const ds_run_result* result, size_t index) {
  if (!result || index >= result->outcome.warnings.size()) return nullptr;
  return result->outcome.warnings[index].c_str();
}

const char* ds_run_result_report(const ds_run_result* result) {
  if (!result || !result->outcome.report) return nullptr;
  return result->outcome.report->c_str();
}

void ds_run_result_destroy(ds_run_result* result) { delete result; }

ds_status ds_ingest(const char* path, const char* format, const char* split, int annotators, char** summary_json) {
  return guarded([&] {
    require(path, "path");
    require(format, "format");
    require(summary_json, "summary_json");
    const std::string kind = to_lower_ascii(format);
    nlohmann::ordered_json summary;
    summary["format"] = kind;
    if (kind == "source") {
      const auto result = ingest_source_corpus(path, split ? SplitSpec::parse(split) : SplitSpec::standard());
      summary["train"] = result.train.size();
      summary["dev"] = result.dev.size();
      summary["dropped_labels"] = result.dropped_labels;
      summary["outside_split"] = result.outside_split;
      nlohmann::ordered_json labels = nlohmann::ordered_json::object();
      for (const auto& [label, n] : [&] {
             std::map<RelationLabel, std::size_t> counts;
             for (const auto& inst : result.train) ++counts[inst.label];
             return counts;
           }()) {
        labels[std::string(label_name(label))] = n;
      }
      summary["train_labels"] = labels;
    } else if (kind == "target") {
      const auto result = ingest_target_corpus(path, annotators > 0 ? annotators : kDefaultAnnotators);
      summary["instances"] = result.instances.size();
      summary["excluded_no_relation"] = result.excluded_no_relation;
      nlohmann::ordered_json per_domain = nlohmann::ordered_json::object();
      for (const auto& [domain, n] : result.per_domain) per_domain[domain.code()] = n;
      summary["per_domain"] = per_domain;
    } else if (kind == "raw") {
      const auto docs = ingest_raw_corpus(path);
      std::map<std::string, std::pair<std::size_t, std::size_t>> per_domain;  // documents, pairs
      for (const auto& doc : docs) {
        auto& entry = per_domain[doc.domain.code()];
        ++entry.first;
        entry.second += make_adjacent_pairs(doc).pairs.size();
      }
      summary["documents"] = docs.size();
      nlohmann::ordered_json domains = nlohmann::ordered_json::object();
      for (const auto& [code, counts] : per_domain) {
        domains[code] = {{"documents", counts.first}, {"adjacent_pairs", counts.second}};
      }
      summary["per_domain"] = domains;
    } else {
      fail(ErrorCode::kInvalidArgument, "format must be source, target or raw");
    }
    *summary_json = dup_string(summary.dump(2));
  });
}

ds_status ds_render_dc_prompt(const char* arg1, const char* label, int connective_option, const char* example_arg1,
                              const char* example_arg2, const char* example_label, const char* example_connective,
                              char** out) {
  return guarded([&] {
    require(arg1, "arg1");
    require(label, "label");
    require(example_arg1, "example_arg1");
    require(example_arg2, "example_arg2");
    require(example_label, "example_label");
    require(out, "out");
    const PromptEngine engine;
    const auto example = make_example(example_arg1, example_arg2, parse_label(example_label), example_connective);
    *out = dup_string(engine.render_dc(arg1, parse_label(label), connective_option, example).text);
  });
}

ds_status ds_render_dr_prompt(const char* arg1, const char* label, const char* example_arg1, const char* example_arg2,
                              char** out) {
  return guarded([&] {
    require(arg1, "arg1");
    require(label, "label");
    require(example_arg1, "example_arg1");
    require(example_arg2, "example_arg2");
    require(out, "out");
    const PromptEngine engine;
    const RelationLabel relation = parse_label(label);
    const auto example = make_example(example_arg1, example_arg2, relation, nullptr);
    *out = dup_string(engine.render_dr(arg1, relation, example).text);
  });
}

ds_status ds_evaluate_file(const char* predictions_path, const char* protocol, char** report_json) {
  return guarded([&] {
    require(predictions_path, "predictions_path");
    require(report_json, "report_json");
    const auto records = read_prediction_records(read_file(predictions_path));
    const auto report =
        score(records, protocol ? parse_eval_protocol(protocol) : EvalProtocol::kDiscardAlternatives);
    *report_json = dup_string(report.to_json().dump(2));
  });
}

ds_status ds_t_test(const double* model_runs, size_t n_model, const double* baseline_runs, size_t n_baseline,
                    double alpha, int paired, ds_t_test_result* out) {
  return guarded([&] {
    require(out, "out");
    if (n_model > 0) require(model_runs, "model_runs");
    if (n_baseline > 0) require(baseline_runs, "baseline_runs");
    const auto result = t_test(std::vector<double>(model_runs, model_runs + n_model),
                               std::vector<double>(baseline_runs, baseline_runs + n_baseline), alpha, paired != 0);
    *out = ds_t_test_result{result.t, result.df, result.p, result.significant ? 1 : 0};
  });
}

size_t ds_label_count(void) { return all_labels().size(); }

const char* ds_label_name(size_t index) {
  const auto labels = all_labels();
  if (index >= labels.size()) return nullptr;
  return label_name(labels[index]).data();
}

ds_status ds_is_training_label(const char* label, int* out) {
  return guarded([&] {
    require(label, "label");
    require(out, "out");
    *out = is_training_label(parse_label(label)) ? 1 : 0;
  });
}

ds_status ds_confusion_of(const char* label, char** out) {
  return guarded([&] {
    require(label, "label");
    require(out, "out");
    static const ConfusionMap cmap = ConfusionMap::bundled();
    *out = dup_string(label_name(confusion_of(parse_label(label), cmap)));
  });
}

}  // extern "C"

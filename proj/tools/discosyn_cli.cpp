// Command-line front end. Talks to the library only through the C API.
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "discosyn/discosyn.h"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;

int exit_code_for(ds_status status) {
  switch (status) {
    case DS_OK: return 0;
    case DS_ERR_CONFIG: return kExitConfig;
    case DS_ERR_TRANSPORT:
    case DS_ERR_GENERATION_REJECTED: return kExitBackend;
    default: return kExitFailure;
  }
}

int report_error(ds_status status) {
  std::cerr << "error (" << ds_status_name(status) << "): " << ds_last_error() << "\n";
  return exit_code_for(status);
}

struct Options {
  std::string config;
  std::string output;
  std::optional<long long> seed;
  bool dry_run = false;
  bool quiet = false;
  std::vector<std::string> sets;

  std::string input;
  std::string format;
  std::string split;
  std::vector<std::string> domains;
  std::vector<std::string> llms;
  std::vector<std::string> templates;
  std::optional<long long> n_arg1;
  std::vector<std::string> methods;
  std::vector<std::string> screens;
  std::string protocol = "discard-alternatives";
};

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& item : items) out += (out.empty() ? "" : ", ") + item;
  return out;
}

void on_stage(const char* id, const char* status, const char* message, void* user) {
  if (*static_cast<bool*>(user)) return;
  std::cerr << "[" << status << "] " << id;
  if (message && *message) std::cerr << ": " << message;
  std::cerr << "\n";
}

class ConfigHandle {
 public:
  ~ConfigHandle() { ds_config_destroy(handle_); }
  ds_status load(const std::string& path) {
    return path.empty() ? ds_config_create(&handle_) : ds_config_load(path.c_str(), &handle_);
  }
  ds_status set(const std::string& key, const std::string& value) {
    return ds_config_set(handle_, key.c_str(), value.c_str());
  }
  const ds_config* get() const { return handle_; }

 private:
  ds_config* handle_ = nullptr;
};

// Applies the verb-specific flags as configuration overrides.
ds_status apply_overrides(ConfigHandle& config, const Options& o) {
  std::vector<std::pair<std::string, std::string>> overrides;
  if (o.seed) overrides.emplace_back("seeds", std::to_string(*o.seed));
  if (!o.split.empty()) overrides.emplace_back("data.split", o.split);
  if (!o.llms.empty()) overrides.emplace_back("generation.backends", join(o.llms));
  if (!o.templates.empty()) overrides.emplace_back("generation.templates", join(o.templates));
  if (o.n_arg1) overrides.emplace_back("generation.n_arg1", std::to_string(*o.n_arg1));
  if (!o.methods.empty()) overrides.emplace_back("adaptation.methods", join(o.methods));
  if (!o.screens.empty()) overrides.emplace_back("screening.kinds", join(o.screens));
  for (const auto& item : o.sets) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      std::cerr << "error: --set expects key=value, got '" << item << "'\n";
      return DS_ERR_CONFIG;
    }
    overrides.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  for (const auto& [key, value] : overrides) {
    if (const ds_status s = config.set(key, value); s != DS_OK) return s;
  }
  return DS_OK;
}

int run_pipeline(ds_pipeline* pipeline, const std::vector<std::string>& targets, const Options& o, bool print_report) {
  bool quiet = o.quiet;
  ds_pipeline_set_callback(pipeline, on_stage, &quiet);
  std::vector<const char*> raw;
  for (const auto& t : targets) raw.push_back(t.c_str());
  ds_run_result* result = nullptr;
  const ds_status status = ds_pipeline_run(pipeline, raw.data(), raw.size(), o.dry_run ? 1 : 0, &result);
  if (status != DS_OK) return report_error(status);
  for (size_t i = 0; i < ds_run_result_warning_count(result); ++i) {
    std::cerr << "warning: " << ds_run_result_warning(result, i) << "\n";
  }
  if (print_report) {
    if (const char* report = ds_run_result_report(result)) std::cout << report;
  }
  const int code = ds_run_result_exit_code(result);
  ds_run_result_destroy(result);
  return code;
}

int run_verb(const std::string& verb, const Options& o, std::vector<std::string> targets, bool print_report) {
  ConfigHandle config;
  if (const ds_status s = config.load(o.config); s != DS_OK) return report_error(s);
  if (const ds_status s = apply_overrides(config, o); s != DS_OK) return report_error(s);
  ds_pipeline* pipeline = nullptr;
  const ds_status s = ds_pipeline_create(config.get(), o.output.empty() ? nullptr : o.output.c_str(), &pipeline);
  if (s != DS_OK) return report_error(s);
  if (verb == "generate" || verb == "screen" || verb == "pseudo-label") {
    // --domain narrows the per-domain stages
    if (!o.domains.empty()) {
      std::vector<std::string> narrowed;
      for (const auto& t : targets) {
        if (t == "screen-report") {
          narrowed.push_back(t);
          continue;
        }
        for (const auto& d : o.domains) narrowed.push_back(t + "/" + d);
      }
      targets = narrowed;
    }
  }
  const int code = run_pipeline(pipeline, targets, o, print_report);
  ds_pipeline_destroy(pipeline);
  return code;
}

int standalone_ingest(const Options& o) {
  char* summary = nullptr;
  const ds_status s = ds_ingest(o.input.c_str(), o.format.empty() ? "source" : o.format.c_str(),
                                o.split.empty() ? nullptr : o.split.c_str(), 0, &summary);
  if (s != DS_OK) return report_error(s);
  std::cout << summary << "\n";
  ds_string_free(summary);
  return 0;
}

int standalone_evaluate(const Options& o) {
  char* report = nullptr;
  const ds_status s = ds_evaluate_file(o.input.c_str(), o.protocol.c_str(), &report);
  if (s != DS_OK) return report_error(s);
  std::cout << report << "\n";
  ds_string_free(report);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Synthetic discourse-relation data: generation, screening, adaptation and evaluation"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "Configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--output", o.output, "Output directory (default: run.output_dir)");
    cmd->add_option("--seed", o.seed, "Run a single seed instead of the configured list");
    cmd->add_flag("--dry-run", o.dry_run, "Show which stages would run");
    cmd->add_flag("--quiet", o.quiet, "No per-stage progress");
    cmd->add_option("--set", o.sets, "Override a configuration key (key=value)");
  };

  auto* ingest = app.add_subcommand("ingest", "Read and canonicalize the corpora");
  common(ingest);
  ingest->add_option("--input", o.input, "Summarize a single corpus file instead of running the stage");
  ingest->add_option("--format", o.format, "Corpus format of --input")->check(CLI::IsMember({"source", "target", "raw"}));
  ingest->add_option("--split", o.split, "Train/dev sections, e.g. 2-20:0-1");

  auto* train = app.add_subcommand("train-base", "Train the source-domain base classifiers");
  common(train);

  auto* generate = app.add_subcommand("generate", "Generate and label synthetic Arg2 candidates");
  common(generate);
  generate->add_option("--domain", o.domains, "Only these configured domains");
  generate->add_option("--llm", o.llms, "Generation backends (name=endpoint or mock)");
  generate->add_option("--template", o.templates, "Prompt templates (DC, DR)");
  generate->add_option("--n-arg1", o.n_arg1, "Raw Arg1 sentences per domain");

  auto* screen = app.add_subcommand("screen", "Screen labeled synthetic candidates");
  common(screen);
  screen->add_option("--domain", o.domains, "Only these configured domains");
  screen->add_option("--screen", o.screens, "Screens (strict, confusion, combi)");

  auto* adapt = app.add_subcommand("adapt", "Train the adapted model variants");
  common(adapt);
  adapt->add_option("--method", o.methods, "Adaptation methods (concat, prefix, invariance)");

  auto* pseudo = app.add_subcommand("pseudo-label", "Pseudo-label raw target-domain sentence pairs");
  common(pseudo);
  pseudo->add_option("--domain", o.domains, "Only these configured domains");

  auto* evaluate = app.add_subcommand("evaluate", "Score models on the target test sets");
  common(evaluate);
  evaluate->add_option("--input", o.input, "Score a prediction file instead of running the stage");
  evaluate->add_option("--protocol", o.protocol, "Multi-gold protocol for --input");

  auto* report = app.add_subcommand("report", "Aggregate runs into the results table");
  common(report);

  auto* run = app.add_subcommand("run", "Run every stage");
  common(run);
  run->add_option("--method", o.methods, "Adaptation methods (concat, prefix, invariance)");

  auto* resume = app.add_subcommand("resume", "Re-run what is missing or stale in an output directory");
  resume->add_option("--output", o.output, "Output directory of an earlier run")->required();
  resume->add_flag("--dry-run", o.dry_run, "Show which stages would run");
  resume->add_flag("--quiet", o.quiet, "No per-stage progress");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  if (ingest->parsed() && !o.input.empty()) return standalone_ingest(o);
  if (evaluate->parsed() && !o.input.empty()) return standalone_evaluate(o);

  if (resume->parsed()) {
    ds_pipeline* pipeline = nullptr;
    const ds_status s = ds_pipeline_open(o.output.c_str(), &pipeline);
    if (s != DS_OK) return report_error(s);
    const int code = run_pipeline(pipeline, {}, o, true);
    ds_pipeline_destroy(pipeline);
    return code;
  }

  if (ingest->parsed()) return run_verb("ingest", o, {"ingest"}, false);
  if (train->parsed()) return run_verb("train-base", o, {"train-base"}, false);
  if (generate->parsed()) return run_verb("generate", o, {"label-synthetic"}, false);
  if (screen->parsed()) return run_verb("screen", o, {"screen", "screen-report"}, false);
  if (adapt->parsed()) return run_verb("adapt", o, {"adapt"}, false);
  if (pseudo->parsed()) return run_verb("pseudo-label", o, {"pseudo-label"}, false);
  if (evaluate->parsed()) return run_verb("evaluate", o, {"evaluate"}, false);
  if (report->parsed()) return run_verb("report", o, {"report"}, true);
  if (run->parsed()) return run_verb("run", o, {}, true);
  return kExitFailure;
}

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <nlohmann/json.hpp>

#include "adaptation.hpp"
#include "corpus.hpp"
#include "labels.hpp"

namespace discosyn {

using Rational = boost::multiprecision::cpp_rational;

struct PredictionRecord {
  std::string id;
  RelationLabel predicted = RelationLabel::kConjunction;
  std::set<RelationLabel> gold;
  RelationLabel majority = RelationLabel::kConjunction;
  DomainTag domain;

  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

// How classwise counts treat the extra gold labels of multi-gold items.
//   discard-alternatives: p in G gives TP[p]; otherwise FP[p] and FN[m].
//   all-gold-fn: as above, but every unmatched gold label is a false negative.
//   alternatives-as-tp: p in G also counts TP for the other gold labels.
enum class EvalProtocol { kDiscardAlternatives, kAllGoldFn, kAlternativesAsTp };

std::string_view eval_protocol_name(EvalProtocol protocol);
EvalProtocol parse_eval_protocol(std::string_view text);

struct ClassScore {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  Rational precision;
  Rational recall;
  Rational f1;
  bool in_gold = false;  // occurs in some gold set, so enters the macro average
};

struct MetricReport {
  EvalProtocol protocol = EvalProtocol::kDiscardAlternatives;
  std::size_t n = 0;
  Rational accuracy;
  Rational macro_f1;
  std::map<RelationLabel, ClassScore> per_class;
  std::string test_set_digest;  // over item ids and gold sets
  std::string run_id;

  double accuracy_value() const;
  double macro_f1_value() const;
  nlohmann::ordered_json to_json() const;
};

MetricReport score(const std::vector<PredictionRecord>& records,
                   EvalProtocol protocol = EvalProtocol::kDiscardAlternatives);

struct Statistic {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::vector<double> runs;
};

struct RunSummary {
  EvalProtocol protocol = EvalProtocol::kDiscardAlternatives;
  std::size_t n = 0;
  Statistic macro_f1;
  Statistic accuracy;

  nlohmann::ordered_json to_json() const;
};

Statistic summarize(const std::vector<double>& values);
RunSummary aggregate_runs(const std::vector<MetricReport>& reports);

struct SignificanceResult {
  std::string metric;
  double model_mean = 0.0;
  double baseline_mean = 0.0;
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  double alpha = 0.05;
  bool paired = false;
  bool significant = false;

  nlohmann::ordered_json to_json() const;
};

// Two-tailed Welch two-sample t-test, or a paired t-test over run-aligned
// differences. Both samples must hold at least two runs.
SignificanceResult t_test(const std::vector<double>& model_runs, const std::vector<double>& baseline_runs,
                          double alpha = 0.05, bool paired = false, std::string metric = "macro_f1");

// Results table: one row per model variant, F1 and accuracy per domain.
enum class Metric { kF1, kAccuracy };

struct VariantRow {
  std::string id;
  std::string model;
  std::string llm;
  std::string prompt;
  std::string screen;
  std::string config;
  // Per-domain training-set sizes; the size column shows their rounded mean.
  std::vector<std::size_t> domain_sizes;
  bool baseline = false;
};

struct CellKey {
  std::string variant;
  DomainTag domain;
  Metric metric = Metric::kF1;
  auto operator<=>(const CellKey&) const = default;
};

struct ResultsTable {
  std::vector<DomainTag> domains;
  std::vector<VariantRow> rows;
  std::map<std::pair<std::string, DomainTag>, RunSummary> summaries;
  std::map<CellKey, SignificanceResult> significance;
};

// Mean rounded half up; empty input gives nullopt.
std::optional<std::size_t> rounded_mean_size(const std::vector<std::size_t>& sizes);

// Markdown table: column maxima in bold, cells significantly different from
// the baseline starred.
std::string render_results_table(const ResultsTable& table);
// The same cells as tab-separated values, without markers.
std::string render_results_tsv(const ResultsTable& table);

// Classifies every test item; ids default to the pair's doc id.
std::vector<PredictionRecord> predict_records(const Model& model, const std::vector<CrowdAnnotatedInstance>& test,
                                              bool with_domain_token, std::size_t parallelism = 1);

std::string write_prediction_records(const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_prediction_records(std::string_view content);

}  // namespace discosyn

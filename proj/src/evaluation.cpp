#include "evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>

#include "error.hpp"
#include "util.hpp"

namespace discosyn {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view eval_protocol_name(EvalProtocol protocol) {
  switch (protocol) {
    case EvalProtocol::kDiscardAlternatives: return "discard-alternatives";
    case EvalProtocol::kAllGoldFn: return "all-gold-fn";
    case EvalProtocol::kAlternativesAsTp: return "alternatives-as-tp";
  }
  return "discard-alternatives";
}

EvalProtocol parse_eval_protocol(std::string_view text) {
  const std::string key = to_lower_ascii(trim(text));
  if (key == "discard-alternatives") return EvalProtocol::kDiscardAlternatives;
  if (key == "all-gold-fn") return EvalProtocol::kAllGoldFn;
  if (key == "alternatives-as-tp") return EvalProtocol::kAlternativesAsTp;
  fail(ErrorCode::kConfig, "unknown evaluation protocol '" + std::string(text) + "'");
}

namespace {

double to_double(const Rational& r) { return r.convert_to<double>(); }

Rational ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return Rational(0);
  return Rational(num, den);
}

}  // namespace

double MetricReport::accuracy_value() const { return to_double(accuracy); }
double MetricReport::macro_f1_value() const { return to_double(macro_f1); }

ordered_json MetricReport::to_json() const {
  ordered_json out;
  out["protocol"] = eval_protocol_name(protocol);
  out["run_id"] = run_id;
  out["n"] = n;
  out["test_set_digest"] = test_set_digest;
  out["accuracy"] = accuracy_value();
  out["accuracy_exact"] = accuracy.str();
  out["macro_f1"] = macro_f1_value();
  out["macro_f1_exact"] = macro_f1.str();
  ordered_json classes = ordered_json::object();
  for (const auto& [label, s] : per_class) {
    classes[std::string(label_name(label))] = {{"tp", s.tp},
                                               {"fp", s.fp},
                                               {"fn", s.fn},
                                               {"precision", to_double(s.precision)},
                                               {"recall", to_double(s.recall)},
                                               {"f1", to_double(s.f1)},
                                               {"in_gold", s.in_gold}};
  }
  out["per_class"] = classes;
  return out;
}

MetricReport score(const std::vector<PredictionRecord>& records, EvalProtocol protocol) {
  if (records.empty()) fail(ErrorCode::kInvalidArgument, "cannot score an empty prediction set");
  MetricReport report;
  report.protocol = protocol;
  report.n = records.size();
  std::int64_t correct = 0;
  std::vector<std::string> digest_lines;
  digest_lines.reserve(records.size());

  for (const auto& r : records) {
    if (r.gold.empty()) fail(ErrorCode::kInvalidArgument, "item " + r.id + " has an empty gold set");
    if (!r.gold.contains(r.majority)) {
      fail(ErrorCode::kInvalidArgument, "item " + r.id + ": majority label is not in the gold set");
    }
    std::string line = r.id;
    for (RelationLabel g : r.gold) {
      report.per_class[g].in_gold = true;
      line += "\t" + std::string(label_name(g));
    }
    digest_lines.push_back(std::move(line));

    const bool hit = r.gold.contains(r.predicted);
    if (hit) ++correct;
    switch (protocol) {
      case EvalProtocol::kDiscardAlternatives:
        if (hit) {
          ++report.per_class[r.predicted].tp;
        } else {
          ++report.per_class[r.predicted].fp;
          ++report.per_class[r.majority].fn;
        }
        break;
      case EvalProtocol::kAllGoldFn:
        if (hit) {
          ++report.per_class[r.predicted].tp;
        } else {
          ++report.per_class[r.predicted].fp;
        }
        for (RelationLabel g : r.gold) {
          if (g != r.predicted) ++report.per_class[g].fn;
        }
        break;
      case EvalProtocol::kAlternativesAsTp:
        if (hit) {
          for (RelationLabel g : r.gold) ++report.per_class[g].tp;
        } else {
          ++report.per_class[r.predicted].fp;
          ++report.per_class[r.majority].fn;
        }
        break;
    }
  }

  Rational f1_sum = 0;
  std::int64_t occurring = 0;
  for (auto& [label, s] : report.per_class) {
    s.precision = ratio(s.tp, s.tp + s.fp);
    s.recall = ratio(s.tp, s.tp + s.fn);
    s.f1 = ratio(2 * s.tp, 2 * s.tp + s.fp + s.fn);
    if (s.in_gold) {
      f1_sum += s.f1;
      ++occurring;
    }
  }
  report.accuracy = ratio(correct, static_cast<std::int64_t>(records.size()));
  report.macro_f1 = f1_sum / occurring;
  // order-independent digest of the test set
  std::sort(digest_lines.begin(), digest_lines.end());
  std::string all;
  for (const auto& line : digest_lines) all += line + "\n";
  report.test_set_digest = sha256_hex(all);
  return report;
}

Statistic summarize(const std::vector<double>& values) {
  if (values.empty()) fail(ErrorCode::kInvalidArgument, "cannot summarize zero runs");
  Statistic s;
  s.runs = values;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  s.min = *std::min_element(values.begin(), values.end());
  s.max = *std::max_element(values.begin(), values.end());
  return s;
}

RunSummary aggregate_runs(const std::vector<MetricReport>& reports) {
  if (reports.empty()) fail(ErrorCode::kInvalidArgument, "cannot aggregate zero runs");
  RunSummary summary;
  summary.protocol = reports.front().protocol;
  summary.n = reports.front().n;
  std::vector<double> f1, acc;
  for (const auto& r : reports) {
    if (r.protocol != summary.protocol) fail(ErrorCode::kInvalidArgument, "runs were scored under different protocols");
    if (r.test_set_digest != reports.front().test_set_digest) {
      fail(ErrorCode::kInvalidArgument, "runs were scored on different test sets");
    }
    f1.push_back(r.macro_f1_value());
    acc.push_back(r.accuracy_value());
  }
  summary.macro_f1 = summarize(f1);
  summary.accuracy = summarize(acc);
  return summary;
}

ordered_json RunSummary::to_json() const {
  auto stat = [](const Statistic& s) {
    return ordered_json{{"mean", s.mean}, {"min", s.min}, {"max", s.max}, {"runs", s.runs}};
  };
  return {{"protocol", eval_protocol_name(protocol)},
          {"n", n},
          {"macro_f1", stat(macro_f1)},
          {"accuracy", stat(accuracy)}};
}

ordered_json SignificanceResult::to_json() const {
  return {{"metric", metric},           {"model_mean", model_mean}, {"baseline_mean", baseline_mean},
          {"t", t},                     {"df", df},                 {"p", p},
          {"alpha", alpha},             {"paired", paired},         {"significant", significant}};
}

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_variance(const std::vector<double>& v, double mean) {
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(v.size() - 1);
}

double two_tailed_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

}  // namespace

SignificanceResult t_test(const std::vector<double>& model_runs, const std::vector<double>& baseline_runs,
                          double alpha, bool paired, std::string metric) {
  if (model_runs.size() < 2 || baseline_runs.size() < 2) {
    fail(ErrorCode::kInvalidArgument, "a t-test needs at least two runs per sample");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::kInvalidArgument, "alpha must lie in (0, 1)");
  SignificanceResult result;
  result.metric = std::move(metric);
  result.alpha = alpha;
  result.paired = paired;
  result.model_mean = mean_of(model_runs);
  result.baseline_mean = mean_of(baseline_runs);
  const double diff = result.model_mean - result.baseline_mean;

  double se2 = 0.0;
  if (paired) {
    if (model_runs.size() != baseline_runs.size()) {
      fail(ErrorCode::kInvalidArgument, "a paired t-test needs the same number of runs");
    }
    std::vector<double> d(model_runs.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = model_runs[i] - baseline_runs[i];
    const double n = static_cast<double>(d.size());
    se2 = sample_variance(d, mean_of(d)) / n;
    result.df = n - 1.0;
  } else {
    const double n1 = static_cast<double>(model_runs.size());
    const double n2 = static_cast<double>(baseline_runs.size());
    const double a = sample_variance(model_runs, result.model_mean) / n1;
    const double b = sample_variance(baseline_runs, result.baseline_mean) / n2;
    se2 = a + b;
    result.df = se2 > 0.0 ? se2 * se2 / (a * a / (n1 - 1.0) + b * b / (n2 - 1.0)) : n1 + n2 - 2.0;
  }

  if (se2 == 0.0) {
    // Degenerate samples: no spread, so any mean difference is certain.
    result.t = diff == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), diff);
    result.p = diff == 0.0 ? 1.0 : 0.0;
  } else {
    result.t = diff / std::sqrt(se2);
    result.p = two_tailed_p(result.t, result.df);
  }
  result.significant = result.p < alpha;
  return result;
}

// Rendering

std::optional<std::size_t> rounded_mean_size(const std::vector<std::size_t>& sizes) {
  if (sizes.empty()) return std::nullopt;
  const std::size_t n = sizes.size();
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  return (2 * total + n) / (2 * n);
}

namespace {

std::string percent(double fraction) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(2) << fraction * 100.0;
  return out.str();
}

struct Grid {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::size_t text_columns = 0;
};

std::string metric_name(Metric metric) { return metric == Metric::kF1 ? "F1" : "Acc"; }

Grid build_grid(const ResultsTable& table, bool markers) {
  Grid grid;
  grid.header = {"Model", "LLM", "Prompt", "Screen", "Config", "Size"};
  grid.text_columns = grid.header.size();
  std::vector<std::pair<DomainTag, Metric>> columns;
  for (const auto& domain : table.domains) {
    for (Metric metric : {Metric::kF1, Metric::kAccuracy}) {
      columns.emplace_back(domain, metric);
      grid.header.push_back(domain.code() + " " + metric_name(metric));
    }
  }

  auto value_of = [&](const VariantRow& row, const DomainTag& domain, Metric metric) -> std::optional<double> {
    const auto it = table.summaries.find({row.id, domain});
    if (it == table.summaries.end()) return std::nullopt;
    return metric == Metric::kF1 ? it->second.macro_f1.mean : it->second.accuracy.mean;
  };

  // Column maxima at display precision, so visually tied cells are all marked.
  std::vector<std::optional<long long>> best(columns.size());
  for (std::size_t c = 0; c < columns.size(); ++c) {
    for (const auto& row : table.rows) {
      if (const auto v = value_of(row, columns[c].first, columns[c].second)) {
        const long long scaled = std::llround(*v * 10000.0);
        if (!best[c] || scaled > *best[c]) best[c] = scaled;
      }
    }
  }

  for (const auto& row : table.rows) {
    std::vector<std::string> cells = {row.model, row.llm, row.prompt, row.screen, row.config};
    const auto size = rounded_mean_size(row.domain_sizes);
    cells.push_back(size ? std::to_string(*size) : "-");
    for (std::size_t c = 0; c < columns.size(); ++c) {
      const auto& [domain, metric] = columns[c];
      const auto v = value_of(row, domain, metric);
      if (!v) {
        cells.push_back("-");
        continue;
      }
      std::string cell = percent(*v);
      if (markers) {
        const auto sig = table.significance.find({row.id, domain, metric});
        if (!row.baseline && sig != table.significance.end() && sig->second.significant) cell += "*";
        if (best[c] && std::llround(*v * 10000.0) == *best[c]) cell = "**" + cell + "**";
      }
      cells.push_back(std::move(cell));
    }
    grid.rows.push_back(std::move(cells));
  }
  return grid;
}

}  // namespace

std::string render_results_table(const ResultsTable& table) {
  const Grid grid = build_grid(table, true);
  std::vector<std::size_t> width(grid.header.size());
  for (std::size_t c = 0; c < width.size(); ++c) {
    width[c] = grid.header[c].size();
    for (const auto& row : grid.rows) width[c] = std::max(width[c], row[c].size());
  }
  auto emit = [&](std::ostringstream& out, const std::vector<std::string>& cells) {
    out << "|";
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const std::size_t pad = width[c] - cells[c].size();
      if (c < grid.text_columns) {
        out << " " << cells[c] << std::string(pad, ' ') << " |";
      } else {
        out << " " << std::string(pad, ' ') << cells[c] << " |";
      }
    }
    out << "\n";
  };
  std::ostringstream out;
  emit(out, grid.header);
  out << "|";
  for (std::size_t c = 0; c < width.size(); ++c) {
    out << (c < grid.text_columns ? ":" + std::string(width[c] + 1, '-') : std::string(width[c] + 1, '-') + ":")
        << "|";
  }
  out << "\n";
  for (const auto& row : grid.rows) emit(out, row);
  return out.str();
}

std::string render_results_tsv(const ResultsTable& table) {
  const Grid grid = build_grid(table, false);
  std::ostringstream out;
  auto emit = [&](const std::vector<std::string>& cells) {
    for (std::size_t c = 0; c < cells.size(); ++c) out << (c ? "\t" : "") << cells[c];
    out << "\n";
  };
  emit(grid.header);
  for (const auto& row : grid.rows) emit(row);
  return out.str();
}

// Prediction files

std::vector<PredictionRecord> predict_records(const Model& model, const std::vector<CrowdAnnotatedInstance>& test,
                                              bool with_domain_token, std::size_t parallelism) {
  std::vector<PredictionRecord> out;
  out.reserve(test.size());
  // group by domain so batch prediction can carry the domain token
  std::map<DomainTag, std::vector<std::size_t>> by_domain;
  for (std::size_t i = 0; i < test.size(); ++i) by_domain[test[i].domain].push_back(i);
  std::vector<std::optional<Prediction>> predictions(test.size());
  for (const auto& [domain, indices] : by_domain) {
    std::vector<ArgumentPair> pairs;
    for (std::size_t i : indices) pairs.push_back(test[i].pair);
    const auto batch =
        predict_batch(model, pairs, with_domain_token ? std::optional<DomainTag>(domain) : std::nullopt, parallelism);
    for (std::size_t k = 0; k < indices.size(); ++k) predictions[indices[k]] = batch[k];
  }
  for (std::size_t i = 0; i < test.size(); ++i) {
    PredictionRecord record;
    record.id = test[i].pair.doc_id.empty() ? "item-" + std::to_string(i) : test[i].pair.doc_id;
    record.predicted = predictions[i]->label;
    record.gold = gold_label_set(test[i]);
    record.majority = test[i].majority_label();
    if (!record.gold.contains(record.majority)) record.majority = *record.gold.begin();
    record.domain = test[i].domain;
    out.push_back(std::move(record));
  }
  return out;
}

std::string write_prediction_records(const std::vector<PredictionRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    ordered_json record;
    record["id"] = r.id;
    record["domain"] = r.domain.code();
    record["predicted"] = label_name(r.predicted);
    ordered_json gold = ordered_json::array();
    for (RelationLabel g : r.gold) gold.push_back(label_name(g));
    record["gold"] = gold;
    record["majority"] = label_name(r.majority);
    out += record.dump() + "\n";
  }
  return out;
}

std::vector<PredictionRecord> read_prediction_records(std::string_view content) {
  std::vector<PredictionRecord> out;
  for (const auto& [line, record] : parse_jsonl(content)) {
    try {
      PredictionRecord r;
      r.id = record.at("id").get<std::string>();
      r.domain = DomainTag::parse(record.at("domain").get<std::string>());
      r.predicted = parse_label(record.at("predicted").get<std::string>());
      for (const auto& g : record.at("gold")) r.gold.insert(parse_label(g.get<std::string>()));
      r.majority = record.contains("majority") ? parse_label(record["majority"].get<std::string>())
                                               : (r.gold.empty() ? r.predicted : *r.gold.begin());
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      fail(ErrorCode::kFormat, "line " + std::to_string(line) + ": " + e.what());
    } catch (const Error& e) {
      fail(e.code(), "line " + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace discosyn

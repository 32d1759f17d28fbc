#include "synthetic.hpp"

#include "error.hpp"
#include "util.hpp"

namespace discosyn {

using nlohmann::json;
using nlohmann::ordered_json;

std::string_view screen_kind_name(ScreenKind kind) {
  switch (kind) {
    case ScreenKind::kStrict: return "strict";
    case ScreenKind::kConfusion: return "confusion";
    case ScreenKind::kCombi: return "combi";
  }
  return "strict";
}

ScreenKind parse_screen_kind(std::string_view text) {
  const std::string key = to_lower_ascii(trim(text));
  if (key == "strict") return ScreenKind::kStrict;
  if (key == "confusion" || key == "confuse") return ScreenKind::kConfusion;
  if (key == "combi" || key == "smooth") return ScreenKind::kCombi;
  fail(ErrorCode::kConfig, "unknown screen kind '" + std::string(text) + "'");
}

void SyntheticInstance::set_verdict(ScreenKind kind, bool keep) {
  if (!predicted_) fail(ErrorCode::kState, "verdict set before the base model prediction");
  const auto [it, inserted] = verdicts_.emplace(kind, keep);
  if (!inserted && it->second != keep) {
    fail(ErrorCode::kState, "verdict for " + std::string(screen_kind_name(kind)) + " already recorded");
  }
}

LabeledInstance SyntheticInstance::as_labeled() const {
  return LabeledInstance{pair, intended, domain, Provenance::kSynthetic, std::nullopt};
}

ordered_json to_record(const SyntheticInstance& instance) {
  ordered_json record;
  record["doc_id"] = instance.pair.doc_id;
  record["domain"] = instance.domain.code();
  record["arg1"] = instance.pair.arg1;
  record["arg2"] = instance.pair.arg2;
  record["label"] = label_name(instance.intended);
  record["adjacency"] = adjacency_name(instance.pair.adjacency);
  record["provenance"] = provenance_name(Provenance::kSynthetic);
  record["backend"] = instance.backend;
  record["template"] = template_kind_name(instance.kind);
  if (instance.connective) record["connective"] = *instance.connective;
  record["example_id"] = instance.example_id;
  record["decoding"] = {{"max_new_tokens", instance.decoding.max_new_tokens},
                        {"temperature", instance.decoding.temperature},
                        {"seed", instance.decoding.seed}};
  record["sentence_index"] = instance.sentence_index;
  if (instance.predicted()) record["predicted"] = label_name(*instance.predicted());
  if (!instance.verdicts().empty()) {
    ordered_json verdicts = ordered_json::object();
    for (const auto& [kind, keep] : instance.verdicts()) verdicts[std::string(screen_kind_name(kind))] = keep;
    record["verdicts"] = verdicts;
  }
  return record;
}

SyntheticInstance synthetic_from_record(const json& record) {
  SyntheticInstance instance;
  try {
    instance.pair = make_pair(record.at("arg1").get<std::string>(), record.at("arg2").get<std::string>(),
                              record.value("doc_id", ""), Adjacency::kInterSentential);
    instance.domain = DomainTag::parse(record.at("domain").get<std::string>());
    instance.intended = parse_label(record.at("label").get<std::string>());
    instance.backend = record.at("backend").get<std::string>();
    instance.kind = parse_template_kind(record.at("template").get<std::string>());
    if (record.contains("connective")) instance.connective = record.at("connective").get<std::string>();
    instance.example_id = record.value("example_id", "");
    if (record.contains("decoding")) {
      const json& d = record.at("decoding");
      instance.decoding = {d.at("max_new_tokens").get<int>(), d.at("temperature").get<double>(),
                           d.at("seed").get<std::uint64_t>()};
    }
    instance.sentence_index = record.value("sentence_index", std::size_t{0});
    if (record.contains("predicted")) instance.set_predicted(parse_label(record.at("predicted").get<std::string>()));
    if (record.contains("verdicts")) {
      for (const auto& [key, value] : record.at("verdicts").items()) {
        instance.set_verdict(parse_screen_kind(key), value.get<bool>());
      }
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormat, std::string("synthetic record: ") + e.what());
  }
  return instance;
}

std::string write_synthetic_records(const std::vector<SyntheticInstance>& instances) {
  std::string out;
  for (const auto& instance : instances) {
    out += to_record(instance).dump();
    out += '\n';
  }
  return out;
}

std::vector<SyntheticInstance> read_synthetic_records(std::string_view content) {
  std::vector<SyntheticInstance> out;
  for (const auto& [line_no, record] : parse_jsonl(content)) {
    try {
      out.push_back(synthetic_from_record(record));
    } catch (const Error& e) {
      fail(ErrorCode::kFormat, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace discosyn

#include "corpus.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

#include "error.hpp"
#include "util.hpp"

namespace discosyn {

using nlohmann::json;
using nlohmann::ordered_json;

DomainTag DomainTag::parse(std::string_view code) {
  const std::string value = trim(code);
  bool ok = !value.empty() && value.size() <= 16 &&
            std::isupper(static_cast<unsigned char>(value.front()));
  for (char c : value) {
    ok = ok && (std::isupper(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)));
  }
  if (!ok) fail(ErrorCode::kInvalidArgument, "invalid domain tag '" + std::string(code) + "'");
  return DomainTag(value);
}

std::vector<DomainTag> default_target_domains() {
  return {DomainTag::parse("EP"), DomainTag::parse("WK"), DomainTag::parse("NV")};
}

DomainTag source_domain() { return DomainTag::parse("PDTB"); }

std::string_view adjacency_name(Adjacency adjacency) {
  return adjacency == Adjacency::kInterSentential ? "inter" : "intra";
}

std::string_view provenance_name(Provenance provenance) {
  switch (provenance) {
    case Provenance::kSourceAnnotated: return "source-annotated";
    case Provenance::kSynthetic: return "synthetic";
    case Provenance::kPseudoLabeled: return "pseudo-labeled";
  }
  return "source-annotated";
}

Provenance parse_provenance(std::string_view text) {
  if (text == "source-annotated") return Provenance::kSourceAnnotated;
  if (text == "synthetic") return Provenance::kSynthetic;
  if (text == "pseudo-labeled") return Provenance::kPseudoLabeled;
  fail(ErrorCode::kFormat, "unknown provenance '" + std::string(text) + "'");
}

namespace {

Adjacency parse_adjacency(std::string_view text) {
  if (text == "inter") return Adjacency::kInterSentential;
  if (text == "intra") return Adjacency::kIntraSentential;
  fail(ErrorCode::kFormat, "unknown adjacency '" + std::string(text) + "'");
}

[[noreturn]] void fail_at(int line, const std::string& message) {
  fail(ErrorCode::kFormat, "line " + std::to_string(line) + ": " + message);
}

const json& require(const json& record, const char* key) {
  if (!record.is_object() || !record.contains(key)) {
    fail(ErrorCode::kFormat, std::string("missing field '") + key + "'");
  }
  return record.at(key);
}

std::string require_string(const json& record, const char* key) {
  const json& value = require(record, key);
  if (!value.is_string()) fail(ErrorCode::kFormat, std::string("field '") + key + "' must be a string");
  return value.get<std::string>();
}

ArgumentPair pair_from_record(const json& record) {
  Adjacency adjacency = Adjacency::kInterSentential;
  if (record.contains("adjacency")) adjacency = parse_adjacency(require_string(record, "adjacency"));
  std::string doc_id = record.contains("doc_id") ? require_string(record, "doc_id") : std::string();
  return make_pair(require_string(record, "arg1"), require_string(record, "arg2"), std::move(doc_id),
                   adjacency);
}

// First sense when the label field lists several.
std::string label_string(const json& record) {
  const json& value = require(record, "label");
  if (value.is_string()) return value.get<std::string>();
  if (value.is_array() && !value.empty() && value.front().is_string()) {
    return value.front().get<std::string>();
  }
  fail(ErrorCode::kFormat, "field 'label' must be a string or a non-empty list of strings");
}

// Section numbers come from the record or from a WSJ-style doc id (wsj_SSxx).
std::optional<int> section_of(const json& record) {
  if (record.contains("section")) {
    const json& value = record.at("section");
    if (!value.is_number_integer()) fail(ErrorCode::kFormat, "field 'section' must be an integer");
    return value.get<int>();
  }
  if (record.contains("doc_id") && record.at("doc_id").is_string()) {
    const std::string id = record.at("doc_id").get<std::string>();
    const auto underscore = id.find('_');
    if (underscore != std::string::npos && id.size() >= underscore + 3 &&
        std::isdigit(static_cast<unsigned char>(id[underscore + 1])) &&
        std::isdigit(static_cast<unsigned char>(id[underscore + 2]))) {
      return std::stoi(id.substr(underscore + 1, 2));
    }
  }
  return std::nullopt;
}

void append_line(std::string& out, const ordered_json& record) {
  out += record.dump(-1, ' ', false, json::error_handler_t::strict);
  out += '\n';
}

std::set<int> parse_sections(std::string_view text) {
  std::set<int> out;
  for (const auto& item : split(text, ',')) {
    const std::string part = trim(item);
    if (part.empty()) continue;
    const auto dash = part.find('-');
    try {
      if (dash == std::string::npos) {
        out.insert(std::stoi(part));
      } else {
        const int lo = std::stoi(part.substr(0, dash));
        const int hi = std::stoi(part.substr(dash + 1));
        if (hi < lo) fail(ErrorCode::kConfig, "descending section range '" + part + "'");
        for (int s = lo; s <= hi; ++s) out.insert(s);
      }
    } catch (const std::logic_error&) {
      fail(ErrorCode::kConfig, "bad section list '" + std::string(text) + "'");
    }
  }
  return out;
}

std::string sections_to_string(const std::set<int>& sections) {
  std::string out;
  auto it = sections.begin();
  while (it != sections.end()) {
    const int lo = *it;
    int hi = lo;
    auto next = std::next(it);
    while (next != sections.end() && *next == hi + 1) {
      hi = *next;
      ++next;
    }
    if (!out.empty()) out += ',';
    out += std::to_string(lo);
    if (hi != lo) out += "-" + std::to_string(hi);
    it = next;
  }
  return out;
}

}  // namespace

ArgumentPair make_pair(std::string_view arg1, std::string_view arg2, std::string doc_id,
                       Adjacency adjacency) {
  ArgumentPair pair{collapse_whitespace(arg1), collapse_whitespace(arg2), std::move(doc_id), adjacency};
  if (pair.arg1.empty() || pair.arg2.empty()) {
    fail(ErrorCode::kInvalidArgument, "argument spans must be non-empty");
  }
  return pair;
}

int CrowdAnnotatedInstance::total_votes() const {
  int total = 0;
  for (const auto& [label, count] : votes) total += count;
  return total;
}

RelationLabel CrowdAnnotatedInstance::majority_label() const {
  if (votes.empty()) fail(ErrorCode::kState, "instance has no votes");
  // std::map iterates in global label order, so the first maximum wins ties.
  auto best = votes.begin();
  for (auto it = votes.begin(); it != votes.end(); ++it) {
    if (it->second > best->second) best = it;
  }
  return best->first;
}

std::set<RelationLabel> gold_label_set(const CrowdAnnotatedInstance& instance, double threshold) {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    fail(ErrorCode::kInvalidArgument, "gold threshold must lie in (0, 1]");
  }
  const int total = instance.total_votes();
  std::set<RelationLabel> gold;
  for (const auto& [label, count] : instance.votes) {
    if (label == RelationLabel::kNoRelation || count <= 0) continue;
    // votes/total >= threshold, with slack for the decimal threshold
    if (static_cast<double>(count) >= threshold * static_cast<double>(total) - 1e-9) {
      gold.insert(label);
    }
  }
  if (gold.empty()) gold.insert(instance.majority_label());
  return gold;
}

SplitSpec SplitSpec::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    fail(ErrorCode::kConfig, "split must look like 'train:dev', got '" + std::string(text) + "'");
  }
  SplitSpec spec{parse_sections(text.substr(0, colon)), parse_sections(text.substr(colon + 1))};
  for (int s : spec.dev_sections) {
    if (spec.train_sections.contains(s)) {
      fail(ErrorCode::kConfig, "section " + std::to_string(s) + " is in both train and dev");
    }
  }
  return spec;
}

SplitSpec SplitSpec::standard() { return parse("2-20:0-1"); }

std::string SplitSpec::to_string() const {
  return sections_to_string(train_sections) + ":" + sections_to_string(dev_sections);
}

std::vector<std::pair<int, json>> parse_jsonl(std::string_view content) {
  std::vector<std::pair<int, json>> records;
  int line_no = 0;
  for (auto& line : split(content, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    try {
      json record = json::parse(line);
      if (!record.is_object()) fail_at(line_no, "record is not an object");
      records.emplace_back(line_no, std::move(record));
    } catch (const json::parse_error& e) {
      fail_at(line_no, std::string("malformed record: ") + e.what());
    }
  }
  return records;
}

SourceIngestResult ingest_source_records(std::string_view content, const SplitSpec& split) {
  SourceIngestResult result;
  for (const auto& [line_no, record] : parse_jsonl(content)) {
    try {
      const RelationLabel label = parse_label(label_string(record));
      LabeledInstance instance;
      instance.pair = pair_from_record(record);
      instance.label = label;
      instance.domain = record.contains("domain") ? DomainTag::parse(require_string(record, "domain"))
                                                  : source_domain();
      instance.provenance = Provenance::kSourceAnnotated;
      instance.section = section_of(record);
      if (!is_training_label(label)) {
        ++result.dropped_labels;
        continue;
      }
      if (!instance.section) fail(ErrorCode::kFormat, "record has no section");
      if (split.train_sections.contains(*instance.section)) {
        result.train.push_back(std::move(instance));
      } else if (split.dev_sections.contains(*instance.section)) {
        result.dev.push_back(std::move(instance));
      } else {
        ++result.outside_split;
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kUnknownLabel) throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
      if (e.code() == ErrorCode::kFormat || e.code() == ErrorCode::kInvalidArgument) fail_at(line_no, e.what());
      throw;
    }
  }
  return result;
}

SourceIngestResult ingest_source_corpus(const std::filesystem::path& path, const SplitSpec& split) {
  return ingest_source_records(read_file(path), split);
}

CrowdAnnotatedInstance crowd_from_record(const json& record, int annotators) {
  CrowdAnnotatedInstance instance;
  instance.pair = pair_from_record(record);
  instance.domain = DomainTag::parse(require_string(record, "domain"));
  const json& votes = require(record, "votes");
  if (!votes.is_object()) fail(ErrorCode::kFormat, "field 'votes' must map labels to counts");
  for (const auto& [key, value] : votes.items()) {
    if (!value.is_number_integer() || value.get<int>() < 0) {
      fail(ErrorCode::kFormat, "vote count for '" + key + "' must be a non-negative integer");
    }
    instance.votes[parse_label(key)] += value.get<int>();
  }
  if (instance.total_votes() != annotators) {
    fail(ErrorCode::kFormat, "votes sum to " + std::to_string(instance.total_votes()) + ", expected " +
                                 std::to_string(annotators));
  }
  return instance;
}

TargetIngestResult ingest_target_records(std::string_view content, int annotators) {
  TargetIngestResult result;
  for (const auto& [line_no, record] : parse_jsonl(content)) {
    try {
      CrowdAnnotatedInstance instance = crowd_from_record(record, annotators);
      if (instance.majority_label() == RelationLabel::kNoRelation) {
        ++result.excluded_no_relation;
        continue;
      }
      ++result.per_domain[instance.domain];
      result.instances.push_back(std::move(instance));
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kUnknownLabel) throw Error(e.code(), "line " + std::to_string(line_no) + ": " + e.what());
      if (e.code() == ErrorCode::kFormat || e.code() == ErrorCode::kInvalidArgument) fail_at(line_no, e.what());
      throw;
    }
  }
  return result;
}

TargetIngestResult ingest_target_corpus(const std::filesystem::path& path, int annotators) {
  return ingest_target_records(read_file(path), annotators);
}

std::vector<RawDocument> ingest_raw_records(std::string_view content) {
  std::vector<RawDocument> docs;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  for (const auto& [line_no, record] : parse_jsonl(content)) {
    try {
      const DomainTag domain = DomainTag::parse(require_string(record, "domain"));
      const std::string doc_id = require_string(record, "doc_id");
      const std::string sentence = collapse_whitespace(require_string(record, "sentence"));
      if (sentence.empty()) fail(ErrorCode::kFormat, "empty sentence");
      const auto key = std::make_pair(domain.code(), doc_id);
      auto it = index.find(key);
      if (it == index.end()) {
        it = index.emplace(key, docs.size()).first;
        docs.push_back(RawDocument{doc_id, domain, {}});
      }
      docs[it->second].sentences.push_back(sentence);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::kFormat || e.code() == ErrorCode::kInvalidArgument) fail_at(line_no, e.what());
      throw;
    }
  }
  return docs;
}

std::vector<RawDocument> ingest_raw_corpus(const std::filesystem::path& path) {
  return ingest_raw_records(read_file(path));
}

PairsResult make_adjacent_pairs(const RawDocument& doc) {
  PairsResult result;
  if (doc.sentences.size() < 2) {
    result.warnings.push_back("document " + doc.doc_id + " has fewer than 2 sentences");
    return result;
  }
  result.pairs.reserve(doc.sentences.size() - 1);
  for (std::size_t i = 0; i + 1 < doc.sentences.size(); ++i) {
    result.pairs.push_back(
        make_pair(doc.sentences[i], doc.sentences[i + 1], doc.doc_id, Adjacency::kInterSentential));
  }
  return result;
}

FrequencyTable frequency_table(const std::vector<LabeledInstance>& instances, FrequencyScope scope) {
  std::map<RelationLabel, std::int64_t> counts;
  for (const auto& instance : instances) {
    if (scope == FrequencyScope::kInterSentential &&
        instance.pair.adjacency != Adjacency::kInterSentential) {
      continue;
    }
    ++counts[instance.label];
  }
  return FrequencyTable::from_counts(counts, scope);
}

ordered_json to_record(const LabeledInstance& instance) {
  ordered_json record;
  record["doc_id"] = instance.pair.doc_id;
  record["domain"] = instance.domain.code();
  if (instance.section) record["section"] = *instance.section;
  record["arg1"] = instance.pair.arg1;
  record["arg2"] = instance.pair.arg2;
  record["label"] = label_name(instance.label);
  record["adjacency"] = adjacency_name(instance.pair.adjacency);
  record["provenance"] = provenance_name(instance.provenance);
  return record;
}

ordered_json to_record(const CrowdAnnotatedInstance& instance) {
  ordered_json record;
  record["doc_id"] = instance.pair.doc_id;
  record["domain"] = instance.domain.code();
  record["arg1"] = instance.pair.arg1;
  record["arg2"] = instance.pair.arg2;
  ordered_json votes = ordered_json::object();
  for (const auto& [label, count] : instance.votes) votes[std::string(label_name(label))] = count;
  record["votes"] = votes;
  record["adjacency"] = adjacency_name(instance.pair.adjacency);
  return record;
}

LabeledInstance labeled_from_record(const json& record) {
  LabeledInstance instance;
  instance.pair = pair_from_record(record);
  instance.label = parse_label(label_string(record));
  instance.domain = DomainTag::parse(require_string(record, "domain"));
  instance.provenance = record.contains("provenance") ? parse_provenance(require_string(record, "provenance"))
                                                      : Provenance::kSourceAnnotated;
  if (record.contains("section")) instance.section = record.at("section").get<int>();
  return instance;
}

std::string write_records(const std::vector<LabeledInstance>& instances) {
  std::string out;
  for (const auto& instance : instances) append_line(out, to_record(instance));
  return out;
}

std::string write_records(const std::vector<CrowdAnnotatedInstance>& instances) {
  std::string out;
  for (const auto& instance : instances) append_line(out, to_record(instance));
  return out;
}

std::string write_raw_records(const std::vector<RawDocument>& docs) {
  std::string out;
  for (const auto& doc : docs) {
    for (const auto& sentence : doc.sentences) {
      ordered_json record;
      record["doc_id"] = doc.doc_id;
      record["domain"] = doc.domain.code();
      record["sentence"] = sentence;
      append_line(out, record);
    }
  }
  return out;
}

std::vector<LabeledInstance> read_labeled_records(std::string_view content) {
  std::vector<LabeledInstance> out;
  for (const auto& [line_no, record] : parse_jsonl(content)) {
    try {
      out.push_back(labeled_from_record(record));
    } catch (const Error& e) {
      fail_at(line_no, e.what());
    }
  }
  return out;
}

}  // namespace discosyn

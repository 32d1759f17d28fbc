#include "prompts.hpp"

#include "error.hpp"
#include "resources.hpp"
#include "util.hpp"

namespace discosyn {

std::string_view template_kind_name(TemplateKind kind) { return kind == TemplateKind::kDC ? "DC" : "DR"; }

TemplateKind parse_template_kind(std::string_view text) {
  const std::string key = to_lower_ascii(trim(text));
  if (key == "dc") return TemplateKind::kDC;
  if (key == "dr") return TemplateKind::kDR;
  fail(ErrorCode::kConfig, "unknown template kind '" + std::string(text) + "'");
}

std::vector<InContextExample> read_example_pool(std::string_view jsonl) {
  std::vector<InContextExample> pool;
  for (const auto& [line_no, record] : parse_jsonl(jsonl)) {
    try {
      InContextExample example;
      example.id = record.value("id", "example-" + std::to_string(line_no));
      example.arg1 = collapse_whitespace(record.at("arg1").get<std::string>());
      example.arg2 = collapse_whitespace(record.at("arg2").get<std::string>());
      example.label = parse_label(record.at("label").get<std::string>());
      example.domain = DomainTag::parse(record.at("domain").get<std::string>());
      example.connective = record.value("connective", "");
      pool.push_back(std::move(example));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kFormat, "example pool line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pool;
}

namespace {

std::string bundled_template(std::string_view name) {
  const auto text = resources::find(name);
  if (!text) fail(ErrorCode::kState, "missing bundled template " + std::string(name));
  std::string out(*text);
  if (!out.empty() && out.back() == '\n') out.pop_back();
  return out;
}

void require_text(std::string_view text, const char* what) {
  if (trim(text).empty()) fail(ErrorCode::kInvalidArgument, std::string(what) + " must be non-empty");
}

}  // namespace

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
  std::size_t pos = 0;
  while ((pos = text_.find('{', pos)) != std::string::npos) {
    const auto close = text_.find('}', pos);
    if (close == std::string::npos) fail(ErrorCode::kFormat, "unterminated template slot");
    const std::string name = text_.substr(pos + 1, close - pos - 1);
    if (name.empty() || name.find_first_of("{ \n") != std::string::npos) {
      fail(ErrorCode::kFormat, "malformed template slot '{" + name + "}'");
    }
    if (std::find(slots_.begin(), slots_.end(), name) == slots_.end()) slots_.push_back(name);
    pos = close + 1;
  }
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  for (const auto& slot : slots_) {
    if (!values.contains(slot)) fail(ErrorCode::kInvalidArgument, "no value for template slot {" + slot + "}");
  }
  std::string out;
  out.reserve(text_.size() * 2);
  std::size_t pos = 0;
  while (true) {
    const auto open = text_.find('{', pos);
    if (open == std::string::npos) {
      out.append(text_, pos);
      break;
    }
    out.append(text_, pos, open - pos);
    const auto close = text_.find('}', open);
    out += values.at(text_.substr(open + 1, close - open - 1));
    pos = close + 1;
  }
  return out;
}

LabelDefinitions LabelDefinitions::bundled() {
  const auto text = resources::find("definitions");
  if (!text) fail(ErrorCode::kState, "missing bundled definitions");
  return from_text(*text);
}

LabelDefinitions LabelDefinitions::from_text(std::string_view text) {
  LabelDefinitions defs;
  int line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      fail(ErrorCode::kFormat, "definitions line " + std::to_string(line_no) + ": expected 'label: text'");
    }
    std::string definition = trim(line.substr(colon + 1));
    if (definition.empty()) {
      fail(ErrorCode::kFormat, "definitions line " + std::to_string(line_no) + ": empty definition");
    }
    defs.entries_[parse_label(line.substr(0, colon))] = std::move(definition);
  }
  return defs;
}

const std::string& LabelDefinitions::definition(RelationLabel label) const {
  const auto it = entries_.find(label);
  if (it == entries_.end()) {
    fail(ErrorCode::kInvalidArgument, "no definition for label " + std::string(label_name(label)));
  }
  return it->second;
}

PromptEngine::PromptEngine(bool extended_connectives)
    : PromptEngine(PromptTemplate(bundled_template("dc_prompt")), PromptTemplate(bundled_template("dr_prompt")),
                   extended_connectives ? ConnectiveMap::bundled_extended() : ConnectiveMap::bundled(),
                   LabelDefinitions::bundled()) {}

PromptEngine::PromptEngine(PromptTemplate dc, PromptTemplate dr, ConnectiveMap connectives,
                           LabelDefinitions definitions)
    : dc_(std::move(dc)), dr_(std::move(dr)), connectives_(std::move(connectives)),
      definitions_(std::move(definitions)) {}

RenderedPrompt PromptEngine::render_dc(std::string_view arg1, RelationLabel label, int connective_option,
                                       const InContextExample& example) const {
  require_text(arg1, "arg1");
  const std::string& connective = connectives_.connective(label, connective_option);
  const std::string example_connective =
      example.connective.empty() ? connectives_.connective(example.label, 1) : example.connective;
  RenderedPrompt prompt;
  prompt.text = dc_.render({
      {"instructions", std::string(kDcInstructions)},
      {"example_arg1", example.arg1},
      {"example_connective", example_connective},
      {"example_arg2", example.arg2},
      {"task_arg1", collapse_whitespace(arg1)},
      {"connective", connective},
  });
  prompt.metadata = {label, TemplateKind::kDC, connective, example.id};
  return prompt;
}

RenderedPrompt PromptEngine::render_dr(std::string_view arg1, RelationLabel label,
                                       const InContextExample& example) const {
  return render_dr(arg1, label, definitions_.definition(label), example);
}

RenderedPrompt PromptEngine::render_dr(std::string_view arg1, RelationLabel label, std::string_view definition,
                                       const InContextExample& example) const {
  require_text(arg1, "arg1");
  require_text(definition, "definition");
  RenderedPrompt prompt;
  prompt.text = dr_.render({
      {"label_title", label_title(label)},
      {"label_upper", label_upper(label)},
      {"definition", std::string(definition)},
      {"example_arg1", example.arg1},
      {"example_arg2", example.arg2},
      {"task_arg1", collapse_whitespace(arg1)},
  });
  prompt.metadata = {label, TemplateKind::kDR, std::nullopt, example.id};
  return prompt;
}

int choose_connective_option(std::uint64_t seed) {
  Rng rng(mix_seed(seed, "connective"));
  return static_cast<int>(rng.uniform_index(2)) + 1;
}

const InContextExample& select_example(const std::vector<InContextExample>& pool, const DomainTag& domain,
                                       RelationLabel label, std::uint64_t seed) {
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    if (pool[i].label == label && pool[i].domain == domain) candidates.push_back(i);
  }
  if (candidates.empty()) {
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (pool[i].label == label) candidates.push_back(i);
    }
  }
  if (candidates.empty()) {
    fail(ErrorCode::kInvalidArgument,
         "no in-context example for label " + std::string(label_name(label)));
  }
  Rng rng(mix_seed(seed, "example"));
  return pool[candidates[rng.uniform_index(candidates.size())]];
}

}  // namespace discosyn

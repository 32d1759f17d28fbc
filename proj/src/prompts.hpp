#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "corpus.hpp"
#include "labels.hpp"

namespace discosyn {

enum class TemplateKind { kDC, kDR };

std::string_view template_kind_name(TemplateKind kind);
TemplateKind parse_template_kind(std::string_view text);

struct InContextExample {
  std::string id;
  std::string arg1;
  std::string arg2;
  RelationLabel label = RelationLabel::kConjunction;
  DomainTag domain;
  // Connective that links the example arguments in DC prompts. Defaults to the
  // label's first connective when empty.
  std::string connective;
};

std::vector<InContextExample> read_example_pool(std::string_view jsonl);

struct PromptMetadata {
  RelationLabel label = RelationLabel::kConjunction;
  TemplateKind kind = TemplateKind::kDC;
  std::optional<std::string> connective;  // DC only
  std::string example_id;
};

struct RenderedPrompt {
  std::string text;
  PromptMetadata metadata;
};

// Text with {slot} placeholders; '{' never appears unescaped outside a slot.
class PromptTemplate {
 public:
  explicit PromptTemplate(std::string text);

  // Every slot in the template must be supplied; values are inserted verbatim
  // and never rescanned.
  std::string render(const std::map<std::string, std::string>& values) const;
  const std::vector<std::string>& slots() const { return slots_; }
  const std::string& text() const { return text_; }

 private:
  std::string text_;
  std::vector<std::string> slots_;
};

class LabelDefinitions {
 public:
  static LabelDefinitions bundled();
  // Lines "label: definition".
  static LabelDefinitions from_text(std::string_view text);

  // Throws when the label has no definition.
  const std::string& definition(RelationLabel label) const;
  bool contains(RelationLabel label) const { return entries_.contains(label); }

 private:
  std::map<RelationLabel, std::string> entries_;
};

inline constexpr std::string_view kDcInstructions =
    "Complete the sentence, and don't generate more than one sentence.";

class PromptEngine {
 public:
  // Bundled templates, connectives and definitions; extended_connectives adds
  // the rows for generation-only labels.
  explicit PromptEngine(bool extended_connectives = false);
  PromptEngine(PromptTemplate dc, PromptTemplate dr, ConnectiveMap connectives,
               LabelDefinitions definitions);

  // connective_option is 1 or 2.
  RenderedPrompt render_dc(std::string_view arg1, RelationLabel label, int connective_option,
                           const InContextExample& example) const;
  RenderedPrompt render_dr(std::string_view arg1, RelationLabel label,
                           const InContextExample& example) const;
  // Explicit definition text instead of the bundled one.
  RenderedPrompt render_dr(std::string_view arg1, RelationLabel label, std::string_view definition,
                           const InContextExample& example) const;

  const ConnectiveMap& connectives() const { return connectives_; }
  const LabelDefinitions& definitions() const { return definitions_; }

 private:
  PromptTemplate dc_;
  PromptTemplate dr_;
  ConnectiveMap connectives_;
  LabelDefinitions definitions_;
};

// Seeded uniform choice between the two connective options.
int choose_connective_option(std::uint64_t seed);

// Picks uniformly (under seed) among pool entries with the requested domain
// and label, falling back to the same label in any domain. Throws when no
// entry carries the label.
const InContextExample& select_example(const std::vector<InContextExample>& pool, const DomainTag& domain,
                                       RelationLabel label, std::uint64_t seed);

}  // namespace discosyn

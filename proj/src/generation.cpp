#include "generation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "error.hpp"
#include "resources.hpp"
#include "util.hpp"

namespace discosyn {

using nlohmann::json;

std::map<RelationLabel, std::vector<std::string>> bundled_cue_lexicon() {
  const auto text = resources::find("mock_cues");
  if (!text) fail(ErrorCode::kState, "missing bundled cue lexicon");
  std::map<RelationLabel, std::vector<std::string>> cues;
  for (const auto& raw : split(*text, '\n')) {
    const std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto colon = line.find(':');
    auto& words = cues[parse_label(line.substr(0, colon))];
    for (const auto& word : split(trim(line.substr(colon + 1)), ' ')) {
      if (!word.empty()) words.push_back(word);
    }
  }
  return cues;
}

// MockBackend

namespace {

constexpr std::string_view kFiller[] = {
    "the",   "council", "its",    "new",     "plan",    "was",     "discussed", "by",
    "many",  "members", "of",     "a",       "small",   "group",   "in",        "town",
    "their", "report",  "showed", "results", "for",     "several", "people",    "who",
    "work",  "there",   "and",    "at",      "home",    "with",    "some",      "care",
};

std::string capitalize(std::string text) {
  if (!text.empty()) text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
  return text;
}

}  // namespace

MockBackend::MockBackend(double fidelity)
    : fidelity_(fidelity), connectives_(ConnectiveMap::bundled_extended()), cues_(bundled_cue_lexicon()) {}

std::optional<RelationLabel> MockBackend::intended_label(const std::string& prompt) const {
  static constexpr std::string_view kDrMarker = "have the relation ";
  if (const auto pos = prompt.rfind(kDrMarker); pos != std::string::npos) {
    const auto start = pos + kDrMarker.size();
    const auto end = prompt.find(" to the first argument", start);
    if (end != std::string::npos) return try_parse_label(prompt.substr(start, end - start));
  }
  const auto task = prompt.rfind("Q: ");
  if (task == std::string::npos) return std::nullopt;
  auto line_end = prompt.find('\n', task);
  std::string line = prompt.substr(task, line_end == std::string::npos ? std::string::npos : line_end - task);
  if (line.size() < 4 || line.substr(line.size() - 4) != " ...") return std::nullopt;
  line.resize(line.size() - 4);
  std::optional<RelationLabel> best;
  std::size_t best_len = 0;
  for (const auto& [label, options] : connectives_.entries()) {
    for (const auto* option : {&options.first, &options.second}) {
      const std::string suffix = " " + *option;
      if (line.size() >= suffix.size() && line.compare(line.size() - suffix.size(), suffix.size(), suffix) == 0 &&
          suffix.size() > best_len) {
        best = label;
        best_len = suffix.size();
      }
    }
  }
  return best;
}

std::string MockBackend::complete(const std::string& prompt, const DecodingParams& decoding) {
  Rng rng(mix_seed(decoding.seed, prompt));
  const auto intended = intended_label(prompt);
  RelationLabel cue_label = intended.value_or(RelationLabel::kConjunction);
  if (!intended || rng.uniform01() >= fidelity_) {
    const auto labels = training_label_set();
    cue_label = labels[rng.uniform_index(labels.size())];
  }
  const auto& cue_words = cues_.at(cue_label);
  auto sentence = [&] {
    std::vector<std::string> words;
    const std::size_t length = 5 + rng.uniform_index(4);
    for (std::size_t i = 0; i < length; ++i) {
      words.emplace_back(kFiller[rng.uniform_index(std::size(kFiller))]);
    }
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.uniform_index(words.size())),
                 cue_words[rng.uniform_index(cue_words.size())]);
    words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.uniform_index(words.size())),
                 cue_words[rng.uniform_index(cue_words.size())]);
    std::string out;
    for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
    return out + ".";
  };

  const bool is_dr = prompt.find("Here list several second arguments:") != std::string::npos;
  if (is_dr) {
    return "1. " + capitalize(sentence()) + "\n2. " + capitalize(sentence()) + "\n";
  }
  std::string out;
  if (rng.uniform_index(4) == 0) out += "A: ";
  if (intended && rng.uniform_index(2) == 0) {
    out += connectives_.connective(*intended, 2 - static_cast<int>(rng.uniform_index(2)));
    out += " ";
  }
  out += sentence();
  if (rng.uniform_index(3) == 0) out += " " + capitalize(sentence());
  return out;
}

// GenerationCache

GenerationCache::GenerationCache(std::filesystem::path file) : file_(std::move(file)) {
  std::error_code ec;
  if (!std::filesystem::exists(*file_, ec)) return;
  for (const auto& line : read_lines(*file_)) {
    if (trim(line).empty()) continue;
    try {
      const json record = json::parse(line);
      entries_.emplace(record.at("key").get<std::string>(), record.at("text").get<std::string>());
    } catch (const json::exception&) {
      // torn trailing write from an interrupted run; the entry is regenerated
    }
  }
}

std::optional<std::string> GenerationCache::get(const std::string& key) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void GenerationCache::put(const std::string& key, const std::string& text) {
  std::unique_lock lock(mutex_);
  if (!entries_.emplace(key, text).second) return;
  if (!file_) return;
  if (file_->has_parent_path()) std::filesystem::create_directories(file_->parent_path());
  std::ofstream out(*file_, std::ios::app | std::ios::binary);
  if (!out) fail(ErrorCode::kIo, "cannot append to cache " + file_->string());
  out << json{{"key", key}, {"text", text}}.dump() << '\n';
}

std::size_t GenerationCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

// Post-processing

namespace {

// "It is/was because" -> {"It is because", "It was because"}; trailing comma dropped.
std::vector<std::string> connective_variants(std::string_view connective) {
  std::string base = trim(connective);
  while (!base.empty() && base.back() == ',') base.pop_back();
  std::vector<std::string> variants{""};
  for (const auto& token : split(base, ' ')) {
    if (token.empty()) continue;
    const auto alternatives = split(token, '/');
    std::vector<std::string> next;
    for (const auto& prefix : variants) {
      for (const auto& alt : alternatives) next.push_back(prefix.empty() ? alt : prefix + " " + alt);
    }
    variants = std::move(next);
  }
  // Longest first so "if it is" wins over "if".
  std::sort(variants.begin(), variants.end(),
            [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
  return variants;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '\''; }

// Length of the connective prefix of text, 0 if absent.
std::size_t connective_prefix(std::string_view text, std::string_view connective) {
  for (const auto& variant : connective_variants(connective)) {
    if (variant.empty() || !starts_with_icase(text, variant)) continue;
    if (text.size() > variant.size() && is_word_char(text[variant.size()])) continue;
    return variant.size();
  }
  return 0;
}

bool has_list_marker(std::string_view line, std::size_t* content_start) {
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
    *content_start = i + 1;
    return true;
  }
  if (!line.empty() && (line[0] == '-' || line[0] == '*')) {
    *content_start = 1;
    return true;
  }
  if (line.starts_with("\xE2\x80\xA2")) {  // bullet
    *content_start = 3;
    return true;
  }
  return false;
}

std::string first_list_item(std::string_view text) {
  std::optional<std::string> first_line;
  for (const auto& raw : split(text, '\n')) {
    const std::string line = trim(raw);
    if (line.empty()) continue;
    std::size_t start = 0;
    if (has_list_marker(line, &start)) return trim(line.substr(start));
    if (!first_line) first_line = line;
  }
  return first_line.value_or("");
}

std::string strip_leading(std::string text, std::optional<std::string_view> connective) {
  bool changed = true;
  while (changed && !text.empty()) {
    changed = false;
    if (starts_with_icase(text, "A:")) {
      text = trim(text.substr(2));
      changed = true;
    }
    for (std::string_view ellipsis : {"...", "\xE2\x80\xA6"}) {
      if (text.starts_with(ellipsis)) {
        text = trim(text.substr(ellipsis.size()));
        changed = true;
      }
    }
    if (!text.empty() && (text.front() == '"')) {
      text = trim(text.substr(1));
      changed = true;
    }
    if (connective) {
      if (const std::size_t n = connective_prefix(text, *connective); n > 0) {
        std::size_t cut = n;
        while (cut < text.size() && text[cut] == ',') ++cut;
        text = trim(text.substr(cut));
        changed = true;
      }
    }
  }
  return text;
}

std::string first_sentence(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    std::size_t end = i + 1;
    while (end < text.size() && (text[end] == '"' || text[end] == ')')) ++end;
    if (end == text.size() || std::isspace(static_cast<unsigned char>(text[end]))) {
      return std::string(text.substr(0, end));
    }
  }
  return std::string(text);
}

}  // namespace

bool begins_with_connective(std::string_view text, std::string_view connective) {
  return connective_prefix(text, connective) > 0;
}

std::string postprocess(std::string_view raw, TemplateKind kind, std::optional<std::string_view> connective) {
  std::string text = trim(raw);
  if (text.empty()) fail(ErrorCode::kGenerationRejected, "empty generation");
  text = strip_leading(std::move(text), std::nullopt);
  if (kind == TemplateKind::kDR) text = first_list_item(text);
  text = strip_leading(std::move(text), connective);
  text = collapse_whitespace(first_sentence(text));
  const bool has_content =
      std::any_of(text.begin(), text.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)); });
  if (!has_content) fail(ErrorCode::kGenerationRejected, "nothing left after post-processing");
  return text;
}

// Generator

std::string cache_key(const GenerationRequest& request, const BackendDescriptor& backend) {
  json canonical = {
      {"backend", backend.name},
      {"max_new_tokens", backend.decoding.max_new_tokens},
      {"temperature", backend.decoding.temperature},
      {"seed", backend.decoding.seed},
      {"template", template_kind_name(request.prompt.metadata.kind)},
      {"arg1", request.arg1},
      {"label", label_name(request.intended)},
      {"connective", request.prompt.metadata.connective.value_or("")},
      {"example_id", request.prompt.metadata.example_id},
      {"prompt_sha256", sha256_hex(request.prompt.text)},
  };
  return sha256_hex(canonical.dump());
}

Generator::Generator(std::shared_ptr<GenerationCache> cache, RetryPolicy retry)
    : cache_(cache ? std::move(cache) : std::make_shared<GenerationCache>()), retry_(retry) {}

GenerationResult Generator::generate_arg2(const GenerationRequest& request, const BackendDescriptor& descriptor,
                                          TextBackend& backend) const {
  if (request.prompt.metadata.label != request.intended) {
    fail(ErrorCode::kInvalidArgument, "prompt label differs from the intended label");
  }
  GenerationResult result;
  result.request = request;
  result.backend = descriptor;
  const std::string key = cache_key(request, descriptor);
  if (auto cached = cache_->get(key)) {
    result.raw_text = std::move(*cached);
    result.cache_hit = true;
  } else {
    const int attempts = std::max(1, retry_.max_attempts);
    int delay = retry_.backoff_ms;
    for (int attempt = 1;; ++attempt) {
      try {
        result.raw_text = backend.complete(request.prompt.text, descriptor.decoding);
        break;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kTransport) throw;
        if (attempt >= attempts) {
          fail(ErrorCode::kTransport, "backend " + descriptor.name + " failed after " +
                                          std::to_string(attempts) + " attempts: " + e.what());
        }
      }
      if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      delay *= 2;
    }
  }
  const auto& connective = request.prompt.metadata.connective;
  result.arg2 = postprocess(result.raw_text, request.prompt.metadata.kind,
                            connective ? std::optional<std::string_view>(*connective) : std::nullopt);
  // Only well-formed generations are cached, so a rejected one is retried next run.
  if (!result.cache_hit) cache_->put(key, result.raw_text);
  return result;
}

// Batches

std::vector<std::string> sample_sentences(const std::vector<RawDocument>& docs, const DomainTag& domain,
                                          std::size_t n, std::uint64_t seed) {
  std::vector<std::string> all;
  for (const auto& doc : docs) {
    if (doc.domain != domain) continue;
    all.insert(all.end(), doc.sentences.begin(), doc.sentences.end());
  }
  Rng rng(mix_seed(seed, "sentences:" + domain.code()));
  std::vector<std::string> out;
  for (std::size_t index : rng.sample_indices(all.size(), std::min(n, all.size()))) out.push_back(all[index]);
  return out;
}

BatchResult generate_batch(const BatchSpec& spec, const PromptEngine& engine, const Generator& generator) {
  struct Item {
    DomainTag domain;
    std::size_t backend = 0;
    std::size_t sentence = 0;
    RelationLabel label{};
  };
  std::vector<Item> items;
  for (const auto& [domain, sentences] : spec.sentences) {
    for (std::size_t b = 0; b < spec.backends.size(); ++b) {
      for (std::size_t s = 0; s < sentences.size(); ++s) {
        for (RelationLabel label : spec.labels) items.push_back({domain, b, s, label});
      }
    }
  }

  std::vector<std::optional<SyntheticInstance>> slots(items.size());
  std::vector<std::string> errors(items.size());
  std::vector<char> hits(items.size(), 0);

  auto run_item = [&](std::size_t index) {
    const Item& item = items[index];
    const std::string& arg1 = spec.sentences.at(item.domain)[item.sentence];
    const BackendSlot& slot = spec.backends[item.backend];
    const std::string tuple = item.domain.code() + "|" + slot.descriptor.name + "|" +
                              std::to_string(item.sentence) + "|" + std::string(label_name(item.label));
    try {
      const std::uint64_t example_seed =
          spec.example_mode == ExampleMode::kPerRequest
              ? mix_seed(spec.seed, tuple)
              : mix_seed(spec.seed, item.domain.code() + "|" + std::string(label_name(item.label)));
      const InContextExample& example = select_example(spec.examples, item.domain, item.label, example_seed);
      RenderedPrompt prompt;
      if (spec.kind == TemplateKind::kDC) {
        const int option = spec.connective_option != 0 ? spec.connective_option
                                                       : choose_connective_option(mix_seed(spec.seed, tuple));
        prompt = engine.render_dc(arg1, item.label, option, example);
      } else {
        prompt = engine.render_dr(arg1, item.label, example);
      }
      GenerationRequest request{std::move(prompt), arg1, item.label, item.domain};
      GenerationResult result = generator.generate_arg2(request, slot.descriptor, *slot.backend);
      SyntheticInstance instance;
      instance.pair = make_pair(arg1, result.arg2,
                                "syn-" + item.domain.code() + "-" + slot.descriptor.name + "-" +
                                    std::to_string(item.sentence) + "-" + std::string(label_name(item.label)));
      instance.intended = item.label;
      instance.backend = slot.descriptor.name;
      instance.kind = spec.kind;
      instance.domain = item.domain;
      instance.connective = request.prompt.metadata.connective;
      instance.example_id = request.prompt.metadata.example_id;
      instance.decoding = slot.descriptor.decoding;
      instance.sentence_index = item.sentence;
      slots[index] = std::move(instance);
      hits[index] = result.cache_hit ? 1 : 0;
    } catch (const std::exception& e) {
      errors[index] = e.what();
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(spec.parallelism, items.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < items.size(); ++i) run_item(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < items.size(); i = next++) run_item(i);
      });
    }
  }

  BatchResult result;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (slots[i]) {
      result.instances.push_back(std::move(*slots[i]));
      result.cache_hits += static_cast<std::size_t>(hits[i]);
    } else {
      const Item& item = items[i];
      result.failures.push_back(
          {item.domain, spec.backends[item.backend].descriptor.name, item.sentence, item.label, errors[i]});
    }
  }
  return result;
}

}  // namespace discosyn

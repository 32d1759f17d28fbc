#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "adaptation.hpp"
#include "classifier.hpp"
#include "corpus.hpp"
#include "generation.hpp"
#include "labels.hpp"
#include "util.hpp"

namespace discosyn::testing {

inline std::filesystem::path fixture_dir() { return DISCOSYN_FIXTURE_DIR; }
inline std::filesystem::path golden_dir() { return DISCOSYN_GOLDEN_DIR; }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("discosyn-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Arguments whose Arg2 carries two cue words of the label, the same recipe as
// the bundled fixtures.
inline std::vector<LabeledInstance> cue_corpus(std::size_t per_label, std::uint64_t seed,
                                               const std::string& domain = "PDTB") {
  static const std::vector<std::string> filler = {"shares", "market", "company", "quarter", "trading",
                                                  "investors", "price", "bank", "profit", "board"};
  const auto cues = bundled_cue_lexicon();
  Rng rng(seed);
  auto sentence = [&](const std::vector<std::string>& extra) {
    std::vector<std::string> words;
    for (std::size_t i = 0; i < 5 + rng.uniform_index(4); ++i) words.push_back(filler[rng.uniform_index(filler.size())]);
    for (const auto& w : extra) words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.uniform_index(words.size() + 1)), w);
    std::string out;
    for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
    return out + ".";
  };
  std::vector<LabeledInstance> out;
  for (std::size_t i = 0; i < per_label; ++i) {
    for (RelationLabel label : training_label_set()) {
      const auto& words = cues.at(label);
      LabeledInstance inst;
      inst.pair = make_pair(sentence({}), sentence({words[rng.uniform_index(words.size())],
                                                    words[rng.uniform_index(words.size())]}),
                            "doc" + std::to_string(out.size()));
      inst.label = label;
      inst.domain = DomainTag::parse(domain);
      inst.section = 5;
      out.push_back(std::move(inst));
    }
  }
  return out;
}

inline ReferenceShape small_shape() {
  ReferenceShape shape;
  shape.feature_dim = 512;
  shape.hidden_dim = 12;
  shape.prefix_length = 2;
  return shape;
}

inline TrainingConfig fast_training(std::uint64_t seed = 1) {
  TrainingConfig config;
  config.epochs = 3;
  config.learning_rate = 2.0;
  config.steps_per_epoch = 40;
  config.seed = seed;
  return config;
}

inline Model trained_base(std::uint64_t seed = 1) {
  const auto train = cue_corpus(12, 100 + seed);
  const auto dev = cue_corpus(3, 200 + seed);
  return train_base(train, dev, fast_training(seed), ReferenceClassifier(small_shape())).model;
}

}  // namespace discosyn::testing

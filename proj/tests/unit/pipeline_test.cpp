#include <doctest.h>

#include "check_error.hpp"
#include "pipeline.hpp"
#include "support.hpp"

using namespace discosyn;

namespace {

// Manifest stage entries keyed by stage id.
std::map<std::string, nlohmann::json> stages_by_id(const std::filesystem::path& file) {
  std::map<std::string, nlohmann::json> out;
  const auto manifest = nlohmann::json::parse(read_file(file));
  for (const auto& stage : manifest.at("stages")) out[stage.at("id").get<std::string>()] = stage;
  return out;
}

Config small_config() {
  auto c = Config::load(testing::fixture_dir() / "pipeline.cfg");
  c.set("seeds", "1");
  c.set("domains", "EP, WK");
  c.set("generation.templates", "DC");
  c.set("screening.kinds", "strict, combi");
  c.set("adaptation.methods", "concat, prefix");
  c.set("adaptation.data", "synthetic");
  c.set("adaptation.modes", "specific");
  return c;
}

std::set<std::string> with_status(const RunOutcome& outcome, StageStatus status) {
  std::set<std::string> ids;
  for (const auto& s : outcome.stages) {
    if (s.status == status) ids.insert(s.id);
  }
  return ids;
}

}  // namespace

TEST_CASE("resume re-runs only what changed") {
  const auto out = testing::scratch_dir("pipeline-resume");
  const std::string adapt_id = "adapt/prefix.synthetic.mock.DC.strict.specific/1/EP";
  {
    Pipeline pipeline(PipelineConfig::from_config(small_config()), out);
    const auto first = pipeline.run();
    CHECK(first.exit_code == 0);
    CHECK(with_status(first, StageStatus::kRan).size() == pipeline.stage_ids().size());
    REQUIRE(first.report);
  }
  // a completed run is a no-op
  {
    Pipeline pipeline = Pipeline::resume(out);
    const auto again = pipeline.run();
    CHECK(again.exit_code == 0);
    CHECK(with_status(again, StageStatus::kRan).empty());
  }
  const auto report_before = read_file(out / "report" / "results.md");

  // a missing adapted model: that adaptation, its evaluation and the report
  std::filesystem::remove_all(out / adapt_id);
  {
    Pipeline pipeline = Pipeline::resume(out);
    const auto outcome = pipeline.run();
    CHECK(with_status(outcome, StageStatus::kRan) ==
          std::set<std::string>{adapt_id, "evaluate/prefix.synthetic.mock.DC.strict.specific/1", "report"});
  }
  CHECK(read_file(out / "report" / "results.md") == report_before);

  // a corrupted artifact is re-made with a warning
  write_file_atomic(out / "evaluate" / "baseline" / "1" / "metrics.json", "{}");
  {
    Pipeline pipeline = Pipeline::resume(out);
    const auto outcome = pipeline.run();
    CHECK(with_status(outcome, StageStatus::kRan).contains("evaluate/baseline/1"));
    bool warned = false;
    for (const auto& w : outcome.warnings) warned |= w.find("evaluate/baseline/1") != std::string::npos;
    CHECK(warned);
  }

  // a changed combi setting: combi screening and everything below it, generation reused
  auto changed = small_config();
  changed.set("screening.rare_threshold", "0.2");
  {
    Pipeline pipeline(PipelineConfig::from_config(changed), out);
    const auto dry = pipeline.run({.dry_run = true});
    const auto would = with_status(dry, StageStatus::kWouldRun);
    CHECK(would.contains("screen/EP/mock/DC/combi"));
    CHECK_FALSE(would.contains("screen/EP/mock/DC/strict"));
    CHECK_FALSE(would.contains("generate/EP/mock/DC"));

    const auto outcome = pipeline.run();
    const auto ran = with_status(outcome, StageStatus::kRan);
    CHECK(ran == would);
    CHECK(ran.contains("adapt/concat.synthetic.mock.DC.combi.specific/1/WK"));
    CHECK(ran.contains("evaluate/prefix.synthetic.mock.DC.combi.specific/1"));
    CHECK(ran.contains("report"));
    CHECK_FALSE(ran.contains("label-synthetic/EP/mock/DC"));
    CHECK_FALSE(ran.contains("adapt/concat.synthetic.mock.DC.strict.specific/1/WK"));
  }
}

TEST_CASE("stage failure blocks only that variant's descendants") {
  const auto out = testing::scratch_dir("pipeline-failure");
  auto c = small_config();
  // the fixture base model is perfect on dev, so the derived map is empty and combi fails
  c.set("screening.confusion", "derived");
  Pipeline pipeline(PipelineConfig::from_config(c), out);
  const auto outcome = pipeline.run();
  CHECK(outcome.exit_code == 1);
  CHECK(with_status(outcome, StageStatus::kFailed).contains("screen/EP/mock/DC/combi"));
  CHECK(with_status(outcome, StageStatus::kBlocked).contains("adapt/prefix.synthetic.mock.DC.combi.specific/1/EP"));
  CHECK(with_status(outcome, StageStatus::kRan).contains("evaluate/prefix.synthetic.mock.DC.strict.specific/1"));
  CHECK(with_status(outcome, StageStatus::kRan).contains("report"));
  REQUIRE(outcome.report);
  CHECK(outcome.report->find("combi") == std::string::npos);

  const auto manifest = stages_by_id(out / "manifests" / "run.json");
  CHECK(manifest.at("screen/EP/mock/DC/combi").at("status") == "failed");
  CHECK(manifest.at("adapt/prefix.synthetic.mock.DC.combi.specific/1/EP").at("status") == "blocked");
}

TEST_CASE("graph structure") {
  const auto out = testing::scratch_dir("pipeline-graph");
  Pipeline pipeline(PipelineConfig::from_config(small_config()), out);
  const auto ids = pipeline.stage_ids();
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < ids.size(); ++i) position[ids[i]] = i;
  // listed in a topological order, so the graph is acyclic
  for (const auto& id : ids) {
    for (const auto& dep : pipeline.dependencies(id)) CHECK(position.at(dep) < position.at(id));
  }
  CHECK(pipeline.dependencies("screen/EP/mock/DC/strict") ==
        std::vector<std::string>{"label-synthetic/EP/mock/DC", "screen-context", "ingest"});
  CHECK_ERROR_CODE(pipeline.run({.targets = {"nonsense"}}), ErrorCode::kConfig);
}

TEST_CASE("every artifact is reachable from the manifests") {
  const auto out = testing::scratch_dir("pipeline-reach");
  auto c = small_config();
  c.set("screening.kinds", "strict");
  c.set("adaptation.methods", "invariance");
  c.set("adaptation.data", "synthetic, pseudo");
  c.set("adaptation.modes", "mixed");
  Pipeline pipeline(PipelineConfig::from_config(c), out);
  REQUIRE(pipeline.run().exit_code == 0);
  const auto manifest = stages_by_id(out / "manifests" / "run.json");
  std::set<std::string> listed;
  for (const auto& [id, stage] : manifest) {
    CHECK(stage.at("status") == "complete");
    listed.insert(stage.at("output").at("path").get<std::string>());
  }
  for (const auto& entry : std::filesystem::recursive_directory_iterator(out)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = std::filesystem::relative(entry.path(), out).generic_string();
    if (rel.starts_with("manifests/") || rel.starts_with("state/") || rel.starts_with("cache/") || rel == "timings.json") continue;
    bool covered = false;
    for (const auto& dir : listed) covered |= rel.starts_with(dir + "/");
    CHECK_MESSAGE(covered, rel);
  }
  const auto seed_manifest = out / "manifests" / "invariance.pseudo.mixed" / "seed-1.json";
  REQUIRE(std::filesystem::exists(seed_manifest));
  const auto per_seed = stages_by_id(seed_manifest);
  CHECK(per_seed.contains("pseudo-label/EP"));
  CHECK(per_seed.contains("adapt/invariance.pseudo.mixed/1/mixed"));
}

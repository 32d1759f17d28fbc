#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "check_error.hpp"
#include "generation.hpp"
#include "prompts.hpp"
#include "support.hpp"

using namespace discosyn;
using L = RelationLabel;

namespace {

std::vector<InContextExample> pool(bool with_similarity = false) {
  std::vector<InContextExample> out;
  for (L label : generation_label_set(with_similarity)) {
    InContextExample ex;
    ex.id = std::string(label_name(label));
    ex.arg1 = "An example first argument.";
    ex.arg2 = "An example second argument.";
    ex.label = label;
    ex.domain = DomainTag::parse("EP");
    out.push_back(ex);
  }
  return out;
}

GenerationRequest request(const PromptEngine& engine, L label = L::kCause) {
  GenerationRequest r;
  r.arg1 = "The brokerage firms learned a lesson the last time around.";
  r.intended = label;
  r.domain = DomainTag::parse("EP");
  r.prompt = engine.render_dc(r.arg1, label, 2, pool().front());
  return r;
}

}  // namespace

TEST_CASE("postprocessing") {
  CHECK(postprocess("Therefore, the firms now hold more capital.", TemplateKind::kDC, "Therefore,") ==
        "the firms now hold more capital.");
  CHECK(postprocess("therefore the firms now hold more capital", TemplateKind::kDC, "Therefore,") ==
        "the firms now hold more capital");
  CHECK(postprocess("1. X happened.\n2. Y happened.", TemplateKind::kDR, std::nullopt) == "X happened.");
  CHECK(postprocess("A: at night he returns to the condemned building he calls home.", TemplateKind::kDC, "Later,") ==
        "at night he returns to the condemned building he calls home.");
  CHECK(postprocess("First one. Second one.", TemplateKind::kDC, std::nullopt) == "First one.");
  CHECK(postprocess("It was because prices rose. More.", TemplateKind::kDC, "It is/was because") == "prices rose.");
  CHECK_ERROR_CODE(postprocess("", TemplateKind::kDC, "Therefore,"), ErrorCode::kGenerationRejected);
  CHECK_ERROR_CODE(postprocess("Therefore, ", TemplateKind::kDC, "Therefore,"), ErrorCode::kGenerationRejected);
}

TEST_CASE("connective detection") {
  CHECK(begins_with_connective("Therefore, x", "Therefore,"));
  CHECK(begins_with_connective("It was because x", "It is/was because"));
  CHECK_FALSE(begins_with_connective("Thereforex", "Therefore,"));
}

TEST_CASE("generation with cache and retries") {
  const PromptEngine engine;
  auto cache = std::make_shared<GenerationCache>();
  int calls = 0;
  FunctionBackend backend([&](const std::string&, const DecodingParams&) {
    if (++calls == 1) fail(ErrorCode::kTransport, "flaky");
    return std::string("at night he returns to the condemned building he calls home. Then more.");
  });
  const Generator generator(cache, RetryPolicy{3, 0});
  const BackendDescriptor descriptor{"fn", "fn", {}};
  const auto first = generator.generate_arg2(request(engine), descriptor, backend);
  CHECK(first.arg2 == "at night he returns to the condemned building he calls home.");
  CHECK_FALSE(first.cache_hit);
  CHECK(calls == 2);
  const auto second = generator.generate_arg2(request(engine), descriptor, backend);
  CHECK(second.cache_hit);
  CHECK(second.arg2 == first.arg2);
  CHECK(calls == 2);

  FunctionBackend down([](const std::string&, const DecodingParams&) -> std::string {
    fail(ErrorCode::kTransport, "down");
  });
  const Generator fresh(std::make_shared<GenerationCache>(), RetryPolicy{2, 0});
  CHECK_ERROR_CODE(fresh.generate_arg2(request(engine), descriptor, down), ErrorCode::kTransport);
}

TEST_CASE("cache keys separate distinct requests") {
  const PromptEngine engine;
  const BackendDescriptor a{"a", "mock", {}};
  BackendDescriptor hot = a;
  hot.decoding.temperature = 1.0;
  const auto r = request(engine);
  CHECK(cache_key(r, a) == cache_key(request(engine), a));
  CHECK(cache_key(r, a) != cache_key(r, hot));
  CHECK(cache_key(r, a) != cache_key(request(engine, L::kContrast), a));
}

TEST_CASE("persistent cache replays its file") {
  const auto dir = testing::scratch_dir("cache");
  {
    GenerationCache cache(dir / "c.jsonl");
    cache.put("k1", "v1");
    cache.put("k2", "v2\nwith newline");
  }
  GenerationCache again(dir / "c.jsonl");
  CHECK(again.size() == 2);
  CHECK(again.get("k2") == "v2\nwith newline");
  CHECK_FALSE(again.get("k3"));
}

TEST_CASE("mock backend recovers the intended relation") {
  const PromptEngine engine;
  MockBackend mock;
  for (L label : training_label_set()) {
    for (int option : {1, 2}) {
      const auto p = engine.render_dc("Some first argument.", label, option, pool().front());
      CHECK(mock.intended_label(p.text) == label);
    }
    CHECK(mock.intended_label(engine.render_dr("Some first argument.", label, pool().front()).text) == label);
  }
}

TEST_CASE("batches: one candidate per sentence, label and backend") {
  const PromptEngine engine;
  const Generator generator(std::make_shared<GenerationCache>());
  BatchSpec spec;
  spec.sentences[DomainTag::parse("EP")] = {"First sentence.", "Second sentence."};
  spec.labels = {L::kCause, L::kContrast, L::kManner};
  spec.backends.push_back({{"mock", "mock", {}}, std::make_shared<MockBackend>()});
  spec.examples = pool();
  const auto batch = generate_batch(spec, engine, generator);
  CHECK(batch.instances.size() == 6);
  CHECK(batch.failures.empty());
  for (const auto& inst : batch.instances) {
    if (inst.connective) CHECK_FALSE(begins_with_connective(inst.pair.arg2, *inst.connective));
  }

  // same seed, parallel, fresh cache: identical
  spec.parallelism = 4;
  const auto again = generate_batch(spec, engine, Generator(std::make_shared<GenerationCache>()));
  CHECK(write_synthetic_records(again.instances) == write_synthetic_records(batch.instances));
}

TEST_CASE("batch item failures are recorded, not fatal") {
  const PromptEngine engine;
  BatchSpec spec;
  spec.sentences[DomainTag::parse("WK")] = {"One.", "Two."};
  spec.labels = {L::kCause, L::kContrast};
  std::atomic<int> n{0};
  spec.backends.push_back({{"fn", "fn", {}}, std::make_shared<FunctionBackend>([&](const std::string&, const DecodingParams&) {
                             return ++n % 2 == 0 ? std::string("") : std::string("Fine.");
                           })});
  spec.examples = pool();
  const auto batch = generate_batch(spec, engine, Generator(std::make_shared<GenerationCache>(), RetryPolicy{1, 0}));
  CHECK(batch.instances.size() + batch.failures.size() == 4);
  CHECK(batch.failures.size() == 2);
}

TEST_CASE("sentence sampling") {
  const auto raw = ingest_raw_corpus(testing::fixture_dir() / "raw.jsonl");
  const auto a = sample_sentences(raw, DomainTag::parse("EP"), 10, 3);
  CHECK(a.size() == 10);
  CHECK(a == sample_sentences(raw, DomainTag::parse("EP"), 10, 3));
  CHECK(sample_sentences(raw, DomainTag::parse("EP"), 1000, 3).size() == 60);
}

TEST_CASE("http backend") {
  httplib::Server server;
  std::atomic<int> hits{0};
  server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    ++hits;
    const auto body = nlohmann::json::parse(req.body);
    if (body.at("prompt") == "fail") {
      res.status = 503;
      return;
    }
    res.set_content(nlohmann::json{{"text", "echo " + body.at("model").get<std::string>()}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const std::string endpoint = "http://127.0.0.1:" + std::to_string(port) + "/generate";
  HttpBackend backend("tiny-model", endpoint, std::nullopt, 5);
  CHECK(backend.complete("hello", {}) == "echo tiny-model");
  CHECK_ERROR_CODE(backend.complete("fail", {}), ErrorCode::kTransport);
  server.stop();
  thread.join();

  HttpBackend gone("m", "http://127.0.0.1:1/generate", std::nullopt, 1);
  CHECK_ERROR_CODE(gone.complete("x", {}), ErrorCode::kTransport);
  CHECK_ERROR_CODE(make_backend({"x", "mock:abc", {}}), ErrorCode::kConfig);
}

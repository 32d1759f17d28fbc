/* Exercises the shared library through its C header only. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "discosyn/discosyn.h"

static int failures = 0;

#define EXPECT(cond)                                                  \
  do {                                                                \
    if (!(cond)) {                                                    \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                     \
    }                                                                 \
  } while (0)

static char* slurp(const char* path) {
  FILE* f = fopen(path, "rb");
  if (!f) return NULL;
  fseek(f, 0, SEEK_END);
  long size = ftell(f);
  fseek(f, 0, SEEK_SET);
  char* buf = malloc((size_t)size + 1);
  size_t got = fread(buf, 1, (size_t)size, f);
  buf[got] = '\0';
  fclose(f);
  return buf;
}

static int stage_events = 0;
static void count_stage(const char* id, const char* status, const char* message, void* user) {
  (void)id;
  (void)status;
  (void)message;
  ++*(int*)user;
}

static void test_labels(void) {
  EXPECT(ds_label_count() == 23);
  EXPECT(strcmp(ds_label_name(0), "conjunction") == 0);
  EXPECT(ds_label_name(999) == NULL);
  int training = -1;
  EXPECT(ds_is_training_label("similarity", &training) == DS_OK && training == 0);
  EXPECT(ds_is_training_label("Cause+Belief", &training) == DS_OK && training == 1);
  EXPECT(ds_is_training_label("nonsense", &training) == DS_ERR_UNKNOWN_LABEL);
  EXPECT(strlen(ds_last_error()) > 0);
  char* confused = NULL;
  EXPECT(ds_confusion_of("purpose", &confused) == DS_OK);
  EXPECT(confused && strcmp(confused, "condition") == 0);
  ds_string_free(confused);
}

static void test_prompts(void) {
  char* prompt = NULL;
  EXPECT(ds_render_dc_prompt("The brokerage firms learned a lesson the last time around.", "cause", 2,
                             "The Artist has his routine. He spends his days sketching passers-by, or trying to.",
                             "at night he returns to the condemned building he calls home.", "asynchronous", "Later,",
                             &prompt) == DS_OK);
  char* golden = slurp(DISCOSYN_GOLDEN_DIR "/dc_prompt.txt");
  EXPECT(golden != NULL);
  if (prompt && golden) EXPECT(strcmp(prompt, golden) == 0);
  ds_string_free(prompt);
  free(golden);
  EXPECT(ds_render_dc_prompt("x", "cause", 5, "a", "b", "cause", NULL, &prompt) == DS_ERR_INVALID_ARGUMENT);
  EXPECT(ds_render_dr_prompt("x", "frobnicate", "a", "b", &prompt) == DS_ERR_UNKNOWN_LABEL);
}

static void test_statistics(void) {
  const double model[] = {10, 11, 12};
  const double baseline[] = {20, 21, 22};
  ds_t_test_result r;
  EXPECT(ds_t_test(model, 3, baseline, 3, 0.05, 0, &r) == DS_OK);
  EXPECT(fabs(r.t + 12.24744871391589) < 1e-6);
  EXPECT(fabs(r.p - 0.00025521674944192687) < 1e-4);
  EXPECT(r.significant == 1);
  EXPECT(ds_t_test(model, 1, baseline, 3, 0.05, 0, &r) == DS_ERR_INVALID_ARGUMENT);
}

static void test_ingest(void) {
  char* summary = NULL;
  EXPECT(ds_ingest(DISCOSYN_FIXTURE_DIR "/source.jsonl", "source", NULL, 0, &summary) == DS_OK);
  EXPECT(summary && strstr(summary, "\"train\": 342") != NULL);
  ds_string_free(summary);
  EXPECT(ds_ingest(DISCOSYN_FIXTURE_DIR "/target.jsonl", "target", NULL, 10, &summary) == DS_OK);
  ds_string_free(summary);
  EXPECT(ds_ingest("/nonexistent/file.jsonl", "source", NULL, 0, &summary) == DS_ERR_IO);
  EXPECT(ds_ingest(DISCOSYN_FIXTURE_DIR "/source.jsonl", "bogus", NULL, 0, &summary) == DS_ERR_INVALID_ARGUMENT);
}

static void test_pipeline(const char* out_dir) {
  ds_config* config = NULL;
  EXPECT(ds_config_load("/nonexistent.cfg", &config) != DS_OK);
  EXPECT(ds_config_load(DISCOSYN_FIXTURE_DIR "/pipeline.cfg", &config) == DS_OK);
  EXPECT(ds_config_set(config, "seeds", "1") == DS_OK);
  EXPECT(ds_config_set(config, "adaptation.methods", "prefix") == DS_OK);
  EXPECT(ds_config_set(config, "adaptation.data", "synthetic") == DS_OK);
  EXPECT(ds_config_set(config, "generation.templates", "DC") == DS_OK);
  EXPECT(ds_config_set(config, "screening.kinds", "strict") == DS_OK);
  EXPECT(ds_config_set(config, "adaptation.modes", "specific") == DS_OK);

  ds_pipeline* pipeline = NULL;
  EXPECT(ds_pipeline_create(config, out_dir, &pipeline) == DS_OK);
  char* stages = NULL;
  EXPECT(ds_pipeline_stages(pipeline, &stages) == DS_OK);
  EXPECT(stages && strstr(stages, "\"train-base/1\"") != NULL);
  ds_string_free(stages);

  int events = 0;
  ds_pipeline_set_callback(pipeline, count_stage, &events);
  /* screen-report is not a dependency of report, so it is named too */
  const char* targets[] = {"report", "screen-report"};
  ds_run_result* result = NULL;
  EXPECT(ds_pipeline_run(pipeline, targets, 2, 0, &result) == DS_OK);
  EXPECT(ds_run_result_exit_code(result) == 0);
  EXPECT(ds_run_result_stage_count(result) > 0);
  EXPECT((size_t)events == ds_run_result_stage_count(result));
  const char *id = NULL, *status = NULL, *message = NULL;
  EXPECT(ds_run_result_stage(result, 0, &id, &status, &message) == DS_OK);
  EXPECT(strcmp(status, "ran") == 0);
  EXPECT(ds_run_result_stage(result, 100000, &id, &status, &message) == DS_ERR_INVALID_ARGUMENT);
  EXPECT(ds_run_result_report(result) != NULL && strstr(ds_run_result_report(result), "Baseline PDTB") != NULL);
  ds_run_result_destroy(result);
  ds_pipeline_destroy(pipeline);

  /* reopening the directory: everything is current */
  EXPECT(ds_pipeline_open(out_dir, &pipeline) == DS_OK);
  EXPECT(ds_pipeline_run(pipeline, NULL, 0, 0, &result) == DS_OK);
  for (size_t i = 0; i < ds_run_result_stage_count(result); ++i) {
    ds_run_result_stage(result, i, &id, &status, &message);
    if (strcmp(status, "up-to-date") != 0) fprintf(stderr, "%s is %s: %s\n", id, status, message);
    EXPECT(strcmp(status, "up-to-date") == 0);
  }
  ds_run_result_destroy(result);
  ds_pipeline_destroy(pipeline);

  EXPECT(ds_config_set(config, "adaptation.methods", "distill") == DS_OK);
  EXPECT(ds_pipeline_create(config, out_dir, &pipeline) == DS_ERR_CONFIG);
  ds_config_destroy(config);
  EXPECT(ds_pipeline_open("/nonexistent-output", &pipeline) == DS_ERR_CONFIG);
  (void)stage_events;
}

int main(int argc, char** argv) {
  if (argc < 2) {
    fprintf(stderr, "usage: %s <scratch dir>\n", argv[0]);
    return 2;
  }
  EXPECT(strlen(ds_version()) > 0);
  EXPECT(strcmp(ds_status_name(DS_ERR_CONFIG), "config") == 0);
  test_labels();
  test_prompts();
  test_statistics();
  test_ingest();
  test_pipeline(argv[1]);
  if (failures) fprintf(stderr, "%d check(s) failed\n", failures);
  else printf("capi: all checks passed\n");
  return failures ? 1 : 0;
}

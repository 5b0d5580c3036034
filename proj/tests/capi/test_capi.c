/* Exercises the shared library through its C header only. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <sys/stat.h>

#include "amcuq/amcuq.h"

static int failures = 0;

#define EXPECT(cond)                                                     \
  do {                                                                   \
    if (!(cond)) {                                                       \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                        \
    }                                                                    \
  } while (0)

#define OK(call) EXPECT((call) == AMCUQ_OK)

static void join(char* out, size_t n, const char* dir, const char* name) { snprintf(out, n, "%s/%s", dir, name); }

int main(int argc, char** argv) {
  const char* dir = argc > 1 ? argv[1] : "capi_work";
  mkdir(dir, 0755);
  char path[1024];

  EXPECT(strcmp(amcuq_version(), "0.3.0") == 0);
  EXPECT(strcmp(amcuq_status_name(AMCUQ_OK), "ok") == 0);
  EXPECT(strcmp(amcuq_status_name(AMCUQ_ERR_CONFIG), "config") == 0);
  EXPECT(amcuq_exit_code(AMCUQ_OK) == 0);
  EXPECT(amcuq_exit_code(AMCUQ_ERR_CONFIG) == 2);
  EXPECT(amcuq_exit_code(AMCUQ_ERR_MISSING_ARTIFACT) == 3);
  EXPECT(amcuq_exit_code(AMCUQ_ERR_DIVERGENCE) == 4);
  EXPECT(amcuq_exit_code(AMCUQ_ERR_IO) == 1);

  const char* schemes[] = {"BPSK", "QPSK", "OOK"};
  const double snrs[] = {0.0, 10.0};
  amcuq_dataset* ds = NULL;
  OK(amcuq_dataset_generate(schemes, 3, snrs, 2, 8, 16, 5, AMCUQ_FADING_IDENTITY, &ds));
  EXPECT(amcuq_dataset_size(ds) == 48);
  EXPECT(amcuq_dataset_frame_length(ds) == 16);
  EXPECT(amcuq_dataset_num_classes(ds) == 3);

  float samples[32];
  uint32_t scheme = 99;
  double snr = -1.0;
  OK(amcuq_dataset_frame(ds, 0, samples, 32, &scheme, &snr));
  EXPECT(scheme < 3);
  EXPECT(snr == 0.0 || snr == 10.0);
  EXPECT(amcuq_dataset_frame(ds, 0, samples, 8, NULL, NULL) == AMCUQ_ERR_LENGTH_MISMATCH);
  EXPECT(strlen(amcuq_last_error()) > 0);
  EXPECT(amcuq_dataset_frame(ds, 1000, NULL, 0, NULL, NULL) == AMCUQ_ERR_INVALID_ARGUMENT);

  const char* bad_schemes[] = {"NOPE"};
  amcuq_dataset* none = NULL;
  EXPECT(amcuq_dataset_generate(bad_schemes, 1, snrs, 2, 8, 16, 5, AMCUQ_FADING_IDENTITY, &none) != AMCUQ_OK);
  EXPECT(none == NULL);
  EXPECT(amcuq_dataset_generate(NULL, 0, snrs, 2, 8, 16, 5, AMCUQ_FADING_IDENTITY, &none) ==
         AMCUQ_ERR_INVALID_ARGUMENT);

  join(path, sizeof path, dir, "d.sigset");
  OK(amcuq_dataset_save(ds, path));
  amcuq_dataset* back = NULL;
  OK(amcuq_dataset_load(path, &back));
  EXPECT(amcuq_dataset_size(back) == 48);
  float again[32];
  OK(amcuq_dataset_frame(back, 0, again, 32, NULL, NULL));
  EXPECT(memcmp(samples, again, sizeof samples) == 0);
  amcuq_dataset_free(back);

  join(path, sizeof path, dir, "absent.sigset");
  EXPECT(amcuq_dataset_load(path, &back) == AMCUQ_ERR_MISSING_ARTIFACT);

  amcuq_dataset *train = NULL, *test = NULL;
  OK(amcuq_dataset_split(ds, 0.25, 3, &train, &test));
  EXPECT(amcuq_dataset_size(train) == 36);
  EXPECT(amcuq_dataset_size(test) == 12);

  amcuq_ensemble* ens = NULL;
  OK(amcuq_ensemble_train(train, 2, 11, 2, 8, 0.05, 2, &ens));
  EXPECT(amcuq_ensemble_size(ens) == 2);
  EXPECT(amcuq_ensemble_num_classes(ens) == 3);

  double frame[32], mean[3], var[3];
  for (int i = 0; i < 32; ++i) frame[i] = samples[i];
  OK(amcuq_ensemble_predict(ens, frame, 32, mean, var, 3));
  EXPECT(fabs(mean[0] + mean[1] + mean[2] - 1.0) < 1e-9);
  EXPECT(var[0] >= 0.0 && var[1] >= 0.0 && var[2] >= 0.0);
  OK(amcuq_ensemble_predict(ens, frame, 32, mean, NULL, 3));
  EXPECT(amcuq_ensemble_predict(ens, frame, 32, mean, var, 2) == AMCUQ_ERR_LENGTH_MISMATCH);
  EXPECT(amcuq_ensemble_predict(ens, frame, 30, mean, var, 3) != AMCUQ_OK);

  join(path, sizeof path, dir, "e.ensemble.json");
  OK(amcuq_ensemble_save(ens, path));
  amcuq_ensemble* loaded = NULL;
  OK(amcuq_ensemble_load(path, &loaded));
  double mean2[3];
  OK(amcuq_ensemble_predict(loaded, frame, 32, mean2, NULL, 3));
  EXPECT(memcmp(mean, mean2, sizeof mean) == 0);

  amcuq_model* model = NULL;
  join(path, sizeof path, dir, "e_member_0.model");
  OK(amcuq_model_load(path, &model));
  EXPECT(amcuq_model_num_classes(model) == 3);
  EXPECT(amcuq_model_flops(model) > 0);
  double probs[3];
  OK(amcuq_model_forward(model, frame, 32, probs, 3));
  EXPECT(fabs(probs[0] + probs[1] + probs[2] - 1.0) < 1e-9);
  join(path, sizeof path, dir, "copy.model");
  OK(amcuq_model_save(model, path));

  amcuq_experiment* exp = NULL;
  join(path, sizeof path, dir, "absent.yaml");
  EXPECT(amcuq_experiment_load(path, &exp) == AMCUQ_ERR_CONFIG);
  join(path, sizeof path, dir, "exp.yaml");
  FILE* f = fopen(path, "w");
  fputs("schema_version: 1\nseed: 3\ndataset:\n  schemes: [BPSK, QPSK]\n  snr_db: [4]\n"
        "  frames_per_cell: 5\n  frame_length: 16\ntrain:\n  epochs: 1\n  batch_size: 4\n"
        "ensemble:\n  members: 1\n  systems: [standalone]\nattack:\n  fixed_snr_db: 4\n",
        f);
  fclose(f);
  OK(amcuq_experiment_load(path, &exp));
  join(path, sizeof path, dir, "exp_out");
  OK(amcuq_experiment_set_output(exp, path));
  OK(amcuq_experiment_set_workers(exp, 2));
  EXPECT(amcuq_experiment_set_workers(exp, 0) == AMCUQ_ERR_CONFIG);
  OK(amcuq_experiment_set_precision(exp, "f32"));
  EXPECT(amcuq_experiment_set_precision(exp, "f8") == AMCUQ_ERR_CONFIG);
  EXPECT(amcuq_experiment_run(exp, "evaluate") == AMCUQ_ERR_MISSING_ARTIFACT);
  EXPECT(amcuq_experiment_run(exp, "nonsense") != AMCUQ_OK);
  OK(amcuq_experiment_run(exp, "generate"));
  OK(amcuq_experiment_run(exp, "train"));
  OK(amcuq_experiment_run(exp, "evaluate"));
  EXPECT(strlen(amcuq_last_error()) == 0);

  amcuq_experiment_free(exp);
  amcuq_model_free(model);
  amcuq_ensemble_free(loaded);
  amcuq_ensemble_free(ens);
  amcuq_dataset_free(train);
  amcuq_dataset_free(test);
  amcuq_dataset_free(ds);
  amcuq_dataset_free(NULL);

  if (failures) {
    fprintf(stderr, "%d failures\n", failures);
    return 1;
  }
  puts("capi: all checks passed");
  return 0;
}

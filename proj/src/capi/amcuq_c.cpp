#include "amcuq/amcuq.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>

#include "amcuq/dataset.hpp"
#include "amcuq/ensemble.hpp"
#include "amcuq/experiment.hpp"
#include "amcuq/nncore.hpp"
#include "amcuq/siggen.hpp"

struct amcuq_dataset {
  amcuq::SignalDataset ds;
};

struct amcuq_model {
  amcuq::nn::ModelParams params;
};

struct amcuq_ensemble {
  amcuq::ensemble::EnsembleModel model;
};

struct amcuq_experiment {
  amcuq::exp::ExperimentConfig config;
  amcuq::exp::Overrides overrides;
};

namespace {

thread_local std::string last_error;

amcuq_status set_error(amcuq_status s, const char* what) {
  last_error = what;
  return s;
}

template <class F>
amcuq_status guarded(F&& f) {
  try {
    f();
    last_error.clear();
    return AMCUQ_OK;
  } catch (const amcuq::Error& e) {
    return set_error(static_cast<amcuq_status>(static_cast<int>(e.code())), e.what());
  } catch (const std::bad_alloc&) {
    return set_error(AMCUQ_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return set_error(AMCUQ_ERR_INTERNAL, e.what());
  } catch (...) {
    return set_error(AMCUQ_ERR_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* name) {
  if (p == nullptr) amcuq::fail(amcuq::ErrorCode::invalid_argument, std::string(name) + " is null");
}

void check_capacity(std::size_t needed, std::size_t capacity) {
  if (capacity < needed) {
    amcuq::fail(amcuq::ErrorCode::length_mismatch,
                "output buffer holds " + std::to_string(capacity) + " values, need " + std::to_string(needed));
  }
}

}  // namespace

extern "C" {

const char* amcuq_version(void) { return amcuq::kVersion.data(); }

const char* amcuq_last_error(void) { return last_error.c_str(); }

const char* amcuq_status_name(amcuq_status status) {
  if (status == AMCUQ_OK) return "ok";
  if (status == AMCUQ_ERR_INTERNAL) return "internal";
  if (status >= AMCUQ_ERR_INVALID_ARGUMENT && status <= AMCUQ_ERR_MISSING_ARTIFACT) {
    return amcuq::to_string(static_cast<amcuq::ErrorCode>(status)).data();
  }
  return "unknown";
}

int amcuq_exit_code(amcuq_status status) {
  if (status == AMCUQ_OK) return 0;
  if (status == AMCUQ_ERR_INTERNAL) return 1;
  return amcuq::exp::exit_code(static_cast<amcuq::ErrorCode>(status));
}

amcuq_status amcuq_dataset_generate(const char* const* schemes, size_t scheme_count, const double* snr_db,
                                    size_t snr_count, size_t frames_per_cell, size_t frame_length, uint64_t seed,
                                    amcuq_fading fading, amcuq_dataset** out) {
  return guarded([&] {
    need(out, "out");
    need(schemes, "schemes");
    need(snr_db, "snr_db");
    std::vector<amcuq::siggen::ModulationScheme> list;
    for (size_t i = 0; i < scheme_count; ++i) {
      need(schemes[i], "scheme name");
      list.push_back(amcuq::siggen::scheme_by_name(schemes[i]));
    }
    const auto f =
        fading == AMCUQ_FADING_RAYLEIGH_IID ? amcuq::siggen::Fading::rayleigh_iid : amcuq::siggen::Fading::identity;
    auto ds = amcuq::siggen::generate_frames(list, {snr_db, snr_db + snr_count}, frames_per_cell, frame_length, seed,
                                             f);
    *out = new amcuq_dataset{std::move(ds)};
  });
}

amcuq_status amcuq_dataset_load(const char* path, amcuq_dataset** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new amcuq_dataset{amcuq::dataset::load(path)};
  });
}

amcuq_status amcuq_dataset_save(const amcuq_dataset* ds, const char* path) {
  return guarded([&] {
    need(ds, "dataset");
    need(path, "path");
    amcuq::dataset::save(ds->ds, path);
  });
}

amcuq_status amcuq_dataset_split(const amcuq_dataset* ds, double test_fraction, uint64_t seed, amcuq_dataset** train,
                                 amcuq_dataset** test) {
  return guarded([&] {
    need(ds, "dataset");
    need(train, "train");
    need(test, "test");
    auto parts = amcuq::dataset::split(ds->ds, test_fraction, seed);
    auto tr = std::make_unique<amcuq_dataset>(std::move(parts.train));
    auto te = std::make_unique<amcuq_dataset>(std::move(parts.test));
    *train = tr.release();
    *test = te.release();
  });
}

size_t amcuq_dataset_size(const amcuq_dataset* ds) { return ds ? ds->ds.size() : 0; }
size_t amcuq_dataset_frame_length(const amcuq_dataset* ds) { return ds ? ds->ds.frame_length : 0; }
size_t amcuq_dataset_num_classes(const amcuq_dataset* ds) { return ds ? ds->ds.num_classes() : 0; }

amcuq_status amcuq_dataset_frame(const amcuq_dataset* ds, size_t index, float* samples, size_t capacity,
                                 uint32_t* scheme_index, double* snr_db) {
  return guarded([&] {
    need(ds, "dataset");
    if (index >= ds->ds.size()) amcuq::fail(amcuq::ErrorCode::invalid_argument, "frame index out of range");
    const auto& f = ds->ds.frames[index];
    if (samples) {
      check_capacity(f.samples.size(), capacity);
      std::memcpy(samples, f.samples.data(), f.samples.size() * sizeof(float));
    }
    if (scheme_index) *scheme_index = f.scheme_index;
    if (snr_db) *snr_db = f.snr_db;
  });
}

void amcuq_dataset_free(amcuq_dataset* ds) { delete ds; }

amcuq_status amcuq_model_load(const char* path, amcuq_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new amcuq_model{amcuq::nn::load_model(path)};
  });
}

amcuq_status amcuq_model_save(const amcuq_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    amcuq::nn::save_model(model->params, path);
  });
}

size_t amcuq_model_num_classes(const amcuq_model* model) { return model ? model->params.num_classes() : 0; }

uint64_t amcuq_model_flops(const amcuq_model* model) {
  return model ? amcuq::nn::flop_count(model->params.specs) : 0;
}

amcuq_status amcuq_model_forward(const amcuq_model* model, const double* frame, size_t length, double* probs,
                                 size_t capacity) {
  return guarded([&] {
    need(model, "model");
    need(frame, "frame");
    need(probs, "probs");
    check_capacity(model->params.num_classes(), capacity);
    const auto p = amcuq::nn::forward(model->params, {frame, length});
    std::memcpy(probs, p.data(), p.size() * sizeof(double));
  });
}

void amcuq_model_free(amcuq_model* model) { delete model; }

amcuq_status amcuq_ensemble_train(const amcuq_dataset* train, size_t members, uint64_t master_seed, size_t epochs,
                                  size_t batch_size, double learning_rate, size_t workers, amcuq_ensemble** out) {
  return guarded([&] {
    need(train, "train");
    need(out, "out");
    const auto specs = amcuq::nn::Architecture::desk(train->ds.num_classes(), train->ds.frame_length).layer_specs();
    amcuq::nn::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.batch_size = batch_size;
    cfg.learning_rate = learning_rate;
    auto model = amcuq::ensemble::train_ensemble(train->ds, members, specs, amcuq::Precision::f64, cfg, master_seed,
                                                 workers);
    *out = new amcuq_ensemble{std::move(model)};
  });
}

amcuq_status amcuq_ensemble_load(const char* manifest_path, amcuq_ensemble** out) {
  return guarded([&] {
    need(manifest_path, "path");
    need(out, "out");
    *out = new amcuq_ensemble{amcuq::ensemble::load_ensemble(manifest_path)};
  });
}

amcuq_status amcuq_ensemble_save(const amcuq_ensemble* ens, const char* manifest_path) {
  return guarded([&] {
    need(ens, "ensemble");
    need(manifest_path, "path");
    amcuq::ensemble::save_ensemble(ens->model, manifest_path);
  });
}

size_t amcuq_ensemble_size(const amcuq_ensemble* ens) { return ens ? ens->model.size() : 0; }
size_t amcuq_ensemble_num_classes(const amcuq_ensemble* ens) { return ens ? ens->model.num_classes() : 0; }

amcuq_status amcuq_ensemble_predict(const amcuq_ensemble* ens, const double* frame, size_t length, double* mean,
                                    double* variance, size_t capacity) {
  return guarded([&] {
    need(ens, "ensemble");
    need(frame, "frame");
    need(mean, "mean");
    check_capacity(ens->model.num_classes(), capacity);
    const auto p = amcuq::ensemble::predict(ens->model, {frame, length});
    std::memcpy(mean, p.mean_probs.data(), p.mean_probs.size() * sizeof(double));
    if (variance) std::memcpy(variance, p.per_class_variance.data(), p.per_class_variance.size() * sizeof(double));
  });
}

void amcuq_ensemble_free(amcuq_ensemble* ens) { delete ens; }

amcuq_status amcuq_experiment_load(const char* config_path, amcuq_experiment** out) {
  return guarded([&] {
    need(config_path, "config path");
    need(out, "out");
    *out = new amcuq_experiment{amcuq::exp::ExperimentConfig::load(config_path), {}};
  });
}

amcuq_status amcuq_experiment_set_output(amcuq_experiment* exp, const char* dir) {
  return guarded([&] {
    need(exp, "experiment");
    need(dir, "dir");
    exp->overrides.output_dir = dir;
  });
}

amcuq_status amcuq_experiment_set_workers(amcuq_experiment* exp, size_t workers) {
  return guarded([&] {
    need(exp, "experiment");
    if (workers == 0) amcuq::fail(amcuq::ErrorCode::config, "workers must be >= 1");
    exp->overrides.workers = workers;
  });
}

amcuq_status amcuq_experiment_set_seed(amcuq_experiment* exp, uint64_t seed) {
  return guarded([&] {
    need(exp, "experiment");
    exp->overrides.seed = seed;
  });
}

amcuq_status amcuq_experiment_set_precision(amcuq_experiment* exp, const char* precision) {
  return guarded([&] {
    need(exp, "experiment");
    need(precision, "precision");
    try {
      exp->overrides.precision = amcuq::parse_precision(precision);
    } catch (const amcuq::Error& e) {
      amcuq::fail(amcuq::ErrorCode::config, e.what());
    }
  });
}

amcuq_status amcuq_experiment_run(const amcuq_experiment* exp, const char* stage) {
  return guarded([&] {
    need(exp, "experiment");
    need(stage, "stage");
    const auto cfg = amcuq::exp::apply(exp->config, exp->overrides);
    amcuq::exp::run_stage(amcuq::exp::parse_stage(stage), cfg);
  });
}

void amcuq_experiment_free(amcuq_experiment* exp) { delete exp; }

}  // extern "C"

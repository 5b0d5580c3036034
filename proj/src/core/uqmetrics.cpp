#include "amcuq/uqmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

namespace amcuq::uq {

namespace {

double true_prob(const EnsemblePrediction& p, const OneHotLabel& y) { return p.mean_probs[y.index()]; }

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::io, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorCode::io, "failed writing " + path.string());
}

}  // namespace

std::size_t ScoredBatch::num_classes() const {
  if (predictions.empty()) fail(ErrorCode::empty_batch, "empty batch");
  return predictions.front().num_classes();
}

void ScoredBatch::add(EnsemblePrediction pred, OneHotLabel label, double snr) {
  predictions.push_back(std::move(pred));
  labels.push_back(label);
  snr_db.push_back(snr);
}

void ScoredBatch::validate() const {
  if (predictions.empty()) fail(ErrorCode::empty_batch, "empty batch");
  if (labels.size() != predictions.size() || snr_db.size() != predictions.size()) {
    fail(ErrorCode::length_mismatch, "batch predictions, labels and SNR tags differ in length");
  }
  const auto c = predictions.front().num_classes();
  for (std::size_t t = 0; t < size(); ++t) {
    const auto& p = predictions[t];
    if (p.num_classes() != c || p.per_class_variance.size() != c || labels[t].num_classes() != c) {
      fail(ErrorCode::shape_mismatch, "inconsistent class count in batch item " + std::to_string(t));
    }
  }
}

ScoredBatch ScoredBatch::slice(double snr) const {
  ScoredBatch out;
  for (std::size_t t = 0; t < size(); ++t) {
    if (snr_db[t] == snr) out.add(predictions[t], labels[t], snr_db[t]);
  }
  return out;
}

void ECEConfig::validate() const {
  if (bin_count < 1) fail(ErrorCode::invalid_argument, "ECE needs at least one bin");
}

std::size_t ECEConfig::bin_of(double confidence) const {
  const auto k_max = bin_count - 1;
  const double kd = static_cast<double>(bin_count);
  auto edge = [kd](std::size_t k) { return static_cast<double>(k) / kd; };
  const double guess = std::floor(confidence * kd);
  std::size_t k = guess <= 0.0 ? 0 : std::min(static_cast<std::size_t>(guess), k_max);
  // Snap to the explicit edges k/K so the product's rounding cannot move a
  // sample across a boundary.
  while (k > 0 && confidence < edge(k)) --k;
  while (k < k_max && confidence >= edge(k + 1)) ++k;
  return k;
}

double clip_probability(double p) noexcept { return std::clamp(p, kProbClip, 1.0); }

double nll(const ScoredBatch& batch) {
  batch.validate();
  double s = 0.0;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    s -= std::log(clip_probability(true_prob(batch.predictions[t], batch.labels[t])));
  }
  return s / static_cast<double>(batch.size());
}

double brier(const ScoredBatch& batch) {
  batch.validate();
  // Double-double accumulation so the result is rounded once; a uniform
  // predictor then lands exactly on (C-1)/C.
  double hi = 0.0, lo = 0.0;
  auto add = [&](double a) {
    const double s = hi + a;
    const double bb = s - hi;
    lo += (hi - (s - bb)) + (a - bb);
    hi = s;
  };
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const auto& p = batch.predictions[t].mean_probs;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double y = batch.labels[t][j];
      const double d = y - p[j];
      const double d_err = (y - d) - p[j];  // exact: d + d_err == y - p
      const double sq = d * d;
      add(sq);
      lo += std::fma(d, d, -sq) + 2.0 * d * d_err;
    }
  }
  const double n = static_cast<double>(batch.size());
  const double q = hi / n;
  return q + (std::fma(-q, n, hi) + lo) / n;
}

double ece(const ScoredBatch& batch, const ECEConfig& cfg) {
  batch.validate();
  cfg.validate();
  std::vector<double> conf_sum(cfg.bin_count, 0.0);
  std::vector<double> hits(cfg.bin_count, 0.0);
  std::vector<std::size_t> count(cfg.bin_count, 0);
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const auto& p = batch.predictions[t];
    const double c = p.confidence();
    const auto k = cfg.bin_of(c);
    conf_sum[k] += c;
    hits[k] += p.predicted_class() == batch.labels[t].index() ? 1.0 : 0.0;
    ++count[k];
  }
  const double total = static_cast<double>(batch.size());
  double e = 0.0;
  for (std::size_t k = 0; k < cfg.bin_count; ++k) {
    if (count[k] == 0) continue;
    const double n = static_cast<double>(count[k]);
    e += (n / total) * std::abs(hits[k] / n - conf_sum[k] / n);
  }
  return e;
}

KLResult kl_divergence(const ScoredBatch& batch) {
  batch.validate();
  KLResult out;
  out.per_sample.resize(batch.size());
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const auto& p = batch.predictions[t].mean_probs;
    double d = 0.0;
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double y = batch.labels[t][j];
      if (y > 0.0) d += y * (std::log(y) - std::log(clip_probability(p[j])));
    }
    out.per_sample[t] = d;
  }
  out.mean = mean_of(out.per_sample);
  return out;
}

CIWidths ci_widths(const ScoredBatch& batch, const CIConfig& cfg) {
  batch.validate();
  CIWidths out;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const auto& p = batch.predictions[t];
    const auto k = p.predicted_class();
    const double w =
        2.0 * ensemble::ci_half_width(p.per_class_variance[k], std::max<std::size_t>(p.members(), 1), cfg.z_alpha);
    (k == batch.labels[t].index() ? out.correct : out.incorrect).push_back(w);
  }
  return out;
}

double coverage(const ScoredBatch& batch, const CIConfig& cfg, CoverageMode mode) {
  batch.validate();
  std::size_t covered = 0;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    const auto ci = ensemble::ci_bounds(batch.predictions[t], cfg);
    const auto truth = batch.labels[t].index();
    bool ok = ci[truth].contains(1.0);
    if (ok && mode == CoverageMode::strict) {
      for (std::size_t j = 0; j < ci.size() && ok; ++j) {
        if (j != truth) ok = ci[j].contains(0.0);
      }
    }
    covered += ok ? 1 : 0;
  }
  return static_cast<double>(covered) / static_cast<double>(batch.size());
}

double high_confidence_proportion(const ScoredBatch& batch, double threshold) {
  batch.validate();
  std::size_t n = 0;
  for (const auto& p : batch.predictions) n += p.confidence() > threshold ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(batch.size());
}

double accuracy(const ScoredBatch& batch) {
  batch.validate();
  std::size_t n = 0;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    n += batch.predictions[t].predicted_class() == batch.labels[t].index() ? 1 : 0;
  }
  return static_cast<double>(n) / static_cast<double>(batch.size());
}

Histogram histogram(const std::vector<double>& values, double lo, double hi, std::size_t bins) {
  if (bins == 0) fail(ErrorCode::invalid_argument, "histogram needs at least one bin");
  Histogram h{lo, hi, std::vector<std::uint64_t>(bins, 0)};
  const double span = hi - lo;
  for (double v : values) {
    std::size_t k = 0;
    if (span > 0.0) {
      const double pos = std::floor((v - lo) / span * static_cast<double>(bins));
      k = pos <= 0.0 ? 0 : std::min(static_cast<std::size_t>(pos), bins - 1);
    }
    ++h.counts[k];
  }
  return h;
}

MetricsReport report(const ScoredBatch& batch, const ReportConfig& cfg) {
  batch.validate();
  MetricsReport r;
  r.count = batch.size();
  r.accuracy = accuracy(batch);
  r.nll = nll(batch);
  r.brier = brier(batch);
  r.ece = ece(batch, cfg.ece);
  r.mean_kl = kl_divergence(batch).mean;
  r.coverage_strict = coverage(batch, cfg.ci, CoverageMode::strict);
  r.coverage_relaxed = coverage(batch, cfg.ci, CoverageMode::relaxed);
  r.high_confidence_proportion = high_confidence_proportion(batch, cfg.high_confidence_threshold);

  const auto widths = ci_widths(batch, cfg.ci);
  r.mean_ci_width_correct = mean_of(widths.correct);
  r.mean_ci_width_incorrect = mean_of(widths.incorrect);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto* v : {&widths.correct, &widths.incorrect}) {
    for (double w : *v) {
      lo = std::min(lo, w);
      hi = std::max(hi, w);
    }
  }
  r.ci_width_correct = histogram(widths.correct, lo, hi, cfg.histogram_bins);
  r.ci_width_incorrect = histogram(widths.incorrect, lo, hi, cfg.histogram_bins);
  return r;
}

std::vector<ReportRow> report_by_snr(const ScoredBatch& batch, const ReportConfig& cfg, const std::string& model,
                                     double pnr_db, double epsilon) {
  batch.validate();
  const std::set<double> snrs(batch.snr_db.begin(), batch.snr_db.end());
  std::vector<ReportRow> rows;
  for (double s : snrs) rows.push_back({model, s, pnr_db, epsilon, report(batch.slice(s), cfg)});
  return rows;
}

ScoredBatch score_inputs(const ensemble::EnsembleModel& model, const std::vector<std::vector<double>>& inputs,
                         const SignalDataset& data, std::size_t workers) {
  if (inputs.size() != data.size()) fail(ErrorCode::length_mismatch, "input count differs from frame count");
  if (data.empty()) fail(ErrorCode::empty_batch, "nothing to score");
  model.validate();
  const auto classes = model.num_classes();
  if (data.num_classes() != classes) {
    fail(ErrorCode::shape_mismatch, "dataset has " + std::to_string(data.num_classes()) + " classes, model " +
                                        std::to_string(classes));
  }
  const auto n = data.size();
  const auto chunks = std::min<std::size_t>(std::max<std::size_t>(workers, 1), n);
  std::vector<EnsemblePrediction> preds(n);
  parallel_for(chunks, chunks, [&](std::size_t c) {
    ensemble::Predictor predictor(model);
    for (std::size_t t = c * n / chunks; t < (c + 1) * n / chunks; ++t) preds[t] = predictor.predict(inputs[t]);
  });
  ScoredBatch batch;
  for (std::size_t t = 0; t < n; ++t) {
    const auto& f = data.frames[t];
    batch.add(std::move(preds[t]), OneHotLabel(f.scheme_index, classes), f.snr_db);
  }
  return batch;
}

ScoredBatch score(const ensemble::EnsembleModel& model, const SignalDataset& data, std::size_t workers) {
  std::vector<std::vector<double>> inputs;
  inputs.reserve(data.size());
  for (const auto& f : data.frames) inputs.push_back(to_input(f));
  return score_inputs(model, inputs, data, workers);
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "model",   "snr_db",          "pnr_db",           "epsilon",
      "count",   "accuracy",        "nll",              "brier",
      "ece",     "mean_kl",         "coverage_strict",  "coverage_relaxed",
      "high_confidence_proportion", "mean_ci_width_correct", "mean_ci_width_incorrect"};
  return cols;
}

std::string to_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    out << r.model << ',' << (std::isnan(r.snr_db) ? std::string("all") : fmt(r.snr_db)) << ','
        << (std::isnan(r.pnr_db) ? std::string("clean") : fmt(r.pnr_db)) << ',' << fmt(r.epsilon) << ','
        << m.count << ',' << fmt(m.accuracy) << ',' << fmt(m.nll) << ',' << fmt(m.brier) << ',' << fmt(m.ece)
        << ',' << fmt(m.mean_kl) << ',' << fmt(m.coverage_strict) << ',' << fmt(m.coverage_relaxed) << ','
        << fmt(m.high_confidence_proportion) << ',' << fmt(m.mean_ci_width_correct) << ','
        << fmt(m.mean_ci_width_incorrect) << '\n';
  }
  return out.str();
}

namespace {

// JSON has no NaN or infinity: NaN maps to null, infinities to strings.
nlohmann::json encode_real(double v) {
  if (std::isnan(v)) return nullptr;
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double decode_real(const nlohmann::json& v) {
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    fail(ErrorCode::corrupt_header, "bad real '" + s + "'");
  }
  return v.get<double>();
}

nlohmann::json hist_json(const Histogram& h) { return {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}}; }

Histogram hist_from(const nlohmann::json& j) {
  return {j.at("lo").get<double>(), j.at("hi").get<double>(), j.at("counts").get<std::vector<std::uint64_t>>()};
}

}  // namespace

std::string to_json(const std::vector<ReportRow>& rows) {
  auto arr = nlohmann::json::array();
  for (const auto& r : rows) {
    const auto& m = r.metrics;
    arr.push_back({{"model", r.model},
                   {"snr_db", encode_real(r.snr_db)},
                   {"pnr_db", encode_real(r.pnr_db)},
                   {"epsilon", r.epsilon},
                   {"count", m.count},
                   {"accuracy", m.accuracy},
                   {"nll", m.nll},
                   {"brier", m.brier},
                   {"ece", m.ece},
                   {"mean_kl", m.mean_kl},
                   {"coverage_strict", m.coverage_strict},
                   {"coverage_relaxed", m.coverage_relaxed},
                   {"high_confidence_proportion", m.high_confidence_proportion},
                   {"mean_ci_width_correct", m.mean_ci_width_correct},
                   {"mean_ci_width_incorrect", m.mean_ci_width_incorrect},
                   {"ci_width_correct", hist_json(m.ci_width_correct)},
                   {"ci_width_incorrect", hist_json(m.ci_width_incorrect)}});
  }
  return nlohmann::json{{"format", "amcuq.metrics"}, {"schema_version", 1}, {"rows", arr}}.dump(1) + "\n";
}

void write_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
  write_text(path, to_csv(rows));
}

void write_json(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
  write_text(path, to_json(rows));
}

std::vector<ReportRow> read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::missing_artifact, "cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format").get<std::string>() != "amcuq.metrics") fail(ErrorCode::corrupt_header, "not a metrics file");
    if (j.at("schema_version").get<int>() != 1) fail(ErrorCode::version_mismatch, "unsupported metrics version");
    std::vector<ReportRow> rows;
    for (const auto& r : j.at("rows")) {
      ReportRow row;
      row.model = r.at("model").get<std::string>();
      row.snr_db = decode_real(r.at("snr_db"));
      row.pnr_db = decode_real(r.at("pnr_db"));
      row.epsilon = r.at("epsilon").get<double>();
      auto& m = row.metrics;
      m.count = r.at("count").get<std::uint64_t>();
      m.accuracy = r.at("accuracy").get<double>();
      m.nll = r.at("nll").get<double>();
      m.brier = r.at("brier").get<double>();
      m.ece = r.at("ece").get<double>();
      m.mean_kl = r.at("mean_kl").get<double>();
      m.coverage_strict = r.at("coverage_strict").get<double>();
      m.coverage_relaxed = r.at("coverage_relaxed").get<double>();
      m.high_confidence_proportion = r.at("high_confidence_proportion").get<double>();
      m.mean_ci_width_correct = r.at("mean_ci_width_correct").get<double>();
      m.mean_ci_width_incorrect = r.at("mean_ci_width_incorrect").get<double>();
      m.ci_width_correct = hist_from(r.at("ci_width_correct"));
      m.ci_width_incorrect = hist_from(r.at("ci_width_incorrect"));
      rows.push_back(std::move(row));
    }
    return rows;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::corrupt_header, "metrics file " + path.string() + ": " + e.what());
  }
}

}  // namespace amcuq::uq

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "amcuq/ensemble.hpp"
#include "amcuq/frame.hpp"

namespace amcuq::uq {

using ensemble::CIConfig;
using ensemble::EnsemblePrediction;

struct ScoredBatch {
  std::vector<EnsemblePrediction> predictions;
  std::vector<OneHotLabel> labels;
  std::vector<double> snr_db;

  std::size_t size() const noexcept { return predictions.size(); }
  bool empty() const noexcept { return predictions.empty(); }
  std::size_t num_classes() const;
  void add(EnsemblePrediction pred, OneHotLabel label, double snr);
  /// Equal lengths and a consistent class count; throws empty_batch when empty.
  void validate() const;
  /// Items whose SNR tag equals snr exactly.
  ScoredBatch slice(double snr) const;
};

struct ECEConfig {
  std::size_t bin_count = 15;

  void validate() const;
  /// Bin k covers [k/K, (k+1)/K); the last bin also takes 1.0.
  std::size_t bin_of(double confidence) const;
};

enum class CoverageMode { strict, relaxed };

/// Clip applied before every log: [1e-12, 1].
double clip_probability(double p) noexcept;

double nll(const ScoredBatch& batch);
double brier(const ScoredBatch& batch);
double ece(const ScoredBatch& batch, const ECEConfig& cfg = {});

struct KLResult {
  std::vector<double> per_sample;
  double mean = 0.0;
};
KLResult kl_divergence(const ScoredBatch& batch);

struct CIWidths {
  std::vector<double> correct;
  std::vector<double> incorrect;
};
/// Width 2 * z * sqrt(S^2 / B) of the predicted class's interval.
CIWidths ci_widths(const ScoredBatch& batch, const CIConfig& cfg = {});

double coverage(const ScoredBatch& batch, const CIConfig& cfg, CoverageMode mode);
/// Fraction with max mean probability strictly above threshold.
double high_confidence_proportion(const ScoredBatch& batch, double threshold = 0.8);
double accuracy(const ScoredBatch& batch);

struct Histogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<std::uint64_t> counts;
};

/// Uniform bins over [lo, hi]; values outside are clamped into the end bins.
Histogram histogram(const std::vector<double>& values, double lo, double hi, std::size_t bins);

struct ReportConfig {
  ECEConfig ece;
  CIConfig ci;
  std::size_t histogram_bins = 32;
  double high_confidence_threshold = 0.8;
};

struct MetricsReport {
  std::uint64_t count = 0;
  double accuracy = 0.0;
  double nll = 0.0;
  double brier = 0.0;
  double ece = 0.0;
  double mean_kl = 0.0;
  double coverage_strict = 0.0;
  double coverage_relaxed = 0.0;
  double high_confidence_proportion = 0.0;
  double mean_ci_width_correct = 0.0;
  double mean_ci_width_incorrect = 0.0;
  /// Both histograms share the observed range of all widths.
  Histogram ci_width_correct;
  Histogram ci_width_incorrect;
};

MetricsReport report(const ScoredBatch& batch, const ReportConfig& cfg = {});

/// One CSV/JSON row. A NaN snr_db marks the pooled slice; a NaN pnr_db marks
/// a clean (unattacked) run and -inf an attack with no perturbation.
struct ReportRow {
  std::string model;
  double snr_db = 0.0;
  double pnr_db = 0.0;
  double epsilon = 0.0;
  MetricsReport metrics;
};

/// Per-SNR rows in ascending SNR order.
std::vector<ReportRow> report_by_snr(const ScoredBatch& batch, const ReportConfig& cfg, const std::string& model,
                                     double pnr_db, double epsilon);

/// Runs every frame of `data` through the ensemble. Results do not depend on
/// the worker count.
ScoredBatch score(const ensemble::EnsembleModel& model, const SignalDataset& data, std::size_t workers = 1);
/// Same, with explicit double-precision inputs (one per frame, l x 2).
ScoredBatch score_inputs(const ensemble::EnsembleModel& model, const std::vector<std::vector<double>>& inputs,
                         const SignalDataset& data, std::size_t workers = 1);

/// Column order of write_csv.
const std::vector<std::string>& csv_columns();
std::string to_csv(const std::vector<ReportRow>& rows);
std::string to_json(const std::vector<ReportRow>& rows);
void write_csv(const std::vector<ReportRow>& rows, const std::filesystem::path& path);
void write_json(const std::vector<ReportRow>& rows, const std::filesystem::path& path);
std::vector<ReportRow> read_json(const std::filesystem::path& path);

}  // namespace amcuq::uq

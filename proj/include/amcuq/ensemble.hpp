#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "amcuq/frame.hpp"
#include "amcuq/nncore.hpp"

namespace amcuq::ensemble {

struct EnsembleModel {
  std::vector<nn::ModelParams> members;
  /// Non-negative, sums to 1.
  std::vector<double> weights;

  std::size_t size() const noexcept { return members.size(); }
  std::size_t num_classes() const;
  void validate() const;
};

/// Wraps members with weights 1/B.
EnsembleModel with_equal_weights(std::vector<nn::ModelParams> members);

/// Aggregated prediction for one input.
struct EnsemblePrediction {
  /// B x C, one softmax row per member.
  std::vector<std::vector<double>> member_probs;
  std::vector<double> mean_probs;
  /// Unbiased sample variance over members, per class (0 when B = 1).
  std::vector<double> per_class_variance;

  std::size_t members() const noexcept { return member_probs.size(); }
  std::size_t num_classes() const noexcept { return mean_probs.size(); }
  /// Argmax of mean_probs; ties go to the lowest index.
  std::size_t predicted_class() const;
  /// Largest entry of mean_probs.
  double confidence() const;
};

/// Weighted mean and unweighted unbiased variance of member rows.
EnsemblePrediction aggregate(std::vector<std::vector<double>> member_probs, std::span<const double> weights);

/// Standard normal quantile.
double normal_quantile(double p);

struct CIConfig {
  double alpha = 0.05;
  /// 1 - alpha/2 quantile of N(0, 1).
  double z_alpha = 1.959963984540054;

  static CIConfig from_alpha(double alpha);
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;

  double width() const noexcept { return upper - lower; }
  bool contains(double v) const noexcept { return lower <= v && v <= upper; }
};

/// z * sqrt(S^2 / B).
double ci_half_width(double variance, std::size_t members, double z_alpha);

/// mean_j -+ z * sqrt(S^2_j / B); intervals are not clamped to [0, 1].
std::vector<Interval> ci_bounds(const EnsemblePrediction& pred, const CIConfig& cfg);

/// Evaluator holding one Network per member. Not thread-safe.
class Predictor {
 public:
  explicit Predictor(const EnsembleModel& model);

  EnsemblePrediction predict(std::span<const double> frame);
  std::size_t num_classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return networks_.size(); }

 private:
  std::vector<nn::Network> networks_;
  std::vector<double> weights_;
  std::size_t classes_ = 0;
};

EnsemblePrediction predict(const EnsembleModel& model, std::span<const double> frame);
/// Standalone baseline: B = 1, zero variance.
EnsemblePrediction predict_single(const nn::ModelParams& model, std::span<const double> frame);

/// Trains B members with init_seed = derive_seed(master, b, 0) and
/// shuffle_seed = derive_seed(master, b, 1). Members run on up to `workers`
/// threads; results do not depend on the worker count.
EnsembleModel train_ensemble(const SignalDataset& train_set, std::size_t members,
                             const std::vector<nn::LayerSpec>& specs, Precision precision,
                             const nn::TrainConfig& cfg, std::uint64_t master_seed, std::size_t workers = 1);

/// Mean predictive entropy of each member over the calibration set mapped to
/// weights proportional to (ln C - H_b), renormalized. Falls back to uniform
/// weights when every member sits at maximum entropy.
std::vector<double> entropy_weights(const std::vector<nn::ModelParams>& members, const SignalDataset& calibration);

/// Partition of the sorted SNR grid into `bands` contiguous groups whose
/// sizes differ by at most one (earlier groups take the extra values).
std::vector<std::vector<double>> snr_sub_bands(std::vector<double> snr_grid, std::size_t bands);

/// SNR-aware weighted baseline: member b trains only on sub-band b of the
/// training split, then entropy weights are fit on `calibration`.
EnsembleModel train_snr_weighted(const SignalDataset& train_set, const SignalDataset& calibration,
                                 std::size_t members, const std::vector<nn::LayerSpec>& specs, Precision precision,
                                 const nn::TrainConfig& cfg, std::uint64_t master_seed, std::size_t workers = 1);

/// Writes `<stem>_member_<b>.model` files next to the JSON manifest.
void save_ensemble(const EnsembleModel& model, const std::filesystem::path& manifest_path);
EnsembleModel load_ensemble(const std::filesystem::path& manifest_path);

}  // namespace amcuq::ensemble

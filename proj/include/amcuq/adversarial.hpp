#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amcuq/ensemble.hpp"
#include "amcuq/frame.hpp"
#include "amcuq/nncore.hpp"
#include "amcuq/uqmetrics.hpp"

namespace amcuq::adv {

/// PNR of an all-zero perturbation.
inline constexpr double kNoPerturbation = -std::numeric_limits<double>::infinity();

/// Model whose gradient crafts the perturbation: one ensemble member, or the
/// attacked standalone model itself.
struct Surrogate {
  enum class Kind { member, standalone };
  Kind kind = Kind::member;
  std::size_t member = 0;

  std::string to_string() const;
  static Surrogate parse(const std::string& s);
};

struct AttackConfig {
  /// l-infinity bound of delta; used when target_pnr_db is empty.
  double epsilon = 0.0;
  /// When set, epsilon is solved per SNR slice to hit this PNR.
  std::optional<double> target_pnr_db;
  Surrogate surrogate;

  void validate() const;
};

struct PerturbedFrame {
  IQFrame original;
  /// l x 2, row-major like IQFrame::samples.
  std::vector<double> delta;
  double realized_pnr_db = kNoPerturbation;

  std::vector<double> perturbed() const;
};

/// r' = r + eps * sign(grad_r L) with sign(0) = 0, gradient of the clipped
/// cross-entropy at the true label.
PerturbedFrame fgsm(nn::Network& surrogate, const IQFrame& frame, const OneHotLabel& label, double epsilon);
PerturbedFrame fgsm(const nn::ModelParams& surrogate, const IQFrame& frame, const OneHotLabel& label,
                    double epsilon);

/// 10 log10(E|delta|^2 / E|r|^2) + snr_db over matched sets; kNoPerturbation
/// when every delta is zero.
double pnr_db(std::span<const std::vector<double>> deltas, std::span<const IQFrame> frames, double snr_db);

/// Mean squared norm of the frames, E|r|^2.
double mean_power(std::span<const IQFrame> frames);

/// Epsilon whose full-support sign pattern gives the target PNR:
/// sqrt(E|r|^2 * 10^((target - snr) / 10) / (2 l)).
double epsilon_for_pnr(double target_pnr_db, double snr_db, std::span<const IQFrame> frames);

struct SliceAttack {
  double snr_db = 0.0;
  double epsilon = 0.0;
  double realized_pnr_db = kNoPerturbation;
};

struct AttackResult {
  std::vector<uq::ReportRow> rows;
  std::vector<SliceAttack> slices;
  /// Filled when requested; samples are rounded to f32.
  std::optional<SignalDataset> perturbed;
};

/// The frame-by-frame model that crafts perturbations for `attacked`.
const nn::ModelParams& surrogate_model(const ensemble::EnsembleModel& attacked, const Surrogate& s);

/// Crafts perturbations on the surrogate, scores the attacked system on the
/// perturbed test set and reports per SNR slice. Row pnr_db carries the
/// realized PNR of the slice.
AttackResult evaluate_under_attack(const ensemble::EnsembleModel& attacked, const SignalDataset& test_set,
                                   const AttackConfig& attack, const uq::ReportConfig& cfg,
                                   const std::string& name, std::size_t workers = 1, bool keep_perturbed = false);

}  // namespace amcuq::adv

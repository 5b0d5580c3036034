#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace amcuq {

/// Identity of a frame inside its generating dataset: the (scheme, SNR)
/// cell it was drawn for and its position within that cell.
struct FrameKey {
  std::uint32_t cell = 0;
  std::uint32_t index = 0;

  friend bool operator==(const FrameKey&, const FrameKey&) = default;
  friend auto operator<=>(const FrameKey&, const FrameKey&) = default;
};

/// One received frame as an l x 2 real matrix (row-major: I then Q per sample).
struct IQFrame {
  std::vector<float> samples;
  std::uint32_t scheme_index = 0;
  double snr_db = 0.0;
  FrameKey key;

  std::size_t length() const noexcept { return samples.size() / 2; }
  float in_phase(std::size_t k) const { return samples[2 * k]; }
  float quadrature(std::size_t k) const { return samples[2 * k + 1]; }

  friend bool operator==(const IQFrame&, const IQFrame&) = default;
};

/// Parameters of the attack that produced a perturbed dataset.
struct AttackProvenance {
  double epsilon = 0.0;
  std::optional<double> target_pnr_db;
  std::string surrogate;
  std::string label_mode = "true";

  friend bool operator==(const AttackProvenance&, const AttackProvenance&) = default;
};

struct SignalDataset {
  std::vector<IQFrame> frames;
  std::vector<std::string> class_names;
  std::size_t frame_length = 0;
  std::uint64_t seed = 0;
  std::optional<AttackProvenance> attack;

  std::size_t size() const noexcept { return frames.size(); }
  std::size_t num_classes() const noexcept { return class_names.size(); }
  bool empty() const noexcept { return frames.empty(); }

  /// Throws corrupt_header/shape_mismatch when the container invariants fail.
  void validate() const;

  friend bool operator==(const SignalDataset&, const SignalDataset&) = default;
};

struct SplitDataset {
  SignalDataset train;
  SignalDataset test;
};

/// Length-C one-hot probability vector.
class OneHotLabel {
 public:
  OneHotLabel(std::size_t index, std::size_t num_classes);

  std::size_t index() const noexcept { return index_; }
  std::size_t num_classes() const noexcept { return num_classes_; }
  double operator[](std::size_t j) const noexcept { return j == index_ ? 1.0 : 0.0; }
  std::vector<double> vector() const;

  friend bool operator==(const OneHotLabel&, const OneHotLabel&) = default;

 private:
  std::size_t index_;
  std::size_t num_classes_;
};

/// Widening copy of a stored frame into the double precision input buffer the
/// networks consume.
std::vector<double> to_input(const IQFrame& frame);

}  // namespace amcuq

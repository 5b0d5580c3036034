#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "amcuq/frame.hpp"

namespace amcuq::siggen {

using Complex = std::complex<double>;

/// A normalized digital constellation. Point i carries the bit group whose
/// MSB-first integer value is i.
struct ModulationScheme {
  std::string name;
  std::vector<Complex> constellation;
  unsigned bits_per_symbol = 0;

  /// Checks size, unit mean energy and distinctness.
  void validate() const;
};

/// Built-in schemes: OOK, BPSK, QPSK, 8PSK, 16PSK, 4ASK, 16QAM, 64QAM.
ModulationScheme scheme_by_name(const std::string& name);
std::vector<std::string> builtin_scheme_names();
std::vector<ModulationScheme> default_schemes();

enum class Fading { identity, rayleigh_iid };

Fading parse_fading(const std::string& name);
std::string to_string(Fading f);

struct ChannelConfig {
  double snr_db = 0.0;
  Fading fading = Fading::identity;
  std::uint64_t seed = 0;
};

/// Maps each group of bits_per_symbol bits (0/1 bytes) onto its point.
std::vector<Complex> modulate(std::span<const std::uint8_t> bits, const ModulationScheme& scheme);

/// r[k] = sqrt(rho) h[k] s[k] + n[k], n ~ CN(0, 1), rho = 10^(snr_db / 10).
std::vector<Complex> apply_channel(std::span<const Complex> symbols, const ChannelConfig& cfg);

/// l x 2 real matrix, row-major.
struct IqMatrix {
  std::size_t rows = 0;
  std::vector<double> data;

  double at(std::size_t r, std::size_t c) const { return data[2 * r + c]; }
};

IqMatrix to_iq_matrix(std::span<const Complex> r);
std::vector<Complex> from_iq_matrix(const IqMatrix& m);

/// Balanced dataset with frames_per_cell frames for every (scheme, SNR)
/// cell. Cell c = scheme_index * |snr_grid| + snr_index.
SignalDataset generate_frames(const std::vector<ModulationScheme>& schemes, const std::vector<double>& snr_grid,
                              std::size_t frames_per_cell, std::size_t frame_length, std::uint64_t seed,
                              Fading fading = Fading::identity);

}  // namespace amcuq::siggen

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "amcuq/frame.hpp"

namespace amcuq::dataset {

/// .sigset schema version written by save() and required by load().
inline constexpr int kSigsetVersion = 1;

/// Stratified split: every (scheme, SNR) cell contributes
/// round(n * test_fraction) frames to the test side, clamped to [1, n - 1].
SplitDataset split(const SignalDataset& ds, double test_fraction, std::uint64_t seed);

/// Writes the .sigset container: 8-byte magic, u64 LE manifest length,
/// JSON manifest, then little-endian f32 samples (frame-major, row-major).
void save(const SignalDataset& ds, const std::filesystem::path& path);
SignalDataset load(const std::filesystem::path& path);

/// Frames whose SNR tag equals snr_db exactly; metadata is preserved.
SignalDataset select_snr(const SignalDataset& ds, double snr_db);
/// Frames whose SNR tag is in the given set.
SignalDataset select_snrs(const SignalDataset& ds, const std::vector<double>& snrs);
/// Sorted distinct SNR tags.
std::vector<double> snr_values(const SignalDataset& ds);

std::vector<OneHotLabel> labels(const SignalDataset& ds);

}  // namespace amcuq::dataset

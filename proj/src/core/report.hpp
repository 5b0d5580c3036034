#pragma once

// Standalone SVG rendering of stored metric rows. Nothing here recomputes a
// metric; every value comes from the rows passed in.

#include <string>
#include <vector>

#include "amcuq/uqmetrics.hpp"

namespace amcuq::exp::svg {

/// Small multiples of every scalar metric against SNR, one line per model.
std::string metric_panels(const std::vector<uq::ReportRow>& rows, const std::string& title);

/// Split violins of CI width per SNR (correct left, incorrect right), one
/// panel per model.
std::string ci_width_violins(const std::vector<uq::ReportRow>& rows, const std::string& title);

/// Accuracy vs SNR under a fixed-PNR attack (solid) against clean (dashed).
std::string attack_over_snr(const std::vector<uq::ReportRow>& attacked, const std::vector<uq::ReportRow>& clean,
                            const std::string& title);

/// Accuracy vs realized PNR at one SNR, with clean accuracy as flat lines.
std::string attack_over_pnr(const std::vector<uq::ReportRow>& attacked, const std::vector<uq::ReportRow>& clean,
                            double snr_db, const std::string& title);

}  // namespace amcuq::exp::svg

#pragma once

#include <string>
#include <vector>

#include "promptcal/metrics.hpp"

namespace promptcal {

/// Comparison table, one row per report. Header:
/// method,ece,brier,valid,accuracy_all,high_conf_accuracy,avg_conf_incorrect,avg_conf_incorrect_std
std::string comparison_csv(const std::vector<CalibrationReport>& reports);

/// All reliability curves in one file: method,bin_lo,bin_hi,count,mean_conf,mean_acc.
std::string merged_curves_csv(const std::vector<CalibrationReport>& reports);

/// Self-contained SVG line plot of the reliability curves plus the diagonal.
std::string curves_svg(const std::vector<CalibrationReport>& reports);

/// Accepts a report file or a run directory (report.json, else the highest
/// eval_step_{n}.json). Throws IoError when nothing is found.
std::string resolve_report_path(const std::string& arg);

}  // namespace promptcal

#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "promptcal/types.hpp"

namespace promptcal {

/// The unit every metric aggregates over.
struct EvalRecord {
    std::string query_id;
    Prediction prediction = Prediction::invalid("", InvalidReason::Unparseable);
    int truth_index = 0;
};

struct ReliabilityBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    std::optional<double> mean_conf;  // absent when the bin is empty
    std::optional<double> mean_acc;
};

struct ConfStat {
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
};

struct CalibrationReport {
    static constexpr int kSchemaMajor = 1;
    static constexpr int kSchemaMinor = 0;

    std::string method;
    std::size_t n_total = 0;
    std::size_t n_valid = 0;
    std::optional<double> ece;    // absent only when there is no valid record
    std::optional<double> brier;  // likewise
    double accuracy_all = 0.0;    // invalid counted as incorrect
    std::optional<double> high_conf_accuracy;     // absent when the slice is empty
    std::optional<ConfStat> avg_conf_incorrect;   // over valid incorrect records
    std::vector<ReliabilityBin> bins;

    int n_bins = 10;
    double conf_threshold = 0.85;
    std::size_t extra_incorrect = 0;
    std::map<std::string, std::string> meta;  // e.g. std_kind, generation params
};

/// Bin assignment, frozen convention: first bin closed at 0 ([0, 1/n]), all
/// others left-open ((i/n, (i+1)/n]). A confidence of exactly 0.9 with ten
/// bins lands in (0.8, 0.9].
int bin_index(double confidence, int n_bins);

/// Expected calibration error over Valid records, equal-width bins.
/// Throws EmptyError if there is no valid record.
double ece(const std::vector<EvalRecord>& records, int n_bins = 10);

/// Mean squared gap between stated confidence and the 0/1 outcome, over Valid
/// records. Throws EmptyError if there is no valid record.
double brier(const std::vector<EvalRecord>& records);

/// (# valid and correct) / (n_total + extra_incorrect). Invalid records and
/// the extra denominator-only samples never count as correct.
/// Throws EmptyError on an empty record list.
double accuracy_all(const std::vector<EvalRecord>& records, std::size_t extra_incorrect = 0);

/// Per-bin (mean_conf, mean_acc, count) over Valid records; empty bins are
/// emitted with count 0 and absent means. Throws EmptyError if no valid record.
std::vector<ReliabilityBin> reliability_curve(const std::vector<EvalRecord>& records,
                                              int n_bins = 10);

/// Full report: all scalar metrics plus the high-confidence and
/// incorrect-answer slices. Empty slices are reported as absent, not 0.
CalibrationReport slice_report(const std::vector<EvalRecord>& records,
                               double conf_threshold = 0.85, int n_bins = 10,
                               std::size_t extra_incorrect = 0, const std::string& method = "");

// -- serialization ----------------------------------------------------------

std::string report_to_json(const CalibrationReport& report);
/// Rejects reports whose schema_version major differs from ours.
CalibrationReport report_from_json(const std::string& json);
void save_report(const CalibrationReport& report, const std::string& path);
CalibrationReport load_report(const std::string& path);

/// CSV with header `bin_lo,bin_hi,count,mean_conf,mean_acc`; absent means are
/// empty fields.
std::string reliability_csv(const std::vector<ReliabilityBin>& bins);

std::string records_to_jsonl(const std::vector<EvalRecord>& records);
std::vector<EvalRecord> records_from_jsonl(const std::string& jsonl);
void save_records(const std::vector<EvalRecord>& records, const std::string& path);
std::vector<EvalRecord> load_records(const std::string& path);

}  // namespace promptcal

#pragma once

#include "sloc/estimate.h"

#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace sloc {

struct Threshold {
    double meters = 0.0;
    double degrees = 0.0;
};

// Strictly increasing in both components.
using ThresholdSet = std::vector<Threshold>;

ThresholdSet outdoor_thresholds();  // (0.25 m, 2), (0.5 m, 5), (5 m, 10)
ThresholdSet indoor_thresholds();   // (0.1 m, 1), (0.25 m, 2), (1 m, 5)
// "outdoor" or "indoor"; throws kConfiguration otherwise.
ThresholdSet threshold_preset(const std::string &name);
void validate_thresholds(const ThresholdSet &t);

struct RecallReport {
    ThresholdSet thresholds;
    // Fraction in [0, 1] per threshold.
    std::vector<double> recall;
    std::size_t queries = 0;
    std::size_t failures = 0;
};

// A query counts as localized at (m, deg) when position error <= m and
// rotation error <= deg. Failed estimates count as not localized everywhere.
// Throws kMissingGroundTruth when an estimate has no ground truth.
RecallReport evaluate(std::span<const LocalizationEstimate> estimates, const std::map<std::string, Pose> &ground_truth,
                      const ThresholdSet &thresholds);

// Percentages with one decimal, e.g. "50.0 / 75.0 / 100.0".
std::string format_recall(const RecallReport &report);

// Estimates file: one line per query, sorted by name.
//   name OK qw qx qy qz tx ty tz inliers
//   name FAILED reason...
void write_estimates(std::ostream &os, std::span<const LocalizationEstimate> estimates);
std::vector<LocalizationEstimate> read_estimates(std::istream &is);

struct TimingRow {
    std::string stage;
    std::string unit;
    double mean_ms = 0.0;
};

// Mean runtimes of one method: the total per query, then one row per stage
// that occurred. Stages counted per query are averaged over the queries that
// ran them; other stages are averaged over their work units.
struct TimingTable {
    std::string method;
    double total_ms_per_query = 0.0;
    std::vector<TimingRow> rows;
};

TimingTable report_timings(const std::string &method, std::span<const LocalizationEstimate> estimates);
void write_timings_csv(std::ostream &os, std::span<const TimingTable> tables);
void write_timings_text(std::ostream &os, std::span<const TimingTable> tables);

} // namespace sloc

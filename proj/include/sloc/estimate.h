#pragma once

#include "sloc/types.h"

#include <chrono>
#include <string>
#include <vector>

namespace sloc {

// Wall time spent in one named stage, together with how many work units
// (pairs, points, samples, queries) it covered.
struct StageTiming {
    std::string name;
    std::string unit;
    double total_ms = 0.0;
    std::size_t units = 0;
};

struct LocalizationEstimate {
    std::string query;
    bool success = false;
    Pose pose;
    std::size_t inliers = 0;
    std::string failure_reason;
    std::vector<StageTiming> timings;
    // Wall time of the whole query including input loading.
    double total_ms = 0.0;
};

// One retrieved database image with its matches against the query.
struct RetrievedImage {
    std::string name;
    Pose pose;
    Camera camera;
    MatchSet matches;
};

// Everything a pipeline may use for one query: its intrinsics and the top-k
// retrieved database images.
struct QueryInput {
    std::string name;
    Camera camera;
    std::vector<RetrievedImage> retrieved;
};

// Sorts the retrieved images by name so that results do not depend on
// retrieval order.
std::vector<const RetrievedImage *> normalized_order(const QueryInput &input);

LocalizationEstimate failed_estimate(const std::string &query, const std::string &reason);

class StageClock {
  public:
    StageClock() : start_(std::chrono::steady_clock::now()) {}
    double elapsed_ms() const {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
    }

  private:
    std::chrono::steady_clock::time_point start_;
};

// Adds time and units to the stage `name`, creating it on first use.
void add_timing(std::vector<StageTiming> &timings, const std::string &name, const std::string &unit, double ms,
                std::size_t units);

} // namespace sloc

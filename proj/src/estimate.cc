#include "sloc/estimate.h"

#include <algorithm>

namespace sloc {

std::vector<const RetrievedImage *> normalized_order(const QueryInput &input) {
    std::vector<const RetrievedImage *> order;
    for (const RetrievedImage &r : input.retrieved)
        order.push_back(&r);
    std::stable_sort(order.begin(), order.end(),
                     [](const RetrievedImage *a, const RetrievedImage *b) { return a->name < b->name; });
    return order;
}

LocalizationEstimate failed_estimate(const std::string &query, const std::string &reason) {
    LocalizationEstimate e;
    e.query = query;
    e.failure_reason = reason;
    return e;
}

void add_timing(std::vector<StageTiming> &timings, const std::string &name, const std::string &unit, double ms,
                std::size_t units) {
    for (StageTiming &t : timings) {
        if (t.name == name) {
            t.total_ms += ms;
            t.units += units;
            return;
        }
    }
    timings.push_back({name, unit, ms, units});
}

} // namespace sloc

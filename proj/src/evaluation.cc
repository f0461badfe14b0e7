#include "sloc/evaluation.h"

#include "sloc/error.h"
#include "sloc/geometry.h"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace sloc {

ThresholdSet outdoor_thresholds() { return {{0.25, 2.0}, {0.5, 5.0}, {5.0, 10.0}}; }
ThresholdSet indoor_thresholds() { return {{0.1, 1.0}, {0.25, 2.0}, {1.0, 5.0}}; }

ThresholdSet threshold_preset(const std::string &name) {
    if (name == "outdoor")
        return outdoor_thresholds();
    if (name == "indoor")
        return indoor_thresholds();
    throw Error(ErrorCode::kConfiguration, "unknown threshold preset " + name);
}

void validate_thresholds(const ThresholdSet &t) {
    if (t.empty())
        throw Error(ErrorCode::kConfiguration, "empty threshold set");
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (!(t[i].meters > 0.0) || !(t[i].degrees > 0.0))
            throw Error(ErrorCode::kConfiguration, "thresholds must be positive");
        if (i > 0 && !(t[i].meters > t[i - 1].meters && t[i].degrees > t[i - 1].degrees))
            throw Error(ErrorCode::kConfiguration, "thresholds must increase strictly in both components");
    }
}

RecallReport evaluate(std::span<const LocalizationEstimate> estimates, const std::map<std::string, Pose> &ground_truth,
                      const ThresholdSet &thresholds) {
    validate_thresholds(thresholds);
    RecallReport report;
    report.thresholds = thresholds;
    report.queries = estimates.size();
    std::vector<std::size_t> hits(thresholds.size(), 0);
    for (const LocalizationEstimate &e : estimates) {
        const auto gt = ground_truth.find(e.query);
        if (gt == ground_truth.end())
            throw Error(ErrorCode::kMissingGroundTruth, "no ground truth for query " + e.query);
        if (!e.success) {
            ++report.failures;
            continue;
        }
        const double pos = position_error_m(e.pose, gt->second);
        const double rot = rotation_angle_deg(e.pose.R, gt->second.R);
        for (std::size_t k = 0; k < thresholds.size(); ++k)
            if (pos <= thresholds[k].meters && rot <= thresholds[k].degrees)
                ++hits[k];
    }
    for (std::size_t k = 0; k < thresholds.size(); ++k)
        report.recall.push_back(report.queries ? static_cast<double>(hits[k]) / static_cast<double>(report.queries)
                                               : 0.0);
    return report;
}

std::string format_recall(const RecallReport &report) {
    std::string out;
    char buf[32];
    for (std::size_t k = 0; k < report.recall.size(); ++k) {
        std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * report.recall[k]);
        out += (k ? " / " : "") + std::string(buf);
    }
    return out;
}

void write_estimates(std::ostream &os, std::span<const LocalizationEstimate> estimates) {
    std::vector<const LocalizationEstimate *> sorted;
    for (const LocalizationEstimate &e : estimates)
        sorted.push_back(&e);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const LocalizationEstimate *a, const LocalizationEstimate *b) { return a->query < b->query; });
    char buf[64];
    for (const LocalizationEstimate *e : sorted) {
        os << e->query;
        if (e->success) {
            const Vec4 q = quaternion_from_rotation(e->pose.R);
            os << " OK";
            for (double v : {q(0), q(1), q(2), q(3), e->pose.t.x(), e->pose.t.y(), e->pose.t.z()}) {
                std::snprintf(buf, sizeof(buf), " %.17g", v);
                os << buf;
            }
            os << ' ' << e->inliers << '\n';
        } else {
            std::string reason = e->failure_reason.empty() ? "unknown" : e->failure_reason;
            std::replace(reason.begin(), reason.end(), '\n', ' ');
            os << " FAILED " << reason << '\n';
        }
    }
}

std::vector<LocalizationEstimate> read_estimates(std::istream &is) {
    std::vector<LocalizationEstimate> out;
    std::string line;
    int number = 0;
    while (std::getline(is, line)) {
        ++number;
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream ss(line);
        LocalizationEstimate e;
        std::string status;
        ss >> e.query >> status;
        if (status == "OK") {
            double v[7];
            for (double &x : v)
                ss >> x;
            ss >> e.inliers;
            if (!ss)
                throw Error(ErrorCode::kParse, "estimates:" + std::to_string(number) + ": malformed pose line");
            e.pose = Pose(rotation_from_quaternion(Vec4(v[0], v[1], v[2], v[3])), Vec3(v[4], v[5], v[6]));
            e.success = true;
        } else if (status == "FAILED") {
            std::getline(ss >> std::ws, e.failure_reason);
        } else {
            throw Error(ErrorCode::kParse, "estimates:" + std::to_string(number) + ": expected OK or FAILED");
        }
        out.push_back(std::move(e));
    }
    return out;
}

TimingTable report_timings(const std::string &method, std::span<const LocalizationEstimate> estimates) {
    TimingTable table;
    table.method = method;
    if (estimates.empty())
        return table;
    struct Acc {
        std::string unit;
        double ms = 0.0;
        std::size_t units = 0, queries = 0;
    };
    std::vector<std::pair<std::string, Acc>> stages;
    double total = 0.0;
    for (const LocalizationEstimate &e : estimates) {
        total += e.total_ms;
        for (const StageTiming &t : e.timings) {
            auto it = std::find_if(stages.begin(), stages.end(), [&](const auto &s) { return s.first == t.name; });
            if (it == stages.end()) {
                stages.push_back({t.name, Acc{t.unit, 0.0, 0, 0}});
                it = stages.end() - 1;
            }
            it->second.ms += t.total_ms;
            it->second.units += t.units;
            ++it->second.queries;
        }
    }
    table.total_ms_per_query = total / static_cast<double>(estimates.size());
    for (const auto &[name, acc] : stages) {
        const std::size_t denom = acc.unit == "query" ? acc.queries : acc.units;
        if (denom == 0)
            continue;
        table.rows.push_back({name, acc.unit, acc.ms / static_cast<double>(denom)});
    }
    return table;
}

void write_timings_csv(std::ostream &os, std::span<const TimingTable> tables) {
    os << "method,stage,mean_ms,unit\n";
    char buf[64];
    for (const TimingTable &t : tables) {
        std::snprintf(buf, sizeof(buf), "%.3f", t.total_ms_per_query);
        os << t.method << ",total," << buf << ",query\n";
        for (const TimingRow &r : t.rows) {
            std::snprintf(buf, sizeof(buf), "%.3f", r.mean_ms);
            os << t.method << ",\"" << r.stage << "\"," << buf << ',' << r.unit << '\n';
        }
    }
}

void write_timings_text(std::ostream &os, std::span<const TimingTable> tables) {
    std::size_t width = 0;
    for (const TimingTable &t : tables) {
        width = std::max(width, t.method.size());
        for (const TimingRow &r : t.rows)
            width = std::max(width, r.stage.size() + 2);
    }
    char buf[64];
    for (const TimingTable &t : tables) {
        std::snprintf(buf, sizeof(buf), "%12.2f ms", t.total_ms_per_query);
        os << std::left << std::setw(static_cast<int>(width)) << t.method << buf << " / query\n";
        for (const TimingRow &r : t.rows) {
            std::snprintf(buf, sizeof(buf), "%12.2f ms", r.mean_ms);
            os << "  " << std::left << std::setw(static_cast<int>(width) - 2) << r.stage << buf << " / " << r.unit
               << '\n';
        }
    }
}

} // namespace sloc

#include "sloc/config.h"

#include "sloc/error.h"

#include <cmath>
#include <fstream>
#include <sstream>

namespace sloc {

namespace {

std::string trim(const std::string &s) {
    const auto a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

double to_double(const std::string &key, const std::string &v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used == v.size() && std::isfinite(d))
            return d;
    } catch (...) {
    }
    throw Error(ErrorCode::kConfiguration, key + ": expected a number, got '" + v + "'");
}

std::size_t to_count(const std::string &key, const std::string &v) {
    try {
        std::size_t used = 0;
        const unsigned long long n = std::stoull(v, &used);
        if (used == v.size() && v.find('-') == std::string::npos)
            return static_cast<std::size_t>(n);
    } catch (...) {
    }
    throw Error(ErrorCode::kConfiguration, key + ": expected a non-negative integer, got '" + v + "'");
}

bool to_bool(const std::string &key, const std::string &v) {
    if (v == "true" || v == "1")
        return true;
    if (v == "false" || v == "0")
        return false;
    throw Error(ErrorCode::kConfiguration, key + ": expected true or false, got '" + v + "'");
}

std::string unquote(const std::string &v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"')
        return v.substr(1, v.size() - 2);
    return v;
}

} // namespace

void apply_config_value(PipelineConfig &cfg, const std::string &key, const std::string &raw) {
    const std::string value = unquote(raw);
    if (key == "ransac.min_iterations")
        cfg.ransac.min_iterations = to_count(key, value);
    else if (key == "ransac.max_iterations")
        cfg.ransac.max_iterations = to_count(key, value);
    else if (key == "ransac.threshold_px")
        cfg.ransac.inlier_threshold = to_double(key, value);
    else if (key == "ransac.confidence")
        cfg.ransac.confidence = to_double(key, value);
    else if (key == "ransac.lo_max_rounds")
        cfg.ransac.lo_max_rounds = to_count(key, value);
    else if (key == "ransac.min_significance")
        cfg.ransac.min_significance = to_double(key, value);
    else if (key == "ransac.scoring") {
        if (value == "msac")
            cfg.ransac.scoring = RansacScoring::kTruncatedSquared;
        else if (value == "inliers")
            cfg.ransac.scoring = RansacScoring::kInlierCount;
        else
            throw Error(ErrorCode::kConfiguration, key + ": expected msac or inliers");
    } else if (key == "features") {
        if (value == "sparse")
            cfg.features = FeatureFamily::kSparse;
        else if (value == "dense")
            cfg.features = FeatureFamily::kDense;
        else
            throw Error(ErrorCode::kConfiguration, key + ": expected sparse or dense");
    } else if (key == "tracks.dense_radius_px")
        cfg.dense_radius_px = to_double(key, value);
    else if (key == "triangulation.sparse_px")
        cfg.sparse_triangulation_px = to_double(key, value);
    else if (key == "triangulation.dense_px")
        cfg.dense_triangulation_px = to_double(key, value);
    else if (key == "fusion.robust")
        cfg.fusion.robust = to_bool(key, value);
    else if (key == "fusion.max_residual_deg")
        cfg.fusion.max_residual_deg = to_double(key, value);
    else if (key == "fusion.weights") {
        if (value == "inliers")
            cfg.inlier_weights = true;
        else if (value == "uniform")
            cfg.inlier_weights = false;
        else
            throw Error(ErrorCode::kConfiguration, key + ": expected inliers or uniform");
    } else if (key == "select.threshold_px")
        cfg.select.epipolar_threshold_px = to_double(key, value);
    else if (key == "select.min_correspondences")
        cfg.select.min_correspondences = to_count(key, value);
    else if (key == "evaluation.thresholds") {
        if (value != "outdoor" && value != "indoor")
            throw Error(ErrorCode::kConfiguration, key + ": expected outdoor or indoor");
        cfg.thresholds = value;
    } else
        throw Error(ErrorCode::kConfiguration, "unknown configuration key " + key);

    if (key.rfind("ransac.", 0) == 0)
        cfg.ransac.validate();
    for (double v : {cfg.dense_radius_px, cfg.sparse_triangulation_px, cfg.dense_triangulation_px,
                     cfg.fusion.max_residual_deg, cfg.select.epipolar_threshold_px})
        if (!(v > 0.0))
            throw Error(ErrorCode::kConfiguration, key + ": value must be positive");
}

PipelineConfig parse_config(std::istream &in, const std::string &source) {
    PipelineConfig cfg;
    std::string line, section;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        const auto hash = line.find('#');
        if (hash != std::string::npos)
            line = line.substr(0, hash);
        line = trim(line);
        if (line.empty())
            continue;
        auto where = [&] { return source + ":" + std::to_string(number) + ": "; };
        if (line.front() == '[') {
            if (line.back() != ']')
                throw Error(ErrorCode::kConfiguration, where() + "malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(ErrorCode::kConfiguration, where() + "expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string full = section.empty() ? key : section + "." + key;
        try {
            apply_config_value(cfg, full, trim(line.substr(eq + 1)));
        } catch (const Error &e) {
            throw Error(ErrorCode::kConfiguration, where() + e.what());
        }
    }
    return cfg;
}

PipelineConfig load_config(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::kConfiguration, path.string() + ": cannot open configuration file");
    return parse_config(in, path.string());
}

} // namespace sloc

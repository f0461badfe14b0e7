#pragma once

#include "sloc/alignment.h"
#include "sloc/local_sfm.h"
#include "sloc/pose_fusion.h"
#include "sloc/ransac.h"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace sloc {

// All tunables of the pipelines. Loaded from a key = value file; `[section]`
// lines prefix the following keys with "section.".
struct PipelineConfig {
    RansacConfig ransac;
    FeatureFamily features = FeatureFamily::kSparse;
    double dense_radius_px = 5.0;
    double sparse_triangulation_px = 2.0;
    double dense_triangulation_px = 8.0;
    FusionOptions fusion;
    bool inlier_weights = true;
    SelectOptions select;
    // "outdoor" or "indoor" threshold preset for evaluation.
    std::string thresholds = "outdoor";
};

// Throws Error(kConfiguration) on unknown keys or malformed values.
void apply_config_value(PipelineConfig &cfg, const std::string &key, const std::string &value);
PipelineConfig parse_config(std::istream &in, const std::string &source = "config");
PipelineConfig load_config(const std::filesystem::path &path);

} // namespace sloc

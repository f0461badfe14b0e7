#pragma once

#include "sloc/dataset.h"
#include "sloc/estimate.h"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace sloc {

struct SynthConfig {
    int n_points = 100;
    int n_database = 6;
    int n_queries = 20;
    // Gaussian pixel noise (sigma), fixed per (image, point) so one point has
    // the same query pixel in every pair.
    double noise_px = 0.0;
    // Fraction of matches whose database pixel is replaced by a random pixel.
    double outlier_fraction = 0.0;
    // Multiplicative depth noise (sigma, relative).
    double depth_noise = 0.0;
    // Edge length of the point box in meters; cameras sit about one edge
    // length from its center.
    double scene_scale = 10.0;
    std::uint64_t seed = 0;
};

struct SynthScene {
    std::vector<Vec3> points;
    std::map<std::string, Pose> database_poses;
    std::map<std::string, Pose> query_poses;
    std::map<std::string, Camera> cameras;
    std::map<std::string, std::vector<RetrievalEntry>> retrieval;
    // Keyed by (query, database).
    std::map<std::pair<std::string, std::string>, MatchSet> matches;
    // Exact relative poses of every (query, database) pair.
    std::vector<ExternalRelativePose> relative_poses;
    // One local reconstruction per query (query plus its retrieved images) in
    // a random similarity frame.
    std::vector<LocalSubset> local_subsets;
};

// Throws kInvalidArgument for n_points < 20 or n_database < 3.
SynthScene synth_scene(const SynthConfig &cfg);

// In-memory equivalent of loading the written dataset for one query.
QueryInput make_query_input(const SynthScene &scene, const std::string &query, std::size_t top_k = 10);

// Writes manifest.txt and all referenced files into `dir` (created if
// needed). Depths travel inside the match files.
void write_synth_dataset(const SynthScene &scene, const std::filesystem::path &dir);

} // namespace sloc

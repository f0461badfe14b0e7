#pragma once

#include "sloc/types.h"

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sloc {

struct RetrievalEntry {
    std::string database;
    double score = 0.0;
};

// Externally supplied relative pose: R maps database-camera coordinates into
// query-camera coordinates, `direction` is the unit translation.
struct ExternalRelativePose {
    std::string query;
    std::string database;
    Rotation R;
    Vec3 direction;
};

// Poses of one subset reconstruction in its own local frame.
struct LocalSubset {
    std::string id;
    std::map<std::string, Pose> poses;
};

struct Dataset {
    std::filesystem::path root;
    std::map<std::string, Pose> database_poses;
    // Intrinsics of database and query images.
    std::map<std::string, Camera> cameras;
    // Per query, in file order (descending score).
    std::map<std::string, std::vector<RetrievalEntry>> retrieval;
    std::filesystem::path matches_dir;
    // Directory of PFM depth maps, unless depths travel inside the match files.
    std::optional<std::filesystem::path> depths_dir;
    bool embedded_depths = false;
    std::map<std::string, Pose> query_poses;
    std::map<std::string, std::vector<ExternalRelativePose>> relative_poses;
    std::vector<LocalSubset> local_subsets;

    bool has_depths() const { return embedded_depths || depths_dir.has_value(); }
    std::vector<std::string> queries() const;
};

// Reads the manifest (key = value lines; paths relative to the manifest) and
// every file it references except the per-pair matches, which are read on
// demand by load_matches. All problems found are reported together in one
// Error whose code is that of the first problem.
Dataset load_dataset(const std::filesystem::path &manifest);

// Matches of one (query, database) pair, with depths filled in from depth maps
// when the dataset has them. Throws kParse / kMissingReference.
MatchSet load_matches(const Dataset &ds, const std::string &query, const std::string &database);

std::filesystem::path match_file_name(const std::string &query, const std::string &database);

// Binary match file: "FLM1", u32 count, u32 flags (bit 0 depths, bit 1 query
// keypoint ids), count x (xq yq xd yd) float32, then optionally count x
// (depth_query depth_database) float32 and count x u32 ids. Little endian.
void write_match_file(const std::filesystem::path &path, const MatchSet &set);
MatchSet read_match_file(const std::filesystem::path &path);

// Single-channel little-endian PFM.
struct DepthMap {
    int width = 0;
    int height = 0;
    std::vector<float> values;  // row-major, top row first

    // Nearest-pixel lookup; NaN outside the map.
    double at(const Vec2 &pixel) const;
};
void write_pfm(const std::filesystem::path &path, const DepthMap &map);
DepthMap read_pfm(const std::filesystem::path &path);

// Text writers used by the synthetic generator and tests.
void write_poses(std::ostream &os, const std::map<std::string, Pose> &poses);
void write_intrinsics(std::ostream &os, const std::map<std::string, Camera> &cameras);
void write_retrieval(std::ostream &os, const std::map<std::string, std::vector<RetrievalEntry>> &retrieval);

std::map<std::string, Pose> read_poses(const std::filesystem::path &path);

} // namespace sloc

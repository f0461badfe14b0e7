#pragma once

#include "sloc/estimate.h"
#include "sloc/ransac.h"
#include "sloc/solvers.h"

#include <optional>
#include <span>
#include <vector>

namespace sloc {

struct TrackObservation {
    // Index of the database image within the match sets handed to the track
    // builder.
    std::size_t database = 0;
    Vec2 pixel;
};

// Query keypoint with its observations in the database images (at most one
// per image).
struct Track {
    Vec2 query_pixel;
    std::vector<TrackObservation> observations;
    std::optional<Vec3> point;
    // One entry per observation once triangulated.
    std::vector<char> inlier_mask;
};

// One track per query keypoint. Keypoints are identified by
// `query_keypoint_ids` when present and by the exact query pixel otherwise.
// Several matches of one keypoint into the same image keep the
// lexicographically smallest database pixel.
std::vector<Track> build_tracks_sparse(std::span<const MatchSet> sets);

// Tracks for dense matchers, whose query pixels differ between pairs. For
// every two database images, query pixels that are mutual nearest neighbours
// within `radius` px are linked; links are merged in order of increasing
// distance unless the merge would put two observations of one image in the
// same track. The track keypoint is the centroid of its query pixels.
std::vector<Track> build_tracks_dense(std::span<const MatchSet> sets, double radius = 5.0);

// Exhaustive two-view hypotheses over all observation pairs; keeps the point
// with most observations within `threshold_px`, re-triangulated from its
// inliers when that keeps the inlier set. Returns false (point unset) when no
// hypothesis has two inliers.
bool triangulate_track_all(Track &track, std::span<const Pose> poses, std::span<const Camera> cameras,
                           double threshold_px);

enum class FeatureFamily { kSparse, kDense };

struct LocalSfmOptions {
    RansacConfig ransac;
    FeatureFamily features = FeatureFamily::kSparse;
    double dense_radius_px = 5.0;
    // Triangulation thresholds per feature family.
    double sparse_triangulation_px = 2.0;
    double dense_triangulation_px = 8.0;

    double triangulation_threshold() const {
        return features == FeatureFamily::kSparse ? sparse_triangulation_px : dense_triangulation_px;
    }
};

// Robust absolute pose from 2D-3D matches with P3P and reprojection-error
// local optimization.
struct AbsolutePoseEstimate {
    Pose pose;
    RansacScore score;
    std::vector<char> inlier_mask;
    // See support_significance.
    double significance = 0.0;
};
std::optional<AbsolutePoseEstimate> estimate_absolute_pose(std::span<const Vec2> pixels, std::span<const Vec3> points,
                                                           const Camera &camera, const RansacConfig &cfg);

LocalizationEstimate localize_local_all(const QueryInput &input, const LocalSfmOptions &opt);
LocalizationEstimate localize_local_pairs(const QueryInput &input, const LocalSfmOptions &opt);

} // namespace sloc

#pragma once

#include "sloc/estimate.h"
#include "sloc/ransac.h"
#include "sloc/solvers.h"

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sloc {

enum class RelativeSource { kSolver, kExternal };

// Relative pose of the query w.r.t. one database image: R maps database-camera
// coordinates into query-camera coordinates and `direction` is the unit
// translation of that relative pose, in the query frame.
struct RelativeObservation {
    std::string database;
    Pose database_pose;
    Rotation R = Rotation::Identity();
    Vec3 direction = Vec3::UnitZ();
    double weight = 1.0;
    RelativeSource source = RelativeSource::kSolver;
};

// Chordal L2 mean: the rotation closest in Frobenius norm to the weighted sum.
// Throws kDegenerateAverage when the weighted sum is (near) rank deficient.
Rotation average_rotations(std::span<const Rotation> rotations, std::span<const double> weights);

// World-frame ray from a database camera center towards the query center.
struct CenterRay {
    Vec3 origin;
    Vec3 direction;
    double weight = 1.0;
};

// Least-squares point closest to all rays. Throws kCollinearDirections when
// the normal matrix is ill conditioned (condition number > 1e12).
Vec3 triangulate_center(std::span<const CenterRay> rays);

// Absolute query rotation implied by one observation.
Rotation absolute_rotation(const RelativeObservation &obs);
// World-frame direction from the database center towards the query, given
// the query rotation.
Vec3 world_direction(const RelativeObservation &obs, const Rotation &query_R);

struct FusionOptions {
    bool robust = true;
    double max_residual_deg = 5.0;
};

struct FusionResult {
    Pose pose;
    // Per observation (in the sorted order of `used`): kept by the robust loop.
    std::vector<std::string> used;
    std::vector<std::string> dropped;
    // Number of rotation averaging + center triangulation solves.
    std::size_t solves = 0;
};

// Rotation averaging followed by center triangulation. Observations are
// ordered by database name first, so the result does not depend on input
// order. With `robust`, the observation with the largest residual (max of
// rotation and direction angle) is dropped until all residuals are below
// max_residual_deg or only two remain.
FusionResult fuse_relative_poses(std::vector<RelativeObservation> observations, const FusionOptions &opt = {});

enum class EssentialSolver { kFivePoint, kThreePointDepth };

// Robust relative pose database -> query from one match set. Residuals are
// Sampson distances in pixels. The returned pose has a unit translation.
struct RelativePoseEstimate {
    Pose relative;
    std::size_t inliers = 0;
    std::vector<char> inlier_mask;
    // See support_significance.
    double significance = 0.0;
};

std::optional<RelativePoseEstimate> estimate_relative_pose(const MatchSet &matches, const Camera &query_camera,
                                                           const Camera &database_camera, EssentialSolver solver,
                                                           const RansacConfig &cfg);

struct EssmatOptions {
    RansacConfig ransac;
    FusionOptions fusion;
    // Weight observations by inlier count; uniform weights otherwise.
    bool inlier_weights = true;
};

// Ess. mat. pipeline: one relative pose per retrieved image, then fusion.
LocalizationEstimate localize_essmat(const QueryInput &input, EssentialSolver solver, const EssmatOptions &opt);

// Fusion of externally supplied relative poses (e.g. from a pose regressor).
LocalizationEstimate localize_fuse_external(const std::string &query, std::vector<RelativeObservation> observations,
                                            const FusionOptions &opt);

} // namespace sloc

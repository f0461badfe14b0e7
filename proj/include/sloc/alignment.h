#pragma once

#include "sloc/geometry.h"

#include <map>
#include <span>
#include <string>
#include <vector>

namespace sloc {

// x -> scale * R * x + t
struct SimilarityTransform {
    double scale = 1.0;
    Rotation R = Rotation::Identity();
    Vec3 t = Vec3::Zero();

    Vec3 apply(const Vec3 &x) const { return scale * (R * x) + t; }
    SimilarityTransform inverse() const;
    // Maps a camera pose expressed in the source frame into the target frame.
    Pose transform_pose(const Pose &pose) const;
};

SimilarityTransform operator*(const SimilarityTransform &a, const SimilarityTransform &b);

// Least-squares similarity (or rigid, when with_scale is false) transform
// minimizing sum ||dst - (s R src + t)||^2. Throws kDegenerateConfiguration
// when the centered source points have rank < 2.
SimilarityTransform umeyama(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale);

// Camera poses of a local reconstruction in an arbitrary frame, plus the world
// poses of the images that have them.
struct LocalReconstruction {
    std::map<std::string, Pose> local_poses;
    std::map<std::string, Pose> world_poses;
};

struct AlignedReconstruction {
    std::map<std::string, Pose> world_poses;
    SimilarityTransform transform;
};

// Two-stage alignment: camera centers first (fixes scale), then centers plus
// one virtual point per known image one length unit along its optical axis.
AlignedReconstruction align_reconstruction(const LocalReconstruction &rec);

// Correspondences of the query with one database image, for epipolar scoring.
struct HypothesisEvidence {
    Pose database_pose;
    Camera database_camera;
    std::vector<Correspondence> matches;
};

struct SelectOptions {
    double epipolar_threshold_px = 12.0;
    // Images need strictly more matches than this to take part in scoring.
    std::size_t min_correspondences = 50;
};

struct HypothesisScore {
    std::size_t index = 0;
    std::size_t inliers = 0;
    double truncated_cost = 0.0;
};

// Picks the hypothesis with the most generalized epipolar inliers; ties go to
// the smaller truncated residual sum, then to the earlier hypothesis.
HypothesisScore select_hypothesis(std::span<const Pose> hypotheses, const Camera &query_camera,
                                  std::span<const HypothesisEvidence> evidence, const SelectOptions &opt = {});

} // namespace sloc

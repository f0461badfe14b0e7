#pragma once

#include "sloc/geometry.h"

#include <span>
#include <vector>

namespace sloc {

// Relative pose with the translation split into a unit direction and a
// positive magnitude.
struct ScaledRelativePose {
    Rotation R = Rotation::Identity();
    Vec3 direction = Vec3::UnitZ();
    double scale = 1.0;

    Pose pose() const { return Pose(R, scale * direction); }
};

struct DepthMatch {
    Vec2 x1;  // normalized, image 1
    Vec2 x2;  // normalized, image 2
    // z-depths (camera-frame z), so the lifted point is d * (x, 1).
    double d1 = 0.0;
    double d2 = 0.0;
};

struct WorldMatch {
    Vec2 x;   // normalized image point
    Vec3 X;   // world point
};

// A ray in the world frame expressed through a camera bearing and the pose of
// that camera.
struct Ray {
    Bearing bearing;
    Pose pose;
};

// Up to 10 essential matrices (unit Frobenius norm) consistent with 5
// correspondences. Throws kDegenerateSample when the 5x9 epipolar design
// matrix has rank < 5.
std::vector<EssentialMatrix> essential_5pt(std::span<const NormalizedMatch> matches);

enum class DepthModel {
    // One unknown relative scale between the two depth channels.
    kScaledRigid,
    // Additionally one unknown depth shift per image; needs 4 correspondences.
    kScaleShift,
};

// Relative pose from correspondences lifted to 3D with per-point depths:
// P2 = R * (s * P1) + t. The translation is normalized into `direction` and
// `scale` holds the relative depth scale s (depths of image 1 multiplied by k
// divide it by k).
std::vector<ScaledRelativePose> essential_3pt_depth(std::span<const DepthMatch> matches,
                                                    DepthModel model = DepthModel::kScaledRigid);

// Absolute pose from 3 2D-3D correspondences; at most 4 candidates.
std::vector<Pose> p3p(std::span<const WorldMatch> matches);

// Recovers the magnitude of the query translation from one extra
// correspondence with a second posed database image B. `rel` maps database-A
// camera coordinates into query camera coordinates and must have a non-zero
// translation, whose norm is ignored. `x_query`, `x_b` are normalized points.
ScaledRelativePose scale_from_one_point(const Pose &rel, const Vec2 &x_query, const Vec2 &x_b, const Pose &pose_a,
                                        const Pose &pose_b);

struct TriangulationOptions {
    double min_ray_angle_deg = 0.05;
};

// Midpoint of the common perpendicular of two rays.
Vec3 triangulate_2view(const Bearing &b1, const Pose &pose1, const Bearing &b2, const Pose &pose2,
                       const TriangulationOptions &opt = {});

// Linear least-squares point minimizing the summed squared perpendicular
// distance to all rays.
Vec3 triangulate_nview(std::span<const Ray> rays, const TriangulationOptions &opt = {});

} // namespace sloc

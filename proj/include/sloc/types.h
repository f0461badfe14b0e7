#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <string>
#include <vector>

namespace sloc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;

// Orthonormal 3x3 matrix with determinant +1.
using Rotation = Mat3;
// Unit-norm ray direction in a camera frame.
using Bearing = Vec3;

bool is_rotation(const Mat3 &R, double tol = 1e-9);

// Rigid world->camera transform: x_cam = R * x_world + t.
struct Pose {
    Rotation R = Rotation::Identity();
    Vec3 t = Vec3::Zero();

    Pose() = default;
    Pose(const Rotation &rotation, const Vec3 &translation) : R(rotation), t(translation) {}

    static Pose from_center(const Rotation &rotation, const Vec3 &center) { return Pose(rotation, -rotation * center); }

    Vec3 center() const { return -R.transpose() * t; }
    Vec3 apply(const Vec3 &X) const { return R * X + t; }
    // World-frame direction of the optical axis.
    Vec3 optical_axis() const { return R.row(2).transpose(); }
    Pose inverse() const { return Pose(R.transpose(), -R.transpose() * t); }
};

// (a * b) maps through b first, then a.
inline Pose operator*(const Pose &a, const Pose &b) { return Pose(a.R * b.R, a.R * b.t + a.t); }

// Relative pose of `to` with respect to `from`: maps `from`-camera coordinates
// into `to`-camera coordinates.
inline Pose relative_pose(const Pose &from, const Pose &to) { return to * from.inverse(); }

// Undistorted pinhole camera.
struct Camera {
    double fx = 1.0;
    double fy = 1.0;
    double cx = 0.5;
    double cy = 0.5;
    int width = 1;
    int height = 1;

    // Geometric mean focal length, used to move pixel thresholds into the
    // normalized image plane.
    double focal() const;
    bool valid() const;
    // Throws Error(kInvalidArgument) if the intrinsics violate the pinhole
    // invariants.
    void validate() const;
    bool contains(const Vec2 &p) const;

    Vec2 normalize(const Vec2 &p) const { return Vec2((p.x() - cx) / fx, (p.y() - cy) / fy); }
    Vec2 denormalize(const Vec2 &x) const { return Vec2(fx * x.x() + cx, fy * x.y() + cy); }
};

struct Correspondence {
    Vec2 query;
    Vec2 database;
};

// Per-correspondence depths. A non-positive or non-finite value marks the
// depth invalid.
struct DepthPair {
    double query = 0.0;
    double database = 0.0;

    bool valid() const;
};

struct MatchSet {
    std::string query;
    std::string database;
    std::vector<Correspondence> matches;
    // Either empty or one entry per match.
    std::vector<DepthPair> depths;
    // Either empty or one entry per match; stable ids of the query keypoints
    // (sparse features only).
    std::vector<int> query_keypoint_ids;

    std::size_t size() const { return matches.size(); }
    bool has_depths() const { return !depths.empty(); }
};

// Quaternion I/O helpers, Hamilton convention, (w, x, y, z) order.
Rotation rotation_from_quaternion(const Vec4 &wxyz);
Vec4 quaternion_from_rotation(const Rotation &R);

} // namespace sloc

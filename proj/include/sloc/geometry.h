#pragma once

#include "sloc/types.h"

#include <array>
#include <optional>
#include <span>

namespace sloc {

using EssentialMatrix = Mat3;

// Point in the z=1 normalized image plane, paired across two views.
struct NormalizedMatch {
    Vec2 x1;
    Vec2 x2;
};

Mat3 skew(const Vec3 &v);

// Rotation by `angle_rad` about `axis` (need not be normalized).
Rotation axis_angle(const Vec3 &axis, double angle_rad);

Bearing pixel_to_bearing(const Vec2 &p, const Camera &cam);
Vec2 bearing_to_pixel(const Bearing &b, const Camera &cam);

// Pixel coordinates of a world point, or nullopt when the point is not in
// front of the camera (camera-frame z <= 1e-9).
std::optional<Vec2> project(const Vec3 &X, const Pose &pose, const Camera &cam);

double rotation_angle_deg(const Rotation &Ra, const Rotation &Rb);
double position_error_m(const Pose &pa, const Pose &pb);
// Angle between two (not necessarily unit) vectors in degrees.
double direction_angle_deg(const Vec3 &a, const Vec3 &b);

// Sampson approximation of the squared geometric error of (x1, x2) w.r.t. E,
// where x2^T E x1 = 0. Returns +inf when the point sits on an epipole.
double sampson_error(const EssentialMatrix &E, const Vec2 &x1, const Vec2 &x2);

// Sampson residual of a correspondence, converted from the normalized image
// plane to pixels through `pixel_scale` (geometric mean focal length of the
// two cameras). x_query^T E x_database = 0 for the E of the relative pose
// database -> query.
double sampson_px(const EssentialMatrix &E, const Vec2 &x_database, const Vec2 &x_query, double pixel_scale);

// E = [t]x R for the relative pose mapping camera-1 to camera-2 coordinates.
EssentialMatrix compose_essential(const Pose &relative);

// Picks among the four (R, t) factorizations of E the one with the most
// correspondences in front of both cameras. The returned translation has unit
// norm. Throws kAmbiguousCheirality on a tie or when E carries no
// translation.
Pose decompose_essential(const EssentialMatrix &E, std::span<const NormalizedMatch> matches);

// The four factorizations, in a fixed order.
std::array<Pose, 4> essential_factorizations(const EssentialMatrix &E);

// Number of correspondences triangulating in front of both cameras of the
// relative pose.
int count_in_front(const Pose &relative, std::span<const NormalizedMatch> matches);

} // namespace sloc

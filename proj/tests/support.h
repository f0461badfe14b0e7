#pragma once

// Test-only scene generators. They use Eigen directly and never call into the
// code under test, so expected values stay independent of it.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

namespace testing {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline double uniform(std::mt19937_64 &rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline double gaussian(std::mt19937_64 &rng, double sigma) { return std::normal_distribution<double>(0.0, sigma)(rng); }

inline Vec3 random_unit(std::mt19937_64 &rng) {
    Vec3 v;
    do {
        v = Vec3(gaussian(rng, 1.0), gaussian(rng, 1.0), gaussian(rng, 1.0));
    } while (v.norm() < 1e-6);
    return v.normalized();
}

inline Mat3 rot(const Vec3 &axis, double angle_rad) { return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix(); }

inline Mat3 random_rotation(std::mt19937_64 &rng) {
    Eigen::Quaterniond q(gaussian(rng, 1.0), gaussian(rng, 1.0), gaussian(rng, 1.0), gaussian(rng, 1.0));
    q.normalize();
    return q.toRotationMatrix();
}

inline Mat3 small_rotation(std::mt19937_64 &rng, double max_deg) {
    return rot(random_unit(rng), uniform(rng, 0.0, max_deg) * std::numbers::pi / 180.0);
}

inline double deg(double rad) { return rad * 180.0 / std::numbers::pi; }
inline double rad(double d) { return d * std::numbers::pi / 180.0; }

// Camera looking from `center` towards `target`, world->camera rotation.
inline Mat3 look_at(const Vec3 &center, const Vec3 &target, const Vec3 &up_hint = Vec3::UnitY()) {
    const Vec3 z = (target - center).normalized();
    Vec3 x = up_hint.cross(z);
    if (x.norm() < 1e-6)
        x = Vec3::UnitX().cross(z);
    x.normalize();
    const Vec3 y = z.cross(x);
    Mat3 R;
    R.row(0) = x.transpose();
    R.row(1) = y.transpose();
    R.row(2) = z.transpose();
    return R;
}

// Angle between two rotations via the quaternion of the relative rotation.
inline double angle_between_deg(const Mat3 &A, const Mat3 &B) {
    Eigen::AngleAxisd aa(A * B.transpose());
    return deg(std::abs(aa.angle()));
}

// Random relative two-view problem: camera 1 at identity, camera 2 = (R, t)
// with |t| = 1, points in front of both cameras.
struct TwoViewProblem {
    Mat3 R;
    Vec3 t;
    std::vector<Vec3> points;  // camera-1 frame
    std::vector<Vec2> x1, x2;  // normalized
};

inline TwoViewProblem random_two_view(std::mt19937_64 &rng, int n) {
    TwoViewProblem p;
    while (true) {
        p.R = small_rotation(rng, 30.0);
        p.t = random_unit(rng);
        p.points.clear();
        p.x1.clear();
        p.x2.clear();
        int attempts = 0;
        while (static_cast<int>(p.points.size()) < n && attempts < 100 * n) {
            ++attempts;
            const Vec3 X(uniform(rng, -2.0, 2.0), uniform(rng, -2.0, 2.0), uniform(rng, 3.0, 8.0));
            const Vec3 X2 = p.R * X + p.t;
            if (X2.z() < 0.5)
                continue;
            p.points.push_back(X);
            p.x1.push_back(X.hnormalized());
            p.x2.push_back(X2.hnormalized());
        }
        if (static_cast<int>(p.points.size()) == n)
            return p;
    }
}

inline Mat3 skew(const Vec3 &v) {
    Mat3 S;
    S << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return S;
}

} // namespace testing

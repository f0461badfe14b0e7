#include "sloc/error.h"
#include "sloc/solvers.h"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace sloc {

namespace {

void check_cheirality(const Vec3 &X, std::span<const Ray> rays, double scene_scale) {
    for (const Ray &ray : rays)
        if (!(ray.pose.apply(X).z() > 1e-9 * scene_scale))
            throw Error(ErrorCode::kCheirality, "triangulated point is behind a camera");
}

} // namespace

Vec3 triangulate_2view(const Bearing &b1, const Pose &pose1, const Bearing &b2, const Pose &pose2,
                       const TriangulationOptions &opt) {
    const Vec3 c1 = pose1.center(), c2 = pose2.center();
    const Vec3 r1 = (pose1.R.transpose() * b1).normalized();
    const Vec3 r2 = (pose2.R.transpose() * b2).normalized();
    const double baseline = (c2 - c1).norm();
    if (!(baseline > 1e-12 * std::max({1.0, c1.norm(), c2.norm()})))
        throw Error(ErrorCode::kParallelRays, "camera centers coincide");
    if (!(direction_angle_deg(r1, r2) >= opt.min_ray_angle_deg))
        throw Error(ErrorCode::kParallelRays, "rays are nearly parallel");

    // Closest points c1 + l1 r1 and c2 + l2 r2 on the two lines.
    const Vec3 w = c2 - c1;
    const double b = r1.dot(r2);
    const double d = r1.dot(w), e = r2.dot(w);
    const double den = 1.0 - b * b;
    const double l1 = (d - b * e) / den;
    const double l2 = (b * d - e) / den;
    const Vec3 X = 0.5 * ((c1 + l1 * r1) + (c2 + l2 * r2));
    const std::array<Ray, 2> rays = {Ray{b1, pose1}, Ray{b2, pose2}};
    check_cheirality(X, rays, baseline);
    return X;
}

Vec3 triangulate_nview(std::span<const Ray> rays, const TriangulationOptions &opt) {
    if (rays.size() < 2)
        throw Error(ErrorCode::kInvalidArgument, "triangulation needs at least two rays");

    std::vector<Vec3> centers, dirs;
    centers.reserve(rays.size());
    dirs.reserve(rays.size());
    for (const Ray &ray : rays) {
        centers.push_back(ray.pose.center());
        dirs.push_back((ray.pose.R.transpose() * ray.bearing).normalized());
    }

    double baseline = 0.0;
    double max_angle = 0.0;
    for (std::size_t i = 0; i < rays.size(); ++i) {
        for (std::size_t j = i + 1; j < rays.size(); ++j) {
            baseline = std::max(baseline, (centers[i] - centers[j]).norm());
            max_angle = std::max(max_angle, direction_angle_deg(dirs[i], dirs[j]));
        }
    }
    double center_scale = 1.0;
    for (const Vec3 &c : centers)
        center_scale = std::max(center_scale, c.norm());
    if (!(baseline > 1e-12 * center_scale))
        throw Error(ErrorCode::kParallelRays, "camera centers coincide");
    if (!(max_angle >= opt.min_ray_angle_deg))
        throw Error(ErrorCode::kParallelRays, "rays are nearly parallel");

    Mat3 A = Mat3::Zero();
    Vec3 rhs = Vec3::Zero();
    for (std::size_t i = 0; i < rays.size(); ++i) {
        const Mat3 P = Mat3::Identity() - dirs[i] * dirs[i].transpose();
        A += P;
        rhs += P * centers[i];
    }
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(A);
    if (!(eig.eigenvalues()(0) > 1e-12 * eig.eigenvalues()(2)))
        throw Error(ErrorCode::kParallelRays, "ray system is rank deficient");
    const Vec3 X = A.ldlt().solve(rhs);
    check_cheirality(X, rays, baseline);
    return X;
}

} // namespace sloc

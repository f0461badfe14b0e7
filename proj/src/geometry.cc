#include "sloc/geometry.h"

#include "sloc/error.h"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace sloc {

namespace {
constexpr double kRadToDeg = 180.0 / std::numbers::pi;
}

std::string_view error_code_name(ErrorCode code) {
    switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kDegenerateSample: return "degenerate-sample";
    case ErrorCode::kAmbiguousCheirality: return "ambiguous-cheirality";
    case ErrorCode::kNegativeScale: return "negative-scale";
    case ErrorCode::kUnobservableScale: return "unobservable-scale";
    case ErrorCode::kNoRealSolution: return "no-real-solution";
    case ErrorCode::kParallelRays: return "parallel-rays";
    case ErrorCode::kCheirality: return "cheirality";
    case ErrorCode::kDegenerateAverage: return "degenerate-average";
    case ErrorCode::kCollinearDirections: return "collinear-directions";
    case ErrorCode::kTooFewObservations: return "too-few-observations";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kNoModelFound: return "no-model-found";
    case ErrorCode::kInfeasibleSample: return "infeasible-sample";
    case ErrorCode::kInvalidDepth: return "invalid-depth";
    case ErrorCode::kDegenerateConfiguration: return "degenerate-configuration";
    case ErrorCode::kNoValidHypothesis: return "no-valid-hypothesis";
    case ErrorCode::kParse: return "parse";
    case ErrorCode::kMissingReference: return "missing-reference";
    case ErrorCode::kInvariantViolation: return "invariant-violation";
    case ErrorCode::kMissingGroundTruth: return "missing-ground-truth";
    case ErrorCode::kConfiguration: return "configuration";
    }
    return "unknown";
}

bool is_rotation(const Mat3 &R, double tol) {
    if (!R.allFinite())
        return false;
    return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff() <= tol && std::abs(R.determinant() - 1.0) <= tol;
}

double Camera::focal() const { return std::sqrt(fx * fy); }

bool Camera::valid() const {
    return std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) && std::isfinite(cy) && fx > 0.0 && fy > 0.0 &&
           width > 0 && height > 0 && cx > 0.0 && cx < width && cy > 0.0 && cy < height;
}

void Camera::validate() const {
    if (!valid())
        throw Error(ErrorCode::kInvalidArgument, "camera intrinsics violate pinhole invariants");
}

bool Camera::contains(const Vec2 &p) const {
    return p.allFinite() && p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= width && p.y() <= height;
}

bool DepthPair::valid() const { return std::isfinite(query) && std::isfinite(database) && query > 0.0 && database > 0.0; }

Rotation rotation_from_quaternion(const Vec4 &wxyz) {
    Eigen::Quaterniond q(wxyz(0), wxyz(1), wxyz(2), wxyz(3));
    q.normalize();
    return q.toRotationMatrix();
}

Vec4 quaternion_from_rotation(const Rotation &R) {
    Eigen::Quaterniond q(R);
    q.normalize();
    // Canonical sign so that identical rotations print identically.
    if (q.w() < 0.0)
        q.coeffs() *= -1.0;
    return Vec4(q.w(), q.x(), q.y(), q.z());
}

Mat3 skew(const Vec3 &v) {
    Mat3 S;
    S << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
    return S;
}

Rotation axis_angle(const Vec3 &axis, double angle_rad) {
    return Eigen::AngleAxisd(angle_rad, axis.normalized()).toRotationMatrix();
}

Bearing pixel_to_bearing(const Vec2 &p, const Camera &cam) { return cam.normalize(p).homogeneous().normalized(); }

Vec2 bearing_to_pixel(const Bearing &b, const Camera &cam) { return cam.denormalize(b.hnormalized()); }

std::optional<Vec2> project(const Vec3 &X, const Pose &pose, const Camera &cam) {
    const Vec3 x = pose.apply(X);
    if (!(x.z() > 1e-9))
        return std::nullopt;
    return cam.denormalize(x.hnormalized());
}

double rotation_angle_deg(const Rotation &Ra, const Rotation &Rb) {
    // The trace formula loses precision near 0 and 180 degrees, so go through
    // the angle-axis of the relative rotation: sin from the skew part, cos from
    // the trace.
    const Mat3 D = Ra * Rb.transpose();
    const double c = std::clamp((D.trace() - 1.0) * 0.5, -1.0, 1.0);
    const Vec3 w(D(2, 1) - D(1, 2), D(0, 2) - D(2, 0), D(1, 0) - D(0, 1));
    const double s = 0.5 * w.norm();
    return std::atan2(s, c) * kRadToDeg;
}

double position_error_m(const Pose &pa, const Pose &pb) { return (pa.center() - pb.center()).norm(); }

double direction_angle_deg(const Vec3 &a, const Vec3 &b) { return std::atan2(a.cross(b).norm(), a.dot(b)) * kRadToDeg; }

double sampson_error(const EssentialMatrix &E, const Vec2 &x1, const Vec2 &x2) {
    const Vec3 Ex1 = E * x1.homogeneous();
    const Vec3 Etx2 = E.transpose() * x2.homogeneous();
    const double num = x2.homogeneous().dot(Ex1);
    const double den = Ex1.head<2>().squaredNorm() + Etx2.head<2>().squaredNorm();
    if (den < 1e-30)
        return std::numeric_limits<double>::infinity();
    return num * num / den;
}

double sampson_px(const EssentialMatrix &E, const Vec2 &x_database, const Vec2 &x_query, double pixel_scale) {
    return std::sqrt(sampson_error(E, x_database, x_query)) * pixel_scale;
}

EssentialMatrix compose_essential(const Pose &relative) { return skew(relative.t) * relative.R; }

std::array<Pose, 4> essential_factorizations(const EssentialMatrix &E) {
    Eigen::JacobiSVD<Mat3> svd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 U = svd.matrixU();
    Mat3 V = svd.matrixV();
    if (U.determinant() < 0.0)
        U.col(2) *= -1.0;
    if (V.determinant() < 0.0)
        V.col(2) *= -1.0;
    Mat3 W;
    W << 0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;
    const Rotation Ra = U * W * V.transpose();
    const Rotation Rb = U * W.transpose() * V.transpose();
    const Vec3 t = U.col(2);
    return {Pose(Ra, t), Pose(Ra, -t), Pose(Rb, t), Pose(Rb, -t)};
}

int count_in_front(const Pose &relative, std::span<const NormalizedMatch> matches) {
    // Camera 1 at the origin, camera 2 at c2 = -R^T t. Midpoint of the common
    // perpendicular in camera-1 coordinates.
    const Mat3 &R = relative.R;
    const Vec3 c2 = -R.transpose() * relative.t;
    const double scale = std::max(c2.norm(), 1e-300);
    int count = 0;
    for (const NormalizedMatch &m : matches) {
        const Vec3 r1 = m.x1.homogeneous();
        const Vec3 r2 = R.transpose() * m.x2.homogeneous();
        // Solve [r1 -r2] [l1 l2]^T ~= c2 in the least-squares sense.
        const double a = r1.dot(r1), b = r1.dot(r2), c = r2.dot(r2);
        const double d = r1.dot(c2), e = r2.dot(c2);
        const double det = a * c - b * b;
        if (std::abs(det) < 1e-14 * a * c)
            continue;
        const double l1 = (d * c - b * e) / det;
        const double l2 = (b * d - a * e) / det;
        const Vec3 X = 0.5 * (l1 * r1 + (c2 + l2 * r2));
        const double z1 = X.z();
        const double z2 = (R * X + relative.t).z();
        if (z1 > 1e-9 * scale && z2 > 1e-9 * scale)
            ++count;
    }
    return count;
}

Pose decompose_essential(const EssentialMatrix &E, std::span<const NormalizedMatch> matches) {
    if (matches.empty())
        throw Error(ErrorCode::kInvalidArgument, "decompose_essential needs at least one correspondence");
    const double norm = E.norm();
    if (!(norm > 1e-12))
        throw Error(ErrorCode::kAmbiguousCheirality, "essential matrix carries no translation");
    const std::array<Pose, 4> candidates = essential_factorizations(E / norm);
    int best = -1;
    int best_count = -1;
    bool tie = false;
    for (int k = 0; k < 4; ++k) {
        const int count = count_in_front(candidates[k], matches);
        if (count > best_count) {
            best_count = count;
            best = k;
            tie = false;
        } else if (count == best_count) {
            tie = true;
        }
    }
    if (tie)
        throw Error(ErrorCode::kAmbiguousCheirality, "cheirality test does not separate the factorizations");
    return candidates[best];
}

} // namespace sloc

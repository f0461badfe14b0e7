#include "sloc/alignment.h"
#include "sloc/error.h"
#include "sloc/solvers.h"

#include "polynomial.h"

#include <Eigen/Dense>

#include <array>
#include <cmath>

namespace sloc {

namespace {

// Newton iterations on the three law-of-cosines equations in the depths.
void polish_depths(std::array<double, 3> &s, const std::array<double, 3> &cosines, const std::array<double, 3> &d2) {
    // Equation k links depths (i, j) with cosine cosines[k] and squared
    // distance d2[k]: s_i^2 + s_j^2 - 2 s_i s_j cos = d2.
    constexpr std::array<std::array<int, 2>, 3> kPairs = {{{1, 2}, {0, 2}, {0, 1}}};
    for (int it = 0; it < 5; ++it) {
        Vec3 r;
        Mat3 J = Mat3::Zero();
        for (int k = 0; k < 3; ++k) {
            const int i = kPairs[k][0], j = kPairs[k][1];
            r(k) = s[i] * s[i] + s[j] * s[j] - 2.0 * s[i] * s[j] * cosines[k] - d2[k];
            J(k, i) = 2.0 * s[i] - 2.0 * s[j] * cosines[k];
            J(k, j) = 2.0 * s[j] - 2.0 * s[i] * cosines[k];
        }
        const Vec3 step = J.partialPivLu().solve(-r);
        if (!step.allFinite())
            return;
        for (int k = 0; k < 3; ++k)
            s[k] += step(k);
        if (step.norm() <= 1e-15 * (std::abs(s[0]) + std::abs(s[1]) + std::abs(s[2])))
            return;
    }
}

} // namespace

std::vector<Pose> p3p(std::span<const WorldMatch> matches) {
    if (matches.size() != 3)
        throw Error(ErrorCode::kInvalidArgument, "p3p needs exactly 3 correspondences");

    std::array<Vec3, 3> b, X;
    for (int i = 0; i < 3; ++i) {
        b[i] = matches[i].x.homogeneous().normalized();
        X[i] = matches[i].X;
    }
    const double a2 = (X[1] - X[2]).squaredNorm();
    const double b2 = (X[0] - X[2]).squaredNorm();
    const double c2 = (X[0] - X[1]).squaredNorm();
    const double extent = std::max({a2, b2, c2});
    if (!(extent > 0.0) || (X[1] - X[0]).cross(X[2] - X[0]).norm() <= 1e-10 * extent)
        throw Error(ErrorCode::kDegenerateSample, "world points are collinear");
    const double ca = b[1].dot(b[2]);
    const double cb = b[0].dot(b[2]);
    const double cg = b[0].dot(b[1]);
    constexpr double kCoincident = 1.0 - 1e-12;
    if (ca > kCoincident || cb > kCoincident || cg > kCoincident)
        throw Error(ErrorCode::kDegenerateSample, "bearings coincide");

    // Grunert's quartic in v = s3 / s1.
    const double q = (a2 - c2) / b2;
    const double p = (a2 + c2) / b2;
    const std::array<double, 5> coeffs = {
        (1.0 + q) * (1.0 + q) - 4.0 * a2 / b2 * cg * cg,
        4.0 * (-q * (1.0 + q) * cb + 2.0 * a2 / b2 * cg * cg * cb - (1.0 - p) * ca * cg),
        2.0 * (q * q - 1.0 + 2.0 * q * q * cb * cb + 2.0 * (b2 - c2) / b2 * ca * ca - 4.0 * p * ca * cb * cg +
               2.0 * (b2 - a2) / b2 * cg * cg),
        4.0 * (q * (1.0 - q) * cb - (1.0 - p) * ca * cg + 2.0 * c2 / b2 * ca * ca * cb),
        (q - 1.0) * (q - 1.0) - 4.0 * c2 / b2 * ca * ca,
    };

    const std::array<double, 3> cosines = {ca, cb, cg};
    const std::array<double, 3> d2 = {a2, b2, c2};
    std::vector<Pose> out;
    for (double v : detail::real_roots(coeffs)) {
        const double den = 1.0 + v * v - 2.0 * v * cb;
        if (!(den > 0.0))
            continue;
        const double s1 = std::sqrt(b2 / den);
        const double s3 = v * s1;
        // s2 from the (s1, s2) equation; keep the root that best satisfies the
        // (s2, s3) equation.
        const double disc = std::max(0.0, s1 * s1 * cg * cg - s1 * s1 + c2);
        double best_s2 = 0.0, best_res = std::numeric_limits<double>::infinity();
        for (double sign : {1.0, -1.0}) {
            const double s2 = s1 * cg + sign * std::sqrt(disc);
            const double res = std::abs(s2 * s2 + s3 * s3 - 2.0 * s2 * s3 * ca - a2);
            if (res < best_res) {
                best_res = res;
                best_s2 = s2;
            }
        }
        std::array<double, 3> s = {s1, best_s2, s3};
        polish_depths(s, cosines, d2);
        if (!(s[0] > 0.0 && s[1] > 0.0 && s[2] > 0.0))
            continue;

        std::array<Vec3, 3> P;
        for (int i = 0; i < 3; ++i)
            P[i] = s[i] * b[i];
        SimilarityTransform T;
        try {
            T = umeyama(X, P, false);
        } catch (const Error &) {
            continue;
        }
        Pose pose(T.R, T.t);
        bool ok = true;
        for (int i = 0; i < 3 && ok; ++i) {
            const Vec3 x = pose.apply(X[i]);
            ok = x.z() > 0.0 && (x.hnormalized() - matches[i].x).norm() < 1e-6;
        }
        if (!ok)
            continue;
        bool duplicate = false;
        for (const Pose &o : out)
            duplicate = duplicate || ((o.R - pose.R).norm() < 1e-12 && (o.t - pose.t).norm() < 1e-12 * (1.0 + o.t.norm()));
        if (!duplicate)
            out.push_back(pose);
    }
    if (out.empty())
        throw Error(ErrorCode::kNoRealSolution, "p3p has no real solution");
    return out;
}

} // namespace sloc

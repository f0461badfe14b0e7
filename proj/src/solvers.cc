#include "sloc/alignment.h"
#include "sloc/error.h"
#include "sloc/solvers.h"

#include <Eigen/Dense>

#include <array>
#include <cmath>

namespace sloc {

namespace {

// Gauss-Newton on the per-image depth shifts (a, b) so that pairwise distances
// of the lifted points agree up to one scale.
void estimate_depth_shifts(std::span<const DepthMatch> m, double &a, double &b) {
    std::array<Vec3, 4> r1, r2;
    for (int i = 0; i < 4; ++i) {
        r1[i] = m[i].x1.homogeneous();
        r2[i] = m[i].x2.homogeneous();
    }
    a = b = 0.0;
    constexpr int kPairs = 6;
    const std::array<std::array<int, 2>, kPairs> pairs = {{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}};
    // Unknowns (a, b, log s); residual_ij = |P2_i - P2_j| - s |P1_i - P1_j|.
    double log_s = 0.0;
    {
        double n1 = 0.0, n2 = 0.0;
        for (const auto &p : pairs) {
            n1 += (m[p[0]].d1 * r1[p[0]] - m[p[1]].d1 * r1[p[1]]).norm();
            n2 += (m[p[0]].d2 * r2[p[0]] - m[p[1]].d2 * r2[p[1]]).norm();
        }
        log_s = std::log(n2 / n1);
    }
    auto residuals = [&](double sa, double sb, double ls, Eigen::Matrix<double, kPairs, 3> *J) {
        Eigen::Matrix<double, kPairs, 1> r;
        const double s = std::exp(ls);
        for (int k = 0; k < kPairs; ++k) {
            const int i = pairs[k][0], j = pairs[k][1];
            const Vec3 v1 = (m[i].d1 + sa) * r1[i] - (m[j].d1 + sa) * r1[j];
            const Vec3 v2 = (m[i].d2 + sb) * r2[i] - (m[j].d2 + sb) * r2[j];
            const double n1 = v1.norm(), n2 = v2.norm();
            r(k) = n2 - s * n1;
            if (J) {
                (*J)(k, 0) = -s * v1.dot(r1[i] - r1[j]) / n1;
                (*J)(k, 1) = v2.dot(r2[i] - r2[j]) / n2;
                (*J)(k, 2) = -s * n1;
            }
        }
        return r;
    };
    for (int it = 0; it < 30; ++it) {
        Eigen::Matrix<double, kPairs, 3> J;
        const auto r = residuals(a, b, log_s, &J);
        const Vec3 step = J.colPivHouseholderQr().solve(-r);
        a += step(0);
        b += step(1);
        log_s += step(2);
        if (step.norm() < 1e-14)
            break;
    }
}

} // namespace

std::vector<ScaledRelativePose> essential_3pt_depth(std::span<const DepthMatch> matches, DepthModel model) {
    const std::size_t needed = model == DepthModel::kScaledRigid ? 3 : 4;
    if (matches.size() != needed)
        throw Error(ErrorCode::kInvalidArgument, "wrong number of correspondences for the depth solver");
    for (const DepthMatch &m : matches)
        if (!(m.d1 > 0.0) || !(m.d2 > 0.0) || !std::isfinite(m.d1) || !std::isfinite(m.d2))
            throw Error(ErrorCode::kInvalidDepth, "depth solver needs strictly positive depths");

    double shift1 = 0.0, shift2 = 0.0;
    if (model == DepthModel::kScaleShift)
        estimate_depth_shifts(matches, shift1, shift2);

    std::vector<Vec3> P1, P2;
    for (const DepthMatch &m : matches) {
        P1.push_back((m.d1 + shift1) * m.x1.homogeneous());
        P2.push_back((m.d2 + shift2) * m.x2.homogeneous());
    }
    SimilarityTransform T;
    try {
        T = umeyama(P1, P2, true);
    } catch (const Error &) {
        throw Error(ErrorCode::kDegenerateSample, "lifted points are collinear");
    }
    if (!(T.scale > 0.0))
        throw Error(ErrorCode::kNegativeScale, "relative depth scale is not positive");
    const double tn = T.t.norm();
    if (!(tn > 1e-12 * (P2[0].norm() + P2[1].norm() + P2[2].norm())))
        throw Error(ErrorCode::kDegenerateSample, "no translation between the views");
    ScaledRelativePose out;
    out.R = T.R;
    out.direction = T.t / tn;
    out.scale = T.scale;
    return {out};
}

ScaledRelativePose scale_from_one_point(const Pose &rel, const Vec2 &x_query, const Vec2 &x_b, const Pose &pose_a,
                                        const Pose &pose_b) {
    const double tn = rel.t.norm();
    if (!(tn > 0.0))
        throw Error(ErrorCode::kInvalidArgument, "relative translation must be non-zero");
    const Vec3 t_dir = rel.t / tn;
    const Rotation Rq = rel.R * pose_a.R;
    // Query center moves along c_a + s d as the translation magnitude s grows.
    const Vec3 c_a = pose_a.center();
    const Vec3 c_b = pose_b.center();
    const Vec3 d = -Rq.transpose() * t_dir;
    const Vec3 ray_q = Rq.transpose() * x_query.homogeneous();
    const Vec3 ray_b = pose_b.R.transpose() * x_b.homogeneous();
    // The two rays intersect iff (c_q(s) - c_b) is coplanar with both rays.
    const Vec3 n = ray_q.cross(ray_b);
    const double denom = d.dot(n);
    if (!(std::abs(denom) > 1e-10 * n.norm()))
        throw Error(ErrorCode::kUnobservableScale, "extra correspondence does not constrain the scale");
    const double s = -(c_a - c_b).dot(n) / denom;
    if (!(s > 0.0) || !std::isfinite(s))
        throw Error(ErrorCode::kNegativeScale, "recovered translation scale is not positive");
    ScaledRelativePose out;
    out.R = rel.R;
    out.direction = t_dir;
    out.scale = s;
    return out;
}

} // namespace sloc

#include "sloc/refinement.h"

#include "lm.h"
#include "sloc/error.h"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <limits>

namespace sloc {

namespace {

Rotation exp_so3(const Vec3 &w) {
    const double angle = w.norm();
    if (angle < 1e-300)
        return Rotation::Identity();
    return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

// Orthonormal basis of the plane perpendicular to a unit vector.
Eigen::Matrix<double, 3, 2> tangent_basis(const Vec3 &t) {
    Vec3 a = std::abs(t.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 b1 = (a - a.dot(t) * t).normalized();
    const Vec3 b2 = t.cross(b1);
    Eigen::Matrix<double, 3, 2> B;
    B.col(0) = b1;
    B.col(1) = b2;
    return B;
}

// Signed Sampson residual e / sqrt(D) and its derivative along dE.
struct SampsonTerm {
    double r = 0.0;
    double e = 0.0;
    double den = 0.0;
    Vec3 Ex1, Etx2, x1, x2;

    bool init(const Mat3 &E, const Vec2 &p1, const Vec2 &p2) {
        x1 = p1.homogeneous();
        x2 = p2.homogeneous();
        Ex1 = E * x1;
        Etx2 = E.transpose() * x2;
        e = x2.dot(Ex1);
        den = Ex1.head<2>().squaredNorm() + Etx2.head<2>().squaredNorm();
        if (!(den > 1e-30))
            return false;
        r = e / std::sqrt(den);
        return true;
    }

    double derivative(const Mat3 &dE) const {
        const Vec3 dEx1 = dE * x1;
        const Vec3 dEtx2 = dE.transpose() * x2;
        const double de = x2.dot(dEx1);
        const double dden = 2.0 * (Ex1(0) * dEx1(0) + Ex1(1) * dEx1(1) + Etx2(0) * dEtx2(0) + Etx2(1) * dEtx2(1));
        return de / std::sqrt(den) - 0.5 * e * dden / (den * std::sqrt(den));
    }
};

constexpr double kInf = std::numeric_limits<double>::infinity();

double relative_sampson_cost(const Pose &rel, std::span<const NormalizedMatch> matches,
                             std::span<const double> weights) {
    const Mat3 E = compose_essential(rel);
    double cost = 0.0;
    for (std::size_t i = 0; i < matches.size(); ++i)
        cost += (weights.empty() ? 1.0 : weights[i]) * sampson_error(E, matches[i].x1, matches[i].x2);
    return cost;
}

PoseRefinement refine_relative_impl(const Pose &relative, std::span<const NormalizedMatch> matches,
                                    const RefinementOptions &opt, std::span<const double> weights = {}) {
    if (!weights.empty() && weights.size() != matches.size())
        throw Error(ErrorCode::kInvalidArgument, "one weight per match expected");
    PoseRefinement out;
    out.pose = relative;
    out.pose.t.normalize();
    if (matches.size() < 8) {
        out.summary.initial_cost = out.summary.final_cost = relative_sampson_cost(out.pose, matches, weights);
        return out;
    }

    auto eval = [&](const Pose &x, Eigen::Matrix<double, 5, 5> &H, Eigen::Matrix<double, 5, 1> &g) {
        H.setZero();
        g.setZero();
        const Mat3 E = compose_essential(x);
        const Mat3 tx = skew(x.t);
        const Eigen::Matrix<double, 3, 2> B = tangent_basis(x.t);
        std::array<Mat3, 5> dE;
        for (int k = 0; k < 3; ++k)
            dE[k] = tx * skew(Vec3::Unit(k)) * x.R;
        for (int k = 0; k < 2; ++k)
            dE[3 + k] = skew(B.col(k)) * x.R;
        double cost = 0.0;
        for (std::size_t i = 0; i < matches.size(); ++i) {
            SampsonTerm term;
            if (!term.init(E, matches[i].x1, matches[i].x2))
                return kInf;
            const double w = weights.empty() ? 1.0 : weights[i];
            Eigen::Matrix<double, 5, 1> J;
            for (int k = 0; k < 5; ++k)
                J(k) = term.derivative(dE[k]);
            H += w * J * J.transpose();
            g += w * term.r * J;
            cost += w * term.r * term.r;
        }
        return cost;
    };
    auto cost = [&](const Pose &x) { return relative_sampson_cost(x, matches, weights); };
    auto retract = [](const Pose &x, const Eigen::Matrix<double, 5, 1> &d) {
        const Eigen::Matrix<double, 3, 2> B = tangent_basis(x.t);
        return Pose(exp_so3(d.head<3>()) * x.R, (x.t + B * d.tail<2>()).normalized());
    };
    out.pose = detail::levenberg_marquardt<5>(out.pose, eval, cost, retract, opt, out.summary);
    return out;
}

} // namespace

PoseRefinement refine_relative_pose_sampson(const Pose &relative, std::span<const NormalizedMatch> matches,
                                            const RefinementOptions &opt, std::span<const double> weights) {
    return refine_relative_impl(relative, matches, opt, weights);
}

EssentialRefinement refine_sampson(const EssentialMatrix &E, std::span<const NormalizedMatch> matches,
                                   const RefinementOptions &opt) {
    EssentialRefinement out;
    const double norm = E.norm();
    out.E = E / norm;
    if (matches.size() < 8) {
        double cost = 0.0;
        for (const NormalizedMatch &m : matches)
            cost += sampson_error(out.E, m.x1, m.x2);
        out.summary.initial_cost = out.summary.final_cost = cost;
        return out;
    }
    // Any factorization spans the same E up to sign.
    const Pose start = essential_factorizations(out.E)[0];
    const PoseRefinement refined = refine_relative_impl(start, matches, opt);
    out.summary = refined.summary;
    if (refined.summary.final_cost < refined.summary.initial_cost) {
        Mat3 En = compose_essential(refined.pose);
        En /= En.norm();
        if (En.cwiseProduct(out.E).sum() < 0.0)
            En = -En;
        out.E = En;
    }
    return out;
}

PoseRefinement refine_pose_reprojection(const Pose &pose, std::span<const Vec2> pixels, std::span<const Vec3> points,
                                        const Camera &cam, std::span<const char> mask, const RefinementOptions &opt) {
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < pixels.size(); ++i)
        if (mask.empty() || mask[i])
            active.push_back(i);

    auto cost = [&](const Pose &x) {
        double c = 0.0;
        for (std::size_t i : active) {
            const Vec3 Xc = x.apply(points[i]);
            if (!(Xc.z() > 1e-9))
                return kInf;
            c += (cam.denormalize(Xc.hnormalized()) - pixels[i]).squaredNorm();
        }
        return c;
    };

    PoseRefinement out;
    out.pose = pose;
    if (active.size() < 4) {
        out.summary.initial_cost = out.summary.final_cost = cost(pose);
        return out;
    }

    auto eval = [&](const Pose &x, Eigen::Matrix<double, 6, 6> &H, Eigen::Matrix<double, 6, 1> &g) {
        H.setZero();
        g.setZero();
        double c = 0.0;
        for (std::size_t i : active) {
            const Vec3 RX = x.R * points[i];
            const Vec3 Xc = RX + x.t;
            const double z = std::max(Xc.z(), 1e-9);
            const double iz = 1.0 / z;
            const Vec2 res(cam.fx * Xc.x() * iz + cam.cx - pixels[i].x(), cam.fy * Xc.y() * iz + cam.cy - pixels[i].y());
            Eigen::Matrix<double, 2, 3> dproj;
            dproj << cam.fx * iz, 0.0, -cam.fx * Xc.x() * iz * iz, 0.0, cam.fy * iz, -cam.fy * Xc.y() * iz * iz;
            Eigen::Matrix<double, 3, 6> dX;
            dX.leftCols<3>() = -skew(RX);
            dX.rightCols<3>() = Mat3::Identity();
            const Eigen::Matrix<double, 2, 6> J = dproj * dX;
            H += J.transpose() * J;
            g += J.transpose() * res;
            c += res.squaredNorm();
        }
        return c;
    };
    auto retract = [](const Pose &x, const Eigen::Matrix<double, 6, 1> &d) {
        return Pose(exp_so3(d.head<3>()) * x.R, x.t + d.tail<3>());
    };
    out.pose = detail::levenberg_marquardt<6>(pose, eval, cost, retract, opt, out.summary);
    return out;
}

PoseRefinement refine_generalized_sampson(const Pose &query, std::span<const GeneralizedMatch> matches,
                                          std::span<const Pose> database_poses, const RefinementOptions &opt) {
    auto cost = [&](const Pose &x) {
        std::vector<Mat3> E(database_poses.size());
        for (std::size_t j = 0; j < database_poses.size(); ++j)
            E[j] = compose_essential(relative_pose(database_poses[j], x));
        double c = 0.0;
        for (const GeneralizedMatch &m : matches) {
            const double s = sampson_error(E[m.database], m.x_database, m.x_query);
            if (!std::isfinite(s))
                return kInf;
            c += m.weight * s * m.pixel_scale * m.pixel_scale;
        }
        return c;
    };

    PoseRefinement out;
    out.pose = query;
    if (matches.size() < 6) {
        out.summary.initial_cost = out.summary.final_cost = cost(query);
        return out;
    }

    auto eval = [&](const Pose &x, Eigen::Matrix<double, 6, 6> &H, Eigen::Matrix<double, 6, 1> &g) {
        H.setZero();
        g.setZero();
        const std::size_t n_db = database_poses.size();
        std::vector<Mat3> E(n_db);
        std::vector<std::array<Mat3, 6>> dE(n_db);
        for (std::size_t j = 0; j < n_db; ++j) {
            const Pose rel = relative_pose(database_poses[j], x);
            E[j] = compose_essential(rel);
            const Vec3 Rtj = rel.R * database_poses[j].t;
            const Mat3 tx = skew(rel.t);
            for (int k = 0; k < 3; ++k) {
                const Vec3 ek = Vec3::Unit(k);
                // Left perturbation of the query rotation; the query
                // translation moves independently.
                dE[j][k] = skew(Rtj.cross(ek)) * rel.R + tx * skew(ek) * rel.R;
                dE[j][3 + k] = skew(ek) * rel.R;
            }
        }
        double c = 0.0;
        for (const GeneralizedMatch &m : matches) {
            SampsonTerm term;
            if (!term.init(E[m.database], m.x_database, m.x_query))
                return kInf;
            Eigen::Matrix<double, 6, 1> J;
            for (int k = 0; k < 6; ++k)
                J(k) = term.derivative(dE[m.database][k]) * m.pixel_scale;
            const double r = term.r * m.pixel_scale;
            H += m.weight * J * J.transpose();
            g += m.weight * r * J;
            c += m.weight * r * r;
        }
        return c;
    };
    auto retract = [](const Pose &x, const Eigen::Matrix<double, 6, 1> &d) {
        return Pose(exp_so3(d.head<3>()) * x.R, x.t + d.tail<3>());
    };
    out.pose = detail::levenberg_marquardt<6>(query, eval, cost, retract, opt, out.summary);
    return out;
}

} // namespace sloc

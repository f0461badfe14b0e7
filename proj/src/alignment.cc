#include "sloc/alignment.h"

#include "sloc/error.h"

#include <Eigen/Dense>

#include <cmath>

namespace sloc {

SimilarityTransform SimilarityTransform::inverse() const {
    SimilarityTransform inv;
    inv.scale = 1.0 / scale;
    inv.R = R.transpose();
    inv.t = -(inv.scale * (inv.R * t));
    return inv;
}

Pose SimilarityTransform::transform_pose(const Pose &pose) const {
    const Rotation Rw = pose.R * R.transpose();
    return Pose(Rw, scale * pose.t - Rw * t);
}

SimilarityTransform operator*(const SimilarityTransform &a, const SimilarityTransform &b) {
    SimilarityTransform c;
    c.scale = a.scale * b.scale;
    c.R = a.R * b.R;
    c.t = a.scale * (a.R * b.t) + a.t;
    return c;
}

SimilarityTransform umeyama(std::span<const Vec3> src, std::span<const Vec3> dst, bool with_scale) {
    if (src.size() != dst.size() || src.size() < 3)
        throw Error(ErrorCode::kInvalidArgument, "umeyama needs at least 3 matched points");
    const double n = static_cast<double>(src.size());
    Vec3 mu_s = Vec3::Zero(), mu_d = Vec3::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) {
        mu_s += src[i];
        mu_d += dst[i];
    }
    mu_s /= n;
    mu_d /= n;

    Mat3 cov = Mat3::Zero(), scatter = Mat3::Zero();
    double var_s = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
        const Vec3 s = src[i] - mu_s;
        cov += (dst[i] - mu_d) * s.transpose();
        scatter += s * s.transpose();
        var_s += s.squaredNorm();
    }
    cov /= n;
    var_s /= n;

    const Eigen::SelfAdjointEigenSolver<Mat3> src_eig(scatter);
    const double l_max = src_eig.eigenvalues()(2);
    if (!(l_max > 0.0) || !(src_eig.eigenvalues()(1) > 1e-20 * l_max))
        throw Error(ErrorCode::kDegenerateConfiguration, "source points are collinear or coincident");

    Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vec3 D = svd.singularValues();
    if (!(D(1) > 1e-12 * D(0)))
        throw Error(ErrorCode::kDegenerateConfiguration, "cross-covariance has rank < 2");
    Mat3 S = Mat3::Identity();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0)
        S(2, 2) = -1.0;

    SimilarityTransform T;
    T.R = svd.matrixU() * S * svd.matrixV().transpose();
    T.scale = with_scale ? (D.asDiagonal() * S).trace() / var_s : 1.0;
    T.t = mu_d - T.scale * (T.R * mu_s);
    return T;
}

AlignedReconstruction align_reconstruction(const LocalReconstruction &rec) {
    std::vector<Vec3> local_centers, world_centers;
    std::vector<Vec3> local_axes, world_axes;
    for (const auto &[name, local] : rec.local_poses) {
        const auto it = rec.world_poses.find(name);
        if (it == rec.world_poses.end())
            continue;
        local_centers.push_back(local.center());
        world_centers.push_back(it->second.center());
        local_axes.push_back(local.optical_axis());
        world_axes.push_back(it->second.optical_axis());
    }
    const std::size_t n = local_centers.size();
    if (n < 2)
        throw Error(ErrorCode::kDegenerateConfiguration, "alignment needs at least two images with world poses");

    // Stage 1: camera centers only, to recover the scale of the local frame.
    // Collinear centers still fix the scale through their spread, which is
    // what a similarity fit reduces to in that case.
    double scale = 0.0;
    bool have_scale = false;
    if (n >= 3) {
        try {
            scale = umeyama(local_centers, world_centers, true).scale;
            have_scale = true;
        } catch (const Error &) {
        }
    }
    if (!have_scale) {
        Vec3 mu_l = Vec3::Zero(), mu_w = Vec3::Zero();
        for (std::size_t i = 0; i < n; ++i) {
            mu_l += local_centers[i];
            mu_w += world_centers[i];
        }
        mu_l /= static_cast<double>(n);
        mu_w /= static_cast<double>(n);
        double var_l = 0.0, var_w = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            var_l += (local_centers[i] - mu_l).squaredNorm();
            var_w += (world_centers[i] - mu_w).squaredNorm();
        }
        if (!(var_l > 0.0) || !(var_w > 0.0))
            throw Error(ErrorCode::kDegenerateConfiguration, "camera centers coincide");
        scale = std::sqrt(var_w / var_l);
    }
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw Error(ErrorCode::kDegenerateConfiguration, "stage-1 scale is not positive");

    // Stage 2: add one point per image on its optical axis, one world length
    // unit in front of the camera.
    std::vector<Vec3> src = local_centers, dst = world_centers;
    for (std::size_t i = 0; i < n; ++i) {
        src.push_back(local_centers[i] + local_axes[i] / scale);
        dst.push_back(world_centers[i] + world_axes[i]);
    }
    AlignedReconstruction out;
    out.transform = umeyama(src, dst, true);
    for (const auto &[name, local] : rec.local_poses)
        out.world_poses.emplace(name, out.transform.transform_pose(local));
    return out;
}

HypothesisScore select_hypothesis(std::span<const Pose> hypotheses, const Camera &query_camera,
                                  std::span<const HypothesisEvidence> evidence, const SelectOptions &opt) {
    if (hypotheses.empty())
        throw Error(ErrorCode::kNoValidHypothesis, "no pose hypotheses");
    std::vector<const HypothesisEvidence *> usable;
    for (const HypothesisEvidence &ev : evidence)
        if (ev.matches.size() > opt.min_correspondences)
            usable.push_back(&ev);
    if (usable.empty())
        throw Error(ErrorCode::kNoValidHypothesis, "no database image has enough correspondences");

    HypothesisScore best;
    bool have_best = false;
    for (std::size_t h = 0; h < hypotheses.size(); ++h) {
        HypothesisScore score;
        score.index = h;
        for (const HypothesisEvidence *ev : usable) {
            const EssentialMatrix E = compose_essential(relative_pose(ev->database_pose, hypotheses[h]));
            const double pixel_scale = std::sqrt(query_camera.focal() * ev->database_camera.focal());
            for (const Correspondence &c : ev->matches) {
                const double r = sampson_px(E, ev->database_camera.normalize(c.database),
                                            query_camera.normalize(c.query), pixel_scale);
                if (r <= opt.epipolar_threshold_px) {
                    ++score.inliers;
                    score.truncated_cost += r;
                } else {
                    score.truncated_cost += opt.epipolar_threshold_px;
                }
            }
        }
        if (!have_best || score.inliers > best.inliers ||
            (score.inliers == best.inliers && score.truncated_cost < best.truncated_cost)) {
            best = score;
            have_best = true;
        }
    }
    return best;
}

} // namespace sloc

#include "sloc/pose_fusion.h"

#include "sloc/error.h"
#include "sloc/refinement.h"
#include "sloc/support.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sloc {

Rotation average_rotations(std::span<const Rotation> rotations, std::span<const double> weights) {
    if (rotations.empty() || rotations.size() != weights.size())
        throw Error(ErrorCode::kInvalidArgument, "average_rotations: need one weight per rotation");
    Mat3 sum = Mat3::Zero();
    double total = 0.0;
    for (std::size_t i = 0; i < rotations.size(); ++i) {
        if (!(weights[i] >= 0.0))
            throw Error(ErrorCode::kInvalidArgument, "average_rotations: negative weight");
        sum += weights[i] * rotations[i];
        total += weights[i];
    }
    if (!(total > 0.0))
        throw Error(ErrorCode::kDegenerateAverage, "average_rotations: all weights are zero");
    Eigen::JacobiSVD<Mat3> svd(sum / total, Eigen::ComputeFullU | Eigen::ComputeFullV);
    if (svd.singularValues()(2) < 1e-9)
        throw Error(ErrorCode::kDegenerateAverage, "average_rotations: weighted sum is rank deficient");
    Mat3 D = Mat3::Identity();
    D(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() > 0.0 ? 1.0 : -1.0;
    return svd.matrixU() * D * svd.matrixV().transpose();
}

Vec3 triangulate_center(std::span<const CenterRay> rays) {
    if (rays.size() < 2)
        throw Error(ErrorCode::kTooFewObservations, "triangulate_center: need at least two rays");
    Mat3 A = Mat3::Zero();
    Vec3 b = Vec3::Zero();
    for (const CenterRay &r : rays) {
        const Vec3 d = r.direction.normalized();
        const Mat3 P = Mat3::Identity() - d * d.transpose();
        A += r.weight * P;
        b += r.weight * P * r.origin;
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(A);
    const double lmin = eig.eigenvalues()(0), lmax = eig.eigenvalues()(2);
    if (!(lmin > 0.0) || lmax > 1e12 * lmin)
        throw Error(ErrorCode::kCollinearDirections, "triangulate_center: directions are (nearly) parallel");
    return eig.eigenvectors() * (eig.eigenvectors().transpose() * b).cwiseQuotient(eig.eigenvalues());
}

Rotation absolute_rotation(const RelativeObservation &obs) { return obs.R * obs.database_pose.R; }

Vec3 world_direction(const RelativeObservation &obs, const Rotation &query_R) {
    // t_rel = R_q (c_db - c_q), so the query lies along -R_q^T t_rel.
    return -(query_R.transpose() * obs.direction).normalized();
}

FusionResult fuse_relative_poses(std::vector<RelativeObservation> observations, const FusionOptions &opt) {
    if (observations.size() < 2)
        throw Error(ErrorCode::kTooFewObservations, "fusion needs at least two relative poses");
    std::stable_sort(observations.begin(), observations.end(),
                     [](const RelativeObservation &a, const RelativeObservation &b) { return a.database < b.database; });

    FusionResult result;
    std::vector<std::size_t> active(observations.size());
    std::iota(active.begin(), active.end(), 0);
    while (true) {
        std::vector<Rotation> rotations;
        std::vector<double> weights;
        for (std::size_t i : active) {
            rotations.push_back(absolute_rotation(observations[i]));
            weights.push_back(observations[i].weight);
        }
        const Rotation R = average_rotations(rotations, weights);
        std::vector<CenterRay> rays;
        for (std::size_t i : active)
            rays.push_back({observations[i].database_pose.center(), world_direction(observations[i], R),
                            observations[i].weight});
        const Vec3 c = triangulate_center(rays);
        ++result.solves;
        result.pose = Pose::from_center(R, c);

        if (!opt.robust || active.size() <= 2)
            break;
        std::size_t worst = 0;
        double worst_residual = -1.0;
        for (std::size_t k = 0; k < active.size(); ++k) {
            const RelativeObservation &obs = observations[active[k]];
            const double rot = rotation_angle_deg(absolute_rotation(obs), R);
            const double dir = direction_angle_deg(world_direction(obs, R), c - obs.database_pose.center());
            const double residual = std::max(rot, dir);
            if (residual > worst_residual) {
                worst_residual = residual;
                worst = k;
            }
        }
        if (worst_residual < opt.max_residual_deg)
            break;
        result.dropped.push_back(observations[active[worst]].database);
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(worst));
    }
    for (std::size_t i : active)
        result.used.push_back(observations[i].database);
    return result;
}

namespace {

struct RelativeModel {
    Pose pose;
    EssentialMatrix E = EssentialMatrix::Zero();
};

RelativeModel make_model(const Pose &rel) { return {rel, compose_essential(rel)}; }

class RelativePoseProblem {
  public:
    using Model = RelativeModel;

    RelativePoseProblem(const MatchSet &set, const Camera &query_camera, const Camera &database_camera,
                        EssentialSolver solver, double threshold)
        : solver_(solver), pixel_scale_(std::sqrt(query_camera.focal() * database_camera.focal())),
          robust_scale_(kRobustScale * threshold) {
        for (std::size_t i = 0; i < set.size(); ++i) {
            const Correspondence &c = set.matches[i];
            matches_.push_back({database_camera.normalize(c.database), query_camera.normalize(c.query)});
            if (solver == EssentialSolver::kThreePointDepth && set.has_depths() && set.depths[i].valid())
                with_depth_.push_back(i);
        }
        if (solver == EssentialSolver::kThreePointDepth)
            depths_ = set.depths;
    }

    std::size_t num_data() const { return matches_.size(); }
    std::size_t sample_size() const { return solver_ == EssentialSolver::kFivePoint ? 5 : 3; }
    std::size_t num_samplable() const {
        return solver_ == EssentialSolver::kFivePoint ? matches_.size() : with_depth_.size();
    }

    bool sample(Rng &rng, std::vector<std::size_t> &out) const {
        if (solver_ == EssentialSolver::kFivePoint) {
            sample_uniform(rng, matches_.size(), 5, out);
            return true;
        }
        if (with_depth_.size() < 3)
            return false;
        sample_uniform(rng, with_depth_.size(), 3, out);
        for (std::size_t &i : out)
            i = with_depth_[i];
        return true;
    }

    void solve(std::span<const std::size_t> sample, std::vector<Model> &models) const {
        if (solver_ == EssentialSolver::kFivePoint) {
            std::array<NormalizedMatch, 5> m;
            for (std::size_t k = 0; k < 5; ++k)
                m[k] = matches_[sample[k]];
            for (const EssentialMatrix &E : essential_5pt(m)) {
                try {
                    models.push_back(make_model(decompose_essential(E, m)));
                } catch (const Error &) {
                }
            }
            return;
        }
        std::array<DepthMatch, 3> m;
        for (std::size_t k = 0; k < 3; ++k) {
            const std::size_t i = sample[k];
            m[k] = {matches_[i].x1, matches_[i].x2, depths_[i].database, depths_[i].query};
        }
        // The recovered depth scale is not needed for a direction-only pose.
        for (const ScaledRelativePose &s : essential_3pt_depth(m))
            models.push_back(make_model(Pose(s.R, s.direction)));
    }

    double residual(const Model &model, std::size_t i) const {
        return sampson_px(model.E, matches_[i].x1, matches_[i].x2, pixel_scale_);
    }

    bool local_optimize(const Model &model, std::span<const std::size_t> inliers, Model &out) const {
        std::vector<NormalizedMatch> subset;
        std::vector<double> weights;
        subset.reserve(inliers.size());
        for (std::size_t i : inliers) {
            subset.push_back(matches_[i]);
            weights.push_back(cauchy_weight(residual(model, i), robust_scale_));
        }
        const PoseRefinement r = refine_relative_pose_sampson(model.pose, subset, {}, weights);
        if (!r.summary.refined)
            return false;
        out = make_model(r.pose);
        return true;
    }

    // See the semi-generalized problem: Cauchy reweighting over the consensus
    // set after RANSAC.
    // Mean inlier count over re-paired correspondences.
    double chance_inliers(const Model &model, double threshold) const {
        const std::size_t n = matches_.size();
        std::size_t hits = 0;
        for (std::size_t s = 1; s <= kChanceShifts; ++s) {
            const std::size_t shift = std::max<std::size_t>(1, s * n / (kChanceShifts + 1));
            for (std::size_t i = 0; i < n; ++i) {
                const std::size_t j = (i + shift) % n;
                hits += sampson_px(model.E, matches_[j].x1, matches_[i].x2, pixel_scale_) <= threshold;
            }
        }
        return static_cast<double>(hits) / kChanceShifts;
    }

    Model polish(const Model &model, std::span<const char> mask) const {
        std::vector<NormalizedMatch> subset;
        std::vector<std::size_t> index;
        for (std::size_t i = 0; i < matches_.size(); ++i) {
            if (mask[i]) {
                subset.push_back(matches_[i]);
                index.push_back(i);
            }
        }
        Model current = model;
        std::vector<double> weights(subset.size());
        for (int round = 0; round < kPolishRounds; ++round) {
            for (std::size_t k = 0; k < index.size(); ++k)
                weights[k] = cauchy_weight(residual(current, index[k]), robust_scale_);
            const PoseRefinement r = refine_relative_pose_sampson(current.pose, subset, {}, weights);
            if (!r.summary.refined)
                break;
            current = make_model(r.pose);
        }
        return current;
    }

  private:
    EssentialSolver solver_;
    double pixel_scale_;
    double robust_scale_;
    std::vector<NormalizedMatch> matches_;  // x1 = database, x2 = query
    std::vector<DepthPair> depths_;
    std::vector<std::size_t> with_depth_;
};

const char *essential_stage_name(EssentialSolver solver) {
    return solver == EssentialSolver::kFivePoint ? "ess. matrix estimation (5Pt)" : "ess. matrix estimation (3Pt+depth)";
}

} // namespace

std::optional<RelativePoseEstimate> estimate_relative_pose(const MatchSet &matches, const Camera &query_camera,
                                                           const Camera &database_camera, EssentialSolver solver,
                                                           const RansacConfig &cfg) {
    const RelativePoseProblem problem(matches, query_camera, database_camera, solver, cfg.inlier_threshold);
    if (problem.num_samplable() < problem.sample_size())
        return std::nullopt;
    try {
        const auto est = lo_ransac(problem, cfg);
        const auto model = problem.polish(est.model, est.inlier_mask);
        RelativePoseEstimate out{model.pose, 0, std::vector<char>(problem.num_data(), 0)};
        for (std::size_t i = 0; i < problem.num_data(); ++i) {
            out.inlier_mask[i] = problem.residual(model, i) <= cfg.inlier_threshold;
            out.inliers += out.inlier_mask[i];
        }
        out.significance = support_significance(out.inliers, problem.sample_size(),
                                                problem.chance_inliers(model, cfg.inlier_threshold));
        return out;
    } catch (const Error &e) {
        if (e.code() == ErrorCode::kNoModelFound || e.code() == ErrorCode::kInsufficientData)
            return std::nullopt;
        throw;
    }
}

LocalizationEstimate localize_essmat(const QueryInput &input, EssentialSolver solver, const EssmatOptions &opt) {
    LocalizationEstimate out;
    out.query = input.name;
    std::vector<RelativeObservation> observations;
    for (const RetrievedImage *db : normalized_order(input)) {
        StageClock clock;
        RansacConfig cfg = opt.ransac;
        cfg.rng_seed = derive_seed(opt.ransac.rng_seed, input.name + "\n" + db->name);
        const auto rel = estimate_relative_pose(db->matches, input.camera, db->camera, solver, cfg);
        add_timing(out.timings, essential_stage_name(solver), "query-ref. pair", clock.elapsed_ms(), 1);
        if (!rel || rel->significance < cfg.min_significance)
            continue;
        RelativeObservation obs;
        obs.database = db->name;
        obs.database_pose = db->pose;
        obs.R = rel->relative.R;
        obs.direction = rel->relative.t.normalized();
        obs.weight = opt.inlier_weights ? static_cast<double>(rel->inliers) : 1.0;
        observations.push_back(obs);
        out.inliers += rel->inliers;
    }
    if (observations.size() < 2) {
        out.failure_reason = "fewer than two relative poses";
        out.inliers = 0;
        return out;
    }

    StageClock clock;
    try {
        const FusionResult fused = fuse_relative_poses(observations, opt.fusion);
        add_timing(out.timings, "pose estimation (cam. triangulation)", "ref. pair sample", clock.elapsed_ms(),
                   fused.solves);
        out.pose = fused.pose;
        out.success = true;
    } catch (const Error &e) {
        add_timing(out.timings, "pose estimation (cam. triangulation)", "ref. pair sample", clock.elapsed_ms(), 1);
        out.failure_reason = e.what();
        out.inliers = 0;
    }
    return out;
}

LocalizationEstimate localize_fuse_external(const std::string &query, std::vector<RelativeObservation> observations,
                                            const FusionOptions &opt) {
    LocalizationEstimate out;
    out.query = query;
    if (observations.size() < 2) {
        out.failure_reason = "fewer than two relative poses";
        return out;
    }
    StageClock clock;
    try {
        const FusionResult fused = fuse_relative_poses(std::move(observations), opt);
        add_timing(out.timings, "pose estimation (cam. triangulation)", "ref. pair sample", clock.elapsed_ms(),
                   fused.solves);
        out.pose = fused.pose;
        out.inliers = fused.used.size();
        out.success = true;
    } catch (const Error &e) {
        out.failure_reason = e.what();
    }
    return out;
}

} // namespace sloc

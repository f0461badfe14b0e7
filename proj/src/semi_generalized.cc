#include "sloc/semi_generalized.h"

#include "sloc/error.h"
#include "sloc/refinement.h"
#include "sloc/support.h"

#include <algorithm>
#include <cmath>

namespace sloc {

GeneralizedMatchPool GeneralizedMatchPool::from_query(const QueryInput &input) {
    GeneralizedMatchPool pool;
    for (const RetrievedImage *db : normalized_order(input)) {
        const std::size_t j = pool.database_poses.size();
        pool.database_poses.push_back(db->pose);
        pool.pixel_scales.push_back(std::sqrt(input.camera.focal() * db->camera.focal()));
        for (std::size_t i = 0; i < db->matches.size(); ++i) {
            PoolMatch m;
            m.database = j;
            m.x_query = input.camera.normalize(db->matches.matches[i].query);
            m.x_database = db->camera.normalize(db->matches.matches[i].database);
            if (db->matches.has_depths())
                m.depth = db->matches.depths[i];
            pool.matches.push_back(m);
        }
    }
    return pool;
}

SemiGeneralizedSampler::SemiGeneralizedSampler(const GeneralizedMatchPool &pool, SemiGeneralizedSolver solver)
    : anchor_size_(solver == SemiGeneralizedSolver::kE5p1 ? 5 : 3), pool_size_(pool.matches.size()) {
    const std::size_t n_db = pool.database_poses.size();
    usable_.resize(n_db);
    by_image_.resize(n_db);
    for (std::size_t i = 0; i < pool.matches.size(); ++i) {
        const PoolMatch &m = pool.matches[i];
        by_image_[m.database].push_back(i);
        if (solver == SemiGeneralizedSolver::kE5p1 || m.depth.valid())
            usable_[m.database].push_back(i);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n_db; ++j) {
        if (usable_[j].size() < anchor_size_ || pool_size_ - by_image_[j].size() < 1)
            continue;
        anchors_.push_back(j);
        total += static_cast<double>(usable_[j].size());
        cumulative_.push_back(total);
    }
}

SemiGeneralizedSample SemiGeneralizedSampler::draw(Rng &rng) const {
    if (anchors_.empty())
        throw Error(ErrorCode::kInfeasibleSample, "no database image can anchor a semi-generalized sample");
    const double u = std::uniform_real_distribution<double>(0.0, cumulative_.back())(rng);
    const std::size_t a =
        std::min<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), u) - cumulative_.begin(),
                              anchors_.size() - 1);
    const std::size_t anchor = anchors_[a];

    SemiGeneralizedSample s;
    const std::vector<std::size_t> &usable = usable_[anchor];
    sample_uniform(rng, usable.size(), anchor_size_, s.anchor);
    for (std::size_t &i : s.anchor)
        i = usable[i];

    // Uniform over the matches of the other images: index into the pool with
    // the anchor image's block skipped.
    const std::size_t others = pool_size_ - by_image_[anchor].size();
    std::size_t k = std::uniform_int_distribution<std::size_t>(0, others - 1)(rng);
    for (std::size_t j = 0; j < by_image_.size(); ++j) {
        if (j == anchor)
            continue;
        if (k < by_image_[j].size()) {
            s.extra = by_image_[j][k];
            break;
        }
        k -= by_image_[j].size();
    }
    return s;
}

namespace {

void append_scaled(const GeneralizedMatchPool &pool, const SemiGeneralizedSample &sample, std::size_t anchor,
                   const Pose &rel, std::vector<Pose> &out) {
    const PoolMatch &extra = pool.matches[sample.extra];
    try {
        const ScaledRelativePose s = scale_from_one_point(rel, extra.x_query, extra.x_database,
                                                          pool.database_poses[anchor], pool.database_poses[extra.database]);
        out.push_back(s.pose() * pool.database_poses[anchor]);
    } catch (const Error &) {
    }
}

} // namespace

std::vector<Pose> e5p1_solve(const GeneralizedMatchPool &pool, const SemiGeneralizedSample &sample) {
    if (sample.anchor.size() != 5)
        throw Error(ErrorCode::kInvalidArgument, "E5+1 needs 5 anchor matches");
    const std::size_t anchor = pool.matches[sample.anchor[0]].database;
    if (pool.matches[sample.extra].database == anchor)
        throw Error(ErrorCode::kInvalidArgument, "the +1 match must come from another image");
    std::array<NormalizedMatch, 5> m;
    for (std::size_t k = 0; k < 5; ++k)
        m[k] = {pool.matches[sample.anchor[k]].x_database, pool.matches[sample.anchor[k]].x_query};
    std::vector<Pose> out;
    for (const EssentialMatrix &E : essential_5pt(m)) {
        Pose rel;
        try {
            rel = decompose_essential(E, m);
        } catch (const Error &) {
            continue;
        }
        append_scaled(pool, sample, anchor, rel, out);
    }
    return out;
}

std::vector<Pose> e3p1_solve(const GeneralizedMatchPool &pool, const SemiGeneralizedSample &sample) {
    if (sample.anchor.size() != 3)
        throw Error(ErrorCode::kInvalidArgument, "E3+1 needs 3 anchor matches");
    const std::size_t anchor = pool.matches[sample.anchor[0]].database;
    if (pool.matches[sample.extra].database == anchor)
        throw Error(ErrorCode::kInvalidArgument, "the +1 match must come from another image");
    std::array<DepthMatch, 3> m;
    for (std::size_t k = 0; k < 3; ++k) {
        const PoolMatch &p = pool.matches[sample.anchor[k]];
        m[k] = {p.x_database, p.x_query, p.depth.database, p.depth.query};
    }
    std::vector<Pose> out;
    // The depth scale is replaced by the one recovered from the +1 match.
    for (const ScaledRelativePose &s : essential_3pt_depth(m))
        append_scaled(pool, sample, anchor, Pose(s.R, s.direction), out);
    return out;
}

double generalized_residual_px(const GeneralizedMatchPool &pool, const Pose &query, std::size_t i) {
    const PoolMatch &m = pool.matches[i];
    const EssentialMatrix E = compose_essential(relative_pose(pool.database_poses[m.database], query));
    return sampson_px(E, m.x_database, m.x_query, pool.pixel_scales[m.database]);
}

namespace {

struct GeneralizedModel {
    Pose pose;
    std::vector<EssentialMatrix> E;
};

class SemiGeneralizedProblem {
  public:
    using Model = GeneralizedModel;

    SemiGeneralizedProblem(const GeneralizedMatchPool &pool, SemiGeneralizedSolver solver, double threshold)
        : pool_(pool), solver_(solver), sampler_(pool, solver), robust_scale_(kRobustScale * threshold) {}

    bool feasible() const { return sampler_.feasible(); }
    std::size_t num_data() const { return pool_.matches.size(); }
    std::size_t sample_size() const { return solver_ == SemiGeneralizedSolver::kE5p1 ? 6 : 4; }

    bool sample(Rng &rng, std::vector<std::size_t> &out) const {
        const SemiGeneralizedSample s = sampler_.draw(rng);
        out = s.anchor;
        out.push_back(s.extra);
        return true;
    }

    void solve(std::span<const std::size_t> idx, std::vector<Model> &models) const {
        SemiGeneralizedSample s;
        s.anchor.assign(idx.begin(), idx.end() - 1);
        s.extra = idx.back();
        const std::vector<Pose> poses =
            solver_ == SemiGeneralizedSolver::kE5p1 ? e5p1_solve(pool_, s) : e3p1_solve(pool_, s);
        for (const Pose &p : poses)
            models.push_back(make_model(p));
    }

    double residual(const Model &model, std::size_t i) const {
        const PoolMatch &m = pool_.matches[i];
        return sampson_px(model.E[m.database], m.x_database, m.x_query, pool_.pixel_scales[m.database]);
    }

    bool local_optimize(const Model &model, std::span<const std::size_t> inliers, Model &out) const {
        std::vector<GeneralizedMatch> subset;
        subset.reserve(inliers.size());
        for (std::size_t i : inliers) {
            const PoolMatch &m = pool_.matches[i];
            const double w = cauchy_weight(residual(model, i), robust_scale_);
            subset.push_back({m.x_query, m.x_database, m.database, pool_.pixel_scales[m.database], w});
        }
        const PoseRefinement r = refine_generalized_sampson(model.pose, subset, pool_.database_poses);
        if (!r.summary.refined)
            return false;
        out = make_model(r.pose);
        return true;
    }

    // Cauchy-weighted reweighting over the consensus set. Maximizing the inlier
    // count alone favours poses that also graze a few outliers; this pulls the
    // pose back to the bulk of the inliers.
    // Mean inlier count over correspondences re-paired within each database
    // image.
    double chance_inliers(const Model &model, double threshold) const {
        std::vector<std::vector<std::size_t>> by_image(pool_.database_poses.size());
        for (std::size_t i = 0; i < pool_.matches.size(); ++i)
            by_image[pool_.matches[i].database].push_back(i);
        std::size_t hits = 0;
        for (std::size_t d = 0; d < by_image.size(); ++d) {
            const auto &idx = by_image[d];
            const std::size_t n = idx.size();
            if (n < 2)
                continue;
            for (std::size_t s = 1; s <= kChanceShifts; ++s) {
                const std::size_t shift = std::max<std::size_t>(1, s * n / (kChanceShifts + 1));
                for (std::size_t k = 0; k < n; ++k) {
                    const PoolMatch &q = pool_.matches[idx[k]];
                    const PoolMatch &db = pool_.matches[idx[(k + shift) % n]];
                    hits += sampson_px(model.E[d], db.x_database, q.x_query, pool_.pixel_scales[d]) <= threshold;
                }
            }
        }
        return static_cast<double>(hits) / kChanceShifts;
    }

    Model polish(const Model &model, std::span<const char> mask) const {
        Model current = model;
        for (int round = 0; round < kPolishRounds; ++round) {
            std::vector<GeneralizedMatch> subset;
            for (std::size_t i = 0; i < pool_.matches.size(); ++i) {
                if (!mask[i])
                    continue;
                const PoolMatch &m = pool_.matches[i];
                const double w = cauchy_weight(residual(current, i), robust_scale_);
                subset.push_back({m.x_query, m.x_database, m.database, pool_.pixel_scales[m.database], w});
            }
            const PoseRefinement r = refine_generalized_sampson(current.pose, subset, pool_.database_poses);
            if (!r.summary.refined)
                break;
            current = make_model(r.pose);
        }
        return current;
    }

  private:
    Model make_model(const Pose &p) const {
        Model m;
        m.pose = p;
        for (const Pose &db : pool_.database_poses)
            m.E.push_back(compose_essential(relative_pose(db, p)));
        return m;
    }

    const GeneralizedMatchPool &pool_;
    SemiGeneralizedSolver solver_;
    SemiGeneralizedSampler sampler_;
    double robust_scale_;
};

} // namespace

LocalizationEstimate localize_semi_generalized(const QueryInput &input, SemiGeneralizedSolver solver,
                                               const SemiGeneralizedOptions &opt) {
    const char *stage =
        solver == SemiGeneralizedSolver::kE5p1 ? "pose estimation (E5+1 solver)" : "pose estimation (E3+1 solver)";
    LocalizationEstimate out;
    out.query = input.name;
    StageClock clock;
    const GeneralizedMatchPool pool = GeneralizedMatchPool::from_query(input);
    const SemiGeneralizedProblem problem(pool, solver, opt.ransac.inlier_threshold);
    if (!problem.feasible()) {
        add_timing(out.timings, stage, "query", clock.elapsed_ms(), 1);
        out.failure_reason = "no database image can anchor a semi-generalized sample";
        return out;
    }
    RansacConfig cfg = opt.ransac;
    cfg.rng_seed = derive_seed(opt.ransac.rng_seed, input.name);
    try {
        const auto est = lo_ransac(problem, cfg);
        const auto model = problem.polish(est.model, est.inlier_mask);
        out.pose = model.pose;
        for (std::size_t i = 0; i < problem.num_data(); ++i)
            out.inliers += problem.residual(model, i) <= cfg.inlier_threshold;
        const double z = support_significance(out.inliers, problem.sample_size(),
                                              problem.chance_inliers(model, cfg.inlier_threshold));
        if (z >= cfg.min_significance) {
            out.success = true;
        } else {
            out.failure_reason = "inlier support at chance level";
            out.inliers = 0;
        }
    } catch (const Error &e) {
        out.failure_reason = e.what();
    }
    add_timing(out.timings, stage, "query", clock.elapsed_ms(), 1);
    return out;
}

} // namespace sloc

#include "sloc/pipeline.h"

#include "sloc/alignment.h"
#include "sloc/error.h"
#include "sloc/local_sfm.h"
#include "sloc/pose_fusion.h"
#include "sloc/semi_generalized.h"

#include <algorithm>
#include <atomic>
#include <thread>

namespace sloc {

namespace {

const std::vector<std::pair<Method, std::string>> &method_names() {
    static const std::vector<std::pair<Method, std::string>> names = {
        {Method::kEssmat5pt, "essmat-5pt"},       {Method::kEssmat3ptDepth, "essmat-3pt-depth"},
        {Method::kE5p1, "e5p1"},                  {Method::kE3p1, "e3p1"},
        {Method::kLocalAll, "local-all"},         {Method::kLocalPairs, "local-pairs"},
        {Method::kFuseExternal, "fuse-external"}, {Method::kAlignExternal, "align-external"},
    };
    return names;
}

LocalSfmOptions local_options(const RunOptions &opt) {
    LocalSfmOptions o;
    o.ransac = opt.config.ransac;
    o.ransac.rng_seed = opt.seed;
    o.features = opt.config.features;
    o.dense_radius_px = opt.config.dense_radius_px;
    o.sparse_triangulation_px = opt.config.sparse_triangulation_px;
    o.dense_triangulation_px = opt.config.dense_triangulation_px;
    return o;
}

std::vector<std::string> top_k_names(const Dataset &ds, const std::string &query, std::size_t top_k) {
    std::vector<std::string> names;
    const auto &list = ds.retrieval.at(query);
    for (std::size_t i = 0; i < list.size() && names.size() < top_k; ++i)
        if (std::find(names.begin(), names.end(), list[i].database) == names.end())
            names.push_back(list[i].database);
    return names;
}

LocalizationEstimate fuse_external(const Dataset &ds, const std::string &query, const RunOptions &opt) {
    const auto retrieved = top_k_names(ds, query, opt.top_k);
    std::vector<RelativeObservation> observations;
    const auto it = ds.relative_poses.find(query);
    if (it != ds.relative_poses.end())
        for (const ExternalRelativePose &r : it->second) {
            if (std::find(retrieved.begin(), retrieved.end(), r.database) == retrieved.end())
                continue;
            RelativeObservation obs;
            obs.database = r.database;
            obs.database_pose = ds.database_poses.at(r.database);
            obs.R = r.R;
            obs.direction = r.direction;
            obs.source = RelativeSource::kExternal;
            observations.push_back(obs);
        }
    return localize_fuse_external(query, std::move(observations), opt.config.fusion);
}

LocalizationEstimate align_external(const Dataset &ds, const std::string &query, const RunOptions &opt) {
    LocalizationEstimate out;
    out.query = query;
    const auto retrieved = top_k_names(ds, query, opt.top_k);

    StageClock align_clock;
    std::vector<Pose> hypotheses;
    std::size_t subsets = 0;
    for (const LocalSubset &s : ds.local_subsets) {
        if (!s.poses.count(query))
            continue;
        ++subsets;
        LocalReconstruction rec;
        rec.local_poses = s.poses;
        for (const auto &[name, pose] : s.poses)
            if (name != query && std::find(retrieved.begin(), retrieved.end(), name) != retrieved.end())
                rec.world_poses[name] = ds.database_poses.at(name);
        try {
            hypotheses.push_back(align_reconstruction(rec).world_poses.at(query));
        } catch (const Error &) {
        }
    }
    add_timing(out.timings, "pose estimation (alignment)", "subset", align_clock.elapsed_ms(), subsets);
    if (hypotheses.empty()) {
        out.failure_reason = "no local reconstruction could be aligned";
        return out;
    }

    StageClock select_clock;
    std::vector<HypothesisEvidence> evidence;
    for (const std::string &d : retrieved) {
        try {
            MatchSet m = load_matches(ds, query, d);
            evidence.push_back({ds.database_poses.at(d), ds.cameras.at(d), std::move(m.matches)});
        } catch (const Error &) {
        }
    }
    try {
        const HypothesisScore best = select_hypothesis(hypotheses, ds.cameras.at(query), evidence, opt.config.select);
        out.pose = hypotheses[best.index];
        out.inliers = best.inliers;
        out.success = true;
    } catch (const Error &e) {
        out.failure_reason = e.what();
    }
    add_timing(out.timings, "hypothesis selection", "query", select_clock.elapsed_ms(), 1);
    return out;
}

} // namespace

std::optional<Method> parse_method(const std::string &name) {
    for (const auto &[m, n] : method_names())
        if (n == name)
            return m;
    return std::nullopt;
}

std::string method_name(Method m) {
    for (const auto &[mm, n] : method_names())
        if (mm == m)
            return n;
    return "unknown";
}

bool needs_depths(Method m) { return m == Method::kEssmat3ptDepth || m == Method::kE3p1; }

LocalizationEstimate localize_query(const QueryInput &input, const RunOptions &opt) {
    switch (opt.method) {
    case Method::kEssmat5pt:
    case Method::kEssmat3ptDepth: {
        EssmatOptions o;
        o.ransac = opt.config.ransac;
        o.ransac.rng_seed = opt.seed;
        o.fusion = opt.config.fusion;
        o.inlier_weights = opt.config.inlier_weights;
        return localize_essmat(input,
                               opt.method == Method::kEssmat5pt ? EssentialSolver::kFivePoint
                                                                : EssentialSolver::kThreePointDepth,
                               o);
    }
    case Method::kE5p1:
    case Method::kE3p1: {
        SemiGeneralizedOptions o;
        o.ransac = opt.config.ransac;
        o.ransac.rng_seed = opt.seed;
        return localize_semi_generalized(
            input, opt.method == Method::kE5p1 ? SemiGeneralizedSolver::kE5p1 : SemiGeneralizedSolver::kE3p1, o);
    }
    case Method::kLocalAll:
        return localize_local_all(input, local_options(opt));
    case Method::kLocalPairs:
        return localize_local_pairs(input, local_options(opt));
    default:
        throw Error(ErrorCode::kConfiguration, method_name(opt.method) + " does not run on matches alone");
    }
}

QueryInput load_query_input(const Dataset &ds, const std::string &query, std::size_t top_k) {
    QueryInput in;
    in.name = query;
    in.camera = ds.cameras.at(query);
    for (const std::string &d : top_k_names(ds, query, top_k))
        in.retrieved.push_back({d, ds.database_poses.at(d), ds.cameras.at(d), load_matches(ds, query, d)});
    return in;
}

std::vector<LocalizationEstimate> run_pipeline(const Dataset &ds, const RunOptions &opt) {
    opt.config.ransac.validate();
    if (opt.top_k == 0)
        throw Error(ErrorCode::kConfiguration, "top-k must be at least 1");
    if (needs_depths(opt.method) && !ds.has_depths())
        throw Error(ErrorCode::kConfiguration, method_name(opt.method) + " needs depths but the dataset has none");
    if (opt.method == Method::kFuseExternal && ds.relative_poses.empty())
        throw Error(ErrorCode::kConfiguration, "fuse-external needs a relative_poses file");
    if (opt.method == Method::kAlignExternal && ds.local_subsets.empty())
        throw Error(ErrorCode::kConfiguration, "align-external needs a local_recon file");

    const std::vector<std::string> queries = ds.queries();
    std::vector<LocalizationEstimate> results(queries.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < queries.size(); i = next++) {
            const std::string &q = queries[i];
            StageClock clock;
            LocalizationEstimate e;
            try {
                if (opt.method == Method::kFuseExternal)
                    e = fuse_external(ds, q, opt);
                else if (opt.method == Method::kAlignExternal)
                    e = align_external(ds, q, opt);
                else
                    e = localize_query(load_query_input(ds, q, opt.top_k), opt);
            } catch (const std::exception &ex) {
                e = failed_estimate(q, ex.what());
            }
            e.total_ms = clock.elapsed_ms();
            results[i] = std::move(e);
        }
    };
    const std::size_t n_threads = std::max<std::size_t>(1, std::min(opt.threads, queries.size()));
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < n_threads; ++t)
        pool.emplace_back(worker);
    worker();
    for (std::thread &t : pool)
        t.join();
    return results;
}

} // namespace sloc

#include <doctest.h>

#include "sloc/error.h"
#include "sloc/semi_generalized.h"

#include "scene.h"
#include "support.h"

#include <algorithm>
#include <cmath>
#include <set>

using namespace sloc;

namespace {

// Sampson distance of x_q^T E x_d = 0 with E = [t]x R, written out from the
// first-order error expression.
double sampson_px(const Pose &rel, const Vec2 &xq, const Vec2 &xd, double pixel_scale) {
    const Mat3 E = testing::skew(rel.t) * rel.R;
    const Vec3 q = xq.homogeneous();
    const Vec3 d = xd.homogeneous();
    const double r = q.dot(E * d);
    const Vec3 Ed = E * d;
    const Vec3 Etq = E.transpose() * q;
    const double den = Ed.head<2>().squaredNorm() + Etq.head<2>().squaredNorm();
    return std::abs(r) / std::sqrt(den) * pixel_scale;
}

bool contains_pose(const std::vector<Pose> &candidates, const Pose &truth, double tol) {
    return std::any_of(candidates.begin(), candidates.end(), [&](const Pose &p) {
        return (p.R - truth.R).norm() < tol && (p.center() - truth.center()).norm() < tol;
    });
}

SemiGeneralizedSample exact_sample(const GeneralizedMatchPool &pool, std::mt19937_64 &rng, std::size_t anchor_db,
                                   std::size_t anchor_size) {
    std::vector<std::size_t> in_anchor, others;
    for (std::size_t i = 0; i < pool.matches.size(); ++i)
        (pool.matches[i].database == anchor_db ? in_anchor : others).push_back(i);
    std::shuffle(in_anchor.begin(), in_anchor.end(), rng);
    SemiGeneralizedSample s;
    s.anchor.assign(in_anchor.begin(), in_anchor.begin() + anchor_size);
    s.extra = others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
    return s;
}

} // namespace

TEST_CASE("pool keeps image order by name and tags matches") {
    testing::SceneSpec spec;
    spec.n_database = 3;
    auto scene = testing::make_scene(spec);
    std::reverse(scene.input.retrieved.begin(), scene.input.retrieved.end());
    const auto pool = GeneralizedMatchPool::from_query(scene.input);
    REQUIRE(pool.database_poses.size() == 3);
    CHECK((pool.database_poses[0].R - scene.input.retrieved[2].pose.R).norm() == 0.0);
    CHECK(pool.pixel_scales[1] == doctest::Approx(600.0));
    std::size_t total = 0;
    for (const auto &db : scene.input.retrieved)
        total += db.matches.size();
    CHECK(pool.matches.size() == total);
    CHECK(std::is_sorted(pool.matches.begin(), pool.matches.end(),
                         [](const PoolMatch &a, const PoolMatch &b) { return a.database < b.database; }));
}

TEST_CASE("generalized residual matches the two-view Sampson distance") {
    testing::SceneSpec spec;
    spec.n_database = 4;
    spec.noise_px = 2.0;
    const auto scene = testing::make_scene(spec);
    const auto pool = GeneralizedMatchPool::from_query(scene.input);
    std::mt19937_64 rng(3);
    const Pose guess(testing::small_rotation(rng, 2.0) * scene.query.R, scene.query.t + Vec3(0.1, -0.05, 0.2));
    for (std::size_t i = 0; i < pool.matches.size(); i += 7) {
        const auto &m = pool.matches[i];
        const Pose &db = pool.database_poses[m.database];
        const Pose rel(guess.R * db.R.transpose(), guess.t - guess.R * db.R.transpose() * db.t);
        CHECK(generalized_residual_px(pool, guess, i) ==
              doctest::Approx(sampson_px(rel, m.x_query, m.x_database, pool.pixel_scales[m.database])).epsilon(1e-9));
    }

    testing::SceneSpec exact = spec;
    exact.noise_px = 0.0;
    const auto clean = testing::make_scene(exact);
    const auto clean_pool = GeneralizedMatchPool::from_query(clean.input);
    for (std::size_t i = 0; i < clean_pool.matches.size(); ++i)
        CHECK(generalized_residual_px(clean_pool, clean.query, i) < 1e-8);
}

TEST_CASE("E5+1 and E3+1 recover the true pose from exact samples") {
    for (int trial = 0; trial < 20; ++trial) {
        testing::SceneSpec spec;
        spec.n_database = 3;
        spec.seed = 40 + trial;
        const auto scene = testing::make_scene(spec);
        const auto pool = GeneralizedMatchPool::from_query(scene.input);
        std::mt19937_64 rng(trial);
        const std::size_t anchor = trial % 3;

        const auto s5 = exact_sample(pool, rng, anchor, 5);
        const auto c5 = e5p1_solve(pool, s5);
        CHECK(c5.size() <= 10);
        CHECK(contains_pose(c5, scene.query, 1e-6));

        const auto s3 = exact_sample(pool, rng, anchor, 3);
        const auto c3 = e3p1_solve(pool, s3);
        CHECK(c3.size() <= 4);
        CHECK(contains_pose(c3, scene.query, 1e-6));
    }
}

TEST_CASE("E3+1 ignores the depth scale of the anchor image") {
    testing::SceneSpec spec;
    spec.n_database = 2;
    spec.seed = 77;
    auto scene = testing::make_scene(spec);
    for (auto &db : scene.input.retrieved)
        for (auto &d : db.matches.depths) {
            d.query *= 2.5;
            d.database *= 2.5;
        }
    const auto pool = GeneralizedMatchPool::from_query(scene.input);
    std::mt19937_64 rng(1);
    const auto s = exact_sample(pool, rng, 0, 3);
    CHECK(contains_pose(e3p1_solve(pool, s), scene.query, 1e-6));
}

TEST_CASE("sampler structure and anchor frequencies") {
    testing::SceneSpec spec;
    spec.n_database = 3;
    spec.n_points = 150;
    const auto scene = testing::make_scene(spec);
    auto pool = GeneralizedMatchPool::from_query(scene.input);
    // Invalidate the depths of every other match in image 0.
    std::size_t usable0 = 0;
    for (std::size_t i = 0, k = 0; i < pool.matches.size(); ++i) {
        if (pool.matches[i].database != 0)
            continue;
        if (k++ % 2)
            pool.matches[i].depth.query = std::numeric_limits<double>::quiet_NaN();
        else
            ++usable0;
    }
    std::vector<std::size_t> count(3, 0);
    for (const auto &m : pool.matches)
        ++count[m.database];

    for (auto solver : {SemiGeneralizedSolver::kE5p1, SemiGeneralizedSolver::kE3p1}) {
        const SemiGeneralizedSampler sampler(pool, solver);
        REQUIRE(sampler.feasible());
        const std::size_t k = solver == SemiGeneralizedSolver::kE5p1 ? 5 : 3;
        std::vector<double> usable(count.begin(), count.end());
        if (solver == SemiGeneralizedSolver::kE3p1)
            usable[0] = static_cast<double>(usable0);
        const double total = usable[0] + usable[1] + usable[2];

        Rng rng(11);
        const int draws = 30000;
        std::vector<int> hits(3, 0);
        for (int d = 0; d < draws; ++d) {
            const auto s = sampler.draw(rng);
            REQUIRE(s.anchor.size() == k);
            const std::size_t a = pool.matches[s.anchor[0]].database;
            std::set<std::size_t> distinct(s.anchor.begin(), s.anchor.end());
            CHECK(distinct.size() == k);
            for (auto i : s.anchor) {
                CHECK(pool.matches[i].database == a);
                if (solver == SemiGeneralizedSolver::kE3p1)
                    CHECK(pool.matches[i].depth.valid());
            }
            CHECK(pool.matches[s.extra].database != a);
            ++hits[a];
        }
        for (int j = 0; j < 3; ++j) {
            const double p = usable[j] / total;
            const double sigma = std::sqrt(p * (1 - p) / draws);
            CHECK(std::abs(hits[j] / double(draws) - p) < 5 * sigma);
        }
    }
}

TEST_CASE("sampler infeasible with a single image") {
    testing::SceneSpec spec;
    spec.n_database = 1;
    const auto scene = testing::make_scene(spec);
    const auto pool = GeneralizedMatchPool::from_query(scene.input);
    const SemiGeneralizedSampler sampler(pool, SemiGeneralizedSolver::kE5p1);
    CHECK_FALSE(sampler.feasible());
    Rng rng(1);
    bool threw = false;
    try {
        sampler.draw(rng);
    } catch (const Error &e) {
        threw = e.code() == ErrorCode::kInfeasibleSample;
    }
    CHECK(threw);

    const auto est = localize_semi_generalized(scene.input, SemiGeneralizedSolver::kE5p1, {});
    CHECK_FALSE(est.success);
}

TEST_CASE("semi-generalized localization of noise-free and outlier scenes") {
    for (auto solver : {SemiGeneralizedSolver::kE5p1, SemiGeneralizedSolver::kE3p1}) {
        testing::SceneSpec spec;
        spec.seed = 5;
        const auto scene = testing::make_scene(spec);
        const auto est = localize_semi_generalized(scene.input, solver, {});
        REQUIRE(est.success);
        CHECK((est.pose.center() - scene.query.center()).norm() < 1e-6);
        CHECK(testing::angle_between_deg(est.pose.R, scene.query.R) < 1e-5);

        testing::SceneSpec noisy = spec;
        noisy.noise_px = 1.0;
        noisy.outlier_fraction = 0.3;
        const auto ns = testing::make_scene(noisy);
        const auto ne = localize_semi_generalized(ns.input, solver, {});
        REQUIRE(ne.success);
        CHECK((ne.pose.center() - ns.query.center()).norm() < 0.1);

        testing::SceneSpec junk = spec;
        junk.outlier_fraction = 1.0;
        junk.n_points = 400;
        const auto js = testing::make_scene(junk);
        CHECK_FALSE(localize_semi_generalized(js.input, solver, {}).success);
    }
}

TEST_CASE("semi-generalized localization is deterministic") {
    testing::SceneSpec spec;
    spec.noise_px = 1.0;
    spec.outlier_fraction = 0.4;
    const auto scene = testing::make_scene(spec);
    SemiGeneralizedOptions opt;
    opt.ransac.rng_seed = 9;
    const auto a = localize_semi_generalized(scene.input, SemiGeneralizedSolver::kE5p1, opt);
    const auto b = localize_semi_generalized(scene.input, SemiGeneralizedSolver::kE5p1, opt);
    REQUIRE(a.success);
    CHECK((a.pose.R - b.pose.R).norm() == 0.0);
    CHECK((a.pose.t - b.pose.t).norm() == 0.0);
    CHECK(a.inliers == b.inliers);
}

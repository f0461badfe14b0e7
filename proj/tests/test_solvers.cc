#include <doctest.h>

#include "sloc/error.h"
#include "sloc/geometry.h"
#include "sloc/solvers.h"

#include "support.h"

#include <cmath>

using namespace sloc;

namespace {

template <typename F>
ErrorCode error_of(F &&f) {
    try {
        f();
    } catch (const Error &e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::kInvalidArgument;
}

std::vector<NormalizedMatch> to_matches(const testing::TwoViewProblem &p) {
    std::vector<NormalizedMatch> m;
    for (std::size_t i = 0; i < p.x1.size(); ++i)
        m.push_back({p.x1[i], p.x2[i]});
    return m;
}

Mat3 normalized_essential(const testing::TwoViewProblem &p) {
    const Mat3 E = testing::skew(p.t) * p.R;
    return E / E.norm();
}

double min_sign_distance(const Mat3 &A, const Mat3 &B) { return std::min((A - B).norm(), (A + B).norm()); }

// Absolute pose problem: random camera looking at points in a box.
struct AbsoluteProblem {
    Pose pose;
    std::vector<WorldMatch> matches;
};

AbsoluteProblem random_absolute(std::mt19937_64 &rng) {
    AbsoluteProblem p;
    const Vec3 center = 8.0 * testing::random_unit(rng);
    const Mat3 R = testing::look_at(center, Vec3::Zero(), testing::random_unit(rng));
    p.pose = Pose::from_center(R, center);
    while (p.matches.size() < 3) {
        const Vec3 X(testing::uniform(rng, -2, 2), testing::uniform(rng, -2, 2), testing::uniform(rng, -2, 2));
        const Vec3 Xc = R * X + p.pose.t;
        if (Xc.z() < 1.0)
            continue;
        p.matches.push_back({Xc.hnormalized(), X});
    }
    return p;
}

struct DepthProblem {
    testing::TwoViewProblem base;
    std::vector<DepthMatch> matches;
};

DepthProblem random_depth_problem(std::mt19937_64 &rng, int n, double depth_scale1 = 1.0, double depth_scale2 = 1.0) {
    DepthProblem p;
    p.base = testing::random_two_view(rng, n);
    for (int i = 0; i < n; ++i) {
        const Vec3 X1 = p.base.points[i];
        const Vec3 X2 = p.base.R * X1 + p.base.t;
        // z-depth, the convention of depth maps.
        p.matches.push_back({p.base.x1[i], p.base.x2[i], depth_scale1 * X1.z(), depth_scale2 * X2.z()});
    }
    return p;
}

} // namespace

TEST_CASE("essential_5pt: ground truth among candidates") {
    std::mt19937_64 rng(100);
    int found = 0;
    const int trials = 1000;
    for (int trial = 0; trial < trials; ++trial) {
        const auto prob = testing::random_two_view(rng, 5);
        const auto Es = essential_5pt(to_matches(prob));
        CHECK(Es.size() <= 10);
        const Mat3 Egt = normalized_essential(prob);
        double best = 1e300;
        for (const Mat3 &E : Es)
            best = std::min(best, min_sign_distance(E, Egt));
        found += best < 1e-9;
    }
    CHECK(found == trials);
}

TEST_CASE("essential_5pt: algebraic constraints on 10,000 random problems") {
    std::mt19937_64 rng(101);
    std::size_t max_count = 0;
    int violations = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const auto prob = testing::random_two_view(rng, 5);
        const auto Es = essential_5pt(to_matches(prob));
        max_count = std::max(max_count, Es.size());
        for (const Mat3 &E : Es) {
            bool ok = std::abs(E.norm() - 1.0) < 1e-12 && std::abs(E.determinant()) < 1e-8;
            for (int i = 0; i < 5; ++i)
                ok = ok && std::abs(prob.x2[i].homogeneous().dot(E * prob.x1[i].homogeneous())) < 1e-8;
            const Mat3 EEt = E * E.transpose();
            ok = ok && (2.0 * EEt * E - EEt.trace() * E).norm() < 1e-6;
            violations += !ok;
        }
    }
    CHECK(max_count <= 10);
    CHECK(violations == 0);
}

TEST_CASE("essential_5pt: duplicated points are degenerate") {
    std::mt19937_64 rng(102);
    auto prob = testing::random_two_view(rng, 5);
    auto m = to_matches(prob);
    m[3] = m[1];
    m[4] = m[0];
    CHECK(error_of([&] { essential_5pt(m); }) == ErrorCode::kDegenerateSample);
}

TEST_CASE("p3p: ground truth among candidates") {
    std::mt19937_64 rng(200);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto prob = random_absolute(rng);
        const auto poses = p3p(prob.matches);
        REQUIRE(!poses.empty());
        CHECK(poses.size() <= 4);
        double best_pos = 1e300, best_rot = 1e300;
        for (const Pose &pose : poses) {
            const double dp = (pose.center() - prob.pose.center()).norm();
            if (dp < best_pos) {
                best_pos = dp;
                best_rot = testing::angle_between_deg(pose.R, prob.pose.R);
            }
        }
        CHECK(best_pos < 1e-9);
        CHECK(best_rot < 1e-7);
    }
}

TEST_CASE("p3p: candidates reproject within 1e-6 px on 10,000 problems") {
    std::mt19937_64 rng(201);
    std::size_t max_count = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 10000; ++trial) {
        const auto prob = random_absolute(rng);
        const auto poses = p3p(prob.matches);
        max_count = std::max(max_count, poses.size());
        for (const Pose &pose : poses) {
            for (const auto &m : prob.matches) {
                const Vec3 Xc = pose.R * m.X + pose.t;
                REQUIRE(Xc.z() > 0);
                worst = std::max(worst, 1000.0 * (Xc.hnormalized() - m.x).norm());
            }
        }
    }
    CHECK(max_count <= 4);
    CHECK(worst < 1e-6);
}

TEST_CASE("p3p: degenerate inputs") {
    std::vector<WorldMatch> m = {{Vec2(0.0, 0.0), Vec3(0, 0, 5)}, {Vec2(0.1, 0.0), Vec3(1, 0, 5)},
                                 {Vec2(0.2, 0.0), Vec3(2, 0, 5)}};
    CHECK(error_of([&] { p3p(m); }) == ErrorCode::kDegenerateSample);

    m = {{Vec2(0.0, 0.0), Vec3(0, 0, 5)}, {Vec2(0.0, 0.0), Vec3(1, 0, 5)}, {Vec2(0.2, 0.1), Vec3(2, 1, 5)}};
    CHECK(error_of([&] { p3p(m); }) == ErrorCode::kDegenerateSample);
}

TEST_CASE("essential_3pt_depth: exact depths recover the relative pose") {
    std::mt19937_64 rng(300);
    for (int trial = 0; trial < 500; ++trial) {
        const double k = testing::uniform(rng, 0.2, 5.0);
        const auto prob = random_depth_problem(rng, 3, k, 1.0);
        const auto sols = essential_3pt_depth(prob.matches);
        REQUIRE(!sols.empty());
        CHECK(sols.size() <= 4);
        const auto &s = sols.front();
        CHECK(testing::angle_between_deg(s.R, prob.base.R) < 1e-6);
        CHECK(direction_angle_deg(s.direction, prob.base.t) < 1e-6);
        CHECK(std::abs(s.direction.norm() - 1.0) < 1e-12);
        // P2 = R (s P1) + t with P1 inflated by k: s = 1 / k.
        CHECK(std::abs(s.scale * k - 1.0) < 1e-9);
    }
}

TEST_CASE("essential_3pt_depth: invariance to rescaling either depth channel") {
    std::mt19937_64 rng(301);
    for (int trial = 0; trial < 500; ++trial) {
        auto prob = random_depth_problem(rng, 3);
        const auto ref = essential_3pt_depth(prob.matches).front();
        const double k = testing::uniform(rng, 0.1, 10.0);
        auto scaled1 = prob.matches, scaled2 = prob.matches;
        for (auto &m : scaled1)
            m.d1 *= k;
        for (auto &m : scaled2)
            m.d2 *= k;
        const auto a = essential_3pt_depth(scaled1).front();
        const auto b = essential_3pt_depth(scaled2).front();
        CHECK((a.R - ref.R).norm() < 1e-9);
        CHECK((a.direction - ref.direction).norm() < 1e-9);
        CHECK(std::abs(a.scale * k / ref.scale - 1.0) < 1e-9);
        CHECK((b.R - ref.R).norm() < 1e-9);
        CHECK((b.direction - ref.direction).norm() < 1e-9);
        CHECK(std::abs(b.scale / (k * ref.scale) - 1.0) < 1e-9);
    }
}

TEST_CASE("essential_3pt_depth: scale and shift model") {
    std::mt19937_64 rng(302);
    for (int trial = 0; trial < 200; ++trial) {
        auto prob = random_depth_problem(rng, 4, 1.7, 1.0);
        for (auto &m : prob.matches) {
            m.d1 += 0.4;
            m.d2 -= 0.3;
        }
        const auto sols = essential_3pt_depth(prob.matches, DepthModel::kScaleShift);
        REQUIRE(!sols.empty());
        CHECK(testing::angle_between_deg(sols.front().R, prob.base.R) < 1e-6);
        CHECK(direction_angle_deg(sols.front().direction, prob.base.t) < 1e-6);
    }
}

TEST_CASE("essential_3pt_depth: collinear lifted points are degenerate") {
    std::vector<DepthMatch> m;
    for (int i = 0; i < 3; ++i) {
        const Vec3 X(0.5 * i, 0.2 * i, 5.0);
        const Vec3 Y = X + Vec3(1, 0, 0);
        m.push_back({X.hnormalized(), Y.hnormalized(), X.z(), Y.z()});
    }
    CHECK(error_of([&] { essential_3pt_depth(m); }) == ErrorCode::kDegenerateSample);
}

TEST_CASE("essential_3pt_depth: negative relative scale") {
    std::mt19937_64 rng(303);
    auto prob = random_depth_problem(rng, 3);
    // Mirror the first image's points through the camera center.
    for (auto &m : prob.matches)
        m.d1 = -m.d1;
    const ErrorCode code = error_of([&] { essential_3pt_depth(prob.matches); });
    CHECK((code == ErrorCode::kNegativeScale || code == ErrorCode::kInvalidDepth));
}

namespace {

struct ThreeCameraScene {
    Pose query, a, b;
    Vec3 X;  // seen by query and b
};

ThreeCameraScene random_three_cameras(std::mt19937_64 &rng) {
    ThreeCameraScene s;
    auto cam = [&](const Vec3 &c) { return Pose::from_center(testing::look_at(c, Vec3::Zero(), testing::random_unit(rng)), c); };
    s.query = cam(Vec3(testing::uniform(rng, -3, 3), testing::uniform(rng, -3, 3), -10.0));
    s.a = cam(Vec3(testing::uniform(rng, -6, -2), testing::uniform(rng, -3, 3), -9.0));
    s.b = cam(Vec3(testing::uniform(rng, 2, 6), testing::uniform(rng, -3, 3), -9.0));
    s.X = Vec3(testing::uniform(rng, -2, 2), testing::uniform(rng, -2, 2), testing::uniform(rng, -2, 2));
    return s;
}

Vec2 normalized_projection(const Pose &pose, const Vec3 &X) { return pose.apply(X).hnormalized(); }

} // namespace

TEST_CASE("scale_from_one_point recovers the true scale") {
    std::mt19937_64 rng(400);
    for (int trial = 0; trial < 500; ++trial) {
        const auto s = random_three_cameras(rng);
        const Pose rel = relative_pose(s.a, s.query);
        const Pose rel_unit(rel.R, rel.t.normalized());
        const auto out =
            scale_from_one_point(rel_unit, normalized_projection(s.query, s.X), normalized_projection(s.b, s.X), s.a, s.b);
        CHECK(std::abs(out.scale / rel.t.norm() - 1.0) < 1e-8);
        CHECK((out.R - rel.R).norm() < 1e-12);
        CHECK((out.pose().t - rel.t).norm() < 1e-8 * rel.t.norm());
    }
}

TEST_CASE("scale_from_one_point is similarity equivariant") {
    std::mt19937_64 rng(401);
    for (int trial = 0; trial < 200; ++trial) {
        const auto s = random_three_cameras(rng);
        const double k = testing::uniform(rng, 0.1, 20.0);
        auto scaled = [&](const Pose &p) { return Pose(p.R, k * p.t); };
        const Pose rel = relative_pose(s.a, s.query);
        const Pose rel_unit(rel.R, rel.t.normalized());
        const Vec2 xq = normalized_projection(s.query, s.X), xb = normalized_projection(s.b, s.X);
        const auto o1 = scale_from_one_point(rel_unit, xq, xb, s.a, s.b);
        const auto o2 = scale_from_one_point(rel_unit, xq, xb, scaled(s.a), scaled(s.b));
        CHECK(std::abs(o2.scale / (k * o1.scale) - 1.0) < 1e-9);
        CHECK((o2.R - o1.R).norm() < 1e-12);
    }
}

TEST_CASE("scale_from_one_point: B equal to A is unobservable") {
    std::mt19937_64 rng(402);
    const auto s = random_three_cameras(rng);
    const Pose rel = relative_pose(s.a, s.query);
    const Pose rel_unit(rel.R, rel.t.normalized());
    const ErrorCode code = error_of([&] {
        scale_from_one_point(rel_unit, normalized_projection(s.query, s.X), normalized_projection(s.a, s.X), s.a, s.a);
    });
    CHECK(code == ErrorCode::kUnobservableScale);
}

TEST_CASE("triangulate_2view: exact rays and errors") {
    std::mt19937_64 rng(500);
    for (int trial = 0; trial < 500; ++trial) {
        const auto s = random_three_cameras(rng);
        const Vec3 b1 = s.a.apply(s.X).normalized(), b2 = s.b.apply(s.X).normalized();
        CHECK((triangulate_2view(b1, s.a, b2, s.b) - s.X).norm() < 1e-9);
    }
    const auto s = random_three_cameras(rng);
    const Vec3 b1 = s.a.apply(s.X).normalized();
    CHECK(error_of([&] { triangulate_2view(b1, s.a, b1, s.a); }) == ErrorCode::kParallelRays);

    // Flip the second ray so the intersection lands behind camera b.
    const Vec3 behind = s.b.center() - 2.0 * (s.X - s.b.center());
    const Vec3 b2 = s.b.apply(behind).normalized();
    const Vec3 b1_behind = s.a.apply(behind).normalized();
    CHECK(error_of([&] { triangulate_2view(b1_behind, s.a, b2, s.b); }) == ErrorCode::kCheirality);
}

TEST_CASE("triangulate_nview: exact rays, consistency and duplicates") {
    std::mt19937_64 rng(501);
    for (int trial = 0; trial < 300; ++trial) {
        const Vec3 X(testing::uniform(rng, -2, 2), testing::uniform(rng, -2, 2), testing::uniform(rng, -2, 2));
        std::vector<Ray> rays;
        for (int i = 0; i < 5; ++i) {
            const Vec3 c = X + testing::uniform(rng, 5, 15) * testing::random_unit(rng);
            const Pose pose = Pose::from_center(testing::look_at(c, X), c);
            rays.push_back({pose.apply(X).normalized(), pose});
        }
        CHECK((triangulate_nview(rays) - X).norm() < 1e-9);

        // Perturb the bearings; n = 2 must agree with the midpoint.
        for (auto &r : rays)
            r.bearing = (r.bearing + 1e-3 * testing::random_unit(rng)).normalized();
        const std::vector<Ray> two(rays.begin(), rays.begin() + 2);
        const Vec3 mid = triangulate_2view(two[0].bearing, two[0].pose, two[1].bearing, two[1].pose);
        CHECK((triangulate_nview(two) - mid).norm() < 1e-9);

        // Sum of squared perpendicular distances, evaluated independently.
        auto objective = [&](const Vec3 &Y) {
            double sum = 0.0;
            for (const auto &r : rays) {
                const Vec3 dir = r.pose.R.transpose() * r.bearing;
                const Vec3 v = Y - r.pose.center();
                sum += (v - v.dot(dir) * dir).squaredNorm();
            }
            return sum;
        };
        const Vec3 Y = triangulate_nview(rays);
        for (std::size_t i = 0; i < rays.size(); ++i)
            for (std::size_t j = i + 1; j < rays.size(); ++j) {
                const Vec3 m = triangulate_2view(rays[i].bearing, rays[i].pose, rays[j].bearing, rays[j].pose);
                CHECK(objective(Y) <= objective(m) + 1e-15);
            }

        // An exact ray duplicated on exact data leaves the point in place.
        std::vector<Ray> exact;
        for (const auto &r : rays)
            exact.push_back({r.pose.apply(X).normalized(), r.pose});
        exact.push_back(exact[2]);
        CHECK((triangulate_nview(exact) - X).norm() < 1e-9);
    }
}

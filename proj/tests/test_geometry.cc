#include <doctest.h>

#include "sloc/error.h"
#include "sloc/geometry.h"
#include "sloc/solvers.h"

#include "support.h"

#include <cmath>

using namespace sloc;

namespace {

Camera test_camera() {
    Camera cam;
    cam.fx = 1000.0;
    cam.fy = 980.0;
    cam.cx = 640.0;
    cam.cy = 360.0;
    cam.width = 1280;
    cam.height = 720;
    return cam;
}

Pose random_pose(std::mt19937_64 &rng, double spread = 5.0) {
    return Pose::from_center(testing::random_rotation(rng),
                             Vec3(testing::uniform(rng, -spread, spread), testing::uniform(rng, -spread, spread),
                                  testing::uniform(rng, -spread, spread)));
}

// Gold-standard two-view correction distance: minimize |u|^2 + dist(x2, l(x1 + u))^2
// over u by Gauss-Newton with finite differences.
double geometric_error_sq(const Mat3 &E, const Vec2 &x1, const Vec2 &x2) {
    auto residual = [&](const Vec2 &u) {
        const Vec3 l = E * (x1 + u).homogeneous();
        const double d = x2.homogeneous().dot(l) / std::hypot(l(0), l(1));
        return Vec3(u(0), u(1), d);
    };
    Vec2 u = Vec2::Zero();
    for (int it = 0; it < 50; ++it) {
        const Vec3 r = residual(u);
        Eigen::Matrix<double, 3, 2> J;
        const double h = 1e-9;
        for (int k = 0; k < 2; ++k) {
            Vec2 du = Vec2::Zero();
            du(k) = h;
            J.col(k) = (residual(u + du) - residual(u - du)) / (2 * h);
        }
        const Vec2 step = (J.transpose() * J).ldlt().solve(-J.transpose() * r);
        u += step;
        if (step.norm() < 1e-16)
            break;
    }
    return residual(u).squaredNorm();
}

} // namespace

TEST_CASE("pixel_to_bearing maps the principal point onto the optical axis") {
    const Camera cam = test_camera();
    const Bearing b = pixel_to_bearing(Vec2(cam.cx, cam.cy), cam);
    CHECK((b - Vec3(0, 0, 1)).norm() < 1e-15);
}

TEST_CASE("pixel_to_bearing of a 45 degree ray") {
    Camera cam;
    cam.fx = cam.fy = 100.0;
    cam.cx = cam.cy = 50.0;
    cam.width = cam.height = 200;
    const Bearing b = pixel_to_bearing(Vec2(150, 50), cam);
    CHECK((b - Vec3(1, 0, 1) / std::sqrt(2.0)).norm() < 1e-15);
    CHECK(std::abs(b.norm() - 1.0) < 1e-12);
}

TEST_CASE("pixel <-> bearing round trip over the image domain") {
    std::mt19937_64 rng(1);
    const Camera cam = test_camera();
    for (int i = 0; i < 1000; ++i) {
        const Vec2 p(testing::uniform(rng, 0, cam.width), testing::uniform(rng, 0, cam.height));
        const Bearing b = pixel_to_bearing(p, cam);
        CHECK(std::abs(b.norm() - 1.0) < 1e-12);
        CHECK((bearing_to_pixel(b, cam) - p).norm() < 1e-9);
    }
}

TEST_CASE("camera validation rejects broken intrinsics") {
    Camera cam = test_camera();
    CHECK_NOTHROW(cam.validate());
    cam.fx = -1.0;
    CHECK_THROWS_AS(cam.validate(), Error);
    cam = test_camera();
    cam.cx = cam.width + 1.0;
    CHECK_FALSE(cam.valid());
}

TEST_CASE("project: optical axis and behind-camera flag") {
    std::mt19937_64 rng(2);
    const Camera cam = test_camera();
    const Pose pose = random_pose(rng);
    const Vec3 X = pose.center() + pose.R.transpose() * Vec3(0, 0, 1);
    const auto px = project(X, pose, cam);
    REQUIRE(px.has_value());
    CHECK((*px - Vec2(cam.cx, cam.cy)).norm() < 1e-9);

    const Vec3 behind = pose.center() + pose.R.transpose() * Vec3(0.1, 0.2, -3.0);
    CHECK_FALSE(project(behind, pose, cam).has_value());
}

TEST_CASE("project / triangulate round trip") {
    std::mt19937_64 rng(3);
    const Camera cam = test_camera();
    int checked = 0;
    while (checked < 1000) {
        const Vec3 X(testing::uniform(rng, -3, 3), testing::uniform(rng, -3, 3), testing::uniform(rng, -3, 3));
        const Vec3 c1 = X + 10.0 * testing::random_unit(rng);
        const Vec3 c2 = X + 10.0 * testing::random_unit(rng);
        const Pose p1(testing::look_at(c1, X + Vec3::Random()), Vec3::Zero());
        const Pose p2(testing::look_at(c2, X + Vec3::Random()), Vec3::Zero());
        const Pose pose1 = Pose::from_center(p1.R, c1), pose2 = Pose::from_center(p2.R, c2);
        const auto u1 = project(X, pose1, cam), u2 = project(X, pose2, cam);
        if (!u1 || !u2 || direction_angle_deg(c1 - X, c2 - X) < 2.0)
            continue;
        const Vec3 Y = triangulate_2view(pixel_to_bearing(*u1, cam), pose1, pixel_to_bearing(*u2, cam), pose2);
        const auto v1 = project(Y, pose1, cam);
        REQUIRE(v1.has_value());
        CHECK((*v1 - *u1).norm() < 1e-6);
        ++checked;
    }
}

TEST_CASE("rotation_angle_deg basics") {
    std::mt19937_64 rng(4);
    const Mat3 R = testing::random_rotation(rng);
    CHECK(rotation_angle_deg(R, R) < 1e-6);
    CHECK(std::abs(rotation_angle_deg(Mat3::Identity(), testing::rot(Vec3::UnitZ(), testing::rad(30))) - 30.0) < 1e-9);
}

TEST_CASE("rotation_angle_deg recovers constructed angles") {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 1000; ++i) {
        const Mat3 R = testing::random_rotation(rng);
        const double theta = testing::uniform(rng, 1e-3, 179.999);
        const Mat3 Rt = testing::rot(testing::random_unit(rng), testing::rad(theta));
        CHECK(std::abs(rotation_angle_deg(R, R * Rt) - theta) < 1e-7);
    }
}

TEST_CASE("rotation_angle_deg is a metric") {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 1000; ++i) {
        const Mat3 A = testing::random_rotation(rng), B = testing::random_rotation(rng), C = testing::random_rotation(rng);
        CHECK(std::abs(rotation_angle_deg(A, B) - rotation_angle_deg(B, A)) < 1e-9);
        CHECK(rotation_angle_deg(A, C) <= rotation_angle_deg(A, B) + rotation_angle_deg(B, C) + 1e-6);
        CHECK(rotation_angle_deg(A, B) > 0.0);
    }
}

TEST_CASE("position_error_m") {
    std::mt19937_64 rng(7);
    const Pose p = random_pose(rng);
    CHECK(position_error_m(p, p) == 0.0);
    const Pose q = Pose::from_center(p.R, p.center() + Vec3(0.3, 0.0, 0.4));
    CHECK(std::abs(position_error_m(p, q) - 0.5) < 1e-12);

    for (int i = 0; i < 100; ++i) {
        const Pose a = random_pose(rng), b = random_pose(rng);
        // Rigid change of world frame: x_new = Q x_old + s.
        const Mat3 Q = testing::random_rotation(rng);
        const Vec3 s = Vec3::Random() * 10.0;
        auto move = [&](const Pose &pose) { return Pose(pose.R * Q.transpose(), pose.t - pose.R * Q.transpose() * s); };
        CHECK(std::abs(position_error_m(move(a), move(b)) - position_error_m(a, b)) < 1e-9);
    }
}

TEST_CASE("sampson_error vanishes on exact correspondences") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const auto prob = testing::random_two_view(rng, 20);
        const Mat3 E = testing::skew(prob.t) * prob.R;
        for (int i = 0; i < 20; ++i)
            CHECK(sampson_error(E, prob.x1[i], prob.x2[i]) < 1e-14);
    }
}

TEST_CASE("sampson_error at the epipoles is +inf") {
    const Mat3 R = Mat3::Identity();
    const Vec3 t(0.2, -0.1, 1.0);
    const Mat3 E = testing::skew(t) * R;
    // Epipole in image 1 is the projection of camera 2's center, in image 2
    // the projection of camera 1's center. Both are t / t_z here.
    const Vec2 e = t.hnormalized();
    CHECK(std::isinf(sampson_error(E, e, e)));
}

TEST_CASE("sampson_error approximates the geometric error for small perturbations") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 50; ++trial) {
        const auto prob = testing::random_two_view(rng, 5);
        const Mat3 E = testing::skew(prob.t) * prob.R;
        for (int i = 0; i < 5; ++i) {
            const Vec3 l = E * prob.x1[i].homogeneous();
            const Vec2 normal = Vec2(l(0), l(1)).normalized();
            for (double delta : {1e-3, 1e-4, 1e-5}) {
                const Vec2 x2 = prob.x2[i] + delta * normal;
                const double s = sampson_error(E, prob.x1[i], x2);
                const double g = geometric_error_sq(E, prob.x1[i], x2);
                CHECK(std::abs(s - g) <= 0.05 * g);
                // Never larger than the one-sided squared distance delta^2.
                CHECK(s <= delta * delta * (1 + 1e-9));
            }
        }
    }
}

TEST_CASE("decompose_essential recovers the generating pose") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 200; ++trial) {
        const auto prob = testing::random_two_view(rng, 20);
        std::vector<NormalizedMatch> m;
        for (int i = 0; i < 20; ++i)
            m.push_back({prob.x1[i], prob.x2[i]});
        // Arbitrary scale and sign of E do not matter.
        const Mat3 E = -3.7 * compose_essential(Pose(prob.R, 2.5 * prob.t));
        const Pose rel = decompose_essential(E, m);
        CHECK(testing::angle_between_deg(rel.R, prob.R) < 1e-6);
        CHECK(direction_angle_deg(rel.t, prob.t) < 1e-6);
        CHECK(std::abs(rel.t.norm() - 1.0) < 1e-12);
    }
}

TEST_CASE("decompose_essential rejects pure rotation") {
    std::mt19937_64 rng(11);
    const auto prob = testing::random_two_view(rng, 10);
    std::vector<NormalizedMatch> m;
    for (int i = 0; i < 10; ++i)
        m.push_back({prob.x1[i], prob.x2[i]});
    const Mat3 E = compose_essential(Pose(prob.R, Vec3::Zero()));
    try {
        decompose_essential(E, m);
        FAIL("expected an error");
    } catch (const Error &e) {
        CHECK(e.code() == ErrorCode::kAmbiguousCheirality);
    }
}

TEST_CASE("decompose_essential separates t and -t with a single point") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 200; ++trial) {
        const auto prob = testing::random_two_view(rng, 1);
        const std::vector<NormalizedMatch> m = {{prob.x1[0], prob.x2[0]}};
        const Mat3 E = compose_essential(Pose(prob.R, prob.t));
        // Brute force: DLT-triangulate under each factorization and keep the
        // ones that put the point in front of both cameras.
        int in_front = 0;
        Pose expected;
        for (const Pose &cand : essential_factorizations(E / E.norm())) {
            Eigen::Matrix<double, 4, 4> A;
            Eigen::Matrix<double, 3, 4> P1 = Eigen::Matrix<double, 3, 4>::Zero(), P2;
            P1.leftCols<3>() = Mat3::Identity();
            P2.leftCols<3>() = cand.R;
            P2.col(3) = cand.t;
            A.row(0) = prob.x1[0](0) * P1.row(2) - P1.row(0);
            A.row(1) = prob.x1[0](1) * P1.row(2) - P1.row(1);
            A.row(2) = prob.x2[0](0) * P2.row(2) - P2.row(0);
            A.row(3) = prob.x2[0](1) * P2.row(2) - P2.row(1);
            Eigen::JacobiSVD<Eigen::Matrix4d> svd(A, Eigen::ComputeFullV);
            const Eigen::Vector4d Xh = svd.matrixV().col(3);
            const Vec3 X = Xh.hnormalized();
            if (X.z() > 0 && (cand.R * X + cand.t).z() > 0) {
                ++in_front;
                expected = cand;
            }
        }
        REQUIRE(in_front == 1);
        const Pose rel = decompose_essential(E, m);
        CHECK((rel.R - expected.R).norm() < 1e-12);
        CHECK((rel.t - expected.t).norm() < 1e-12);
        CHECK(direction_angle_deg(rel.t, prob.t) < 1e-6);
    }
}

TEST_CASE("quaternion conversion round trip and canonical sign") {
    std::mt19937_64 rng(13);
    for (int i = 0; i < 100; ++i) {
        const Mat3 R = testing::random_rotation(rng);
        const Vec4 q = quaternion_from_rotation(R);
        CHECK(q(0) >= 0.0);
        CHECK((rotation_from_quaternion(q) - R).norm() < 1e-12);
        CHECK((rotation_from_quaternion(-q) - R).norm() < 1e-12);
    }
    CHECK(is_rotation(rotation_from_quaternion(Vec4(0.5, 0.5, 0.5, 0.5))));
}

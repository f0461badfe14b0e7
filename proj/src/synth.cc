#include "sloc/synth.h"

#include "sloc/error.h"
#include "sloc/geometry.h"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

namespace sloc {

namespace fs = std::filesystem;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Values pass through float32 in the match files; rounding here keeps the
// in-memory scene identical to a reloaded one.
double f32(double v) { return static_cast<double>(static_cast<float>(v)); }

std::string numbered(const char *prefix, int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s%03d", prefix, i);
    return buf;
}

Rotation look_at(const Vec3 &center, const Vec3 &target, double roll) {
    const Vec3 z = (target - center).normalized();
    Vec3 x = Vec3::UnitY().cross(z);
    if (x.norm() < 1e-6)
        x = Vec3::UnitX().cross(z);
    x.normalize();
    const Vec3 y = z.cross(x);
    Rotation R;
    R.row(0) = x.transpose();
    R.row(1) = y.transpose();
    R.row(2) = z.transpose();
    return axis_angle(Vec3::UnitZ(), roll) * R;
}

std::string format_pose_line(const Rotation &R, const Vec3 &t) {
    const Vec4 q = quaternion_from_rotation(R);
    std::string out;
    char buf[40];
    for (double v : {q(0), q(1), q(2), q(3), t.x(), t.y(), t.z()}) {
        std::snprintf(buf, sizeof(buf), " %.17g", v);
        out += buf;
    }
    return out;
}

} // namespace

SynthScene synth_scene(const SynthConfig &cfg) {
    if (cfg.n_points < 20 || cfg.n_database < 3 || cfg.n_queries < 1)
        throw Error(ErrorCode::kInvalidArgument, "synth_scene needs >= 20 points, >= 3 cameras and >= 1 query");
    if (!(cfg.outlier_fraction >= 0.0 && cfg.outlier_fraction <= 1.0) || cfg.noise_px < 0.0 || cfg.depth_noise < 0.0 ||
        !(cfg.scene_scale > 0.0))
        throw Error(ErrorCode::kInvalidArgument, "synth_scene: invalid noise, outlier or scale setting");

    std::mt19937_64 rng(cfg.seed);
    auto uniform = [&](double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); };
    auto gaussian = [&](double sigma) { return sigma > 0.0 ? std::normal_distribution<double>(0.0, sigma)(rng) : 0.0; };
    const double s = cfg.scene_scale;

    SynthScene scene;
    for (int i = 0; i < cfg.n_points; ++i)
        scene.points.emplace_back(uniform(-s / 2, s / 2), uniform(-s / 2, s / 2), uniform(-s / 2, s / 2));

    auto place = [&](double phi_deg) {
        const double r = s * uniform(0.95, 1.05);
        const double phi = phi_deg * kDeg;
        const Vec3 c(r * std::sin(phi), uniform(-0.1 * s, 0.1 * s), -r * std::cos(phi));
        const Vec3 target(uniform(-0.1 * s, 0.1 * s), uniform(-0.1 * s, 0.1 * s), uniform(-0.1 * s, 0.1 * s));
        return Pose::from_center(look_at(c, target, uniform(-5.0, 5.0) * kDeg), c);
    };
    auto camera = [&] {
        Camera cam;
        cam.width = 640;
        cam.height = 480;
        cam.fx = cam.fy = f32(600.0 + uniform(-30.0, 30.0));
        cam.cx = 320.0;
        cam.cy = 240.0;
        return cam;
    };
    for (int i = 0; i < cfg.n_database; ++i) {
        const double span = 100.0 / std::max(cfg.n_database - 1, 1);
        const std::string name = numbered("db", i);
        scene.database_poses[name] = place(-50.0 + i * span + uniform(-3.0, 3.0));
        scene.cameras[name] = camera();
    }
    for (int i = 0; i < cfg.n_queries; ++i) {
        const std::string name = numbered("q", i);
        scene.query_poses[name] = place(uniform(-45.0, 45.0));
        scene.cameras[name] = camera();
    }

    // Keypoints: projection plus a fixed noise offset per (image, point).
    struct Keypoint {
        bool visible = false;
        Vec2 pixel;
        double depth = 0.0;
    };
    std::map<std::string, std::vector<Keypoint>> keypoints;
    std::map<std::string, double> depth_scale;
    auto observe = [&](const std::string &name, const Pose &pose) {
        const Camera &cam = scene.cameras[name];
        auto &kps = keypoints[name];
        kps.resize(scene.points.size());
        depth_scale[name] = uniform(0.5, 2.0);
        for (std::size_t k = 0; k < scene.points.size(); ++k) {
            const auto p = project(scene.points[k], pose, cam);
            const double nx = gaussian(cfg.noise_px), ny = gaussian(cfg.noise_px);
            if (!p || pose.apply(scene.points[k]).z() < 0.1 * s || !cam.contains(*p))
                continue;
            kps[k].visible = true;
            const Vec2 noisy = *p + Vec2(nx, ny);
            kps[k].pixel = Vec2(f32(std::clamp(noisy.x(), 0.0, double(cam.width))),
                                f32(std::clamp(noisy.y(), 0.0, double(cam.height))));
            kps[k].depth = pose.apply(scene.points[k]).z();
        }
    };
    for (const auto &[name, pose] : scene.database_poses)
        observe(name, pose);
    for (const auto &[name, pose] : scene.query_poses)
        observe(name, pose);

    auto noisy_depth = [&](const std::string &name, double z) {
        return f32(depth_scale[name] * z * std::max(1.0 + gaussian(cfg.depth_noise), 0.05));
    };
    for (const auto &[q, q_pose] : scene.query_poses) {
        std::vector<RetrievalEntry> entries;
        for (const auto &[d, d_pose] : scene.database_poses) {
            MatchSet set;
            set.query = q;
            set.database = d;
            const Camera &dcam = scene.cameras[d];
            for (std::size_t k = 0; k < scene.points.size(); ++k) {
                const Keypoint &kq = keypoints[q][k], &kd = keypoints[d][k];
                if (!kq.visible || !kd.visible)
                    continue;
                Correspondence c{kq.pixel, kd.pixel};
                DepthPair depth{noisy_depth(q, kq.depth), noisy_depth(d, kd.depth)};
                if (uniform(0.0, 1.0) < cfg.outlier_fraction) {
                    c.database = Vec2(f32(uniform(0.0, dcam.width)), f32(uniform(0.0, dcam.height)));
                    depth.database = f32(depth_scale[d] * uniform(0.5 * s, 3.0 * s));
                }
                set.matches.push_back(c);
                set.depths.push_back(depth);
                set.query_keypoint_ids.push_back(static_cast<int>(k));
            }
            if (set.matches.empty())
                continue;
            entries.push_back({d, static_cast<double>(set.size())});
            scene.matches[{q, d}] = std::move(set);

            const Pose rel = relative_pose(d_pose, q_pose);
            scene.relative_poses.push_back({q, d, rel.R, rel.t.normalized()});
        }
        std::stable_sort(entries.begin(), entries.end(),
                         [](const RetrievalEntry &a, const RetrievalEntry &b) { return a.score > b.score; });
        scene.retrieval[q] = entries;

        // Local reconstruction in a random similarity frame x_world = a * Q * x_local + b.
        const double a = uniform(0.2, 5.0);
        const Rotation Q = Eigen::Quaterniond(gaussian(1.0), gaussian(1.0), gaussian(1.0), gaussian(1.0))
                               .normalized()
                               .toRotationMatrix();
        const Vec3 b(uniform(-10, 10), uniform(-10, 10), uniform(-10, 10));
        LocalSubset subset;
        subset.id = q + "_s0";
        auto to_local = [&](const Pose &w) { return Pose(w.R * Q, (w.R * b + w.t) / a); };
        subset.poses[q] = to_local(q_pose);
        for (const RetrievalEntry &e : entries)
            subset.poses[e.database] = to_local(scene.database_poses[e.database]);
        scene.local_subsets.push_back(std::move(subset));
    }
    return scene;
}

QueryInput make_query_input(const SynthScene &scene, const std::string &query, std::size_t top_k) {
    QueryInput in;
    in.name = query;
    in.camera = scene.cameras.at(query);
    const auto &list = scene.retrieval.at(query);
    for (std::size_t i = 0; i < list.size() && i < top_k; ++i) {
        const std::string &d = list[i].database;
        in.retrieved.push_back({d, scene.database_poses.at(d), scene.cameras.at(d), scene.matches.at({query, d})});
    }
    return in;
}

void write_synth_dataset(const SynthScene &scene, const fs::path &dir) {
    fs::create_directories(dir / "matches");
    auto open = [&](const char *name) {
        std::ofstream os(dir / name);
        if (!os)
            throw Error(ErrorCode::kInvalidArgument, (dir / name).string() + ": cannot write file");
        return os;
    };
    {
        auto os = open("manifest.txt");
        os << "database_poses = database_poses.txt\n"
           << "intrinsics = intrinsics.txt\n"
           << "retrieval = retrieval.txt\n"
           << "matches = matches\n"
           << "depths = embedded\n"
           << "query_poses = query_poses.txt\n"
           << "relative_poses = relative_poses.txt\n"
           << "local_recon = local_recon.txt\n";
    }
    {
        auto os = open("database_poses.txt");
        write_poses(os, scene.database_poses);
    }
    {
        auto os = open("query_poses.txt");
        write_poses(os, scene.query_poses);
    }
    {
        auto os = open("intrinsics.txt");
        write_intrinsics(os, scene.cameras);
    }
    {
        auto os = open("retrieval.txt");
        write_retrieval(os, scene.retrieval);
    }
    {
        auto os = open("relative_poses.txt");
        for (const ExternalRelativePose &r : scene.relative_poses) {
            const Vec4 q = quaternion_from_rotation(r.R);
            char buf[40];
            os << r.query << ' ' << r.database;
            for (double v : {q(0), q(1), q(2), q(3), r.direction.x(), r.direction.y(), r.direction.z()}) {
                std::snprintf(buf, sizeof(buf), " %.17g", v);
                os << buf;
            }
            os << '\n';
        }
    }
    {
        auto os = open("local_recon.txt");
        for (const LocalSubset &s : scene.local_subsets)
            for (const auto &[name, pose] : s.poses)
                os << s.id << ' ' << name << format_pose_line(pose.R, pose.t) << '\n';
    }
    for (const auto &[key, set] : scene.matches)
        write_match_file(dir / "matches" / match_file_name(key.first, key.second), set);
}

} // namespace sloc

#include "sloc/local_sfm.h"

#include "sloc/error.h"
#include "sloc/refinement.h"
#include "sloc/support.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>
#include <unordered_map>

namespace sloc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool pixel_less(const Vec2 &a, const Vec2 &b) { return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()); }

std::pair<std::uint64_t, std::uint64_t> pixel_key(const Vec2 &p) {
    std::uint64_t x, y;
    std::memcpy(&x, &p.x(), sizeof(x));
    std::memcpy(&y, &p.y(), sizeof(y));
    return {x, y};
}

double reprojection_px(const Vec3 &X, const Pose &pose, const Camera &cam, const Vec2 &pixel) {
    const auto p = project(X, pose, cam);
    return p ? (*p - pixel).norm() : kInf;
}

// Nearest query pixel of `to` for every query pixel of `from`, searched in a
// uniform grid with cell size `radius`. -1 when nothing lies within radius.
class PixelGrid {
  public:
    PixelGrid(const std::vector<Correspondence> &matches, double radius) : radius_(radius), matches_(matches) {
        for (std::size_t i = 0; i < matches.size(); ++i)
            cells_[cell_key(cell(matches[i].query.x()), cell(matches[i].query.y()))].push_back(i);
    }

    long nearest(const Vec2 &p, double &dist) const {
        const long cx = cell(p.x()), cy = cell(p.y());
        long best = -1;
        dist = kInf;
        for (long dx = -1; dx <= 1; ++dx)
            for (long dy = -1; dy <= 1; ++dy) {
                const auto it = cells_.find(cell_key(cx + dx, cy + dy));
                if (it == cells_.end())
                    continue;
                for (std::size_t i : it->second) {
                    const double d = (matches_[i].query - p).norm();
                    if (d < dist || (d == dist && static_cast<long>(i) < best)) {
                        dist = d;
                        best = static_cast<long>(i);
                    }
                }
            }
        return dist <= radius_ ? best : -1;
    }

  private:
    long cell(double v) const { return static_cast<long>(std::floor(v / radius_)); }
    static std::int64_t cell_key(long x, long y) { return (static_cast<std::int64_t>(x) << 32) ^ (y & 0xffffffffLL); }

    double radius_;
    const std::vector<Correspondence> &matches_;
    std::unordered_map<std::int64_t, std::vector<std::size_t>> cells_;
};

} // namespace

std::vector<Track> build_tracks_sparse(std::span<const MatchSet> sets) {
    const bool use_ids =
        !sets.empty() && std::all_of(sets.begin(), sets.end(), [](const MatchSet &s) {
            return s.query_keypoint_ids.size() == s.matches.size();
        });
    std::map<std::pair<std::uint64_t, std::uint64_t>, std::size_t> index;
    std::vector<Track> tracks;
    std::vector<std::map<std::size_t, Vec2>> per_image;
    for (std::size_t j = 0; j < sets.size(); ++j) {
        for (std::size_t i = 0; i < sets[j].size(); ++i) {
            const Correspondence &c = sets[j].matches[i];
            const auto key = use_ids ? std::make_pair(static_cast<std::uint64_t>(sets[j].query_keypoint_ids[i]),
                                                      std::uint64_t{0})
                                     : pixel_key(c.query);
            auto [it, inserted] = index.emplace(key, tracks.size());
            if (inserted) {
                tracks.push_back({c.query, {}, std::nullopt, {}});
                per_image.emplace_back();
            }
            auto &obs = per_image[it->second];
            auto found = obs.find(j);
            if (found == obs.end())
                obs.emplace(j, c.database);
            else if (pixel_less(c.database, found->second))
                found->second = c.database;
        }
    }
    for (std::size_t t = 0; t < tracks.size(); ++t)
        for (const auto &[j, px] : per_image[t])
            tracks[t].observations.push_back({j, px});
    return tracks;
}

std::vector<Track> build_tracks_dense(std::span<const MatchSet> sets, double radius) {
    if (!(radius > 0.0))
        throw Error(ErrorCode::kInvalidArgument, "dense track radius must be positive");
    // Nodes are all matches, numbered consecutively image by image.
    std::vector<std::size_t> offset(sets.size() + 1, 0);
    for (std::size_t j = 0; j < sets.size(); ++j)
        offset[j + 1] = offset[j] + sets[j].size();
    const std::size_t n = offset.back();

    struct Link {
        double dist;
        std::size_t a, b;
    };
    std::vector<Link> links;
    std::vector<PixelGrid> grids;
    grids.reserve(sets.size());
    for (const MatchSet &s : sets)
        grids.emplace_back(s.matches, radius);
    for (std::size_t i = 0; i < sets.size(); ++i)
        for (std::size_t j = i + 1; j < sets.size(); ++j)
            for (std::size_t a = 0; a < sets[i].size(); ++a) {
                double d;
                const long b = grids[j].nearest(sets[i].matches[a].query, d);
                if (b < 0)
                    continue;
                double back_d;
                if (grids[i].nearest(sets[j].matches[b].query, back_d) != static_cast<long>(a))
                    continue;
                links.push_back({d, offset[i] + a, offset[j] + static_cast<std::size_t>(b)});
            }
    std::sort(links.begin(), links.end(), [](const Link &x, const Link &y) {
        if (x.dist != y.dist)
            return x.dist < y.dist;
        return x.a != y.a ? x.a < y.a : x.b < y.b;
    });

    std::vector<std::size_t> parent(n), image_of(n);
    std::iota(parent.begin(), parent.end(), 0);
    std::vector<std::vector<std::size_t>> images(n);
    for (std::size_t j = 0; j < sets.size(); ++j)
        for (std::size_t k = offset[j]; k < offset[j + 1]; ++k) {
            image_of[k] = j;
            images[k] = {j};
        }
    auto find = [&](std::size_t x) {
        while (parent[x] != x)
            x = parent[x] = parent[parent[x]];
        return x;
    };
    for (const Link &l : links) {
        std::size_t ra = find(l.a), rb = find(l.b);
        if (ra == rb)
            continue;
        const auto &ia = images[ra], &ib = images[rb];
        std::vector<std::size_t> common;
        std::set_intersection(ia.begin(), ia.end(), ib.begin(), ib.end(), std::back_inserter(common));
        if (!common.empty())
            continue;
        if (rb < ra)
            std::swap(ra, rb);
        std::vector<std::size_t> merged;
        std::merge(images[ra].begin(), images[ra].end(), images[rb].begin(), images[rb].end(),
                   std::back_inserter(merged));
        images[ra] = std::move(merged);
        images[rb].clear();
        parent[rb] = ra;
    }

    std::vector<Track> tracks;
    std::vector<long> track_of(n, -1);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t r = find(k);
        if (track_of[r] < 0) {
            track_of[r] = static_cast<long>(tracks.size());
            tracks.emplace_back();
            tracks.back().query_pixel = Vec2::Zero();
        }
        Track &t = tracks[static_cast<std::size_t>(track_of[r])];
        const std::size_t j = image_of[k];
        const Correspondence &c = sets[j].matches[k - offset[j]];
        t.query_pixel += c.query;
        t.observations.push_back({j, c.database});
    }
    for (Track &t : tracks)
        t.query_pixel /= static_cast<double>(t.observations.size());
    return tracks;
}

bool triangulate_track_all(Track &track, std::span<const Pose> poses, std::span<const Camera> cameras,
                           double threshold_px) {
    track.point.reset();
    track.inlier_mask.clear();
    const std::size_t n = track.observations.size();
    if (n < 2)
        return false;

    auto evaluate = [&](const Vec3 &X, std::vector<char> &mask, double &cost) {
        std::size_t count = 0;
        cost = 0.0;
        mask.assign(n, 0);
        for (std::size_t k = 0; k < n; ++k) {
            const TrackObservation &o = track.observations[k];
            const double r = reprojection_px(X, poses[o.database], cameras[o.database], o.pixel);
            if (r <= threshold_px) {
                mask[k] = 1;
                ++count;
                cost += r;
            } else {
                cost += threshold_px;
            }
        }
        return count;
    };

    std::vector<Bearing> bearings(n);
    for (std::size_t k = 0; k < n; ++k)
        bearings[k] = pixel_to_bearing(track.observations[k].pixel, cameras[track.observations[k].database]);

    std::size_t best_count = 0;
    double best_cost = kInf;
    Vec3 best_point = Vec3::Zero();
    std::vector<char> best_mask, mask;
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
            Vec3 X;
            try {
                X = triangulate_2view(bearings[a], poses[track.observations[a].database], bearings[b],
                                      poses[track.observations[b].database]);
            } catch (const Error &) {
                continue;
            }
            double cost;
            const std::size_t count = evaluate(X, mask, cost);
            if (count > best_count || (count == best_count && count > 0 && cost < best_cost)) {
                best_count = count;
                best_cost = cost;
                best_point = X;
                best_mask = mask;
            }
        }
    if (best_count < 2)
        return false;

    std::vector<Ray> rays;
    for (std::size_t k = 0; k < n; ++k)
        if (best_mask[k])
            rays.push_back({bearings[k], poses[track.observations[k].database]});
    try {
        const Vec3 Y = triangulate_nview(rays);
        double cost;
        if (evaluate(Y, mask, cost) == best_count && mask == best_mask)
            best_point = Y;
    } catch (const Error &) {
    }
    track.point = best_point;
    track.inlier_mask = best_mask;
    return true;
}

namespace {

struct AbsoluteModel {
    Pose pose;
};

class AbsolutePoseProblem {
  public:
    using Model = AbsoluteModel;

    AbsolutePoseProblem(std::span<const Vec2> pixels, std::span<const Vec3> points, const Camera &camera)
        : pixels_(pixels), points_(points), camera_(camera) {}

    std::size_t num_data() const { return pixels_.size(); }
    std::size_t sample_size() const { return 3; }

    void solve(std::span<const std::size_t> sample, std::vector<Model> &models) const {
        std::array<WorldMatch, 3> m;
        for (std::size_t k = 0; k < 3; ++k)
            m[k] = {camera_.normalize(pixels_[sample[k]]), points_[sample[k]]};
        for (const Pose &p : p3p(m))
            models.push_back({p});
    }

    double residual(const Model &model, std::size_t i) const {
        return reprojection_px(points_[i], model.pose, camera_, pixels_[i]);
    }

    bool local_optimize(const Model &model, std::span<const std::size_t> inliers, Model &out) const {
        std::vector<char> mask(pixels_.size(), 0);
        for (std::size_t i : inliers)
            mask[i] = 1;
        const PoseRefinement r = refine_pose_reprojection(model.pose, pixels_, points_, camera_, mask);
        if (!r.summary.refined)
            return false;
        out.pose = r.pose;
        return true;
    }

  private:
    std::span<const Vec2> pixels_;
    std::span<const Vec3> points_;
    const Camera &camera_;
};

struct LocalScene {
    std::vector<MatchSet> sets;
    std::vector<Pose> poses;
    std::vector<Camera> cameras;
    std::vector<Track> tracks;
};

LocalScene build_scene(const QueryInput &input, const LocalSfmOptions &opt) {
    LocalScene scene;
    for (const RetrievedImage *db : normalized_order(input)) {
        scene.sets.push_back(db->matches);
        scene.poses.push_back(db->pose);
        scene.cameras.push_back(db->camera);
    }
    scene.tracks = opt.features == FeatureFamily::kSparse ? build_tracks_sparse(scene.sets)
                                                          : build_tracks_dense(scene.sets, opt.dense_radius_px);
    return scene;
}

} // namespace

std::optional<AbsolutePoseEstimate> estimate_absolute_pose(std::span<const Vec2> pixels, std::span<const Vec3> points,
                                                           const Camera &camera, const RansacConfig &cfg) {
    if (pixels.size() != points.size())
        throw Error(ErrorCode::kInvalidArgument, "estimate_absolute_pose: size mismatch");
    if (pixels.size() < 3)
        return std::nullopt;
    const AbsolutePoseProblem problem(pixels, points, camera);
    try {
        const auto est = lo_ransac(problem, cfg);
        const double chance = static_cast<double>(pixels.size()) * disc_fraction(camera, cfg.inlier_threshold);
        return AbsolutePoseEstimate{est.model.pose, est.score, est.inlier_mask,
                                    support_significance(est.score.inliers, problem.sample_size(), chance)};
    } catch (const Error &e) {
        if (e.code() == ErrorCode::kNoModelFound || e.code() == ErrorCode::kInsufficientData)
            return std::nullopt;
        throw;
    }
}

LocalizationEstimate localize_local_all(const QueryInput &input, const LocalSfmOptions &opt) {
    LocalizationEstimate out;
    out.query = input.name;
    LocalScene scene = build_scene(input, opt);

    StageClock tri_clock;
    std::size_t attempted = 0;
    std::vector<Vec2> pixels;
    std::vector<Vec3> points;
    for (Track &t : scene.tracks) {
        if (t.observations.size() < 2)
            continue;
        ++attempted;
        if (triangulate_track_all(t, scene.poses, scene.cameras, opt.triangulation_threshold())) {
            pixels.push_back(t.query_pixel);
            points.push_back(*t.point);
        }
    }
    add_timing(out.timings, "point triangulation (with RANSAC)", "3D point", tri_clock.elapsed_ms(), attempted);
    if (points.size() < 3) {
        out.failure_reason = "fewer than three triangulated tracks";
        return out;
    }

    StageClock pose_clock;
    RansacConfig cfg = opt.ransac;
    cfg.rng_seed = derive_seed(opt.ransac.rng_seed, input.name);
    const auto est = estimate_absolute_pose(pixels, points, input.camera, cfg);
    add_timing(out.timings, "pose estimation (P3P solver)", "query", pose_clock.elapsed_ms(), 1);
    if (!est) {
        out.failure_reason = "no pose reached minimal inlier support";
        return out;
    }
    if (est->significance < cfg.min_significance) {
        out.failure_reason = "inlier support at chance level";
        return out;
    }
    out.pose = est->pose;
    out.inliers = est->score.inliers;
    out.success = true;
    return out;
}

LocalizationEstimate localize_local_pairs(const QueryInput &input, const LocalSfmOptions &opt) {
    LocalizationEstimate out;
    out.query = input.name;
    const LocalScene scene = build_scene(input, opt);
    const std::size_t n_db = scene.poses.size();
    const double thr = opt.triangulation_threshold();

    // Observation of every track in every image, for quick pair lookup.
    std::vector<std::vector<long>> in_image(scene.tracks.size(), std::vector<long>(n_db, -1));
    for (std::size_t t = 0; t < scene.tracks.size(); ++t)
        for (std::size_t k = 0; k < scene.tracks[t].observations.size(); ++k)
            in_image[t][scene.tracks[t].observations[k].database] = static_cast<long>(k);

    std::optional<AbsolutePoseEstimate> best;
    for (std::size_t i = 0; i < n_db; ++i)
        for (std::size_t j = i + 1; j < n_db; ++j) {
            StageClock tri_clock;
            std::size_t attempted = 0;
            std::vector<Vec2> pixels;
            std::vector<Vec3> points;
            for (std::size_t t = 0; t < scene.tracks.size(); ++t) {
                if (in_image[t][i] < 0 || in_image[t][j] < 0)
                    continue;
                ++attempted;
                const Track &tr = scene.tracks[t];
                const TrackObservation &oi = tr.observations[static_cast<std::size_t>(in_image[t][i])];
                const TrackObservation &oj = tr.observations[static_cast<std::size_t>(in_image[t][j])];
                Vec3 X;
                try {
                    X = triangulate_2view(pixel_to_bearing(oi.pixel, scene.cameras[i]), scene.poses[i],
                                          pixel_to_bearing(oj.pixel, scene.cameras[j]), scene.poses[j]);
                } catch (const Error &) {
                    continue;
                }
                if (reprojection_px(X, scene.poses[i], scene.cameras[i], oi.pixel) > thr ||
                    reprojection_px(X, scene.poses[j], scene.cameras[j], oj.pixel) > thr)
                    continue;
                pixels.push_back(tr.query_pixel);
                points.push_back(X);
            }
            if (attempted > 0)
                add_timing(out.timings, "point triangulation (from image pairs)", "3D point", tri_clock.elapsed_ms(),
                           attempted);
            if (points.size() < 3)
                continue;

            StageClock pose_clock;
            RansacConfig cfg = opt.ransac;
            cfg.rng_seed = derive_seed(opt.ransac.rng_seed,
                                       input.name + "\n" + std::to_string(i) + "\n" + std::to_string(j));
            const auto est = estimate_absolute_pose(pixels, points, input.camera, cfg);
            add_timing(out.timings, "pose estimation (P3P solver)", "ref. pair sample", pose_clock.elapsed_ms(), 1);
            if (!est || est->significance < cfg.min_significance)
                continue;
            // Pairs hold different point sets, so only inlier counts compare.
            if (!best || est->score.inliers > best->score.inliers ||
                (est->score.inliers == best->score.inliers && est->score.truncated_cost < best->score.truncated_cost))
                best = est;
        }
    if (!best) {
        out.failure_reason = "no image pair yielded a pose";
        return out;
    }
    out.pose = best->pose;
    out.inliers = best->score.inliers;
    out.success = true;
    return out;
}

} // namespace sloc

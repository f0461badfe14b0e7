#pragma once

#include "sloc/geometry.h"

#include <span>
#include <vector>

namespace sloc {

struct RefinementOptions {
    int max_iterations = 25;
    // Relative cost decrease below which the solver declares convergence.
    double function_tolerance = 1e-16;
    double step_tolerance = 1e-14;
};

struct RefinementSummary {
    // False when the input had too few correspondences and was returned as is.
    bool refined = false;
    bool converged = false;
    int iterations = 0;
    double initial_cost = 0.0;
    double final_cost = 0.0;
    // Cost after every accepted step, starting with the initial cost.
    std::vector<double> cost_history;
};

struct EssentialRefinement {
    EssentialMatrix E;
    RefinementSummary summary;
};

struct PoseRefinement {
    Pose pose;
    RefinementSummary summary;
};

// Minimizes the summed Sampson error over the 5-dof essential manifold
// (rotation times unit translation). Needs at least 8 correspondences.
EssentialRefinement refine_sampson(const EssentialMatrix &E, std::span<const NormalizedMatch> matches,
                                   const RefinementOptions &opt = {});

// Same objective, parameterized by the relative pose; the returned
// translation keeps unit norm. Optional per-match weights scale the squared
// residuals.
PoseRefinement refine_relative_pose_sampson(const Pose &relative, std::span<const NormalizedMatch> matches,
                                            const RefinementOptions &opt = {}, std::span<const double> weights = {});

// Minimizes summed squared pixel reprojection error over the 6 pose dof.
// Needs at least 4 correspondences. When `mask` is non-empty only entries with
// mask[i] != 0 take part.
PoseRefinement refine_pose_reprojection(const Pose &pose, std::span<const Vec2> pixels, std::span<const Vec3> points,
                                        const Camera &cam, std::span<const char> mask = {},
                                        const RefinementOptions &opt = {});

// Query correspondence against one of several posed database images.
struct GeneralizedMatch {
    Vec2 x_query;     // normalized
    Vec2 x_database;  // normalized
    std::size_t database = 0;
    // Converts the normalized Sampson distance into pixels.
    double pixel_scale = 1.0;
    // Multiplies the squared residual.
    double weight = 1.0;
};

// Minimizes summed squared pixel-scaled Sampson error of the absolute query
// pose against all database images at once (6 dof; the database poses fix the
// scale). Needs at least 6 correspondences.
PoseRefinement refine_generalized_sampson(const Pose &query, std::span<const GeneralizedMatch> matches,
                                          std::span<const Pose> database_poses, const RefinementOptions &opt = {});

// IRLS weight of the Cauchy loss for a residual r at the given scale.
inline double cauchy_weight(double r, double scale) { return 1.0 / (1.0 + (r / scale) * (r / scale)); }

} // namespace sloc

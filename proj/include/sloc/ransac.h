#pragma once

#include "sloc/error.h"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace sloc {

enum class RansacScoring {
    // Sum of squared residuals truncated at the threshold (MSAC); inlier count
    // breaks ties.
    kTruncatedSquared,
    // Inlier count; the sum of truncated residuals breaks ties.
    kInlierCount,
};

struct RansacConfig {
    std::size_t min_iterations = 1000;
    std::size_t max_iterations = 100000;
    // Pixels.
    double inlier_threshold = 12.0;
    double confidence = 0.9999;
    std::uint64_t rng_seed = 0;
    std::size_t lo_max_rounds = 10;
    RansacScoring scoring = RansacScoring::kTruncatedSquared;
    // Pipelines reject models whose inliers do not exceed the chance level by
    // this many standard deviations (see support.h).
    double min_significance = 10.0;

    // Throws kConfiguration when the invariants are violated.
    void validate() const;
};

using Rng = std::mt19937_64;

// Cauchy scale used by the epipolar local optimization and the final
// reweighting, as a fraction of the inlier threshold.
inline constexpr double kRobustScale = 0.125;
inline constexpr int kPolishRounds = 10;

struct RansacScore {
    std::size_t inliers = 0;
    // Truncated squared residuals or truncated residuals, per RansacScoring.
    double truncated_cost = std::numeric_limits<double>::infinity();
    RansacScoring scoring = RansacScoring::kTruncatedSquared;
    // Pipelines reject models whose inliers do not exceed the chance level by
    // this many standard deviations (see support.h).
    double min_significance = 10.0;

    bool better_than(const RansacScore &o) const {
        if (scoring == RansacScoring::kTruncatedSquared)
            return truncated_cost < o.truncated_cost || (truncated_cost == o.truncated_cost && inliers > o.inliers);
        return inliers > o.inliers || (inliers == o.inliers && truncated_cost < o.truncated_cost);
    }
};

template <typename Model> struct RobustEstimate {
    Model model{};
    std::vector<char> inlier_mask;
    std::size_t inlier_count = 0;
    std::size_t iterations = 0;
    RansacScore score;
};

// Number of iterations needed to draw one all-inlier sample with the given
// confidence, for inlier ratio w and sample size m.
std::size_t required_iterations(double inlier_ratio, std::size_t sample_size, double confidence);

// Problem interface consumed by lo_ransac:
//   using Model = ...;
//   std::size_t num_data() const;
//   std::size_t sample_size() const;
//   void solve(std::span<const std::size_t> sample, std::vector<Model> &models) const;
//   double residual(const Model &, std::size_t i) const;       // pixels, +inf when invalid
//   bool local_optimize(const Model &, std::span<const std::size_t> inliers, Model &refined) const;
// and optionally a custom sampler
//   bool sample(Rng &, std::vector<std::size_t> &) const;
template <typename P>
concept RansacProblem = requires(const P &p, std::span<const std::size_t> idx, std::vector<typename P::Model> &models,
                                 const typename P::Model &m, typename P::Model &out) {
    { p.num_data() } -> std::convertible_to<std::size_t>;
    { p.sample_size() } -> std::convertible_to<std::size_t>;
    p.solve(idx, models);
    { p.residual(m, std::size_t{}) } -> std::convertible_to<double>;
    { p.local_optimize(m, idx, out) } -> std::convertible_to<bool>;
};

template <typename P>
concept HasCustomSampler = requires(const P &p, Rng &rng, std::vector<std::size_t> &sample) {
    { p.sample(rng, sample) } -> std::convertible_to<bool>;
};

// Uniform sample of k distinct indices from [0, n).
void sample_uniform(Rng &rng, std::size_t n, std::size_t k, std::vector<std::size_t> &out);

// Seed for an independent sub-problem (one image pair, one query), derived
// from the run seed and a stable tag so results do not depend on scheduling.
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag);

namespace detail {

template <RansacProblem P>
RansacScore score_model(const P &problem, const typename P::Model &model, double threshold, RansacScoring scoring) {
    RansacScore s;
    s.scoring = scoring;
    s.truncated_cost = 0.0;
    const bool squared = scoring == RansacScoring::kTruncatedSquared;
    const std::size_t n = problem.num_data();
    for (std::size_t i = 0; i < n; ++i) {
        const double r = problem.residual(model, i);
        if (r <= threshold) {
            ++s.inliers;
            s.truncated_cost += squared ? r * r : r;
        } else {
            s.truncated_cost += squared ? threshold * threshold : threshold;
        }
    }
    return s;
}

template <RansacProblem P>
void collect_inliers(const P &problem, const typename P::Model &model, double threshold,
                     std::vector<std::size_t> &inliers) {
    inliers.clear();
    for (std::size_t i = 0; i < problem.num_data(); ++i)
        if (problem.residual(model, i) <= threshold)
            inliers.push_back(i);
}

} // namespace detail

// Optional per-iteration record of the best score, for checking that it never
// decreases.
struct RansacTrace {
    std::vector<RansacScore> best_per_iteration;
    std::size_t local_optimizations = 0;
};

// Locally optimized RANSAC. Every new best minimal model is handed to the
// problem's local_optimize on its inliers, repeated until the inlier set stops
// changing, the score stops improving, or lo_max_rounds is reached.
template <RansacProblem P>
RobustEstimate<typename P::Model> lo_ransac(const P &problem, const RansacConfig &cfg, RansacTrace *trace = nullptr) {
    using Model = typename P::Model;
    cfg.validate();
    const std::size_t n = problem.num_data();
    const std::size_t m = problem.sample_size();
    if (n < m)
        throw Error(ErrorCode::kInsufficientData, "fewer data than the minimal sample size");

    Rng rng(cfg.rng_seed);
    const double thr = cfg.inlier_threshold;
    RobustEstimate<Model> best;
    bool have_best = false;
    std::size_t needed = cfg.max_iterations;

    std::vector<std::size_t> sample;
    std::vector<Model> models;
    std::vector<std::size_t> inliers;
    std::size_t it = 0;
    while (it < cfg.max_iterations) {
        ++it;
        bool ok = true;
        if constexpr (HasCustomSampler<P>) {
            ok = problem.sample(rng, sample);
        } else {
            sample_uniform(rng, n, m, sample);
        }
        models.clear();
        if (ok) {
            try {
                problem.solve(sample, models);
            } catch (const Error &) {
                models.clear();
            }
        }

        for (const Model &candidate : models) {
            RansacScore score = detail::score_model(problem, candidate, thr, cfg.scoring);
            if (!(!have_best || score.better_than(best.score)))
                continue;
            Model current = candidate;

            // Local optimization on the inliers of the new best model.
            detail::collect_inliers(problem, current, thr, inliers);
            for (std::size_t round = 0; round < cfg.lo_max_rounds && inliers.size() >= m; ++round) {
                Model refined;
                bool refined_ok = false;
                try {
                    refined_ok = problem.local_optimize(current, inliers, refined);
                } catch (const Error &) {
                    refined_ok = false;
                }
                if (trace)
                    ++trace->local_optimizations;
                if (!refined_ok)
                    break;
                const RansacScore refined_score = detail::score_model(problem, refined, thr, cfg.scoring);
                if (!refined_score.better_than(score))
                    break;
                std::vector<std::size_t> refined_inliers;
                detail::collect_inliers(problem, refined, thr, refined_inliers);
                const bool fixpoint = refined_inliers == inliers;
                current = refined;
                score = refined_score;
                inliers.swap(refined_inliers);
                if (fixpoint)
                    break;
            }

            best.model = current;
            best.score = score;
            have_best = true;
            const double w = static_cast<double>(score.inliers) / static_cast<double>(n);
            needed = required_iterations(w, m, cfg.confidence);
        }
        if (trace)
            trace->best_per_iteration.push_back(have_best ? best.score : RansacScore{});
        if (it >= cfg.min_iterations && it >= needed)
            break;
    }

    best.iterations = it;
    best.score.scoring = cfg.scoring;
    if (!have_best || best.score.inliers < m)
        throw Error(ErrorCode::kNoModelFound, "no model reached minimal inlier support");
    best.inlier_mask.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i)
        if (problem.residual(best.model, i) <= thr)
            best.inlier_mask[i] = 1;
    best.inlier_count = static_cast<std::size_t>(std::count(best.inlier_mask.begin(), best.inlier_mask.end(), 1));
    return best;
}

} // namespace sloc

#pragma once

#include "sloc/estimate.h"
#include "sloc/ransac.h"
#include "sloc/solvers.h"

#include <span>
#include <vector>

namespace sloc {

enum class SemiGeneralizedSolver {
    // 5 matches with the anchor image + 1 with another image.
    kE5p1,
    // 3 depth-lifted matches with the anchor image + 1 with another image.
    kE3p1,
};

struct PoolMatch {
    std::size_t database = 0;
    Vec2 x_query;     // normalized
    Vec2 x_database;  // normalized
    DepthPair depth;
};

// Correspondences of the query with all retrieved images, each tagged with the
// index of its database image.
struct GeneralizedMatchPool {
    std::vector<Pose> database_poses;
    // sqrt(f_query * f_database) per database image.
    std::vector<double> pixel_scales;
    std::vector<PoolMatch> matches;

    static GeneralizedMatchPool from_query(const QueryInput &input);
};

// Anchor matches first, the +1 match last.
struct SemiGeneralizedSample {
    std::vector<std::size_t> anchor;
    std::size_t extra = 0;
};

// Picks the anchor image with probability proportional to its usable match
// count (matches for E5+1, matches with valid depths for E3+1) among images
// that can supply the anchor matches while some other image supplies the +1
// match, then the anchor matches uniformly within it and the +1 match
// uniformly among the matches of all other images. Throws kInfeasibleSample
// when no image qualifies.
class SemiGeneralizedSampler {
  public:
    SemiGeneralizedSampler(const GeneralizedMatchPool &pool, SemiGeneralizedSolver solver);

    bool feasible() const { return !anchors_.empty(); }
    SemiGeneralizedSample draw(Rng &rng) const;

  private:
    std::size_t anchor_size_;
    std::size_t pool_size_;
    // Per database image, the indices usable as anchor matches, and all indices.
    std::vector<std::vector<std::size_t>> usable_, by_image_;
    std::vector<std::size_t> anchors_;
    std::vector<double> cumulative_;
};

// Absolute query pose candidates from one sample (at most 10 for E5+1, 4 for
// E3+1). Degenerate scale recovery yields no candidate.
std::vector<Pose> e5p1_solve(const GeneralizedMatchPool &pool, const SemiGeneralizedSample &sample);
std::vector<Pose> e3p1_solve(const GeneralizedMatchPool &pool, const SemiGeneralizedSample &sample);

// Sampson residual in pixels of pool match i under the query pose, through
// the essential matrix induced by the pose relative to that match's image.
double generalized_residual_px(const GeneralizedMatchPool &pool, const Pose &query, std::size_t i);

struct SemiGeneralizedOptions {
    RansacConfig ransac;
};

LocalizationEstimate localize_semi_generalized(const QueryInput &input, SemiGeneralizedSolver solver,
                                               const SemiGeneralizedOptions &opt);

} // namespace sloc

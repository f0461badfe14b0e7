#pragma once

#include "sloc/geometry.h"

#include <cstddef>

namespace sloc {

// Chance-level inlier support: the number of inliers a model would collect
// from correspondences unrelated to it.

// Number of cyclic re-pairings (query i with database i + shift) averaged
// when estimating the chance level of an epipolar model empirically.
inline constexpr std::size_t kChanceShifts = 4;

// Fraction of the image within `radius_px` of a point: the chance that a
// uniformly random pixel reprojects as an inlier.
double disc_fraction(const Camera &cam, double radius_px);

// Excess of the inliers outside the minimal sample over the chance level,
// in standard deviations of a Poisson count.
double support_significance(std::size_t inliers, std::size_t sample_size, double chance_inliers);

} // namespace sloc

#include "sloc/support.h"

#include <cmath>
#include <numbers>

namespace sloc {

double disc_fraction(const Camera &cam, double radius_px) {
    return std::min(1.0, std::numbers::pi * radius_px * radius_px / (double(cam.width) * cam.height));
}

double support_significance(std::size_t inliers, std::size_t sample_size, double chance_inliers) {
    const double excess = static_cast<double>(inliers) - static_cast<double>(sample_size) - chance_inliers;
    return excess / std::sqrt(chance_inliers + 1.0);
}

} // namespace sloc

#include "sloc/ransac.h"

namespace sloc {

void RansacConfig::validate() const {
    if (min_iterations > max_iterations)
        throw Error(ErrorCode::kConfiguration, "ransac: min_iterations exceeds max_iterations");
    if (!(inlier_threshold > 0.0))
        throw Error(ErrorCode::kConfiguration, "ransac: inlier threshold must be positive");
    if (!(confidence > 0.0 && confidence < 1.0))
        throw Error(ErrorCode::kConfiguration, "ransac: confidence must lie in (0, 1)");
}

std::size_t required_iterations(double inlier_ratio, std::size_t sample_size, double confidence) {
    const double p_good = std::pow(inlier_ratio, static_cast<double>(sample_size));
    if (p_good >= 1.0)
        return 0;
    if (!(p_good > 0.0))
        return std::numeric_limits<std::size_t>::max();
    const double needed = std::ceil(std::log(1.0 - confidence) / std::log1p(-p_good));
    if (!(needed < 1e18))
        return std::numeric_limits<std::size_t>::max();
    return static_cast<std::size_t>(std::max(needed, 0.0));
}

void sample_uniform(Rng &rng, std::size_t n, std::size_t k, std::vector<std::size_t> &out) {
    out.clear();
    std::uniform_int_distribution<std::size_t> dist(0, n - 1);
    while (out.size() < k) {
        const std::size_t idx = dist(rng);
        if (std::find(out.begin(), out.end(), idx) == out.end())
            out.push_back(idx);
    }
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    // FNV-1a over the tag, then a splitmix64 finalizer mixed with the base.
    std::uint64_t h = 1469598103934665603ull;
    for (const char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    std::uint64_t z = base + 0x9e3779b97f4a7c15ull + h;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

} // namespace sloc

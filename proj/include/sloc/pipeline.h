#pragma once

#include "sloc/config.h"
#include "sloc/dataset.h"
#include "sloc/estimate.h"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace sloc {

enum class Method {
    kEssmat5pt,
    kEssmat3ptDepth,
    kE5p1,
    kE3p1,
    kLocalAll,
    kLocalPairs,
    kFuseExternal,
    kAlignExternal,
};

// Command-line names: essmat-5pt, essmat-3pt-depth, e5p1, e3p1, local-all,
// local-pairs, fuse-external, align-external.
std::optional<Method> parse_method(const std::string &name);
std::string method_name(Method m);
bool needs_depths(Method m);

struct RunOptions {
    Method method = Method::kE5p1;
    std::size_t top_k = 10;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    PipelineConfig config;
};

// Localizes one query from in-memory inputs (the six match-based methods).
LocalizationEstimate localize_query(const QueryInput &input, const RunOptions &opt);

// Reads the top-k retrieved images and their matches for one query.
QueryInput load_query_input(const Dataset &ds, const std::string &query, std::size_t top_k);

// Runs `opt.method` on every query of the dataset with a pool of
// `opt.threads` workers. A query whose inputs cannot be read fails on its own.
// Throws kConfiguration before any query runs when the method's inputs are
// missing from the dataset. The result is sorted by query name.
std::vector<LocalizationEstimate> run_pipeline(const Dataset &ds, const RunOptions &opt);

} // namespace sloc

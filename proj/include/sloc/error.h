#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sloc {

enum class ErrorCode {
    kInvalidArgument,
    kDegenerateSample,
    kAmbiguousCheirality,
    kNegativeScale,
    kUnobservableScale,
    kNoRealSolution,
    kParallelRays,
    kCheirality,
    kDegenerateAverage,
    kCollinearDirections,
    kTooFewObservations,
    kInsufficientData,
    kNoModelFound,
    kInfeasibleSample,
    kInvalidDepth,
    kDegenerateConfiguration,
    kNoValidHypothesis,
    kParse,
    kMissingReference,
    kInvariantViolation,
    kMissingGroundTruth,
    kConfiguration,
};

std::string_view error_code_name(ErrorCode code);

// All recoverable failures of the library surface as this exception. Pipelines
// catch it and turn it into a flagged LocalizationEstimate.
class Error : public std::runtime_error {
  public:
    Error(ErrorCode code, const std::string &what) : std::runtime_error(what), code_(code) {}

    ErrorCode code() const { return code_; }

  private:
    ErrorCode code_;
};

} // namespace sloc

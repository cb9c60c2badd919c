#pragma once

#include <stdexcept>
#include <string>

namespace hml {

// Every failure mode of the engine carries one of these codes. The CLI maps
// them to distinct exit codes (10 + enum value), see exit_code() below.
enum class ErrorCode : int {
    // hierarchy
    NonNestingGrid = 0,
    NonDivisibleImage,
    CyclicSpec,
    OutOfBoundsRect,
    UnknownPatch,
    // features
    DimensionMismatch,
    EmptyInput,
    FractionOutOfRange,
    MalformedRecord,
    InconsistentPatchSet,
    NonFiniteValue,
    // local classifiers
    EmptyGallery,
    SingularSystem,
    MissingClassifier,
    // global matchers
    MissingRecord,
    AllAbstain,
    InsufficientSamples,
    // pipeline
    EmptySplit,
    UnknownGlobalKind,
    ConfigConflict,
    HierarchyMismatch,
    UnknownLabel,
    EmptyProbeSet,
    IoFailure,
    VersionMismatch,
    CorruptBundle,
    // stats
    DegenerateDenominator,
    UnsupportedAlphaOrK,
    // cli / config
    UsageError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    // Exit-code mapping used by the CLI; documented in the README.
    int exit_code() const noexcept { return 10 + static_cast<int>(code_); }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace hml

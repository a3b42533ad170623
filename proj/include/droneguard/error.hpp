#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace droneguard {

/// Every failure the library reports maps to exactly one of these codes.
enum class Errc {
    // telemetry
    MissingColumn,
    ValueOutOfRange,
    NonMonotoneTimestamps,
    UnknownMode,
    MalformedRow,
    // simkit
    InfeasibleMission,
    ConflictingFaults,
    InvalidFault,
    CalibrationFailed,
    NoAnomalies,
    // phases
    MissingMetadata,
    // rules
    EmptyCorpus,
    InvalidSupport,
    // detectors
    TooFewPoints,
    DimensionMismatch,
    InvalidParams,
    NoConvergence,
    // ensemble / evalkit
    WrongArity,
    LengthMismatch,
    // configuration and persistence
    InvalidConfig,
    InvalidDocument,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace droneguard

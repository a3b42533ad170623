#include "droneguard/error.hpp"

namespace droneguard {

std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::MissingColumn: return "MissingColumn";
        case Errc::ValueOutOfRange: return "ValueOutOfRange";
        case Errc::NonMonotoneTimestamps: return "NonMonotoneTimestamps";
        case Errc::UnknownMode: return "UnknownMode";
        case Errc::MalformedRow: return "MalformedRow";
        case Errc::InfeasibleMission: return "InfeasibleMission";
        case Errc::ConflictingFaults: return "ConflictingFaults";
        case Errc::InvalidFault: return "InvalidFault";
        case Errc::CalibrationFailed: return "CalibrationFailed";
        case Errc::NoAnomalies: return "NoAnomalies";
        case Errc::MissingMetadata: return "MissingMetadata";
        case Errc::EmptyCorpus: return "EmptyCorpus";
        case Errc::InvalidSupport: return "InvalidSupport";
        case Errc::TooFewPoints: return "TooFewPoints";
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::InvalidParams: return "InvalidParams";
        case Errc::NoConvergence: return "NoConvergence";
        case Errc::WrongArity: return "WrongArity";
        case Errc::LengthMismatch: return "LengthMismatch";
        case Errc::InvalidConfig: return "InvalidConfig";
        case Errc::InvalidDocument: return "InvalidDocument";
    }
    return "Unknown";
}

}  // namespace droneguard

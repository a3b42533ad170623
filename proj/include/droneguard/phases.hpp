#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "droneguard/telemetry.hpp"

namespace droneguard::phases {

enum class MissionPhase : int {
    Initialisation = 0,
    Takeoff = 1,
    OnMission = 2,
    ReturnToOrigin = 3,
    Landing = 4,
};

inline constexpr std::size_t kPhaseCount = 5;
inline constexpr std::array<MissionPhase, kPhaseCount> kAllPhases = {
    MissionPhase::Initialisation, MissionPhase::Takeoff, MissionPhase::OnMission,
    MissionPhase::ReturnToOrigin, MissionPhase::Landing};

std::string_view phase_name(MissionPhase phase) noexcept;
std::optional<MissionPhase> phase_from_name(std::string_view name) noexcept;

struct Tolerances {
    double alt_tol_m = 0.5;  ///< takeoff altitude counts as reached within this
    double pos_tol_m = 1.0;  ///< horizontal "reached" radius, great-circle meters
};

struct PhaseAnnotatedLog {
    telemetry::FlightLog log;
    std::vector<MissionPhase> phase_of;
};

/// Labels every record with its mission phase. Transitions fire at the first
/// record meeting the next phase's condition and never go backwards.
/// Throws Error(MissingMetadata) when the log has no mission descriptor.
PhaseAnnotatedLog segment(const telemetry::FlightLog& log, const Tolerances& tol = {});

/// Causal, record-at-a-time version of segment() for live streams.
class PhaseTracker {
public:
    /// `use_wp_index` unset: switch to wp_index-based arrival once any record
    /// carries a non-zero wp_index.
    PhaseTracker(telemetry::MissionMeta meta, Tolerances tol = {}, std::optional<bool> use_wp_index = std::nullopt);

    MissionPhase update(const telemetry::LogRecord& record);
    MissionPhase current() const noexcept { return phase_; }

private:
    telemetry::MissionMeta meta_;
    Tolerances tol_;
    std::optional<bool> use_wp_index_;
    bool seen_wp_index_ = false;
    MissionPhase phase_ = MissionPhase::Initialisation;
};

struct IndexRange {
    std::size_t begin = 0;
    std::size_t end = 0;  ///< one past the last index

    bool operator==(const IndexRange&) const = default;
};

/// Contiguous index ranges per visited phase, in phase order.
std::vector<std::pair<MissionPhase, IndexRange>> phase_slices(const PhaseAnnotatedLog& annotated);

}  // namespace droneguard::phases

#include "droneguard/phases.hpp"

#include <algorithm>

#include "droneguard/error.hpp"
#include "droneguard/geo.hpp"

namespace droneguard::phases {

using telemetry::FlightMode;

std::string_view phase_name(MissionPhase phase) noexcept {
    switch (phase) {
        case MissionPhase::Initialisation: return "INITIALISATION";
        case MissionPhase::Takeoff: return "TAKEOFF";
        case MissionPhase::OnMission: return "ON_MISSION";
        case MissionPhase::ReturnToOrigin: return "RETURN_TO_ORIGIN";
        case MissionPhase::Landing: return "LANDING";
    }
    return "?";
}

std::optional<MissionPhase> phase_from_name(std::string_view name) noexcept {
    for (auto p : kAllPhases) {
        if (phase_name(p) == name) return p;
    }
    return std::nullopt;
}

PhaseTracker::PhaseTracker(telemetry::MissionMeta meta, Tolerances tol, std::optional<bool> use_wp_index)
    : meta_(std::move(meta)), tol_(tol), use_wp_index_(use_wp_index) {
    if (meta_.waypoints.empty()) throw Error(Errc::MissingMetadata, "mission metadata lists no waypoints");
}

MissionPhase PhaseTracker::update(const telemetry::LogRecord& r) {
    if (r.wp_index != 0) seen_wp_index_ = true;
    if (phase_ == MissionPhase::Initialisation && r.mode != FlightMode::Stabilise) {
        phase_ = MissionPhase::Takeoff;
    }
    if (phase_ == MissionPhase::Takeoff && r.rel_alt >= meta_.takeoff_alt_m - tol_.alt_tol_m) {
        phase_ = MissionPhase::OnMission;
    }
    if (phase_ == MissionPhase::OnMission) {
        // wp_index counts the waypoint being flown to (1-based); once it passes
        // the last waypoint the mission leg is done.
        const auto last_wp = static_cast<int>(meta_.waypoints.size());
        const auto& last = meta_.waypoints.back();
        const bool by_index = use_wp_index_.value_or(seen_wp_index_);
        const bool done = by_index ? r.wp_index > last_wp
                                   : geo::distance_m(r.lat, r.lon, last.lat, last.lon) <= tol_.pos_tol_m;
        if (done) phase_ = MissionPhase::ReturnToOrigin;
    }
    if (phase_ == MissionPhase::ReturnToOrigin &&
        geo::distance_m(r.lat, r.lon, meta_.home_lat, meta_.home_lon) <= tol_.pos_tol_m) {
        phase_ = MissionPhase::Landing;
    }
    return phase_;
}

PhaseAnnotatedLog segment(const telemetry::FlightLog& log, const Tolerances& tol) {
    if (!log.meta) throw Error(Errc::MissingMetadata, "phase segmentation needs mission metadata");
    // Logs that never fill wp_index fall back to distance from the last waypoint.
    const bool has_wp_index =
        std::any_of(log.records.begin(), log.records.end(), [](const auto& r) { return r.wp_index != 0; });
    PhaseTracker tracker(*log.meta, tol, has_wp_index);
    PhaseAnnotatedLog out;
    out.log = log;
    out.phase_of.reserve(log.records.size());
    for (const auto& r : log.records) out.phase_of.push_back(tracker.update(r));
    return out;
}

std::vector<std::pair<MissionPhase, IndexRange>> phase_slices(const PhaseAnnotatedLog& annotated) {
    std::vector<std::pair<MissionPhase, IndexRange>> out;
    const auto& ph = annotated.phase_of;
    for (std::size_t i = 0; i < ph.size(); ++i) {
        if (out.empty() || out.back().first != ph[i]) {
            out.push_back({ph[i], {i, i + 1}});
        } else {
            out.back().second.end = i + 1;
        }
    }
    return out;
}

}  // namespace droneguard::phases

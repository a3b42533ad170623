#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "droneguard/telemetry.hpp"

namespace droneguard::sim {

inline constexpr std::int64_t kForever = std::numeric_limits<std::int64_t>::max();

struct MissionSpec {
    double home_lat = 0.0;
    double home_lon = 0.0;
    double takeoff_alt_m = 10.0;
    std::vector<telemetry::Waypoint> waypoints;
    double cruise_speed = 5.0;
    int tick_ms = 200;

    telemetry::MissionMeta meta() const;
};

struct WindFault {
    double speed_mps = 0.0;
    double direction_rad = 0.0;  ///< direction the air moves toward, from north
    std::int64_t start_ms = 0;
    std::int64_t end_ms = kForever;
};

struct ActuatorFault {
    double factor = 1.0;  ///< fraction of nominal thrust available, in (0, 1]
    std::int64_t start_ms = 0;
    std::int64_t end_ms = kForever;
};

struct SensorStuckFault {
    telemetry::Field feature = telemetry::Field::Roll;
    double stuck_value = 0.0;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = kForever;
};

/// Thrust drops to zero at `at_ms` and stays there; the log keeps running
/// until shortly after ground impact.
struct EngineCutoffFault {
    std::int64_t at_ms = 0;
};

using FaultSpec = std::variant<WindFault, ActuatorFault, SensorStuckFault, EngineCutoffFault>;

struct LabeledLog {
    telemetry::FlightLog log;
    std::vector<bool> anomaly_mask;
    bool completed = false;  ///< every waypoint visited and landed at home
};

/// Deterministic in (mission, faults, seed): identical inputs give
/// bit-identical logs on the same build.
LabeledLog simulate(const MissionSpec& mission, std::span<const FaultSpec> faults, std::uint64_t seed);

struct WindyPair {
    LabeledLog strong;
    LabeledLog mild;
    double strong_speed_mps = 0.0;
    double mild_speed_mps = 0.0;
    double direction_rad = 0.0;
};

inline constexpr double kMildWindRatio = 0.25;
inline constexpr double kWindSearchMaxMps = 30.0;

/// Finds, by bisection, a whole-mission wind that prevents completion and
/// pairs it with a run at a quarter of that speed.
WindyPair windy_pair(const MissionSpec& mission, std::uint64_t seed);

telemetry::FlightLog extract_anomalous_segment(const LabeledLog& labeled);

/// Same four-waypoint loop every time, flown from the ArduPilot SITL home.
MissionSpec base_mission();
/// Random waypoint count (3 to 6), home offset and coordinates.
MissionSpec random_mission(std::uint64_t seed);

/// Mean 3-D distance from the vehicle to the leg it is flying, over the
/// waypoint-following part of the log.
double mean_tracking_error(const telemetry::FlightLog& log);

/// Grammar: `wind:speed=12,dir=1.57,start=0,end=600000`,
/// `actuator:factor=0.7,start=0,end=...`,
/// `sensor_stuck:feature=roll,value=3.14159265,start=0,end=...`,
/// `engine_cutoff:at=40000`. Missing start/end default to the whole mission.
FaultSpec parse_fault(std::string_view text);
std::string format_fault(const FaultSpec& fault);

std::string write_labels(const LabeledLog& labeled);
std::vector<bool> parse_labels(std::string_view text, const telemetry::FlightLog& log);

MissionSpec parse_mission_spec(std::string_view json_text);
std::string write_mission_spec(const MissionSpec& mission);

}  // namespace droneguard::sim

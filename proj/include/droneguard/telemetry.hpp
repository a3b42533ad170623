#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace droneguard::telemetry {

enum class FlightMode : int { Stabilise = 0, Auto = 1, Rtl = 2 };

std::string_view mode_name(FlightMode mode) noexcept;
FlightMode parse_mode(std::string_view text);

struct LogRecord {
    std::int64_t timestamp_ms = 0;
    FlightMode mode = FlightMode::Stabilise;
    double lat = 0.0;
    double lon = 0.0;
    double rel_alt = 0.0;
    double roll = 0.0;
    double pitch = 0.0;
    double yaw = 0.0;
    double throttle = 0.0;
    double groundspeed = 0.0;
    double climb = 0.0;
    int baro_status = 1;
    int gps_fix = 3;
    int wp_index = 0;

    bool operator==(const LogRecord&) const = default;
};

struct CommandEvent {
    std::int64_t cmd_id = 0;
    std::int64_t issue_ms = 0;
    std::optional<std::int64_t> enact_ms;

    bool operator==(const CommandEvent&) const = default;
};

struct Waypoint {
    double lat = 0.0;
    double lon = 0.0;
    double alt_m = 0.0;

    bool operator==(const Waypoint&) const = default;
};

struct MissionMeta {
    double home_lat = 0.0;
    double home_lon = 0.0;
    double takeoff_alt_m = 0.0;
    std::vector<Waypoint> waypoints;

    bool operator==(const MissionMeta&) const = default;
};

/// Immutable once built; share freely between readers.
struct FlightLog {
    std::vector<LogRecord> records;
    std::vector<CommandEvent> commands;
    std::optional<MissionMeta> meta;

    bool operator==(const FlightLog&) const = default;
};

/// Record columns addressable by name. Rules, detectors and fault injection
/// all refer to telemetry through this enumeration.
enum class Field {
    Lat,
    Lon,
    RelAlt,
    Roll,
    Pitch,
    Yaw,
    Throttle,
    Groundspeed,
    Climb,
    Mode,
    BaroStatus,
    GpsFix,
    WpIndex,
};

std::string_view field_name(Field field) noexcept;
std::optional<Field> field_from_name(std::string_view name) noexcept;
bool is_categorical(Field field) noexcept;
double field_value(const LogRecord& record, Field field) noexcept;
/// Writes `value` into the column; categorical columns are rounded.
void set_field(LogRecord& record, Field field, double value) noexcept;

inline constexpr std::string_view kLogHeader =
    "timestamp_ms,mode,lat,lon,rel_alt,roll,pitch,yaw,throttle,groundspeed,climb,baro_status,gps_fix,wp_index";
inline constexpr std::string_view kCommandHeader = "cmd_id,issue_ms,enact_ms";

/// Throws Error(ValueOutOfRange) when a record breaks a column bound.
void validate_record(const LogRecord& record);

/// Parses one data row (no header). Used by the streaming monitor.
LogRecord parse_record_row(std::string_view line);
std::string format_record_row(const LogRecord& record);

/// Parses a log document: the telemetry header and rows, optionally followed
/// by a blank line and a command section introduced by its own header.
FlightLog parse_log(std::string_view text, std::optional<MissionMeta> meta = std::nullopt);
std::string write_log(const FlightLog& log);

std::vector<CommandEvent> parse_commands(std::string_view text);
std::string write_commands(const std::vector<CommandEvent>& commands);

MissionMeta parse_mission(std::string_view json_text);
std::string write_mission(const MissionMeta& meta);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);

}  // namespace droneguard::telemetry

#include "droneguard/telemetry.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <numbers>
#include <span>

#include "json.hpp"

#include "droneguard/error.hpp"

namespace droneguard::telemetry {

namespace {

constexpr std::array<std::string_view, 14> kColumns = {
    "timestamp_ms", "mode", "lat", "lon", "rel_alt", "roll", "pitch",
    "yaw", "throttle", "groundspeed", "climb", "baro_status", "gps_fix", "wp_index"};

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(trim(line.substr(start)));
            break;
        }
        out.push_back(trim(line.substr(start, pos - start)));
        start = pos + 1;
    }
    return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto pos = text.find('\n', start);
        if (pos == std::string_view::npos) {
            if (start < text.size()) out.push_back(text.substr(start));
            break;
        }
        out.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

double to_double(std::string_view s, std::string_view column) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end || s.empty()) {
        throw Error(Errc::MalformedRow, "column " + std::string(column) + ": '" + std::string(s) + "' is not a number");
    }
    return v;
}

std::int64_t to_int(std::string_view s, std::string_view column) {
    std::int64_t v = 0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, v);
    if (ec != std::errc{} || ptr != end || s.empty()) {
        throw Error(Errc::MalformedRow, "column " + std::string(column) + ": '" + std::string(s) + "' is not an integer");
    }
    return v;
}

void check_header(std::string_view line, std::span<const std::string_view> expected) {
    const auto cols = split(trim(line), ',');
    for (std::size_t i = 0; i < expected.size(); ++i) {
        if (i >= cols.size() || cols[i] != expected[i]) {
            throw Error(Errc::MissingColumn, "expected column '" + std::string(expected[i]) + "' at position " +
                                                 std::to_string(i));
        }
    }
    if (cols.size() != expected.size()) {
        throw Error(Errc::MissingColumn, "unexpected extra column '" + std::string(cols[expected.size()]) + "'");
    }
}

void out_of_range(std::string_view column, double value) {
    throw Error(Errc::ValueOutOfRange, std::string(column) + " = " + format_double(value));
}

}  // namespace

std::string_view mode_name(FlightMode mode) noexcept {
    switch (mode) {
        case FlightMode::Stabilise: return "STABILISE";
        case FlightMode::Auto: return "AUTO";
        case FlightMode::Rtl: return "RTL";
    }
    return "?";
}

FlightMode parse_mode(std::string_view text) {
    if (text == "STABILISE") return FlightMode::Stabilise;
    if (text == "AUTO") return FlightMode::Auto;
    if (text == "RTL") return FlightMode::Rtl;
    throw Error(Errc::UnknownMode, "'" + std::string(text) + "'");
}

std::string_view field_name(Field field) noexcept {
    switch (field) {
        case Field::Lat: return "lat";
        case Field::Lon: return "lon";
        case Field::RelAlt: return "rel_alt";
        case Field::Roll: return "roll";
        case Field::Pitch: return "pitch";
        case Field::Yaw: return "yaw";
        case Field::Throttle: return "throttle";
        case Field::Groundspeed: return "groundspeed";
        case Field::Climb: return "climb";
        case Field::Mode: return "mode";
        case Field::BaroStatus: return "baro_status";
        case Field::GpsFix: return "gps_fix";
        case Field::WpIndex: return "wp_index";
    }
    return "?";
}

std::optional<Field> field_from_name(std::string_view name) noexcept {
    for (int i = 0; i <= static_cast<int>(Field::WpIndex); ++i) {
        const auto f = static_cast<Field>(i);
        if (field_name(f) == name) return f;
    }
    return std::nullopt;
}

bool is_categorical(Field field) noexcept {
    return field == Field::Mode || field == Field::BaroStatus || field == Field::GpsFix ||
           field == Field::WpIndex;
}

double field_value(const LogRecord& r, Field field) noexcept {
    switch (field) {
        case Field::Lat: return r.lat;
        case Field::Lon: return r.lon;
        case Field::RelAlt: return r.rel_alt;
        case Field::Roll: return r.roll;
        case Field::Pitch: return r.pitch;
        case Field::Yaw: return r.yaw;
        case Field::Throttle: return r.throttle;
        case Field::Groundspeed: return r.groundspeed;
        case Field::Climb: return r.climb;
        case Field::Mode: return static_cast<double>(static_cast<int>(r.mode));
        case Field::BaroStatus: return r.baro_status;
        case Field::GpsFix: return r.gps_fix;
        case Field::WpIndex: return r.wp_index;
    }
    return 0.0;
}

void set_field(LogRecord& r, Field field, double value) noexcept {
    const int as_int = static_cast<int>(std::lround(value));
    switch (field) {
        case Field::Lat: r.lat = value; break;
        case Field::Lon: r.lon = value; break;
        case Field::RelAlt: r.rel_alt = value; break;
        case Field::Roll: r.roll = value; break;
        case Field::Pitch: r.pitch = value; break;
        case Field::Yaw: r.yaw = value; break;
        case Field::Throttle: r.throttle = value; break;
        case Field::Groundspeed: r.groundspeed = value; break;
        case Field::Climb: r.climb = value; break;
        case Field::Mode: r.mode = static_cast<FlightMode>(std::clamp(as_int, 0, 2)); break;
        case Field::BaroStatus: r.baro_status = as_int; break;
        case Field::GpsFix: r.gps_fix = as_int; break;
        case Field::WpIndex: r.wp_index = as_int; break;
    }
}

void validate_record(const LogRecord& r) {
    constexpr double pi = std::numbers::pi;
    const std::array<std::pair<std::string_view, double>, 9> reals = {{
        {"lat", r.lat}, {"lon", r.lon}, {"rel_alt", r.rel_alt}, {"roll", r.roll}, {"pitch", r.pitch},
        {"yaw", r.yaw}, {"throttle", r.throttle}, {"groundspeed", r.groundspeed}, {"climb", r.climb}}};
    for (const auto& [name, v] : reals) {
        if (!std::isfinite(v)) out_of_range(name, v);
    }
    if (std::abs(r.lat) > 90.0) out_of_range("lat", r.lat);
    if (std::abs(r.lon) > 180.0) out_of_range("lon", r.lon);
    if (std::abs(r.roll) > pi) out_of_range("roll", r.roll);
    if (std::abs(r.pitch) > pi) out_of_range("pitch", r.pitch);
    if (std::abs(r.yaw) > pi) out_of_range("yaw", r.yaw);
    if (r.throttle < 0.0 || r.throttle > 100.0) out_of_range("throttle", r.throttle);
    if (r.groundspeed < 0.0) out_of_range("groundspeed", r.groundspeed);
    if (r.baro_status != 0 && r.baro_status != 1) out_of_range("baro_status", r.baro_status);
    if (r.gps_fix < 0) out_of_range("gps_fix", r.gps_fix);
    if (r.wp_index < 0) out_of_range("wp_index", r.wp_index);
}

std::string format_double(double value) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), ptr);
}

LogRecord parse_record_row(std::string_view line) {
    const auto cells = split(trim(line), ',');
    if (cells.size() != kColumns.size()) {
        const auto idx = std::min(cells.size(), kColumns.size() - 1);
        throw Error(Errc::MissingColumn, "row has " + std::to_string(cells.size()) + " fields, expected " +
                                             std::to_string(kColumns.size()) + " (near '" +
                                             std::string(kColumns[idx]) + "')");
    }
    LogRecord r;
    r.timestamp_ms = to_int(cells[0], kColumns[0]);
    r.mode = parse_mode(cells[1]);
    r.lat = to_double(cells[2], kColumns[2]);
    r.lon = to_double(cells[3], kColumns[3]);
    r.rel_alt = to_double(cells[4], kColumns[4]);
    r.roll = to_double(cells[5], kColumns[5]);
    r.pitch = to_double(cells[6], kColumns[6]);
    r.yaw = to_double(cells[7], kColumns[7]);
    r.throttle = to_double(cells[8], kColumns[8]);
    r.groundspeed = to_double(cells[9], kColumns[9]);
    r.climb = to_double(cells[10], kColumns[10]);
    r.baro_status = static_cast<int>(to_int(cells[11], kColumns[11]));
    r.gps_fix = static_cast<int>(to_int(cells[12], kColumns[12]));
    r.wp_index = static_cast<int>(to_int(cells[13], kColumns[13]));
    validate_record(r);
    return r;
}

std::string format_record_row(const LogRecord& r) {
    std::string s;
    s.reserve(160);
    s += std::to_string(r.timestamp_ms);
    s += ',';
    s += mode_name(r.mode);
    for (double v : {r.lat, r.lon, r.rel_alt, r.roll, r.pitch, r.yaw, r.throttle, r.groundspeed, r.climb}) {
        s += ',';
        s += format_double(v);
    }
    for (int v : {r.baro_status, r.gps_fix, r.wp_index}) {
        s += ',';
        s += std::to_string(v);
    }
    return s;
}

namespace {

CommandEvent parse_command_row(std::string_view line) {
    const auto cells = split(trim(line), ',');
    if (cells.size() != 3) {
        throw Error(Errc::MissingColumn, "command row needs 3 fields");
    }
    CommandEvent c;
    c.cmd_id = to_int(cells[0], "cmd_id");
    c.issue_ms = to_int(cells[1], "issue_ms");
    if (!cells[2].empty()) c.enact_ms = to_int(cells[2], "enact_ms");
    if (c.enact_ms && *c.enact_ms < c.issue_ms) {
        throw Error(Errc::ValueOutOfRange, "command " + std::to_string(c.cmd_id) + " enacted before issue");
    }
    return c;
}

constexpr std::array<std::string_view, 3> kCommandColumns = {"cmd_id", "issue_ms", "enact_ms"};

void append_commands(std::string& out, const std::vector<CommandEvent>& commands) {
    out += kCommandHeader;
    out += '\n';
    for (const auto& c : commands) {
        out += std::to_string(c.cmd_id);
        out += ',';
        out += std::to_string(c.issue_ms);
        out += ',';
        if (c.enact_ms) out += std::to_string(*c.enact_ms);
        out += '\n';
    }
}

void check_command_order(const std::vector<CommandEvent>& commands) {
    for (std::size_t i = 1; i < commands.size(); ++i) {
        if (commands[i].issue_ms < commands[i - 1].issue_ms) {
            throw Error(Errc::NonMonotoneTimestamps, "command issue times must be ordered");
        }
    }
}

}  // namespace

FlightLog parse_log(std::string_view text, std::optional<MissionMeta> meta) {
    FlightLog log;
    log.meta = std::move(meta);
    const auto lines = lines_of(text);
    std::size_t i = 0;
    while (i < lines.size() && trim(lines[i]).empty()) ++i;
    if (i == lines.size()) throw Error(Errc::MissingColumn, "empty document, no header");
    check_header(lines[i], kColumns);
    ++i;

    bool in_commands = false;
    for (; i < lines.size(); ++i) {
        const auto line = trim(lines[i]);
        if (line.empty()) continue;
        if (!in_commands && line == kCommandHeader) {
            in_commands = true;
            continue;
        }
        if (in_commands) {
            log.commands.push_back(parse_command_row(line));
            continue;
        }
        auto r = parse_record_row(line);
        if (!log.records.empty() && r.timestamp_ms <= log.records.back().timestamp_ms) {
            throw Error(Errc::NonMonotoneTimestamps, "timestamp " + std::to_string(r.timestamp_ms) +
                                                         " follows " +
                                                         std::to_string(log.records.back().timestamp_ms));
        }
        log.records.push_back(r);
    }
    check_command_order(log.commands);
    return log;
}

std::string write_log(const FlightLog& log) {
    std::string out;
    out.reserve(64 + log.records.size() * 150);
    out += kLogHeader;
    out += '\n';
    for (const auto& r : log.records) {
        out += format_record_row(r);
        out += '\n';
    }
    if (!log.commands.empty()) {
        out += '\n';
        append_commands(out, log.commands);
    }
    return out;
}

std::vector<CommandEvent> parse_commands(std::string_view text) {
    const auto lines = lines_of(text);
    std::size_t i = 0;
    while (i < lines.size() && trim(lines[i]).empty()) ++i;
    if (i == lines.size()) throw Error(Errc::MissingColumn, "empty command document, no header");
    check_header(lines[i], kCommandColumns);
    std::vector<CommandEvent> out;
    for (++i; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        out.push_back(parse_command_row(lines[i]));
    }
    check_command_order(out);
    return out;
}

std::string write_commands(const std::vector<CommandEvent>& commands) {
    std::string out;
    append_commands(out, commands);
    return out;
}

MissionMeta parse_mission(std::string_view json_text) {
    MissionMeta m;
    try {
        const auto j = nlohmann::json::parse(json_text);
        const auto& home = j.at("home");
        if (!home.is_array() || home.size() != 2) throw Error(Errc::InvalidDocument, "home must be [lat, lon]");
        m.home_lat = home[0].get<double>();
        m.home_lon = home[1].get<double>();
        m.takeoff_alt_m = j.at("takeoff_alt_m").get<double>();
        for (const auto& wp : j.at("waypoints")) {
            if (!wp.is_array() || wp.size() != 3) {
                throw Error(Errc::InvalidDocument, "waypoint must be [lat, lon, alt_m]");
            }
            m.waypoints.push_back({wp[0].get<double>(), wp[1].get<double>(), wp[2].get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidDocument, std::string("mission: ") + e.what());
    }
    return m;
}

std::string write_mission(const MissionMeta& meta) {
    nlohmann::json j;
    j["home"] = {meta.home_lat, meta.home_lon};
    j["takeoff_alt_m"] = meta.takeoff_alt_m;
    j["waypoints"] = nlohmann::json::array();
    for (const auto& wp : meta.waypoints) j["waypoints"].push_back({wp.lat, wp.lon, wp.alt_m});
    return j.dump(2) + "\n";
}

}  // namespace droneguard::telemetry

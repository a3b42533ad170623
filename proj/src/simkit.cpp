#include "droneguard/simkit.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

#include "json.hpp"

#include "droneguard/error.hpp"
#include "droneguard/geo.hpp"

namespace droneguard::sim {

using telemetry::Field;
using telemetry::FlightLog;
using telemetry::FlightMode;
using telemetry::LogRecord;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kG = 9.80665;

// Vehicle and autopilot constants. Hover sits at 50% throttle with a full
// actuator, so a 0.7 capacity pushes hover to roughly 71%.
constexpr double kHoverThrottle = 50.0;
constexpr double kMaxTilt = 0.35;
constexpr double kDrag = 0.3;
constexpr double kVertDrag = 0.1;
constexpr double kNavAccel = 1.5;
constexpr double kVelGain = 1.5;
constexpr double kPosGain = 0.8;
constexpr double kAltGain = 1.0;
constexpr double kClimbGain = 2.5;
constexpr double kMaxClimbCmd = 2.0;
constexpr double kMaxDescentCmd = 1.5;
constexpr double kMaxVertSpeed = 3.0;
constexpr double kAttitudeTau = 0.2;
constexpr double kYawRate = 1.2;
constexpr double kWpRadius = 1.0;
constexpr double kWpAltTol = 0.5;
constexpr double kHomeRadius = 0.5;
constexpr double kArrivalSpeed = 0.5;
constexpr double kRtlAlt = 15.0;
constexpr double kSubstepMs = 20.0;

constexpr std::int64_t kArmIssueMs = 500;
constexpr std::int64_t kAutoIssueMs = 3000;
constexpr std::int64_t kPostLandMs = 1000;
constexpr std::int64_t kPostCrashMs = 10000;

// Noise scales.
constexpr double kPosNoiseM = 0.05;
constexpr double kAttNoise = 0.005;
constexpr double kThrottleNoise = 0.8;
constexpr double kSpeedNoise = 0.05;
constexpr double kAccelNoise = 0.1;
constexpr double kVertAccelNoise = 0.15;

// Wind response: gust strength and the attitude wobble it induces.
constexpr double kGustFraction = 0.25;
constexpr double kGustTau = 2.0;
constexpr double kWobblePerMps = 0.06;
constexpr double kWobbleHzRoll = 0.9;
constexpr double kWobbleHzPitch = 0.7;
constexpr double kGroundWobbleScale = 0.5;

constexpr double kActuatorJitter = 6.0;

enum class Stage { Init, Takeoff, Waypoint, HoldLast, RtlClimb, RtlHome, Land, Landed, Crashed };

struct Vec2 {
    double n = 0.0;
    double e = 0.0;
};

double norm(Vec2 v) { return std::hypot(v.n, v.e); }

struct Forcing {
    Vec2 wind;
    double wind_speed = 0.0;
    double capacity = 1.0;
    bool cutoff = false;
};

bool in_interval(std::int64_t t, std::int64_t start, std::int64_t end) { return t >= start && t < end; }

Forcing forcing_at(std::span<const FaultSpec> faults, std::int64_t t) {
    Forcing f;
    for (const auto& fault : faults) {
        if (const auto* w = std::get_if<WindFault>(&fault)) {
            if (in_interval(t, w->start_ms, w->end_ms) && w->speed_mps > 0.0) {
                f.wind.n += w->speed_mps * std::cos(w->direction_rad);
                f.wind.e += w->speed_mps * std::sin(w->direction_rad);
                f.wind_speed += w->speed_mps;
            }
        } else if (const auto* a = std::get_if<ActuatorFault>(&fault)) {
            if (in_interval(t, a->start_ms, a->end_ms)) f.capacity *= a->factor;
        } else if (const auto* c = std::get_if<EngineCutoffFault>(&fault)) {
            if (t >= c->at_ms) f.cutoff = true;
        }
    }
    if (f.cutoff) f.capacity = 0.0;
    return f;
}

bool labeled_at(std::span<const FaultSpec> faults, std::int64_t t) {
    for (const auto& fault : faults) {
        const bool hit = std::visit(
            [t](const auto& x) {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, EngineCutoffFault>) {
                    return t >= x.at_ms;
                } else {
                    return in_interval(t, x.start_ms, x.end_ms);
                }
            },
            fault);
        if (hit) return true;
    }
    return false;
}

void validate_mission(const MissionSpec& m) {
    if (!(m.cruise_speed > 0.0) || !std::isfinite(m.cruise_speed)) {
        throw Error(Errc::InfeasibleMission, "cruise speed must be positive");
    }
    if (m.tick_ms <= 0) throw Error(Errc::InfeasibleMission, "tick_ms must be positive");
    if (!(m.takeoff_alt_m > 0.0)) throw Error(Errc::InfeasibleMission, "takeoff altitude must be positive");
    if (m.waypoints.empty()) throw Error(Errc::InfeasibleMission, "mission needs at least one waypoint");
    for (const auto& wp : m.waypoints) {
        if (!(wp.alt_m > 0.0)) throw Error(Errc::InfeasibleMission, "waypoint altitude must be positive");
    }
}

void validate_faults(std::span<const FaultSpec> faults) {
    for (std::size_t i = 0; i < faults.size(); ++i) {
        std::visit(
            [](const auto& x) {
                using T = std::decay_t<decltype(x)>;
                if constexpr (std::is_same_v<T, EngineCutoffFault>) {
                    if (x.at_ms < 0) throw Error(Errc::InvalidFault, "engine cutoff time must be >= 0");
                } else {
                    if (x.start_ms < 0 || x.start_ms >= x.end_ms) {
                        throw Error(Errc::InvalidFault, "fault interval needs 0 <= start < end");
                    }
                    if constexpr (std::is_same_v<T, ActuatorFault>) {
                        if (!(x.factor > 0.0 && x.factor <= 1.0)) {
                            throw Error(Errc::InvalidFault, "actuator factor must lie in (0, 1]");
                        }
                    } else if constexpr (std::is_same_v<T, WindFault>) {
                        if (!(x.speed_mps >= 0.0) || !std::isfinite(x.direction_rad)) {
                            throw Error(Errc::InvalidFault, "wind speed must be >= 0");
                        }
                    } else if constexpr (std::is_same_v<T, SensorStuckFault>) {
                        LogRecord probe;
                        telemetry::set_field(probe, x.feature, x.stuck_value);
                        try {
                            telemetry::validate_record(probe);
                        } catch (const Error& e) {
                            throw Error(Errc::InvalidFault, std::string("stuck value out of range: ") + e.what());
                        }
                    }
                }
            },
            faults[i]);
        const auto* a = std::get_if<SensorStuckFault>(&faults[i]);
        if (!a) continue;
        for (std::size_t j = i + 1; j < faults.size(); ++j) {
            const auto* b = std::get_if<SensorStuckFault>(&faults[j]);
            if (b && b->feature == a->feature && a->start_ms < b->end_ms && b->start_ms < a->end_ms) {
                throw Error(Errc::ConflictingFaults,
                            "overlapping stuck-sensor faults on " + std::string(telemetry::field_name(a->feature)));
            }
        }
    }
}

struct Leg {
    Vec2 target;
    double alt = 0.0;
};

class Simulator {
public:
    Simulator(const MissionSpec& mission, std::span<const FaultSpec> faults, std::uint64_t seed)
        : mission_(mission), faults_(faults) {
        auto make = [seed](std::uint64_t salt) {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(salt)};
            return std::mt19937_64(seq);
        };
        sensor_rng_ = make(1);
        process_rng_ = make(2);
        gust_rng_ = make(3);
        fault_rng_ = make(4);
        auto gcs_rng = make(5);

        std::uniform_real_distribution<double> latency(80.0, 600.0);
        arm_enact_ = kArmIssueMs + static_cast<std::int64_t>(latency(gcs_rng));
        auto_enact_ = kAutoIssueMs + static_cast<std::int64_t>(latency(gcs_rng));
        rtl_latency_ = static_cast<std::int64_t>(latency(gcs_rng));

        std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
        wobble_phase_roll_ = phase(fault_rng_);
        wobble_phase_pitch_ = phase(fault_rng_);
        std::uniform_real_distribution<double> tumble(1.0, 2.0);
        std::bernoulli_distribution sign(0.5);
        tumble_roll_ = tumble(fault_rng_) * (sign(fault_rng_) ? 1.0 : -1.0);
        tumble_pitch_ = tumble(fault_rng_) * (sign(fault_rng_) ? 1.0 : -1.0);

        for (const auto& wp : mission_.waypoints) {
            const auto ne = geo::to_local(mission_.home_lat, mission_.home_lon, wp.lat, wp.lon);
            legs_.push_back({{ne.north, ne.east}, wp.alt_m});
        }
        timeout_ms_ = nominal_duration_ms() * 2 + 30000;
    }

    LabeledLog run() {
        LabeledLog out;
        out.log.meta = mission_.meta();
        const std::int64_t tick = mission_.tick_ms;
        const int substeps = std::max(1, static_cast<int>(std::lround(tick / kSubstepMs)));
        const double dt = tick / 1000.0 / substeps;

        for (std::int64_t k = 0;; ++k) {
            const std::int64_t t = k * tick;
            if (t > timeout_ms_) break;
            draw_tick_noise(t);
            out.log.records.push_back(make_record(t));
            out.anomaly_mask.push_back(labeled_at(faults_, t));
            if (finished(t)) break;
            for (int s = 0; s < substeps; ++s) {
                const double t_sub_ms = static_cast<double>(t) + s * (static_cast<double>(tick) / substeps);
                step(dt, static_cast<std::int64_t>(t_sub_ms));
            }
        }

        out.log.commands.push_back({1, kArmIssueMs, arm_enact_});
        out.log.commands.push_back({2, kAutoIssueMs, auto_enact_});
        if (rtl_issue_) out.log.commands.push_back({3, *rtl_issue_, *rtl_issue_ + rtl_latency_});
        out.completed = stage_ == Stage::Landed;
        return out;
    }

private:
    std::int64_t nominal_duration_ms() const {
        double path = 0.0;
        Vec2 prev{};
        for (const auto& leg : legs_) {
            path += norm({leg.target.n - prev.n, leg.target.e - prev.e});
            prev = leg.target;
        }
        path += norm(prev);
        const double seconds = 4.0 + mission_.takeoff_alt_m / kMaxClimbCmd + path / mission_.cruise_speed +
                               6.0 * static_cast<double>(legs_.size() + 1) + kRtlAlt / 0.8 + 10.0;
        return static_cast<std::int64_t>(seconds * 1000.0);
    }

    bool finished(std::int64_t t) const {
        if (stage_ == Stage::Landed) return t - landed_at_ >= kPostLandMs;
        if (stage_ == Stage::Crashed) return t - crashed_at_ >= kPostCrashMs;
        return false;
    }

    FlightMode mode_at(std::int64_t t) const {
        if (rtl_issue_ && t >= *rtl_issue_ + rtl_latency_) return FlightMode::Rtl;
        if (t >= auto_enact_) return FlightMode::Auto;
        return FlightMode::Stabilise;
    }

    bool on_ground() const { return alt_ <= 0.0; }

    void draw_tick_noise(std::int64_t t) {
        for (double& n : sensor_noise_) n = normal_(sensor_rng_);
        wobble_noise_roll_ = normal_(gust_rng_);
        wobble_noise_pitch_ = normal_(gust_rng_);
        jitter_noise_ = normal_(fault_rng_);

        const Forcing f = forcing_at(faults_, t);
        wobble_roll_ = 0.0;
        wobble_pitch_ = 0.0;
        if (f.wind_speed > 0.0 && stage_ != Stage::Crashed) {
            const double amp = kWobblePerMps * f.wind_speed * (on_ground() ? kGroundWobbleScale : 1.0);
            const double ts = t / 1000.0;
            wobble_roll_ = amp * (std::sin(2.0 * kPi * kWobbleHzRoll * ts + wobble_phase_roll_) +
                                  0.3 * wobble_noise_roll_);
            wobble_pitch_ = amp * (std::sin(2.0 * kPi * kWobbleHzPitch * ts + wobble_phase_pitch_) +
                                   0.3 * wobble_noise_pitch_);
        }
        jitter_ = 0.0;
        if (f.capacity < 1.0 && !f.cutoff) jitter_ = kActuatorJitter * (1.0 - f.capacity) * jitter_noise_;
    }

    LogRecord make_record(std::int64_t t) const {
        LogRecord r;
        r.timestamp_ms = t;
        r.mode = mode_at(t);
        geo::from_local(mission_.home_lat, mission_.home_lon,
                        {pos_.n + kPosNoiseM * sensor_noise_[0], pos_.e + kPosNoiseM * sensor_noise_[1]}, r.lat,
                        r.lon);
        r.rel_alt = std::max(0.0, alt_);
        r.roll = std::clamp(geo::wrap_pi(roll_ + wobble_roll_ + kAttNoise * sensor_noise_[2]), -kPi, kPi);
        r.pitch = std::clamp(geo::wrap_pi(pitch_ + wobble_pitch_ + kAttNoise * sensor_noise_[3]), -kPi, kPi);
        r.yaw = std::clamp(geo::wrap_pi(yaw_ + kAttNoise * sensor_noise_[4]), -kPi, kPi);
        const bool disarmed = stage_ == Stage::Init || stage_ == Stage::Landed || stage_ == Stage::Crashed;
        r.throttle = disarmed ? 0.0 : std::clamp(throttle_ + kThrottleNoise * sensor_noise_[5], 0.0, 100.0);
        r.groundspeed = std::max(0.0, norm(vel_) + kSpeedNoise * sensor_noise_[6]);
        r.climb = vu_ + kSpeedNoise * sensor_noise_[7];
        r.baro_status = 1;
        r.gps_fix = 3;
        r.wp_index = wp_index();

        for (const auto& fault : faults_) {
            if (const auto* s = std::get_if<SensorStuckFault>(&fault)) {
                if (in_interval(t, s->start_ms, s->end_ms)) telemetry::set_field(r, s->feature, s->stuck_value);
            }
        }
        return r;
    }

    int wp_index() const {
        switch (stage_) {
            case Stage::Init:
            case Stage::Takeoff: return 0;
            case Stage::Waypoint: return static_cast<int>(leg_) + 1;
            case Stage::Crashed: return crash_wp_index_;
            default: return static_cast<int>(legs_.size()) + 1;
        }
    }

    void step(double dt, std::int64_t t) {
        const Forcing f = forcing_at(faults_, t);

        const double gust_sigma = kGustFraction * f.wind_speed;
        const double gust_gain = gust_sigma * std::sqrt(2.0 * dt / kGustTau);
        const double gn = normal_(gust_rng_);
        const double ge = normal_(gust_rng_);
        if (f.wind_speed > 0.0 || gust_.n != 0.0 || gust_.e != 0.0) {
            gust_.n += -gust_.n / kGustTau * dt + gust_gain * gn;
            gust_.e += -gust_.e / kGustTau * dt + gust_gain * ge;
        }
        const double pn = normal_(process_rng_);
        const double pe = normal_(process_rng_);
        const double pu = normal_(process_rng_);

        if (stage_ == Stage::Crashed || stage_ == Stage::Landed) return;
        if (stage_ == Stage::Init) {
            if (f.cutoff) {
                crash(t);
                return;
            }
            if (t >= auto_enact_) stage_ = Stage::Takeoff;
            else return;
        }

        if (f.cutoff && !cutoff_seen_) {
            cutoff_seen_ = true;
            vu_ = std::min(vu_, 0.0);
        }

        // Guidance: horizontal target, altitude target and whether to steer the nose.
        Vec2 target = hold_;
        double alt_target = alt_;
        bool cruise = false;
        std::optional<double> descent_rate;
        switch (stage_) {
            case Stage::Takeoff:
                alt_target = mission_.takeoff_alt_m;
                if (alt_ >= mission_.takeoff_alt_m - 0.2) {
                    stage_ = Stage::Waypoint;
                    leg_ = 0;
                }
                break;
            case Stage::Waypoint: {
                const Leg& leg = legs_[leg_];
                target = leg.target;
                alt_target = leg.alt;
                cruise = true;
                const double dist = norm({leg.target.n - pos_.n, leg.target.e - pos_.e});
                if (dist < kWpRadius && std::abs(alt_ - leg.alt) < kWpAltTol && norm(vel_) < kArrivalSpeed) {
                    ++leg_;
                    if (leg_ == legs_.size()) {
                        stage_ = Stage::HoldLast;
                        hold_ = leg.target;
                        hold_alt_ = leg.alt;
                        rtl_issue_ = t;
                    }
                }
                break;
            }
            case Stage::HoldLast:
                alt_target = hold_alt_;
                if (t >= *rtl_issue_ + rtl_latency_) {
                    stage_ = Stage::RtlClimb;
                    rtl_alt_ = std::max(kRtlAlt, alt_);
                }
                break;
            case Stage::RtlClimb:
                alt_target = rtl_alt_;
                if (alt_ >= rtl_alt_ - 0.3) stage_ = Stage::RtlHome;
                break;
            case Stage::RtlHome:
                target = {};
                alt_target = rtl_alt_;
                cruise = true;
                if (norm(pos_) < kHomeRadius && norm(vel_) < kArrivalSpeed) {
                    stage_ = Stage::Land;
                    hold_ = {};
                }
                break;
            case Stage::Land:
                target = {};
                descent_rate = alt_ > 3.0 ? 1.0 : 0.6;
                break;
            default: break;
        }
        // Horizontal navigation.
        const Vec2 d{target.n - pos_.n, target.e - pos_.e};
        const double dist = norm(d);
        if (cruise && dist > 2.0) yaw_target_ = std::atan2(d.e, d.n);
        const double yaw_err = geo::wrap_pi(yaw_target_ - yaw_);
        yaw_ = geo::wrap_pi(yaw_ + std::clamp(yaw_err, -kYawRate * dt, kYawRate * dt));

        double speed = 0.0;
        if (cruise) {
            speed = std::min({mission_.cruise_speed, kPosGain * dist, std::sqrt(2.0 * kNavAccel * 0.6 * dist)});
            speed *= std::clamp(1.0 - std::abs(geo::wrap_pi(yaw_target_ - yaw_)) / 0.35, 0.0, 1.0);
        } else {
            speed = std::min(kPosGain * dist, 1.0);
        }
        Vec2 v_target{};
        if (dist > 1e-9) v_target = {speed * d.n / dist, speed * d.e / dist};
        const Vec2 dv{v_target.n - vel_des_.n, v_target.e - vel_des_.e};
        const double dv_norm = norm(dv);
        const double max_dv = kNavAccel * dt;
        if (dv_norm > max_dv) {
            vel_des_.n += dv.n / dv_norm * max_dv;
            vel_des_.e += dv.e / dv_norm * max_dv;
        } else {
            vel_des_ = v_target;
        }
        Vec2 a_cmd{kVelGain * (vel_des_.n - vel_.n) + kDrag * vel_.n, kVelGain * (vel_des_.e - vel_.e) + kDrag * vel_.e};
        const double a_max = kG * std::tan(kMaxTilt);
        const double a_norm = norm(a_cmd);
        if (a_norm > a_max) {
            a_cmd.n *= a_max / a_norm;
            a_cmd.e *= a_max / a_norm;
        }

        // Vertical control.
        double vz_des = 0.0;
        if (descent_rate) {
            vz_des = -*descent_rate;
        } else {
            vz_des = std::clamp(kAltGain * (alt_target - alt_), -kMaxDescentCmd, kMaxClimbCmd);
        }
        const double az_cmd = std::clamp(kClimbGain * (vz_des - vu_), -3.0, 5.0);

        // Attitude: first-order tracking of the tilt that produces a_cmd.
        const double cy = std::cos(yaw_);
        const double sy = std::sin(yaw_);
        const double a_fwd = a_cmd.n * cy + a_cmd.e * sy;
        const double a_right = -a_cmd.n * sy + a_cmd.e * cy;
        const double pitch_cmd = -std::atan(a_fwd / kG);
        const double roll_cmd = std::atan(a_right / kG);
        if (f.cutoff) {
            roll_ = geo::wrap_pi(roll_ + tumble_roll_ * dt);
            pitch_ = geo::wrap_pi(pitch_ + tumble_pitch_ * dt);
        } else {
            const double tau = kAttitudeTau / std::max(f.capacity, 0.05);
            const double gain = std::min(1.0, dt / tau);
            roll_ += (roll_cmd - roll_) * gain;
            pitch_ += (pitch_cmd - pitch_) * gain;
        }
        const double roll = roll_ + wobble_roll_;
        const double pitch = pitch_ + wobble_pitch_;
        const double tilt_cos = std::max(0.2, std::cos(roll) * std::cos(pitch));

        const double thr_cmd = kHoverThrottle * (kG + az_cmd) / (kG * std::max(f.capacity, 1e-3)) / tilt_cos;
        throttle_ = std::clamp(thr_cmd + jitter_, 0.0, 100.0);
        const double thrust = kG * f.capacity * throttle_ / kHoverThrottle;

        const double t_fwd = -thrust * std::sin(pitch) * std::cos(roll);
        const double t_right = thrust * std::sin(roll);
        double an = t_fwd * cy - t_right * sy - kDrag * (vel_.n - f.wind.n - gust_.n);
        double ae = t_fwd * sy + t_right * cy - kDrag * (vel_.e - f.wind.e - gust_.e);
        double au = thrust * std::cos(roll) * std::cos(pitch) - kG - kVertDrag * vu_;
        if (!f.cutoff) {
            an += kAccelNoise * pn;
            ae += kAccelNoise * pe;
            au += kVertAccelNoise * pu;
        }

        vel_.n += an * dt;
        vel_.e += ae * dt;
        vu_ += au * dt;
        if (!f.cutoff) vu_ = std::clamp(vu_, -kMaxVertSpeed, kMaxVertSpeed);
        if (alt_ <= 0.0 && vu_ <= 0.0) {
            // Resting on the ground: friction holds the airframe.
            vel_ = {};
            vu_ = 0.0;
        }
        pos_.n += vel_.n * dt;
        pos_.e += vel_.e * dt;
        alt_ += vu_ * dt;

        if (alt_ <= 0.0) {
            alt_ = 0.0;
            if (f.cutoff) {
                crash(t);
            } else if (stage_ == Stage::Land) {
                stage_ = Stage::Landed;
                landed_at_ = t;
                vel_ = {};
                vu_ = 0.0;
                throttle_ = 0.0;
            } else {
                vu_ = std::max(vu_, 0.0);
            }
        }
    }

    void crash(std::int64_t t) {
        crash_wp_index_ = wp_index();
        stage_ = Stage::Crashed;
        crashed_at_ = t;
        vel_ = {};
        vu_ = 0.0;
        throttle_ = 0.0;
        alt_ = 0.0;
    }

    const MissionSpec& mission_;
    std::span<const FaultSpec> faults_;
    std::vector<Leg> legs_;
    std::int64_t timeout_ms_ = 0;

    std::mt19937_64 sensor_rng_;
    std::mt19937_64 process_rng_;
    std::mt19937_64 gust_rng_;
    std::mt19937_64 fault_rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};

    std::int64_t arm_enact_ = 0;
    std::int64_t auto_enact_ = 0;
    std::int64_t rtl_latency_ = 0;
    std::optional<std::int64_t> rtl_issue_;

    double wobble_phase_roll_ = 0.0;
    double wobble_phase_pitch_ = 0.0;
    double tumble_roll_ = 0.0;
    double tumble_pitch_ = 0.0;

    std::array<double, 8> sensor_noise_{};
    double wobble_noise_roll_ = 0.0;
    double wobble_noise_pitch_ = 0.0;
    double jitter_noise_ = 0.0;
    double wobble_roll_ = 0.0;
    double wobble_pitch_ = 0.0;
    double jitter_ = 0.0;

    Stage stage_ = Stage::Init;
    std::size_t leg_ = 0;
    Vec2 pos_;
    Vec2 vel_;
    Vec2 vel_des_;
    Vec2 hold_;
    Vec2 gust_;
    double alt_ = 0.0;
    double vu_ = 0.0;
    double hold_alt_ = 0.0;
    double rtl_alt_ = kRtlAlt;
    double roll_ = 0.0;
    double pitch_ = 0.0;
    double yaw_ = 0.0;
    double yaw_target_ = 0.0;
    double throttle_ = 0.0;
    bool cutoff_seen_ = false;
    std::int64_t landed_at_ = 0;
    std::int64_t crashed_at_ = 0;
    int crash_wp_index_ = 0;
};

double parse_number(std::string_view s, std::string_view key) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
        throw Error(Errc::InvalidFault, "bad value for '" + std::string(key) + "': '" + std::string(s) + "'");
    }
    return v;
}

std::int64_t parse_time(std::string_view s, std::string_view key) {
    const double v = parse_number(s, key);
    if (v >= 9.2e18) return kForever;
    return static_cast<std::int64_t>(std::llround(v));
}

}  // namespace

telemetry::MissionMeta MissionSpec::meta() const {
    return {home_lat, home_lon, takeoff_alt_m, waypoints};
}

LabeledLog simulate(const MissionSpec& mission, std::span<const FaultSpec> faults, std::uint64_t seed) {
    validate_mission(mission);
    validate_faults(faults);
    Simulator sim(mission, faults, seed);
    return sim.run();
}

WindyPair windy_pair(const MissionSpec& mission, std::uint64_t seed) {
    validate_mission(mission);
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 77u};
    std::mt19937_64 rng(seq);
    const double direction = std::uniform_real_distribution<double>(0.0, 2.0 * kPi)(rng);

    auto run = [&](double speed) {
        const std::vector<FaultSpec> faults{WindFault{speed, direction, 0, kForever}};
        return simulate(mission, faults, seed);
    };

    // Bisect on the weakest wind that keeps the vehicle from ever passing the
    // last waypoint; such a run cannot complete either.
    const auto n_wp = static_cast<int>(mission.waypoints.size());
    auto passes_last = [&](double speed) {
        const auto r = run(speed);
        return std::any_of(r.log.records.begin(), r.log.records.end(),
                           [&](const telemetry::LogRecord& rec) { return rec.wp_index > n_wp; });
    };
    double lo = 0.0;
    double hi = kWindSearchMaxMps;
    if (!run(lo).completed) throw Error(Errc::CalibrationFailed, "mission does not complete without wind");
    if (passes_last(hi)) {
        throw Error(Errc::CalibrationFailed, "no wind up to " + telemetry::format_double(hi) +
                                                 " m/s keeps the vehicle from the last waypoint");
    }
    while (hi - lo > 0.05) {
        const double mid = 0.5 * (lo + hi);
        if (passes_last(mid)) lo = mid;
        else hi = mid;
    }

    WindyPair pair;
    pair.direction_rad = direction;
    pair.strong_speed_mps = hi;
    pair.mild_speed_mps = kMildWindRatio * hi;
    pair.strong = run(pair.strong_speed_mps);
    pair.mild = run(pair.mild_speed_mps);
    if (!pair.mild.completed) {
        throw Error(Errc::CalibrationFailed, "mild wind at " + telemetry::format_double(pair.mild_speed_mps) +
                                                 " m/s does not complete the mission");
    }
    return pair;
}

FlightLog extract_anomalous_segment(const LabeledLog& labeled) {
    FlightLog out;
    out.meta = labeled.log.meta;
    out.commands = labeled.log.commands;
    for (std::size_t i = 0; i < labeled.log.records.size(); ++i) {
        if (i < labeled.anomaly_mask.size() && labeled.anomaly_mask[i]) out.records.push_back(labeled.log.records[i]);
    }
    if (out.records.empty()) throw Error(Errc::NoAnomalies, "anomaly mask has no true entries");
    return out;
}

MissionSpec base_mission() {
    MissionSpec m;
    m.home_lat = -35.363261;
    m.home_lon = 149.165230;
    m.takeoff_alt_m = 10.0;
    m.cruise_speed = 5.0;
    m.tick_ms = 200;
    // North/east offsets from home in meters, plus altitude. The loop turns
    // both ways, climbs and descends 4 m, and ends ~50 m out so the return
    // leg reaches cruise speed.
    const std::array<std::array<double, 3>, 4> local = {{{35.0, 10.0, 10.0},
                                                          {40.0, 45.0, 14.0},
                                                          {10.0, 30.0, 10.0},
                                                          {-20.0, 45.0, 10.0}}};
    for (const auto& [n, e, alt] : local) {
        telemetry::Waypoint wp;
        geo::from_local(m.home_lat, m.home_lon, {n, e}, wp.lat, wp.lon);
        wp.alt_m = alt;
        m.waypoints.push_back(wp);
    }
    return m;
}

MissionSpec random_mission(std::uint64_t seed) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 99u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    MissionSpec m = base_mission();
    m.home_lat += (unit(rng) - 0.5) * 0.004;
    m.home_lon += (unit(rng) - 0.5) * 0.004;
    m.waypoints.clear();
    const int count = 3 + static_cast<int>(unit(rng) * 4.0);
    Vec2 prev{};
    for (int i = 0; i < count; ++i) {
        Vec2 p{};
        do {
            const double r = 15.0 + 45.0 * unit(rng);
            const double th = 2.0 * kPi * unit(rng);
            p = {r * std::cos(th), r * std::sin(th)};
        } while (norm({p.n - prev.n, p.e - prev.e}) < 15.0);
        telemetry::Waypoint wp;
        geo::from_local(m.home_lat, m.home_lon, {p.n, p.e}, wp.lat, wp.lon);
        wp.alt_m = 10.0 + 4.0 * unit(rng);
        m.waypoints.push_back(wp);
        prev = p;
    }
    return m;
}

double mean_tracking_error(const FlightLog& log) {
    if (!log.meta) throw Error(Errc::MissingMetadata, "tracking error needs mission metadata");
    const auto& meta = *log.meta;
    const auto n_wp = static_cast<int>(meta.waypoints.size());
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& r : log.records) {
        if (r.mode != FlightMode::Auto || r.wp_index < 1 || r.wp_index > n_wp) continue;
        const auto& to_wp = meta.waypoints[static_cast<std::size_t>(r.wp_index - 1)];
        double from_lat = meta.home_lat;
        double from_lon = meta.home_lon;
        double from_alt = meta.takeoff_alt_m;
        if (r.wp_index > 1) {
            const auto& w = meta.waypoints[static_cast<std::size_t>(r.wp_index - 2)];
            from_lat = w.lat;
            from_lon = w.lon;
            from_alt = w.alt_m;
        }
        const auto a = geo::to_local(meta.home_lat, meta.home_lon, from_lat, from_lon);
        const auto b = geo::to_local(meta.home_lat, meta.home_lon, to_wp.lat, to_wp.lon);
        const auto p = geo::to_local(meta.home_lat, meta.home_lon, r.lat, r.lon);
        const std::array<double, 3> ab{b.north - a.north, b.east - a.east, to_wp.alt_m - from_alt};
        const std::array<double, 3> ap{p.north - a.north, p.east - a.east, r.rel_alt - from_alt};
        const double len2 = ab[0] * ab[0] + ab[1] * ab[1] + ab[2] * ab[2];
        double s = 0.0;
        if (len2 > 0.0) s = std::clamp((ap[0] * ab[0] + ap[1] * ab[1] + ap[2] * ab[2]) / len2, 0.0, 1.0);
        const double dx = ap[0] - s * ab[0];
        const double dy = ap[1] - s * ab[1];
        const double dz = ap[2] - s * ab[2];
        total += std::sqrt(dx * dx + dy * dy + dz * dz);
        ++count;
    }
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

FaultSpec parse_fault(std::string_view text) {
    const auto colon = text.find(':');
    const std::string_view kind = text.substr(0, colon);
    std::map<std::string, std::string, std::less<>> kv;
    if (colon != std::string_view::npos) {
        std::string_view rest = text.substr(colon + 1);
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            const auto item = rest.substr(0, comma);
            const auto eq = item.find('=');
            if (eq == std::string_view::npos) {
                throw Error(Errc::InvalidFault, "expected key=value, got '" + std::string(item) + "'");
            }
            kv.emplace(std::string(item.substr(0, eq)), std::string(item.substr(eq + 1)));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
    }
    auto take = [&](std::string_view key) -> std::optional<std::string> {
        const auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        auto v = it->second;
        kv.erase(it);
        return v;
    };
    auto required = [&](std::string_view key) {
        auto v = take(key);
        if (!v) throw Error(Errc::InvalidFault, std::string(kind) + " fault needs '" + std::string(key) + "'");
        return *v;
    };
    auto interval = [&](auto& fault) {
        if (auto v = take("start")) fault.start_ms = parse_time(*v, "start");
        if (auto v = take("end")) fault.end_ms = parse_time(*v, "end");
    };

    FaultSpec out;
    if (kind == "wind") {
        WindFault f;
        f.speed_mps = parse_number(required("speed"), "speed");
        if (auto v = take("dir")) f.direction_rad = parse_number(*v, "dir");
        interval(f);
        out = f;
    } else if (kind == "actuator") {
        ActuatorFault f;
        f.factor = parse_number(required("factor"), "factor");
        interval(f);
        out = f;
    } else if (kind == "sensor_stuck") {
        SensorStuckFault f;
        const auto name = required("feature");
        const auto field = telemetry::field_from_name(name);
        if (!field) throw Error(Errc::InvalidFault, "unknown feature '" + name + "'");
        f.feature = *field;
        f.stuck_value = parse_number(required("value"), "value");
        interval(f);
        out = f;
    } else if (kind == "engine_cutoff") {
        EngineCutoffFault f;
        f.at_ms = parse_time(required("at"), "at");
        out = f;
    } else {
        throw Error(Errc::InvalidFault, "unknown fault kind '" + std::string(kind) + "'");
    }
    if (!kv.empty()) throw Error(Errc::InvalidFault, "unknown key '" + kv.begin()->first + "'");
    const std::array<FaultSpec, 1> one{out};
    validate_faults(one);
    return out;
}

std::string format_fault(const FaultSpec& fault) {
    using telemetry::format_double;
    auto interval = [](std::int64_t s, std::int64_t e) {
        return ",start=" + std::to_string(s) + ",end=" + std::to_string(e);
    };
    return std::visit(
        [&](const auto& f) -> std::string {
            using T = std::decay_t<decltype(f)>;
            if constexpr (std::is_same_v<T, WindFault>) {
                return "wind:speed=" + format_double(f.speed_mps) + ",dir=" + format_double(f.direction_rad) +
                       interval(f.start_ms, f.end_ms);
            } else if constexpr (std::is_same_v<T, ActuatorFault>) {
                return "actuator:factor=" + format_double(f.factor) + interval(f.start_ms, f.end_ms);
            } else if constexpr (std::is_same_v<T, SensorStuckFault>) {
                return "sensor_stuck:feature=" + std::string(telemetry::field_name(f.feature)) +
                       ",value=" + format_double(f.stuck_value) + interval(f.start_ms, f.end_ms);
            } else {
                return "engine_cutoff:at=" + std::to_string(f.at_ms);
            }
        },
        fault);
}

std::string write_labels(const LabeledLog& labeled) {
    std::string out = "timestamp_ms,is_anomaly\n";
    for (std::size_t i = 0; i < labeled.log.records.size(); ++i) {
        out += std::to_string(labeled.log.records[i].timestamp_ms);
        out += labeled.anomaly_mask[i] ? ",1\n" : ",0\n";
    }
    return out;
}

std::vector<bool> parse_labels(std::string_view text, const FlightLog& log) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line.rfind("timestamp_ms,is_anomaly", 0) != 0) {
        throw Error(Errc::MissingColumn, "label file needs header 'timestamp_ms,is_anomaly'");
    }
    std::vector<bool> mask;
    std::size_t i = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw Error(Errc::MissingColumn, "label row needs 2 fields");
        const auto ts = static_cast<std::int64_t>(parse_number(std::string_view(line).substr(0, comma), "timestamp_ms"));
        const auto flag = std::string_view(line).substr(comma + 1);
        if (flag != "0" && flag != "1") throw Error(Errc::ValueOutOfRange, "is_anomaly must be 0 or 1");
        if (i >= log.records.size() || log.records[i].timestamp_ms != ts) {
            throw Error(Errc::LengthMismatch, "label timestamps do not line up with the log");
        }
        mask.push_back(flag == "1");
        ++i;
    }
    if (mask.size() != log.records.size()) throw Error(Errc::LengthMismatch, "label count differs from record count");
    return mask;
}

MissionSpec parse_mission_spec(std::string_view json_text) {
    MissionSpec m;
    const auto meta = telemetry::parse_mission(json_text);
    m.home_lat = meta.home_lat;
    m.home_lon = meta.home_lon;
    m.takeoff_alt_m = meta.takeoff_alt_m;
    m.waypoints = meta.waypoints;
    try {
        const auto j = nlohmann::json::parse(json_text);
        if (j.contains("cruise_speed")) m.cruise_speed = j.at("cruise_speed").get<double>();
        if (j.contains("tick_ms")) m.tick_ms = j.at("tick_ms").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidDocument, std::string("mission: ") + e.what());
    }
    return m;
}

std::string write_mission_spec(const MissionSpec& mission) {
    auto j = nlohmann::json::parse(telemetry::write_mission(mission.meta()));
    j["cruise_speed"] = mission.cruise_speed;
    j["tick_ms"] = mission.tick_ms;
    return j.dump(2) + "\n";
}

}  // namespace droneguard::sim

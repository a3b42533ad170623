#pragma once

#include <cstdint>
#include <numbers>
#include <vector>

#include "doctest.h"

#include "droneguard/error.hpp"
#include "droneguard/telemetry.hpp"

#define CHECK_ERRC(expr, errc)                                      \
    do {                                                            \
        bool thrown_ = false;                                       \
        try {                                                       \
            (void)(expr);                                           \
        } catch (const droneguard::Error& e_) {                     \
            thrown_ = true;                                         \
            CHECK_MESSAGE(e_.code() == (errc), e_.what());          \
        }                                                           \
        CHECK_MESSAGE(thrown_, "expected " #errc " from " #expr);   \
    } while (false)

namespace testing {

inline droneguard::telemetry::LogRecord record(std::int64_t ts, droneguard::telemetry::FlightMode mode,
                                               double rel_alt = 0.0) {
    droneguard::telemetry::LogRecord r;
    r.timestamp_ms = ts;
    r.mode = mode;
    r.lat = -35.363261;
    r.lon = 149.16523;
    r.rel_alt = rel_alt;
    return r;
}

}  // namespace testing

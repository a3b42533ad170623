#pragma once

#include <cmath>
#include <numbers>

namespace droneguard::geo {

inline constexpr double kEarthRadiusM = 6371008.8;

struct LocalNe {
    double north = 0.0;
    double east = 0.0;
};

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Great-circle distance in meters (haversine).
inline double distance_m(double lat1, double lon1, double lat2, double lon2) {
    const double p1 = deg2rad(lat1);
    const double p2 = deg2rad(lat2);
    const double dp = p2 - p1;
    const double dl = deg2rad(lon2 - lon1);
    const double a = std::sin(dp / 2) * std::sin(dp / 2) +
                     std::cos(p1) * std::cos(p2) * std::sin(dl / 2) * std::sin(dl / 2);
    return 2.0 * kEarthRadiusM * std::atan2(std::sqrt(a), std::sqrt(1.0 - a));
}

/// Flat-earth projection around a reference point; accurate to well under a
/// centimeter over the few hundred meters a mission spans.
inline LocalNe to_local(double ref_lat, double ref_lon, double lat, double lon) {
    return {deg2rad(lat - ref_lat) * kEarthRadiusM,
            deg2rad(lon - ref_lon) * kEarthRadiusM * std::cos(deg2rad(ref_lat))};
}

inline void from_local(double ref_lat, double ref_lon, LocalNe ne, double& lat, double& lon) {
    lat = ref_lat + rad2deg(ne.north / kEarthRadiusM);
    lon = ref_lon + rad2deg(ne.east / (kEarthRadiusM * std::cos(deg2rad(ref_lat))));
}

inline double wrap_pi(double angle) {
    angle = std::remainder(angle, 2.0 * std::numbers::pi);
    return angle;
}

}  // namespace droneguard::geo

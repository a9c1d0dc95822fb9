#pragma once

#include <algorithm>
#include <cmath>

namespace trajcogn::geo {

inline constexpr double kEarthRadiusM = 6'371'000.0;
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDegToRad = kPi / 180.0;
inline constexpr double kMetersPerDegree = kEarthRadiusM * kDegToRad;

inline double haversine_m(double lat1, double lng1, double lat2, double lng2) {
    const double phi1 = lat1 * kDegToRad;
    const double phi2 = lat2 * kDegToRad;
    const double dphi = (lat2 - lat1) * kDegToRad;
    const double dlam = (lng2 - lng1) * kDegToRad;
    const double sp = std::sin(dphi / 2.0);
    const double sl = std::sin(dlam / 2.0);
    const double a = sp * sp + std::cos(phi1) * std::cos(phi2) * sl * sl;
    return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

// Initial great-circle bearing from point 1 to point 2, degrees in [0, 360).
// Coincident points yield 0.
inline double bearing_deg(double lat1, double lng1, double lat2, double lng2) {
    const double phi1 = lat1 * kDegToRad;
    const double phi2 = lat2 * kDegToRad;
    const double dlam = (lng2 - lng1) * kDegToRad;
    const double y = std::sin(dlam) * std::cos(phi2);
    const double x = std::cos(phi1) * std::sin(phi2) -
                     std::sin(phi1) * std::cos(phi2) * std::cos(dlam);
    if (y == 0.0 && x == 0.0) {
        return 0.0;
    }
    double deg = std::atan2(y, x) / kDegToRad;
    if (deg < 0.0) {
        deg += 360.0;
    }
    if (deg >= 360.0) {
        deg -= 360.0;
    }
    return deg;
}

// Local equirectangular projection anchored at (lat0, lng0). Good for
// point-to-segment distances at city scale; x is east, y is north, meters.
struct LocalProjection {
    double lat0 = 0.0;
    double lng0 = 0.0;
    double cos_lat0 = 1.0;

    LocalProjection() = default;
    LocalProjection(double lat, double lng)
        : lat0(lat), lng0(lng), cos_lat0(std::cos(lat * kDegToRad)) {}

    void to_xy(double lat, double lng, double& x, double& y) const {
        x = (lng - lng0) * cos_lat0 * kMetersPerDegree;
        y = (lat - lat0) * kMetersPerDegree;
    }
};

// Distance from point p to segment [a, b] in the plane, plus the offset of the
// closest point along the segment (meters from a, clamped to [0, |ab|]).
inline double point_segment_distance_xy(double px, double py, double ax, double ay,
                                        double bx, double by, double* offset_m = nullptr) {
    const double dx = bx - ax;
    const double dy = by - ay;
    const double len2 = dx * dx + dy * dy;
    double t = 0.0;
    if (len2 > 0.0) {
        t = ((px - ax) * dx + (py - ay) * dy) / len2;
        t = std::clamp(t, 0.0, 1.0);
    }
    const double cx = ax + t * dx;
    const double cy = ay + t * dy;
    if (offset_m != nullptr) {
        *offset_m = t * std::sqrt(len2);
    }
    const double ex = px - cx;
    const double ey = py - cy;
    return std::sqrt(ex * ex + ey * ey);
}

}  // namespace trajcogn::geo

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajcogn/dataset.hpp"
#include "trajcogn/errors.hpp"
#include "trajcogn/geo.hpp"
#include "trajcogn/mapmatch.hpp"

namespace trajcogn {

// Feature channel order used everywhere a point becomes a vector.
inline constexpr int kNumFeatureChannels = 6;
enum FeatureChannel : int {
    kChanLat = 0,
    kChanLng = 1,
    kChanSpeed = 2,
    kChanAccel = 3,
    kChanBearing = 4,
    kChanTimeOffset = 5,
};

struct EnrichedPoint {
    double lat = 0.0;
    double lng = 0.0;
    std::int64_t t = 0;       // epoch seconds, kept raw for weekday/hour lookups
    double t_offset = 0.0;    // seconds since the trajectory's first point
    double speed_mps = 0.0;
    double accel_mps2 = 0.0;
    double bearing_deg = 0.0;
    int segment_id = -1;

    std::array<double, kNumFeatureChannels> features() const {
        return {lat, lng, speed_mps, accel_mps2, bearing_deg, t_offset};
    }
};

struct EnrichedTrajectory {
    std::string id;
    std::vector<EnrichedPoint> points;

    double travel_time_s() const {
        return points.empty()
                   ? 0.0
                   : static_cast<double>(points.back().t - points.front().t);
    }
    std::int64_t departure_time() const { return points.empty() ? 0 : points.front().t; }
};

inline int days_since_epoch(std::int64_t t) {
    // Floor division so pre-1970 timestamps still land on the right day.
    const std::int64_t day = t >= 0 ? t / 86400 : (t - 86399) / 86400;
    return static_cast<int>(day);
}

// 0 = Sunday ... 6 = Saturday, in UTC.
inline int day_of_week_utc(std::int64_t t) {
    const int d = days_since_epoch(t);
    return ((d % 7) + 7 + 4) % 7;
}

inline int hour_of_day_utc(std::int64_t t) {
    const std::int64_t sec = ((t % 86400) + 86400) % 86400;
    return static_cast<int>(sec / 3600);
}

inline const char* weekday_name(int dow) {
    static const char* names[] = {"Sunday",   "Monday", "Tuesday", "Wednesday",
                                  "Thursday", "Friday", "Saturday"};
    if (dow < 0 || dow > 6) {
        throw DatasetError("weekday index out of range");
    }
    return names[dow];
}

// Speeds, accelerations, and bearings from consecutive point pairs.
//
// With n points there are n-1 segments between them. speed[i] covers the
// move from point i to i+1. The last point has no outgoing move; its stored
// speed and acceleration are zero and its bearing repeats the previous one.
// accel[i] differences speed[i] and speed[i+1]; the final defined speed gets
// zero acceleration (constant extrapolation of the last observed speed).
inline EnrichedTrajectory derive_kinematics(const RawTrajectory& traj,
                                            const MatchResult& match) {
    const std::size_t n = traj.points.size();
    if (n < 2) {
        throw DatasetError("kinematics need at least 2 points, trajectory " + traj.id);
    }
    if (match.segment_ids.size() != n) {
        throw DatasetError("match result size mismatch for trajectory " + traj.id);
    }
    EnrichedTrajectory out;
    out.id = traj.id;
    out.points.resize(n);

    std::vector<double> speed(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const auto& a = traj.points[i];
        const auto& b = traj.points[i + 1];
        const double dt = static_cast<double>(b.t - a.t);
        speed[i] = geo::haversine_m(a.lat, a.lng, b.lat, b.lng) / dt;
    }
    for (std::size_t i = 0; i < n; ++i) {
        auto& p = out.points[i];
        p.lat = traj.points[i].lat;
        p.lng = traj.points[i].lng;
        p.t = traj.points[i].t;
        p.t_offset = static_cast<double>(traj.points[i].t - traj.points[0].t);
        p.segment_id = match.segment_ids[i];
        p.speed_mps = i + 1 < n ? speed[i] : 0.0;
        if (i + 2 < n) {
            const double dt = static_cast<double>(traj.points[i + 1].t - traj.points[i].t);
            p.accel_mps2 = (speed[i + 1] - speed[i]) / dt;
        } else {
            p.accel_mps2 = 0.0;
        }
        if (i + 1 < n) {
            p.bearing_deg = geo::bearing_deg(traj.points[i].lat, traj.points[i].lng,
                                             traj.points[i + 1].lat,
                                             traj.points[i + 1].lng);
        } else {
            p.bearing_deg = out.points[i - 1].bearing_deg;
        }
    }
    return out;
}

// Per-channel mean and population standard deviation, fit on training data
// only and reused verbatim for validation and test.
struct NormStats {
    std::array<double, kNumFeatureChannels> mean{};
    std::array<double, kNumFeatureChannels> stddev{};

    static NormStats fit(const std::vector<EnrichedTrajectory>& trajectories) {
        NormStats s;
        s.mean.fill(0.0);
        s.stddev.fill(0.0);
        std::size_t count = 0;
        for (const auto& traj : trajectories) {
            for (const auto& p : traj.points) {
                const auto f = p.features();
                for (int c = 0; c < kNumFeatureChannels; ++c) {
                    s.mean[static_cast<std::size_t>(c)] += f[static_cast<std::size_t>(c)];
                }
                ++count;
            }
        }
        if (count == 0) {
            throw DatasetError("cannot fit normalization on an empty set");
        }
        for (auto& m : s.mean) {
            m /= static_cast<double>(count);
        }
        for (const auto& traj : trajectories) {
            for (const auto& p : traj.points) {
                const auto f = p.features();
                for (int c = 0; c < kNumFeatureChannels; ++c) {
                    const double d =
                        f[static_cast<std::size_t>(c)] - s.mean[static_cast<std::size_t>(c)];
                    s.stddev[static_cast<std::size_t>(c)] += d * d;
                }
            }
        }
        for (auto& v : s.stddev) {
            v = std::sqrt(v / static_cast<double>(count));
        }
        return s;
    }

    double normalize(double value, int channel) const {
        const double sd = stddev[static_cast<std::size_t>(channel)];
        if (sd == 0.0) {
            return 0.0;  // constant channel carries no signal
        }
        return (value - mean[static_cast<std::size_t>(channel)]) / sd;
    }

    double denormalize(double value, int channel) const {
        return value * stddev[static_cast<std::size_t>(channel)] +
               mean[static_cast<std::size_t>(channel)];
    }

    std::array<double, kNumFeatureChannels> normalize_point(const EnrichedPoint& p) const {
        const auto f = p.features();
        std::array<double, kNumFeatureChannels> out{};
        for (int c = 0; c < kNumFeatureChannels; ++c) {
            out[static_cast<std::size_t>(c)] = normalize(f[static_cast<std::size_t>(c)], c);
        }
        return out;
    }

    nlohmann::json to_json() const {
        return {{"mean", mean}, {"stddev", stddev}};
    }
    static NormStats from_json(const nlohmann::json& j) {
        NormStats s;
        const auto mean = j.at("mean").get<std::vector<double>>();
        const auto sd = j.at("stddev").get<std::vector<double>>();
        if (mean.size() != kNumFeatureChannels || sd.size() != kNumFeatureChannels) {
            throw DatasetError("normalization stats need 6 channels");
        }
        std::copy(mean.begin(), mean.end(), s.mean.begin());
        std::copy(sd.begin(), sd.end(), s.stddev.begin());
        return s;
    }
    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) {
            throw DatasetError("cannot write normalization stats: " + path);
        }
        out << to_json().dump(2) << '\n';
    }
    static NormStats load(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw DatasetError("cannot open normalization stats: " + path);
        }
        nlohmann::json j;
        in >> j;
        return from_json(j);
    }
};

// Travel-time normalization for regression targets, fit on training labels.
struct LabelStats {
    double mean = 0.0;
    double stddev = 1.0;

    static LabelStats fit(const std::vector<double>& labels) {
        if (labels.empty()) {
            throw DatasetError("cannot fit label stats on an empty set");
        }
        LabelStats s;
        for (double v : labels) {
            s.mean += v;
        }
        s.mean /= static_cast<double>(labels.size());
        double acc = 0.0;
        for (double v : labels) {
            acc += (v - s.mean) * (v - s.mean);
        }
        s.stddev = std::sqrt(acc / static_cast<double>(labels.size()));
        if (s.stddev == 0.0) {
            s.stddev = 1.0;
        }
        return s;
    }
    double normalize(double v) const { return (v - mean) / stddev; }
    double denormalize(double v) const { return v * stddev + mean; }

    nlohmann::json to_json() const { return {{"mean", mean}, {"stddev", stddev}}; }
    static LabelStats from_json(const nlohmann::json& j) {
        LabelStats s;
        s.mean = j.at("mean").get<double>();
        s.stddev = j.at("stddev").get<double>();
        return s;
    }
};

}  // namespace trajcogn

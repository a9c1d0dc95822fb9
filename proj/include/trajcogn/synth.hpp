#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "trajcogn/balltree.hpp"
#include "trajcogn/csv.hpp"
#include "trajcogn/dataset.hpp"
#include "trajcogn/errors.hpp"
#include "trajcogn/geo.hpp"
#include "trajcogn/network.hpp"
#include "trajcogn/rng.hpp"

namespace trajcogn {

struct SynthParams {
    int grid_rows = 12;
    int grid_cols = 12;
    double spacing_m = 200.0;
    int n_trajectories = 2000;
    double noise_sigma_m = 5.0;
    int dt_s = 10;
    std::uint64_t seed = 1;
    int n_random_pois = 40;
    // Depots come in pairs (2i <-> 2i+1); most trips shuttle between the two
    // ends of one pair, so a depot name near the origin is a strong hint for
    // the destination.
    int n_depots = 12;
    double depot_trip_fraction = 0.85;
    std::int64_t t0_base = 1559347200;  // departures fall in a 10 day window
    int t0_window_days = 10;
    int min_points = 6;
    int max_points = 60;
    double max_speed_mps = 15.0;
    double min_speed_mps = 1.0;
};

struct SynthTrajectory {
    RawTrajectory raw;
    std::vector<int> true_segments;  // ground truth per point, for matcher tests
};

struct SynthDataset {
    RoadNetwork network;
    std::vector<SynthTrajectory> trajectories;
    std::vector<Poi> pois;
};

namespace detail {

inline const char* depot_word(int i) {
    static const char* words[] = {"Alfa",   "Bravo",  "Charlie", "Delta", "Echo",
                                  "Foxtrot", "Golf",   "Hotel",   "India", "Juliett",
                                  "Kilo",   "Lima",   "Mike",    "November", "Oscar",
                                  "Papa",   "Quebec", "Romeo",   "Sierra", "Tango",
                                  "Uniform", "Victor", "Whiskey", "Xray"};
    constexpr int n = static_cast<int>(sizeof(words) / sizeof(words[0]));
    return words[i % n];
}

inline const char* poi_kind(int i) {
    static const char* kinds[] = {"Cafe",   "Market", "Park",   "School", "Garage",
                                  "Hotel",  "Bakery", "Library", "Clinic", "Studio"};
    constexpr int n = static_cast<int>(sizeof(kinds) / sizeof(kinds[0]));
    return kinds[i % n];
}

// Position `dist_m` along a run of segments, plus the segment it lands on.
// Grid segments are straight two-point polylines, so linear interpolation
// between the endpoints is exact.
inline void locate_on_path(const RoadNetwork& net, const std::vector<int>& path,
                           double dist_m, double* lat, double* lng, int* segment_id) {
    double cum = 0.0;
    for (std::size_t i = 0; i < path.size(); ++i) {
        const auto& seg = net.segment(path[i]);
        if (dist_m <= cum + seg.length_m || i + 1 == path.size()) {
            const double offset = std::clamp(dist_m - cum, 0.0, seg.length_m);
            const double f = offset / seg.length_m;
            const auto& a = seg.polyline.front();
            const auto& b = seg.polyline.back();
            *lat = a.first + f * (b.first - a.first);
            *lng = a.second + f * (b.second - a.second);
            *segment_id = seg.id;
            return;
        }
        cum += seg.length_m;
    }
    throw DatasetError("empty path in synthetic walk");
}

}  // namespace detail

// Deterministic synthetic city: a grid network, constant-speed shortest-path
// trips sampled at a fixed interval with Gaussian GPS noise, and a POI layer
// of depot markers plus random filler. The same params produce byte-identical
// output.
inline SynthDataset make_synthetic_dataset(const SynthParams& params) {
    if (params.n_trajectories <= 0) {
        throw DatasetError("need a positive trajectory count");
    }
    if (params.min_points < 2 || params.max_points < params.min_points) {
        throw DatasetError("invalid point count bounds");
    }
    SynthDataset ds;
    ds.network = make_grid_network(params.grid_rows, params.grid_cols, params.spacing_m);
    const auto& net = ds.network;
    const std::size_t n_vertices = net.vertices().size();
    Rng rng(params.seed);

    // Depot vertices, distinct, in draw order.
    std::vector<std::size_t> depot_vertices;
    const int n_depots = std::min<int>(params.n_depots, static_cast<int>(n_vertices));
    while (static_cast<int>(depot_vertices.size()) < n_depots) {
        const std::size_t v = rng.index(n_vertices);
        if (std::find(depot_vertices.begin(), depot_vertices.end(), v) ==
            depot_vertices.end()) {
            depot_vertices.push_back(v);
        }
    }
    for (int i = 0; i < n_depots; ++i) {
        const auto& v = net.vertices()[depot_vertices[static_cast<std::size_t>(i)]];
        Poi p;
        p.lat = v.lat;
        p.lng = v.lng;
        p.name = std::string("Depot ") + detail::depot_word(i);
        p.address = std::to_string(i + 1) + " Depot Road";
        ds.pois.push_back(std::move(p));
    }
    double min_lat = net.vertices().front().lat, max_lat = min_lat;
    double min_lng = net.vertices().front().lng, max_lng = min_lng;
    for (const auto& v : net.vertices()) {
        min_lat = std::min(min_lat, v.lat);
        max_lat = std::max(max_lat, v.lat);
        min_lng = std::min(min_lng, v.lng);
        max_lng = std::max(max_lng, v.lng);
    }
    for (int i = 0; i < params.n_random_pois; ++i) {
        Poi p;
        p.lat = rng.uniform(min_lat, max_lat);
        p.lng = rng.uniform(min_lng, max_lng);
        p.name = std::string(detail::poi_kind(i)) + " " + std::to_string(i + 1);
        p.address = std::to_string(100 + i) + " Grid Avenue";
        ds.pois.push_back(std::move(p));
    }

    const int n_pairs = n_depots / 2;
    const double dt = static_cast<double>(params.dt_s);
    int id_width = 1;
    for (int v = params.n_trajectories - 1; v >= 10; v /= 10) {
        ++id_width;
    }
    for (int i = 0; i < params.n_trajectories; ++i) {
        std::vector<int> path;
        double path_len = 0.0;
        double v_lo = 0.0, v_hi = 0.0;
        int attempts = 0;
        while (true) {
            if (++attempts > 200) {
                throw DatasetError("could not sample a feasible trip; grid too small");
            }
            std::int64_t from = 0, to = 0;
            const bool depot_trip =
                n_pairs > 0 && rng.uniform() < params.depot_trip_fraction;
            if (depot_trip) {
                const auto pair = rng.index(static_cast<std::size_t>(n_pairs));
                const bool forward = rng.uniform() < 0.5;
                const std::size_t a = depot_vertices[2 * pair + (forward ? 0 : 1)];
                const std::size_t b = depot_vertices[2 * pair + (forward ? 1 : 0)];
                from = net.vertices()[a].id;
                to = net.vertices()[b].id;
            } else {
                from = net.vertices()[rng.index(n_vertices)].id;
                to = net.vertices()[rng.index(n_vertices)].id;
            }
            if (from == to) {
                continue;
            }
            path.clear();
            path_len = net.shortest_path_m(
                from, to, std::numeric_limits<double>::infinity(), &path);
            if (!std::isfinite(path_len) || path.empty()) {
                continue;
            }
            v_hi = std::min(params.max_speed_mps, path_len / (dt * params.min_points));
            v_lo = std::max(params.min_speed_mps,
                            path_len / (dt * (params.max_points - 1)));
            if (v_lo <= v_hi) {
                break;
            }
        }
        const double speed = rng.uniform(v_lo, v_hi);
        // Sampling never aligns with departure; the phase keeps every fix
        // strictly inside a segment, so no point sits exactly on a vertex
        // where the true segment would be ambiguous.
        const double phase = rng.uniform(0.25, 0.75) * dt * speed;
        const std::int64_t t0 =
            params.t0_base +
            rng.uniform_int(0, static_cast<std::int64_t>(params.t0_window_days) * 86400 - 1);

        SynthTrajectory st;
        std::string id = std::to_string(i);
        st.raw.id = "s" + std::string(static_cast<std::size_t>(id_width) - id.size(), '0') + id;
        for (int j = 0;; ++j) {
            const double d = phase + j * dt * speed;
            if (d > path_len) {
                break;
            }
            double lat = 0.0, lng = 0.0;
            int seg = -1;
            detail::locate_on_path(net, path, d, &lat, &lng, &seg);
            st.true_segments.push_back(seg);
            if (params.noise_sigma_m > 0.0) {
                lat += rng.normal(0.0, params.noise_sigma_m) / geo::kMetersPerDegree;
                lng += rng.normal(0.0, params.noise_sigma_m) /
                       (geo::kMetersPerDegree * std::cos(lat * geo::kDegToRad));
            }
            st.raw.points.push_back({lat, lng, t0 + static_cast<std::int64_t>(j) *
                                                        params.dt_s});
        }
        ds.trajectories.push_back(std::move(st));
    }
    return ds;
}

inline void write_pois_csv(const std::string& path, const std::vector<Poi>& pois) {
    std::ofstream out(path);
    if (!out) {
        throw DatasetError("cannot write POI file: " + path);
    }
    out << "lat,lng,name,address\n";
    for (const auto& p : pois) {
        out << csv::format_double(p.lat) << ',' << csv::format_double(p.lng) << ','
            << csv::quote_field(p.name) << ',' << csv::quote_field(p.address) << '\n';
    }
}

}  // namespace trajcogn

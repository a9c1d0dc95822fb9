#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "trajcogn/csv.hpp"
#include "trajcogn/errors.hpp"

namespace trajcogn {

inline constexpr std::size_t kMinTrajectoryPoints = 6;

struct RawPoint {
    double lat = 0.0;
    double lng = 0.0;
    std::int64_t t = 0;

    bool valid() const {
        return lat >= -90.0 && lat <= 90.0 && lng >= -180.0 && lng <= 180.0 && t >= 0;
    }
};

struct RawTrajectory {
    std::string id;
    std::vector<RawPoint> points;

    std::int64_t departure_time() const { return points.front().t; }
    std::int64_t travel_time() const { return points.back().t - points.front().t; }
};

struct IngestReport {
    std::vector<RawTrajectory> trajectories;
    std::size_t dropped_short = 0;
};

// Reads a trajectory CSV with header `traj_id,lat,lng,t`, one point per row.
// Points are grouped by id and sorted by timestamp. Trajectories with fewer
// than 6 points are dropped and counted. Duplicate timestamps inside one
// trajectory and out-of-range fields are record-level errors.
inline IngestReport ingest_csv(const std::string& path) {
    csv::Reader reader(path);
    std::vector<std::string> fields;
    if (!reader.next(fields)) {
        throw DatasetError("empty trajectory file: " + path);
    }
    if (fields.size() != 4 || fields[0] != "traj_id") {
        throw RecordError(reader.line_no, "expected header 'traj_id,lat,lng,t'");
    }

    struct TaggedPoint {
        RawPoint p;
        std::size_t line;
    };
    std::map<std::string, std::vector<TaggedPoint>> groups;
    std::vector<std::string> order;
    bool any_row = false;
    while (reader.next(fields)) {
        any_row = true;
        if (fields.size() != 4) {
            throw RecordError(reader.line_no,
                              "expected 4 fields, got " + std::to_string(fields.size()));
        }
        RawPoint p;
        p.lat = csv::parse_double(fields[1], reader.line_no);
        p.lng = csv::parse_double(fields[2], reader.line_no);
        p.t = csv::parse_int(fields[3], reader.line_no);
        if (!p.valid()) {
            throw RecordError(reader.line_no, "point out of range (lat/lng/t)");
        }
        auto [it, inserted] = groups.try_emplace(fields[0]);
        if (inserted) {
            order.push_back(fields[0]);
        }
        it->second.push_back({p, reader.line_no});
    }
    if (!any_row) {
        throw DatasetError("trajectory file has a header but no rows: " + path);
    }

    IngestReport report;
    for (const auto& id : order) {
        auto& pts = groups[id];
        std::stable_sort(pts.begin(), pts.end(),
                         [](const TaggedPoint& a, const TaggedPoint& b) { return a.p.t < b.p.t; });
        for (std::size_t i = 1; i < pts.size(); ++i) {
            if (pts[i].p.t == pts[i - 1].p.t) {
                throw RecordError(pts[i].line,
                                  "duplicate timestamp in trajectory '" + id + "'");
            }
        }
        if (pts.size() < kMinTrajectoryPoints) {
            ++report.dropped_short;
            continue;
        }
        RawTrajectory traj;
        traj.id = id;
        traj.points.reserve(pts.size());
        for (const auto& tp : pts) {
            traj.points.push_back(tp.p);
        }
        report.trajectories.push_back(std::move(traj));
    }
    return report;
}

inline void write_trajectories_csv(const std::string& path,
                                   const std::vector<RawTrajectory>& trajectories) {
    std::ofstream out(path);
    if (!out) {
        throw DatasetError("cannot write file: " + path);
    }
    out << "traj_id,lat,lng,t\n";
    for (const auto& traj : trajectories) {
        for (const auto& p : traj.points) {
            out << csv::quote_field(traj.id) << ',' << csv::format_double(p.lat) << ','
                << csv::format_double(p.lng) << ',' << p.t << '\n';
        }
    }
}

struct SplitRatios {
    double train = 0.8;
    double valid = 0.1;
    double test = 0.1;
};

struct DatasetSplit {
    std::vector<std::string> train;
    std::vector<std::string> valid;
    std::vector<std::string> test;
    SplitRatios ratios;
};

// Chronological split by departure time (timestamp of the first point).
// Sizes are floor allocations of the ratios with the remainder assigned to
// train; the earliest trajectories go to train, then valid, then test.
inline DatasetSplit chronological_split(const std::vector<RawTrajectory>& trajectories,
                                        SplitRatios ratios = {}) {
    if (trajectories.size() < 3) {
        throw DatasetError("need at least 3 trajectories to split, got " +
                           std::to_string(trajectories.size()));
    }
    const double sum = ratios.train + ratios.valid + ratios.test;
    if (ratios.train < 0.0 || ratios.valid < 0.0 || ratios.test < 0.0 ||
        std::abs(sum - 1.0) > 1e-9) {
        throw DatasetError("split ratios must be non-negative and sum to 1");
    }

    std::vector<std::size_t> idx(trajectories.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        idx[i] = i;
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        const auto ta = trajectories[a].departure_time();
        const auto tb = trajectories[b].departure_time();
        if (ta != tb) {
            return ta < tb;
        }
        return trajectories[a].id < trajectories[b].id;
    });

    const std::size_t n = trajectories.size();
    // The epsilon absorbs representation dirt in ratios like 1 - 0.8 - 0.1.
    const auto n_valid = static_cast<std::size_t>(std::floor(ratios.valid * n + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * n + 1e-9));
    const std::size_t n_train = n - n_valid - n_test;

    DatasetSplit split;
    split.ratios = ratios;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string& id = trajectories[idx[i]].id;
        if (i < n_train) {
            split.train.push_back(id);
        } else if (i < n_train + n_valid) {
            split.valid.push_back(id);
        } else {
            split.test.push_back(id);
        }
    }
    return split;
}

inline nlohmann::json split_to_json(const DatasetSplit& split) {
    return nlohmann::json{{"ratios", {split.ratios.train, split.ratios.valid, split.ratios.test}},
                          {"train", split.train},
                          {"valid", split.valid},
                          {"test", split.test}};
}

inline DatasetSplit split_from_json(const nlohmann::json& j) {
    DatasetSplit split;
    split.ratios.train = j.at("ratios").at(0).get<double>();
    split.ratios.valid = j.at("ratios").at(1).get<double>();
    split.ratios.test = j.at("ratios").at(2).get<double>();
    split.train = j.at("train").get<std::vector<std::string>>();
    split.valid = j.at("valid").get<std::vector<std::string>>();
    split.test = j.at("test").get<std::vector<std::string>>();
    return split;
}

inline void save_split(const std::string& path, const DatasetSplit& split) {
    std::ofstream out(path);
    if (!out) {
        throw DatasetError("cannot write file: " + path);
    }
    out << split_to_json(split).dump(2) << '\n';
}

inline DatasetSplit load_split(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DatasetError("cannot open split file: " + path);
    }
    nlohmann::json j;
    in >> j;
    return split_from_json(j);
}

}  // namespace trajcogn

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "trajcogn/errors.hpp"
#include "trajcogn/geo.hpp"

namespace trajcogn {

struct Vertex {
    std::int64_t id = 0;
    double lat = 0.0;
    double lng = 0.0;
};

struct Segment {
    int id = 0;
    std::int64_t from = 0;
    std::int64_t to = 0;
    std::vector<std::pair<double, double>> polyline;  // (lat, lng)
    double length_m = 0.0;
};

// Uniform cell grid over segment bounding boxes. Queries return candidate
// segment ids whose padded boxes intersect the search disk; exact distances
// are computed by the caller.
class SegmentGridIndex {
public:
    void build(const std::vector<Segment>& segments, double cell_m = 250.0) {
        cell_m_ = cell_m;
        min_lat_ = std::numeric_limits<double>::max();
        min_lng_ = std::numeric_limits<double>::max();
        double max_lat = std::numeric_limits<double>::lowest();
        double max_lng = std::numeric_limits<double>::lowest();
        for (const auto& s : segments) {
            for (const auto& [lat, lng] : s.polyline) {
                min_lat_ = std::min(min_lat_, lat);
                min_lng_ = std::min(min_lng_, lng);
                max_lat = std::max(max_lat, lat);
                max_lng = std::max(max_lng, lng);
            }
        }
        mid_lat_ = 0.5 * (min_lat_ + max_lat);
        lat_per_cell_ = cell_m_ / geo::kMetersPerDegree;
        const double cos_mid = std::max(0.05, std::cos(mid_lat_ * geo::kDegToRad));
        lng_per_cell_ = cell_m_ / (geo::kMetersPerDegree * cos_mid);
        cols_ = 1 + static_cast<int>((max_lng - min_lng_) / lng_per_cell_);
        rows_ = 1 + static_cast<int>((max_lat - min_lat_) / lat_per_cell_);
        cells_.assign(static_cast<std::size_t>(rows_) * cols_, {});
        for (const auto& s : segments) {
            double lo_lat = std::numeric_limits<double>::max();
            double lo_lng = std::numeric_limits<double>::max();
            double hi_lat = std::numeric_limits<double>::lowest();
            double hi_lng = std::numeric_limits<double>::lowest();
            for (const auto& [lat, lng] : s.polyline) {
                lo_lat = std::min(lo_lat, lat);
                lo_lng = std::min(lo_lng, lng);
                hi_lat = std::max(hi_lat, lat);
                hi_lng = std::max(hi_lng, lng);
            }
            const int r0 = row_of(lo_lat);
            const int r1 = row_of(hi_lat);
            const int c0 = col_of(lo_lng);
            const int c1 = col_of(hi_lng);
            for (int r = r0; r <= r1; ++r) {
                for (int c = c0; c <= c1; ++c) {
                    cells_[static_cast<std::size_t>(r) * cols_ + c].push_back(s.id);
                }
            }
        }
    }

    // All segments whose cells intersect the disk of `radius_m` around the
    // query point. May contain duplicates across cells; caller deduplicates
    // via the sorted unique result.
    std::vector<int> candidates(double lat, double lng, double radius_m) const {
        const double dlat = radius_m / geo::kMetersPerDegree;
        const double cos_mid = std::max(0.05, std::cos(mid_lat_ * geo::kDegToRad));
        const double dlng = radius_m / (geo::kMetersPerDegree * cos_mid);
        const int r0 = row_of(lat - dlat);
        const int r1 = row_of(lat + dlat);
        const int c0 = col_of(lng - dlng);
        const int c1 = col_of(lng + dlng);
        std::vector<int> out;
        for (int r = r0; r <= r1; ++r) {
            for (int c = c0; c <= c1; ++c) {
                const auto& cell = cells_[static_cast<std::size_t>(r) * cols_ + c];
                out.insert(out.end(), cell.begin(), cell.end());
            }
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

private:
    int row_of(double lat) const {
        const int r = static_cast<int>((lat - min_lat_) / lat_per_cell_);
        return std::clamp(r, 0, rows_ - 1);
    }
    int col_of(double lng) const {
        const int c = static_cast<int>((lng - min_lng_) / lng_per_cell_);
        return std::clamp(c, 0, cols_ - 1);
    }

    double cell_m_ = 250.0;
    double min_lat_ = 0.0, min_lng_ = 0.0, mid_lat_ = 0.0;
    double lat_per_cell_ = 1.0, lng_per_cell_ = 1.0;
    int rows_ = 1, cols_ = 1;
    std::vector<std::vector<int>> cells_;
};

class RoadNetwork {
public:
    RoadNetwork() = default;
    RoadNetwork(std::vector<Vertex> vertices, std::vector<Segment> segments) {
        init(std::move(vertices), std::move(segments));
    }

    const std::vector<Vertex>& vertices() const { return vertices_; }
    const std::vector<Segment>& segments() const { return segments_; }
    const Segment& segment(int id) const { return segments_.at(static_cast<std::size_t>(id)); }
    int num_segments() const { return static_cast<int>(segments_.size()); }
    const Vertex& vertex(std::int64_t id) const {
        return vertices_[vertex_index_.at(id)];
    }
    const SegmentGridIndex& index() const { return index_; }

    // Outgoing segments per vertex, by vertex id.
    const std::vector<int>& outgoing(std::int64_t vertex_id) const {
        static const std::vector<int> empty;
        auto it = outgoing_.find(vertex_id);
        return it == outgoing_.end() ? empty : it->second;
    }

    // Shortest network distance between vertices, following segment lengths.
    // Returns infinity when unreachable. `max_dist` bounds the search.
    double shortest_path_m(std::int64_t from, std::int64_t to,
                           double max_dist = std::numeric_limits<double>::infinity(),
                           std::vector<int>* path_segments = nullptr) const {
        if (from == to) {
            return 0.0;
        }
        using Entry = std::pair<double, std::int64_t>;
        std::priority_queue<Entry, std::vector<Entry>, std::greater<>> pq;
        std::unordered_map<std::int64_t, double> dist;
        std::unordered_map<std::int64_t, int> via;
        pq.push({0.0, from});
        dist[from] = 0.0;
        while (!pq.empty()) {
            auto [d, v] = pq.top();
            pq.pop();
            if (d > dist[v]) {
                continue;
            }
            if (v == to) {
                if (path_segments != nullptr) {
                    path_segments->clear();
                    std::int64_t cur = to;
                    while (cur != from) {
                        const int seg = via.at(cur);
                        path_segments->push_back(seg);
                        cur = segments_[static_cast<std::size_t>(seg)].from;
                    }
                    std::reverse(path_segments->begin(), path_segments->end());
                }
                return d;
            }
            if (d > max_dist) {
                break;
            }
            for (int seg_id : outgoing(v)) {
                const auto& seg = segments_[static_cast<std::size_t>(seg_id)];
                const double nd = d + seg.length_m;
                auto it = dist.find(seg.to);
                if (it == dist.end() || nd < it->second) {
                    dist[seg.to] = nd;
                    via[seg.to] = seg_id;
                    pq.push({nd, seg.to});
                }
            }
        }
        return std::numeric_limits<double>::infinity();
    }

    bool connected() const {
        if (vertices_.empty()) {
            return false;
        }
        // BFS over the directed graph from the first vertex; treats the
        // network as connected when every vertex is reachable.
        std::unordered_map<std::int64_t, bool> seen;
        std::vector<std::int64_t> stack = {vertices_.front().id};
        seen[vertices_.front().id] = true;
        while (!stack.empty()) {
            const std::int64_t v = stack.back();
            stack.pop_back();
            for (int seg_id : outgoing(v)) {
                const std::int64_t w = segments_[static_cast<std::size_t>(seg_id)].to;
                if (!seen[w]) {
                    seen[w] = true;
                    stack.push_back(w);
                }
            }
        }
        for (const auto& v : vertices_) {
            if (!seen[v.id]) {
                return false;
            }
        }
        return true;
    }

private:
    void init(std::vector<Vertex> vertices, std::vector<Segment> segments) {
        vertices_ = std::move(vertices);
        segments_ = std::move(segments);
        if (segments_.empty()) {
            throw NetworkError("network has no segments");
        }
        for (std::size_t i = 0; i < vertices_.size(); ++i) {
            vertex_index_[vertices_[i].id] = i;
        }
        std::sort(segments_.begin(), segments_.end(),
                  [](const Segment& a, const Segment& b) { return a.id < b.id; });
        for (std::size_t i = 0; i < segments_.size(); ++i) {
            const auto& s = segments_[i];
            if (s.id != static_cast<int>(i)) {
                throw NetworkError("segment ids must be dense in [0, |E|); missing id " +
                                   std::to_string(i));
            }
            if (!vertex_index_.count(s.from) || !vertex_index_.count(s.to)) {
                throw NetworkError("segment " + std::to_string(s.id) +
                                   " references a missing vertex");
            }
            if (s.length_m <= 0.0) {
                throw NetworkError("segment " + std::to_string(s.id) +
                                   " has non-positive length");
            }
            if (s.polyline.size() < 2) {
                throw NetworkError("segment " + std::to_string(s.id) +
                                   " needs a polyline with at least 2 points");
            }
            outgoing_[s.from].push_back(s.id);
        }
        index_.build(segments_);
    }

    std::vector<Vertex> vertices_;
    std::vector<Segment> segments_;
    std::unordered_map<std::int64_t, std::size_t> vertex_index_;
    std::unordered_map<std::int64_t, std::vector<int>> outgoing_;
    SegmentGridIndex index_;
};

inline double polyline_length_m(const std::vector<std::pair<double, double>>& polyline) {
    double total = 0.0;
    for (std::size_t i = 1; i < polyline.size(); ++i) {
        total += geo::haversine_m(polyline[i - 1].first, polyline[i - 1].second,
                                  polyline[i].first, polyline[i].second);
    }
    return total;
}

inline RoadNetwork load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw NetworkError("cannot open network file: " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw NetworkError("invalid network JSON: " + std::string(e.what()));
    }
    std::vector<Vertex> vertices;
    for (const auto& v : j.at("vertices")) {
        vertices.push_back({v.at("id").get<std::int64_t>(), v.at("lat").get<double>(),
                            v.at("lng").get<double>()});
    }
    std::vector<Segment> segments;
    for (const auto& s : j.at("segments")) {
        Segment seg;
        seg.id = s.at("id").get<int>();
        seg.from = s.at("from").get<std::int64_t>();
        seg.to = s.at("to").get<std::int64_t>();
        for (const auto& p : s.at("polyline")) {
            seg.polyline.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
        }
        seg.length_m = s.contains("length_m") ? s.at("length_m").get<double>()
                                              : polyline_length_m(seg.polyline);
        segments.push_back(std::move(seg));
    }
    return RoadNetwork(std::move(vertices), std::move(segments));
}

inline void save_network(const std::string& path, const RoadNetwork& net) {
    nlohmann::json j;
    j["vertices"] = nlohmann::json::array();
    for (const auto& v : net.vertices()) {
        j["vertices"].push_back({{"id", v.id}, {"lat", v.lat}, {"lng", v.lng}});
    }
    j["segments"] = nlohmann::json::array();
    for (const auto& s : net.segments()) {
        nlohmann::json poly = nlohmann::json::array();
        for (const auto& [lat, lng] : s.polyline) {
            poly.push_back({lat, lng});
        }
        j["segments"].push_back({{"id", s.id},
                                 {"from", s.from},
                                 {"to", s.to},
                                 {"polyline", poly},
                                 {"length_m", s.length_m}});
    }
    std::ofstream out(path);
    if (!out) {
        throw NetworkError("cannot write network file: " + path);
    }
    out << j.dump(2) << '\n';
}

// Rectangular grid city: rows x cols vertices spaced `spacing_m` apart, with
// both directed segments per undirected edge. Vertex ids are row-major.
inline RoadNetwork make_grid_network(int rows, int cols, double spacing_m,
                                     double base_lat = 30.0, double base_lng = 104.0) {
    if (rows < 2 || cols < 2) {
        throw NetworkError("grid needs at least 2x2 vertices");
    }
    const double dlat = spacing_m / geo::kMetersPerDegree;
    const double dlng =
        spacing_m / (geo::kMetersPerDegree * std::cos(base_lat * geo::kDegToRad));
    std::vector<Vertex> vertices;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            vertices.push_back({static_cast<std::int64_t>(r) * cols + c,
                                base_lat + r * dlat, base_lng + c * dlng});
        }
    }
    std::vector<Segment> segments;
    auto add_edge = [&](std::int64_t a, std::int64_t b) {
        for (const auto& [u, v] : {std::pair{a, b}, std::pair{b, a}}) {
            Segment seg;
            seg.id = static_cast<int>(segments.size());
            seg.from = u;
            seg.to = v;
            const auto& vu = vertices[static_cast<std::size_t>(u)];
            const auto& vv = vertices[static_cast<std::size_t>(v)];
            seg.polyline = {{vu.lat, vu.lng}, {vv.lat, vv.lng}};
            seg.length_m = polyline_length_m(seg.polyline);
            segments.push_back(std::move(seg));
        }
    };
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            const std::int64_t v = static_cast<std::int64_t>(r) * cols + c;
            if (c + 1 < cols) {
                add_edge(v, v + 1);
            }
            if (r + 1 < rows) {
                add_edge(v, v + cols);
            }
        }
    }
    return RoadNetwork(std::move(vertices), std::move(segments));
}

// Distance in meters from a point to a segment's polyline, measured in a
// local projection around the point. Also reports the offset of the closest
// position along the polyline, in meters from the segment start.
inline double point_to_segment_m(const Segment& seg, double lat, double lng,
                                 double* offset_m = nullptr) {
    const geo::LocalProjection proj(lat, lng);
    double px = 0.0, py = 0.0;
    proj.to_xy(lat, lng, px, py);
    double best = std::numeric_limits<double>::infinity();
    double best_offset = 0.0;
    double cum = 0.0;
    for (std::size_t i = 1; i < seg.polyline.size(); ++i) {
        double ax = 0.0, ay = 0.0, bx = 0.0, by = 0.0;
        proj.to_xy(seg.polyline[i - 1].first, seg.polyline[i - 1].second, ax, ay);
        proj.to_xy(seg.polyline[i].first, seg.polyline[i].second, bx, by);
        double off = 0.0;
        const double d = geo::point_segment_distance_xy(px, py, ax, ay, bx, by, &off);
        if (d < best) {
            best = d;
            best_offset = cum + off;
        }
        cum += geo::haversine_m(seg.polyline[i - 1].first, seg.polyline[i - 1].second,
                                seg.polyline[i].first, seg.polyline[i].second);
    }
    if (offset_m != nullptr) {
        *offset_m = std::min(best_offset, seg.length_m);
    }
    return best;
}

}  // namespace trajcogn

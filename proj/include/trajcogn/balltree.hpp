#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <string>
#include <vector>

#include "trajcogn/csv.hpp"
#include "trajcogn/errors.hpp"
#include "trajcogn/geo.hpp"

namespace trajcogn {

struct Poi {
    double lat = 0.0;
    double lng = 0.0;
    std::string name;
    std::string address;
};

inline std::vector<Poi> load_pois_csv(const std::string& path) {
    csv::Reader reader(path);
    std::vector<std::string> fields;
    if (!reader.next(fields)) {
        throw DatasetError("empty POI file: " + path);
    }
    if (fields != std::vector<std::string>{"lat", "lng", "name", "address"}) {
        throw DatasetError("POI file must start with header lat,lng,name,address");
    }
    std::vector<Poi> pois;
    while (reader.next(fields)) {
        if (fields.size() != 4) {
            throw RecordError(reader.line_no, "expected 4 fields in POI row");
        }
        Poi p;
        p.lat = csv::parse_double(fields[0], reader.line_no);
        p.lng = csv::parse_double(fields[1], reader.line_no);
        p.name = fields[2];
        p.address = fields[3];
        pois.push_back(std::move(p));
    }
    if (pois.empty()) {
        throw DatasetError("POI file has a header but no rows: " + path);
    }
    return pois;
}

struct PoiNeighbor {
    int poi_index = 0;
    double distance_m = 0.0;
};

// Exact k nearest neighbours under the haversine metric. Balls store a
// centroid and a covering radius; the triangle inequality justifies pruning.
// Ties in distance resolve toward the lower insertion index, matching a
// brute-force scan in input order.
class BallTree {
public:
    explicit BallTree(const std::vector<Poi>& pois, int leaf_size = 16)
        : pois_(&pois), leaf_size_(leaf_size) {
        if (pois.empty()) {
            throw DatasetError("ball tree needs at least one point");
        }
        order_.resize(pois.size());
        std::iota(order_.begin(), order_.end(), 0);
        root_ = build(0, pois.size());
    }

    std::vector<PoiNeighbor> query_knn(double lat, double lng, int k) const {
        if (k <= 0) {
            throw DatasetError("k must be positive");
        }
        k = std::min<int>(k, static_cast<int>(pois_->size()));
        // Max-heap of the current best k, worst on top.
        auto worse = [](const PoiNeighbor& a, const PoiNeighbor& b) {
            if (a.distance_m != b.distance_m) {
                return a.distance_m < b.distance_m;
            }
            return a.poi_index < b.poi_index;
        };
        std::priority_queue<PoiNeighbor, std::vector<PoiNeighbor>, decltype(worse)> heap(
            worse);
        search(root_, lat, lng, static_cast<std::size_t>(k), heap);
        std::vector<PoiNeighbor> result(heap.size());
        for (std::size_t i = heap.size(); i-- > 0;) {
            result[i] = heap.top();
            heap.pop();
        }
        return result;
    }

private:
    struct Node {
        double center_lat = 0.0;
        double center_lng = 0.0;
        double radius_m = 0.0;
        std::size_t begin = 0, end = 0;  // leaf range into order_
        int left = -1, right = -1;
    };

    int build(std::size_t begin, std::size_t end) {
        Node node;
        node.begin = begin;
        node.end = end;
        double sum_lat = 0.0, sum_lng = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
            sum_lat += (*pois_)[order_[i]].lat;
            sum_lng += (*pois_)[order_[i]].lng;
        }
        const double n = static_cast<double>(end - begin);
        node.center_lat = sum_lat / n;
        node.center_lng = sum_lng / n;
        for (std::size_t i = begin; i < end; ++i) {
            const auto& p = (*pois_)[order_[i]];
            node.radius_m = std::max(
                node.radius_m, geo::haversine_m(node.center_lat, node.center_lng, p.lat,
                                                p.lng));
        }
        const int id = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        if (end - begin > static_cast<std::size_t>(leaf_size_)) {
            double min_lat = std::numeric_limits<double>::max();
            double max_lat = std::numeric_limits<double>::lowest();
            double min_lng = std::numeric_limits<double>::max();
            double max_lng = std::numeric_limits<double>::lowest();
            for (std::size_t i = begin; i < end; ++i) {
                const auto& p = (*pois_)[order_[i]];
                min_lat = std::min(min_lat, p.lat);
                max_lat = std::max(max_lat, p.lat);
                min_lng = std::min(min_lng, p.lng);
                max_lng = std::max(max_lng, p.lng);
            }
            const bool split_lat = (max_lat - min_lat) >= (max_lng - min_lng);
            const std::size_t mid = begin + (end - begin) / 2;
            std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                             order_.begin() + static_cast<std::ptrdiff_t>(mid),
                             order_.begin() + static_cast<std::ptrdiff_t>(end),
                             [&](std::size_t a, std::size_t b) {
                                 const auto& pa = (*pois_)[a];
                                 const auto& pb = (*pois_)[b];
                                 if (split_lat) {
                                     return pa.lat != pb.lat ? pa.lat < pb.lat : a < b;
                                 }
                                 return pa.lng != pb.lng ? pa.lng < pb.lng : a < b;
                             });
            const int left = build(begin, mid);
            const int right = build(mid, end);
            nodes_[static_cast<std::size_t>(id)].left = left;
            nodes_[static_cast<std::size_t>(id)].right = right;
        }
        return id;
    }

    template <typename Heap>
    void search(int node_id, double lat, double lng, std::size_t k, Heap& heap) const {
        const Node& node = nodes_[static_cast<std::size_t>(node_id)];
        const double center_d =
            geo::haversine_m(lat, lng, node.center_lat, node.center_lng);
        if (heap.size() == k && center_d - node.radius_m > heap.top().distance_m) {
            return;  // strict: boundary ties must still be visited
        }
        if (node.left < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                const std::size_t idx = order_[i];
                const auto& p = (*pois_)[idx];
                const PoiNeighbor cand{static_cast<int>(idx),
                                       geo::haversine_m(lat, lng, p.lat, p.lng)};
                if (heap.size() < k) {
                    heap.push(cand);
                } else if (cand.distance_m < heap.top().distance_m ||
                           (cand.distance_m == heap.top().distance_m &&
                            cand.poi_index < heap.top().poi_index)) {
                    heap.pop();
                    heap.push(cand);
                }
            }
            return;
        }
        const Node& l = nodes_[static_cast<std::size_t>(node.left)];
        const Node& r = nodes_[static_cast<std::size_t>(node.right)];
        const double dl = geo::haversine_m(lat, lng, l.center_lat, l.center_lng);
        const double dr = geo::haversine_m(lat, lng, r.center_lat, r.center_lng);
        if (dl <= dr) {
            search(node.left, lat, lng, k, heap);
            search(node.right, lat, lng, k, heap);
        } else {
            search(node.right, lat, lng, k, heap);
            search(node.left, lat, lng, k, heap);
        }
    }

    const std::vector<Poi>* pois_;
    int leaf_size_;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

// Reference scan in input order, for verifying the tree.
inline std::vector<PoiNeighbor> knn_brute_force(const std::vector<Poi>& pois, double lat,
                                                double lng, int k) {
    std::vector<PoiNeighbor> all(pois.size());
    for (std::size_t i = 0; i < pois.size(); ++i) {
        all[i] = {static_cast<int>(i),
                  geo::haversine_m(lat, lng, pois[i].lat, pois[i].lng)};
    }
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        if (a.distance_m != b.distance_m) {
            return a.distance_m < b.distance_m;
        }
        return a.poi_index < b.poi_index;
    });
    if (static_cast<int>(all.size()) > k) {
        all.resize(static_cast<std::size_t>(k));
    }
    return all;
}

// Nearest POIs around a trajectory's first and last points. The first entry
// of each list is the closest one.
struct OdContext {
    std::vector<PoiNeighbor> origin;
    std::vector<PoiNeighbor> destination;
};

class PoiIndex {
public:
    explicit PoiIndex(std::vector<Poi> pois, int leaf_size = 16)
        : pois_(std::move(pois)), tree_(pois_, leaf_size) {}

    const std::vector<Poi>& pois() const { return pois_; }
    const Poi& poi(int index) const { return pois_.at(static_cast<std::size_t>(index)); }

    std::vector<PoiNeighbor> query_knn(double lat, double lng, int k) const {
        return tree_.query_knn(lat, lng, k);
    }

    OdContext od_context(double origin_lat, double origin_lng, double dest_lat,
                         double dest_lng, int n_poi) const {
        OdContext ctx;
        ctx.origin = tree_.query_knn(origin_lat, origin_lng, n_poi);
        ctx.destination = tree_.query_knn(dest_lat, dest_lng, n_poi);
        return ctx;
    }

private:
    std::vector<Poi> pois_;
    BallTree tree_;
};

}  // namespace trajcogn

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "trajcogn/dataset.hpp"
#include "trajcogn/errors.hpp"
#include "trajcogn/geo.hpp"
#include "trajcogn/network.hpp"

namespace trajcogn {

struct MatchConfig {
    double sigma_emission_m = 5.0;  // GPS noise scale in the emission score
    double beta_transition_m = 20.0;  // scale of the route/great-circle gap penalty
    double candidate_radius_m = 200.0;
    int max_candidates = 8;
    // Route searches are truncated at this multiple of the great-circle
    // distance plus a fixed slack, which bounds Dijkstra's frontier.
    double route_search_factor = 4.0;
    double route_search_slack_m = 500.0;
};

struct SegmentCandidate {
    int segment_id = 0;
    double distance_m = 0.0;  // point to segment
    double offset_m = 0.0;    // along the segment from its start
};

// Score for transitions that have no usable route. Finite so that Viterbi
// still picks an argmax when every continuation is infeasible.
inline constexpr double kInfeasibleTransitionScore = -1e12;

// Up to `max_candidates` nearest segments within the radius, ordered by
// (distance, segment id).
inline std::vector<SegmentCandidate> segment_candidates(const RoadNetwork& net,
                                                        double lat, double lng,
                                                        const MatchConfig& cfg) {
    std::vector<SegmentCandidate> cands;
    for (int seg_id : net.index().candidates(lat, lng, cfg.candidate_radius_m)) {
        double offset = 0.0;
        const double d = point_to_segment_m(net.segment(seg_id), lat, lng, &offset);
        if (d <= cfg.candidate_radius_m) {
            cands.push_back({seg_id, d, offset});
        }
    }
    std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
        if (a.distance_m != b.distance_m) {
            return a.distance_m < b.distance_m;
        }
        return a.segment_id < b.segment_id;
    });
    if (static_cast<int>(cands.size()) > cfg.max_candidates) {
        cands.resize(static_cast<std::size_t>(cfg.max_candidates));
    }
    return cands;
}

// Network distance from a position on segment `a` to a position on segment
// `b`. Same segment and a forward offset is the offset difference; otherwise
// the remainder of `a`, the shortest path between the joining vertices, and
// the offset into `b`. Infinity when no route exists within the bound.
inline double route_distance_m(const RoadNetwork& net, const SegmentCandidate& a,
                               const SegmentCandidate& b, double max_dist) {
    if (a.segment_id == b.segment_id && b.offset_m >= a.offset_m) {
        return b.offset_m - a.offset_m;
    }
    const auto& sa = net.segment(a.segment_id);
    const auto& sb = net.segment(b.segment_id);
    const double head = sa.length_m - a.offset_m;
    const double path = net.shortest_path_m(sa.to, sb.from, max_dist);
    if (!std::isfinite(path)) {
        return std::numeric_limits<double>::infinity();
    }
    return head + path + b.offset_m;
}

inline double emission_score(double distance_m, const MatchConfig& cfg) {
    const double z = distance_m / cfg.sigma_emission_m;
    return -0.5 * z * z;
}

inline double transition_score(double route_m, double great_circle_m,
                               const MatchConfig& cfg) {
    if (!std::isfinite(route_m)) {
        return kInfeasibleTransitionScore;
    }
    return -std::abs(route_m - great_circle_m) / cfg.beta_transition_m;
}

struct MatchResult {
    std::vector<int> segment_ids;   // one per input point
    std::vector<double> offsets_m;  // position along the matched segment
    double log_score = 0.0;
};

namespace detail {

struct CandidateColumn {
    std::vector<SegmentCandidate> cands;
    double gc_from_prev = 0.0;  // great-circle distance from the previous point
};

inline std::vector<CandidateColumn> build_columns(const RoadNetwork& net,
                                                  const std::vector<RawPoint>& points,
                                                  const MatchConfig& cfg) {
    std::vector<CandidateColumn> cols(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        cols[i].cands = segment_candidates(net, points[i].lat, points[i].lng, cfg);
        if (cols[i].cands.empty()) {
            throw MatchError(i, "no candidate segments within " +
                                    std::to_string(cfg.candidate_radius_m) + " m");
        }
        if (i > 0) {
            cols[i].gc_from_prev =
                geo::haversine_m(points[i - 1].lat, points[i - 1].lng, points[i].lat,
                                 points[i].lng);
        }
    }
    return cols;
}

}  // namespace detail

// Most likely segment sequence for a GPS point list. Emissions are Gaussian
// in the point-to-segment distance; transitions penalize the gap between the
// network route and the great-circle distance. Among equal-scoring sequences
// the result is the one that picks the earliest candidate at the earliest
// point, so tied inputs resolve the same way in every matcher.
inline MatchResult map_match_points(const RoadNetwork& net,
                                    const std::vector<RawPoint>& points,
                                    const MatchConfig& cfg = {}) {
    if (points.empty()) {
        throw MatchError(0, "empty point list");
    }
    const auto cols = detail::build_columns(net, points, cfg);
    const std::size_t n = points.size();

    // best[i][j] scores points i.. with candidate j at point i. Filling from
    // the back and reconstructing forward keeps the earliest candidate at the
    // earliest point whenever continuations tie.
    std::vector<std::vector<double>> best(n);
    std::vector<std::vector<int>> next(n);
    const std::size_t last = n - 1;
    best[last].resize(cols[last].cands.size());
    next[last].assign(cols[last].cands.size(), -1);
    for (std::size_t j = 0; j < cols[last].cands.size(); ++j) {
        best[last][j] = emission_score(cols[last].cands[j].distance_m, cfg);
    }
    for (std::size_t i = last; i-- > 0;) {
        const auto& cur = cols[i].cands;
        const auto& nxt = cols[i + 1].cands;
        const double gc = cols[i + 1].gc_from_prev;
        const double max_route = cfg.route_search_factor * gc + cfg.route_search_slack_m;
        best[i].assign(cur.size(), std::numeric_limits<double>::lowest());
        next[i].assign(cur.size(), -1);
        for (std::size_t j = 0; j < cur.size(); ++j) {
            double tail = std::numeric_limits<double>::lowest();
            int tail_k = -1;
            for (std::size_t k = 0; k < nxt.size(); ++k) {
                const double route = route_distance_m(net, cur[j], nxt[k], max_route);
                const double s = transition_score(route, gc, cfg) + best[i + 1][k];
                if (s > tail) {
                    tail = s;
                    tail_k = static_cast<int>(k);
                }
            }
            best[i][j] = emission_score(cur[j].distance_m, cfg) + tail;
            next[i][j] = tail_k;
        }
    }

    std::size_t first_j = 0;
    for (std::size_t j = 1; j < best[0].size(); ++j) {
        if (best[0][j] > best[0][first_j]) {
            first_j = j;
        }
    }
    MatchResult result;
    result.log_score = best[0][first_j];
    result.segment_ids.resize(n);
    result.offsets_m.resize(n);
    int j = static_cast<int>(first_j);
    for (std::size_t i = 0; i < n; ++i) {
        result.segment_ids[i] = cols[i].cands[static_cast<std::size_t>(j)].segment_id;
        result.offsets_m[i] = cols[i].cands[static_cast<std::size_t>(j)].offset_m;
        j = next[i][static_cast<std::size_t>(j)];
    }
    return result;
}

inline MatchResult map_match(const RoadNetwork& net, const RawTrajectory& traj,
                             const MatchConfig& cfg = {}) {
    return map_match_points(net, traj.points, cfg);
}

// Reference matcher that scores every candidate sequence. Exponential in the
// trajectory length; only usable on short inputs, kept for verification.
// Enumeration is ascending in candidate order with strict improvement, so
// ties keep the earliest sequence, the same rule the production matcher uses.
inline MatchResult map_match_exhaustive(const RoadNetwork& net,
                                        const std::vector<RawPoint>& points,
                                        const MatchConfig& cfg = {}) {
    if (points.empty()) {
        throw MatchError(0, "empty point list");
    }
    const auto cols = detail::build_columns(net, points, cfg);
    const std::size_t n = points.size();

    std::vector<std::size_t> pick(n, 0);
    std::vector<std::size_t> best_pick;
    double best_score = std::numeric_limits<double>::lowest();
    while (true) {
        // The sum associates from the tail, the same arithmetic the dynamic
        // program uses, so sequences that tie exactly tie bitwise here too.
        double s = emission_score(cols[n - 1].cands[pick[n - 1]].distance_m, cfg);
        for (std::size_t i = n - 1; i-- > 0;) {
            const double gc = cols[i + 1].gc_from_prev;
            const double max_route =
                cfg.route_search_factor * gc + cfg.route_search_slack_m;
            const double route = route_distance_m(net, cols[i].cands[pick[i]],
                                                  cols[i + 1].cands[pick[i + 1]],
                                                  max_route);
            s = transition_score(route, gc, cfg) + s;
            s = emission_score(cols[i].cands[pick[i]].distance_m, cfg) + s;
        }
        if (s > best_score) {
            best_score = s;
            best_pick = pick;
        }
        std::size_t i = n;
        while (i-- > 0) {
            if (++pick[i] < cols[i].cands.size()) {
                break;
            }
            pick[i] = 0;
            if (i == 0) {
                MatchResult result;
                result.log_score = best_score;
                result.segment_ids.resize(n);
                result.offsets_m.resize(n);
                for (std::size_t p = 0; p < n; ++p) {
                    result.segment_ids[p] = cols[p].cands[best_pick[p]].segment_id;
                    result.offsets_m[p] = cols[p].cands[best_pick[p]].offset_m;
                }
                return result;
            }
        }
    }
}

}  // namespace trajcogn

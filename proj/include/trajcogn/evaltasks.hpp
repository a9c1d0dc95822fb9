#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trajcogn/model.hpp"
#include "trajcogn/training.hpp"

namespace trajcogn {

// Travel time in seconds, denormalized from the regression head.
inline double predict_tte(const LetModel& model, const TaskSample& s,
                          const std::vector<Poi>& pois, const NormStats& stats,
                          const LabelStats& labels) {
    const PromptEmbeddings pe = model.embed(s.prompt, *s.traj, pois, stats);
    const NodePtr h = h_task(model.encode(pe.z));
    return labels.denormalize(model.tte_head().forward(h)->value.at(0, 0));
}

// Destination distribution over segments plus its argmax.
inline std::pair<int, std::vector<double>> predict_dp(const LetModel& model,
                                                      const TaskSample& s,
                                                      const std::vector<Poi>& pois,
                                                      const NormStats& stats) {
    const PromptEmbeddings pe = model.embed(s.prompt, *s.traj, pois, stats);
    const NodePtr h = h_task(model.encode(pe.z));
    const NodePtr probs = softmax_rows(model.dp_head().forward(h));
    std::vector<double> p = probs->value.data;
    int best = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
        if (p[i] > p[static_cast<std::size_t>(best)]) {
            best = static_cast<int>(i);
        }
    }
    return {best, std::move(p)};
}

// Whole-trajectory representation: the task position's hidden state under
// the similarity prompt.
inline std::vector<double> sts_embedding(const LetModel& model,
                                         const EnrichedTrajectory& traj,
                                         const PoiIndex& pois,
                                         const PromptOptions& opts,
                                         const NormStats& stats) {
    const TaskSample s = make_task_sample(traj, pois, Task::kSts, opts, nullptr);
    const PromptEmbeddings pe = model.embed(s.prompt, traj, pois.pois(), stats);
    return h_task(model.encode(pe.z))->value.data;
}

inline double cosine_similarity(const std::vector<double>& a,
                                const std::vector<double>& b) {
    if (a.size() != b.size()) {
        throw ModelError("cosine needs equal-length vectors");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw ModelError("cosine undefined for a zero vector");
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Every second point of a trajectory, counting from the first (odd-numbered
// positions) or the second (even-numbered), with kinematics re-derived on
// the thinned sequence.
inline EnrichedTrajectory alternate_points(const EnrichedTrajectory& traj,
                                           bool odd_numbered) {
    RawTrajectory raw;
    MatchResult match;
    raw.id = traj.id + (odd_numbered ? "(odd)" : "(even)");
    for (std::size_t i = odd_numbered ? 0 : 1; i < traj.points.size(); i += 2) {
        const auto& p = traj.points[i];
        raw.points.push_back({p.lat, p.lng, p.t});
        match.segment_ids.push_back(p.segment_id);
        match.offsets_m.push_back(0.0);
    }
    if (raw.points.size() < 2) {
        throw DatasetError("trajectory too short to split: " + traj.id);
    }
    return derive_kinematics(raw, match);
}

// Coordinates at `len` evenly spaced indices (endpoints included).
inline std::vector<std::array<double, 2>> downsample_coords(
    const EnrichedTrajectory& traj, int len) {
    if (traj.points.empty() || len <= 1) {
        throw DatasetError("cannot downsample trajectory " + traj.id);
    }
    const int n = static_cast<int>(traj.points.size());
    std::vector<std::array<double, 2>> out(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
        const int idx = static_cast<int>(std::llround(
            static_cast<double>(i) * (n - 1) / static_cast<double>(len - 1)));
        const auto& p = traj.points[static_cast<std::size_t>(idx)];
        out[static_cast<std::size_t>(i)] = {p.lat, p.lng};
    }
    return out;
}

inline double coord_mse(const std::vector<std::array<double, 2>>& a,
                        const std::vector<std::array<double, 2>>& b) {
    if (a.size() != b.size() || a.empty()) {
        throw DatasetError("coordinate sequences must have equal nonzero length");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double dlat = a[i][0] - b[i][0];
        const double dlng = a[i][1] - b[i][1];
        acc += dlat * dlat + dlng * dlng;
    }
    return acc / (2.0 * static_cast<double>(a.size()));
}

struct StsInstance {
    int query = -1;             // index into the evaluation set
    std::vector<int> database;  // distractor indices, insertion order
};

struct StsGroundTruth {
    std::uint64_t seed = 0;
    int n_queries = 0;
    int db_size = 0;
    int downsample_len = 32;
    int exclude_nearest = 10;
    bool scaled_down = false;
    std::vector<StsInstance> instances;
};

// Queries are odd-numbered halves; the matching even half is the search
// target. The 10 whole trajectories closest to each query (coordinate MSE
// after downsampling) leave the pool, and the database is sampled from the
// remainder. Deterministic given the seed.
inline StsGroundTruth build_sts_ground_truth(
    const std::vector<EnrichedTrajectory>& test, std::uint64_t seed,
    int n_queries = 1000, int db_size = 5000, int downsample_len = 32,
    int exclude_nearest = 10, std::ostream* warnings = &std::cerr) {
    const int n = static_cast<int>(test.size());
    StsGroundTruth gt;
    gt.seed = seed;
    gt.downsample_len = downsample_len;
    gt.exclude_nearest = exclude_nearest;
    const int pool_cap = n - 1 - exclude_nearest;
    if (pool_cap < 1) {
        throw DatasetError("test set too small for similarity ground truth");
    }
    gt.n_queries = std::min(n_queries, n);
    gt.db_size = std::min(db_size, pool_cap);
    if (gt.n_queries < n_queries || gt.db_size < db_size) {
        gt.scaled_down = true;
        if (warnings != nullptr) {
            (*warnings) << "sts-gt: scaled down to " << gt.n_queries
                        << " queries and " << gt.db_size
                        << " database entries for a test set of " << n << "\n";
        }
    }
    std::vector<std::vector<std::array<double, 2>>> full_ds(
        static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        full_ds[static_cast<std::size_t>(i)] =
            downsample_coords(test[static_cast<std::size_t>(i)], downsample_len);
    }
    Rng rng(seed);
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    detail::shuffle_indices(order, rng);

    gt.instances.reserve(static_cast<std::size_t>(gt.n_queries));
    for (int q = 0; q < gt.n_queries; ++q) {
        const int qi = static_cast<int>(order[static_cast<std::size_t>(q)]);
        const auto query_ds = downsample_coords(
            alternate_points(test[static_cast<std::size_t>(qi)], true),
            downsample_len);
        std::vector<std::pair<double, int>> dist;
        dist.reserve(static_cast<std::size_t>(n - 1));
        for (int j = 0; j < n; ++j) {
            if (j == qi) {
                continue;
            }
            dist.emplace_back(
                coord_mse(query_ds, full_ds[static_cast<std::size_t>(j)]), j);
        }
        std::sort(dist.begin(), dist.end());
        std::vector<std::size_t> pool(dist.size() -
                                      static_cast<std::size_t>(exclude_nearest));
        for (std::size_t p = 0; p < pool.size(); ++p) {
            pool[p] = static_cast<std::size_t>(
                dist[p + static_cast<std::size_t>(exclude_nearest)].second);
        }
        detail::shuffle_indices(pool, rng);
        StsInstance inst;
        inst.query = qi;
        inst.database.reserve(static_cast<std::size_t>(gt.db_size));
        for (int d = 0; d < gt.db_size; ++d) {
            inst.database.push_back(
                static_cast<int>(pool[static_cast<std::size_t>(d)]));
        }
        gt.instances.push_back(std::move(inst));
    }
    return gt;
}

inline nlohmann::json sts_ground_truth_to_json(
    const StsGroundTruth& gt, const std::vector<EnrichedTrajectory>& test) {
    nlohmann::json j;
    j["seed"] = gt.seed;
    j["n_queries"] = gt.n_queries;
    j["db_size"] = gt.db_size;
    j["downsample_len"] = gt.downsample_len;
    j["exclude_nearest"] = gt.exclude_nearest;
    j["scaled_down"] = gt.scaled_down;
    nlohmann::json instances = nlohmann::json::array();
    for (const auto& inst : gt.instances) {
        nlohmann::json ji;
        ji["query"] = test[static_cast<std::size_t>(inst.query)].id;
        nlohmann::json db = nlohmann::json::array();
        for (int d : inst.database) {
            db.push_back(test[static_cast<std::size_t>(d)].id);
        }
        ji["database"] = std::move(db);
        instances.push_back(std::move(ji));
    }
    j["instances"] = std::move(instances);
    return j;
}

// 1-based rank of candidate 0 among all candidates by descending similarity;
// earlier insertion wins ties, and the target sits first.
inline int rank_of_target(const std::vector<double>& sims) {
    if (sims.empty()) {
        throw DatasetError("rank needs at least the target similarity");
    }
    int rank = 1;
    for (std::size_t i = 1; i < sims.size(); ++i) {
        if (sims[i] > sims[0]) {
            ++rank;
        }
    }
    return rank;
}

struct TteMetrics {
    double rmse = 0.0;
    double mae = 0.0;
    double mape_pct = 0.0;
};

inline TteMetrics compute_tte_metrics(const std::vector<double>& preds,
                                      const std::vector<double>& labels) {
    if (preds.size() != labels.size() || preds.empty()) {
        throw DatasetError("prediction and label lists must align");
    }
    TteMetrics m;
    double sq = 0.0, abs = 0.0, pct = 0.0;
    std::size_t n_pct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double d = preds[i] - labels[i];
        sq += d * d;
        abs += std::abs(d);
        if (labels[i] != 0.0) {
            pct += std::abs(d) / std::abs(labels[i]);
            ++n_pct;
        }
    }
    const double n = static_cast<double>(preds.size());
    m.rmse = std::sqrt(sq / n);
    m.mae = abs / n;
    m.mape_pct = n_pct == 0 ? 0.0 : 100.0 * pct / static_cast<double>(n_pct);
    return m;
}

struct DpMetrics {
    double acc1_pct = 0.0;
    double acc5_pct = 0.0;
    double macro_recall_pct = 0.0;
    double macro_f1_pct = 0.0;
};

inline DpMetrics compute_dp_metrics(
    const std::vector<std::vector<double>>& prob_rows,
    const std::vector<int>& labels) {
    if (prob_rows.size() != labels.size() || prob_rows.empty()) {
        throw DatasetError("prediction and label lists must align");
    }
    const std::size_t n = prob_rows.size();
    std::size_t hit1 = 0, hit5 = 0;
    std::vector<int> top1(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = prob_rows[i];
        if (labels[i] < 0 || labels[i] >= static_cast<int>(p.size())) {
            throw DatasetError("label out of range");
        }
        std::vector<int> idx(p.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&p](int a, int b) {
                             return p[static_cast<std::size_t>(a)] >
                                    p[static_cast<std::size_t>(b)];
                         });
        top1[i] = idx[0];
        if (idx[0] == labels[i]) {
            ++hit1;
        }
        const std::size_t top = std::min<std::size_t>(5, idx.size());
        for (std::size_t k = 0; k < top; ++k) {
            if (idx[k] == labels[i]) {
                ++hit5;
                break;
            }
        }
    }
    // Per-class tallies over the classes that appear in the labels.
    std::map<int, std::array<std::size_t, 3>> tally;  // tp, fn, fp
    for (std::size_t i = 0; i < n; ++i) {
        if (top1[i] == labels[i]) {
            tally[labels[i]][0]++;
        } else {
            tally[labels[i]][1]++;
            tally[top1[i]][2]++;
        }
    }
    double recall_sum = 0.0, f1_sum = 0.0;
    std::size_t n_classes = 0;
    for (const auto& [cls, t] : tally) {
        const std::size_t support = t[0] + t[1];
        if (support == 0) {
            continue;  // class only ever predicted, never labeled
        }
        ++n_classes;
        const double recall =
            static_cast<double>(t[0]) / static_cast<double>(support);
        recall_sum += recall;
        const std::size_t predicted = t[0] + t[2];
        const double precision =
            predicted == 0 ? 0.0
                           : static_cast<double>(t[0]) /
                                 static_cast<double>(predicted);
        f1_sum += (precision + recall) == 0.0
                      ? 0.0
                      : 2.0 * precision * recall / (precision + recall);
    }
    DpMetrics m;
    m.acc1_pct = 100.0 * static_cast<double>(hit1) / static_cast<double>(n);
    m.acc5_pct = 100.0 * static_cast<double>(hit5) / static_cast<double>(n);
    m.macro_recall_pct = 100.0 * recall_sum / static_cast<double>(n_classes);
    m.macro_f1_pct = 100.0 * f1_sum / static_cast<double>(n_classes);
    return m;
}

struct StsMetrics {
    double mean_rank = 0.0;
    double acc1_pct = 0.0;
    double acc5_pct = 0.0;
};

inline StsMetrics compute_sts_metrics(const std::vector<int>& ranks) {
    if (ranks.empty()) {
        throw DatasetError("no ranks to aggregate");
    }
    StsMetrics m;
    std::size_t hit1 = 0, hit5 = 0;
    double sum = 0.0;
    for (int r : ranks) {
        if (r < 1) {
            throw DatasetError("ranks are 1-based");
        }
        sum += static_cast<double>(r);
        hit1 += r == 1 ? 1 : 0;
        hit5 += r <= 5 ? 1 : 0;
    }
    const double n = static_cast<double>(ranks.size());
    m.mean_rank = sum / n;
    m.acc1_pct = 100.0 * static_cast<double>(hit1) / n;
    m.acc5_pct = 100.0 * static_cast<double>(hit5) / n;
    return m;
}

inline nlohmann::json metric_report_json(const TteMetrics& m) {
    return {{"task", "tte"},
            {"RMSE (sec)", m.rmse},
            {"MAE (sec)", m.mae},
            {"MAPE (%)", m.mape_pct}};
}

inline nlohmann::json metric_report_json(const DpMetrics& m) {
    return {{"task", "dp"},
            {"ACC@1 (%)", m.acc1_pct},
            {"ACC@5 (%)", m.acc5_pct},
            {"Recall (%)", m.macro_recall_pct},
            {"Macro-F1 (%)", m.macro_f1_pct}};
}

inline nlohmann::json metric_report_json(const StsMetrics& m) {
    return {{"task", "sts"},
            {"Mean Rank", m.mean_rank},
            {"ACC@1 (%)", m.acc1_pct},
            {"ACC@5 (%)", m.acc5_pct}};
}

// Anchor attention heatmap records for one trajectory.
inline nlohmann::json export_attention(const LetModel& model,
                                       const EnrichedTrajectory& traj,
                                       const PoiIndex& pois,
                                       const PromptOptions& opts,
                                       const NormStats& stats) {
    if (!model.config().embedder.pattern_projection) {
        throw ModelError("no attention to export without pattern projection");
    }
    const TaskSample s = make_task_sample(traj, pois, Task::kSts, opts, nullptr);
    const PromptEmbeddings pe = model.embed(s.prompt, traj, pois.pois(), stats);
    const auto& names = model.embedder().anchor_names();
    nlohmann::json records = nlohmann::json::array();
    for (std::size_t head = 0; head < pe.attention.size(); ++head) {
        const Matrix& w = pe.attention[head]->value;
        for (int point = 0; point < w.rows; ++point) {
            for (int a = 0; a < w.cols; ++a) {
                records.push_back({{"trajectory", traj.id},
                                   {"point", point},
                                   {"head", static_cast<int>(head)},
                                   {"anchor", names[static_cast<std::size_t>(a)]},
                                   {"weight", w.at(point, a)}});
            }
        }
    }
    return records;
}

}  // namespace trajcogn

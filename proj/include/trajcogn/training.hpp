#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trajcogn/autograd.hpp"
#include "trajcogn/model.hpp"
#include "trajcogn/prompt.hpp"
#include "trajcogn/rng.hpp"

namespace trajcogn {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0;
};

// First-order adaptive moments over the model's parameter registry, with
// global-norm gradient clipping and no weight decay.
class Adam {
public:
    Adam(const std::vector<std::pair<std::string, NodePtr>>& params,
         const AdamConfig& cfg)
        : cfg_(cfg) {
        for (const auto& [name, p] : params) {
            params_.push_back(p);
            m_.push_back(Matrix::zeros(p->value.rows, p->value.cols));
            v_.push_back(Matrix::zeros(p->value.rows, p->value.cols));
        }
    }

    void zero_grad() {
        for (const auto& p : params_) {
            p->ensure_grad();
            for (auto& g : p->grad.data) {
                g = 0.0;
            }
        }
    }

    // Clips to the configured global norm, then applies one update.
    // Returns the pre-clip global gradient norm.
    double step() {
        ++t_;
        double sq = 0.0;
        for (const auto& p : params_) {
            p->ensure_grad();
            for (double g : p->grad.data) {
                sq += g * g;
            }
        }
        const double norm = std::sqrt(sq);
        const double scale =
            (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm
                                                            : 1.0;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& value = params_[i]->value.data;
            auto& grad = params_[i]->grad.data;
            auto& m = m_[i].data;
            auto& v = v_[i].data;
            for (std::size_t j = 0; j < value.size(); ++j) {
                const double g = grad[j] * scale;
                m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
                v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                value[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
        return norm;
    }

    std::int64_t steps_taken() const { return t_; }

private:
    AdamConfig cfg_;
    std::vector<NodePtr> params_;
    std::vector<Matrix> m_, v_;
    std::int64_t t_ = 0;
};

// One trajectory prepared for the reconstruction task: the same prompt in
// both part orders, so each side can be predicted from the other.
struct PretextSample {
    const EnrichedTrajectory* traj = nullptr;
    TrajectoryPrompt traj_last;  // head, POIs, trajectory, suffix
    TrajectoryPrompt poi_last;   // head, trajectory, POIs, suffix
};

inline PretextSample make_pretext_sample(const EnrichedTrajectory& traj,
                                         const PoiIndex& pois,
                                         const PromptOptions& opts) {
    const auto& first = traj.points.front();
    const auto& last = traj.points.back();
    const OdContext od =
        pois.od_context(first.lat, first.lng, last.lat, last.lng, opts.n_poi);
    PretextSample s;
    s.traj = &traj;
    s.traj_last = build_prompt(traj, od, Task::kSts, opts);
    s.poi_last = with_poi_after_trajectory(s.traj_last);
    return s;
}

inline std::vector<PretextSample> make_pretext_samples(
    const std::vector<EnrichedTrajectory>& trajs, const PoiIndex& pois,
    const PromptOptions& opts) {
    std::vector<PretextSample> out;
    out.reserve(trajs.size());
    for (const auto& t : trajs) {
        out.push_back(make_pretext_sample(t, pois, opts));
    }
    return out;
}

// Positions whose hidden states predict the trajectory points: the row just
// before the trajectory part opens predicts point 0, afterwards each point
// row predicts its successor.
inline std::vector<int> traj_read_rows(const PromptEmbeddings& pe) {
    int first_traj = -1;
    for (std::size_t r = 0; r < pe.tags.size(); ++r) {
        if (pe.tags[r].part == PromptPart::kTrajectory) {
            first_traj = static_cast<int>(r);
            break;
        }
    }
    if (first_traj <= 0) {
        throw TrainError("prompt has no trajectory part after a prefix");
    }
    std::vector<int> rows;
    rows.reserve(pe.point_rows.size());
    rows.push_back(first_traj - 1);
    for (std::size_t i = 0; i + 1 < pe.point_rows.size(); ++i) {
        rows.push_back(pe.point_rows[i]);
    }
    return rows;
}

// Mean over points of segment cross-entropy plus masked feature MSE.
inline NodePtr traj_reconstruction_loss(const LetModel& model,
                                        const PromptEmbeddings& pe,
                                        const NodePtr& hidden) {
    const auto read_rows = traj_read_rows(pe);
    const int n = static_cast<int>(read_rows.size());
    const NodePtr h = gather_rows(hidden, read_rows);
    std::vector<int> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), 0);
    const NodePtr ce =
        cross_entropy_rows(model.seg_head().forward(h), all, pe.segment_ids);
    Matrix mask(n, kNumFeatureChannels);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < kNumFeatureChannels; ++c) {
            mask.at(i, c) =
                pe.active_channels[static_cast<std::size_t>(c)] ? 1.0 : 0.0;
        }
    }
    const NodePtr mse =
        masked_mse(model.cont_head().forward(h), pe.point_features, mask);
    return add(ce, mse);
}

// Mean cross-entropy over every POI-part token row, each predicted from the
// row immediately before it.
inline NodePtr poi_reconstruction_loss(const LetModel& model,
                                       const PromptEmbeddings& pe,
                                       const NodePtr& hidden) {
    std::vector<int> read_rows;
    std::vector<int> targets;
    for (std::size_t r = 0; r < pe.tags.size(); ++r) {
        const auto& tag = pe.tags[r];
        if (tag.part != PromptPart::kPoiOrigin && tag.part != PromptPart::kPoiDest) {
            continue;
        }
        if (r == 0) {
            throw TrainError("POI part cannot open the prompt");
        }
        read_rows.push_back(static_cast<int>(r) - 1);
        targets.push_back(tag.token_id);
    }
    if (read_rows.empty()) {
        return nullptr;
    }
    const NodePtr h = gather_rows(hidden, read_rows);
    std::vector<int> all(read_rows.size());
    std::iota(all.begin(), all.end(), 0);
    return cross_entropy_rows(model.lm_logits(h), all, std::move(targets));
}

struct PretextLoss {
    NodePtr node;  // l_pre as a graph node
    double l_pre = 0.0;
    double l_traj = 0.0;
    double l_poi = 0.0;
};

// Both reconstruction directions for one trajectory, one causally masked
// forward each, summed.
inline PretextLoss pretext_loss(const LetModel& model, const PretextSample& s,
                                const std::vector<Poi>& pois,
                                const NormStats& stats) {
    PretextLoss out;
    const PromptEmbeddings pe_a = model.embed(s.traj_last, *s.traj, pois, stats);
    const NodePtr l_traj =
        traj_reconstruction_loss(model, pe_a, model.encode(pe_a.z));
    out.node = l_traj;
    out.l_traj = l_traj->value.at(0, 0);
    bool has_poi = false;
    for (const auto& item : s.poi_last.items) {
        if (item.part == PromptPart::kPoiOrigin ||
            item.part == PromptPart::kPoiDest) {
            has_poi = true;
            break;
        }
    }
    if (has_poi) {
        const PromptEmbeddings pe_b = model.embed(s.poi_last, *s.traj, pois, stats);
        const NodePtr l_poi =
            poi_reconstruction_loss(model, pe_b, model.encode(pe_b.z));
        out.node = add(l_traj, l_poi);
        out.l_poi = l_poi->value.at(0, 0);
    }
    out.l_pre = out.node->value.at(0, 0);
    return out;
}

// Sequential oracle: re-run the encoder once per point on the growing prefix
// and read the last hidden row, exactly the autoregressive formulation the
// parallel masked loss must reproduce.
inline double traj_reconstruction_loss_sequential(const LetModel& model,
                                                  const PretextSample& s,
                                                  const std::vector<Poi>& pois,
                                                  const NormStats& stats) {
    const PromptEmbeddings pe = model.embed(s.traj_last, *s.traj, pois, stats);
    const auto read_rows = traj_read_rows(pe);
    const int n = static_cast<int>(read_rows.size());
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const NodePtr prefix = slice_rows(pe.z, 0, read_rows[static_cast<std::size_t>(i)] + 1);
        const NodePtr h = h_task(model.encode(prefix));
        const NodePtr ce = cross_entropy_rows(
            model.seg_head().forward(h), {0},
            {pe.segment_ids[static_cast<std::size_t>(i)]});
        Matrix target(1, kNumFeatureChannels);
        Matrix mask(1, kNumFeatureChannels);
        for (int c = 0; c < kNumFeatureChannels; ++c) {
            target.at(0, c) = pe.point_features.at(i, c);
            mask.at(0, c) = pe.active_channels[static_cast<std::size_t>(c)] ? 1.0 : 0.0;
        }
        const NodePtr mse =
            masked_mse(model.cont_head().forward(h), target, mask);
        total += ce->value.at(0, 0) + mse->value.at(0, 0);
    }
    return total / static_cast<double>(n);
}

// Half squared error on the normalized target.
inline NodePtr tte_loss_node(const NodePtr& pred, double target_norm) {
    const NodePtr diff =
        sub(pred, make_constant(Matrix::filled(1, 1, target_norm)));
    return scale(hadamard(diff, diff), 0.5);
}

inline NodePtr dp_loss_node(const NodePtr& logits, int label) {
    if (label < 0 || label >= logits->value.cols) {
        throw TrainError("destination label out of range");
    }
    return cross_entropy_rows(logits, {0}, {label});
}

// Negative log likelihood straight from a probability vector.
inline double dp_loss_probs(const std::vector<double>& probs, int label) {
    if (label < 0 || label >= static_cast<int>(probs.size())) {
        throw TrainError("destination label out of range");
    }
    return -std::log(probs[static_cast<std::size_t>(label)]);
}

// One trajectory prepared for a downstream task.
struct TaskSample {
    const EnrichedTrajectory* traj = nullptr;
    TrajectoryPrompt prompt;
    double tte_target_norm = 0.0;
    int dp_label = -1;
};

inline TaskSample make_task_sample(const EnrichedTrajectory& traj,
                                   const PoiIndex& pois, Task task,
                                   const PromptOptions& opts,
                                   const LabelStats* tte_stats) {
    const auto& first = traj.points.front();
    const auto& last = traj.points.back();
    const OdContext od =
        pois.od_context(first.lat, first.lng, last.lat, last.lng, opts.n_poi);
    TaskSample s;
    s.traj = &traj;
    s.prompt = build_prompt(traj, od, task, opts);
    if (task == Task::kTte) {
        if (tte_stats == nullptr) {
            throw TrainError("travel-time task needs label statistics");
        }
        s.tte_target_norm = tte_stats->normalize(s.prompt.travel_time_s);
    }
    s.dp_label = s.prompt.label_segment;
    return s;
}

inline std::vector<TaskSample> make_task_samples(
    const std::vector<EnrichedTrajectory>& trajs, const PoiIndex& pois,
    Task task, const PromptOptions& opts, const LabelStats* tte_stats) {
    std::vector<TaskSample> out;
    out.reserve(trajs.size());
    for (const auto& t : trajs) {
        out.push_back(make_task_sample(t, pois, task, opts, tte_stats));
    }
    return out;
}

inline NodePtr task_loss_node(const LetModel& model, const TaskSample& s,
                              const std::vector<Poi>& pois,
                              const NormStats& stats) {
    const PromptEmbeddings pe = model.embed(s.prompt, *s.traj, pois, stats);
    const NodePtr h = h_task(model.encode(pe.z));
    switch (s.prompt.task) {
        case Task::kTte:
            return tte_loss_node(model.tte_head().forward(h), s.tte_target_norm);
        case Task::kDp:
            return dp_loss_node(model.dp_head().forward(h), s.dp_label);
        case Task::kSts:
            throw TrainError("similarity task has no fine-tuning loss");
    }
    throw TrainError("unknown task");
}

struct TrainConfig {
    AdamConfig adam;
    int pretext_epochs = 20;
    int finetune_max_epochs = 50;
    int patience = 5;
    int batch_size = 16;
    double divergence_limit = 1e6;
    std::uint64_t shuffle_seed = 42;
};

// One JSON object per optimizer step.
class TrainLogger {
public:
    explicit TrainLogger(std::ostream* out) : out_(out) {}

    void log(int step, double l_pre, double l_traj, double l_poi, double lr,
             double wall_ms) {
        if (out_ == nullptr) {
            return;
        }
        nlohmann::json j;
        j["step"] = step;
        j["l_pre"] = l_pre;
        j["l_traj"] = l_traj;
        j["l_poi"] = l_poi;
        j["lr"] = lr;
        j["wall_ms"] = wall_ms;
        (*out_) << j.dump() << '\n';
    }

private:
    std::ostream* out_ = nullptr;
};

namespace detail {

inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
        std::swap(idx[i - 1], idx[j]);
    }
}

inline void check_divergence(double loss, double limit, const char* phase) {
    if (!std::isfinite(loss)) {
        throw TrainError(std::string(phase) + " loss is not finite");
    }
    if (loss > limit) {
        throw TrainError(std::string(phase) + " diverged: loss " +
                         std::to_string(loss));
    }
}

}  // namespace detail

struct PretextTrainResult {
    int steps = 0;
    double first_loss = 0.0;
    double final_loss = 0.0;
};

// Fixed-epoch reconstruction training. Batch loss is the mean of per-sample
// losses, built as one graph so a single backward pass covers the batch.
inline PretextTrainResult train_pretext(LetModel& model,
                                        const std::vector<PretextSample>& samples,
                                        const std::vector<Poi>& pois,
                                        const NormStats& stats,
                                        const TrainConfig& cfg,
                                        TrainLogger* logger = nullptr) {
    if (samples.empty()) {
        throw TrainError("no pretext samples");
    }
    Adam adam(model.params(), cfg.adam);
    Rng rng(cfg.shuffle_seed);
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    PretextTrainResult result;
    int step = 0;
    for (int epoch = 0; epoch < cfg.pretext_epochs; ++epoch) {
        detail::shuffle_indices(order, rng);
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(cfg.batch_size)) {
            const auto t0 = std::chrono::steady_clock::now();
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            adam.zero_grad();
            NodePtr batch_node;
            double l_traj = 0.0, l_poi = 0.0;
            for (std::size_t i = begin; i < end; ++i) {
                const PretextLoss pl =
                    pretext_loss(model, samples[order[i]], pois, stats);
                batch_node = batch_node ? add(batch_node, pl.node) : pl.node;
                l_traj += pl.l_traj;
                l_poi += pl.l_poi;
            }
            const double inv = 1.0 / static_cast<double>(end - begin);
            batch_node = scale(batch_node, inv);
            const double l_pre = batch_node->value.at(0, 0);
            detail::check_divergence(l_pre, cfg.divergence_limit, "pretext");
            backward(batch_node);
            adam.step();
            if (step == 0) {
                result.first_loss = l_pre;
            }
            result.final_loss = l_pre;
            ++step;
            const double wall_ms =
                std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
            if (logger != nullptr) {
                logger->log(step, l_pre, l_traj * inv, l_poi * inv, cfg.adam.lr,
                            wall_ms);
            }
        }
    }
    result.steps = step;
    return result;
}

struct FinetuneResult {
    int steps = 0;
    int epochs = 0;
    int best_epoch = -1;
    double best_valid_loss = 0.0;
};

// Early-stopped task training: after each epoch the validation loss decides
// whether to keep going; the best parameter snapshot wins. The similarity
// task takes zero optimization steps by contract.
inline FinetuneResult train_finetune(LetModel& model, Task task,
                                     const std::vector<TaskSample>& train,
                                     const std::vector<TaskSample>& valid,
                                     const std::vector<Poi>& pois,
                                     const NormStats& stats,
                                     const TrainConfig& cfg,
                                     TrainLogger* logger = nullptr) {
    FinetuneResult result;
    if (task == Task::kSts) {
        return result;
    }
    if (train.empty() || valid.empty()) {
        throw TrainError("fine-tuning needs train and validation samples");
    }
    Adam adam(model.params(), cfg.adam);
    Rng rng(cfg.shuffle_seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    auto valid_loss = [&]() {
        double total = 0.0;
        for (const auto& s : valid) {
            total += task_loss_node(model, s, pois, stats)->value.at(0, 0);
        }
        return total / static_cast<double>(valid.size());
    };
    std::vector<Matrix> best_params;
    auto snapshot = [&]() {
        best_params.clear();
        for (const auto& [name, p] : model.params()) {
            best_params.push_back(p->value);
        }
    };

    int step = 0;
    int since_best = 0;
    for (int epoch = 0; epoch < cfg.finetune_max_epochs; ++epoch) {
        detail::shuffle_indices(order, rng);
        for (std::size_t begin = 0; begin < order.size();
             begin += static_cast<std::size_t>(cfg.batch_size)) {
            const auto t0 = std::chrono::steady_clock::now();
            const std::size_t end =
                std::min(order.size(), begin + static_cast<std::size_t>(cfg.batch_size));
            adam.zero_grad();
            NodePtr batch_node;
            for (std::size_t i = begin; i < end; ++i) {
                const NodePtr l = task_loss_node(model, train[order[i]], pois, stats);
                batch_node = batch_node ? add(batch_node, l) : l;
            }
            batch_node =
                scale(batch_node, 1.0 / static_cast<double>(end - begin));
            const double loss = batch_node->value.at(0, 0);
            detail::check_divergence(loss, cfg.divergence_limit, "finetune");
            backward(batch_node);
            adam.step();
            ++step;
            const double wall_ms =
                std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
            if (logger != nullptr) {
                logger->log(step, loss, 0.0, 0.0, cfg.adam.lr, wall_ms);
            }
        }
        ++result.epochs;
        const double vl = valid_loss();
        detail::check_divergence(vl, cfg.divergence_limit, "validation");
        if (result.best_epoch < 0 || vl < result.best_valid_loss) {
            result.best_valid_loss = vl;
            result.best_epoch = epoch;
            since_best = 0;
            snapshot();
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }
    if (!best_params.empty()) {
        std::size_t i = 0;
        for (const auto& [name, p] : model.params()) {
            p->value = best_params[i++];
        }
    }
    result.steps = step;
    return result;
}

}  // namespace trajcogn

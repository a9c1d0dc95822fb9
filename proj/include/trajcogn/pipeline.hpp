#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trajcogn/balltree.hpp"
#include "trajcogn/config.hpp"
#include "trajcogn/csv.hpp"
#include "trajcogn/dataset.hpp"
#include "trajcogn/errors.hpp"
#include "trajcogn/evaltasks.hpp"
#include "trajcogn/kinematics.hpp"
#include "trajcogn/mapmatch.hpp"
#include "trajcogn/model.hpp"
#include "trajcogn/network.hpp"
#include "trajcogn/synth.hpp"
#include "trajcogn/training.hpp"

namespace trajcogn {

// Matched-trajectory file: one row per point, columns id,lat,lng,t,segment.
// Points of one trajectory are contiguous and in time order. Kinematic
// channels are recomputed on load, so the file stores only what cannot be
// derived.
inline void save_matched_csv(const std::string& path,
                             const std::vector<EnrichedTrajectory>& trajs) {
    std::ofstream out(path);
    if (!out) {
        throw DatasetError("cannot write file: " + path);
    }
    out << "id,lat,lng,t,segment\n";
    for (const auto& traj : trajs) {
        for (const auto& p : traj.points) {
            out << csv::quote_field(traj.id) << ',' << csv::format_double(p.lat) << ','
                << csv::format_double(p.lng) << ',' << p.t << ',' << p.segment_id << '\n';
        }
    }
}

inline std::vector<EnrichedTrajectory> load_matched_csv(const std::string& path) {
    csv::Reader reader(path);
    std::vector<std::string> fields;
    if (!reader.next(fields)) {
        throw DatasetError("empty matched file: " + path);
    }
    const std::vector<std::string> expect = {"id", "lat", "lng", "t", "segment"};
    if (fields != expect) {
        throw RecordError(reader.line_no, "matched file header must be id,lat,lng,t,segment");
    }
    std::vector<EnrichedTrajectory> out;
    RawTrajectory raw;
    MatchResult match;
    auto flush = [&]() {
        if (raw.points.empty()) {
            return;
        }
        out.push_back(derive_kinematics(raw, match));
        raw = RawTrajectory{};
        match = MatchResult{};
    };
    while (reader.next(fields)) {
        if (fields.size() != expect.size()) {
            throw RecordError(reader.line_no, "expected 5 fields, got " +
                                                  std::to_string(fields.size()));
        }
        const std::string& id = fields[0];
        if (id.empty()) {
            throw RecordError(reader.line_no, "empty trajectory id");
        }
        if (id != raw.id) {
            flush();
            raw.id = id;
        }
        RawPoint p;
        p.lat = csv::parse_double(fields[1], reader.line_no);
        p.lng = csv::parse_double(fields[2], reader.line_no);
        p.t = csv::parse_int(fields[3], reader.line_no);
        raw.points.push_back(p);
        match.segment_ids.push_back(
            static_cast<int>(csv::parse_int(fields[4], reader.line_no)));
        match.offsets_m.push_back(0.0);
    }
    flush();
    if (out.empty()) {
        throw DatasetError("matched file holds no trajectories: " + path);
    }
    return out;
}

struct EnrichedSplit {
    std::vector<EnrichedTrajectory> train;
    std::vector<EnrichedTrajectory> valid;
    std::vector<EnrichedTrajectory> test;
};

// Same allocation rule as the id-level split: stable sort by departure time
// (ties by id), floor counts for valid and test, remainder to train.
inline EnrichedSplit split_enriched(std::vector<EnrichedTrajectory> all,
                                    SplitRatios ratios = {}) {
    if (all.size() < 3) {
        throw DatasetError("need at least 3 trajectories to split, got " +
                           std::to_string(all.size()));
    }
    const double sum = ratios.train + ratios.valid + ratios.test;
    if (ratios.train < 0.0 || ratios.valid < 0.0 || ratios.test < 0.0 ||
        std::abs(sum - 1.0) > 1e-9) {
        throw DatasetError("split ratios must be non-negative and sum to 1");
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const EnrichedTrajectory& a, const EnrichedTrajectory& b) {
                         if (a.departure_time() != b.departure_time()) {
                             return a.departure_time() < b.departure_time();
                         }
                         return a.id < b.id;
                     });
    const std::size_t n = all.size();
    // The epsilon absorbs representation dirt in ratios like 1 - 0.8 - 0.1.
    const auto n_valid = static_cast<std::size_t>(std::floor(ratios.valid * n + 1e-9));
    const auto n_test = static_cast<std::size_t>(std::floor(ratios.test * n + 1e-9));
    const std::size_t n_train = n - n_valid - n_test;
    EnrichedSplit split;
    split.train.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
    split.valid.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train),
                       all.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid));
    split.test.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid),
                      all.end());
    return split;
}

// Everything a training or evaluation stage needs, prepared once: the road
// network, the POI index, the chronological split, and the normalization
// statistics fit on the training portion only.
struct PipelineData {
    RoadNetwork network;
    PoiIndex pois;
    EnrichedSplit split;
    NormStats norm;
    LabelStats tte_labels;
};

inline std::vector<EnrichedTrajectory> match_and_enrich(
    const RoadNetwork& net, const std::vector<RawTrajectory>& raw,
    const MatchConfig& cfg) {
    std::vector<EnrichedTrajectory> out;
    out.reserve(raw.size());
    for (const auto& traj : raw) {
        out.push_back(derive_kinematics(traj, map_match(net, traj, cfg)));
    }
    return out;
}

inline PipelineData make_pipeline_data(RoadNetwork network, std::vector<Poi> pois,
                                       std::vector<EnrichedTrajectory> enriched,
                                       SplitRatios ratios, int leaf_size = 16) {
    EnrichedSplit split = split_enriched(std::move(enriched), ratios);
    NormStats norm = NormStats::fit(split.train);
    std::vector<double> times;
    times.reserve(split.train.size());
    for (const auto& t : split.train) {
        times.push_back(t.travel_time_s());
    }
    LabelStats labels = LabelStats::fit(times);
    return PipelineData{std::move(network), PoiIndex(std::move(pois), leaf_size),
                        std::move(split), norm, labels};
}

// Synth -> match -> enrich -> split -> stats, all in memory. The workhorse
// for experiments and the self-test suite.
inline PipelineData pipeline_from_synth(const RunConfig& cfg) {
    SynthDataset synth = make_synthetic_dataset(cfg.synth_params());
    std::vector<RawTrajectory> raw;
    raw.reserve(synth.trajectories.size());
    for (auto& t : synth.trajectories) {
        raw.push_back(std::move(t.raw));
    }
    std::vector<EnrichedTrajectory> enriched =
        match_and_enrich(synth.network, raw, cfg.match_config());
    return make_pipeline_data(std::move(synth.network), std::move(synth.pois),
                              std::move(enriched), cfg.split_ratios(), cfg.leaf_size);
}

inline PipelineData pipeline_from_files(const RunConfig& cfg,
                                        const std::string& network_path,
                                        const std::string& matched_path,
                                        const std::string& pois_path) {
    RoadNetwork network = load_network(network_path);
    std::vector<EnrichedTrajectory> enriched = load_matched_csv(matched_path);
    for (const auto& traj : enriched) {
        for (const auto& p : traj.points) {
            if (p.segment_id < 0 || p.segment_id >= network.num_segments()) {
                throw DatasetError("trajectory " + traj.id + " references segment " +
                                   std::to_string(p.segment_id) +
                                   " outside the network");
            }
        }
    }
    return make_pipeline_data(std::move(network), load_pois_csv(pois_path),
                              std::move(enriched), cfg.split_ratios(), cfg.leaf_size);
}

inline std::unique_ptr<LetModel> build_model(const RunConfig& cfg,
                                             const PipelineData& data) {
    return std::make_unique<LetModel>(cfg.model_config(data.network.num_segments()));
}

inline PretextTrainResult run_pretext_stage(LetModel& model, const PipelineData& data,
                                            const RunConfig& cfg,
                                            TrainLogger* logger = nullptr) {
    if (cfg.skip_pretext) {
        return PretextTrainResult{};
    }
    const auto samples =
        make_pretext_samples(data.split.train, data.pois, cfg.prompt_options());
    return train_pretext(model, samples, data.pois.pois(), data.norm,
                         cfg.train_config(), logger);
}

inline FinetuneResult run_finetune_stage(LetModel& model, Task task,
                                         const PipelineData& data,
                                         const RunConfig& cfg,
                                         TrainLogger* logger = nullptr) {
    const LabelStats* labels = task == Task::kTte ? &data.tte_labels : nullptr;
    const auto train = make_task_samples(data.split.train, data.pois, task,
                                         cfg.prompt_options(), labels);
    const auto valid = make_task_samples(data.split.valid, data.pois, task,
                                         cfg.prompt_options(), labels);
    return train_finetune(model, task, train, valid, data.pois.pois(), data.norm,
                          cfg.train_config(), logger);
}

inline nlohmann::json evaluate_tte(const LetModel& model, const PipelineData& data,
                                   const RunConfig& cfg) {
    const auto samples = make_task_samples(data.split.test, data.pois, Task::kTte,
                                           cfg.prompt_options(), &data.tte_labels);
    std::vector<double> preds;
    std::vector<double> labels;
    preds.reserve(samples.size());
    labels.reserve(samples.size());
    for (const auto& s : samples) {
        preds.push_back(
            predict_tte(model, s, data.pois.pois(), data.norm, data.tte_labels));
        labels.push_back(s.traj->travel_time_s());
    }
    return metric_report_json(compute_tte_metrics(preds, labels));
}

inline nlohmann::json evaluate_dp(const LetModel& model, const PipelineData& data,
                                  const RunConfig& cfg) {
    const auto samples = make_task_samples(data.split.test, data.pois, Task::kDp,
                                           cfg.prompt_options(), nullptr);
    std::vector<std::vector<double>> probs;
    std::vector<int> labels;
    probs.reserve(samples.size());
    for (const auto& s : samples) {
        auto [best, p] = predict_dp(model, s, data.pois.pois(), data.norm);
        (void)best;
        probs.push_back(std::move(p));
        labels.push_back(s.dp_label);
    }
    return metric_report_json(compute_dp_metrics(probs, labels));
}

// Similarity search against frozen ground truth: the query is the odd half
// of a test trajectory, the target its even half, distractors are full
// trajectories. Database embeddings are shared across queries.
inline nlohmann::json evaluate_sts(const LetModel& model, const PipelineData& data,
                                   const RunConfig& cfg, const StsGroundTruth& gt) {
    const auto& test = data.split.test;
    const PromptOptions opts = cfg.prompt_options();
    std::vector<std::optional<std::vector<double>>> cache(test.size());
    auto full_embedding = [&](int index) -> const std::vector<double>& {
        auto& slot = cache[static_cast<std::size_t>(index)];
        if (!slot) {
            slot = sts_embedding(model, test[static_cast<std::size_t>(index)],
                                 data.pois, opts, data.norm);
        }
        return *slot;
    };
    std::vector<int> ranks;
    ranks.reserve(gt.instances.size());
    for (const auto& inst : gt.instances) {
        const auto& traj = test[static_cast<std::size_t>(inst.query)];
        const auto query =
            sts_embedding(model, alternate_points(traj, true), data.pois, opts, data.norm);
        const auto target =
            sts_embedding(model, alternate_points(traj, false), data.pois, opts, data.norm);
        std::vector<double> sims;
        sims.reserve(inst.database.size() + 1);
        sims.push_back(cosine_similarity(query, target));
        for (int db : inst.database) {
            sims.push_back(cosine_similarity(query, full_embedding(db)));
        }
        ranks.push_back(rank_of_target(sims));
    }
    return metric_report_json(compute_sts_metrics(ranks));
}

inline nlohmann::json evaluate_task(const LetModel& model, Task task,
                                    const PipelineData& data, const RunConfig& cfg,
                                    std::ostream* warnings = &std::cerr) {
    switch (task) {
        case Task::kTte:
            return evaluate_tte(model, data, cfg);
        case Task::kDp:
            return evaluate_dp(model, data, cfg);
        case Task::kSts: {
            const StsGroundTruth gt = build_sts_ground_truth(
                data.split.test, cfg.sts_seed, cfg.sts_queries, cfg.sts_db_size,
                cfg.sts_downsample, cfg.sts_exclude_nearest, warnings);
            return evaluate_sts(model, data, cfg, gt);
        }
    }
    throw ModelError("unknown task");
}

struct RunResult {
    PretextTrainResult pretext;
    FinetuneResult finetune;
    nlohmann::json report;
};

// Pretext + fine-tune + test evaluation for one task on prepared data.
inline RunResult run_task_pipeline(LetModel& model, Task task,
                                   const PipelineData& data, const RunConfig& cfg,
                                   TrainLogger* pretext_log = nullptr,
                                   TrainLogger* finetune_log = nullptr,
                                   std::ostream* warnings = &std::cerr) {
    RunResult result;
    result.pretext = run_pretext_stage(model, data, cfg, pretext_log);
    result.finetune = run_finetune_stage(model, task, data, cfg, finetune_log);
    result.report = evaluate_task(model, task, data, cfg, warnings);
    return result;
}

// One named variant, trained from scratch on shared data. Variants change
// the model or the prompts, never the dataset, so the expensive matching
// work is reused across a comparison run.
inline nlohmann::json run_ablation(const std::string& variant, RunConfig cfg,
                                   const PipelineData& data, Task task,
                                   TrainLogger* pretext_log = nullptr,
                                   TrainLogger* finetune_log = nullptr,
                                   std::ostream* warnings = &std::cerr) {
    cfg.ablation = variant;
    apply_ablation(cfg);
    cfg.validate();
    auto model = build_model(cfg, data);
    RunResult r =
        run_task_pipeline(*model, task, data, cfg, pretext_log, finetune_log, warnings);
    nlohmann::json row = r.report;
    row["variant"] = variant;
    row["task"] = task_name(task);
    row["pretext_steps"] = r.pretext.steps;
    row["finetune_epochs"] = r.finetune.epochs;
    return row;
}

// variant,metric... table. Metric columns follow the (alphabetical) key
// order of the first row so every row lines up.
inline void write_ablation_csv(const std::string& path,
                               const std::vector<nlohmann::json>& rows) {
    if (rows.empty()) {
        throw DatasetError("no ablation rows to write");
    }
    std::ofstream out(path);
    if (!out) {
        throw DatasetError("cannot write file: " + path);
    }
    std::vector<std::string> metrics;
    for (const auto& [key, value] : rows.front().items()) {
        if (value.is_number()) {
            metrics.push_back(key);
        }
    }
    out << "variant";
    for (const auto& m : metrics) {
        out << ',' << csv::quote_field(m);
    }
    out << '\n';
    for (const auto& row : rows) {
        out << csv::quote_field(row.at("variant").get<std::string>());
        for (const auto& m : metrics) {
            out << ',' << csv::format_double(row.at(m).get<double>());
        }
        out << '\n';
    }
}

// Retrain with one config key swept over a grid, reporting one metric row
// per value. Data is shared; only the model and prompts change.
inline std::vector<nlohmann::json> run_sweep(const std::string& key,
                                             const std::vector<std::string>& values,
                                             const RunConfig& base,
                                             const PipelineData& data, Task task,
                                             std::ostream* warnings = &std::cerr) {
    std::vector<nlohmann::json> rows;
    rows.reserve(values.size());
    for (const auto& v : values) {
        RunConfig cfg = base;
        cfg.set(key, v);
        apply_ablation(cfg);
        cfg.validate();
        auto model = build_model(cfg, data);
        RunResult r = run_task_pipeline(*model, task, data, cfg, nullptr, nullptr, warnings);
        nlohmann::json row = r.report;
        row["param"] = key;
        row["value"] = v;
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void write_sweep_csv(const std::string& path,
                            const std::vector<nlohmann::json>& rows) {
    if (rows.empty()) {
        throw DatasetError("no sweep rows to write");
    }
    std::ofstream out(path);
    if (!out) {
        throw DatasetError("cannot write file: " + path);
    }
    std::vector<std::string> metrics;
    for (const auto& [key, value] : rows.front().items()) {
        if (value.is_number()) {
            metrics.push_back(key);
        }
    }
    out << "param,value";
    for (const auto& m : metrics) {
        out << ',' << csv::quote_field(m);
    }
    out << '\n';
    for (const auto& row : rows) {
        out << csv::quote_field(row.at("param").get<std::string>()) << ','
            << csv::quote_field(row.at("value").get<std::string>());
        for (const auto& m : metrics) {
            out << ',' << csv::format_double(row.at(m).get<double>());
        }
        out << '\n';
    }
}

}  // namespace trajcogn

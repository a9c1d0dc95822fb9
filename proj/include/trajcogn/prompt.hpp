#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "trajcogn/balltree.hpp"
#include "trajcogn/errors.hpp"
#include "trajcogn/kinematics.hpp"

namespace trajcogn {

enum class Task { kTte = 0, kDp = 1, kSts = 2 };

inline int task_token_id(Task task) { return static_cast<int>(task); }

inline const char* task_name(Task task) {
    switch (task) {
        case Task::kTte: return "tte";
        case Task::kDp: return "dp";
        case Task::kSts: return "sts";
    }
    throw ConfigError("unknown task");
}

inline Task task_from_name(const std::string& name) {
    if (name == "tte") return Task::kTte;
    if (name == "dp") return Task::kDp;
    if (name == "sts") return Task::kSts;
    throw ConfigError("unknown task: " + name + " (expected tte, dp, or sts)");
}

inline const char* task_hard_suffix(Task task) {
    switch (task) {
        case Task::kTte: return "the total travel time is";
        case Task::kDp: return "the destination is";
        case Task::kSts: return "the overall representation is";
    }
    throw ConfigError("unknown task");
}

enum class PromptPart {
    kHead = 0,
    kPoiOrigin = 1,
    kPoiDest = 2,
    kTrajectory = 3,
    kSuffixHard = 4,
    kSuffixSoft = 5,
};

struct PromptItem {
    enum class Kind { kText, kPoi, kPoint, kTaskToken };
    PromptPart part = PromptPart::kHead;
    Kind kind = Kind::kText;
    std::string text;      // kText
    int poi_index = -1;    // kPoi: index into the POI list
    int poi_rank = -1;     // kPoi: 0 is the closest; rank 0 uses address + name
    int point_index = -1;  // kPoint: index into the enriched trajectory
};

struct TrajectoryPrompt {
    Task task = Task::kSts;
    std::string trajectory_id;
    std::vector<PromptItem> items;
    int n_points = 0;              // points referenced by the trajectory part
    int n_points_full = 0;         // before any truncation
    double travel_time_s = 0.0;    // regression label, from the full trajectory
    int label_segment = -1;        // classification label: segment of the true last point
    bool mask_time_features = false;   // zero speed/accel/time channels, skip time tables
    bool mask_extra_features = false;  // zero speed/accel/bearing channels
};

struct PromptOptions {
    int n_poi = 3;
    bool include_poi_part = true;      // cleared by the no-poi variant
    bool mask_extra_features = false;  // set by the no-extra-features variant
};

namespace detail {

inline void append_poi_group(std::vector<PromptItem>& items, PromptPart part,
                             const char* label,
                             const std::vector<PoiNeighbor>& neighbors) {
    items.push_back({part, PromptItem::Kind::kText, label, -1, -1, -1});
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        if (i > 0) {
            items.push_back({part, PromptItem::Kind::kText, ", ", -1, -1, -1});
        }
        items.push_back({part, PromptItem::Kind::kPoi, "", neighbors[i].poi_index,
                         static_cast<int>(i), -1});
    }
    items.push_back({part, PromptItem::Kind::kText, ", ", -1, -1, -1});
}

}  // namespace detail

// Assembles the four-part prompt: a head sentence with the departure weekday
// and hour, POIs near the origin and destination, the point sequence, and a
// task suffix ending in the task's learnable token.
inline TrajectoryPrompt build_prompt(const EnrichedTrajectory& traj,
                                     const OdContext& context, Task task,
                                     const PromptOptions& opts = {}) {
    if (traj.points.size() < 2) {
        throw ModelError("prompt needs at least 2 points, trajectory " + traj.id);
    }
    TrajectoryPrompt prompt;
    prompt.task = task;
    prompt.trajectory_id = traj.id;
    prompt.n_points_full = static_cast<int>(traj.points.size());
    prompt.travel_time_s = traj.travel_time_s();
    prompt.label_segment = traj.points.back().segment_id;
    prompt.mask_time_features = task == Task::kTte;
    prompt.mask_extra_features = opts.mask_extra_features;

    int n_points = prompt.n_points_full;
    if (task == Task::kDp) {
        if (n_points <= 5) {
            throw ModelError("destination prompt needs more than 5 points, trajectory " +
                             traj.id);
        }
        n_points -= 5;
    }
    prompt.n_points = n_points;

    const std::int64_t departure = traj.departure_time();
    const std::string head = std::string("The trajectory happened on ") +
                             weekday_name(day_of_week_utc(departure)) + " at " +
                             std::to_string(hour_of_day_utc(departure)) +
                             " o'clock, ";
    prompt.items.push_back(
        {PromptPart::kHead, PromptItem::Kind::kText, head, -1, -1, -1});

    if (opts.include_poi_part) {
        detail::append_poi_group(prompt.items, PromptPart::kPoiOrigin, "starts near: ",
                                 context.origin);
        if (task != Task::kDp) {
            detail::append_poi_group(prompt.items, PromptPart::kPoiDest, "ends near: ",
                                     context.destination);
        }
    }

    prompt.items.push_back({PromptPart::kTrajectory, PromptItem::Kind::kText,
                            "passes through ", -1, -1, -1});
    for (int i = 0; i < n_points; ++i) {
        prompt.items.push_back(
            {PromptPart::kTrajectory, PromptItem::Kind::kPoint, "", -1, -1, i});
    }
    prompt.items.push_back(
        {PromptPart::kTrajectory, PromptItem::Kind::kText, ". ", -1, -1, -1});

    prompt.items.push_back({PromptPart::kSuffixHard, PromptItem::Kind::kText,
                            std::string(task_hard_suffix(task)) + " ", -1, -1, -1});
    prompt.items.push_back(
        {PromptPart::kSuffixSoft, PromptItem::Kind::kTaskToken, "", -1, -1, -1});
    return prompt;
}

// Pretext variant with the trajectory part ahead of the POI part, leaving
// everything else in place.
inline TrajectoryPrompt with_poi_after_trajectory(const TrajectoryPrompt& prompt) {
    TrajectoryPrompt out = prompt;
    out.items.clear();
    auto is_poi = [](const PromptItem& it) {
        return it.part == PromptPart::kPoiOrigin || it.part == PromptPart::kPoiDest;
    };
    auto is_traj = [](const PromptItem& it) {
        return it.part == PromptPart::kTrajectory;
    };
    for (const auto& it : prompt.items) {
        if (!is_poi(it) && !is_traj(it) && it.part != PromptPart::kSuffixHard &&
            it.part != PromptPart::kSuffixSoft) {
            out.items.push_back(it);
        }
    }
    for (const auto& it : prompt.items) {
        if (is_traj(it)) {
            out.items.push_back(it);
        }
    }
    for (const auto& it : prompt.items) {
        if (is_poi(it)) {
            out.items.push_back(it);
        }
    }
    for (const auto& it : prompt.items) {
        if (it.part == PromptPart::kSuffixHard || it.part == PromptPart::kSuffixSoft) {
            out.items.push_back(it);
        }
    }
    return out;
}

inline bool prompt_well_formed(const TrajectoryPrompt& prompt) {
    int soft = 0;
    for (const auto& it : prompt.items) {
        if (it.part == PromptPart::kSuffixSoft) {
            ++soft;
        }
    }
    return soft == 1 && !prompt.items.empty() &&
           prompt.items.back().part == PromptPart::kSuffixSoft;
}

inline const char* prompt_part_name(PromptPart part) {
    switch (part) {
        case PromptPart::kHead: return "head";
        case PromptPart::kPoiOrigin: return "poi_origin";
        case PromptPart::kPoiDest: return "poi_dest";
        case PromptPart::kTrajectory: return "trajectory";
        case PromptPart::kSuffixHard: return "suffix_hard";
        case PromptPart::kSuffixSoft: return "suffix_soft";
    }
    return "?";
}

// Debug rendering: text stays text, non-text items become placeholders.
inline nlohmann::json prompt_to_json(const TrajectoryPrompt& prompt,
                                     const std::vector<Poi>* pois = nullptr) {
    nlohmann::json j;
    j["task"] = task_name(prompt.task);
    j["trajectory_id"] = prompt.trajectory_id;
    j["n_points"] = prompt.n_points;
    j["n_points_full"] = prompt.n_points_full;
    j["travel_time_s"] = prompt.travel_time_s;
    j["label_segment"] = prompt.label_segment;
    j["mask_time_features"] = prompt.mask_time_features;
    j["mask_extra_features"] = prompt.mask_extra_features;
    std::string rendered;
    nlohmann::json items = nlohmann::json::array();
    for (const auto& it : prompt.items) {
        nlohmann::json ji;
        ji["part"] = prompt_part_name(it.part);
        switch (it.kind) {
            case PromptItem::Kind::kText:
                ji["text"] = it.text;
                rendered += it.text;
                break;
            case PromptItem::Kind::kPoi:
                ji["poi_index"] = it.poi_index;
                ji["poi_rank"] = it.poi_rank;
                if (pois != nullptr) {
                    ji["poi_name"] = (*pois)[static_cast<std::size_t>(it.poi_index)].name;
                    rendered += (*pois)[static_cast<std::size_t>(it.poi_index)].name;
                } else {
                    rendered += "<poi:" + std::to_string(it.poi_index) + ">";
                }
                break;
            case PromptItem::Kind::kPoint:
                ji["point_index"] = it.point_index;
                rendered += "<pt:" + std::to_string(it.point_index) + ">";
                break;
            case PromptItem::Kind::kTaskToken:
                ji["task_token"] = task_token_id(prompt.task);
                rendered += std::string("<") + task_name(prompt.task) + ">";
                break;
        }
        items.push_back(std::move(ji));
    }
    j["items"] = std::move(items);
    j["rendered"] = rendered;
    return j;
}

}  // namespace trajcogn

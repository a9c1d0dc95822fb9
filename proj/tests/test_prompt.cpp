#include <catch2/catch_amalgamated.hpp>

#include <string>
#include <vector>

#include "trajcogn/kinematics.hpp"
#include "trajcogn/prompt.hpp"

using namespace trajcogn;

namespace {

// Straight north walk: one point every 0.001 degrees of latitude, 10 s apart.
EnrichedTrajectory make_traj(int n_points, std::int64_t t0 = 1559347200 + 9 * 3600) {
    RawTrajectory raw;
    raw.id = "toy";
    MatchResult match;
    for (int i = 0; i < n_points; ++i) {
        raw.points.push_back({40.0 + 0.001 * i, 116.0, t0 + 10 * i});
        match.segment_ids.push_back(i / 2);
        match.offsets_m.push_back(0.0);
    }
    return derive_kinematics(raw, match);
}

OdContext make_context() {
    OdContext ctx;
    ctx.origin = {{0, 12.0}, {1, 30.0}, {2, 55.0}};
    ctx.destination = {{3, 8.0}, {4, 40.0}, {5, 70.0}};
    return ctx;
}

std::vector<Poi> make_pois() {
    return {{40.0, 116.0, "Alfa Cafe", "1 North Road"},
            {40.0, 116.0, "Bravo Market", "2 North Road"},
            {40.0, 116.0, "Charlie Park", "3 North Road"},
            {40.01, 116.0, "Delta School", "4 North Road"},
            {40.01, 116.0, "Echo Garage", "5 North Road"},
            {40.01, 116.0, "Foxtrot Hotel", "6 North Road"}};
}

std::string rendered(const TrajectoryPrompt& p, const std::vector<Poi>& pois) {
    return prompt_to_json(p, &pois)["rendered"].get<std::string>();
}

int count_part(const TrajectoryPrompt& p, PromptPart part) {
    int n = 0;
    for (const auto& it : p.items) {
        n += it.part == part ? 1 : 0;
    }
    return n;
}

}  // namespace

TEST_CASE("head sentence renders weekday and hour from the departure time") {
    // 1559347200 is a Saturday midnight; +9h makes it 9 o'clock.
    const auto traj = make_traj(8);
    const auto prompt = build_prompt(traj, make_context(), Task::kSts);
    const auto text = rendered(prompt, make_pois());
    REQUIRE(text.rfind("The trajectory happened on Saturday at 9 o'clock, ", 0) == 0);
}

TEST_CASE("hour renders as a plain integer without zero padding") {
    const auto traj = make_traj(8, 1559347200 + 7 * 3600 + 120);
    const auto prompt = build_prompt(traj, make_context(), Task::kSts);
    REQUIRE(rendered(prompt, make_pois())
                .rfind("The trajectory happened on Saturday at 7 o'clock, ", 0) == 0);
}

TEST_CASE("full prompt text layout for the similarity task") {
    const auto traj = make_traj(3);
    const auto prompt = build_prompt(traj, make_context(), Task::kSts);
    REQUIRE(rendered(prompt, make_pois()) ==
            "The trajectory happened on Saturday at 9 o'clock, "
            "starts near: Alfa Cafe, Bravo Market, Charlie Park, "
            "ends near: Delta School, Echo Garage, Foxtrot Hotel, "
            "passes through <pt:0><pt:1><pt:2>. "
            "the overall representation is <sts>");
}

TEST_CASE("task suffixes differ by task") {
    const auto traj = make_traj(8);
    const auto pois = make_pois();
    const auto tte = rendered(build_prompt(traj, make_context(), Task::kTte), pois);
    const auto dp = rendered(build_prompt(traj, make_context(), Task::kDp), pois);
    REQUIRE(tte.find("the total travel time is <tte>") != std::string::npos);
    REQUIRE(dp.find("the destination is <dp>") != std::string::npos);
    REQUIRE(tte.find("overall representation") == std::string::npos);
}

TEST_CASE("destination prompts drop the last five points and the destination POIs") {
    const auto traj = make_traj(8);
    const auto prompt = build_prompt(traj, make_context(), Task::kDp);
    REQUIRE(prompt.n_points == 3);
    REQUIRE(prompt.n_points_full == 8);
    REQUIRE(count_part(prompt, PromptPart::kPoiDest) == 0);
    REQUIRE(count_part(prompt, PromptPart::kPoiOrigin) > 0);
    // The label is the matched segment of the true, untruncated endpoint.
    REQUIRE(prompt.label_segment == 3);

    const auto sts = build_prompt(traj, make_context(), Task::kSts);
    REQUIRE(sts.n_points == 8);
    REQUIRE(count_part(sts, PromptPart::kPoiDest) > 0);
}

TEST_CASE("destination prompts need more than five points") {
    REQUIRE_THROWS_AS(build_prompt(make_traj(5), make_context(), Task::kDp),
                      ModelError);
    REQUIRE_NOTHROW(build_prompt(make_traj(6), make_context(), Task::kDp));
}

TEST_CASE("prompts need at least two points") {
    EnrichedTrajectory one;
    one.id = "single";
    one.points.resize(1);
    REQUIRE_THROWS_AS(build_prompt(one, make_context(), Task::kSts), ModelError);
}

TEST_CASE("travel time task masks time features") {
    const auto traj = make_traj(8);
    REQUIRE(build_prompt(traj, make_context(), Task::kTte).mask_time_features);
    REQUIRE_FALSE(build_prompt(traj, make_context(), Task::kDp).mask_time_features);
    REQUIRE_FALSE(build_prompt(traj, make_context(), Task::kSts).mask_time_features);
}

TEST_CASE("extra-feature masking is carried from the options") {
    PromptOptions opts;
    opts.mask_extra_features = true;
    const auto prompt = build_prompt(make_traj(8), make_context(), Task::kSts, opts);
    REQUIRE(prompt.mask_extra_features);
}

TEST_CASE("POI part can be dropped") {
    PromptOptions opts;
    opts.include_poi_part = false;
    const auto prompt = build_prompt(make_traj(8), make_context(), Task::kSts, opts);
    REQUIRE(count_part(prompt, PromptPart::kPoiOrigin) == 0);
    REQUIRE(count_part(prompt, PromptPart::kPoiDest) == 0);
    REQUIRE(prompt_well_formed(prompt));
}

TEST_CASE("every prompt ends with exactly one soft task token") {
    for (Task task : {Task::kTte, Task::kDp, Task::kSts}) {
        const auto prompt = build_prompt(make_traj(8), make_context(), task);
        REQUIRE(prompt_well_formed(prompt));
        REQUIRE(prompt.items.back().kind == PromptItem::Kind::kTaskToken);
        REQUIRE(count_part(prompt, PromptPart::kSuffixSoft) == 1);
    }
}

TEST_CASE("soft task token ids are stable") {
    REQUIRE(task_token_id(Task::kTte) == 0);
    REQUIRE(task_token_id(Task::kDp) == 1);
    REQUIRE(task_token_id(Task::kSts) == 2);
    REQUIRE(task_from_name("dp") == Task::kDp);
    REQUIRE_THROWS_AS(task_from_name("dest"), ConfigError);
}

TEST_CASE("pretext reordering puts the POI part after the trajectory part") {
    const auto prompt = build_prompt(make_traj(4), make_context(), Task::kSts);
    const auto reordered = with_poi_after_trajectory(prompt);
    REQUIRE(prompt_well_formed(reordered));
    REQUIRE(reordered.items.size() == prompt.items.size());

    std::vector<PromptPart> order;
    for (const auto& it : reordered.items) {
        if (order.empty() || order.back() != it.part) {
            order.push_back(it.part);
        }
    }
    REQUIRE(order == std::vector<PromptPart>{PromptPart::kHead, PromptPart::kTrajectory,
                                             PromptPart::kPoiOrigin, PromptPart::kPoiDest,
                                             PromptPart::kSuffixHard,
                                             PromptPart::kSuffixSoft});
    REQUIRE(rendered(reordered, make_pois()) ==
            "The trajectory happened on Saturday at 9 o'clock, "
            "passes through <pt:0><pt:1><pt:2><pt:3>. "
            "starts near: Alfa Cafe, Bravo Market, Charlie Park, "
            "ends near: Delta School, Echo Garage, Foxtrot Hotel, "
            "the overall representation is <sts>");
}

TEST_CASE("rank zero marks the closest POI in each group") {
    const auto prompt = build_prompt(make_traj(4), make_context(), Task::kSts);
    std::vector<std::pair<int, int>> poi_ranks;
    for (const auto& it : prompt.items) {
        if (it.kind == PromptItem::Kind::kPoi) {
            poi_ranks.push_back({it.poi_index, it.poi_rank});
        }
    }
    REQUIRE(poi_ranks == std::vector<std::pair<int, int>>{
                             {0, 0}, {1, 1}, {2, 2}, {3, 0}, {4, 1}, {5, 2}});
}

TEST_CASE("prompt json carries labels and the rendered text") {
    const auto traj = make_traj(6);
    const auto j = prompt_to_json(build_prompt(traj, make_context(), Task::kTte),
                                  nullptr);
    REQUIRE(j["task"] == "tte");
    REQUIRE(j["trajectory_id"] == "toy");
    REQUIRE(j["n_points"] == 6);
    REQUIRE(j["travel_time_s"].get<double>() == 50.0);
    REQUIRE(j["mask_time_features"].get<bool>());
    REQUIRE(j["rendered"].get<std::string>().find("<poi:0>") != std::string::npos);
}

// Release gate. Each criterion is a self-contained check that prints one
// PASS or FAIL line; the process exits 0 only if every selected criterion
// passes. Run a single criterion with --criterion N, everything with no
// arguments.
#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "trajcogn/balltree.hpp"
#include "trajcogn/evaltasks.hpp"
#include "trajcogn/mapmatch.hpp"
#include "trajcogn/pipeline.hpp"
#include "trajcogn/synth.hpp"

namespace {

using namespace trajcogn;

struct Outcome {
    bool ok = false;
    std::string note;
};

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(
                   std::chrono::steady_clock::now() - t0_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fixed_str(double v, int digits) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// Shared toy: a short trajectory on a small segment id space, enriched the
// same way the pipeline does it.
EnrichedTrajectory make_toy_trajectory(const std::string& id, int n_points,
                                       double curve, int n_segments) {
    RawTrajectory raw;
    raw.id = id;
    MatchResult match;
    for (int i = 0; i < n_points; ++i) {
        RawPoint p;
        p.lat = 40.0 + 0.0008 * i;
        p.lng = -75.0 + 0.0005 * std::sin(curve + 0.8 * i);
        p.t = 1559347200 + 15 * i;
        raw.points.push_back(p);
        match.segment_ids.push_back(i % n_segments);
        match.offsets_m.push_back(0.0);
    }
    return derive_kinematics(raw, match);
}

std::vector<Poi> make_toy_pois() {
    return {
        {40.0002, -75.0004, "Corner Cafe", "1 Grid Avenue"},
        {40.0031, -74.9991, "North Depot", "9 Depot Road"},
    };
}

ModelConfig toy_model_config(int d_model, int n_layers, int n_segments) {
    ModelConfig mc;
    mc.backend.d_model = d_model;
    mc.backend.n_layers = n_layers;
    mc.backend.n_heads = 4;
    mc.backend.context = 400;
    mc.embedder.d_model = d_model;
    mc.embedder.n_segments = n_segments;
    mc.embedder.conv_kernel = 3;
    mc.embedder.n_virtual_anchors = 3;
    mc.embedder.n_heads = 4;
    mc.lora_rank = 2;
    return mc;
}

// criterion 1: a freshly initialised adapter leaves the frozen backend's
// outputs untouched because every B factor starts at zero.
Outcome criterion_adapter_identity() {
    Stopwatch clock;
    BackendConfig bc;
    bc.d_model = 32;
    bc.n_layers = 2;
    bc.n_heads = 4;
    bc.context = 96;
    LmBackend backend(init_backend_weights(bc));
    Rng lora_rng(7);
    const LoraSet lora = LoraSet::init(bc.n_layers, bc.d_model, 8, lora_rng);
    Rng rng(2024);
    double max_diff = 0.0;
    for (int c = 0; c < 100; ++c) {
        const int rows = static_cast<int>(rng.uniform_int(1, bc.context));
        Matrix z(rows, bc.d_model);
        for (auto& v : z.data) {
            v = rng.normal(0.0, 1.0);
        }
        const NodePtr input = make_constant(z);
        const NodePtr with = backend.forward(input, &lora);
        const NodePtr without = backend.forward(input, nullptr);
        for (std::size_t i = 0; i < with->value.data.size(); ++i) {
            max_diff = std::max(
                max_diff, std::abs(with->value.data[i] - without->value.data[i]));
        }
    }
    const double secs = clock.seconds();
    Outcome o;
    o.ok = max_diff <= 1e-6 && secs < 10.0;
    o.note = "max |with - without| = " + fixed_str(max_diff, 12) +
             " over 100 inputs (" + fixed_str(secs, 1) + "s)";
    return o;
}

// criterion 2: central finite differences against the reverse pass on every
// trainable tensor family, through the full pretext loss.
Outcome criterion_gradients() {
    Stopwatch clock;
    ModelConfig mc = toy_model_config(16, 2, 8);
    LetModel model(mc);

    const EnrichedTrajectory traj = make_toy_trajectory("grad", 4, 0.3, 8);
    const PoiIndex pois(make_toy_pois(), 4);
    const NormStats stats = NormStats::fit({traj});
    PromptOptions opts;
    opts.n_poi = 2;
    const PretextSample sample = make_pretext_sample(traj, pois, opts);

    // B starts at zero, which would zero the A gradients exactly and make
    // their check vacuous, so the adapter leaves the identity first.
    Rng perturb(5);
    for (const auto& [name, p] : model.params()) {
        if (name.rfind("lora.", 0) == 0 && name.find(".b_") != std::string::npos) {
            for (auto& v : p->value.data) {
                v += perturb.normal(0.0, 0.05);
            }
        }
    }

    const auto loss_value = [&]() {
        return pretext_loss(model, sample, pois.pois(), stats).l_pre;
    };

    for (const auto& [name, p] : model.params()) {
        (void)name;
        p->ensure_grad();
        std::fill(p->grad.data.begin(), p->grad.data.end(), 0.0);
    }
    const PretextLoss pl = pretext_loss(model, sample, pois.pois(), stats);
    backward(pl.node);

    const std::vector<std::string> families = {
        "embed.conv_w", "embed.conv_b", "embed.anchor_virtual", "proj.",
        "lora.",        "head.seg",     "head.cont"};
    const double h = 1e-5;
    double worst = 0.0;
    std::string worst_name = "none";
    int n_checked = 0;
    Rng pick(31);
    for (const auto& family : families) {
        bool matched = false;
        for (const auto& [name, p] : model.params()) {
            if (name.rfind(family, 0) != 0) {
                continue;
            }
            matched = true;
            const std::size_t size = p->value.data.size();
            const std::size_t n_entries = std::min<std::size_t>(6, size);
            for (std::size_t e = 0; e < n_entries; ++e) {
                const std::size_t idx = pick.index(size);
                const double saved = p->value.data[idx];
                p->value.data[idx] = saved + h;
                const double up = loss_value();
                p->value.data[idx] = saved - h;
                const double down = loss_value();
                p->value.data[idx] = saved;
                const double fd = (up - down) / (2.0 * h);
                const double an = p->grad.data[idx];
                const double rel = std::abs(fd - an) /
                                   std::max({1.0, std::abs(fd), std::abs(an)});
                ++n_checked;
                if (rel > worst) {
                    worst = rel;
                    worst_name = name;
                }
            }
        }
        if (!matched) {
            return {false, "no parameter matches family " + family};
        }
    }
    const double secs = clock.seconds();
    Outcome o;
    o.ok = worst < 1e-4 && secs < 120.0;
    o.note = "worst relative error " + fixed_str(worst, 9) + " at " + worst_name +
             " over " + std::to_string(n_checked) + " entries (" +
             fixed_str(secs, 1) + "s)";
    return o;
}

// criterion 3: the parallel masked reconstruction loss equals the per-step
// autoregressive evaluation, because the causal mask already hides the
// future at every read position.
Outcome criterion_teacher_forcing() {
    Stopwatch clock;
    ModelConfig mc = toy_model_config(16, 2, 8);
    LetModel model(mc);
    const PoiIndex pois(make_toy_pois(), 4);
    PromptOptions opts;
    opts.n_poi = 2;
    double worst = 0.0;
    for (int t = 0; t < 3; ++t) {
        const EnrichedTrajectory traj =
            make_toy_trajectory("tf" + std::to_string(t), 4, 0.9 * t, 8);
        const NormStats stats = NormStats::fit({traj});
        const PretextSample sample = make_pretext_sample(traj, pois, opts);
        const PretextLoss pl = pretext_loss(model, sample, pois.pois(), stats);
        const double seq =
            traj_reconstruction_loss_sequential(model, sample, pois.pois(), stats);
        worst = std::max(worst, std::abs(pl.l_traj - seq));
    }
    Outcome o;
    o.ok = worst <= 1e-5;
    o.note = "max |parallel - sequential| = " + fixed_str(worst, 10) +
             " on 3 four-point toys (" + fixed_str(clock.seconds(), 1) + "s)";
    return o;
}

// criterion 4: a toy model memorises 32 trajectories. The pretext loss has
// to fall by at least 90% within 500 steps and a destination fine-tune on
// the same 32 has to become exact.
Outcome criterion_overfit() {
    Stopwatch clock;
    SynthParams sp;
    sp.grid_rows = 4;
    sp.grid_cols = 4;
    sp.n_trajectories = 32;
    sp.seed = 5;
    sp.n_random_pois = 6;
    sp.n_depots = 4;
    sp.depot_trip_fraction = 0.5;
    sp.min_points = 6;
    sp.max_points = 10;
    sp.min_speed_mps = 2.0;
    sp.max_speed_mps = 10.0;
    SynthDataset synth = make_synthetic_dataset(sp);

    std::vector<RawTrajectory> raw;
    for (auto& t : synth.trajectories) {
        raw.push_back(std::move(t.raw));
    }
    const std::vector<EnrichedTrajectory> enriched =
        match_and_enrich(synth.network, raw, MatchConfig{});
    const PoiIndex pois(synth.pois, 8);
    const NormStats stats = NormStats::fit(enriched);

    ModelConfig mc = toy_model_config(32, 2, synth.network.num_segments());
    mc.lora_rank = 16;
    // The random-init backend starts with a tiny readout norm, which caps
    // byte logits near zero and pins the text half of the loss at the
    // uniform floor no matter what the adapters learn. A large final-norm
    // gain restores the confident-logit regime of a trained readout so the
    // memorisation this criterion asks for is actually expressible.
    mc.backend.readout_gain = 40.0;
    LetModel model(mc);
    PromptOptions opts;
    opts.n_poi = 1;

    TrainConfig tc;
    tc.adam.lr = 5e-3;
    tc.batch_size = 8;
    tc.pretext_epochs = 125;  // 32 samples / batch 8 = 4 steps per epoch
    const auto samples = make_pretext_samples(enriched, pois, opts);
    const PretextTrainResult pre =
        train_pretext(model, samples, pois.pois(), stats, tc);

    const bool dropped = pre.final_loss <= 0.1 * pre.first_loss;

    TrainConfig ft;
    ft.adam.lr = 2e-3;
    ft.batch_size = 8;
    ft.finetune_max_epochs = 60;
    ft.patience = 60;
    const auto task_samples =
        make_task_samples(enriched, pois, Task::kDp, opts, nullptr);
    train_finetune(model, Task::kDp, task_samples, task_samples, pois.pois(),
                   stats, ft);
    int correct = 0;
    for (const auto& s : task_samples) {
        if (predict_dp(model, s, pois.pois(), stats).first == s.dp_label) {
            ++correct;
        }
    }
    const double secs = clock.seconds();
    Outcome o;
    o.ok = dropped && correct == 32 && secs < 300.0;
    o.note = "pretext " + fixed_str(pre.first_loss, 3) + " -> " +
             fixed_str(pre.final_loss, 3) + " in " + std::to_string(pre.steps) +
             " steps, destination " + std::to_string(correct) + "/32 (" +
             fixed_str(secs, 1) + "s)";
    return o;
}

// criterion 5: on held-out data the full model beats the variant without
// the pattern projection and the variant without surroundings. Direction
// only, no margin.
Outcome criterion_generalization() {
    Stopwatch clock;
    RunConfig cfg;
    cfg.d_model = 32;
    cfg.n_layers = 1;
    cfg.n_heads = 4;
    cfg.lora_rank = 4;
    cfg.max_points = 30;
    cfg.lr = 1e-3;
    cfg.pretext_epochs = 2;
    cfg.finetune_max_epochs = 3;
    cfg.patience = 3;
    cfg.validate();

    const PipelineData data = pipeline_from_synth(cfg);
    const auto acc1 = [&](const std::string& variant) {
        const nlohmann::json row =
            run_ablation(variant, cfg, data, Task::kDp, nullptr, nullptr, nullptr);
        return row.at("ACC@1 (%)").get<double>();
    };
    const double full = acc1("full");
    const double no_psp = acc1("no-psp");
    const double no_poi = acc1("no-poi");
    const double secs = clock.seconds();
    Outcome o;
    o.ok = full > no_psp && full > no_poi && secs < 1800.0;
    o.note = "test ACC@1 full=" + fixed_str(full, 2) + "% no-psp=" +
             fixed_str(no_psp, 2) + "% no-poi=" + fixed_str(no_poi, 2) + "% (" +
             fixed_str(secs, 0) + "s)";
    return o;
}

// criterion 6: the matcher recovers at least 95% of point labels at 5 m
// noise, and agrees exactly with exhaustive sequence enumeration on
// instances small enough to enumerate.
Outcome criterion_map_matching() {
    Stopwatch clock;
    SynthParams sp;
    sp.n_trajectories = 300;
    sp.seed = 3;
    SynthDataset synth = make_synthetic_dataset(sp);
    std::size_t total = 0, correct = 0;
    for (const auto& t : synth.trajectories) {
        const MatchResult m = map_match(synth.network, t.raw, MatchConfig{});
        for (std::size_t i = 0; i < m.segment_ids.size(); ++i) {
            ++total;
            if (m.segment_ids[i] == t.true_segments[i]) {
                ++correct;
            }
        }
    }
    const double accuracy =
        static_cast<double>(correct) / static_cast<double>(total);

    // Hand-built network, small enough that every candidate sequence can be
    // scored: a three-edge star, both directions each.
    const std::vector<Vertex> vertices = {
        {0, 40.0000, -75.0000},
        {1, 40.0018, -75.0000},
        {2, 40.0036, -75.0000},
        {3, 40.0018, -74.9976},
    };
    std::vector<Segment> segments;
    const auto add_edge = [&](std::int64_t a, std::int64_t b) {
        const Vertex& va = vertices[static_cast<std::size_t>(a)];
        const Vertex& vb = vertices[static_cast<std::size_t>(b)];
        const double len = geo::haversine_m(va.lat, va.lng, vb.lat, vb.lng);
        const int id = static_cast<int>(segments.size());
        segments.push_back({id, a, b, {{va.lat, va.lng}, {vb.lat, vb.lng}}, len});
        segments.push_back({id + 1, b, a, {{vb.lat, vb.lng}, {va.lat, va.lng}}, len});
    };
    add_edge(0, 1);
    add_edge(1, 2);
    add_edge(1, 3);
    const RoadNetwork tiny(vertices, segments);

    const std::vector<std::vector<int>> adjacency = {{1}, {0, 2, 3}, {1}, {1}};
    Rng rng(11);
    int mismatches = 0;
    for (int c = 0; c < 30; ++c) {
        const int n_pts = 1 + c % 5;
        RawTrajectory raw;
        raw.id = "exh" + std::to_string(c);
        int at = static_cast<int>(rng.index(vertices.size()));
        for (int i = 0; i < n_pts; ++i) {
            const auto& next_options = adjacency[static_cast<std::size_t>(at)];
            const int to = next_options[rng.index(next_options.size())];
            const Vertex& va = vertices[static_cast<std::size_t>(at)];
            const Vertex& vb = vertices[static_cast<std::size_t>(to)];
            const double u = rng.uniform(0.1, 0.9);
            RawPoint p;
            p.lat = va.lat + u * (vb.lat - va.lat);
            p.lng = va.lng + u * (vb.lng - va.lng);
            p.lat += rng.normal(0.0, 6.0) / 111320.0;
            p.lng += rng.normal(0.0, 6.0) /
                     (111320.0 * std::cos(p.lat * 3.14159265358979 / 180.0));
            p.t = 1559347200 + 12 * i;
            raw.points.push_back(p);
            if (rng.uniform() < 0.6) {
                at = to;
            }
        }
        const MatchResult fast = map_match(tiny, raw, MatchConfig{});
        const MatchResult slow = map_match_exhaustive(tiny, raw.points, MatchConfig{});
        if (fast.segment_ids != slow.segment_ids) {
            ++mismatches;
        }
    }
    Outcome o;
    o.ok = accuracy >= 0.95 && mismatches == 0;
    o.note = "point accuracy " + fixed_str(100.0 * accuracy, 2) + "% on 300 noisy tracks, " +
             std::to_string(mismatches) + "/30 exhaustive disagreements (" +
             fixed_str(clock.seconds(), 1) + "s)";
    return o;
}

// criterion 7: the tree search returns exactly the brute-force answer,
// distances included, across randomized stores and leaf sizes.
Outcome criterion_knn() {
    Stopwatch clock;
    Rng rng(4077);
    const int leaf_sizes[] = {1, 2, 3, 7, 16, 33};
    int failures = 0;
    for (int c = 0; c < 100; ++c) {
        const int n = 1 + static_cast<int>(rng.uniform_int(0, 199));
        std::vector<Poi> pois;
        pois.reserve(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            Poi p;
            p.lat = rng.uniform(39.99, 40.03);
            p.lng = rng.uniform(-75.03, -74.99);
            if (i > 0 && i % 7 == 0) {
                // repeated coordinates force the distance tie-break
                p.lat = pois[0].lat;
                p.lng = pois[0].lng;
            }
            p.name = "P" + std::to_string(i);
            pois.push_back(std::move(p));
        }
        const int k = 1 + static_cast<int>(rng.uniform_int(0, std::min(n, 25) - 1));
        const PoiIndex index(pois, leaf_sizes[c % 6]);
        const double qlat = rng.uniform(39.985, 40.035);
        const double qlng = rng.uniform(-75.035, -74.985);
        const auto fast = index.query_knn(qlat, qlng, k);
        const auto slow = knn_brute_force(pois, qlat, qlng, k);
        bool same = fast.size() == slow.size();
        for (std::size_t i = 0; same && i < fast.size(); ++i) {
            same = fast[i].poi_index == slow[i].poi_index &&
                   fast[i].distance_m == slow[i].distance_m;
        }
        if (!same) {
            ++failures;
        }
    }
    Outcome o;
    o.ok = failures == 0;
    o.note = std::to_string(100 - failures) +
             "/100 randomized cases identical to brute force (" +
             fixed_str(clock.seconds(), 1) + "s)";
    return o;
}

// criterion 8: the retrieval ground truth has the documented structure, a
// coordinate oracle solves it perfectly, and random embeddings land at
// chance rank.
Outcome criterion_sts_ground_truth() {
    Stopwatch clock;
    SynthParams sp;
    sp.n_trajectories = 1300;
    sp.seed = 21;
    sp.n_random_pois = 5;
    sp.n_depots = 0;
    sp.depot_trip_fraction = 0.0;
    sp.min_points = 10;
    sp.max_points = 40;
    sp.min_speed_mps = 1.0;
    sp.max_speed_mps = 5.0;
    SynthDataset synth = make_synthetic_dataset(sp);

    // One trajectory per origin/destination route so no database entry can
    // be a geometric duplicate of a query.
    std::vector<EnrichedTrajectory> trajs;
    std::unordered_set<std::int64_t> seen_routes;
    for (auto& t : synth.trajectories) {
        const std::int64_t key =
            static_cast<std::int64_t>(t.true_segments.front()) * 100000 +
            t.true_segments.back();
        if (!seen_routes.insert(key).second) {
            continue;
        }
        MatchResult m;
        m.segment_ids = t.true_segments;
        m.offsets_m.assign(t.true_segments.size(), 0.0);
        trajs.push_back(derive_kinematics(t.raw, m));
    }
    const int n = static_cast<int>(trajs.size());
    if (n < 1010) {
        return {false, "only " + std::to_string(n) + " distinct routes"};
    }

    const std::uint64_t seed = 909;
    const int db_size = 99, downsample_len = 32, exclude_nearest = 10;
    const StsGroundTruth gt = build_sts_ground_truth(
        trajs, seed, 1000, db_size, downsample_len, exclude_nearest, nullptr);
    const StsGroundTruth again = build_sts_ground_truth(
        trajs, seed, 1000, db_size, downsample_len, exclude_nearest, nullptr);

    std::string problem;
    if (gt.n_queries != 1000 || gt.db_size != 99 || gt.scaled_down ||
        gt.instances.size() != 1000) {
        problem = "unexpected shape";
    }
    if (problem.empty()) {
        if (gt.instances.size() != again.instances.size()) {
            problem = "rebuild size differs";
        }
        for (std::size_t i = 0; problem.empty() && i < gt.instances.size(); ++i) {
            if (gt.instances[i].query != again.instances[i].query ||
                gt.instances[i].database != again.instances[i].database) {
                problem = "rebuild differs at instance " + std::to_string(i);
            }
        }
    }
    std::set<int> queries;
    for (const auto& inst : gt.instances) {
        if (!problem.empty()) {
            break;
        }
        queries.insert(inst.query);
        if (inst.database.size() != 99) {
            problem = "database size off";
            break;
        }
        std::set<int> db(inst.database.begin(), inst.database.end());
        if (db.size() != 99 || db.count(inst.query) != 0) {
            problem = "database repeats or contains the query";
        }
    }
    if (problem.empty() && queries.size() != 1000) {
        problem = "queries repeat";
    }

    std::vector<std::vector<std::array<double, 2>>> full_ds(
        static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        full_ds[static_cast<std::size_t>(i)] =
            downsample_coords(trajs[static_cast<std::size_t>(i)], downsample_len);
    }
    // The ten nearest whole trajectories must be missing from the database.
    for (std::size_t q = 0; problem.empty() && q < 20; ++q) {
        const auto& inst = gt.instances[q];
        const auto query_ds = downsample_coords(
            alternate_points(trajs[static_cast<std::size_t>(inst.query)], true),
            downsample_len);
        std::vector<std::pair<double, int>> dist;
        for (int j = 0; j < n; ++j) {
            if (j != inst.query) {
                dist.emplace_back(
                    coord_mse(query_ds, full_ds[static_cast<std::size_t>(j)]), j);
            }
        }
        std::sort(dist.begin(), dist.end());
        const std::set<int> db(inst.database.begin(), inst.database.end());
        for (int e = 0; e < exclude_nearest; ++e) {
            if (db.count(dist[static_cast<std::size_t>(e)].second) != 0) {
                problem = "excluded neighbour found in database";
            }
        }
    }

    // Oracle: the embedding of a trajectory is its downsampled coordinate
    // sequence, compared by negative mean squared error. The target is the
    // held-out even half of the query's own track.
    double rank_sum = 0.0;
    for (const auto& inst : gt.instances) {
        const auto& traj = trajs[static_cast<std::size_t>(inst.query)];
        const auto query_ds =
            downsample_coords(alternate_points(traj, true), downsample_len);
        const auto target_ds =
            downsample_coords(alternate_points(traj, false), downsample_len);
        std::vector<double> sims;
        sims.reserve(inst.database.size() + 1);
        sims.push_back(-coord_mse(query_ds, target_ds));
        for (int d : inst.database) {
            sims.push_back(
                -coord_mse(query_ds, full_ds[static_cast<std::size_t>(d)]));
        }
        rank_sum += rank_of_target(sims);
    }
    const double oracle_mean = rank_sum / 1000.0;

    double random_sum = 0.0;
    std::vector<std::vector<double>> random_emb(static_cast<std::size_t>(n));
    const auto random_embedding = [&](int idx) -> const std::vector<double>& {
        auto& e = random_emb[static_cast<std::size_t>(idx)];
        if (e.empty()) {
            Rng r(0xE0000 + static_cast<std::uint64_t>(idx));
            for (int i = 0; i < 16; ++i) {
                e.push_back(r.normal(0.0, 1.0));
            }
        }
        return e;
    };
    for (std::size_t q = 0; q < gt.instances.size(); ++q) {
        const auto& inst = gt.instances[q];
        std::vector<double> query, target;
        Rng rq(0xA0000 + q), rt(0xB0000 + q);
        for (int i = 0; i < 16; ++i) {
            query.push_back(rq.normal(0.0, 1.0));
            target.push_back(rt.normal(0.0, 1.0));
        }
        std::vector<double> sims;
        sims.push_back(cosine_similarity(query, target));
        for (int d : inst.database) {
            sims.push_back(cosine_similarity(query, random_embedding(d)));
        }
        random_sum += rank_of_target(sims);
    }
    const double random_mean = random_sum / 1000.0;

    Outcome o;
    o.ok = problem.empty() && oracle_mean == 1.0 && random_mean >= 47.5 &&
           random_mean <= 53.5;
    o.note = (problem.empty() ? std::string("structure ok") : problem) +
             ", oracle mean rank " + fixed_str(oracle_mean, 4) +
             ", random mean rank " + fixed_str(random_mean, 2) + " on " +
             std::to_string(n) + " routes (" + fixed_str(clock.seconds(), 1) + "s)";
    return o;
}

// criterion 9: the aggregate metrics reproduce hand-computed values.
Outcome criterion_metric_oracles() {
    Stopwatch clock;
    const double tol = 1e-9;
    std::vector<std::string> bad;
    const auto expect = [&](bool cond, const char* what) {
        if (!cond) {
            bad.push_back(what);
        }
    };

    {
        const TteMetrics m = compute_tte_metrics({100.0, 200.0}, {110.0, 190.0});
        expect(std::abs(m.rmse - 10.0) <= tol, "tte rmse");
        expect(std::abs(m.mae - 10.0) <= tol, "tte mae");
        // (10/110 + 10/190) / 2 * 100 = 1500/209
        expect(std::abs(m.mape_pct - 1500.0 / 209.0) <= tol, "tte mape");
    }
    {
        const TteMetrics m = compute_tte_metrics({13.0, 104.0}, {10.0, 100.0});
        expect(std::abs(m.rmse - std::sqrt(12.5)) <= tol, "tte rmse 2");
        expect(std::abs(m.mae - 3.5) <= tol, "tte mae 2");
        expect(std::abs(m.mape_pct - 17.0) <= tol, "tte mape 2");
    }
    {
        // zero labels leave the percentage average
        const TteMetrics m = compute_tte_metrics({50.0, 110.0}, {0.0, 100.0});
        expect(std::abs(m.mape_pct - 10.0) <= tol, "tte mape zero label");
        const TteMetrics z = compute_tte_metrics({1.0}, {0.0});
        expect(z.mape_pct == 0.0, "tte mape all zero");
    }
    {
        // 4 rows over 7 classes, labels {0,5,1,3}: top-1 picks class 0 for
        // rows 0,1,3 (ties keep the earlier class) and class 1 for row 2,
        // so ACC@1 = 2/4. Row 1's label ranks sixth, the only top-5 miss.
        // Per class: 0 (recall 1, precision 1/3, f1 1/2), 1 (all 1),
        // 3 and 5 (all 0). Macro recall 1/2, macro f1 (1/2 + 1)/4 = 0.375.
        const std::vector<std::vector<double>> rows = {
            {0.40, 0.10, 0.10, 0.10, 0.10, 0.10, 0.10},
            {0.30, 0.25, 0.15, 0.10, 0.08, 0.07, 0.05},
            {0.05, 0.50, 0.15, 0.10, 0.10, 0.10, 0.00},
            {0.30, 0.30, 0.20, 0.10, 0.05, 0.05, 0.00},
        };
        const DpMetrics m = compute_dp_metrics(rows, {0, 5, 1, 3});
        expect(std::abs(m.acc1_pct - 50.0) <= tol, "dp acc1");
        expect(std::abs(m.acc5_pct - 75.0) <= tol, "dp acc5");
        expect(std::abs(m.macro_recall_pct - 50.0) <= tol, "dp recall");
        expect(std::abs(m.macro_f1_pct - 37.5) <= tol, "dp f1");
    }
    {
        const StsMetrics m = compute_sts_metrics({1, 2, 1, 11, 3});
        expect(std::abs(m.mean_rank - 3.6) <= tol, "sts mean rank");
        expect(std::abs(m.acc1_pct - 40.0) <= tol, "sts acc1");
        expect(std::abs(m.acc5_pct - 80.0) <= tol, "sts acc5");
    }
    {
        expect(rank_of_target({0.5, 0.7, 0.5, 0.2, 0.9}) == 3, "rank ties");
        const std::vector<std::array<double, 2>> a = {{1.0, 2.0}, {3.0, 4.0}};
        const std::vector<std::array<double, 2>> b = {{1.0, 5.0}, {7.0, 4.0}};
        expect(std::abs(coord_mse(a, b) - 6.25) <= tol, "coord mse");
    }
    Outcome o;
    o.ok = bad.empty();
    if (bad.empty()) {
        o.note = "18 hand-computed values reproduced within 1e-9 (" +
                 fixed_str(clock.seconds(), 1) + "s)";
    } else {
        o.note = "mismatch: " + bad.front() + " and " +
                 std::to_string(bad.size() - 1) + " more";
    }
    return o;
}

// criterion 10: two complete runs from the same seeds produce bitwise
// identical checkpoints and identical metric reports.
Outcome criterion_determinism() {
    Stopwatch clock;
    namespace fs = std::filesystem;
    const auto run_once = [](const std::string& dir) {
        RunConfig cfg;
        cfg.d_model = 16;
        cfg.n_layers = 1;
        cfg.n_heads = 4;
        cfg.context = 400;
        cfg.lora_rank = 2;
        cfg.n_virtual_anchors = 3;
        cfg.conv_kernel = 3;
        cfg.proj_heads = 4;
        cfg.n_poi = 2;
        cfg.grid_rows = 4;
        cfg.grid_cols = 4;
        cfg.n_trajectories = 60;
        cfg.n_random_pois = 8;
        cfg.n_depots = 4;
        cfg.min_points = 6;
        cfg.max_points = 12;
        cfg.pretext_epochs = 1;
        cfg.finetune_max_epochs = 1;
        cfg.patience = 1;
        cfg.batch_size = 8;
        cfg.validate();
        const PipelineData data = pipeline_from_synth(cfg);
        auto model = build_model(cfg, data);
        const RunResult r =
            run_task_pipeline(*model, Task::kDp, data, cfg, nullptr, nullptr, nullptr);
        fs::create_directories(dir);
        model->save_checkpoint(dir, cfg.to_json());
        return r.report.dump();
    };
    const std::string base = fs::temp_directory_path() /
                             ("trajcogn-accept-" + std::to_string(::getpid()));
    const std::string dir_a = base + "-a", dir_b = base + "-b";
    const std::string report_a = run_once(dir_a);
    const std::string report_b = run_once(dir_b);

    std::string problem;
    if (report_a != report_b) {
        problem = "metric reports differ";
    }
    const std::string manifest_a = slurp(dir_a + "/manifest.json");
    if (problem.empty() && manifest_a != slurp(dir_b + "/manifest.json")) {
        problem = "manifests differ";
    }
    std::size_t n_files = 0;
    if (problem.empty()) {
        const nlohmann::json manifest = nlohmann::json::parse(manifest_a);
        for (const auto& entry : manifest.at("params")) {
            const std::string name = entry.at("name").get<std::string>() + ".f32";
            ++n_files;
            if (slurp(dir_a + "/" + name) != slurp(dir_b + "/" + name)) {
                problem = name + " differs";
                break;
            }
        }
    }
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    Outcome o;
    o.ok = problem.empty();
    o.note = problem.empty()
                 ? "reports and " + std::to_string(n_files) +
                       " tensor files bitwise identical (" +
                       fixed_str(clock.seconds(), 1) + "s)"
                 : problem;
    return o;
}

// criterion 11: the documented defaults are the shipped defaults.
Outcome criterion_defaults() {
    const RunConfig cfg;
    std::vector<std::string> bad;
    if (cfg.n_virtual_anchors != 15) bad.push_back("n_virtual_anchors");
    if (cfg.conv_kernel != 5) bad.push_back("conv_kernel");
    if (cfg.lora_rank != 8) bad.push_back("lora_rank");
    if (cfg.n_poi != 3) bad.push_back("n_poi");
    if (cfg.lr != 1e-4) bad.push_back("lr");
    if (cfg.pretext_epochs != 20) bad.push_back("pretext_epochs");
    Outcome o;
    o.ok = bad.empty();
    if (bad.empty()) {
        o.note = "anchors 15, kernel 5, rank 8, surroundings 3, lr 1e-4, "
                 "20 pretext epochs";
    } else {
        o.note = "defaults drifted: " + bad.front() + " and " +
                 std::to_string(bad.size() - 1) + " more";
    }
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    int selected = 0;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--criterion" && i + 1 < argc) {
            selected = std::atoi(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
            return 2;
        }
    }
    const std::vector<std::function<Outcome()>> criteria = {
        criterion_adapter_identity, criterion_gradients,
        criterion_teacher_forcing,  criterion_overfit,
        criterion_generalization,   criterion_map_matching,
        criterion_knn,              criterion_sts_ground_truth,
        criterion_metric_oracles,   criterion_determinism,
        criterion_defaults,
    };
    if (selected < 0 || selected > static_cast<int>(criteria.size())) {
        std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
        return 2;
    }
    bool all_ok = true;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (selected != 0 && selected != id) {
            continue;
        }
        Outcome o;
        try {
            o = criteria[i]();
        } catch (const std::exception& e) {
            o.ok = false;
            o.note = std::string("exception: ") + e.what();
        }
        std::printf("criterion %d: %s - %s\n", id, o.ok ? "PASS" : "FAIL",
                    o.note.c_str());
        std::fflush(stdout);
        all_ok = all_ok && o.ok;
    }
    return all_ok ? 0 : 1;
}

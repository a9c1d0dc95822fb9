#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "trajcogn/dataset.hpp"
#include "trajcogn/embedder.hpp"
#include "trajcogn/errors.hpp"
#include "trajcogn/mapmatch.hpp"
#include "trajcogn/model.hpp"
#include "trajcogn/synth.hpp"
#include "trajcogn/training.hpp"

namespace trajcogn {

// Every knob of the pipeline with its shipped default. A config file sets
// fields by name; command-line overrides land on top of the file.
struct RunConfig {
    // backend
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int context = 512;
    std::uint64_t backend_seed = 1234;
    double readout_gain = 1.0;
    // adapters and embedder
    int lora_rank = 8;
    int n_virtual_anchors = 15;
    int conv_kernel = 5;
    int proj_heads = 8;
    int n_poi = 3;
    std::uint64_t lora_seed = 7;
    std::uint64_t head_seed = 11;
    std::uint64_t embed_seed = 99;
    // variant switches, normally driven by `ablation`
    std::string ablation = "full";
    bool include_poi = true;
    bool pattern_projection = true;
    bool mask_extra_features = false;
    bool skip_pretext = false;
    std::string anchor_variant = "movement";
    // training
    double lr = 1e-4;
    int pretext_epochs = 20;
    int finetune_max_epochs = 50;
    int patience = 5;
    int batch_size = 16;
    double clip_norm = 1.0;
    double divergence_limit = 1e6;
    std::uint64_t shuffle_seed = 42;
    // map matching
    double sigma_emission_m = 5.0;
    double beta_transition_m = 20.0;
    double candidate_radius_m = 200.0;
    int max_candidates = 8;
    // POI index
    int leaf_size = 16;
    // synthetic data
    int grid_rows = 12;
    int grid_cols = 12;
    double spacing_m = 200.0;
    int n_trajectories = 2000;
    double noise_sigma_m = 5.0;
    int sample_dt_s = 10;
    std::uint64_t synth_seed = 1;
    int n_random_pois = 40;
    int n_depots = 12;
    double depot_trip_fraction = 0.85;
    int min_points = 6;
    int max_points = 60;
    double min_speed_mps = 1.0;
    double max_speed_mps = 15.0;
    // split
    double train_fraction = 0.8;
    double valid_fraction = 0.1;
    // similarity ground truth
    int sts_queries = 1000;
    int sts_db_size = 5000;
    int sts_downsample = 32;
    int sts_exclude_nearest = 10;
    std::uint64_t sts_seed = 4242;

    // Single source of truth for field names: parsing, serialization, and
    // the effective-config echo all walk this list.
    template <typename V>
    void visit(V&& v) {
        v("d_model", d_model);
        v("n_layers", n_layers);
        v("n_heads", n_heads);
        v("context", context);
        v("backend_seed", backend_seed);
        v("readout_gain", readout_gain);
        v("lora_rank", lora_rank);
        v("n_virtual_anchors", n_virtual_anchors);
        v("conv_kernel", conv_kernel);
        v("proj_heads", proj_heads);
        v("n_poi", n_poi);
        v("lora_seed", lora_seed);
        v("head_seed", head_seed);
        v("embed_seed", embed_seed);
        v("ablation", ablation);
        v("include_poi", include_poi);
        v("pattern_projection", pattern_projection);
        v("mask_extra_features", mask_extra_features);
        v("skip_pretext", skip_pretext);
        v("anchor_variant", anchor_variant);
        v("lr", lr);
        v("pretext_epochs", pretext_epochs);
        v("finetune_max_epochs", finetune_max_epochs);
        v("patience", patience);
        v("batch_size", batch_size);
        v("clip_norm", clip_norm);
        v("divergence_limit", divergence_limit);
        v("shuffle_seed", shuffle_seed);
        v("sigma_emission_m", sigma_emission_m);
        v("beta_transition_m", beta_transition_m);
        v("candidate_radius_m", candidate_radius_m);
        v("max_candidates", max_candidates);
        v("leaf_size", leaf_size);
        v("grid_rows", grid_rows);
        v("grid_cols", grid_cols);
        v("spacing_m", spacing_m);
        v("n_trajectories", n_trajectories);
        v("noise_sigma_m", noise_sigma_m);
        v("sample_dt_s", sample_dt_s);
        v("synth_seed", synth_seed);
        v("n_random_pois", n_random_pois);
        v("n_depots", n_depots);
        v("depot_trip_fraction", depot_trip_fraction);
        v("min_points", min_points);
        v("max_points", max_points);
        v("min_speed_mps", min_speed_mps);
        v("max_speed_mps", max_speed_mps);
        v("train_fraction", train_fraction);
        v("valid_fraction", valid_fraction);
        v("sts_queries", sts_queries);
        v("sts_db_size", sts_db_size);
        v("sts_downsample", sts_downsample);
        v("sts_exclude_nearest", sts_exclude_nearest);
        v("sts_seed", sts_seed);
    }

    template <typename V>
    void visit(V&& v) const {
        const_cast<RunConfig*>(this)->visit(
            [&v](const char* name, auto& field) {
                v(name, static_cast<const std::decay_t<decltype(field)>&>(field));
            });
    }

    void set(const std::string& key, const std::string& value) {
        bool found = false;
        visit([&](const char* name, auto& field) {
            if (found || key != name) {
                return;
            }
            found = true;
            parse_into(field, key, value);
        });
        if (!found) {
            throw ConfigError("unknown config key: " + key);
        }
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        visit([&j](const char* name, const auto& field) { j[name] = field; });
        return j;
    }

    void apply_json(const nlohmann::json& j) {
        visit([&j](const char* name, auto& field) {
            if (j.contains(name)) {
                j.at(name).get_to(field);
            }
        });
    }

    // Flat key=value lines; # starts a comment; blank lines skipped.
    void apply_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) {
            throw ConfigError("cannot open config file: " + path);
        }
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) {
                line.erase(hash);
            }
            const auto strip = [](std::string s) {
                const auto a = s.find_first_not_of(" \t\r");
                if (a == std::string::npos) {
                    return std::string();
                }
                const auto b = s.find_last_not_of(" \t\r");
                return s.substr(a, b - a + 1);
            };
            const std::string stripped = strip(line);
            if (stripped.empty()) {
                continue;
            }
            const auto eq = stripped.find('=');
            if (eq == std::string::npos) {
                throw ConfigError(path + ":" + std::to_string(line_no) +
                                  ": expected key=value");
            }
            const std::string key = strip(stripped.substr(0, eq));
            const std::string value = strip(stripped.substr(eq + 1));
            if (key.empty()) {
                throw ConfigError(path + ":" + std::to_string(line_no) +
                                  ": empty key");
            }
            try {
                set(key, value);
            } catch (const ConfigError& e) {
                throw ConfigError(path + ":" + std::to_string(line_no) + ": " +
                                  e.what());
            }
        }
    }

    // key=value pairs from the command line, applied after any file.
    void apply_overrides(const std::vector<std::string>& pairs) {
        for (const auto& kv : pairs) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos || eq == 0) {
                throw ConfigError("override must be key=value: " + kv);
            }
            set(kv.substr(0, eq), kv.substr(eq + 1));
        }
    }

    void validate() const {
        if (train_fraction <= 0.0 || valid_fraction < 0.0 ||
            train_fraction + valid_fraction >= 1.0) {
            throw ConfigError("split fractions must leave room for a test set");
        }
        if (batch_size <= 0 || pretext_epochs < 0 || finetune_max_epochs < 0 ||
            patience <= 0) {
            throw ConfigError("training sizes must be positive");
        }
        if (n_poi <= 0) {
            throw ConfigError("n_poi must be positive");
        }
        anchor_variant_enum();  // throws on bad names
        model_config(1);        // structural checks on a 1-segment dummy
    }

    AnchorVariant anchor_variant_enum() const {
        if (anchor_variant == "movement") return AnchorVariant::kMovement;
        if (anchor_variant == "virtual-only") return AnchorVariant::kVirtualOnly;
        if (anchor_variant == "half-movement") return AnchorVariant::kHalfMovement;
        if (anchor_variant == "control") return AnchorVariant::kControl;
        throw ConfigError("unknown anchor variant: " + anchor_variant);
    }

    ModelConfig model_config(int n_segments) const {
        ModelConfig m;
        m.backend.d_model = d_model;
        m.backend.n_layers = n_layers;
        m.backend.n_heads = n_heads;
        m.backend.context = context;
        m.backend.seed = backend_seed;
        m.backend.readout_gain = readout_gain;
        m.embedder.d_model = d_model;
        m.embedder.n_segments = n_segments;
        m.embedder.conv_kernel = conv_kernel;
        m.embedder.n_virtual_anchors = n_virtual_anchors;
        m.embedder.n_heads = proj_heads;
        m.embedder.anchor_variant = anchor_variant_enum();
        m.embedder.pattern_projection = pattern_projection;
        m.embedder.seed = embed_seed;
        m.lora_rank = lora_rank;
        m.lora_seed = lora_seed;
        m.head_seed = head_seed;
        m.validate();
        return m;
    }

    TrainConfig train_config() const {
        TrainConfig t;
        t.adam.lr = lr;
        t.adam.clip_norm = clip_norm;
        t.pretext_epochs = pretext_epochs;
        t.finetune_max_epochs = finetune_max_epochs;
        t.patience = patience;
        t.batch_size = batch_size;
        t.divergence_limit = divergence_limit;
        t.shuffle_seed = shuffle_seed;
        return t;
    }

    PromptOptions prompt_options() const {
        PromptOptions p;
        p.n_poi = n_poi;
        p.include_poi_part = include_poi;
        p.mask_extra_features = mask_extra_features;
        return p;
    }

    MatchConfig match_config() const {
        MatchConfig m;
        m.sigma_emission_m = sigma_emission_m;
        m.beta_transition_m = beta_transition_m;
        m.candidate_radius_m = candidate_radius_m;
        m.max_candidates = max_candidates;
        return m;
    }

    SynthParams synth_params() const {
        SynthParams s;
        s.grid_rows = grid_rows;
        s.grid_cols = grid_cols;
        s.spacing_m = spacing_m;
        s.n_trajectories = n_trajectories;
        s.noise_sigma_m = noise_sigma_m;
        s.dt_s = sample_dt_s;
        s.seed = synth_seed;
        s.n_random_pois = n_random_pois;
        s.n_depots = n_depots;
        s.depot_trip_fraction = depot_trip_fraction;
        s.min_points = min_points;
        s.max_points = max_points;
        s.min_speed_mps = min_speed_mps;
        s.max_speed_mps = max_speed_mps;
        return s;
    }

    SplitRatios split_ratios() const {
        return {train_fraction, valid_fraction,
                1.0 - train_fraction - valid_fraction};
    }

private:
    static void parse_into(int& field, const std::string& key,
                           const std::string& value) {
        try {
            std::size_t used = 0;
            field = std::stoi(value, &used);
            if (used != value.size()) {
                throw std::invalid_argument(value);
            }
        } catch (const std::exception&) {
            throw ConfigError(key + " expects an integer, got '" + value + "'");
        }
    }
    static void parse_into(double& field, const std::string& key,
                           const std::string& value) {
        try {
            std::size_t used = 0;
            field = std::stod(value, &used);
            if (used != value.size()) {
                throw std::invalid_argument(value);
            }
        } catch (const std::exception&) {
            throw ConfigError(key + " expects a number, got '" + value + "'");
        }
    }
    static void parse_into(std::uint64_t& field, const std::string& key,
                           const std::string& value) {
        try {
            std::size_t used = 0;
            // stoull wraps negative input around instead of failing
            if (value.find('-') != std::string::npos) {
                throw std::invalid_argument(value);
            }
            field = std::stoull(value, &used);
            if (used != value.size()) {
                throw std::invalid_argument(value);
            }
        } catch (const std::exception&) {
            throw ConfigError(key + " expects an unsigned integer, got '" +
                              value + "'");
        }
    }
    static void parse_into(bool& field, const std::string& key,
                           const std::string& value) {
        if (value == "true" || value == "1") {
            field = true;
        } else if (value == "false" || value == "0") {
            field = false;
        } else {
            throw ConfigError(key + " expects true or false, got '" + value + "'");
        }
    }
    static void parse_into(std::string& field, const std::string&,
                           const std::string& value) {
        field = value;
    }
};

// Maps a study variant onto the concrete switches it flips.
inline void apply_ablation(RunConfig& cfg) {
    const std::string& v = cfg.ablation;
    if (v == "full") {
        return;
    }
    if (v == "no-pt") {
        cfg.skip_pretext = true;
    } else if (v == "no-poi") {
        cfg.include_poi = false;
    } else if (v == "no-conv") {
        cfg.conv_kernel = 1;
    } else if (v == "no-psp") {
        cfg.pattern_projection = false;
    } else if (v == "no-m") {
        cfg.anchor_variant = "virtual-only";
    } else if (v == "no-af") {
        cfg.mask_extra_features = true;
    } else if (v == "decrease-m") {
        cfg.anchor_variant = "half-movement";
    } else if (v == "replace-m") {
        cfg.anchor_variant = "control";
    } else {
        throw ConfigError("unknown ablation variant: " + v);
    }
}

}  // namespace trajcogn

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "trajcogn/autograd.hpp"
#include "trajcogn/backend.hpp"
#include "trajcogn/balltree.hpp"
#include "trajcogn/kinematics.hpp"
#include "trajcogn/prompt.hpp"
#include "trajcogn/rng.hpp"
#include "trajcogn/tokenizer.hpp"

namespace trajcogn {

// 30 movement-pattern anchor words: 17 driving behaviors followed by 13
// traveling dynamics. Order is part of the contract; the reduced vocabulary
// takes the first half.
inline const std::vector<std::string>& anchor_words_movement() {
    static const std::vector<std::string> words = {
        "straight",  "turn",      "u-turn",   "brake",    "accelerate",
        "decelerate", "stop",     "overtake", "zigzag",   "swerve",
        "detour",    "slide",     "cruise",   "glide",    "cautious",
        "reckless",  "leisurely",
        "steady",    "smooth",    "rough",    "constant", "dynamic",
        "fast",      "slow",      "rapid",    "rushed",   "erratic",
        "agile",     "stationary", "sluggish"};
    return words;
}

// Control vocabulary with no movement meaning, same size, for the
// anchor-replacement study.
inline const std::vector<std::string>& anchor_words_control() {
    static const std::vector<std::string> words = {
        "purple",  "orange", "crimson", "golden",   "silver",
        "ivory",   "scarlet", "teal",   "maroon",   "beige",
        "salty",   "sweet",  "bitter",  "sour",     "spicy",
        "creamy",  "crunchy", "juicy",  "stale",    "ripe",
        "wooden",  "marble", "velvet",  "glassy",   "papery",
        "woolen",  "leathery", "metallic", "ceramic", "pebbled"};
    return words;
}

enum class AnchorVariant {
    kMovement = 0,   // 30 movement words plus virtual rows
    kVirtualOnly,    // learnable rows only
    kHalfMovement,   // first 15 movement words plus virtual rows
    kControl,        // 30 control adjectives plus virtual rows
};

inline const char* anchor_variant_name(AnchorVariant v) {
    switch (v) {
        case AnchorVariant::kMovement: return "movement";
        case AnchorVariant::kVirtualOnly: return "virtual-only";
        case AnchorVariant::kHalfMovement: return "half-movement";
        case AnchorVariant::kControl: return "control";
    }
    return "?";
}

struct EmbedderConfig {
    int d_model = 64;
    int n_segments = 0;
    int conv_kernel = 5;       // odd window, symmetric in both directions
    int n_virtual_anchors = 15;
    int n_heads = 8;
    AnchorVariant anchor_variant = AnchorVariant::kMovement;
    bool pattern_projection = true;  // false: z_i is e_i unchanged
    std::uint64_t seed = 99;

    int fixed_anchor_count() const {
        switch (anchor_variant) {
            case AnchorVariant::kMovement: return 30;
            case AnchorVariant::kVirtualOnly: return 0;
            case AnchorVariant::kHalfMovement: return 15;
            case AnchorVariant::kControl: return 30;
        }
        return 0;
    }
    int anchor_count() const { return fixed_anchor_count() + n_virtual_anchors; }

    void validate() const {
        if (d_model <= 0 || n_segments <= 0) {
            throw ModelError("embedder needs positive d_model and segment count");
        }
        if (conv_kernel <= 0 || conv_kernel % 2 == 0) {
            throw ModelError("conv kernel must be a positive odd width");
        }
        if (n_virtual_anchors < 0) {
            throw ModelError("virtual anchor count must be non-negative");
        }
        if (pattern_projection) {
            if (n_heads <= 0 || d_model % n_heads != 0) {
                throw ModelError("projection heads must divide d_model");
            }
            if (anchor_count() == 0) {
                throw ModelError("pattern projection needs at least one anchor row");
            }
        }
    }
};

// Row-level provenance for an assembled prompt embedding.
struct RowTag {
    enum class Kind { kText, kPoi, kPoint, kTask };
    PromptPart part = PromptPart::kHead;
    Kind kind = Kind::kText;
    int token_id = -1;     // byte id for text and POI rows
    int point_index = -1;  // trajectory order for point rows
    int poi_index = -1;    // POI list index for POI rows
};

struct PointEmbeddings {
    NodePtr e;                       // n x d, conv plus index tables
    NodePtr z;                       // n x d, after projection (e itself when off)
    std::vector<NodePtr> attention;  // per head, n x anchors
    Matrix features;                 // n x 6 normalized masked conv input
    std::array<bool, kNumFeatureChannels> active_channels{};
};

struct PromptEmbeddings {
    NodePtr z;                 // L x d
    std::vector<RowTag> tags;  // one per row
    std::vector<std::pair<PromptPart, int>> part_offsets;  // first row of each run
    std::vector<NodePtr> attention;  // per head, n_points x anchors
    Matrix point_features;           // n_points x 6, the reconstruction target
    std::array<bool, kNumFeatureChannels> active_channels{};
    std::vector<int> point_rows;     // row of each trajectory point, point order
    std::vector<int> segment_ids;    // per point, classification target
};

// Everything between a prompt and the backend's input matrix: index tables,
// the windowed convolution over continuous channels, anchor-word projection,
// POI and text tokenization, and final assembly with provenance.
class TrajEmbedder {
public:
    TrajEmbedder(const EmbedderConfig& config, const LmBackend& backend)
        : cfg_(config), backend_(&backend) {
        cfg_.validate();
        if (cfg_.d_model != backend.config().d_model) {
            throw ModelError("embedder width differs from backend width");
        }
        const int d = cfg_.d_model;
        Rng rng(cfg_.seed);
        auto gaussian = [&rng](int r, int c) {
            Matrix m(r, c);
            for (auto& v : m.data) {
                v = rng.normal(0.0, 0.02);
            }
            return m;
        };
        seg_table_ = make_param(gaussian(cfg_.n_segments, d));
        dow_table_ = make_param(gaussian(7, d));
        hour_table_ = make_param(gaussian(24, d));
        task_tokens_ = make_param(gaussian(3, d));
        conv_w_ = make_param(gaussian(cfg_.conv_kernel * kNumFeatureChannels, d));
        conv_b_ = make_param(Matrix::zeros(1, d));
        if (cfg_.pattern_projection) {
            if (cfg_.n_virtual_anchors > 0) {
                virtual_anchors_ = make_param(gaussian(cfg_.n_virtual_anchors, d));
            }
            wq_ = make_param(gaussian(d, d));
            bq_ = make_param(Matrix::zeros(1, d));
            wk_ = make_param(gaussian(d, d));
            bk_ = make_param(Matrix::zeros(1, d));
            wv_ = make_param(gaussian(d, d));
            bv_ = make_param(Matrix::zeros(1, d));
            wo_ = make_param(gaussian(d, d));
            bo_ = make_param(Matrix::zeros(1, d));
            mlp_w1_ = make_param(gaussian(d, d));
            mlp_b1_ = make_param(Matrix::zeros(1, d));
            mlp_w2_ = make_param(gaussian(d, d));
            mlp_b2_ = make_param(Matrix::zeros(1, d));
            build_fixed_anchors();
        }
    }

    const EmbedderConfig& config() const { return cfg_; }
    const std::vector<std::string>& anchor_names() const { return anchor_names_; }

    // Registry walk in fixed creation order; the checkpoint format depends
    // on this order being stable.
    template <typename Fn>
    void for_each_param(Fn&& fn) const {
        fn("embed.seg_table", seg_table_);
        fn("embed.dow_table", dow_table_);
        fn("embed.hour_table", hour_table_);
        fn("embed.task_tokens", task_tokens_);
        fn("embed.conv_w", conv_w_);
        fn("embed.conv_b", conv_b_);
        if (virtual_anchors_) {
            fn("embed.anchor_virtual", virtual_anchors_);
        }
        if (cfg_.pattern_projection) {
            fn("proj.wq", wq_);
            fn("proj.bq", bq_);
            fn("proj.wk", wk_);
            fn("proj.bk", bk_);
            fn("proj.wv", wv_);
            fn("proj.bv", bv_);
            fn("proj.wo", wo_);
            fn("proj.bo", bo_);
            fn("proj.mlp_w1", mlp_w1_);
            fn("proj.mlp_b1", mlp_b1_);
            fn("proj.mlp_w2", mlp_w2_);
            fn("proj.mlp_b2", mlp_b2_);
        }
    }

    const NodePtr& task_token_table() const { return task_tokens_; }
    const NodePtr& conv_weight() const { return conv_w_; }
    const NodePtr& virtual_anchor_table() const { return virtual_anchors_; }
    const Matrix& fixed_anchor_matrix() const { return fixed_anchor_values_; }

    // Continuous features plus index tables for the first n_points of a
    // trajectory. Masked channels are zeroed before the convolution sees
    // them; masking time also skips the weekday and hour tables.
    PointEmbeddings embed_points(const EnrichedTrajectory& traj, int n_points,
                                 const NormStats& stats, bool mask_time,
                                 bool mask_extra) const {
        if (n_points < 1 || n_points > static_cast<int>(traj.points.size())) {
            throw ModelError("point range out of bounds for trajectory " + traj.id);
        }
        PointEmbeddings out;
        for (int c = 0; c < kNumFeatureChannels; ++c) {
            out.active_channels[static_cast<std::size_t>(c)] = true;
        }
        if (mask_time) {
            out.active_channels[kChanSpeed] = false;
            out.active_channels[kChanAccel] = false;
            out.active_channels[kChanTimeOffset] = false;
        }
        if (mask_extra) {
            out.active_channels[kChanSpeed] = false;
            out.active_channels[kChanAccel] = false;
            out.active_channels[kChanBearing] = false;
        }

        Matrix feat(n_points, kNumFeatureChannels);
        std::vector<int> seg_ids(static_cast<std::size_t>(n_points));
        std::vector<int> dow_ids(static_cast<std::size_t>(n_points));
        std::vector<int> hour_ids(static_cast<std::size_t>(n_points));
        for (int i = 0; i < n_points; ++i) {
            const auto& p = traj.points[static_cast<std::size_t>(i)];
            const auto f = stats.normalize_point(p);
            for (int c = 0; c < kNumFeatureChannels; ++c) {
                feat.at(i, c) = out.active_channels[static_cast<std::size_t>(c)]
                                    ? f[static_cast<std::size_t>(c)]
                                    : 0.0;
            }
            if (p.segment_id < 0 || p.segment_id >= cfg_.n_segments) {
                throw ModelError("segment id out of table range in trajectory " +
                                 traj.id);
            }
            seg_ids[static_cast<std::size_t>(i)] = p.segment_id;
            dow_ids[static_cast<std::size_t>(i)] = day_of_week_utc(p.t);
            hour_ids[static_cast<std::size_t>(i)] = hour_of_day_utc(p.t);
        }
        out.features = feat;

        // Window unfold: row i holds the k neighbouring feature rows around
        // i, zero outside the trajectory, so the convolution is one matmul.
        const int k = cfg_.conv_kernel;
        const int half = k / 2;
        Matrix unfolded(n_points, k * kNumFeatureChannels);
        for (int i = 0; i < n_points; ++i) {
            for (int j = 0; j < k; ++j) {
                const int src = i + j - half;
                if (src < 0 || src >= n_points) {
                    continue;
                }
                for (int c = 0; c < kNumFeatureChannels; ++c) {
                    unfolded.at(i, j * kNumFeatureChannels + c) = feat.at(src, c);
                }
            }
        }
        NodePtr e = add_bias(matmul(make_constant(std::move(unfolded)), conv_w_),
                             conv_b_);
        e = add(e, gather_rows(seg_table_, std::move(seg_ids)));
        if (!mask_time) {
            e = add(e, gather_rows(dow_table_, std::move(dow_ids)));
            e = add(e, gather_rows(hour_table_, std::move(hour_ids)));
        }
        out.e = e;
        if (cfg_.pattern_projection) {
            auto projected = project(e);
            out.z = projected.first;
            out.attention = std::move(projected.second);
        } else {
            out.z = e;
        }
        return out;
    }

    // Attention from each point embedding into the anchor vocabulary,
    // followed by a two-layer map and a residual back onto the input.
    std::pair<NodePtr, std::vector<NodePtr>> project(const NodePtr& e) const {
        if (!cfg_.pattern_projection) {
            throw ModelError("pattern projection is disabled in this configuration");
        }
        const int d = cfg_.d_model;
        const int head_dim = d / cfg_.n_heads;
        const double att_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
        const NodePtr anchors = anchor_matrix();
        const NodePtr q = add_bias(matmul(e, wq_), bq_);
        const NodePtr k = add_bias(matmul(anchors, wk_), bk_);
        const NodePtr v = add_bias(matmul(anchors, wv_), bv_);
        std::vector<NodePtr> heads;
        std::vector<NodePtr> attention;
        for (int i = 0; i < cfg_.n_heads; ++i) {
            const NodePtr qi = slice_cols(q, i * head_dim, head_dim);
            const NodePtr ki = slice_cols(k, i * head_dim, head_dim);
            const NodePtr vi = slice_cols(v, i * head_dim, head_dim);
            const NodePtr probs = softmax_rows(scale(matmul_nt(qi, ki), att_scale));
            attention.push_back(probs);
            heads.push_back(matmul(probs, vi));
        }
        const NodePtr mixed = add_bias(matmul(concat_cols(heads), wo_), bo_);
        const NodePtr hidden = gelu(add_bias(matmul(mixed, mlp_w1_), mlp_b1_));
        const NodePtr mapped = add_bias(matmul(hidden, mlp_w2_), mlp_b2_);
        return {add(mapped, e), std::move(attention)};
    }

    // Token rows for one POI. The closest POI on each side carries its
    // address followed by its name; the rest carry the name alone.
    NodePtr embed_poi(const Poi& poi, bool with_address,
                      std::vector<int>* token_ids = nullptr) const {
        if (poi.name.empty()) {
            throw ModelError("POI has an empty name");
        }
        std::vector<int> toks;
        if (with_address) {
            toks = tokenize(poi.address);
        }
        const auto name_toks = tokenize(poi.name);
        toks.insert(toks.end(), name_toks.begin(), name_toks.end());
        if (token_ids != nullptr) {
            *token_ids = toks;
        }
        return gather_rows(backend_->wte_node(), std::move(toks));
    }

    NodePtr embed_text(const std::string& text,
                       std::vector<int>* token_ids = nullptr) const {
        const auto toks = tokenize(text);
        if (toks.empty()) {
            throw ModelError("cannot embed empty text");
        }
        if (token_ids != nullptr) {
            *token_ids = toks;
        }
        return gather_rows(backend_->wte_node(), toks);
    }

    NodePtr task_token_row(Task task) const {
        return gather_rows(task_tokens_, {task_token_id(task)});
    }

    // Full prompt to input matrix, rows in prompt order, every row tagged.
    PromptEmbeddings embed_prompt(const TrajectoryPrompt& prompt,
                                  const EnrichedTrajectory& traj,
                                  const std::vector<Poi>& pois,
                                  const NormStats& stats) const {
        PointEmbeddings points =
            embed_points(traj, prompt.n_points, stats, prompt.mask_time_features,
                         prompt.mask_extra_features);
        PromptEmbeddings out;
        out.attention = std::move(points.attention);
        out.point_features = std::move(points.features);
        out.active_channels = points.active_channels;
        out.segment_ids.reserve(static_cast<std::size_t>(prompt.n_points));
        for (int i = 0; i < prompt.n_points; ++i) {
            out.segment_ids.push_back(
                traj.points[static_cast<std::size_t>(i)].segment_id);
        }

        std::vector<NodePtr> blocks;
        int row = 0;
        auto open_part = [&](PromptPart part) {
            if (out.part_offsets.empty() || out.part_offsets.back().first != part) {
                out.part_offsets.emplace_back(part, row);
            }
        };
        for (const auto& item : prompt.items) {
            open_part(item.part);
            switch (item.kind) {
                case PromptItem::Kind::kText: {
                    std::vector<int> toks;
                    blocks.push_back(embed_text(item.text, &toks));
                    for (int t : toks) {
                        out.tags.push_back({item.part, RowTag::Kind::kText, t, -1, -1});
                        ++row;
                    }
                    break;
                }
                case PromptItem::Kind::kPoi: {
                    std::vector<int> toks;
                    blocks.push_back(
                        embed_poi(pois[static_cast<std::size_t>(item.poi_index)],
                                  item.poi_rank == 0, &toks));
                    for (int t : toks) {
                        out.tags.push_back(
                            {item.part, RowTag::Kind::kPoi, t, -1, item.poi_index});
                        ++row;
                    }
                    break;
                }
                case PromptItem::Kind::kPoint: {
                    blocks.push_back(slice_rows(points.z, item.point_index, 1));
                    out.tags.push_back({item.part, RowTag::Kind::kPoint, -1,
                                        item.point_index, -1});
                    out.point_rows.push_back(row);
                    ++row;
                    break;
                }
                case PromptItem::Kind::kTaskToken: {
                    blocks.push_back(task_token_row(prompt.task));
                    out.tags.push_back({item.part, RowTag::Kind::kTask,
                                        task_token_id(prompt.task), -1, -1});
                    ++row;
                    break;
                }
            }
        }
        out.z = concat_rows(blocks);
        const int limit = backend_->config().context;
        if (out.z->value.rows > limit) {
            throw ModelError("prompt needs " + std::to_string(out.z->value.rows) +
                             " rows but the backend context is " +
                             std::to_string(limit));
        }
        return out;
    }

    // Anchor matrix: frozen word rows stacked over trainable virtual rows.
    NodePtr anchor_matrix() const {
        if (!cfg_.pattern_projection) {
            throw ModelError("no anchors without pattern projection");
        }
        if (fixed_anchors_ && virtual_anchors_) {
            return concat_rows({fixed_anchors_, virtual_anchors_});
        }
        return fixed_anchors_ ? fixed_anchors_ : virtual_anchors_;
    }

private:
    void build_fixed_anchors() {
        std::vector<std::string> words;
        switch (cfg_.anchor_variant) {
            case AnchorVariant::kMovement:
                words = anchor_words_movement();
                break;
            case AnchorVariant::kVirtualOnly:
                break;
            case AnchorVariant::kHalfMovement: {
                const auto& all = anchor_words_movement();
                words.assign(all.begin(), all.begin() + 15);
                break;
            }
            case AnchorVariant::kControl:
                words = anchor_words_control();
                break;
        }
        anchor_names_ = words;
        for (int i = 0; i < cfg_.n_virtual_anchors; ++i) {
            anchor_names_.push_back("virtual_" + std::to_string(i));
        }
        if (words.empty()) {
            return;
        }
        // Each word becomes one row: the mean of its token embeddings, so
        // multi-token words still occupy a single anchor slot.
        const Matrix& wte = backend_->weights().wte;
        Matrix rows(static_cast<int>(words.size()), cfg_.d_model);
        for (std::size_t w = 0; w < words.size(); ++w) {
            const auto toks = tokenize(words[w]);
            for (int tok : toks) {
                for (int c = 0; c < cfg_.d_model; ++c) {
                    rows.at(static_cast<int>(w), c) += wte.at(tok, c);
                }
            }
            for (int c = 0; c < cfg_.d_model; ++c) {
                rows.at(static_cast<int>(w), c) /= static_cast<double>(toks.size());
            }
        }
        fixed_anchor_values_ = rows;
        fixed_anchors_ = make_constant(std::move(rows));
    }

    EmbedderConfig cfg_;
    const LmBackend* backend_;
    NodePtr seg_table_, dow_table_, hour_table_, task_tokens_;
    NodePtr conv_w_, conv_b_;
    NodePtr fixed_anchors_, virtual_anchors_;
    Matrix fixed_anchor_values_;
    std::vector<std::string> anchor_names_;
    NodePtr wq_, bq_, wk_, bk_, wv_, bv_, wo_, bo_;
    NodePtr mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
};

}  // namespace trajcogn

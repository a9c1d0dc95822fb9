#pragma once

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "trajcogn/autograd.hpp"
#include "trajcogn/backend.hpp"
#include "trajcogn/embedder.hpp"
#include "trajcogn/lora.hpp"
#include "trajcogn/prompt.hpp"
#include "trajcogn/rng.hpp"

namespace trajcogn {

// Two fully connected layers with a smooth ramp between them.
struct TwoLayerHead {
    NodePtr w1, b1, w2, b2;

    static TwoLayerHead init(int d_in, int d_hidden, int d_out, Rng& rng) {
        auto gaussian = [&rng](int r, int c) {
            Matrix m(r, c);
            for (auto& v : m.data) {
                v = rng.normal(0.0, 0.02);
            }
            return m;
        };
        TwoLayerHead h;
        h.w1 = make_param(gaussian(d_in, d_hidden));
        h.b1 = make_param(Matrix::zeros(1, d_hidden));
        h.w2 = make_param(gaussian(d_hidden, d_out));
        h.b2 = make_param(Matrix::zeros(1, d_out));
        return h;
    }

    NodePtr forward(const NodePtr& x) const {
        return add_bias(matmul(gelu(add_bias(matmul(x, w1), b1)), w2), b2);
    }
};

struct ModelConfig {
    BackendConfig backend;
    EmbedderConfig embedder;
    int lora_rank = 8;
    std::uint64_t lora_seed = 7;
    std::uint64_t head_seed = 11;

    void validate() const {
        backend.validate();
        embedder.validate();
        if (embedder.d_model != backend.d_model) {
            throw ModelError("embedder and backend widths differ");
        }
        if (lora_rank <= 0 || lora_rank > backend.d_model) {
            throw ModelError("lora rank must lie in (0, d_model]");
        }
    }
};

// Advisory lock on a checkpoint directory so two writers cannot interleave.
class DirectoryLock {
public:
    explicit DirectoryLock(const std::string& dir) {
        path_ = dir + "/.lock";
        fd_ = ::open(path_.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) {
            throw TrainError("cannot open lock file " + path_);
        }
        if (::flock(fd_, LOCK_EX) != 0) {
            ::close(fd_);
            throw TrainError("cannot lock " + path_);
        }
    }
    ~DirectoryLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    DirectoryLock(const DirectoryLock&) = delete;
    DirectoryLock& operator=(const DirectoryLock&) = delete;

private:
    std::string path_;
    int fd_ = -1;
};

// The full trainable model around a frozen backend: LoRA deltas, embedder
// parameters, reconstruction heads, and task heads, with a name-ordered
// parameter registry that fixes the checkpoint layout.
class LetModel {
public:
    explicit LetModel(const ModelConfig& config)
        : cfg_(config),
          backend_(init_backend_weights(config.backend)),
          embedder_(config.embedder, backend_) {
        cfg_.validate();
        const int d = cfg_.backend.d_model;
        const int n_segments = cfg_.embedder.n_segments;
        Rng lora_rng(cfg_.lora_seed);
        lora_ = LoraSet::init(cfg_.backend.n_layers, d, cfg_.lora_rank, lora_rng);
        Rng head_rng(cfg_.head_seed);
        seg_head_ = TwoLayerHead::init(d, d, n_segments, head_rng);
        cont_head_ = TwoLayerHead::init(d, d, kNumFeatureChannels, head_rng);
        tte_head_ = TwoLayerHead::init(d, d, 1, head_rng);
        dp_head_ = TwoLayerHead::init(d, d, n_segments, head_rng);
        build_registry();
    }

    const ModelConfig& config() const { return cfg_; }
    const LmBackend& backend() const { return backend_; }
    const TrajEmbedder& embedder() const { return embedder_; }
    const LoraSet& lora() const { return lora_; }
    const TwoLayerHead& seg_head() const { return seg_head_; }
    const TwoLayerHead& cont_head() const { return cont_head_; }
    const TwoLayerHead& tte_head() const { return tte_head_; }
    const TwoLayerHead& dp_head() const { return dp_head_; }

    const std::vector<std::pair<std::string, NodePtr>>& params() const {
        return registry_;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& [name, p] : registry_) {
            n += p->value.data.size();
        }
        return n;
    }

    // Closed-form count the registry must reproduce.
    static std::size_t analytic_param_count(const ModelConfig& cfg) {
        const std::size_t d = static_cast<std::size_t>(cfg.backend.d_model);
        const std::size_t e = static_cast<std::size_t>(cfg.embedder.n_segments);
        const std::size_t r = static_cast<std::size_t>(cfg.lora_rank);
        const std::size_t k = static_cast<std::size_t>(cfg.embedder.conv_kernel);
        const std::size_t layers = static_cast<std::size_t>(cfg.backend.n_layers);
        const std::size_t n_virtual =
            static_cast<std::size_t>(cfg.embedder.n_virtual_anchors);
        std::size_t n = layers * 3 * 2 * r * d;             // LoRA pairs
        n += (e + 7 + 24 + 3) * d;                          // index tables
        n += k * kNumFeatureChannels * d + d;               // conv kernel + bias
        if (cfg.embedder.pattern_projection) {
            if (n_virtual > 0) {
                n += n_virtual * d;                         // virtual anchors
            }
            n += 4 * (d * d + d) + 2 * (d * d + d);         // attention + MLP
        }
        auto head = [d](std::size_t out) { return d * d + d + d * out + out; };
        n += head(e) + head(kNumFeatureChannels);           // reconstruction heads
        n += head(1) + head(e);                             // task heads
        return n;
    }

    // Embedding, encoding, and readout for one prompt.
    PromptEmbeddings embed(const TrajectoryPrompt& prompt,
                           const EnrichedTrajectory& traj,
                           const std::vector<Poi>& pois,
                           const NormStats& stats) const {
        return embedder_.embed_prompt(prompt, traj, pois, stats);
    }
    NodePtr encode(const NodePtr& z) const { return backend_.forward(z, &lora_); }
    NodePtr lm_logits(const NodePtr& h) const { return backend_.lm_logits(h); }

    // Checkpoint directory: one raw little-endian 32-bit float file per
    // registered parameter plus a manifest. `config_blob` lands in the
    // manifest verbatim so a run is reproducible from the directory alone.
    void save_checkpoint(const std::string& dir,
                         const nlohmann::json& config_blob) const {
        ::mkdir(dir.c_str(), 0755);
        DirectoryLock lock(dir);
        nlohmann::json manifest;
        manifest["format_version"] = 1;
        manifest["backend_digest"] = backend_.digest();
        manifest["config"] = config_blob;
        manifest["seeds"] = {{"backend", cfg_.backend.seed},
                             {"embedder", cfg_.embedder.seed},
                             {"lora", cfg_.lora_seed},
                             {"heads", cfg_.head_seed}};
        nlohmann::json params = nlohmann::json::array();
        for (const auto& [name, p] : registry_) {
            params.push_back({{"name", name},
                              {"rows", p->value.rows},
                              {"cols", p->value.cols}});
            write_f32_array(dir + "/" + name + ".f32", p->value);
        }
        manifest["params"] = std::move(params);
        std::ofstream out(dir + "/manifest.json");
        if (!out) {
            throw TrainError("cannot write manifest in " + dir);
        }
        out << manifest.dump(2) << '\n';
    }

    // Loads parameter values into this model. Structure must match: same
    // names, same shapes, same frozen backend.
    void load_checkpoint(const std::string& dir) {
        const nlohmann::json manifest = read_checkpoint_manifest(dir);
        if (manifest.at("backend_digest").get<std::string>() != backend_.digest()) {
            throw ModelError("checkpoint was trained against a different backend");
        }
        const auto& params = manifest.at("params");
        if (params.size() != registry_.size()) {
            throw ModelError("checkpoint parameter list does not match the model");
        }
        for (std::size_t i = 0; i < registry_.size(); ++i) {
            const auto& entry = params[i];
            const auto& [name, p] = registry_[i];
            if (entry.at("name").get<std::string>() != name ||
                entry.at("rows").get<int>() != p->value.rows ||
                entry.at("cols").get<int>() != p->value.cols) {
                throw ModelError("checkpoint entry mismatch at " + name);
            }
            read_f32_array(dir + "/" + name + ".f32", p->value);
        }
    }

    static nlohmann::json read_checkpoint_manifest(const std::string& dir) {
        std::ifstream in(dir + "/manifest.json");
        if (!in) {
            throw ModelError("cannot open checkpoint manifest in " + dir);
        }
        nlohmann::json manifest;
        in >> manifest;
        return manifest;
    }

private:
    void build_registry() {
        for (std::size_t l = 0; l < lora_.layers.size(); ++l) {
            const std::string base = "lora." + std::to_string(l) + ".";
            const auto& lw = lora_.layers[l];
            registry_.emplace_back(base + "a_q", lw.a_q);
            registry_.emplace_back(base + "b_q", lw.b_q);
            registry_.emplace_back(base + "a_k", lw.a_k);
            registry_.emplace_back(base + "b_k", lw.b_k);
            registry_.emplace_back(base + "a_v", lw.a_v);
            registry_.emplace_back(base + "b_v", lw.b_v);
        }
        embedder_.for_each_param([this](const char* name, const NodePtr& p) {
            registry_.emplace_back(name, p);
        });
        auto add_head = [this](const std::string& base, const TwoLayerHead& h) {
            registry_.emplace_back(base + ".w1", h.w1);
            registry_.emplace_back(base + ".b1", h.b1);
            registry_.emplace_back(base + ".w2", h.w2);
            registry_.emplace_back(base + ".b2", h.b2);
        };
        add_head("head.seg", seg_head_);
        add_head("head.cont", cont_head_);
        add_head("head.tte", tte_head_);
        add_head("head.dp", dp_head_);
    }

    static void write_f32_array(const std::string& path, const Matrix& m) {
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw TrainError("cannot write parameter file " + path);
        }
        for (double v : m.data) {
            const float f = static_cast<float>(v);
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof bits);
            char bytes[4] = {static_cast<char>(bits & 0xff),
                             static_cast<char>((bits >> 8) & 0xff),
                             static_cast<char>((bits >> 16) & 0xff),
                             static_cast<char>((bits >> 24) & 0xff)};
            out.write(bytes, 4);
        }
    }

    static void read_f32_array(const std::string& path, Matrix& m) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw ModelError("cannot open parameter file " + path);
        }
        for (double& v : m.data) {
            unsigned char bytes[4];
            if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
                throw ModelError("parameter file truncated: " + path);
            }
            const std::uint32_t bits =
                static_cast<std::uint32_t>(bytes[0]) |
                (static_cast<std::uint32_t>(bytes[1]) << 8) |
                (static_cast<std::uint32_t>(bytes[2]) << 16) |
                (static_cast<std::uint32_t>(bytes[3]) << 24);
            float f;
            std::memcpy(&f, &bits, sizeof f);
            v = static_cast<double>(f);
        }
        char extra;
        if (in.read(&extra, 1)) {
            throw ModelError("parameter file has trailing bytes: " + path);
        }
    }

    ModelConfig cfg_;
    LmBackend backend_;
    TrajEmbedder embedder_;
    LoraSet lora_;
    TwoLayerHead seg_head_, cont_head_, tte_head_, dp_head_;
    std::vector<std::pair<std::string, NodePtr>> registry_;
};

}  // namespace trajcogn

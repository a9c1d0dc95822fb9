#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "trajcogn/autograd.hpp"
#include "trajcogn/lora.hpp"
#include "trajcogn/rng.hpp"
#include "trajcogn/sha256.hpp"
#include "trajcogn/tokenizer.hpp"

namespace trajcogn {

struct BackendConfig {
    int vocab = kByteVocabSize;
    int d_model = 64;
    int n_layers = 2;
    int n_heads = 4;
    int context = 512;
    std::uint64_t seed = 1234;
    // Final-norm gain at init. A trained language model ends up with a large
    // calibrated readout norm; 1.0 keeps the raw random-init behaviour, while
    // small test backends need a bigger value before the tied output head can
    // produce confident byte logits at all (with sigma 0.02 embeddings the
    // logit range is bounded by roughly 0.02 * d_model * gain).
    double readout_gain = 1.0;

    void validate() const {
        if (vocab <= 0 || d_model <= 0 || n_layers <= 0 || n_heads <= 0 ||
            context <= 0) {
            throw ModelError("backend sizes must be positive");
        }
        if (readout_gain <= 0.0) {
            throw ModelError("readout_gain must be positive");
        }
        if (d_model % n_heads != 0) {
            throw ModelError("d_model must be divisible by n_heads");
        }
    }
};

struct LayerWeights {
    Matrix ln1_gain, ln1_bias;
    Matrix wq, bq, wk, bk, wv, bv, wo, bo;
    Matrix ln2_gain, ln2_bias;
    Matrix ffn_w1, ffn_b1, ffn_w2, ffn_b2;
};

struct BackendWeights {
    BackendConfig config;
    Matrix wte;  // vocab x d token embeddings, also the tied output head
    Matrix wpe;  // context x d learned positions, added inside forward
    std::vector<LayerWeights> layers;
    Matrix lnf_gain, lnf_bias;
};

// Deterministic random initialization: projection weights N(0, 0.02), biases
// zero, layer norms at identity. The draw order is fixed, so one seed pins
// every parameter.
inline BackendWeights init_backend_weights(const BackendConfig& config) {
    config.validate();
    Rng rng(config.seed);
    auto gaussian = [&rng](int r, int c) {
        Matrix m(r, c);
        for (auto& v : m.data) {
            v = rng.normal(0.0, 0.02);
        }
        return m;
    };
    BackendWeights w;
    w.config = config;
    const int d = config.d_model;
    w.wte = gaussian(config.vocab, d);
    w.wpe = gaussian(config.context, d);
    for (int l = 0; l < config.n_layers; ++l) {
        LayerWeights layer;
        layer.ln1_gain = Matrix::filled(1, d, 1.0);
        layer.ln1_bias = Matrix::zeros(1, d);
        layer.wq = gaussian(d, d);
        layer.bq = Matrix::zeros(1, d);
        layer.wk = gaussian(d, d);
        layer.bk = Matrix::zeros(1, d);
        layer.wv = gaussian(d, d);
        layer.bv = Matrix::zeros(1, d);
        layer.wo = gaussian(d, d);
        layer.bo = Matrix::zeros(1, d);
        layer.ln2_gain = Matrix::filled(1, d, 1.0);
        layer.ln2_bias = Matrix::zeros(1, d);
        layer.ffn_w1 = gaussian(d, 4 * d);
        layer.ffn_b1 = Matrix::zeros(1, 4 * d);
        layer.ffn_w2 = gaussian(4 * d, d);
        layer.ffn_b2 = Matrix::zeros(1, d);
        w.layers.push_back(std::move(layer));
    }
    w.lnf_gain = Matrix::filled(1, d, config.readout_gain);
    w.lnf_bias = Matrix::zeros(1, d);
    return w;
}

// Frozen causal transformer. All weights live in constant graph nodes; the
// only trainable parameters that ever touch the forward pass arrive from the
// outside as a LoraSet.
class LmBackend {
public:
    explicit LmBackend(BackendWeights weights) : w_(std::move(weights)) {
        w_.config.validate();
        wte_node_ = make_constant(w_.wte);
        wpe_node_ = make_constant(w_.wpe);
        for (const auto& layer : w_.layers) {
            LayerNodes nodes;
            nodes.ln1_gain = make_constant(layer.ln1_gain);
            nodes.ln1_bias = make_constant(layer.ln1_bias);
            nodes.wq = make_constant(layer.wq);
            nodes.bq = make_constant(layer.bq);
            nodes.wk = make_constant(layer.wk);
            nodes.bk = make_constant(layer.bk);
            nodes.wv = make_constant(layer.wv);
            nodes.bv = make_constant(layer.bv);
            nodes.wo = make_constant(layer.wo);
            nodes.bo = make_constant(layer.bo);
            nodes.ln2_gain = make_constant(layer.ln2_gain);
            nodes.ln2_bias = make_constant(layer.ln2_bias);
            nodes.ffn_w1 = make_constant(layer.ffn_w1);
            nodes.ffn_b1 = make_constant(layer.ffn_b1);
            nodes.ffn_w2 = make_constant(layer.ffn_w2);
            nodes.ffn_b2 = make_constant(layer.ffn_b2);
            layer_nodes_.push_back(std::move(nodes));
        }
        lnf_gain_ = make_constant(w_.lnf_gain);
        lnf_bias_ = make_constant(w_.lnf_bias);
        digest_ = compute_digest(w_);
    }

    const BackendConfig& config() const { return w_.config; }
    const BackendWeights& weights() const { return w_; }
    const NodePtr& wte_node() const { return wte_node_; }

    // Fingerprint of every frozen parameter, in registry order.
    const std::string& digest() const { return digest_; }

    static std::string compute_digest(const BackendWeights& w) {
        Sha256 h;
        h.update(w.wte.data);
        h.update(w.wpe.data);
        for (const auto& layer : w.layers) {
            h.update(layer.ln1_gain.data);
            h.update(layer.ln1_bias.data);
            h.update(layer.wq.data);
            h.update(layer.bq.data);
            h.update(layer.wk.data);
            h.update(layer.bk.data);
            h.update(layer.wv.data);
            h.update(layer.bv.data);
            h.update(layer.wo.data);
            h.update(layer.bo.data);
            h.update(layer.ln2_gain.data);
            h.update(layer.ln2_bias.data);
            h.update(layer.ffn_w1.data);
            h.update(layer.ffn_b1.data);
            h.update(layer.ffn_w2.data);
            h.update(layer.ffn_b2.data);
        }
        h.update(w.lnf_gain.data);
        h.update(w.lnf_bias.data);
        return h.hex_digest();
    }

    // Hidden states for a sequence of input embeddings (rows are positions).
    // Pre-norm blocks with causal attention; positional rows are added here.
    NodePtr forward(const NodePtr& z, const LoraSet* lora = nullptr) const {
        const int length = z->value.rows;
        const int d = w_.config.d_model;
        if (z->value.cols != d) {
            throw ModelError("forward: embedding width mismatch");
        }
        if (length > w_.config.context) {
            throw ModelError("forward: sequence of " + std::to_string(length) +
                             " exceeds context " + std::to_string(w_.config.context));
        }
        if (lora != nullptr &&
            lora->layers.size() != static_cast<std::size_t>(w_.config.n_layers)) {
            throw ModelError("forward: lora layer count mismatch");
        }
        const int n_heads = w_.config.n_heads;
        const int head_dim = d / n_heads;
        const double att_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

        NodePtr x = add(z, slice_rows(wpe_node_, 0, length));
        for (std::size_t l = 0; l < layer_nodes_.size(); ++l) {
            const auto& n = layer_nodes_[l];
            const NodePtr h = layer_norm(x, n.ln1_gain, n.ln1_bias);
            NodePtr q = add_bias(matmul(h, n.wq), n.bq);
            NodePtr k = add_bias(matmul(h, n.wk), n.bk);
            NodePtr v = add_bias(matmul(h, n.wv), n.bv);
            if (lora != nullptr) {
                const auto& lw = lora->layers[l];
                q = add(q, lora_delta(h, lw.a_q, lw.b_q));
                k = add(k, lora_delta(h, lw.a_k, lw.b_k));
                v = add(v, lora_delta(h, lw.a_v, lw.b_v));
            }
            std::vector<NodePtr> head_outputs;
            for (int i = 0; i < n_heads; ++i) {
                const NodePtr qi = slice_cols(q, i * head_dim, head_dim);
                const NodePtr ki = slice_cols(k, i * head_dim, head_dim);
                const NodePtr vi = slice_cols(v, i * head_dim, head_dim);
                const NodePtr scores = scale(matmul_nt(qi, ki), att_scale);
                const NodePtr probs = softmax_rows(scores, /*causal=*/true);
                head_outputs.push_back(matmul(probs, vi));
            }
            const NodePtr att = concat_cols(head_outputs);
            x = add(x, add_bias(matmul(att, n.wo), n.bo));
            const NodePtr h2 = layer_norm(x, n.ln2_gain, n.ln2_bias);
            const NodePtr inner = gelu(add_bias(matmul(h2, n.ffn_w1), n.ffn_b1));
            x = add(x, add_bias(matmul(inner, n.ffn_w2), n.ffn_b2));
        }
        return layer_norm(x, lnf_gain_, lnf_bias_);
    }

    // Token logits via the tied head: h * WTE^T, no bias.
    NodePtr lm_logits(const NodePtr& h) const { return matmul_nt(h, wte_node_); }

private:
    struct LayerNodes {
        NodePtr ln1_gain, ln1_bias;
        NodePtr wq, bq, wk, bk, wv, bv, wo, bo;
        NodePtr ln2_gain, ln2_bias;
        NodePtr ffn_w1, ffn_b1, ffn_w2, ffn_b2;
    };

    BackendWeights w_;
    NodePtr wte_node_, wpe_node_;
    std::vector<LayerNodes> layer_nodes_;
    NodePtr lnf_gain_, lnf_bias_;
    std::string digest_;
};

// Last row of the hidden states: the position every task reads from.
inline Matrix h_task(const Matrix& hidden) {
    if (hidden.rows == 0) {
        throw ModelError("h_task: empty hidden state");
    }
    Matrix out(1, hidden.cols);
    for (int c = 0; c < hidden.cols; ++c) {
        out.at(0, c) = hidden.at(hidden.rows - 1, c);
    }
    return out;
}

inline NodePtr h_task(const NodePtr& hidden) {
    return slice_rows(hidden, hidden->value.rows - 1, 1);
}

}  // namespace trajcogn

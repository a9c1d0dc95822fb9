#pragma once

#include <cstdint>
#include <vector>

#include "trajcogn/autograd.hpp"
#include "trajcogn/rng.hpp"

namespace trajcogn {

// Low-rank adapters for the query/key/value projections of one attention
// layer. In row convention the delta path is y += (x * a) * b, so b = 0 makes
// a fresh adapter an exact no-op while a carries small Gaussian noise.
struct LoraLayer {
    NodePtr a_q, b_q;
    NodePtr a_k, b_k;
    NodePtr a_v, b_v;
};

struct LoraSet {
    int rank = 8;
    std::vector<LoraLayer> layers;

    static LoraSet init(int n_layers, int d_model, int rank, Rng& rng) {
        if (rank <= 0 || rank > d_model) {
            throw ModelError("lora rank must be in (0, d_model]");
        }
        LoraSet set;
        set.rank = rank;
        auto gaussian = [&rng](int r, int c) {
            Matrix m(r, c);
            for (auto& v : m.data) {
                v = rng.normal(0.0, 0.02);
            }
            return make_param(std::move(m));
        };
        for (int l = 0; l < n_layers; ++l) {
            LoraLayer layer;
            layer.a_q = gaussian(d_model, rank);
            layer.b_q = make_param(Matrix::zeros(rank, d_model));
            layer.a_k = gaussian(d_model, rank);
            layer.b_k = make_param(Matrix::zeros(rank, d_model));
            layer.a_v = gaussian(d_model, rank);
            layer.b_v = make_param(Matrix::zeros(rank, d_model));
            set.layers.push_back(std::move(layer));
        }
        return set;
    }
};

// x * (a b) via the factored path.
inline NodePtr lora_delta(const NodePtr& x, const NodePtr& a, const NodePtr& b) {
    return matmul(matmul(x, a), b);
}

}  // namespace trajcogn

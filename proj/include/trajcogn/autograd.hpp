#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "trajcogn/errors.hpp"

namespace trajcogn {

// Dense row-major matrix of doubles. Everything model-side runs in double:
// the determinism and oracle-agreement contracts are much easier to meet
// without float rounding in the way, and the models here are tiny.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}
    Matrix(int r, int c, std::vector<double> d) : rows(r), cols(c), data(std::move(d)) {
        if (data.size() != static_cast<std::size_t>(r) * c) {
            throw ModelError("matrix data size mismatch");
        }
    }

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return data.size(); }

    static Matrix zeros(int r, int c) { return Matrix(r, c); }
    static Matrix filled(int r, int c, double v) {
        Matrix m(r, c);
        std::fill(m.data.begin(), m.data.end(), v);
        return m;
    }
    static Matrix row(std::initializer_list<double> values) {
        Matrix m(1, static_cast<int>(values.size()));
        std::copy(values.begin(), values.end(), m.data.begin());
        return m;
    }
};

class Node;
using NodePtr = std::shared_ptr<Node>;

// One vertex of the dynamic computation graph. Gradients accumulate into
// `grad` during the backward sweep; `backward_fn` pushes this node's gradient
// to its parents.
class Node {
public:
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.rows != value.rows || grad.cols != value.cols) {
            grad = Matrix::zeros(value.rows, value.cols);
        }
    }
};

inline NodePtr make_constant(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = false;
    return n;
}

inline NodePtr make_param(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return n;
}

namespace detail {

inline NodePtr make_op(Matrix value, std::vector<NodePtr> parents,
                       std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents) {
        n->requires_grad = n->requires_grad || p->requires_grad;
    }
    if (n->requires_grad) {
        n->backward_fn = std::move(backward_fn);
    }
    return n;
}

inline void check_same_shape(const NodePtr& a, const NodePtr& b, const char* op) {
    if (a->value.rows != b->value.rows || a->value.cols != b->value.cols) {
        throw ModelError(std::string(op) + ": shape mismatch " +
                         std::to_string(a->value.rows) + "x" +
                         std::to_string(a->value.cols) + " vs " +
                         std::to_string(b->value.rows) + "x" +
                         std::to_string(b->value.cols));
    }
}

}  // namespace detail

inline NodePtr add(const NodePtr& a, const NodePtr& b) {
    detail::check_same_shape(a, b, "add");
    Matrix out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] += b->value.data[i];
    }
    return detail::make_op(std::move(out), {a, b}, [](Node& self) {
        for (int side = 0; side < 2; ++side) {
            auto& p = self.parents[static_cast<std::size_t>(side)];
            if (!p->requires_grad) {
                continue;
            }
            p->ensure_grad();
            for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
                p->grad.data[i] += self.grad.data[i];
            }
        }
    });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
    detail::check_same_shape(a, b, "sub");
    Matrix out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] -= b->value.data[i];
    }
    return detail::make_op(std::move(out), {a, b}, [](Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
                pa->grad.data[i] += self.grad.data[i];
            }
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
                pb->grad.data[i] -= self.grad.data[i];
            }
        }
    });
}

inline NodePtr hadamard(const NodePtr& a, const NodePtr& b) {
    detail::check_same_shape(a, b, "hadamard");
    Matrix out = a->value;
    for (std::size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] *= b->value.data[i];
    }
    return detail::make_op(std::move(out), {a, b}, [](Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
                pa->grad.data[i] += self.grad.data[i] * pb->value.data[i];
            }
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
                pb->grad.data[i] += self.grad.data[i] * pa->value.data[i];
            }
        }
    });
}

inline NodePtr scale(const NodePtr& a, double s) {
    Matrix out = a->value;
    for (auto& v : out.data) {
        v *= s;
    }
    return detail::make_op(std::move(out), {a}, [s](Node& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
            p->grad.data[i] += self.grad.data[i] * s;
        }
    });
}

// Adds a 1 x C bias row to every row of a.
inline NodePtr add_bias(const NodePtr& a, const NodePtr& bias) {
    if (bias->value.rows != 1 || bias->value.cols != a->value.cols) {
        throw ModelError("add_bias: bias must be 1 x cols");
    }
    Matrix out = a->value;
    for (int r = 0; r < out.rows; ++r) {
        for (int c = 0; c < out.cols; ++c) {
            out.at(r, c) += bias->value.at(0, c);
        }
    }
    return detail::make_op(std::move(out), {a, bias}, [](Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
                pa->grad.data[i] += self.grad.data[i];
            }
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (int r = 0; r < self.grad.rows; ++r) {
                for (int c = 0; c < self.grad.cols; ++c) {
                    pb->grad.at(0, c) += self.grad.at(r, c);
                }
            }
        }
    });
}

inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
    if (a->value.cols != b->value.rows) {
        throw ModelError("matmul: inner dimension mismatch");
    }
    const int n = a->value.rows, k = a->value.cols, m = b->value.cols;
    Matrix out(n, m);
    for (int i = 0; i < n; ++i) {
        for (int p = 0; p < k; ++p) {
            const double av = a->value.at(i, p);
            if (av == 0.0) {
                continue;
            }
            for (int j = 0; j < m; ++j) {
                out.at(i, j) += av * b->value.at(p, j);
            }
        }
    }
    return detail::make_op(std::move(out), {a, b}, [](Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const Matrix& g = self.grad;
        if (pa->requires_grad) {  // dA = G * B^T
            pa->ensure_grad();
            for (int i = 0; i < pa->grad.rows; ++i) {
                for (int j = 0; j < g.cols; ++j) {
                    const double gv = g.at(i, j);
                    if (gv == 0.0) {
                        continue;
                    }
                    for (int p = 0; p < pa->grad.cols; ++p) {
                        pa->grad.at(i, p) += gv * pb->value.at(p, j);
                    }
                }
            }
        }
        if (pb->requires_grad) {  // dB = A^T * G
            pb->ensure_grad();
            for (int i = 0; i < pa->value.rows; ++i) {
                for (int p = 0; p < pb->grad.rows; ++p) {
                    const double av = pa->value.at(i, p);
                    if (av == 0.0) {
                        continue;
                    }
                    for (int j = 0; j < g.cols; ++j) {
                        pb->grad.at(p, j) += av * g.at(i, j);
                    }
                }
            }
        }
    });
}

// a * b^T without materializing the transpose.
inline NodePtr matmul_nt(const NodePtr& a, const NodePtr& b) {
    if (a->value.cols != b->value.cols) {
        throw ModelError("matmul_nt: inner dimension mismatch");
    }
    const int n = a->value.rows, k = a->value.cols, m = b->value.rows;
    Matrix out(n, m);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                acc += a->value.at(i, p) * b->value.at(j, p);
            }
            out.at(i, j) = acc;
        }
    }
    return detail::make_op(std::move(out), {a, b}, [](Node& self) {
        auto& pa = self.parents[0];
        auto& pb = self.parents[1];
        const Matrix& g = self.grad;
        if (pa->requires_grad) {  // dA = G * B
            pa->ensure_grad();
            for (int i = 0; i < pa->grad.rows; ++i) {
                for (int j = 0; j < g.cols; ++j) {
                    const double gv = g.at(i, j);
                    if (gv == 0.0) {
                        continue;
                    }
                    for (int p = 0; p < pa->grad.cols; ++p) {
                        pa->grad.at(i, p) += gv * pb->value.at(j, p);
                    }
                }
            }
        }
        if (pb->requires_grad) {  // dB = G^T * A
            pb->ensure_grad();
            for (int i = 0; i < pa->value.rows; ++i) {
                for (int j = 0; j < pb->grad.rows; ++j) {
                    const double gv = g.at(i, j);
                    if (gv == 0.0) {
                        continue;
                    }
                    for (int p = 0; p < pb->grad.cols; ++p) {
                        pb->grad.at(j, p) += gv * pa->value.at(i, p);
                    }
                }
            }
        }
    });
}

inline NodePtr concat_rows(const std::vector<NodePtr>& parts) {
    if (parts.empty()) {
        throw ModelError("concat_rows: no parts");
    }
    const int cols = parts.front()->value.cols;
    int rows = 0;
    for (const auto& p : parts) {
        if (p->value.cols != cols) {
            throw ModelError("concat_rows: column mismatch");
        }
        rows += p->value.rows;
    }
    Matrix out(rows, cols);
    int r0 = 0;
    for (const auto& p : parts) {
        std::copy(p->value.data.begin(), p->value.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(r0) * cols);
        r0 += p->value.rows;
    }
    return detail::make_op(std::move(out), parts, [](Node& self) {
        int r0 = 0;
        const int cols = self.value.cols;
        for (auto& p : self.parents) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (std::size_t i = 0; i < p->grad.data.size(); ++i) {
                    p->grad.data[i] +=
                        self.grad.data[static_cast<std::size_t>(r0) * cols + i];
                }
            }
            r0 += p->value.rows;
        }
    });
}

inline NodePtr slice_rows(const NodePtr& a, int begin, int count) {
    if (begin < 0 || count < 0 || begin + count > a->value.rows) {
        throw ModelError("slice_rows: range out of bounds");
    }
    Matrix out(count, a->value.cols);
    std::copy(a->value.data.begin() + static_cast<std::ptrdiff_t>(begin) * a->value.cols,
              a->value.data.begin() +
                  static_cast<std::ptrdiff_t>(begin + count) * a->value.cols,
              out.data.begin());
    return detail::make_op(std::move(out), {a}, [begin](Node& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        const int cols = self.value.cols;
        for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
            p->grad.data[static_cast<std::size_t>(begin) * cols + i] += self.grad.data[i];
        }
    });
}

inline NodePtr concat_cols(const std::vector<NodePtr>& parts) {
    if (parts.empty()) {
        throw ModelError("concat_cols: no parts");
    }
    const int rows = parts.front()->value.rows;
    int cols = 0;
    for (const auto& p : parts) {
        if (p->value.rows != rows) {
            throw ModelError("concat_cols: row mismatch");
        }
        cols += p->value.cols;
    }
    Matrix out(rows, cols);
    int c0 = 0;
    for (const auto& p : parts) {
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < p->value.cols; ++c) {
                out.at(r, c0 + c) = p->value.at(r, c);
            }
        }
        c0 += p->value.cols;
    }
    return detail::make_op(std::move(out), parts, [](Node& self) {
        int c0 = 0;
        for (auto& p : self.parents) {
            if (p->requires_grad) {
                p->ensure_grad();
                for (int r = 0; r < p->grad.rows; ++r) {
                    for (int c = 0; c < p->grad.cols; ++c) {
                        p->grad.at(r, c) += self.grad.at(r, c0 + c);
                    }
                }
            }
            c0 += p->value.cols;
        }
    });
}

inline NodePtr slice_cols(const NodePtr& a, int begin, int count) {
    if (begin < 0 || count < 0 || begin + count > a->value.cols) {
        throw ModelError("slice_cols: range out of bounds");
    }
    Matrix out(a->value.rows, count);
    for (int r = 0; r < out.rows; ++r) {
        for (int c = 0; c < count; ++c) {
            out.at(r, c) = a->value.at(r, begin + c);
        }
    }
    return detail::make_op(std::move(out), {a}, [begin](Node& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (int r = 0; r < self.grad.rows; ++r) {
            for (int c = 0; c < self.grad.cols; ++c) {
                p->grad.at(r, begin + c) += self.grad.at(r, c);
            }
        }
    });
}

// Rows of `table` selected by index; the backward pass scatter-adds, so a row
// used several times accumulates every contribution.
inline NodePtr gather_rows(const NodePtr& table, std::vector<int> indices) {
    Matrix out(static_cast<int>(indices.size()), table->value.cols);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int idx = indices[i];
        if (idx < 0 || idx >= table->value.rows) {
            throw ModelError("gather_rows: index out of range");
        }
        for (int c = 0; c < table->value.cols; ++c) {
            out.at(static_cast<int>(i), c) = table->value.at(idx, c);
        }
    }
    return detail::make_op(std::move(out), {table},
                           [indices = std::move(indices)](Node& self) {
                               auto& p = self.parents[0];
                               p->ensure_grad();
                               for (std::size_t i = 0; i < indices.size(); ++i) {
                                   for (int c = 0; c < self.grad.cols; ++c) {
                                       p->grad.at(indices[i], c) +=
                                           self.grad.at(static_cast<int>(i), c);
                                   }
                               }
                           });
}

// Row-wise softmax; with `causal` set, position r attends only to columns
// <= r (rows and columns must then agree in count).
inline NodePtr softmax_rows(const NodePtr& a, bool causal = false) {
    if (causal && a->value.rows != a->value.cols) {
        throw ModelError("softmax_rows: causal mask needs a square matrix");
    }
    Matrix out(a->value.rows, a->value.cols);
    for (int r = 0; r < out.rows; ++r) {
        const int limit = causal ? r + 1 : out.cols;
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < limit; ++c) {
            mx = std::max(mx, a->value.at(r, c));
        }
        double denom = 0.0;
        for (int c = 0; c < limit; ++c) {
            denom += std::exp(a->value.at(r, c) - mx);
        }
        for (int c = 0; c < limit; ++c) {
            out.at(r, c) = std::exp(a->value.at(r, c) - mx) / denom;
        }
        // columns past the limit stay exactly zero
    }
    return detail::make_op(std::move(out), {a}, [causal](Node& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        for (int r = 0; r < self.value.rows; ++r) {
            const int limit = causal ? r + 1 : self.value.cols;
            double dot = 0.0;
            for (int c = 0; c < limit; ++c) {
                dot += self.grad.at(r, c) * self.value.at(r, c);
            }
            for (int c = 0; c < limit; ++c) {
                p->grad.at(r, c) +=
                    (self.grad.at(r, c) - dot) * self.value.at(r, c);
            }
        }
    });
}

// Per-row layer normalization with learnable gain and bias (each 1 x C).
inline NodePtr layer_norm(const NodePtr& a, const NodePtr& gain, const NodePtr& bias,
                          double eps = 1e-5) {
    if (gain->value.rows != 1 || gain->value.cols != a->value.cols ||
        bias->value.rows != 1 || bias->value.cols != a->value.cols) {
        throw ModelError("layer_norm: gain/bias must be 1 x cols");
    }
    const int rows = a->value.rows, cols = a->value.cols;
    Matrix out(rows, cols);
    // Normalized activations are needed in backward; stash them in a copy.
    auto xhat = std::make_shared<Matrix>(rows, cols);
    auto inv_sigma = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    for (int r = 0; r < rows; ++r) {
        double mean = 0.0;
        for (int c = 0; c < cols; ++c) {
            mean += a->value.at(r, c);
        }
        mean /= cols;
        double var = 0.0;
        for (int c = 0; c < cols; ++c) {
            const double d = a->value.at(r, c) - mean;
            var += d * d;
        }
        var /= cols;
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_sigma)[static_cast<std::size_t>(r)] = inv;
        for (int c = 0; c < cols; ++c) {
            const double xh = (a->value.at(r, c) - mean) * inv;
            xhat->at(r, c) = xh;
            out.at(r, c) = gain->value.at(0, c) * xh + bias->value.at(0, c);
        }
    }
    return detail::make_op(std::move(out), {a, gain, bias},
                           [xhat, inv_sigma](Node& self) {
        auto& pa = self.parents[0];
        auto& pg = self.parents[1];
        auto& pb = self.parents[2];
        const int rows = self.value.rows, cols = self.value.cols;
        if (pg->requires_grad) {
            pg->ensure_grad();
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < cols; ++c) {
                    pg->grad.at(0, c) += self.grad.at(r, c) * xhat->at(r, c);
                }
            }
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (int r = 0; r < rows; ++r) {
                for (int c = 0; c < cols; ++c) {
                    pb->grad.at(0, c) += self.grad.at(r, c);
                }
            }
        }
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (int r = 0; r < rows; ++r) {
                double mean_w = 0.0, mean_wx = 0.0;
                for (int c = 0; c < cols; ++c) {
                    const double w = self.grad.at(r, c) * pg->value.at(0, c);
                    mean_w += w;
                    mean_wx += w * xhat->at(r, c);
                }
                mean_w /= cols;
                mean_wx /= cols;
                const double inv = (*inv_sigma)[static_cast<std::size_t>(r)];
                for (int c = 0; c < cols; ++c) {
                    const double w = self.grad.at(r, c) * pg->value.at(0, c);
                    pa->grad.at(r, c) +=
                        inv * (w - mean_w - xhat->at(r, c) * mean_wx);
                }
            }
        }
    });
}

// Tanh-form GELU, the variant used by GPT-style feedforward blocks.
inline NodePtr gelu(const NodePtr& a) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    Matrix out = a->value;
    for (auto& v : out.data) {
        v = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
    }
    return detail::make_op(std::move(out), {a}, [](Node& self) {
        constexpr double kC = 0.7978845608028654;
        constexpr double kA = 0.044715;
        auto& p = self.parents[0];
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
            const double x = p->value.data[i];
            const double t = std::tanh(kC * (x + kA * x * x * x));
            const double du = kC * (1.0 + 3.0 * kA * x * x);
            const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
            p->grad.data[i] += self.grad.data[i] * d;
        }
    });
}

inline NodePtr sum_all(const NodePtr& a) {
    double s = 0.0;
    for (double v : a->value.data) {
        s += v;
    }
    Matrix out(1, 1);
    out.at(0, 0) = s;
    return detail::make_op(std::move(out), {a}, [](Node& self) {
        auto& p = self.parents[0];
        p->ensure_grad();
        const double g = self.grad.at(0, 0);
        for (auto& v : p->grad.data) {
            v += g;
        }
    });
}

inline NodePtr mean_all(const NodePtr& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a->value.size()));
}

// Mean cross entropy, computed from logits, over the given (row, class) pairs.
inline NodePtr cross_entropy_rows(const NodePtr& logits, std::vector<int> rows,
                                  std::vector<int> targets) {
    if (rows.size() != targets.size() || rows.empty()) {
        throw ModelError("cross_entropy_rows: rows/targets mismatch or empty");
    }
    const int cols = logits->value.cols;
    double total = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const int r = rows[i];
        const int t = targets[i];
        if (r < 0 || r >= logits->value.rows || t < 0 || t >= cols) {
            throw ModelError("cross_entropy_rows: index out of range");
        }
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < cols; ++c) {
            mx = std::max(mx, logits->value.at(r, c));
        }
        double denom = 0.0;
        for (int c = 0; c < cols; ++c) {
            denom += std::exp(logits->value.at(r, c) - mx);
        }
        total += std::log(denom) + mx - logits->value.at(r, t);
    }
    Matrix out(1, 1);
    out.at(0, 0) = total / static_cast<double>(rows.size());
    return detail::make_op(
        std::move(out), {logits},
        [rows = std::move(rows), targets = std::move(targets)](Node& self) {
            auto& p = self.parents[0];
            p->ensure_grad();
            const int cols = p->value.cols;
            const double g = self.grad.at(0, 0) / static_cast<double>(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const int r = rows[i];
                double mx = -std::numeric_limits<double>::infinity();
                for (int c = 0; c < cols; ++c) {
                    mx = std::max(mx, p->value.at(r, c));
                }
                double denom = 0.0;
                for (int c = 0; c < cols; ++c) {
                    denom += std::exp(p->value.at(r, c) - mx);
                }
                for (int c = 0; c < cols; ++c) {
                    const double soft = std::exp(p->value.at(r, c) - mx) / denom;
                    p->grad.at(r, c) +=
                        g * (soft - (c == targets[i] ? 1.0 : 0.0));
                }
            }
        });
}

// Mean squared error over the entries where mask is nonzero. `target` and
// `mask` are plain data, not graph nodes.
inline NodePtr masked_mse(const NodePtr& pred, Matrix target, Matrix mask) {
    if (pred->value.rows != target.rows || pred->value.cols != target.cols ||
        pred->value.rows != mask.rows || pred->value.cols != mask.cols) {
        throw ModelError("masked_mse: shape mismatch");
    }
    double active = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        if (mask.data[i] != 0.0) {
            const double d = pred->value.data[i] - target.data[i];
            total += d * d;
            active += 1.0;
        }
    }
    if (active == 0.0) {
        throw ModelError("masked_mse: empty mask");
    }
    Matrix out(1, 1);
    out.at(0, 0) = total / active;
    return detail::make_op(std::move(out), {pred},
                           [target = std::move(target), mask = std::move(mask),
                            active](Node& self) {
                               auto& p = self.parents[0];
                               p->ensure_grad();
                               const double g = self.grad.at(0, 0);
                               for (std::size_t i = 0; i < mask.data.size(); ++i) {
                                   if (mask.data[i] != 0.0) {
                                       p->grad.data[i] += g * 2.0 *
                                           (p->value.data[i] - target.data[i]) / active;
                                   }
                               }
                           });
}

// Reverse sweep from a scalar root. Topological order via iterative DFS.
inline void backward(const NodePtr& root) {
    if (root->value.rows != 1 || root->value.cols != 1) {
        throw ModelError("backward: root must be a 1x1 scalar");
    }
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, child] = stack.back();
        if (child < node->parents.size()) {
            Node* next = node->parents[child].get();
            ++child;
            if (next->requires_grad && visited.insert(next).second) {
                stack.push_back({next, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad.at(0, 0) = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward_fn) {
            node->ensure_grad();
            node->backward_fn(*node);
        }
    }
}

}  // namespace trajcogn

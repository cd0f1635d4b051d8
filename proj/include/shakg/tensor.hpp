#pragma once

// Reverse-mode autodiff over dense 2-D matrices of doubles.
// The primitive set is fixed; GRU/GAT/attention cells are compositions.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace shakg {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

namespace detail {
inline thread_local bool grad_enabled = true;
}

// Disables graph recording in scope (rollout forward passes).
struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(detail::grad_enabled) { detail::grad_enabled = false; }
    ~NoGradGuard() { detail::grad_enabled = prev; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};

class Tensor {
public:
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;   // row-major
    std::vector<double> grad;   // same shape as data when requires_grad
    bool requires_grad = false;
    std::string op;                      // producing primitive, empty for leaves
    std::vector<TensorPtr> inputs;       // operand references (DAG)
    std::function<void(Tensor&)> backward_fn;

    Tensor(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    std::size_t size() const { return rows * cols; }
    double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    void make_param() {
        requires_grad = true;
        grad.assign(size(), 0.0);
    }
    void zero_grad() {
        if (requires_grad) std::fill(grad.begin(), grad.end(), 0.0);
    }
};

inline std::string shape_str(const Tensor& t) {
    return std::to_string(t.rows) + "x" + std::to_string(t.cols);
}

[[noreturn]] inline void shape_error(const std::string& kind, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument("tensor_op " + kind + ": shape mismatch " + shape_str(a) +
                                " vs " + shape_str(b));
}

inline TensorPtr tensor(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return std::make_shared<Tensor>(rows, cols, fill);
}

inline TensorPtr tensor_from(std::vector<double> values, std::size_t rows, std::size_t cols) {
    if (values.size() != rows * cols)
        throw std::invalid_argument("tensor_from: " + std::to_string(values.size()) +
                                    " values for shape " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
    auto t = std::make_shared<Tensor>(rows, cols);
    t->data = std::move(values);
    return t;
}

inline TensorPtr column(std::vector<double> values) {
    const std::size_t n = values.size();
    return tensor_from(std::move(values), n, 1);
}

namespace detail {

inline TensorPtr result(std::size_t rows, std::size_t cols, const char* op,
                        std::initializer_list<TensorPtr> ins) {
    auto t = std::make_shared<Tensor>(rows, cols);
    if (grad_enabled) {
        bool rg = false;
        for (const auto& in : ins) rg = rg || in->requires_grad;
        if (rg) {
            t->requires_grad = true;
            t->grad.assign(rows * cols, 0.0);
            t->op = op;
            t->inputs.assign(ins.begin(), ins.end());
        }
    }
    return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives

inline TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
    if (a->cols != b->rows) shape_error("matmul", *a, *b);
    const std::size_t m = a->rows, k = a->cols, n = b->cols;
    auto out = detail::result(m, n, "matmul", {a, b});
    const double* ad = a->data.data();
    const double* bd = b->data.data();
    double* od = out->data.data();
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = od + i * n;
        const double* arow = ad + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = bd + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    if (out->requires_grad) {
        out->backward_fn = [a, b, m, k, n](Tensor& self) {
            const double* g = self.grad.data();
            if (a->requires_grad) {
                double* ga = a->grad.data();
                const double* bd2 = b->data.data();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        const double* grow = g + i * n;
                        const double* brow = bd2 + p * n;
                        for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
                        ga[i * k + p] += acc;
                    }
            }
            if (b->requires_grad) {
                double* gb = b->grad.data();
                const double* ad2 = a->data.data();
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t i = 0; i < m; ++i) {
                        const double av = ad2[i * k + p];
                        if (av == 0.0) continue;
                        const double* grow = g + i * n;
                        double* gbrow = gb + p * n;
                        for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
                    }
            }
        };
    }
    return out;
}

// M (r x c) + v (r x 1) broadcast across columns.
inline TensorPtr add_col(const TensorPtr& m, const TensorPtr& v) {
    if (v->cols != 1 || v->rows != m->rows) shape_error("add-broadcast-column", *m, *v);
    auto out = detail::result(m->rows, m->cols, "add-broadcast-column", {m, v});
    for (std::size_t i = 0; i < m->rows; ++i)
        for (std::size_t j = 0; j < m->cols; ++j)
            out->at(i, j) = m->at(i, j) + v->data[i];
    if (out->requires_grad) {
        out->backward_fn = [m, v](Tensor& self) {
            if (m->requires_grad)
                for (std::size_t i = 0; i < self.size(); ++i) m->grad[i] += self.grad[i];
            if (v->requires_grad)
                for (std::size_t i = 0; i < self.rows; ++i)
                    for (std::size_t j = 0; j < self.cols; ++j)
                        v->grad[i] += self.grad[i * self.cols + j];
        };
    }
    return out;
}

inline TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
    if (a->rows != b->rows || a->cols != b->cols) shape_error("elementwise-add", *a, *b);
    auto out = detail::result(a->rows, a->cols, "elementwise-add", {a, b});
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] + b->data[i];
    if (out->requires_grad) {
        out->backward_fn = [a, b](Tensor& self) {
            if (a->requires_grad)
                for (std::size_t i = 0; i < self.size(); ++i) a->grad[i] += self.grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < self.size(); ++i) b->grad[i] += self.grad[i];
        };
    }
    return out;
}

inline TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
    if (a->rows != b->rows || a->cols != b->cols) shape_error("elementwise-mul", *a, *b);
    auto out = detail::result(a->rows, a->cols, "elementwise-mul", {a, b});
    for (std::size_t i = 0; i < out->size(); ++i) out->data[i] = a->data[i] * b->data[i];
    if (out->requires_grad) {
        out->backward_fn = [a, b](Tensor& self) {
            if (a->requires_grad)
                for (std::size_t i = 0; i < self.size(); ++i)
                    a->grad[i] += self.grad[i] * b->data[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < self.size(); ++i)
                    b->grad[i] += self.grad[i] * a->data[i];
        };
    }
    return out;
}

inline TensorPtr concat_rows(const TensorPtr& a, const TensorPtr& b) {
    if (a->cols != b->cols) shape_error("concat-rows", *a, *b);
    auto out = detail::result(a->rows + b->rows, a->cols, "concat-rows", {a, b});
    std::copy(a->data.begin(), a->data.end(), out->data.begin());
    std::copy(b->data.begin(), b->data.end(), out->data.begin() + a->size());
    if (out->requires_grad) {
        out->backward_fn = [a, b](Tensor& self) {
            if (a->requires_grad)
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += self.grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < b->size(); ++i)
                    b->grad[i] += self.grad[a->size() + i];
        };
    }
    return out;
}

namespace detail {

template <typename F, typename DF>
TensorPtr unary(const TensorPtr& x, const char* op, F f, DF df) {
    auto out = result(x->rows, x->cols, op, {x});
    for (std::size_t i = 0; i < x->size(); ++i) out->data[i] = f(x->data[i]);
    if (out->requires_grad) {
        out->backward_fn = [x, df](Tensor& self) {
            if (!x->requires_grad) return;
            for (std::size_t i = 0; i < self.size(); ++i)
                x->grad[i] += self.grad[i] * df(x->data[i], self.data[i]);
        };
    }
    return out;
}

}  // namespace detail

inline TensorPtr tanh(const TensorPtr& x) {
    return detail::unary(
        x, "tanh", [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

inline TensorPtr sigmoid(const TensorPtr& x) {
    return detail::unary(
        x, "sigmoid", [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

inline TensorPtr leaky_relu(const TensorPtr& x, double slope) {
    return detail::unary(
        x, "leaky-relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
        [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

inline TensorPtr exp(const TensorPtr& x) {
    return detail::unary(
        x, "exp", [](double v) { return std::exp(v); },
        [](double, double y) { return y; });
}

inline TensorPtr log(const TensorPtr& x) {
    for (double v : x->data)
        if (!(v > 0.0) || !std::isfinite(v))
            throw std::domain_error("tensor_op log: non-finite or non-positive input " +
                                    std::to_string(v));
    return detail::unary(
        x, "log", [](double v) { return std::log(v); },
        [](double v, double) { return 1.0 / v; });
}

inline TensorPtr softmax_rows(const TensorPtr& x) {
    auto out = detail::result(x->rows, x->cols, "row-softmax", {x});
    for (std::size_t i = 0; i < x->rows; ++i) {
        const double* xr = x->data.data() + i * x->cols;
        double* yr = out->data.data() + i * x->cols;
        double mx = xr[0];
        for (std::size_t j = 1; j < x->cols; ++j) mx = std::max(mx, xr[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < x->cols; ++j) {
            yr[j] = std::exp(xr[j] - mx);
            s += yr[j];
        }
        for (std::size_t j = 0; j < x->cols; ++j) yr[j] /= s;
    }
    if (out->requires_grad) {
        out->backward_fn = [x](Tensor& self) {
            if (!x->requires_grad) return;
            for (std::size_t i = 0; i < self.rows; ++i) {
                const double* y = self.data.data() + i * self.cols;
                const double* gy = self.grad.data() + i * self.cols;
                double dot = 0.0;
                for (std::size_t j = 0; j < self.cols; ++j) dot += gy[j] * y[j];
                double* gx = x->grad.data() + i * self.cols;
                for (std::size_t j = 0; j < self.cols; ++j) gx[j] += y[j] * (gy[j] - dot);
            }
        };
    }
    return out;
}

inline TensorPtr sum_cols(const TensorPtr& x) {
    auto out = detail::result(x->rows, 1, "sum-columns", {x});
    for (std::size_t i = 0; i < x->rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < x->cols; ++j) s += x->at(i, j);
        out->data[i] = s;
    }
    if (out->requires_grad) {
        out->backward_fn = [x](Tensor& self) {
            if (!x->requires_grad) return;
            for (std::size_t i = 0; i < x->rows; ++i)
                for (std::size_t j = 0; j < x->cols; ++j)
                    x->grad[i * x->cols + j] += self.grad[i];
        };
    }
    return out;
}

inline TensorPtr mean_cols(const TensorPtr& x) {
    if (x->cols == 0) throw std::invalid_argument("tensor_op mean-columns: zero columns");
    auto out = detail::result(x->rows, 1, "mean-columns", {x});
    const double inv = 1.0 / static_cast<double>(x->cols);
    for (std::size_t i = 0; i < x->rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < x->cols; ++j) s += x->at(i, j);
        out->data[i] = s * inv;
    }
    if (out->requires_grad) {
        out->backward_fn = [x, inv](Tensor& self) {
            if (!x->requires_grad) return;
            for (std::size_t i = 0; i < x->rows; ++i)
                for (std::size_t j = 0; j < x->cols; ++j)
                    x->grad[i * x->cols + j] += self.grad[i] * inv;
        };
    }
    return out;
}

// Embedding lookup: selects rows of `table` by index.
inline TensorPtr rows_at(const TensorPtr& table, std::vector<std::size_t> idx) {
    for (std::size_t i : idx)
        if (i >= table->rows)
            throw std::out_of_range("tensor_op row-select: index " + std::to_string(i) +
                                    " out of range for " + shape_str(*table));
    auto out = detail::result(idx.size(), table->cols, "row-select", {table});
    for (std::size_t r = 0; r < idx.size(); ++r)
        std::copy(table->data.begin() + idx[r] * table->cols,
                  table->data.begin() + (idx[r] + 1) * table->cols,
                  out->data.begin() + r * table->cols);
    if (out->requires_grad) {
        out->backward_fn = [table, idx = std::move(idx)](Tensor& self) {
            if (!table->requires_grad) return;
            for (std::size_t r = 0; r < idx.size(); ++r)
                for (std::size_t j = 0; j < self.cols; ++j)
                    table->grad[idx[r] * self.cols + j] += self.grad[r * self.cols + j];
        };
    }
    return out;
}

inline TensorPtr smul(const TensorPtr& x, double s) {
    auto out = detail::result(x->rows, x->cols, "scalar-mul", {x});
    for (std::size_t i = 0; i < x->size(); ++i) out->data[i] = x->data[i] * s;
    if (out->requires_grad) {
        out->backward_fn = [x, s](Tensor& self) {
            if (!x->requires_grad) return;
            for (std::size_t i = 0; i < self.size(); ++i) x->grad[i] += self.grad[i] * s;
        };
    }
    return out;
}

inline TensorPtr transpose(const TensorPtr& x) {
    auto out = detail::result(x->cols, x->rows, "transpose", {x});
    for (std::size_t i = 0; i < x->rows; ++i)
        for (std::size_t j = 0; j < x->cols; ++j) out->at(j, i) = x->at(i, j);
    if (out->requires_grad) {
        out->backward_fn = [x](Tensor& self) {
            if (!x->requires_grad) return;
            for (std::size_t i = 0; i < self.rows; ++i)
                for (std::size_t j = 0; j < self.cols; ++j)
                    x->grad[j * x->cols + i] += self.grad[i * self.cols + j];
        };
    }
    return out;
}

// ---------------------------------------------------------------------------
// Composites (no new backward rules)

inline TensorPtr sub(const TensorPtr& a, const TensorPtr& b) { return add(a, smul(b, -1.0)); }

// Reduce to a 1x1 scalar.
inline TensorPtr sum_all(const TensorPtr& x) {
    auto col = sum_cols(x);                       // r x 1
    auto ones = tensor(1, col->rows, 1.0);        // constant
    return matmul(ones, col);
}

inline TensorPtr mean_all(const TensorPtr& x) {
    return smul(sum_all(x), 1.0 / static_cast<double>(x->size()));
}

// ---------------------------------------------------------------------------
// Backward pass. Gradients accumulate; call zero_grad between optimizer steps.

inline void backward(const TensorPtr& loss) {
    if (loss->rows != 1 || loss->cols != 1)
        throw std::invalid_argument("backward: loss must be 1x1, got " + shape_str(*loss));
    if (!loss->requires_grad)
        throw std::invalid_argument("backward: loss does not require grad");

    std::vector<Tensor*> order;
    std::unordered_set<Tensor*> seen;
    // Iterative post-order DFS; graphs can hold 10^5+ nodes.
    std::vector<std::pair<Tensor*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    seen.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Tensor* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second)
                stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it)
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

}  // namespace shakg

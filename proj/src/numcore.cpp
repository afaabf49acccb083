#include "tsformer/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tsformer/errors.hpp"

namespace tsformer::nc {

namespace detail {
struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;
    bool requires_grad = false;
};
}  // namespace detail

struct TensorAccess {
    static detail::Node& node(const Tensor& t) { return *t.node_; }
    static Tensor make(Shape shape, std::vector<double> values, bool requires_grad) {
        auto n = std::make_shared<detail::Node>();
        n->shape = std::move(shape);
        n->values = std::move(values);
        n->requires_grad = requires_grad;
        return Tensor(std::move(n));
    }
};

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::size_t shape_size(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

// ---------------------------------------------------------------- Tensor

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const auto n = shape_size(shape);
    return TensorAccess::make(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
    if (shape_size(shape) != values.size()) {
        throw ShapeError("tensor shape " + shape_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
    }
    return TensorAccess::make(std::move(shape), std::move(values), requires_grad);
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values, bool requires_grad) {
    return from({rows, cols}, std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value) { return TensorAccess::make({}, {value}, false); }

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->values.size(); }

std::size_t Tensor::rows() const { return rank() == 2 ? shape()[0] : 1; }

std::size_t Tensor::cols() const {
    if (rank() == 0) return 1;
    return shape().back();
}

std::span<const double> Tensor::values() const { return node_->values; }
std::span<double> Tensor::mutable_values() { return node_->values; }

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape()));
    return node_->values[0];
}

double Tensor::at(std::size_t row, std::size_t col) const { return node_->values[row * cols() + col]; }

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() const {
    if (node_->grad.empty()) node_->grad.assign(node_->values.size(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::clone(bool requires_grad) const {
    return TensorAccess::make(node_->shape, node_->values, requires_grad);
}

// ---------------------------------------------------------------- Tape

namespace {
thread_local Tape* g_active_tape = nullptr;
}

void Tape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward) {
    entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(backward)});
}

Tape* Tape::active() noexcept { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) noexcept : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() noexcept : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

void backward(const Tensor& loss, const Tape& tape) {
    if (loss.size() != 1) {
        throw ShapeError("backward requires a scalar loss, got shape " + shape_string(loss.shape()));
    }
    Tensor root = loss;
    root.mutable_grad()[0] += 1.0;
    const auto& entries = tape.entries();
    for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
        if (!it->output.has_grad()) continue;
        it->backward();
    }
}

// ---------------------------------------------------------------- helpers

namespace {

bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
    return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->requires_grad(); });
}

void maybe_record(std::vector<Tensor> inputs, const Tensor& out, Tape::BackwardFn fn) {
    Tape* tape = Tape::active();
    if (tape == nullptr || !out.requires_grad()) return;
    tape->record(std::move(inputs), out, std::move(fn));
}

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected a matrix, got shape " + shape_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

// out[m×n] += a[m×k] · b[k×n]
void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* orow = out + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

// out[m×n] += a[m×k] · b[n×k]ᵀ
void gemm_nt(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            out[i * n + j] += s;
        }
    }
}

// out[k×n] += a[m×k]ᵀ · b[m×n]
void gemm_tn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            double* orow = out + p * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

}  // namespace

// ---------------------------------------------------------------- ops

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul: inner dimensions disagree for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    gemm_nn(a.values().data(), b.values().data(), out.data(), m, k, n);
    Tensor result = Tensor::from({m, n}, std::move(out), any_requires_grad({&a, &b}));
    maybe_record({a, b}, result, [a, b, result, m, k, n]() mutable {
        const double* g = result.grad().data();
        if (a.requires_grad()) gemm_nt(g, b.values().data(), a.mutable_grad().data(), m, n, k);
        if (b.requires_grad()) gemm_tn(a.values().data(), g, b.mutable_grad().data(), m, k, n);
    });
    return result;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul_nt");
    require_matrix(b, "matmul_nt");
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    if (b.cols() != k) {
        throw ShapeError("matmul_nt: inner dimensions disagree for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + "ᵀ");
    }
    std::vector<double> out(m * n, 0.0);
    gemm_nt(a.values().data(), b.values().data(), out.data(), m, k, n);
    Tensor result = Tensor::from({m, n}, std::move(out), any_requires_grad({&a, &b}));
    maybe_record({a, b}, result, [a, b, result, m, k, n]() mutable {
        const double* g = result.grad().data();
        // da[m×k] += g[m×n] · b[n×k];  db[n×k] += gᵀ · a
        if (a.requires_grad()) gemm_nn(g, b.values().data(), a.mutable_grad().data(), m, n, k);
        if (b.requires_grad()) gemm_tn(g, a.values().data(), b.mutable_grad().data(), m, n, k);
    });
    return result;
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m * n);
    const auto v = a.values();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
    Tensor result = Tensor::from({n, m}, std::move(out), a.requires_grad());
    maybe_record({a}, result, [a, result, m, n]() mutable {
        const auto g = result.grad();
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
    return result;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<double> out(a.size());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    Tensor result = Tensor::from(a.shape(), std::move(out), any_requires_grad({&a, &b}));
    maybe_record({a, b}, result, [a, b, result]() mutable {
        const auto g = result.grad();
        for (const Tensor* t : {&a, &b}) {
            if (!t->requires_grad()) continue;
            auto gt = t->mutable_grad();
            for (std::size_t i = 0; i < g.size(); ++i) gt[i] += g[i];
        }
    });
    return result;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<double> out(a.size());
    const auto av = a.values(), bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    Tensor result = Tensor::from(a.shape(), std::move(out), any_requires_grad({&a, &b}));
    maybe_record({a, b}, result, [a, b, result]() mutable {
        const auto g = result.grad();
        if (a.requires_grad()) {
            auto ga = a.mutable_grad();
            const auto bv = b.values();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (b.requires_grad()) {
            auto gb = b.mutable_grad();
            const auto av = a.values();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
    return result;
}

Tensor scale(const Tensor& a, double factor) {
    std::vector<double> out(a.values().begin(), a.values().end());
    for (auto& v : out) v *= factor;
    Tensor result = Tensor::from(a.shape(), std::move(out), a.requires_grad());
    maybe_record({a}, result, [a, result, factor]() mutable {
        const auto g = result.grad();
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += factor * g[i];
    });
    return result;
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    Tensor result = Tensor::from({}, {s}, a.requires_grad());
    maybe_record({a}, result, [a, result]() mutable {
        const double g = result.grad()[0];
        for (auto& v : a.mutable_grad()) v += g;
    });
    return result;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
    require_matrix(a, "slice_rows");
    if (begin + count > a.rows() || count == 0) {
        throw ShapeError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_string(a.shape()));
    }
    const std::size_t n = a.cols();
    const auto v = a.values();
    std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(begin * n),
                            v.begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
    Tensor result = Tensor::from({count, n}, std::move(out), a.requires_grad());
    maybe_record({a}, result, [a, result, begin, n]() mutable {
        const auto g = result.grad();
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
    });
    return result;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
    require_matrix(a, "slice_cols");
    if (begin + count > a.cols() || count == 0) {
        throw ShapeError("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                         ") out of range for " + shape_string(a.shape()));
    }
    const std::size_t m = a.rows(), n = a.cols();
    const auto v = a.values();
    std::vector<double> out(m * count);
    for (std::size_t i = 0; i < m; ++i)
        std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(i * n + begin), count, out.begin() + static_cast<std::ptrdiff_t>(i * count));
    Tensor result = Tensor::from({m, count}, std::move(out), a.requires_grad());
    maybe_record({a}, result, [a, result, begin, count, m, n]() mutable {
        const auto g = result.grad();
        auto ga = a.mutable_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < count; ++j) ga[i * n + begin + j] += g[i * count + j];
    });
    return result;
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t m = parts.front().rows();
    std::size_t total = 0;
    bool grad = false;
    for (const auto& p : parts) {
        require_matrix(p, "concat_cols");
        if (p.rows() != m) {
            throw ShapeError("concat_cols: row mismatch " + shape_string(parts.front().shape()) + " vs " +
                             shape_string(p.shape()));
        }
        total += p.cols();
        grad = grad || p.requires_grad();
    }
    std::vector<double> out(m * total);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const auto v = p.values();
        const std::size_t c = p.cols();
        for (std::size_t i = 0; i < m; ++i)
            std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(i * c), c, out.begin() + static_cast<std::ptrdiff_t>(i * total + offset));
        offset += c;
    }
    Tensor result = Tensor::from({m, total}, std::move(out), grad);
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    maybe_record(inputs, result, [inputs, result, m, total]() mutable {
        const auto g = result.grad();
        std::size_t offset = 0;
        for (auto& p : inputs) {
            const std::size_t c = p.cols();
            if (p.requires_grad()) {
                auto gp = p.mutable_grad();
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + offset + j];
            }
            offset += c;
        }
    });
    return result;
}

Tensor masked_softmax(const Tensor& scores, const Tensor& mask) {
    require_matrix(scores, "masked_softmax");
    require_same_shape(scores, mask, "masked_softmax");
    const std::size_t m = scores.rows(), n = scores.cols();
    const auto s = scores.values();
    const auto mk = mask.values();
    std::vector<double> out(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double row_max = -std::numeric_limits<double>::infinity();
        bool any_open = false;
        for (std::size_t j = 0; j < n; ++j) {
            const double mv = mk[i * n + j];
            if (std::isinf(mv) && mv < 0) continue;
            any_open = true;
            row_max = std::max(row_max, s[i * n + j] + mv);
        }
        if (!any_open) {
            throw DegenerateMaskError("masked_softmax: row " + std::to_string(i) + " of " +
                                      shape_string(scores.shape()) + " is fully masked");
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double mv = mk[i * n + j];
            if (std::isinf(mv) && mv < 0) continue;
            const double e = std::exp(s[i * n + j] + mv - row_max);
            out[i * n + j] = e;
            denom += e;
        }
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= denom;
    }
    Tensor result = Tensor::from({m, n}, std::move(out), scores.requires_grad());
    maybe_record({scores}, result, [scores, result, m, n]() mutable {
        const auto g = result.grad();
        const auto y = result.values();
        auto gs = scores.mutable_grad();
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y[i * n + j];
            for (std::size_t j = 0; j < n; ++j) gs[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
        }
    });
    return result;
}

Tensor elu(const Tensor& x, double alpha) {
    if (!(alpha > 0.0)) throw ConfigError("elu: alpha must be positive");
    const auto v = x.values();
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] > 0.0 ? v[i] : alpha * std::expm1(v[i]);
    Tensor result = Tensor::from(x.shape(), std::move(out), x.requires_grad());
    maybe_record({x}, result, [x, result, alpha]() mutable {
        const auto g = result.grad();
        const auto v = x.values();
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (v[i] > 0.0 ? 1.0 : alpha * std::exp(v[i]));
    });
    return result;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_matrix(x, "linear");
    require_matrix(w, "linear");
    const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
    if (w.rows() != k || b.rank() != 1 || b.size() != n) {
        throw ShapeError("linear: cannot apply weight " + shape_string(w.shape()) + " and bias " +
                         shape_string(b.shape()) + " to input " + shape_string(x.shape()));
    }
    std::vector<double> out(m * n);
    const auto bv = b.values();
    for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), out.begin() + static_cast<std::ptrdiff_t>(i * n));
    gemm_nn(x.values().data(), w.values().data(), out.data(), m, k, n);
    Tensor result = Tensor::from({m, n}, std::move(out), any_requires_grad({&x, &w, &b}));
    maybe_record({x, w, b}, result, [x, w, b, result, m, k, n]() mutable {
        const double* g = result.grad().data();
        if (x.requires_grad()) gemm_nt(g, w.values().data(), x.mutable_grad().data(), m, n, k);
        if (w.requires_grad()) gemm_tn(x.values().data(), g, w.mutable_grad().data(), m, k, n);
        if (b.requires_grad()) {
            auto gb = b.mutable_grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
        }
    });
    return result;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    require_matrix(x, "layer_norm");
    const std::size_t m = x.rows(), d = x.cols();
    if (gamma.rank() != 1 || gamma.size() != d || beta.rank() != 1 || beta.size() != d) {
        throw ShapeError("layer_norm: affine terms " + shape_string(gamma.shape()) + "/" +
                         shape_string(beta.shape()) + " do not fit input " + shape_string(x.shape()));
    }
    if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
    const auto v = x.values();
    const auto gv = gamma.values();
    const auto bv = beta.values();
    std::vector<double> out(m * d);
    std::vector<double> normalized(m * d);
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += v[i * d + j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double c = v[i * d + j] - mean;
            var += c * c;
        }
        var /= static_cast<double>(d);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (v[i * d + j] - mean) * inv_std[i];
            normalized[i * d + j] = xh;
            out[i * d + j] = gv[j] * xh + bv[j];
        }
    }
    Tensor result = Tensor::from({m, d}, std::move(out), any_requires_grad({&x, &gamma, &beta}));
    maybe_record({x, gamma, beta}, result,
                 [x, gamma, beta, result, normalized = std::move(normalized), inv_std = std::move(inv_std), m,
                  d]() mutable {
                     const auto g = result.grad();
                     const auto gv = gamma.values();
                     if (gamma.requires_grad()) {
                         auto gg = gamma.mutable_grad();
                         for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < d; ++j) gg[j] += g[i * d + j] * normalized[i * d + j];
                     }
                     if (beta.requires_grad()) {
                         auto gb = beta.mutable_grad();
                         for (std::size_t i = 0; i < m; ++i)
                             for (std::size_t j = 0; j < d; ++j) gb[j] += g[i * d + j];
                     }
                     if (x.requires_grad()) {
                         auto gx = x.mutable_grad();
                         const double inv_d = 1.0 / static_cast<double>(d);
                         for (std::size_t i = 0; i < m; ++i) {
                             double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                             for (std::size_t j = 0; j < d; ++j) {
                                 const double dxh = g[i * d + j] * gv[j];
                                 mean_dxh += dxh;
                                 mean_dxh_xh += dxh * normalized[i * d + j];
                             }
                             mean_dxh *= inv_d;
                             mean_dxh_xh *= inv_d;
                             for (std::size_t j = 0; j < d; ++j) {
                                 const double dxh = g[i * d + j] * gv[j];
                                 gx[i * d + j] +=
                                     inv_std[i] * (dxh - mean_dxh - normalized[i * d + j] * mean_dxh_xh);
                             }
                         }
                     }
                 });
    return result;
}

Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng) {
    if (!(p >= 0.0 && p < 1.0)) throw ConfigError("dropout: p must lie in [0, 1)");
    if (!training || p == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - p);
    std::bernoulli_distribution keep(1.0 - p);
    std::vector<double> factors(x.size());
    for (auto& f : factors) f = keep(rng) ? keep_scale : 0.0;
    const auto v = x.values();
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * factors[i];
    Tensor result = Tensor::from(x.shape(), std::move(out), x.requires_grad());
    maybe_record({x}, result, [x, result, factors = std::move(factors)]() mutable {
        const auto g = result.grad();
        auto gx = x.mutable_grad();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factors[i];
    });
    return result;
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "mse_loss");
    const auto p = pred.values();
    const auto t = target.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - t[i];
        acc += d * d;
    }
    const double n = static_cast<double>(p.size());
    Tensor result = Tensor::from({}, {acc / n}, any_requires_grad({&pred, &target}));
    maybe_record({pred, target}, result, [pred, target, result, n]() mutable {
        const double g = result.grad()[0];
        const auto p = pred.values();
        const auto t = target.values();
        if (pred.requires_grad()) {
            auto gp = pred.mutable_grad();
            for (std::size_t i = 0; i < p.size(); ++i) gp[i] += g * 2.0 * (p[i] - t[i]) / n;
        }
        if (target.requires_grad()) {
            auto gt = target.mutable_grad();
            for (std::size_t i = 0; i < p.size(); ++i) gt[i] -= g * 2.0 * (p[i] - t[i]) / n;
        }
    });
    return result;
}

// ---------------------------------------------------------------- grad_check

double grad_check(const ScalarFn& fn, std::span<Tensor> inputs, double epsilon) {
    for (auto& t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        TapeScope scope(tape);
        const Tensor loss = fn(inputs);
        backward(loss, tape);
    }
    for (auto& t : inputs) {
        auto g = t.mutable_grad();
        analytic.emplace_back(g.begin(), g.end());
    }

    NoGradScope no_grad;
    double worst = 0.0;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto values = inputs[k].mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + epsilon;
            const double plus = fn(inputs).item();
            values[i] = saved - epsilon;
            const double minus = fn(inputs).item();
            values[i] = saved;
            const double numeric = (plus - minus) / (2.0 * epsilon);
            const double a = analytic[k][i];
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace tsformer::nc

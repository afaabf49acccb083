#pragma once

// Minimal reverse-mode differentiable core: a shared-handle Tensor, a
// computation tape recording backward rules, and the handful of operations
// the forecasting network is built from. Everything is double precision.

#include <cstddef>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tsformer::nc {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

namespace detail {
struct Node;
}

/// Handle to a dense row-major array with an optional gradient buffer.
///
/// Copies share storage. Values produced by an operation are never modified
/// afterwards; leaf tensors (parameters) are updated in place by optimizers
/// and the gradient checker.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                         bool requires_grad = false);
    static Tensor scalar(double value);

    explicit operator bool() const noexcept { return node_ != nullptr; }

    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t size() const;
    /// Row count of a matrix; 1 for vectors and scalars.
    std::size_t rows() const;
    /// Column count of a matrix; the length of a vector.
    std::size_t cols() const;

    std::span<const double> values() const;
    std::span<double> mutable_values();
    double item() const;
    double at(std::size_t row, std::size_t col) const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    /// Gradient buffer; empty until a backward pass reaches this tensor.
    std::span<const double> grad() const;
    /// Allocates the buffer on first use. Const because handles share storage.
    std::span<double> mutable_grad() const;
    void zero_grad();

    bool same_storage(const Tensor& other) const noexcept { return node_ == other.node_; }

    /// Deep copy without tape history.
    Tensor clone(bool requires_grad = false) const;

private:
    friend struct TensorAccess;
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;
};

/// Ordered record of differentiable operations.
///
/// An operation is recorded only while a tape is active on the calling thread
/// (see TapeScope) and at least one of its inputs requires a gradient.
class Tape {
public:
    using BackwardFn = std::function<void()>;

    struct Entry {
        std::vector<Tensor> inputs;
        Tensor output;
        BackwardFn backward;
    };

    void record(std::vector<Tensor> inputs, Tensor output, BackwardFn backward);
    std::size_t size() const noexcept { return entries_.size(); }
    const std::vector<Entry>& entries() const noexcept { return entries_; }
    void clear() noexcept { entries_.clear(); }

    static Tape* active() noexcept;

private:
    friend class TapeScope;
    std::vector<Entry> entries_;
};

/// Makes a tape the active one for the current thread for its lifetime.
class TapeScope {
public:
    explicit TapeScope(Tape& tape) noexcept;
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* previous_;
};

/// Suspends recording on the current thread (inference, finite differences).
class NoGradScope {
public:
    NoGradScope() noexcept;
    ~NoGradScope();
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape* previous_;
};

/// Propagates d(loss)/d(t) to every tensor recorded on the tape. Gradients
/// accumulate into existing buffers; call zero_grad on leaves between steps.
void backward(const Tensor& loss, const Tape& tape);

// Operations. Matrices are rank-2, biases and layer-norm affine terms rank-1.

Tensor matmul(const Tensor& a, const Tensor& b);
/// a · bᵀ without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor sum(const Tensor& a);

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);

/// Row-wise softmax of scores + mask. Mask entries must be 0 or -inf; masked
/// positions come out exactly 0.
Tensor masked_softmax(const Tensor& scores, const Tensor& mask);
Tensor elu(const Tensor& x, double alpha = 1.0);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
/// Inverted dropout: survivors are scaled by 1/(1-p) at training time.
Tensor dropout(const Tensor& x, double p, bool training, std::mt19937_64& rng);
Tensor mse_loss(const Tensor& pred, const Tensor& target);

using ScalarFn = std::function<Tensor(std::span<const Tensor>)>;

/// Compares backward() against central finite differences for every element
/// of every input and returns the largest |a-n| / max(|a|, |n|, 1e-8).
double grad_check(const ScalarFn& fn, std::span<Tensor> inputs, double epsilon = 1e-6);

}  // namespace tsformer::nc

#pragma once

// Dense f64 tensors with a define-by-run reverse-mode tape.
//
// Every op that sees an input with requires_grad (and grad mode enabled)
// appends one node to the calling thread's Tape. backward() walks that tape
// in reverse, which is a valid topological order because nodes are appended
// in execution order, and then clears it.
//
// Broadcasting is limited to leading-batch expansion: in add/sub/mul the
// second operand may have a shape equal to a trailing suffix of the first.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace scanpath3d {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Constant CSR matrix used for fixed linear resampling operators
/// (spherical kernel sampling, pooling, upsampling).
struct SparseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::uint32_t> col_idx;
    std::vector<double> values;

    /// Appends an entry to the row currently being built.
    void push(std::size_t col, double value);
    /// Closes the current row.
    void end_row();
    std::size_t nnz() const { return values.size(); }
};

namespace detail {
struct TensorImpl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until touched by backward
    bool requires_grad = false;

    std::vector<double>& grad_buffer() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
        return grad;
    }
};
}  // namespace detail

class Tensor {
   public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, double value, bool requires_grad = false);
    static Tensor from(const Shape& shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::size_t rank() const { return impl_->shape.size(); }
    std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
    std::size_t numel() const { return impl_->data.size(); }

    std::span<const double> data() const { return impl_->data; }
    /// Only parameter leaves should be written through this (optimizer, init, loading).
    std::span<double> mutable_data() { return impl_->data; }

    double item() const;
    double at(std::size_t i) const { return impl_->data.at(i); }
    double at(std::size_t row, std::size_t col) const;

    bool requires_grad() const { return impl_ && impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }
    bool has_grad() const { return !impl_->grad.empty(); }
    /// Zeros if backward never reached this tensor.
    std::vector<double> grad() const;
    void zero_grad() { impl_->grad.clear(); }

    /// Same data, no gradient history.
    Tensor detach() const;

    const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

   private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;

    friend Tensor make_tensor(Shape, std::vector<double>, bool);
};

Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad);

/// Thread-confined record of executed differentiable ops.
class Tape {
   public:
    using Backward = std::function<void(detail::TensorImpl& out)>;

    static Tape& current();

    void record(std::shared_ptr<detail::TensorImpl> out, Backward fn);
    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    /// Runs the reverse pass from `loss` and clears the tape.
    void backward(const Tensor& loss);

   private:
    struct Node {
        std::shared_ptr<detail::TensorImpl> out;
        Backward fn;
    };
    std::vector<Node> nodes_;
};

bool grad_enabled();

/// Disables tape recording on this thread for its lifetime.
class NoGradGuard {
   public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

   private:
    bool previous_;
};

/// Throws NonScalarLoss unless `loss` holds exactly one element.
void backward(const Tensor& loss);

// Arithmetic
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

// Layout
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows);

// Normalization / reductions along an axis
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);
/// Removes `axis`.
Tensor logsumexp(const Tensor& a, std::size_t axis);
/// Normalizes along `axis` without affine terms.
Tensor layer_norm(const Tensor& a, std::size_t axis, double eps = 1e-5);
/// Removes `axis`.
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);
/// Full reductions to a rank-0 tensor.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

// Elementwise
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);

/// Replaces entries where mask != 0 with `value`; gradient is blocked there.
Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, double value);

/// Constant sparse operator applied to the rows of a 2-D tensor: S · X.
Tensor spmm(std::shared_ptr<const SparseMatrix> s, const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace scanpath3d

#include "scanpath3d/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "scanpath3d/errors.hpp"

namespace scanpath3d {

using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

std::size_t shape_numel(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
    os << ')';
    return os.str();
}

void SparseMatrix::push(std::size_t col, double value) {
    col_idx.push_back(static_cast<std::uint32_t>(col));
    values.push_back(value);
}

void SparseMatrix::end_row() {
    row_ptr.push_back(values.size());
    rows = row_ptr.size() - 1;
}

// ---------------------------------------------------------------------------
// Tensor

Tensor make_tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeMismatch("shape " + shape_str(shape) + " needs " +
                            std::to_string(shape_numel(shape)) + " values, got " +
                            std::to_string(data.size()));
    }
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = std::move(shape);
    impl->data = std::move(data);
    impl->requires_grad = requires_grad;
    return Tensor(std::move(impl));
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return make_tensor(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
    return make_tensor(shape, std::vector<double>(shape_numel(shape), value), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad) {
    return make_tensor(shape, std::move(values), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return make_tensor({}, {value}, requires_grad);
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeMismatch("item() on tensor of shape " + shape_str(shape()));
    return impl_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
    if (rank() != 2) throw ShapeMismatch("at(row, col) on shape " + shape_str(shape()));
    return impl_->data.at(row * impl_->shape[1] + col);
}

std::vector<double> Tensor::grad() const {
    if (impl_->grad.empty()) return std::vector<double>(impl_->data.size(), 0.0);
    return impl_->grad;
}

Tensor Tensor::detach() const { return make_tensor(impl_->shape, impl_->data, false); }

// ---------------------------------------------------------------------------
// Tape

namespace {
thread_local bool t_grad_enabled = true;
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

Tape& Tape::current() {
    thread_local Tape tape;
    return tape;
}

void Tape::record(std::shared_ptr<TensorImpl> out, Backward fn) {
    nodes_.push_back({std::move(out), std::move(fn)});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1) {
        throw NonScalarLoss("loss must hold one element, got shape " +
                            (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) {
        nodes_.clear();
        throw NumericalFailure("loss does not depend on any tensor that requires grad");
    }
    loss.impl()->grad_buffer()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (!it->out->grad.empty()) it->fn(*it->out);
    }
    nodes_.clear();
}

void backward(const Tensor& loss) { Tape::current().backward(loss); }

// ---------------------------------------------------------------------------
// Op helpers

namespace {

bool tracks(std::initializer_list<const Tensor*> inputs) {
    if (!grad_enabled()) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

#ifndef NDEBUG
bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}
#endif

Tensor finish(Shape shape, std::vector<double> data, bool track, Tape::Backward fn,
              [[maybe_unused]] std::initializer_list<const Tensor*> inputs = {}) {
#ifndef NDEBUG
    bool finite_in = true;
    for (const Tensor* t : inputs) finite_in = finite_in && all_finite(t->data());
    if (finite_in && inputs.size() > 0 && !all_finite(data)) {
        throw NumericalFailure("non-finite output from finite inputs");
    }
#endif
    Tensor out = make_tensor(std::move(shape), std::move(data), track);
    if (track) Tape::current().record(out.impl(), std::move(fn));
    return out;
}

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t n = 1;
    std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
    if (axis >= s.size()) {
        throw ShapeMismatch(std::string(op) + ": axis " + std::to_string(axis) +
                            " out of range for shape " + shape_str(s));
    }
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    r.n = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
    Shape r = s;
    r.erase(r.begin() + static_cast<std::ptrdiff_t>(axis));
    return r;
}

bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

template <class Fwd, class Dfa>
Tensor unary(const Tensor& a, Fwd fwd, Dfa dfa) {
    std::vector<double> out(a.numel());
    const auto x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(x[i]);
    const bool track = tracks({&a});
    ImplPtr ai = a.impl();
    return finish(a.shape(), std::move(out), track,
                  [ai, dfa](TensorImpl& o) {
                      if (!ai->requires_grad) return;
                      auto& g = ai->grad_buffer();
                      for (std::size_t i = 0; i < g.size(); ++i) {
                          g[i] += o.grad[i] * dfa(ai->data[i], o.data[i]);
                      }
                  },
                  {&a});
}

}  // namespace

// ---------------------------------------------------------------------------
// Arithmetic

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeMismatch("matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    const double* A = a.data().data();
    const double* B = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        double* row = out.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = A[i * k + p];
            const double* brow = B + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
        }
    }
    const bool track = tracks({&a, &b});
    ImplPtr ai = a.impl(), bi = b.impl();
    return finish({m, n}, std::move(out), track,
                  [ai, bi, m, k, n](TensorImpl& o) {
                      const double* G = o.grad.data();
                      if (ai->requires_grad) {
                          // dA = G · Bᵀ
                          auto& ga = ai->grad_buffer();
                          for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t p = 0; p < k; ++p) {
                                  const double* brow = bi->data.data() + p * n;
                                  double s = 0.0;
                                  for (std::size_t j = 0; j < n; ++j) s += G[i * n + j] * brow[j];
                                  ga[i * k + p] += s;
                              }
                          }
                      }
                      if (bi->requires_grad) {
                          // dB = Aᵀ · G
                          auto& gb = bi->grad_buffer();
                          for (std::size_t i = 0; i < m; ++i) {
                              for (std::size_t p = 0; p < k; ++p) {
                                  const double av = ai->data[i * k + p];
                                  double* grow = gb.data() + p * n;
                                  for (std::size_t j = 0; j < n; ++j) grow[j] += av * G[i * n + j];
                              }
                          }
                      }
                  },
                  {&a, &b});
}

namespace {

// Elementwise binary op with leading-batch expansion of `b`.
template <class Fwd, class Da, class Db>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Da da, Db db) {
    if (!is_suffix(b.shape(), a.shape())) {
        throw ShapeMismatch(std::string(name) + " " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
    }
    const std::size_t n = a.numel(), nb = b.numel();
    std::vector<double> out(n);
    const auto x = a.data();
    const auto y = b.data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(x[i], y[i % nb]);
    const bool track = tracks({&a, &b});
    ImplPtr ai = a.impl(), bi = b.impl();
    return finish(a.shape(), std::move(out), track,
                  [ai, bi, n, nb, da, db](TensorImpl& o) {
                      if (ai->requires_grad) {
                          auto& g = ai->grad_buffer();
                          for (std::size_t i = 0; i < n; ++i) {
                              g[i] += o.grad[i] * da(ai->data[i], bi->data[i % nb]);
                          }
                      }
                      if (bi->requires_grad) {
                          auto& g = bi->grad_buffer();
                          for (std::size_t i = 0; i < n; ++i) {
                              g[i % nb] += o.grad[i] * db(ai->data[i], bi->data[i % nb]);
                          }
                      }
                  },
                  {&a, &b});
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    if (!is_suffix(b.shape(), a.shape()) && is_suffix(a.shape(), b.shape())) return add(b, a);
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    if (!is_suffix(b.shape(), a.shape()) && is_suffix(a.shape(), b.shape())) return mul(b, a);
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double s) {
    return unary(
        a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
    return unary(
        a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

// ---------------------------------------------------------------------------
// Layout

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeMismatch("transpose needs rank 2, got " + shape_str(a.shape()));
    const std::size_t r = a.dim(0), c = a.dim(1);
    std::vector<double> out(r * c);
    const auto x = a.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
    const bool track = tracks({&a});
    ImplPtr ai = a.impl();
    return finish({c, r}, std::move(out), track, [ai, r, c](TensorImpl& o) {
        auto& g = ai->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += o.grad[j * r + i];
    });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeMismatch("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    const bool track = tracks({&a});
    ImplPtr ai = a.impl();
    return finish(shape, std::move(out), track, [ai](TensorImpl& o) {
        auto& g = ai->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeMismatch("concat of zero tensors");
    const Shape& ref = parts.front().shape();
    AxisSplit base = split_axis(ref, axis, "concat");
    std::size_t total_n = 0;
    std::vector<std::size_t> widths;
    for (const Tensor& p : parts) {
        const Shape& s = p.shape();
        bool ok = s.size() == ref.size();
        for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == ref[i];
        if (!ok) throw ShapeMismatch("concat " + shape_str(ref) + " with " + shape_str(s));
        widths.push_back(s[axis]);
        total_n += s[axis];
    }
    Shape out_shape = ref;
    out_shape[axis] = total_n;
    std::vector<double> out(shape_numel(out_shape));
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto x = parts[p].data();
        const std::size_t w = widths[p] * base.inner;
        for (std::size_t o = 0; o < base.outer; ++o) {
            std::copy_n(x.data() + o * w, w, out.data() + o * total_n * base.inner + offset);
        }
        offset += w;
    }
    bool track = false;
    for (const Tensor& p : parts) track = track || tracks({&p});
    std::vector<ImplPtr> impls;
    for (const Tensor& p : parts) impls.push_back(p.impl());
    const std::size_t outer = base.outer, inner = base.inner;
    return finish(out_shape, std::move(out), track, [impls, widths, outer, inner, total_n](TensorImpl& o) {
        std::size_t off = 0;
        for (std::size_t p = 0; p < impls.size(); ++p) {
            const std::size_t w = widths[p] * inner;
            if (impls[p]->requires_grad) {
                auto& g = impls[p]->grad_buffer();
                for (std::size_t q = 0; q < outer; ++q)
                    for (std::size_t i = 0; i < w; ++i) g[q * w + i] += o.grad[q * total_n * inner + off + i];
            }
            off += w;
        }
    });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
    AxisSplit s = split_axis(a.shape(), axis, "slice");
    if (begin >= end || end > s.n) {
        throw ShapeMismatch("slice [" + std::to_string(begin) + ", " + std::to_string(end) +
                            ") on axis " + std::to_string(axis) + " of " + shape_str(a.shape()));
    }
    Shape out_shape = a.shape();
    out_shape[axis] = end - begin;
    const std::size_t w = (end - begin) * s.inner;
    std::vector<double> out(s.outer * w);
    const auto x = a.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        std::copy_n(x.data() + (o * s.n + begin) * s.inner, w, out.data() + o * w);
    }
    const bool track = tracks({&a});
    ImplPtr ai = a.impl();
    return finish(out_shape, std::move(out), track, [ai, s, begin, w](TensorImpl& o) {
        auto& g = ai->grad_buffer();
        for (std::size_t q = 0; q < s.outer; ++q)
            for (std::size_t i = 0; i < w; ++i) g[(q * s.n + begin) * s.inner + i] += o.grad[q * w + i];
    });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> rows) {
    if (a.rank() != 2) throw ShapeMismatch("gather_rows needs rank 2, got " + shape_str(a.shape()));
    const std::size_t n = a.dim(0), f = a.dim(1);
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    std::vector<double> out(idx.size() * f);
    const auto x = a.data();
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= n) {
            throw ShapeMismatch("gather_rows index " + std::to_string(idx[i]) + " for shape " +
                                shape_str(a.shape()));
        }
        std::copy_n(x.data() + idx[i] * f, f, out.data() + i * f);
    }
    const bool track = tracks({&a});
    ImplPtr ai = a.impl();
    return finish({idx.size(), f}, std::move(out), track, [ai, idx, f](TensorImpl& o) {
        auto& g = ai->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (std::size_t j = 0; j < f; ++j) g[idx[i] * f + j] += o.grad[i * f + j];
    });
}

// ---------------------------------------------------------------------------
// Axis ops

namespace {
inline std::size_t at_axis(const AxisSplit& s, std::size_t o, std::size_t i, std::size_t j) {
    return (o * s.n + i) * s.inner + j;
}
}  // namespace

Tensor softmax(const Tensor& a, std::size_t axis) {
    const AxisSplit s = split_axis(a.shape(), axis, "softmax");
    const auto x = a.data();
    std::vector<double> out(a.numel());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t j = 0; j < s.inner; ++j) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < s.n; ++i) mx = std::max(mx, x[at_axis(s, o, i, j)]);
            double total = 0.0;
            for (std::size_t i = 0; i < s.n; ++i) {
                const double e = std::exp(x[at_axis(s, o, i, j)] - mx);
                out[at_axis(s, o, i, j)] = e;
                total += e;
            }
            for (std::size_t i = 0; i < s.n; ++i) out[at_axis(s, o, i, j)] /= total;
        }
    }
    const bool track = tracks({&a});
    ImplPtr ai = a.impl();
    return finish(a.shape(), std::move(out), track, [ai, s](TensorImpl& o) {
        auto& g = ai->grad_buffer();
        for (std::size_t q = 0; q < s.outer; ++q) {
            for (std::size_t j = 0; j < s.inner; ++j) {
                double dot = 0.0;
                for (std::size_t i = 0; i < s.n; ++i) {
                    const std::size_t k = at_axis(s, q, i, j);
                    dot += o.grad[k] * o.data[k];
                }
                for (std::size_t i = 0; i < s.n; ++i) {
                    const std::size_t k = at_axis(s, q, i, j);
                    g[k] += o.data[k] * (o.grad[k] - dot);
                }
            }
        }
    });
}

namespace {
// Log-sum-exp along the split axis for every (outer, inner) lane.
std::vector<double> lane_lse(std::span<const double> x, const AxisSplit& s) {
    std::vector<double> lse(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t j = 0; j < s.inner; ++j) {
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < s.n; ++i) mx = std::max(mx, x[at_axis(s, o, i, j)]);
            if (!std::isfinite(mx)) {
                lse[o * s.inner + j] = mx;
                continue;
            }
            double total = 0.0;
            for (std::size_t i = 0; i < s.n; ++i) total += std::exp(x[at_axis(s, o, i, j)] - mx);
            lse[o * s.inner + j] = mx + std::log(total);
        }
    }
    return lse;
}
}  // namespace

Tensor log_softmax(const Tensor& a, std::size_t axis) {
    const AxisSplit s = split_axis(a.shape(), axis, "log_softmax");
    const auto x = a.data();
    const std::vector<double> lse = lane_lse(x, s);
    std::vector<double> out(a.numel());
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.n; ++i)
            for (std::size_t j = 0; j < s.inner; ++j) {
                const std::size_t k = at_axis(s, o, i, j);
                out[k] = x[k] - lse[o * s.inner + j];
            }
    const bool track = tracks({&a});
    ImplPtr ai = a.impl();
    return finish(a.shape(), std::move(out), track, [ai, s](TensorImpl& o) {
        auto& g = ai->grad_buffer();
        for (std::size_t q = 0; q < s.outer; ++q) {
            for (std::size_t j = 0; j < s.inner; ++j) {
                double gsum = 0.0;
                for (std::size_t i = 0; i < s.n; ++i) gsum += o.grad[at_axis(s, q, i, j)];
                for (std::size_t i = 0; i < s.n; ++i) {
                    const std::size_t k = at_axis(s, q, i, j);
                    g[k] += o.grad[k] - std::exp(o.data[k]) * gsum;
                }
            }
        }
    });
}

Tensor logsumexp(const Tensor& a, std::size_t axis) {
    const AxisSplit s = split_axis(a.shape(), axis, "logsumexp");
    std::vector<double> out = lane_lse(a.data(), s);
    const bool track = tracks({&a});
    ImplPtr ai = a.impl();
    return finish(drop_axis(a.shape(), axis), std::move(out), track, [ai, s](TensorImpl& o) {
        auto& g = ai->grad_buffer();
        for (std::size_t q = 0; q < s.outer; ++q)
            for (std::size_t j = 0; j < s.inner; ++j) {
                const std::size_t lane = q * s.inner + j;
                for (std::size_t i = 0; i < s.n; ++i) {
                    const std::size_t k = at_axis(s, q, i, j);
                    g[k] += o.grad[lane] * std::exp(ai->data[k] - o.data[lane]);
                }
            }
    });
}

Tensor layer_norm(const Tensor& a, std::size_t axis, double eps) {
    const AxisSplit s = split_axis(a.shape(), axis, "layer_norm");
    const auto x = a.data();
    std::vector<double> out(a.numel());
    std::vector<double> inv_std(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t j = 0; j < s.inner; ++j) {
            double mu = 0.0;
            for (std::size_t i = 0; i < s.n; ++i) mu += x[at_axis(s, o, i, j)];
            mu /= static_cast<double>(s.n);
            double var = 0.0;
            for (std::size_t i = 0; i < s.n; ++i) {
                const double d = x[at_axis(s, o, i, j)] - mu;
                var += d * d;
            }
            var /= static_cast<double>(s.n);
            const double is = 1.0 / std::sqrt(var + eps);
            inv_std[o * s.inner + j] = is;
            for (std::size_t i = 0; i < s.n; ++i) {
                const std::size_t k = at_axis(s, o, i, j);
                out[k] = (x[k] - mu) * is;
            }
        }
    }
    const bool track = tracks({&a});
    ImplPtr ai = a.impl();
    return finish(a.shape(), std::move(out), track, [ai, s, inv_std](TensorImpl& o) {
        auto& g = ai->grad_buffer();
        const double n = static_cast<double>(s.n);
        for (std::size_t q = 0; q < s.outer; ++q) {
            for (std::size_t j = 0; j < s.inner; ++j) {
                double gmean = 0.0, gymean = 0.0;
                for (std::size_t i = 0; i < s.n; ++i) {
                    const std::size_t k = at_axis(s, q, i, j);
                    gmean += o.grad[k];
                    gymean += o.grad[k] * o.data[k];
                }
                gmean /= n;
                gymean /= n;
                const double is = inv_std[q * s.inner + j];
                for (std::size_t i = 0; i < s.n; ++i) {
                    const std::size_t k = at_axis(s, q, i, j);
                    g[k] += is * (o.grad[k] - gmean - o.data[k] * gymean);
                }
            }
        }
    });
}

Tensor sum(const Tensor& a, std::size_t axis) {
    const AxisSplit s = split_axis(a.shape(), axis, "sum");
    const auto x = a.data();
    std::vector<double> out(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.n; ++i)
            for (std::size_t j = 0; j < s.inner; ++j) out[o * s.inner + j] += x[at_axis(s, o, i, j)];
    const bool track = tracks({&a});
    ImplPtr ai = a.impl();
    return finish(drop_axis(a.shape(), axis), std::move(out), track, [ai, s](TensorImpl& o) {
        auto& g = ai->grad_buffer();
        for (std::size_t q = 0; q < s.outer; ++q)
            for (std::size_t i = 0; i < s.n; ++i)
                for (std::size_t j = 0; j < s.inner; ++j) g[at_axis(s, q, i, j)] += o.grad[q * s.inner + j];
    });
}

Tensor mean(const Tensor& a, std::size_t axis) {
    return scale(sum(a, axis), 1.0 / static_cast<double>(a.dim(axis)));
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.data()) total += v;
    const bool track = tracks({&a});
    ImplPtr ai = a.impl();
    return finish({}, {total}, track, [ai](TensorImpl& o) {
        auto& g = ai->grad_buffer();
        for (double& v : g) v += o.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

// ---------------------------------------------------------------------------
// Elementwise

Tensor relu(const Tensor& a) {
    return unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
    return unary(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); },
        [](double x, double) {
            const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
            const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + x * pdf;
        });
}

Tensor tanh(const Tensor& a) {
    return unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& a) {
    return unary(
        a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    return unary(
        a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor square(const Tensor& a) {
    return unary(
        a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor masked_fill(const Tensor& a, std::span<const std::uint8_t> mask, double value) {
    if (mask.size() != a.numel()) {
        throw ShapeMismatch("masked_fill mask of " + std::to_string(mask.size()) +
                            " entries for shape " + shape_str(a.shape()));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    std::vector<std::uint8_t> m(mask.begin(), mask.end());
    for (std::size_t i = 0; i < out.size(); ++i)
        if (m[i]) out[i] = value;
    const bool track = tracks({&a});
    ImplPtr ai = a.impl();
    // Deliberately not passing inputs: a -inf fill is expected to be non-finite.
    return finish(a.shape(), std::move(out), track, [ai, m](TensorImpl& o) {
        auto& g = ai->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!m[i]) g[i] += o.grad[i];
    });
}

Tensor spmm(std::shared_ptr<const SparseMatrix> s, const Tensor& x) {
    if (x.rank() != 2 || x.dim(0) != s->cols) {
        throw ShapeMismatch("spmm (" + std::to_string(s->rows) + ", " + std::to_string(s->cols) +
                            ") x " + shape_str(x.shape()));
    }
    const std::size_t f = x.dim(1);
    std::vector<double> out(s->rows * f, 0.0);
    const double* X = x.data().data();
    for (std::size_t r = 0; r < s->rows; ++r) {
        double* orow = out.data() + r * f;
        for (std::size_t e = s->row_ptr[r]; e < s->row_ptr[r + 1]; ++e) {
            const double v = s->values[e];
            const double* xrow = X + static_cast<std::size_t>(s->col_idx[e]) * f;
            for (std::size_t j = 0; j < f; ++j) orow[j] += v * xrow[j];
        }
    }
    const bool track = tracks({&x});
    ImplPtr xi = x.impl();
    return finish({s->rows, f}, std::move(out), track,
                  [s, xi, f](TensorImpl& o) {
                      auto& g = xi->grad_buffer();
                      for (std::size_t r = 0; r < s->rows; ++r) {
                          const double* grow = o.grad.data() + r * f;
                          for (std::size_t e = s->row_ptr[r]; e < s->row_ptr[r + 1]; ++e) {
                              const double v = s->values[e];
                              double* dst = g.data() + static_cast<std::size_t>(s->col_idx[e]) * f;
                              for (std::size_t j = 0; j < f; ++j) dst[j] += v * grow[j];
                          }
                      }
                  },
                  {&x});
}

}  // namespace scanpath3d

#pragma once

// Reverse-mode autodiff on dense, row-major real tensors. Single-threaded
// graph construction and backward; independent graphs may live on independent
// threads. Values are immutable after an op creates them; only gradients
// accumulate.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "jscc/error.hpp"
#include "jscc/rng.hpp"

namespace jscc {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

template <typename S>
struct TensorNode {
    Shape shape;
    std::vector<S> data;
    std::vector<S> grad;  // empty until backward touches this node
    bool requires_grad = false;
    bool backward_ran = false;  // set on nodes used as a backward root
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), S(0));
    }
};

template <typename S>
class Tensor {
public:
    Tensor() : node_(std::make_shared<TensorNode<S>>()) {}

    explicit Tensor(Shape shape, bool requires_grad = false)
        : node_(std::make_shared<TensorNode<S>>()) {
        node_->shape = std::move(shape);
        node_->data.assign(shape_numel(node_->shape), S(0));
        node_->requires_grad = requires_grad;
    }

    static Tensor from_data(Shape shape, std::vector<S> data, bool requires_grad = false) {
        if (shape_numel(shape) != data.size()) {
            throw ShapeError("from_data: shape " + shape_str(shape) + " needs " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(data.size()));
        }
        Tensor t;
        t.node_->shape = std::move(shape);
        t.node_->data = std::move(data);
        t.node_->requires_grad = requires_grad;
        return t;
    }

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return Tensor(std::move(shape), requires_grad);
    }

    static Tensor full(Shape shape, S value, bool requires_grad = false) {
        Tensor t(std::move(shape), requires_grad);
        std::fill(t.node_->data.begin(), t.node_->data.end(), value);
        return t;
    }

    static Tensor ones(Shape shape, bool requires_grad = false) {
        return full(std::move(shape), S(1), requires_grad);
    }

    static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0,
                        bool requires_grad = false) {
        Tensor t(std::move(shape), requires_grad);
        for (auto& v : t.node_->data) v = static_cast<S>(rng.gaussian() * stddev);
        return t;
    }

    static Tensor uniform(Shape shape, Rng& rng, double lo, double hi,
                          bool requires_grad = false) {
        Tensor t(std::move(shape), requires_grad);
        for (auto& v : t.node_->data) v = static_cast<S>(rng.uniform(lo, hi));
        return t;
    }

    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t numel() const { return node_->data.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

    const std::vector<S>& values() const { return node_->data; }
    std::vector<S>& mutable_values() { return node_->data; }  // leaves only (optimizer)

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool rg) { node_->requires_grad = rg; }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<S>& grad() const {
        if (node_->grad.empty()) throw ContractError("grad not populated; run backward first");
        return node_->grad;
    }
    void zero_grad() { node_->grad.clear(); }

    S item() const {
        if (numel() != 1) {
            throw ContractError("item() on non-scalar tensor of shape " + shape_str(shape()));
        }
        return node_->data[0];
    }

    // Value copy with no graph history.
    Tensor detach() const {
        Tensor t;
        t.node_->shape = node_->shape;
        t.node_->data = node_->data;
        t.node_->requires_grad = false;
        return t;
    }

    std::shared_ptr<TensorNode<S>> node() const { return node_; }

private:
    std::shared_ptr<TensorNode<S>> node_;

    template <typename T>
    friend Tensor<T> make_op(Shape shape, std::vector<T> data,
                             std::vector<Tensor<T>> parents,
                             std::function<void(TensorNode<T>&)> backward_fn);
};

// ---------------------------------------------------------------------------
// op construction helper
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> make_op(Shape shape, std::vector<S> data, std::vector<Tensor<S>> parents,
                  std::function<void(TensorNode<S>&)> backward_fn) {
    Tensor<S> out;
    out.node_->shape = std::move(shape);
    out.node_->data = std::move(data);
    bool rg = false;
    for (const auto& p : parents) {
        rg = rg || p.requires_grad();
        out.node_->parents.push_back(p.node());
    }
    out.node_->requires_grad = rg;
    if (rg) out.node_->backward_fn = std::move(backward_fn);
    return out;
}

template <typename S>
inline void accumulate(const std::shared_ptr<TensorNode<S>>& n, std::size_t idx, S v) {
    if (!n->requires_grad) return;
    n->ensure_grad();
    n->grad[idx] += v;
}

// ---------------------------------------------------------------------------
// elementwise binary ops with trailing-axis broadcast
// ---------------------------------------------------------------------------

// Broadcast contract: shapes equal, or one operand is a scalar (numel 1), or
// the smaller operand's shape is a suffix of the larger's (it is then tiled
// over the leading batch axes).
template <typename S>
inline void check_broadcast(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa == sb || a.numel() == 1 || b.numel() == 1) return;
    const Shape& big = sa.size() >= sb.size() ? sa : sb;
    const Shape& small = sa.size() >= sb.size() ? sb : sa;
    if (small.size() < big.size() &&
        std::equal(small.begin(), small.end(), big.end() - small.size())) {
        return;
    }
    throw ShapeError(std::string(op) + ": shapes " + shape_str(sa) + " and " + shape_str(sb) +
                     " are not broadcast-compatible");
}

template <typename S, typename Fwd, typename BwdA, typename BwdB>
Tensor<S> binary_op(const char* name, const Tensor<S>& a, const Tensor<S>& b, Fwd fwd,
                    BwdA dfa, BwdB dfb) {
    check_broadcast(a, b, name);
    const bool a_big = a.numel() >= b.numel();
    const std::size_t n = a_big ? a.numel() : b.numel();
    const std::size_t na = a.numel(), nb = b.numel();
    const Shape& out_shape = a_big ? a.shape() : b.shape();

    std::vector<S> out(n);
    const S* pa = a.values().data();
    const S* pb = b.values().data();
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(pa[i % na], pb[i % nb]);

    auto an = a.node();
    auto bn = b.node();
    return make_op<S>(out_shape, std::move(out), {a, b},
                      [an, bn, na, nb, n, dfa, dfb](TensorNode<S>& o) {
                          const S* pa2 = an->data.data();
                          const S* pb2 = bn->data.data();
                          for (std::size_t i = 0; i < n; ++i) {
                              const S g = o.grad[i];
                              accumulate(an, i % na, g * dfa(pa2[i % na], pb2[i % nb]));
                              accumulate(bn, i % nb, g * dfb(pa2[i % na], pb2[i % nb]));
                          }
                      });
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    return binary_op<S>(
        "add", a, b, [](S x, S y) { return x + y; }, [](S, S) { return S(1); },
        [](S, S) { return S(1); });
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    return binary_op<S>(
        "sub", a, b, [](S x, S y) { return x - y; }, [](S, S) { return S(1); },
        [](S, S) { return S(-1); });
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    return binary_op<S>(
        "mul", a, b, [](S x, S y) { return x * y; }, [](S, S y) { return y; },
        [](S x, S) { return x; });
}

// ---------------------------------------------------------------------------
// elementwise unary ops
// ---------------------------------------------------------------------------

template <typename S, typename Fwd, typename Bwd>
Tensor<S> unary_op(const Tensor<S>& x, Fwd fwd, Bwd dfdx) {
    std::vector<S> out(x.numel());
    const S* px = x.values().data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(px[i]);
    auto xn = x.node();
    return make_op<S>(x.shape(), std::move(out), {x}, [xn, dfdx](TensorNode<S>& o) {
        const S* px2 = xn->data.data();
        const std::size_t n = o.data.size();
        for (std::size_t i = 0; i < n; ++i) {
            accumulate(xn, i, o.grad[i] * dfdx(px2[i], o.data[i]));
        }
    });
}

template <typename S>
Tensor<S> scale(const Tensor<S>& x, double c) {
    const S sc = static_cast<S>(c);
    return unary_op<S>(
        x, [sc](S v) { return v * sc; }, [sc](S, S) { return sc; });
}

template <typename S>
Tensor<S> neg(const Tensor<S>& x) {
    return scale(x, -1.0);
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
    return unary_op<S>(
        x, [](S v) { return v > S(0) ? v : S(0); },
        [](S v, S) { return v > S(0) ? S(1) : S(0); });
}

template <typename S>
Tensor<S> gelu(const Tensor<S>& x) {
    // Exact form: 0.5 x (1 + erf(x / sqrt(2))).
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    constexpr double inv_sqrt2pi = 0.39894228040143267794;
    return unary_op<S>(
        x,
        [](S v) {
            return static_cast<S>(0.5 * static_cast<double>(v) *
                                  (1.0 + std::erf(static_cast<double>(v) * inv_sqrt2)));
        },
        [](S v, S) {
            const double vd = static_cast<double>(v);
            const double cdf = 0.5 * (1.0 + std::erf(vd * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * vd * vd);
            return static_cast<S>(cdf + vd * pdf);
        });
}

template <typename S>
Tensor<S> exp(const Tensor<S>& x) {
    return unary_op<S>(
        x, [](S v) { return static_cast<S>(std::exp(static_cast<double>(v))); },
        [](S, S y) { return y; });
}

template <typename S>
Tensor<S> log(const Tensor<S>& x) {
    for (S v : x.values()) {
        if (!(v > S(0))) {
            throw DomainError("log: input must be strictly positive, got " +
                              std::to_string(static_cast<double>(v)));
        }
    }
    return unary_op<S>(
        x, [](S v) { return static_cast<S>(std::log(static_cast<double>(v))); },
        [](S v, S) { return S(1) / v; });
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    return unary_op<S>(
        x,
        [](S v) {
            const double vd = static_cast<double>(v);
            return static_cast<S>(vd >= 0 ? 1.0 / (1.0 + std::exp(-vd))
                                          : std::exp(vd) / (1.0 + std::exp(vd)));
        },
        [](S, S y) { return y * (S(1) - y); });
}

// |x| with subgradient 0 at x == 0.
template <typename S>
Tensor<S> abs(const Tensor<S>& x) {
    return unary_op<S>(
        x, [](S v) { return v < S(0) ? -v : v; },
        [](S v, S) { return v > S(0) ? S(1) : (v < S(0) ? S(-1) : S(0)); });
}

template <typename S>
Tensor<S> sqrt(const Tensor<S>& x) {
    for (S v : x.values()) {
        if (v < S(0)) {
            throw DomainError("sqrt: input must be nonnegative, got " +
                              std::to_string(static_cast<double>(v)));
        }
    }
    return unary_op<S>(
        x, [](S v) { return static_cast<S>(std::sqrt(static_cast<double>(v))); },
        [](S, S y) { return S(1) / (S(2) * y); });
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<S> out(m * n, S(0));
    {
        const S* pa = a.values().data();
        const S* pb = b.values().data();
        S* pc = out.data();
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t l = 0; l < k; ++l) {
                const S ail = pa[i * k + l];
                if (ail == S(0)) continue;
                const S* brow = pb + l * n;
                S* crow = pc + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += ail * brow[j];
            }
        }
    }
    auto an = a.node();
    auto bn = b.node();
    return make_op<S>({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](TensorNode<S>& o) {
        const S* pa = an->data.data();
        const S* pb = bn->data.data();
        const S* pg = o.grad.data();
        if (an->requires_grad) {
            an->ensure_grad();
            S* pda = an->grad.data();
            // dA = dC * B^T
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t l = 0; l < k; ++l) {
                    S s = 0;
                    const S* grow = pg + i * n;
                    const S* brow = pb + l * n;
                    for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
                    pda[i * k + l] += s;
                }
            }
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            S* pdb = bn->grad.data();
            // dB = A^T * dC
            for (std::size_t i = 0; i < m; ++i) {
                const S* grow = pg + i * n;
                for (std::size_t l = 0; l < k; ++l) {
                    const S ail = pa[i * k + l];
                    if (ail == S(0)) continue;
                    S* dbrow = pdb + l * n;
                    for (std::size_t j = 0; j < n; ++j) dbrow[j] += ail * grow[j];
                }
            }
        }
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
    S total = 0;
    for (S v : x.values()) total += v;
    auto xn = x.node();
    return make_op<S>({1}, {total}, {x}, [xn](TensorNode<S>& o) {
        const S g = o.grad[0];
        xn->ensure_grad();
        for (auto& gv : xn->grad) gv += g;
    });
}

template <typename S>
Tensor<S> mean(const Tensor<S>& x) {
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

// ---------------------------------------------------------------------------
// softmax over the last axis (max-subtracted)
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, std::size_t axis);

template <typename S>
Tensor<S> transpose(const Tensor<S>& x);

template <typename S>
Tensor<S> softmax_lastaxis(const Tensor<S>& x) {
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    std::vector<S> out(x.numel());
    const S* px = x.values().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const S* row = px + r * d;
        S* orow = out.data() + r * d;
        S mx = row[0];
        for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
        S denom = 0;
        for (std::size_t j = 0; j < d; ++j) {
            orow[j] = static_cast<S>(std::exp(static_cast<double>(row[j] - mx)));
            denom += orow[j];
        }
        for (std::size_t j = 0; j < d; ++j) orow[j] /= denom;
    }
    auto xn = x.node();
    return make_op<S>(x.shape(), std::move(out), {x}, [xn, rows, d](TensorNode<S>& o) {
        xn->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const S* y = o.data.data() + r * d;
            const S* gy = o.grad.data() + r * d;
            S dot = 0;
            for (std::size_t j = 0; j < d; ++j) dot += y[j] * gy[j];
            S* gx = xn->grad.data() + r * d;
            for (std::size_t j = 0; j < d; ++j) gx[j] += y[j] * (gy[j] - dot);
        }
    });
}

template <typename S>
Tensor<S> softmax(const Tensor<S>& x, std::size_t axis) {
    if (x.rank() == 0) throw ShapeError("softmax: rank-0 input");
    if (axis == x.rank() - 1) return softmax_lastaxis(x);
    if (x.rank() == 2 && axis == 0) return transpose(softmax_lastaxis(transpose(x)));
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " +
                     shape_str(x.shape()));
}

// ---------------------------------------------------------------------------
// layer norm over the last axis
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& bias,
                     double eps = 1e-5) {
    if (eps <= 0) throw DomainError("layer_norm: eps must be > 0");
    const std::size_t d = x.shape().back();
    if (gain.numel() != d || bias.numel() != d) {
        throw ShapeError("layer_norm: gain/bias must have " + std::to_string(d) +
                         " elements, got " + shape_str(gain.shape()) + "/" +
                         shape_str(bias.shape()));
    }
    const std::size_t rows = x.numel() / d;
    std::vector<S> out(x.numel());
    std::vector<S> xhat(x.numel());
    std::vector<S> inv_std(rows);
    const S* px = x.values().data();
    const S* pg = gain.values().data();
    const S* pb = bias.values().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const S* row = px + r * d;
        S mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<S>(d);
        S var = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const S c = row[j] - mu;
            var += c * c;
        }
        var /= static_cast<S>(d);
        const S inv = static_cast<S>(1.0 / std::sqrt(static_cast<double>(var) + eps));
        inv_std[r] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const S xh = (row[j] - mu) * inv;
            xhat[r * d + j] = xh;
            out[r * d + j] = xh * pg[j] + pb[j];
        }
    }
    auto xn = x.node();
    auto gn = gain.node();
    auto bn = bias.node();
    return make_op<S>(
        x.shape(), std::move(out), {x, gain, bias},
        [xn, gn, bn, rows, d, xhat = std::move(xhat),
         inv_std = std::move(inv_std)](TensorNode<S>& o) {
            const S* pg2 = gn->data.data();
            for (std::size_t r = 0; r < rows; ++r) {
                const S* gy = o.grad.data() + r * d;
                const S* xh = xhat.data() + r * d;
                if (gn->requires_grad || bn->requires_grad) {
                    for (std::size_t j = 0; j < d; ++j) {
                        accumulate(gn, j, gy[j] * xh[j]);
                        accumulate(bn, j, gy[j]);
                    }
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    S* gx = xn->grad.data() + r * d;
                    S sum_dxhat = 0, sum_dxhat_xhat = 0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const S dxh = gy[j] * pg2[j];
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xh[j];
                    }
                    const S inv = inv_std[r];
                    const S invd = S(1) / static_cast<S>(d);
                    for (std::size_t j = 0; j < d; ++j) {
                        const S dxh = gy[j] * pg2[j];
                        gx[j] += inv * (dxh - invd * sum_dxhat - xh[j] * invd * sum_dxhat_xhat);
                    }
                }
            }
        });
}

// ---------------------------------------------------------------------------
// data-movement ops
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                         shape_str(shape));
    }
    auto xn = x.node();
    std::vector<S> out = x.values();
    return make_op<S>(std::move(shape), std::move(out), {x}, [xn](TensorNode<S>& o) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[i] += o.grad[i];
    });
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& x) {
    if (x.rank() != 2) throw ShapeError("transpose: expects rank-2, got " + shape_str(x.shape()));
    const std::size_t m = x.dim(0), n = x.dim(1);
    std::vector<S> out(m * n);
    const S* px = x.values().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = px[i * n + j];
    auto xn = x.node();
    return make_op<S>({n, m}, std::move(out), {x}, [xn, m, n](TensorNode<S>& o) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) xn->grad[i * n + j] += o.grad[j * m + i];
    });
}

// Gather: out[i] = x[index[i]]. Indices may repeat; backward scatter-adds.
template <typename S>
Tensor<S> gather_elements(const Tensor<S>& x, std::vector<std::size_t> index, Shape out_shape) {
    if (shape_numel(out_shape) != index.size()) {
        throw ShapeError("gather_elements: index count " + std::to_string(index.size()) +
                         " does not match output shape " + shape_str(out_shape));
    }
    std::vector<S> out(index.size());
    const S* px = x.values().data();
    for (std::size_t i = 0; i < index.size(); ++i) out[i] = px[index[i]];
    auto xn = x.node();
    return make_op<S>(std::move(out_shape), std::move(out), {x},
                      [xn, index = std::move(index)](TensorNode<S>& o) {
                          xn->ensure_grad();
                          for (std::size_t i = 0; i < index.size(); ++i)
                              xn->grad[index[i]] += o.grad[i];
                      });
}

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& x, std::size_t r0, std::size_t r1) {
    if (x.rank() < 1 || r1 > x.dim(0) || r0 >= r1) {
        throw ShapeError("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") invalid for shape " + shape_str(x.shape()));
    }
    const std::size_t row = x.numel() / x.dim(0);
    Shape os = x.shape();
    os[0] = r1 - r0;
    std::vector<S> out(x.values().begin() + r0 * row, x.values().begin() + r1 * row);
    auto xn = x.node();
    return make_op<S>(std::move(os), std::move(out), {x}, [xn, r0, row](TensorNode<S>& o) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < o.grad.size(); ++i) xn->grad[r0 * row + i] += o.grad[i];
    });
}

template <typename S>
Tensor<S> slice_cols(const Tensor<S>& x, std::size_t c0, std::size_t c1) {
    if (x.rank() != 2 || c1 > x.dim(1) || c0 >= c1) {
        throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") invalid for shape " + shape_str(x.shape()));
    }
    const std::size_t m = x.dim(0), n = x.dim(1), w = c1 - c0;
    std::vector<S> out(m * w);
    const S* px = x.values().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = px[i * n + c0 + j];
    auto xn = x.node();
    return make_op<S>({m, w}, std::move(out), {x}, [xn, m, n, w, c0](TensorNode<S>& o) {
        xn->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) xn->grad[i * n + c0 + j] += o.grad[i * w + j];
    });
}

template <typename S>
Tensor<S> concat_rows(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != b.rank() || a.rank() < 1 ||
        !std::equal(a.shape().begin() + 1, a.shape().end(), b.shape().begin() + 1)) {
        throw ShapeError("concat_rows: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " disagree beyond axis 0");
    }
    Shape os = a.shape();
    os[0] += b.dim(0);
    std::vector<S> out;
    out.reserve(a.numel() + b.numel());
    out.insert(out.end(), a.values().begin(), a.values().end());
    out.insert(out.end(), b.values().begin(), b.values().end());
    auto an = a.node();
    auto bn = b.node();
    const std::size_t na = a.numel();
    return make_op<S>(std::move(os), std::move(out), {a, b}, [an, bn, na](TensorNode<S>& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < na; ++i) an->grad[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = na; i < o.grad.size(); ++i) bn->grad[i - na] += o.grad[i];
        }
    });
}

template <typename S>
Tensor<S> concat_cols(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0)) {
        throw ShapeError("concat_cols: shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()) + " disagree on rows");
    }
    const std::size_t m = a.dim(0), wa = a.dim(1), wb = b.dim(1);
    std::vector<S> out(m * (wa + wb));
    const S* pa = a.values().data();
    const S* pb = b.values().data();
    for (std::size_t i = 0; i < m; ++i) {
        std::copy(pa + i * wa, pa + (i + 1) * wa, out.begin() + i * (wa + wb));
        std::copy(pb + i * wb, pb + (i + 1) * wb, out.begin() + i * (wa + wb) + wa);
    }
    auto an = a.node();
    auto bn = b.node();
    return make_op<S>({m, wa + wb}, std::move(out), {a, b}, [an, bn, m, wa, wb](TensorNode<S>& o) {
        for (std::size_t i = 0; i < m; ++i) {
            const S* grow = o.grad.data() + i * (wa + wb);
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t j = 0; j < wa; ++j) an->grad[i * wa + j] += grow[j];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t j = 0; j < wb; ++j) bn->grad[i * wb + j] += grow[wa + j];
            }
        }
    });
}

// ---------------------------------------------------------------------------
// multi-head scaled dot-product attention
// ---------------------------------------------------------------------------

// q, k, v: (L, D) already-projected sequences. Returns the concatenation of
// the per-head attention outputs, (L, D); the caller owns any output
// projection.
template <typename S>
Tensor<S> multi_head_attention(const Tensor<S>& q, const Tensor<S>& k, const Tensor<S>& v,
                               std::size_t heads) {
    if (q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape()) {
        throw ShapeError("attention: q/k/v shapes must agree, got " + shape_str(q.shape()) +
                         ", " + shape_str(k.shape()) + ", " + shape_str(v.shape()));
    }
    const std::size_t d = q.dim(1);
    if (heads == 0 || d % heads != 0) {
        throw ConfigError("attention: width " + std::to_string(d) + " not divisible by " +
                          std::to_string(heads) + " heads");
    }
    const std::size_t dh = d / heads;
    const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor<S> out;
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor<S> qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor<S> kh = slice_cols(k, h * dh, (h + 1) * dh);
        Tensor<S> vh = slice_cols(v, h * dh, (h + 1) * dh);
        Tensor<S> att = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt_dh), 1);
        Tensor<S> oh = matmul(att, vh);
        out = (h == 0) ? oh : concat_cols(out, oh);
    }
    return out;
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

template <typename S>
void backward(const Tensor<S>& loss) {
    if (loss.numel() != 1) {
        throw ContractError("backward: loss must be scalar, got shape " +
                            shape_str(loss.shape()));
    }
    auto root = loss.node();
    if (root->backward_ran) {
        throw ContractError("backward: already ran on this graph; build a fresh loss "
                            "or reset gradients first");
    }
    root->backward_ran = true;
    if (!root->requires_grad) return;

    // Iterative post-order DFS gives the topological order.
    std::vector<TensorNode<S>*> topo;
    std::unordered_set<TensorNode<S>*> visited;
    struct Frame {
        TensorNode<S>* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack{{root.get(), 0}};
    visited.insert(root.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            TensorNode<S>* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
        } else {
            topo.push_back(f.node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += S(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        TensorNode<S>* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

// ---------------------------------------------------------------------------
// finite-difference gradient oracle
// ---------------------------------------------------------------------------

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
};

// Central finite differences against the analytic gradients of f. f must be
// deterministic (freeze any RNG inside). Relative error uses a small floor so
// that near-zero gradient pairs are compared absolutely at the floor scale.
template <typename S>
GradCheckReport grad_check(const std::function<Tensor<S>(const std::vector<Tensor<S>>&)>& f,
                           std::vector<Tensor<S>> inputs, double eps = 1e-6) {
    static_assert(std::is_same_v<S, double>,
                  "finite differences are only reliable at 64-bit precision");
    for (auto& in : inputs) in.set_requires_grad(true);

    Tensor<S> loss = f(inputs);
    if (loss.numel() != 1) throw ContractError("grad_check: f must be scalar-valued");
    backward(loss);

    std::vector<std::vector<S>> analytic;
    for (auto& in : inputs) {
        analytic.push_back(in.has_grad() ? in.grad() : std::vector<S>(in.numel(), S(0)));
        in.zero_grad();
    }

    GradCheckReport rep;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        auto& data = inputs[t].mutable_values();
        for (std::size_t i = 0; i < data.size(); ++i) {
            const S saved = data[i];
            data[i] = saved + static_cast<S>(eps);
            const double fp = static_cast<double>(f(inputs).item());
            data[i] = saved - static_cast<S>(eps);
            const double fm = static_cast<double>(f(inputs).item());
            data[i] = saved;
            const double num = (fp - fm) / (2.0 * eps);
            const double ana = static_cast<double>(analytic[t][i]);
            const double denom = std::max({std::fabs(num), std::fabs(ana), 1e-3});
            const double rel = std::fabs(num - ana) / denom;
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_input = t;
                rep.worst_index = i;
                rep.analytic = ana;
                rep.numeric = num;
            }
        }
    }
    return rep;
}

}  // namespace jscc

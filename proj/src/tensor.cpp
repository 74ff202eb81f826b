#include "chartcast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "chartcast/rng.hpp"

namespace chartcast {

using detail::TensorNode;

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << "x";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

namespace {

std::shared_ptr<TensorNode> new_node(Shape shape, std::vector<real> values,
                                     bool requires_grad) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    if (shape_numel(n->shape) != n->values.size()) {
        throw std::invalid_argument("tensor shape " + shape_str(n->shape) +
                                    " does not match value count " +
                                    std::to_string(n->values.size()));
    }
    return n;
}

void ensure_grad(TensorNode* n) {
    if (n->grad.size() != n->values.size()) {
        n->grad.assign(n->values.size(), real(0));
    }
}

std::size_t last_dim(const Shape& shape) {
    if (shape.empty()) return 1;
    if (shape.back() == 0) throw std::invalid_argument("empty tensor axis");
    return shape.back();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
}

}  // namespace

Tensor make_op(Shape shape, std::vector<real> values,
               std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backprop);

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<real> v(shape_numel(shape), real(0));
    return Tensor(new_node(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::full(Shape shape, real value, bool requires_grad) {
    std::vector<real> v(shape_numel(shape), value);
    return Tensor(new_node(std::move(shape), std::move(v), requires_grad));
}

Tensor Tensor::from_values(Shape shape, std::vector<real> values,
                           bool requires_grad) {
    return Tensor(new_node(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(real value, bool requires_grad) {
    return Tensor(new_node(Shape{}, {value}, requires_grad));
}

std::size_t Tensor::rows() const {
    const Shape& s = node_->shape;
    if (s.empty()) return 1;
    std::size_t r = 1;
    for (std::size_t i = 0; i + 1 < s.size(); ++i) r *= s[i];
    return r;
}

std::size_t Tensor::cols() const { return last_dim(node_->shape); }

void Tensor::set_requires_grad(bool rg) { node_->requires_grad = rg; }

void Tensor::zero_grad() {
    node_->grad.assign(node_->values.size(), real(0));
}

bool Tensor::all_finite() const {
    for (real v : node_->values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor make_op(Shape shape, std::vector<real> values,
               std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backprop) {
    bool rg = false;
    for (const Tensor& p : parents) rg = rg || p.requires_grad();
    auto n = new_node(std::move(shape), std::move(values), rg);
    if (rg) {
        n->backprop = std::move(backprop);
        n->parents.reserve(parents.size());
        for (const Tensor& p : parents) n->parents.push_back(p.node_shared());
    }
    return Tensor::adopt(std::move(n));
}

void backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got " +
                                    shape_str(loss.shape()));
    }
    TensorNode* root = loss.node();
    if (!root->requires_grad) return;

    // Iterative post-order DFS.
    static int epoch = 0;
    ++epoch;
    std::vector<TensorNode*> order;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root, 0);
    root->topo_mark = epoch;
    while (!stack.empty()) {
        auto& [node, next_child] = stack.back();
        if (next_child < node->parents.size()) {
            TensorNode* child = node->parents[next_child].get();
            ++next_child;
            if (child->topo_mark != epoch && child->requires_grad) {
                child->topo_mark = epoch;
                stack.emplace_back(child, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (TensorNode* n : order) ensure_grad(n);
    root->grad.assign(1, real(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backprop) {
            for (auto& p : n->parents) {
                if (p->requires_grad) ensure_grad(p.get());
            }
            n->backprop(*n);
        }
    }
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd) {
    const auto& av = a.values();
    std::vector<real> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
    return make_op(a.shape(), std::move(out), {a}, [bwd](TensorNode& n) {
        TensorNode* pa = n.parents[0].get();
        if (!pa->requires_grad) return;
        const std::size_t sz = n.values.size();
        for (std::size_t i = 0; i < sz; ++i) {
            pa->grad[i] += bwd(pa->values[i], n.values[i]) * n.grad[i];
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<real> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
        for (int side = 0; side < 2; ++side) {
            TensorNode* p = n.parents[side].get();
            if (!p->requires_grad) continue;
            for (std::size_t i = 0; i < n.grad.size(); ++i) p->grad[i] += n.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<real> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
        TensorNode* pa = n.parents[0].get();
        TensorNode* pb = n.parents[1].get();
        if (pa->requires_grad) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) pa->grad[i] += n.grad[i];
        }
        if (pb->requires_grad) {
            for (std::size_t i = 0; i < n.grad.size(); ++i) pb->grad[i] -= n.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<real> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
        TensorNode* pa = n.parents[0].get();
        TensorNode* pb = n.parents[1].get();
        if (pa->requires_grad) {
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                pa->grad[i] += pb->values[i] * n.grad[i];
        }
        if (pb->requires_grad) {
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                pb->grad[i] += pa->values[i] * n.grad[i];
        }
    });
}

Tensor div_elem(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "div_elem");
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<real> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] / bv[i];
    return make_op(a.shape(), std::move(out), {a, b}, [](TensorNode& n) {
        TensorNode* pa = n.parents[0].get();
        TensorNode* pb = n.parents[1].get();
        if (pa->requires_grad) {
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                pa->grad[i] += n.grad[i] / pb->values[i];
        }
        if (pb->requires_grad) {
            for (std::size_t i = 0; i < n.grad.size(); ++i)
                pb->grad[i] -= n.grad[i] * pa->values[i] /
                               (pb->values[i] * pb->values[i]);
        }
    });
}

Tensor scale(const Tensor& a, real c) {
    return unary_op(
        a, [c](real x) { return c * x; },
        [c](real, real) { return c; });
}

Tensor add_const(const Tensor& a, real c) {
    return unary_op(
        a, [c](real x) { return x + c; }, [](real, real) { return real(1); });
}

Tensor neg(const Tensor& a) { return scale(a, real(-1)); }

Tensor square(const Tensor& a) {
    return unary_op(
        a, [](real x) { return x * x; },
        [](real x, real) { return real(2) * x; });
}

Tensor sqrt_elem(const Tensor& a) {
    return unary_op(
        a, [](real x) { return std::sqrt(x); },
        [](real, real y) { return real(0.5) / y; });
}

Tensor abs_elem(const Tensor& a) {
    return unary_op(
        a, [](real x) { return std::abs(x); },
        [](real x, real) {
            return x > 0 ? real(1) : (x < 0 ? real(-1) : real(0));
        });
}

Tensor exp_elem(const Tensor& a) {
    return unary_op(
        a, [](real x) { return std::exp(x); }, [](real, real y) { return y; });
}

Tensor log_elem(const Tensor& a) {
    return unary_op(
        a, [](real x) { return std::log(x); },
        [](real x, real) { return real(1) / x; });
}

Tensor gelu(const Tensor& a) {
    constexpr real inv_sqrt2 = real(0.70710678118654752440);
    constexpr real inv_sqrt_2pi = real(0.39894228040143267794);
    return unary_op(
        a,
        [](real x) {
            return real(0.5) * x * (real(1) + std::erf(x * inv_sqrt2));
        },
        [](real x, real) {
            const real cdf = real(0.5) * (real(1) + std::erf(x * inv_sqrt2));
            const real pdf = inv_sqrt_2pi * std::exp(real(-0.5) * x * x);
            return cdf + x * pdf;
        });
}

Tensor relu(const Tensor& a) {
    return unary_op(
        a, [](real x) { return x > 0 ? x : real(0); },
        [](real x, real) { return x > 0 ? real(1) : real(0); });
}

// ---------------------------------------------------------------------------
// broadcast helpers
// ---------------------------------------------------------------------------

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    const std::size_t n = a.cols();
    if (v.numel() != n) {
        throw std::invalid_argument("add_rowvec: vector length " +
                                    std::to_string(v.numel()) +
                                    " does not match row width " +
                                    std::to_string(n));
    }
    const std::size_t m = a.rows();
    const auto& av = a.values();
    const auto& vv = v.values();
    std::vector<real> out(av.size());
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] + vv[j];
    }
    return make_op(a.shape(), std::move(out), {a, v}, [m, n](TensorNode& nd) {
        TensorNode* pa = nd.parents[0].get();
        TensorNode* pv = nd.parents[1].get();
        if (pa->requires_grad) {
            for (std::size_t i = 0; i < nd.grad.size(); ++i)
                pa->grad[i] += nd.grad[i];
        }
        if (pv->requires_grad) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    pv->grad[j] += nd.grad[i * n + j];
        }
    });
}

Tensor div_colvec(const Tensor& a, const Tensor& c) {
    const std::size_t m = a.rows();
    const std::size_t n = a.cols();
    if (c.numel() != m) {
        throw std::invalid_argument("div_colvec: column vector length " +
                                    std::to_string(c.numel()) +
                                    " does not match row count " +
                                    std::to_string(m));
    }
    const auto& av = a.values();
    const auto& cv = c.values();
    std::vector<real> out(av.size());
    for (std::size_t i = 0; i < m; ++i) {
        const real inv = real(1) / cv[i];
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] * inv;
    }
    return make_op(a.shape(), std::move(out), {a, c}, [m, n](TensorNode& nd) {
        TensorNode* pa = nd.parents[0].get();
        TensorNode* pc = nd.parents[1].get();
        for (std::size_t i = 0; i < m; ++i) {
            const real ci = pc->values[i];
            const real inv = real(1) / ci;
            if (pa->requires_grad) {
                for (std::size_t j = 0; j < n; ++j)
                    pa->grad[i * n + j] += nd.grad[i * n + j] * inv;
            }
            if (pc->requires_grad) {
                real acc = 0;
                for (std::size_t j = 0; j < n; ++j)
                    acc += nd.grad[i * n + j] * pa->values[i * n + j];
                pc->grad[i] -= acc * inv * inv;
            }
        }
    });
}

Tensor mul_scalar_tensor(const Tensor& a, const Tensor& s) {
    if (s.numel() != 1) {
        throw std::invalid_argument("mul_scalar_tensor: scalar expected");
    }
    const real sv = s.value_at(0);
    const auto& av = a.values();
    std::vector<real> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * sv;
    return make_op(a.shape(), std::move(out), {a, s}, [](TensorNode& nd) {
        TensorNode* pa = nd.parents[0].get();
        TensorNode* ps = nd.parents[1].get();
        const real sv = ps->values[0];
        if (pa->requires_grad) {
            for (std::size_t i = 0; i < nd.grad.size(); ++i)
                pa->grad[i] += nd.grad[i] * sv;
        }
        if (ps->requires_grad) {
            real acc = 0;
            for (std::size_t i = 0; i < nd.grad.size(); ++i)
                acc += nd.grad[i] * pa->values[i];
            ps->grad[0] += acc;
        }
    });
}

// ---------------------------------------------------------------------------
// linear algebra / structure
// ---------------------------------------------------------------------------

namespace {

// C (m x n) += A (m x k) * B (k x n), row-major, ikj order.
void gemm_acc(const real* a, const real* b, real* c, std::size_t m,
              std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        real* crow = c + i * n;
        const real* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const real aip = arow[p];
            if (aip == real(0)) continue;
            const real* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
        }
    }
}

// C (m x k) += G (m x n) * B^T (n x k): C_ip += sum_j G_ij B_pj.
void gemm_bt_acc(const real* g, const real* b, real* c, std::size_t m,
                 std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const real* grow = g + i * n;
        real* crow = c + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const real* brow = b + p * n;
            real acc = 0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            crow[p] += acc;
        }
    }
}

// C (k x n) += A^T (k x m) * G (m x n): C_pj += sum_i A_ip G_ij.
void gemm_at_acc(const real* a, const real* g, real* c, std::size_t m,
                 std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const real* arow = a + i * k;
        const real* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const real aip = arow[p];
            if (aip == real(0)) continue;
            real* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aip * grow[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const std::size_t m = a.rows(), k = a.cols();
    const std::size_t k2 = b.rows(), n = b.cols();
    if (k != k2) {
        throw std::invalid_argument("matmul: inner dims differ, " +
                                    shape_str(a.shape()) + " * " +
                                    shape_str(b.shape()));
    }
    std::vector<real> out(m * n, real(0));
    gemm_acc(a.values().data(), b.values().data(), out.data(), m, k, n);
    return make_op(Shape{m, n}, std::move(out), {a, b},
                   [m, k, n](TensorNode& nd) {
                       TensorNode* pa = nd.parents[0].get();
                       TensorNode* pb = nd.parents[1].get();
                       if (pa->requires_grad) {
                           gemm_bt_acc(nd.grad.data(), pb->values.data(),
                                       pa->grad.data(), m, k, n);
                       }
                       if (pb->requires_grad) {
                           gemm_at_acc(pa->values.data(), nd.grad.data(),
                                       pb->grad.data(), m, k, n);
                       }
                   });
}

Tensor transpose(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    const auto& av = a.values();
    std::vector<real> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
    return make_op(Shape{n, m}, std::move(out), {a}, [m, n](TensorNode& nd) {
        TensorNode* pa = nd.parents[0].get();
        if (!pa->requires_grad) return;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                pa->grad[i * n + j] += nd.grad[j * m + i];
    });
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw std::invalid_argument("reshape: element count mismatch " +
                                    shape_str(a.shape()) + " -> " +
                                    shape_str(shape));
    }
    return make_op(std::move(shape), a.values(), {a}, [](TensorNode& nd) {
        TensorNode* pa = nd.parents[0].get();
        if (!pa->requires_grad) return;
        for (std::size_t i = 0; i < nd.grad.size(); ++i)
            pa->grad[i] += nd.grad[i];
    });
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
    const std::size_t m = a.rows(), n = a.cols();
    if (r0 > r1 || r1 > m) {
        throw std::invalid_argument("slice_rows: bad range");
    }
    const auto& av = a.values();
    std::vector<real> out(av.begin() + static_cast<std::ptrdiff_t>(r0 * n),
                          av.begin() + static_cast<std::ptrdiff_t>(r1 * n));
    return make_op(Shape{r1 - r0, n}, std::move(out), {a},
                   [r0, n](TensorNode& nd) {
                       TensorNode* pa = nd.parents[0].get();
                       if (!pa->requires_grad) return;
                       for (std::size_t i = 0; i < nd.grad.size(); ++i)
                           pa->grad[r0 * n + i] += nd.grad[i];
                   });
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    const std::size_t m = a.rows(), n = a.cols();
    if (c0 > c1 || c1 > n) {
        throw std::invalid_argument("slice_cols: bad range");
    }
    const std::size_t w = c1 - c0;
    const auto& av = a.values();
    std::vector<real> out(m * w);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = av[i * n + c0 + j];
    return make_op(Shape{m, w}, std::move(out), {a},
                   [m, n, c0, w](TensorNode& nd) {
                       TensorNode* pa = nd.parents[0].get();
                       if (!pa->requires_grad) return;
                       for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < w; ++j)
                               pa->grad[i * n + c0 + j] += nd.grad[i * w + j];
                   });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: no parts");
    const std::size_t n = parts[0].cols();
    std::size_t m = 0;
    for (const Tensor& p : parts) {
        if (p.cols() != n)
            throw std::invalid_argument("concat_rows: column mismatch");
        m += p.rows();
    }
    std::vector<real> out;
    out.reserve(m * n);
    for (const Tensor& p : parts)
        out.insert(out.end(), p.values().begin(), p.values().end());
    return make_op(Shape{m, n}, std::move(out), parts, [](TensorNode& nd) {
        std::size_t off = 0;
        for (auto& p : nd.parents) {
            const std::size_t sz = p->values.size();
            if (p->requires_grad) {
                for (std::size_t i = 0; i < sz; ++i)
                    p->grad[i] += nd.grad[off + i];
            }
            off += sz;
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    const std::size_t m = parts[0].rows();
    std::size_t n = 0;
    for (const Tensor& p : parts) {
        if (p.rows() != m)
            throw std::invalid_argument("concat_cols: row mismatch");
        n += p.cols();
    }
    std::vector<real> out(m * n);
    std::vector<std::size_t> widths;
    widths.reserve(parts.size());
    std::size_t coff = 0;
    for (const Tensor& p : parts) {
        const std::size_t w = p.cols();
        widths.push_back(w);
        const auto& pv = p.values();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j)
                out[i * n + coff + j] = pv[i * w + j];
        coff += w;
    }
    return make_op(Shape{m, n}, std::move(out), parts,
                   [m, n, widths = std::move(widths)](TensorNode& nd) {
                       std::size_t coff = 0;
                       for (std::size_t pi = 0; pi < nd.parents.size(); ++pi) {
                           auto& p = nd.parents[pi];
                           const std::size_t w = widths[pi];
                           if (p->requires_grad) {
                               for (std::size_t i = 0; i < m; ++i)
                                   for (std::size_t j = 0; j < w; ++j)
                                       p->grad[i * w + j] +=
                                           nd.grad[i * n + coff + j];
                           }
                           coff += w;
                       }
                   });
}

Tensor embedding_rows(const Tensor& table,
                      const std::vector<std::size_t>& idx) {
    const std::size_t rows = table.rows(), n = table.cols();
    std::vector<real> out(idx.size() * n);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= rows)
            throw std::invalid_argument("embedding_rows: index out of range");
        std::copy_n(table.values().begin() +
                        static_cast<std::ptrdiff_t>(idx[i] * n),
                    n, out.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    return make_op(Shape{idx.size(), n}, std::move(out), {table},
                   [idx, n](TensorNode& nd) {
                       TensorNode* pt = nd.parents[0].get();
                       if (!pt->requires_grad) return;
                       for (std::size_t i = 0; i < idx.size(); ++i)
                           for (std::size_t j = 0; j < n; ++j)
                               pt->grad[idx[i] * n + j] += nd.grad[i * n + j];
                   });
}

Tensor diag(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    if (m != n) throw std::invalid_argument("diag: square matrix expected");
    std::vector<real> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = a.values()[i * n + i];
    return make_op(Shape{n}, std::move(out), {a}, [n](TensorNode& nd) {
        TensorNode* pa = nd.parents[0].get();
        if (!pa->requires_grad) return;
        for (std::size_t i = 0; i < n; ++i)
            pa->grad[i * n + i] += nd.grad[i];
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
    real acc = 0;
    for (real v : a.values()) acc += v;
    return make_op(Shape{}, {acc}, {a}, [](TensorNode& nd) {
        TensorNode* pa = nd.parents[0].get();
        if (!pa->requires_grad) return;
        const real g = nd.grad[0];
        for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += g;
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw std::invalid_argument("mean: empty tensor");
    real acc = 0;
    for (real v : a.values()) acc += v;
    const real inv = real(1) / static_cast<real>(a.numel());
    return make_op(Shape{}, {acc * inv}, {a}, [inv](TensorNode& nd) {
        TensorNode* pa = nd.parents[0].get();
        if (!pa->requires_grad) return;
        const real g = nd.grad[0] * inv;
        for (std::size_t i = 0; i < pa->grad.size(); ++i) pa->grad[i] += g;
    });
}

Tensor row_sums(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<real> out(m, real(0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += a.values()[i * n + j];
    return make_op(Shape{m, 1}, std::move(out), {a}, [m, n](TensorNode& nd) {
        TensorNode* pa = nd.parents[0].get();
        if (!pa->requires_grad) return;
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j)
                pa->grad[i * n + j] += nd.grad[i];
    });
}

Tensor logsumexp_rows(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    if (n == 0) throw std::invalid_argument("logsumexp_rows: empty axis");
    std::vector<real> out(m);
    for (std::size_t i = 0; i < m; ++i) {
        const real* row = a.values().data() + i * n;
        real mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        real acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += std::exp(row[j] - mx);
        out[i] = mx + std::log(acc);
    }
    return make_op(Shape{m, 1}, std::move(out), {a}, [m, n](TensorNode& nd) {
        TensorNode* pa = nd.parents[0].get();
        if (!pa->requires_grad) return;
        for (std::size_t i = 0; i < m; ++i) {
            const real g = nd.grad[i];
            const real lse = nd.values[i];
            for (std::size_t j = 0; j < n; ++j) {
                pa->grad[i * n + j] += g * std::exp(pa->values[i * n + j] - lse);
            }
        }
    });
}

// ---------------------------------------------------------------------------
// fused neural primitives
// ---------------------------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  real eps) {
    const std::size_t d = x.cols();
    if (d == 0) throw std::invalid_argument("layer_norm: empty axis");
    if (eps < 0) throw std::invalid_argument("layer_norm: eps must be >= 0");
    if (gamma.numel() != d || beta.numel() != d) {
        throw std::invalid_argument("layer_norm: gamma/beta length " +
                                    std::to_string(gamma.numel()) + "/" +
                                    std::to_string(beta.numel()) +
                                    " does not match feature dim " +
                                    std::to_string(d));
    }
    const std::size_t m = x.rows();
    const auto& xv = x.values();
    const auto& gv = gamma.values();
    const auto& bv = beta.values();
    std::vector<real> out(m * d);
    std::vector<real> norm(m * d);   // pre-affine normalized values
    std::vector<real> inv_std(m);
    const real invd = real(1) / static_cast<real>(d);
    for (std::size_t i = 0; i < m; ++i) {
        const real* row = xv.data() + i * d;
        real mu = 0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu *= invd;
        real var = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const real c = row[j] - mu;
            var += c * c;
        }
        var *= invd;
        const real inv = real(1) / std::sqrt(var + eps);
        inv_std[i] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const real y = (row[j] - mu) * inv;
            norm[i * d + j] = y;
            out[i * d + j] = gv[j] * y + bv[j];
        }
    }
    return make_op(
        x.shape(), std::move(out), {x, gamma, beta},
        [m, d, invd, norm = std::move(norm),
         inv_std = std::move(inv_std)](TensorNode& nd) {
            TensorNode* px = nd.parents[0].get();
            TensorNode* pg = nd.parents[1].get();
            TensorNode* pb = nd.parents[2].get();
            for (std::size_t i = 0; i < m; ++i) {
                const real* g = nd.grad.data() + i * d;
                const real* y = norm.data() + i * d;
                if (pg->requires_grad) {
                    for (std::size_t j = 0; j < d; ++j)
                        pg->grad[j] += g[j] * y[j];
                }
                if (pb->requires_grad) {
                    for (std::size_t j = 0; j < d; ++j) pb->grad[j] += g[j];
                }
                if (px->requires_grad) {
                    real mean_gy = 0, mean_gyy = 0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const real gg = g[j] * pg->values[j];
                        mean_gy += gg;
                        mean_gyy += gg * y[j];
                    }
                    mean_gy *= invd;
                    mean_gyy *= invd;
                    const real inv = inv_std[i];
                    for (std::size_t j = 0; j < d; ++j) {
                        const real gg = g[j] * pg->values[j];
                        px->grad[i * d + j] +=
                            inv * (gg - mean_gy - y[j] * mean_gyy);
                    }
                }
            }
        });
}

Tensor softmax(const Tensor& x) {
    const std::size_t m = x.rows(), n = x.cols();
    if (n == 0) throw std::invalid_argument("softmax: empty axis");
    std::vector<real> out(m * n);
    for (std::size_t i = 0; i < m; ++i) {
        const real* row = x.values().data() + i * n;
        real mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        real acc = 0;
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = std::exp(row[j] - mx);
            acc += out[i * n + j];
        }
        const real inv = real(1) / acc;
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= inv;
    }
    return make_op(x.shape(), std::move(out), {x}, [m, n](TensorNode& nd) {
        TensorNode* px = nd.parents[0].get();
        if (!px->requires_grad) return;
        for (std::size_t i = 0; i < m; ++i) {
            const real* s = nd.values.data() + i * n;
            const real* g = nd.grad.data() + i * n;
            real dot = 0;
            for (std::size_t j = 0; j < n; ++j) dot += g[j] * s[j];
            for (std::size_t j = 0; j < n; ++j)
                px->grad[i * n + j] += s[j] * (g[j] - dot);
        }
    });
}

Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const Tensor& wq, const Tensor& wk,
                            const Tensor& wv, const Tensor& wo,
                            std::size_t heads,
                            std::vector<real>* attn_weights_out) {
    const std::size_t dim = q.cols();
    if (heads == 0 || dim % heads != 0) {
        throw std::invalid_argument(
            "multi_head_attention: dim " + std::to_string(dim) +
            " not divisible by heads " + std::to_string(heads));
    }
    if (k.rows() == 0) {
        throw std::invalid_argument("multi_head_attention: no keys");
    }
    if (k.cols() != dim || v.cols() != dim) {
        throw std::invalid_argument("multi_head_attention: feature dims differ");
    }
    const std::size_t dk = dim / heads;
    const real inv_sqrt_dk = real(1) / std::sqrt(static_cast<real>(dk));

    Tensor qp = matmul(q, wq);
    Tensor kp = matmul(k, wk);
    Tensor vp = matmul(v, wv);

    if (attn_weights_out) attn_weights_out->clear();
    std::vector<Tensor> head_outs;
    head_outs.reserve(heads);
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor qh = slice_cols(qp, h * dk, (h + 1) * dk);
        Tensor kh = slice_cols(kp, h * dk, (h + 1) * dk);
        Tensor vh = slice_cols(vp, h * dk, (h + 1) * dk);
        Tensor logits = scale(matmul(qh, transpose(kh)), inv_sqrt_dk);
        Tensor weights = softmax(logits);
        if (attn_weights_out) {
            attn_weights_out->insert(attn_weights_out->end(),
                                     weights.values().begin(),
                                     weights.values().end());
        }
        head_outs.push_back(matmul(weights, vh));
    }
    Tensor merged = heads == 1 ? head_outs[0] : concat_cols(head_outs);
    return matmul(merged, wo);
}

// ---------------------------------------------------------------------------
// gradient checking
// ---------------------------------------------------------------------------

double grad_check(const std::function<Tensor()>& fn,
                  const std::vector<Tensor>& params, double eps,
                  std::size_t max_coords_per_param, std::uint64_t check_seed) {
    Tensor loss = fn();
    if (loss.numel() != 1) {
        throw std::invalid_argument("grad_check: fn must return a scalar");
    }
    for (const Tensor& p : params) {
        const_cast<Tensor&>(p).zero_grad();
    }
    backward(loss);

    std::vector<std::vector<real>> analytic;
    analytic.reserve(params.size());
    for (const Tensor& p : params) {
        if (p.grad().size() != p.numel()) {
            analytic.emplace_back(p.numel(), real(0));
        } else {
            analytic.push_back(p.grad());
        }
    }

    double worst = 0.0;
    Rng pick(check_seed ^ 0x5eedc0de);
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = const_cast<Tensor&>(params[pi]);
        std::vector<std::size_t> coords;
        const std::size_t n = p.numel();
        if (max_coords_per_param == 0 || n <= max_coords_per_param) {
            coords.resize(n);
            for (std::size_t i = 0; i < n; ++i) coords[i] = i;
        } else {
            for (std::size_t i = 0; i < max_coords_per_param; ++i)
                coords.push_back(pick.index(n));
        }
        for (std::size_t ci : coords) {
            const double g_analytic = static_cast<double>(analytic[pi][ci]);
            if (!std::isfinite(g_analytic)) {
                throw std::runtime_error(
                    "grad_check: non-finite analytic gradient in parameter #" +
                    std::to_string(pi));
            }
            const real saved = p.values()[ci];
            p.values()[ci] = saved + static_cast<real>(eps);
            const double lp = static_cast<double>(fn().scalar_value());
            p.values()[ci] = saved - static_cast<real>(eps);
            const double lm = static_cast<double>(fn().scalar_value());
            p.values()[ci] = saved;
            const double g_numeric = (lp - lm) / (2.0 * eps);
            if (!std::isfinite(g_numeric)) {
                throw std::runtime_error(
                    "grad_check: non-finite numeric gradient in parameter #" +
                    std::to_string(pi));
            }
            const double denom = std::max(
                {std::abs(g_analytic), std::abs(g_numeric), 1e-8});
            worst = std::max(worst, std::abs(g_analytic - g_numeric) / denom);
        }
    }
    return worst;
}

}  // namespace chartcast

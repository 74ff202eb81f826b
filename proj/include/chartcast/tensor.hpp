#pragma once

// Reverse-mode autodiff over dense row-major tensors. A Tensor is a cheap
// handle onto a heap node; ops build a dynamic graph and backward() walks it
// once in reverse topological order. Rank-0 and rank-1 tensors behave as 1xN
// matrices wherever a 2-D view is needed.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace chartcast {

#ifdef CHARTCAST_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<real> values;
    std::vector<real> grad;
    bool requires_grad = false;
    std::function<void(TensorNode&)> backprop;
    std::vector<std::shared_ptr<TensorNode>> parents;
    int topo_mark = 0;
};

}  // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, real value, bool requires_grad = false);
    static Tensor from_values(Shape shape, std::vector<real> values,
                              bool requires_grad = false);
    static Tensor scalar(real value, bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->values.size(); }
    std::size_t rank() const { return node_->shape.size(); }
    // 2-D view: product of leading dims x last dim.
    std::size_t rows() const;
    std::size_t cols() const;

    std::vector<real>& values() { return node_->values; }
    const std::vector<real>& values() const { return node_->values; }
    const std::vector<real>& grad() const { return node_->grad; }
    real value_at(std::size_t i) const { return node_->values[i]; }
    real scalar_value() const { return node_->values[0]; }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool rg);
    void zero_grad();
    bool all_finite() const;

    detail::TensorNode* node() const { return node_.get(); }
    const std::shared_ptr<detail::TensorNode>& node_shared() const {
        return node_;
    }
    static Tensor adopt(std::shared_ptr<detail::TensorNode> n) {
        return Tensor(std::move(n));
    }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> n)
        : node_(std::move(n)) {}

    std::shared_ptr<detail::TensorNode> node_;
};

// Internal op constructor: forward values plus a closure that scatters
// node.grad into the parents' grads. Exposed so layers can add fused ops.
Tensor make_op(Shape shape, std::vector<real> values,
               std::vector<Tensor> parents,
               std::function<void(detail::TensorNode&)> backprop);

// Seeds d(loss)/d(loss)=1 and accumulates into every reachable
// requires_grad node. Grads accumulate across calls until zero_grad().
void backward(const Tensor& loss);

// -- elementwise --------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div_elem(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, real c);
Tensor add_const(const Tensor& a, real c);
Tensor neg(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt_elem(const Tensor& a);
Tensor abs_elem(const Tensor& a);
Tensor exp_elem(const Tensor& a);
Tensor log_elem(const Tensor& a);
Tensor gelu(const Tensor& a);  // exact erf form
Tensor relu(const Tensor& a);

// -- broadcast ----------------------------------------------------------------
// a (m x n) + v (n):
Tensor add_rowvec(const Tensor& a, const Tensor& v);
// a (m x n) / c (m x 1), row-wise:
Tensor div_colvec(const Tensor& a, const Tensor& c);
// a * s where s is a scalar tensor (participates in the graph):
Tensor mul_scalar_tensor(const Tensor& a, const Tensor& s);

// -- structure ----------------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor embedding_rows(const Tensor& table, const std::vector<std::size_t>& idx);
Tensor diag(const Tensor& a);

// -- reductions ---------------------------------------------------------------
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor row_sums(const Tensor& a);      // (m x n) -> (m x 1)
Tensor logsumexp_rows(const Tensor& a);  // (m x n) -> (m x 1), overflow-safe

// -- fused neural primitives --------------------------------------------------
// Normalizes the last axis with population variance, then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  real eps);
// Softmax over the last axis with max subtraction.
Tensor softmax(const Tensor& x);
// Scaled dot-product attention with `heads` heads over row-major sequences
// q (Tq x D), k,v (Tk x D); wq/wk/wv/wo are (D x D), no biases. If
// attn_weights_out is given it receives heads*Tq*Tk softmax weights.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const Tensor& wq, const Tensor& wk,
                            const Tensor& wv, const Tensor& wo,
                            std::size_t heads,
                            std::vector<real>* attn_weights_out = nullptr);

// Central-difference check of d(fn)/d(params). Returns the worst relative
// error |a-n| / max(|a|,|n|,1e-8). With max_coords_per_param > 0 only that
// many coordinates per parameter are probed (picked from check_seed).
double grad_check(const std::function<Tensor()>& fn,
                  const std::vector<Tensor>& params, double eps,
                  std::size_t max_coords_per_param = 0,
                  std::uint64_t check_seed = 0);

}  // namespace chartcast

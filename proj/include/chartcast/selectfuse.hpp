#pragma once

// Variate selection and fusion. A single cross-attention decoder block uses
// each variate's language class token as the query over the whole-variate
// embedding matrix H (keys and values), with a residual FFN on top. The
// selected token is fused back into the language feature sequence and a
// flatten + linear head emits the forecast.

#include <cstddef>
#include <string>
#include <vector>

#include "chartcast/params.hpp"
#include "chartcast/tensor.hpp"

namespace chartcast {

struct SelectionOutput {
    Tensor selected;  // 1 x D, after the FFN residual
    Tensor pre_ffn;   // 1 x D, cls + attended value, before the FFN residual
    std::vector<real> attn;  // heads x N softmax weights, row-major
};

class SelectionBlock {
public:
    // n_variates fixes the learnable positional table for the variate path.
    SelectionBlock(ParamRegistry& reg, std::size_t dim, std::size_t heads,
                   std::size_t ffn_ratio, std::size_t n_variates);

    // Adds the variate-path positional embeddings to H (N x D).
    Tensor add_positions(const Tensor& h) const;

    // cls: 1 x D query; h: N x D keys/values. Both sides pass through the
    // shared pre-attention layer norm.
    SelectionOutput select(const Tensor& cls, const Tensor& h) const;

    std::size_t dim() const { return dim_; }
    std::size_t variates() const { return n_variates_; }

private:
    std::size_t dim_, heads_, n_variates_;
    Tensor ln1_g_, ln1_b_;
    Tensor wq_, wk_, wv_, wo_;
    Tensor ln2_g_, ln2_b_;
    Tensor w1_, b1_, w2_, b2_;
    Tensor pos_;
};

enum class FuseStrategy { replace_last, replace_first, concat_end };

FuseStrategy fuse_strategy_from_string(const std::string& name);
std::string to_string(FuseStrategy s);

// Sequence length after fusing into a seq_len-row feature matrix.
std::size_t fused_rows(std::size_t seq_len, FuseStrategy s);

// feats: (M+1) x D language features; v_cls: 1 x D selected token.
Tensor fuse(const Tensor& feats, const Tensor& v_cls, FuseStrategy s);

class ForecastHead {
public:
    // Flattens in_rows x dim features into one linear map onto the horizon.
    ForecastHead(ParamRegistry& reg, std::size_t in_rows, std::size_t dim,
                 std::size_t horizon);

    // 1 x horizon, in the normalized scale of the input window.
    Tensor forward(const Tensor& fused) const;

    // De-normalized with the window's per-variate statistics.
    Tensor predict(const Tensor& fused, real norm_mean, real norm_std) const;

    std::size_t horizon() const { return horizon_; }
    std::size_t input_rows() const { return in_rows_; }

private:
    std::size_t in_rows_, dim_, horizon_;
    Tensor w_, b_;
};

}  // namespace chartcast

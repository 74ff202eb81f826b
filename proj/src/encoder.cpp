#include "chartcast/encoder.hpp"

#include <stdexcept>

namespace chartcast {

TransformerBlock::TransformerBlock(ParamRegistry& reg,
                                   const std::string& prefix,
                                   const EncoderConfig& cfg, ParamGroup group)
    : heads_(cfg.heads), use_relu_(cfg.use_relu) {
    const std::size_t d = cfg.dim;
    if (d == 0 || cfg.heads == 0 || d % cfg.heads != 0) {
        throw std::invalid_argument("transformer block: dim " +
                                    std::to_string(d) +
                                    " must divide by heads " +
                                    std::to_string(cfg.heads));
    }
    const std::size_t f = d * cfg.ffn_ratio;
    ln1_g_ = reg.add_constant(prefix + ".ln1.weight", {d}, 1.0, group);
    ln1_b_ = reg.add_constant(prefix + ".ln1.bias", {d}, 0.0, group);
    wq_ = reg.add_xavier(prefix + ".attn.wq", d, d, group);
    wk_ = reg.add_xavier(prefix + ".attn.wk", d, d, group);
    wv_ = reg.add_xavier(prefix + ".attn.wv", d, d, group);
    wo_ = reg.add_xavier(prefix + ".attn.wo", d, d, group);
    ln2_g_ = reg.add_constant(prefix + ".ln2.weight", {d}, 1.0, group);
    ln2_b_ = reg.add_constant(prefix + ".ln2.bias", {d}, 0.0, group);
    w1_ = reg.add_xavier(prefix + ".ffn.w1", d, f, group);
    b1_ = reg.add_constant(prefix + ".ffn.b1", {f}, 0.0, group);
    w2_ = reg.add_xavier(prefix + ".ffn.w2", f, d, group);
    b2_ = reg.add_constant(prefix + ".ffn.b2", {d}, 0.0, group);
}

Tensor TransformerBlock::forward(const Tensor& x) const {
    constexpr real ln_eps = 1e-5;
    Tensor h = layer_norm(x, ln1_g_, ln1_b_, ln_eps);
    Tensor attended = multi_head_attention(h, h, h, wq_, wk_, wv_, wo_, heads_);
    Tensor mid = add(x, attended);
    Tensor f = layer_norm(mid, ln2_g_, ln2_b_, ln_eps);
    f = add_rowvec(matmul(f, w1_), b1_);
    f = use_relu_ ? relu(f) : gelu(f);
    f = add_rowvec(matmul(f, w2_), b2_);
    return add(mid, f);
}

Encoder::Encoder(ParamRegistry& reg, const std::string& prefix,
                 const EncoderConfig& cfg, ParamGroup group) {
    blocks_.reserve(cfg.depth);
    for (std::size_t i = 0; i < cfg.depth; ++i) {
        blocks_.emplace_back(reg, prefix + ".block" + std::to_string(i), cfg,
                             group);
    }
}

Tensor Encoder::forward(Tensor x) const {
    for (const TransformerBlock& b : blocks_) x = b.forward(x);
    return x;
}

}  // namespace chartcast

#pragma once

// Pre-norm transformer encoder shared by both branches: each block applies
// x + MHA(LN(x)) then x + FFN(LN(x)) with a GELU (or ReLU) two-layer FFN.

#include <string>
#include <vector>

#include "chartcast/params.hpp"
#include "chartcast/tensor.hpp"

namespace chartcast {

struct EncoderConfig {
    std::size_t dim = 64;
    std::size_t depth = 2;
    std::size_t heads = 4;
    std::size_t ffn_ratio = 4;
    bool use_relu = false;  // default nonlinearity is GELU
};

class TransformerBlock {
public:
    TransformerBlock(ParamRegistry& reg, const std::string& prefix,
                     const EncoderConfig& cfg, ParamGroup group);

    // x: (sequence length) x dim
    Tensor forward(const Tensor& x) const;

private:
    Tensor ln1_g_, ln1_b_, wq_, wk_, wv_, wo_;
    Tensor ln2_g_, ln2_b_, w1_, b1_, w2_, b2_;
    std::size_t heads_;
    bool use_relu_;
};

class Encoder {
public:
    Encoder() = default;  // empty stack: forward is the identity
    Encoder(ParamRegistry& reg, const std::string& prefix,
            const EncoderConfig& cfg, ParamGroup group);

    Tensor forward(Tensor x) const;
    std::size_t depth() const { return blocks_.size(); }

private:
    std::vector<TransformerBlock> blocks_;
};

}  // namespace chartcast

#pragma once

// The two modality branches. Language: overlapping patches of the
// normalized series are linearly tokenized, a shared class token is
// prepended, learnable positions added, and a small transformer encodes the
// sequence. The same encoder also embeds each whole variate (one token per
// variate) for the selection path. Vision: rendered charts pass through a
// patchified image transformer and an output projection into the shared
// multimodal width.

#include <cstddef>
#include <string>
#include <vector>

#include "chartcast/encoder.hpp"
#include "chartcast/params.hpp"
#include "chartcast/raster.hpp"
#include "chartcast/tensor.hpp"

namespace chartcast {

struct PatchConfig {
    std::size_t len = 16;    // steps per patch
    std::size_t stride = 8;  // steps between patch starts
};

// floor((T - PL) / S_p) + 2; requires 1 <= S_p <= PL <= T.
std::size_t patch_count(std::size_t lookback, const PatchConfig& cfg);

// M x PL values; the tail of the series is padded by replicating the final
// value so the last patch is always full.
std::vector<real> patchify(const std::vector<real>& v, const PatchConfig& cfg);

class LanguageBranch {
public:
    LanguageBranch(ParamRegistry& reg, std::size_t lookback,
                   const PatchConfig& patch, const EncoderConfig& enc);

    struct Encoded {
        Tensor features;  // (M+1) x D, row 0 is the encoded class token
        Tensor cls;       // 1 x D
    };

    // One normalized variate of length T.
    Encoded encode_series(const std::vector<real>& series) const;

    // Whole-variate embeddings through the shared encoder, one row per
    // variate. No positional information is added here; the selection
    // module owns the variate-position table.
    Tensor encode_variates(const std::vector<std::vector<real>>& variates) const;

    std::size_t patches() const { return patches_; }
    std::size_t dim() const { return dim_; }
    std::size_t sequence_length() const { return patches_ + 1; }

private:
    std::size_t lookback_, patches_, dim_;
    PatchConfig patch_;
    Tensor tok_w_, tok_b_;        // PL -> D tokenizer
    Tensor cls_;                  // shared class token, 1 x D
    Tensor pos_;                  // (M+1) x D
    Tensor var_tok_w_, var_tok_b_;  // T -> D whole-variate tokenizer
    Encoder encoder_;
};

struct VisionConfig {
    std::size_t dim = 64;  // internal width D_v
    std::size_t depth = 2;
    std::size_t heads = 4;
    std::size_t ffn_ratio = 4;
    std::size_t image_patch = 16;  // square patch edge in px
    bool mean_pool = false;        // default: class-token pooling
    bool freeze = false;           // stop gradients into the encoder
};

class VisionBranch {
public:
    // out_dim is the shared multimodal width D of the projection output.
    VisionBranch(ParamRegistry& reg, std::size_t image_height,
                 std::size_t image_width, const VisionConfig& cfg,
                 std::size_t out_dim);

    // Pooled pre-projection feature, 1 x D_v.
    Tensor encode_image(const VariateImage& image) const;

    // Projection into the shared space, 1 x D. Trainable even when the
    // encoder is frozen.
    Tensor project(const Tensor& feature) const;

    std::size_t tokens() const { return tokens_; }

    // Applies the freeze flag through the registry; returns parameters
    // touched. Call after construction when cfg.freeze is set.
    static std::size_t apply_freeze(ParamRegistry& reg, bool freeze);

private:
    std::size_t patch_px_, tokens_, dim_;
    bool mean_pool_;
    Tensor patch_w_, patch_b_;  // (patch*patch*3) -> D_v
    Tensor cls_;
    Tensor pos_;  // (tokens+1) x D_v
    Encoder encoder_;
    Tensor proj_w_, proj_b_;  // D_v -> D
};

}  // namespace chartcast

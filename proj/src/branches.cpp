#include "chartcast/branches.hpp"

#include <cmath>
#include <stdexcept>

namespace chartcast {

std::size_t patch_count(std::size_t lookback, const PatchConfig& cfg) {
    if (cfg.stride == 0) throw std::invalid_argument("patch stride must be positive");
    if (cfg.len < cfg.stride)
        throw std::invalid_argument("patch length must be >= stride");
    if (lookback < cfg.len)
        throw std::invalid_argument("lookback shorter than patch length");
    return (lookback - cfg.len) / cfg.stride + 2;
}

std::vector<real> patchify(const std::vector<real>& v, const PatchConfig& cfg) {
    const std::size_t m = patch_count(v.size(), cfg);
    std::vector<real> out(m * cfg.len);
    for (std::size_t p = 0; p < m; ++p) {
        const std::size_t start = p * cfg.stride;
        for (std::size_t j = 0; j < cfg.len; ++j) {
            const std::size_t t = start + j;
            out[p * cfg.len + j] = v[t < v.size() ? t : v.size() - 1];
        }
    }
    return out;
}

LanguageBranch::LanguageBranch(ParamRegistry& reg, std::size_t lookback,
                               const PatchConfig& patch, const EncoderConfig& enc)
    : lookback_(lookback),
      patches_(patch_count(lookback, patch)),
      dim_(enc.dim),
      patch_(patch),
      encoder_(reg, "lang.encoder", enc, ParamGroup::encoder) {
    tok_w_ = reg.add_kaiming("lang.tokenizer.weight", patch.len, dim_, ParamGroup::head);
    tok_b_ = reg.add_constant("lang.tokenizer.bias", {1, dim_}, 0.0, ParamGroup::head);
    cls_ = reg.add_normal("lang.cls", {1, dim_}, 0.02, ParamGroup::head);
    pos_ = reg.add_normal("lang.pos", {patches_ + 1, dim_}, 0.02, ParamGroup::head);
    var_tok_w_ = reg.add_kaiming("lang.variate_tokenizer.weight", lookback, dim_,
                                 ParamGroup::head);
    var_tok_b_ = reg.add_constant("lang.variate_tokenizer.bias", {1, dim_}, 0.0,
                                  ParamGroup::head);
}

LanguageBranch::Encoded LanguageBranch::encode_series(
    const std::vector<real>& series) const {
    if (series.size() != lookback_)
        throw std::invalid_argument("series length does not match configured lookback");
    const Tensor patches =
        Tensor::from_values({patches_, patch_.len}, patchify(series, patch_));
    Tensor tokens = add_rowvec(matmul(patches, tok_w_), tok_b_);
    tokens = concat_rows({cls_, tokens});
    tokens = add(tokens, pos_);
    const Tensor encoded = encoder_.forward(tokens);
    return {encoded, slice_rows(encoded, 0, 1)};
}

Tensor LanguageBranch::encode_variates(
    const std::vector<std::vector<real>>& variates) const {
    if (variates.empty()) throw std::invalid_argument("no variates to encode");
    std::vector<Tensor> rows;
    rows.reserve(variates.size());
    for (const auto& v : variates) {
        if (v.size() != lookback_)
            throw std::invalid_argument("variate length does not match lookback");
        const Tensor raw = Tensor::from_values({1, lookback_}, v);
        const Tensor token = add_rowvec(matmul(raw, var_tok_w_), var_tok_b_);
        rows.push_back(encoder_.forward(token));
    }
    return rows.size() == 1 ? rows.front() : concat_rows(rows);
}

VisionBranch::VisionBranch(ParamRegistry& reg, std::size_t image_height,
                           std::size_t image_width, const VisionConfig& cfg,
                           std::size_t out_dim)
    : patch_px_(cfg.image_patch), dim_(cfg.dim), mean_pool_(cfg.mean_pool) {
    if (patch_px_ == 0 || image_height % patch_px_ != 0 || image_width % patch_px_ != 0)
        throw std::invalid_argument("image size must be a multiple of the patch size");
    tokens_ = (image_height / patch_px_) * (image_width / patch_px_);
    const std::size_t patch_values = patch_px_ * patch_px_ * 3;

    EncoderConfig enc;
    enc.dim = cfg.dim;
    enc.depth = cfg.depth;
    enc.heads = cfg.heads;
    enc.ffn_ratio = cfg.ffn_ratio;
    encoder_ = Encoder(reg, "vision.encoder", enc, ParamGroup::encoder);

    patch_w_ = reg.add_kaiming("vision.patch_embed.weight", patch_values, dim_,
                               ParamGroup::head);
    patch_b_ = reg.add_constant("vision.patch_embed.bias", {1, dim_}, 0.0,
                                ParamGroup::head);
    cls_ = reg.add_normal("vision.cls", {1, dim_}, 0.02, ParamGroup::head);
    pos_ = reg.add_normal("vision.pos", {tokens_ + 1, dim_}, 0.02, ParamGroup::head);
    proj_w_ = reg.add_xavier("vision.proj.weight", dim_, out_dim, ParamGroup::head);
    proj_b_ = reg.add_constant("vision.proj.bias", {1, out_dim}, 0.0, ParamGroup::head);
}

Tensor VisionBranch::encode_image(const VariateImage& image) const {
    const std::size_t rows_of_patches = image.height / patch_px_;
    const std::size_t cols_of_patches = image.width / patch_px_;
    if (rows_of_patches * cols_of_patches != tokens_)
        throw std::invalid_argument("image size does not match configured tokens");
    const std::size_t patch_values = patch_px_ * patch_px_ * 3;
    std::vector<real> flat(tokens_ * patch_values);
    std::size_t token = 0;
    for (std::size_t pr = 0; pr < rows_of_patches; ++pr) {
        for (std::size_t pc = 0; pc < cols_of_patches; ++pc, ++token) {
            real* dst = flat.data() + token * patch_values;
            for (std::size_t r = 0; r < patch_px_; ++r) {
                const std::size_t row = pr * patch_px_ + r;
                const std::uint8_t* src =
                    image.pixels.data() + (row * image.width + pc * patch_px_) * 3;
                for (std::size_t k = 0; k < patch_px_ * 3; ++k)
                    dst[r * patch_px_ * 3 + k] = static_cast<real>(src[k]) / 255.0;
            }
        }
    }
    const Tensor patches = Tensor::from_values({tokens_, patch_values}, flat);
    Tensor tokens = add_rowvec(matmul(patches, patch_w_), patch_b_);
    tokens = concat_rows({cls_, tokens});
    tokens = add(tokens, pos_);
    const Tensor encoded = encoder_.forward(tokens);
    if (mean_pool_) {
        const Tensor body = slice_rows(encoded, 1, tokens_ + 1);
        return scale(matmul(transpose(Tensor::full({tokens_, 1}, 1.0)), body),
                     1.0 / static_cast<real>(tokens_));
    }
    return slice_rows(encoded, 0, 1);
}

Tensor VisionBranch::project(const Tensor& feature) const {
    return add_rowvec(matmul(feature, proj_w_), proj_b_);
}

std::size_t VisionBranch::apply_freeze(ParamRegistry& reg, bool freeze) {
    std::size_t n = reg.set_trainable("vision.encoder", !freeze);
    n += reg.set_trainable("vision.patch_embed", !freeze);
    n += reg.set_trainable("vision.cls", !freeze);
    n += reg.set_trainable("vision.pos", !freeze);
    return n;
}

}  // namespace chartcast

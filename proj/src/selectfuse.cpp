#include "chartcast/selectfuse.hpp"

#include <stdexcept>

namespace chartcast {

namespace {
constexpr real kLnEps = 1e-5;
}

SelectionBlock::SelectionBlock(ParamRegistry& reg, std::size_t dim,
                               std::size_t heads, std::size_t ffn_ratio,
                               std::size_t n_variates)
    : dim_(dim), heads_(heads), n_variates_(n_variates) {
    if (heads == 0 || dim % heads != 0)
        throw std::invalid_argument("selection dim must divide evenly into heads");
    if (n_variates == 0) throw std::invalid_argument("selection needs >= 1 variate");
    const std::size_t f = dim * ffn_ratio;
    ln1_g_ = reg.add_constant("select.ln1.weight", {dim}, 1.0, ParamGroup::head);
    ln1_b_ = reg.add_constant("select.ln1.bias", {dim}, 0.0, ParamGroup::head);
    wq_ = reg.add_xavier("select.attn.wq", dim, dim, ParamGroup::head);
    wk_ = reg.add_xavier("select.attn.wk", dim, dim, ParamGroup::head);
    wv_ = reg.add_xavier("select.attn.wv", dim, dim, ParamGroup::head);
    wo_ = reg.add_xavier("select.attn.wo", dim, dim, ParamGroup::head);
    ln2_g_ = reg.add_constant("select.ln2.weight", {dim}, 1.0, ParamGroup::head);
    ln2_b_ = reg.add_constant("select.ln2.bias", {dim}, 0.0, ParamGroup::head);
    w1_ = reg.add_xavier("select.ffn.w1", dim, f, ParamGroup::head);
    b1_ = reg.add_constant("select.ffn.b1", {f}, 0.0, ParamGroup::head);
    w2_ = reg.add_xavier("select.ffn.w2", f, dim, ParamGroup::head);
    b2_ = reg.add_constant("select.ffn.b2", {dim}, 0.0, ParamGroup::head);
    pos_ = reg.add_normal("select.pos", {n_variates, dim}, 0.02, ParamGroup::head);
}

Tensor SelectionBlock::add_positions(const Tensor& h) const {
    if (h.shape() != pos_.shape())
        throw std::invalid_argument("variate count does not match the positional table");
    return add(h, pos_);
}

SelectionOutput SelectionBlock::select(const Tensor& cls, const Tensor& h) const {
    if (h.rows() == 0) throw std::invalid_argument("no variates to select over");
    if (cls.rows() != 1 || cls.cols() != dim_ || h.cols() != dim_)
        throw std::invalid_argument("selection shapes do not match dim");
    const Tensor qn = layer_norm(cls, ln1_g_, ln1_b_, kLnEps);
    const Tensor kn = layer_norm(h, ln1_g_, ln1_b_, kLnEps);

    SelectionOutput out;
    const Tensor attended = multi_head_attention(qn, kn, kn, wq_, wk_, wv_, wo_,
                                                 heads_, &out.attn);
    out.pre_ffn = add(cls, attended);
    Tensor f = layer_norm(out.pre_ffn, ln2_g_, ln2_b_, kLnEps);
    f = gelu(add_rowvec(matmul(f, w1_), b1_));
    f = add_rowvec(matmul(f, w2_), b2_);
    out.selected = add(out.pre_ffn, f);
    return out;
}

FuseStrategy fuse_strategy_from_string(const std::string& name) {
    if (name == "replace_last") return FuseStrategy::replace_last;
    if (name == "replace_first") return FuseStrategy::replace_first;
    if (name == "concat_end") return FuseStrategy::concat_end;
    throw std::invalid_argument("unknown fuse strategy: " + name);
}

std::string to_string(FuseStrategy s) {
    switch (s) {
        case FuseStrategy::replace_last: return "replace_last";
        case FuseStrategy::replace_first: return "replace_first";
        case FuseStrategy::concat_end: return "concat_end";
    }
    throw std::logic_error("unreachable fuse strategy");
}

std::size_t fused_rows(std::size_t seq_len, FuseStrategy s) {
    return s == FuseStrategy::concat_end ? seq_len + 1 : seq_len;
}

Tensor fuse(const Tensor& feats, const Tensor& v_cls, FuseStrategy s) {
    const std::size_t m = feats.rows();
    if (m < 2) throw std::invalid_argument("fusion needs a sequence of >= 2 tokens");
    if (v_cls.rows() != 1 || v_cls.cols() != feats.cols())
        throw std::invalid_argument("fusion token shape mismatch");
    switch (s) {
        case FuseStrategy::replace_last:
            return concat_rows({slice_rows(feats, 0, m - 1), v_cls});
        case FuseStrategy::replace_first:
            return concat_rows({v_cls, slice_rows(feats, 1, m)});
        case FuseStrategy::concat_end:
            return concat_rows({feats, v_cls});
    }
    throw std::logic_error("unreachable fuse strategy");
}

ForecastHead::ForecastHead(ParamRegistry& reg, std::size_t in_rows,
                           std::size_t dim, std::size_t horizon)
    : in_rows_(in_rows), dim_(dim), horizon_(horizon) {
    if (in_rows == 0 || horizon == 0)
        throw std::invalid_argument("forecast head needs nonzero input and horizon");
    w_ = reg.add_xavier("head.weight", in_rows * dim, horizon, ParamGroup::head);
    b_ = reg.add_constant("head.bias", {1, horizon}, 0.0, ParamGroup::head);
}

Tensor ForecastHead::forward(const Tensor& fused) const {
    if (fused.rows() != in_rows_ || fused.cols() != dim_)
        throw std::invalid_argument("forecast head input shape mismatch");
    const Tensor flat = reshape(fused, {1, in_rows_ * dim_});
    return add_rowvec(matmul(flat, w_), b_);
}

Tensor ForecastHead::predict(const Tensor& fused, real norm_mean,
                             real norm_std) const {
    return add_const(scale(forward(fused), norm_std), norm_mean);
}

}  // namespace chartcast

#include "chartcast/model.hpp"

#include <cmath>
#include <stdexcept>

#include "chartcast/raster.hpp"

namespace chartcast {

ChartcastModel::ChartcastModel(const RunConfig& cfg, std::size_t n_variates)
    : cfg_(cfg),
      n_variates_(n_variates),
      reg_(cfg.train_seed),
      lang_(reg_, cfg.data_lookback, cfg.patch_config(), cfg.encoder_config()),
      fuse_(fuse_strategy_from_string(cfg.fuse_strategy)),
      head_(reg_,
            cfg.ablate_no_select ? lang_.sequence_length()
                                 : fused_rows(lang_.sequence_length(), fuse_),
            cfg.model_dim, cfg.data_horizon) {
    if (n_variates == 0) throw std::invalid_argument("model needs >= 1 variate");
    if (cfg.ablate_no_select && fuse_ == FuseStrategy::concat_end)
        throw std::invalid_argument(
            "concat_end fusion requires the selection module (disable "
            "ablate.no_select or pick a replace strategy)");

    if (!cfg.ablate_no_select) {
        select_ = std::make_unique<SelectionBlock>(reg_, cfg.model_dim,
                                                   cfg.model_heads,
                                                   cfg.model_ffn_ratio, n_variates);
    }
    if (!cfg.ablate_language_only) {
        vision_ = std::make_unique<VisionBranch>(reg_, cfg.render_height,
                                                 cfg.render_width,
                                                 cfg.vision_config(), cfg.model_dim);
        if (cfg.vision_freeze) VisionBranch::apply_freeze(reg_, true);
    }
    log_tau_ = reg_.add_constant("align.log_tau", {1, 1},
                                 std::log(cfg.align_tau_init), ParamGroup::head);
}

std::vector<real> ChartcastModel::variate_column(const std::vector<double>& flat,
                                                 std::size_t rows,
                                                 std::size_t channel) const {
    std::vector<real> out(rows);
    for (std::size_t t = 0; t < rows; ++t)
        out[t] = static_cast<real>(flat[t * n_variates_ + channel]);
    return out;
}

ChartcastModel::Forward ChartcastModel::forward(const SeriesWindow& window,
                                                bool with_vision) const {
    if (window.channels != n_variates_)
        throw std::invalid_argument("window variate count does not match model");
    if (window.lookback != cfg_.data_lookback)
        throw std::invalid_argument("window lookback does not match model");
    if (!window.normalized)
        throw std::invalid_argument("model input windows must be normalized");

    std::vector<std::vector<real>> cols(n_variates_);
    for (std::size_t c = 0; c < n_variates_; ++c)
        cols[c] = variate_column(window.x, window.lookback, c);

    std::vector<Tensor> feats(n_variates_), cls_rows(n_variates_);
    for (std::size_t c = 0; c < n_variates_; ++c) {
        auto enc = lang_.encode_series(cols[c]);
        feats[c] = enc.features;
        cls_rows[c] = enc.cls;
    }

    Forward out;
    out.language_cls =
        n_variates_ == 1 ? cls_rows[0] : concat_rows(cls_rows);

    if (with_vision && vision_) {
        const auto images = render_sample(window, cfg_.render_height,
                                          cfg_.render_width, cfg_.render_stroke,
                                          cfg_.render_grayscale);
        std::vector<Tensor> v_rows(n_variates_);
        for (std::size_t c = 0; c < n_variates_; ++c)
            v_rows[c] = vision_->project(vision_->encode_image(images[c]));
        out.vision_cls = n_variates_ == 1 ? v_rows[0] : concat_rows(v_rows);
    }

    Tensor h;
    if (select_) {
        h = select_->add_positions(lang_.encode_variates(cols));
    }

    std::vector<Tensor> norm_rows(n_variates_), orig_rows(n_variates_);
    for (std::size_t c = 0; c < n_variates_; ++c) {
        Tensor fused = feats[c];
        if (select_) {
            const Tensor sel = select_->select(cls_rows[c], h).selected;
            fused = fuse(feats[c], sel, fuse_);
        }
        norm_rows[c] = head_.forward(fused);
        orig_rows[c] = add_const(
            scale(norm_rows[c], static_cast<real>(window.norm_std[c])),
            static_cast<real>(window.norm_mean[c]));
    }
    out.forecast_norm =
        n_variates_ == 1 ? norm_rows[0] : concat_rows(norm_rows);
    out.forecast = n_variates_ == 1 ? orig_rows[0] : concat_rows(orig_rows);
    return out;
}

Tensor ChartcastModel::target(const SeriesWindow& window) const {
    if (window.channels != n_variates_)
        throw std::invalid_argument("window variate count does not match model");
    std::vector<real> vals(n_variates_ * window.horizon);
    for (std::size_t c = 0; c < n_variates_; ++c)
        for (std::size_t t = 0; t < window.horizon; ++t)
            vals[c * window.horizon + t] =
                static_cast<real>(window.y[t * n_variates_ + c]);
    return Tensor::from_values({n_variates_, window.horizon}, std::move(vals));
}

}  // namespace chartcast

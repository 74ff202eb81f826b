#pragma once

// The end-to-end forecaster: per-variate language encoding, optional chart
// rendering through the vision branch, cross-attention variate selection,
// token fusion, and the flatten+linear head with per-window de-normalization.
// Ablation flags in the config prune exactly the corresponding paths.

#include <cstddef>
#include <memory>
#include <vector>

#include "chartcast/align.hpp"
#include "chartcast/branches.hpp"
#include "chartcast/config.hpp"
#include "chartcast/dataset.hpp"
#include "chartcast/params.hpp"
#include "chartcast/selectfuse.hpp"
#include "chartcast/tensor.hpp"

namespace chartcast {

class ChartcastModel {
public:
    struct Forward {
        Tensor forecast_norm;  // N x H_f, normalized scale
        Tensor forecast;       // N x H_f, original scale
        Tensor language_cls;   // N x D text class tokens (one pair side)
        Tensor vision_cls;     // N x D projected image tokens; undefined
                               // when the vision path was not run
    };

    ChartcastModel(const RunConfig& cfg, std::size_t n_variates);

    // window.x must already be instance-normalized. with_vision additionally
    // renders each variate and runs the image branch (needed for alignment).
    Forward forward(const SeriesWindow& window, bool with_vision) const;

    // window.y arranged as N x H_f (original scale, as stored).
    Tensor target(const SeriesWindow& window) const;

    const RunConfig& config() const { return cfg_; }
    ParamRegistry& registry() { return reg_; }
    const ParamRegistry& registry() const { return reg_; }
    const Tensor& log_tau() const { return log_tau_; }
    std::size_t variates() const { return n_variates_; }
    std::size_t horizon() const { return cfg_.data_horizon; }
    std::size_t lookback() const { return cfg_.data_lookback; }
    bool has_vision() const { return vision_ != nullptr; }
    bool selection_enabled() const { return !cfg_.ablate_no_select; }

private:
    std::vector<real> variate_column(const std::vector<double>& flat,
                                     std::size_t rows, std::size_t channel) const;

    RunConfig cfg_;
    std::size_t n_variates_;
    ParamRegistry reg_;
    LanguageBranch lang_;
    std::unique_ptr<VisionBranch> vision_;
    std::unique_ptr<SelectionBlock> select_;
    FuseStrategy fuse_;
    ForecastHead head_;
    Tensor log_tau_;
};

}  // namespace chartcast

#pragma once

// CSV ingestion, chronological splitting, lookback/horizon windowing and
// per-window instance normalization.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace chartcast {

struct RawSeries {
    std::string name;
    std::vector<std::string> timestamps;  // empty when the file has none
    std::vector<double> values;           // length x channels, row-major
    std::size_t length = 0;
    std::size_t channels = 0;
    std::size_t seasonal_period = 1;

    double at(std::size_t t, std::size_t c) const {
        return values[t * channels + c];
    }
};

struct SeriesWindow {
    std::vector<double> x;  // lookback x channels (normalized in place)
    std::vector<double> y;  // horizon x channels, always original scale
    std::size_t lookback = 0;
    std::size_t horizon = 0;
    std::size_t channels = 0;
    std::size_t start = 0;  // index of x[0] in the source series
    std::vector<double> norm_mean;  // per channel, set by instance_normalize
    std::vector<double> norm_std;
    bool normalized = false;
};

struct SplitSpec {
    double train_fraction = 0.7;
    double val_fraction = 0.1;
    double test_fraction = 0.2;
    double few_shot_fraction = 1.0;  // keeps the most recent part of train
};

// Half-open index ranges into the series, in chronological order.
struct SplitRanges {
    std::size_t train_begin = 0, train_end = 0;
    std::size_t val_begin = 0, val_end = 0;
    std::size_t test_begin = 0, test_end = 0;
};

// Comma-separated, optional header, optional date column (dropped from the
// numeric matrix, kept as timestamps, must be strictly increasing).
RawSeries load_csv(const std::string& path, bool has_header,
                   std::optional<std::size_t> date_column,
                   std::size_t seasonal_period = 1);

// One univariate series per row, first cell is the series id, rows may have
// different lengths; trailing empty cells are ignored.
std::vector<RawSeries> load_m4_csv(const std::string& path, bool has_header,
                                   std::size_t seasonal_period);

// Windows whose lookback starts in [range_begin, range_end) and which fit
// entirely inside that range, advancing by `stride`.
std::vector<SeriesWindow> make_windows(
    const RawSeries& series, std::size_t lookback, std::size_t horizon,
    std::size_t stride, std::size_t range_begin = 0,
    std::size_t range_end = static_cast<std::size_t>(-1));

// Maps each lookback variate to zero mean / unit population variance over
// its own steps and records the statistics. Constant variates get
// std = std_floor. y is left in the original scale.
void instance_normalize(SeriesWindow& window, double std_floor = 1e-5);

// Maps model outputs (rows x channels, normalized scale) back through the
// window's statistics.
std::vector<double> denormalize(const SeriesWindow& window,
                                const std::vector<double>& values);

// Chronological, disjoint, exhaustive ranges. Every split must still fit at
// least one (lookback + horizon) window after the few-shot cut, so a zero
// fraction is a configuration error.
SplitRanges chronological_split(const RawSeries& series, const SplitSpec& spec,
                                std::size_t lookback, std::size_t horizon);

// Deterministic sinusoid-mixture generator used by the toy task and the CLI.
RawSeries synth_multisine(std::size_t channels, std::size_t length,
                          std::uint64_t seed, double noise_std = 0.05);

// Writes a RawSeries back out as CSV (timestamps omitted).
void save_csv(const RawSeries& series, const std::string& path);

}  // namespace chartcast

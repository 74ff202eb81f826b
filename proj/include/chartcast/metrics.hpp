#pragma once

// Forecast evaluation: MAE/MSE/SMAPE/MAPE point metrics, MASE, the Naive2
// seasonal reference forecaster, and OWA. All metrics run in double
// precision regardless of the training scalar type.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace chartcast {

struct PointMetrics {
    double mse = 0;
    double mae = 0;
    double smape = 0;                // percent, in [0, 200]
    std::optional<double> mape;      // absent when any |y_true| == 0
};

struct MetricReport {
    double mse = 0;
    double mae = 0;
    double smape = 0;
    std::optional<double> mape;
    std::optional<double> mase;      // absent when the scaling term is 0
    std::optional<double> owa;       // absent without a usable reference
    std::size_t horizon = 0;
    std::size_t seasonal_period = 1;

    // One JSON-lines record per (dataset, horizon, run). Absent metrics
    // serialize as null.
    std::string json_line(const std::string& dataset,
                          const std::string& run) const;
};

// Averages over every element of equally shaped arrays (time x channels is
// passed flattened). SMAPE terms with |t|+|p| == 0 count as 0.
PointMetrics point_metrics(const std::vector<double>& y_true,
                           const std::vector<double>& y_pred);

// Mean absolute error scaled by the mean seasonal difference. By default the
// scaling term is computed over the forecast horizon itself:
//   (1/(H-m)) * sum_{j=m+1..H} |y_true[j] - y_true[j-m]|.
// Passing in_sample switches to the classical convention, scaling by the
// seasonal differences of that history instead. Returns nullopt when the
// scaling term is 0; throws when the horizon (or history) is too short.
std::optional<double> mase(const std::vector<double>& y_true,
                           const std::vector<double>& y_pred, std::size_t m,
                           const std::vector<double>* in_sample = nullptr);

// Autocorrelation of x at the given lag (mean-centered, variance-normalized).
double autocorrelation(const std::vector<double>& x, std::size_t lag);

// 90% significance test of the lag-m autocorrelation:
//   |r_m| > 1.645 * sqrt((1 + 2 * sum_{i<m} r_i^2) / n).
// Requires n >= 3m to attempt; shorter series report non-seasonal.
bool seasonality_test(const std::vector<double>& history, std::size_t m);

// Last observed value repeated H times.
std::vector<double> naive_forecast(const std::vector<double>& history,
                                   std::size_t horizon);

// Naive forecast on the seasonally adjusted series: when m > 1 and the
// seasonality test passes, classical multiplicative decomposition (centered
// moving average, per-phase ratio means normalized to mean 1) supplies
// seasonal indices; the deseasonalized series is forecast naively and
// reseasonalized. Otherwise identical to naive_forecast.
std::vector<double> naive2_forecast(const std::vector<double>& history,
                                    std::size_t horizon, std::size_t m);

// 0.5 * (smape/ref.smape + mase/ref.mase); absent when either reference
// metric is 0 or missing.
std::optional<double> owa(const MetricReport& model,
                          const MetricReport& reference);

// Full report for one series: point metrics plus MASE (and OWA when a
// reference is given).
MetricReport evaluate_forecast(const std::vector<double>& y_true,
                               const std::vector<double>& y_pred,
                               std::size_t m,
                               const MetricReport* reference = nullptr,
                               const std::vector<double>* in_sample = nullptr);

}  // namespace chartcast

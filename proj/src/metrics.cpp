#include "chartcast/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace chartcast {

namespace {

void check_same_size(const std::vector<double>& a, const std::vector<double>& b,
                     const char* op) {
    if (a.size() != b.size()) {
        throw std::invalid_argument(std::string(op) + ": size mismatch " +
                                    std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
    }
    if (a.empty()) {
        throw std::invalid_argument(std::string(op) + ": empty input");
    }
}

}  // namespace

PointMetrics point_metrics(const std::vector<double>& y_true,
                           const std::vector<double>& y_pred) {
    check_same_size(y_true, y_pred, "point_metrics");
    const std::size_t n = y_true.size();
    PointMetrics out;
    double mape_acc = 0;
    bool mape_ok = true;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = y_true[i] - y_pred[i];
        out.mse += d * d;
        out.mae += std::abs(d);
        const double denom = std::abs(y_true[i]) + std::abs(y_pred[i]);
        if (denom > 0) out.smape += std::abs(d) / denom;
        if (y_true[i] == 0) {
            mape_ok = false;
        } else {
            mape_acc += std::abs(d) / std::abs(y_true[i]);
        }
    }
    out.mse /= static_cast<double>(n);
    out.mae /= static_cast<double>(n);
    out.smape *= 200.0 / static_cast<double>(n);
    if (mape_ok) out.mape = mape_acc * 100.0 / static_cast<double>(n);
    return out;
}

std::optional<double> mase(const std::vector<double>& y_true,
                           const std::vector<double>& y_pred, std::size_t m,
                           const std::vector<double>* in_sample) {
    check_same_size(y_true, y_pred, "mase");
    if (m < 1) throw std::invalid_argument("mase: seasonal period must be >= 1");
    const std::vector<double>& scale_src = in_sample ? *in_sample : y_true;
    if (scale_src.size() <= m) {
        throw std::invalid_argument(
            "mase: need more than m=" + std::to_string(m) + " points to scale, got " +
            std::to_string(scale_src.size()));
    }
    double denom = 0;
    for (std::size_t j = m; j < scale_src.size(); ++j) {
        denom += std::abs(scale_src[j] - scale_src[j - m]);
    }
    denom /= static_cast<double>(scale_src.size() - m);
    if (denom == 0) return std::nullopt;
    double num = 0;
    for (std::size_t j = 0; j < y_true.size(); ++j) {
        num += std::abs(y_true[j] - y_pred[j]);
    }
    num /= static_cast<double>(y_true.size());
    return num / denom;
}

double autocorrelation(const std::vector<double>& x, std::size_t lag) {
    const std::size_t n = x.size();
    if (lag >= n) return 0;
    double mean = 0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double var = 0, cov = 0;
    for (std::size_t t = 0; t < n; ++t) {
        const double c = x[t] - mean;
        var += c * c;
        if (t >= lag) cov += c * (x[t - lag] - mean);
    }
    if (var == 0) return 0;
    return cov / var;
}

bool seasonality_test(const std::vector<double>& history, std::size_t m) {
    if (m < 2) return false;
    const std::size_t n = history.size();
    if (n < 3 * m) return false;
    double s = 0;
    for (std::size_t i = 1; i < m; ++i) {
        const double r = autocorrelation(history, i);
        s += r * r;
    }
    const double limit = 1.645 * std::sqrt((1 + 2 * s) / static_cast<double>(n));
    return std::abs(autocorrelation(history, m)) > limit;
}

std::vector<double> naive_forecast(const std::vector<double>& history,
                                   std::size_t horizon) {
    if (history.empty()) {
        throw std::invalid_argument("naive_forecast: empty history");
    }
    return std::vector<double>(horizon, history.back());
}

namespace {

// Centered moving average with window m; for even m the classical 2xm
// double average (half weight on the end points). Returns NaN where the
// window does not fit.
std::vector<double> centered_moving_average(const std::vector<double>& x,
                                            std::size_t m) {
    const std::size_t n = x.size();
    std::vector<double> out(n, std::nan(""));
    if (m % 2 == 1) {
        const std::size_t half = m / 2;
        for (std::size_t t = half; t + half < n; ++t) {
            double acc = 0;
            for (std::size_t j = t - half; j <= t + half; ++j) acc += x[j];
            out[t] = acc / static_cast<double>(m);
        }
    } else {
        const std::size_t half = m / 2;
        for (std::size_t t = half; t + half < n; ++t) {
            double acc = 0.5 * (x[t - half] + x[t + half]);
            for (std::size_t j = t - half + 1; j < t + half; ++j) acc += x[j];
            out[t] = acc / static_cast<double>(m);
        }
    }
    return out;
}

}  // namespace

std::vector<double> naive2_forecast(const std::vector<double>& history,
                                    std::size_t horizon, std::size_t m) {
    const std::size_t n = history.size();
    if (n < 2) {
        throw std::invalid_argument("naive2_forecast: need at least 2 points, got " +
                                    std::to_string(n));
    }
    if (m < 2 || !seasonality_test(history, m)) {
        return naive_forecast(history, horizon);
    }

    const std::vector<double> cma = centered_moving_average(history, m);
    std::vector<double> index(m, 0);
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t t = 0; t < n; ++t) {
        if (std::isnan(cma[t]) || cma[t] == 0) continue;
        index[t % m] += history[t] / cma[t];
        ++counts[t % m];
    }
    double index_sum = 0;
    for (std::size_t p = 0; p < m; ++p) {
        if (counts[p] == 0) return naive_forecast(history, horizon);
        index[p] /= static_cast<double>(counts[p]);
        index_sum += index[p];
    }
    if (index_sum == 0) return naive_forecast(history, horizon);
    // normalize to mean 1 so deseasonalizing preserves the series level
    for (double& v : index) v *= static_cast<double>(m) / index_sum;
    for (double v : index) {
        if (v == 0) return naive_forecast(history, horizon);
    }

    const double last_deseasonalized = history[n - 1] / index[(n - 1) % m];
    std::vector<double> out(horizon);
    for (std::size_t h = 0; h < horizon; ++h) {
        out[h] = last_deseasonalized * index[(n + h) % m];
    }
    return out;
}

std::optional<double> owa(const MetricReport& model,
                          const MetricReport& reference) {
    if (reference.smape <= 0) return std::nullopt;
    if (!model.mase || !reference.mase || *reference.mase <= 0) {
        return std::nullopt;
    }
    return 0.5 * (model.smape / reference.smape + *model.mase / *reference.mase);
}

MetricReport evaluate_forecast(const std::vector<double>& y_true,
                               const std::vector<double>& y_pred,
                               std::size_t m, const MetricReport* reference,
                               const std::vector<double>* in_sample) {
    MetricReport rep;
    const PointMetrics pm = point_metrics(y_true, y_pred);
    rep.mse = pm.mse;
    rep.mae = pm.mae;
    rep.smape = pm.smape;
    rep.mape = pm.mape;
    rep.horizon = y_true.size();
    rep.seasonal_period = m;
    if (y_true.size() > m || (in_sample && in_sample->size() > m)) {
        rep.mase = mase(y_true, y_pred, m, in_sample);
    }
    if (reference) rep.owa = owa(rep, *reference);
    return rep;
}

std::string MetricReport::json_line(const std::string& dataset,
                                    const std::string& run) const {
    nlohmann::json j;
    j["dataset"] = dataset;
    j["run"] = run;
    j["horizon"] = horizon;
    j["seasonal_period"] = seasonal_period;
    j["mse"] = mse;
    j["mae"] = mae;
    j["smape"] = smape;
    j["mape"] = mape ? nlohmann::json(*mape) : nlohmann::json();
    j["mase"] = mase ? nlohmann::json(*mase) : nlohmann::json();
    j["owa"] = owa ? nlohmann::json(*owa) : nlohmann::json();
    return j.dump();
}

}  // namespace chartcast

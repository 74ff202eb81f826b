#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include <json.hpp>

#include "chartcast/metrics.hpp"
#include "chartcast/rng.hpp"

using namespace chartcast;

// Straight transcription of the metric definitions, written without reusing
// any library code, used as an agreement oracle below.
namespace oracle {

double mse(const std::vector<double>& t, const std::vector<double>& p) {
    double s = 0;
    for (std::size_t i = 0; i < t.size(); ++i) s += (t[i] - p[i]) * (t[i] - p[i]);
    return s / t.size();
}

double mae(const std::vector<double>& t, const std::vector<double>& p) {
    double s = 0;
    for (std::size_t i = 0; i < t.size(); ++i) s += std::fabs(t[i] - p[i]);
    return s / t.size();
}

double smape(const std::vector<double>& t, const std::vector<double>& p) {
    double s = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        double d = std::fabs(t[i]) + std::fabs(p[i]);
        if (d != 0) s += std::fabs(t[i] - p[i]) / d;
    }
    return 200.0 * s / t.size();
}

double mape(const std::vector<double>& t, const std::vector<double>& p) {
    double s = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
        s += std::fabs(t[i] - p[i]) / std::fabs(t[i]);
    return 100.0 * s / t.size();
}

double mase(const std::vector<double>& t, const std::vector<double>& p,
            std::size_t m) {
    double num = 0;
    for (std::size_t i = 0; i < t.size(); ++i) num += std::fabs(t[i] - p[i]);
    num /= t.size();
    double den = 0;
    for (std::size_t j = m; j < t.size(); ++j) den += std::fabs(t[j] - t[j - m]);
    den /= (t.size() - m);
    return num / den;
}

}  // namespace oracle

namespace {

std::vector<double> random_series(Rng& rng, std::size_t n, double lo,
                                  double hi) {
    std::vector<double> v(n);
    for (auto& x : v) x = rng.uniform(lo, hi);
    return v;
}

}  // namespace

TEST_CASE("perfect forecast scores zero everywhere") {
    std::vector<double> y = {1.5, -2.0, 3.25, 4.0};
    PointMetrics pm = point_metrics(y, y);
    CHECK(pm.mse == 0);
    CHECK(pm.mae == 0);
    CHECK(pm.smape == 0);
    REQUIRE(pm.mape.has_value());
    CHECK(*pm.mape == 0);
    CHECK(*mase(y, y, 1) == 0);
}

TEST_CASE("point metrics on [1,2] vs [2,2]") {
    PointMetrics pm = point_metrics({1, 2}, {2, 2});
    CHECK(pm.mse == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(pm.mae == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(pm.smape == doctest::Approx(100.0 / 3).epsilon(1e-9));
    REQUIRE(pm.mape.has_value());
    CHECK(*pm.mape == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("smape treats 0/0 terms as zero and mape goes absent") {
    PointMetrics pm = point_metrics({0, 1}, {0, 1});
    CHECK(pm.smape == 0);
    CHECK_FALSE(pm.mape.has_value());
}

TEST_CASE("mase hand-evaluations") {
    CHECK(*mase({1, 2, 3, 4}, {1, 2, 3, 5}, 1) ==
          doctest::Approx(0.25).epsilon(1e-12));
    // |error| = 1 at every step and every adjacent difference is 1
    CHECK(*mase({0, 1, 0, 1}, {1, 0, 1, 0}, 1) ==
          doctest::Approx(1.0).epsilon(1e-12));
    CHECK_THROWS_AS(mase({1, 2}, {1, 2}, 2), std::invalid_argument);
    // constant target: scaling term is zero
    CHECK_FALSE(mase({3, 3, 3}, {1, 2, 3}, 1).has_value());
}

TEST_CASE("mase classical mode scales by in-sample differences") {
    std::vector<double> hist = {0, 2, 0, 2, 0};  // lag-1 diffs all 2
    auto v = mase({5, 6}, {6, 7}, 1, &hist);
    REQUIRE(v.has_value());
    CHECK(*v == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("mase is sensitive to time ordering, point metrics are not") {
    std::vector<double> t = {1, 2, 3, 4}, p = {1, 2, 3, 5};
    std::vector<double> tp = {1, 3, 2, 4}, pp = {1, 3, 2, 5};
    PointMetrics a = point_metrics(t, p), b = point_metrics(tp, pp);
    CHECK(a.mse == doctest::Approx(b.mse));
    CHECK(a.mae == doctest::Approx(b.mae));
    CHECK(a.smape == doctest::Approx(b.smape));
    CHECK(*a.mape == doctest::Approx(*b.mape));
    CHECK(*mase(t, p, 1) == doctest::Approx(0.25));
    CHECK(*mase(tp, pp, 1) == doctest::Approx(0.25 / (5.0 / 3)));
}

TEST_CASE("library agrees with the formula oracle on randomized cases") {
    Rng rng(404);
    for (int c = 0; c < 20; ++c) {
        const std::size_t h = 5 + rng.index(36);
        const std::size_t m = 1 + rng.index(std::min<std::size_t>(4, h - 1));
        // keep targets away from zero so mape is defined
        std::vector<double> t = random_series(rng, h, 0.5, 10.0);
        std::vector<double> p = random_series(rng, h, -10.0, 10.0);
        if (rng.uniform01() < 0.5)
            for (auto& x : t) x = -x;
        PointMetrics pm = point_metrics(t, p);
        CHECK(std::fabs(pm.mse - oracle::mse(t, p)) < 1e-9);
        CHECK(std::fabs(pm.mae - oracle::mae(t, p)) < 1e-9);
        CHECK(std::fabs(pm.smape - oracle::smape(t, p)) < 1e-9);
        REQUIRE(pm.mape.has_value());
        CHECK(std::fabs(*pm.mape - oracle::mape(t, p)) < 1e-9);
        auto ms = mase(t, p, m);
        REQUIRE(ms.has_value());
        CHECK(std::fabs(*ms - oracle::mase(t, p, m)) < 1e-9);
    }
}

TEST_CASE("smape stays within [0, 200] under adversarial inputs") {
    Rng rng(405);
    for (int c = 0; c < 200; ++c) {
        std::vector<double> t = random_series(rng, 8, -5.0, 5.0);
        std::vector<double> p = random_series(rng, 8, -5.0, 5.0);
        if (c % 7 == 0) t[rng.index(8)] = 0;
        PointMetrics pm = point_metrics(t, p);
        CHECK(pm.smape >= 0);
        CHECK(pm.smape <= 200.0 + 1e-12);
        CHECK(pm.mse >= 0);
        CHECK(pm.mae >= 0);
    }
    // exact opposite signs hit the upper bound
    PointMetrics pm = point_metrics({1, -2}, {-1, 2});
    CHECK(pm.smape == doctest::Approx(200.0));
}

TEST_CASE("naive forecast repeats the last value") {
    auto f = naive_forecast({1, 2, 7}, 4);
    REQUIRE(f.size() == 4);
    for (double v : f) CHECK(v == 7);
    CHECK_THROWS_AS(naive_forecast({}, 2), std::invalid_argument);
}

TEST_CASE("seasonal reference falls back to naive when m is 1") {
    std::vector<double> hist = {3, 1, 4, 1, 5, 9, 2, 6};
    auto f = naive2_forecast(hist, 5, 1);
    for (double v : f) CHECK(v == 6);
}

TEST_CASE("seasonal reference on a constant series is constant") {
    std::vector<double> hist(48, 2.5);
    auto f = naive2_forecast(hist, 6, 12);
    REQUIRE(f.size() == 6);
    for (double v : f) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));
}

TEST_CASE("seasonal reference repeats the pattern of a periodic series") {
    const std::size_t m = 12, n = 10 * m;
    std::vector<double> hist(n);
    for (std::size_t t = 0; t < n; ++t) {
        hist[t] = 10.0 + 3.0 * std::sin(2.0 * M_PI * (t % m) / m) +
                  1.5 * std::cos(4.0 * M_PI * (t % m) / m);
    }
    REQUIRE(seasonality_test(hist, m));
    auto f = naive2_forecast(hist, 2 * m, m);
    REQUIRE(f.size() == 2 * m);
    for (std::size_t h = 0; h < f.size(); ++h) {
        CHECK(std::fabs(f[h] - hist[(n + h) % m]) < 1e-6);
    }
}

TEST_CASE("white noise is not flagged as seasonal") {
    Rng rng(777);
    std::vector<double> hist = random_series(rng, 200, -1.0, 1.0);
    CHECK_FALSE(seasonality_test(hist, 12));
    // fallback path equals plain naive
    auto f2 = naive2_forecast(hist, 6, 12);
    auto f1 = naive_forecast(hist, 6);
    CHECK(f1 == f2);
}

TEST_CASE("series shorter than three periods skip the seasonality test") {
    std::vector<double> hist(25, 0.0);
    for (std::size_t t = 0; t < hist.size(); ++t)
        hist[t] = std::sin(2.0 * M_PI * t / 12.0);
    CHECK_FALSE(seasonality_test(hist, 12));  // 25 < 36
}

TEST_CASE("owa hand-evaluations") {
    MetricReport ref;
    ref.smape = 10.0;
    ref.mase = 2.0;
    MetricReport same = ref;
    REQUIRE(owa(same, ref).has_value());
    CHECK(*owa(same, ref) == 1.0);

    MetricReport half = ref;
    half.smape = 5.0;
    CHECK(*owa(half, ref) == doctest::Approx(0.75).epsilon(1e-12));

    MetricReport zero = ref;
    zero.smape = 0.0;
    CHECK_FALSE(owa(ref, zero).has_value());
    MetricReport no_mase = ref;
    no_mase.mase.reset();
    CHECK_FALSE(owa(no_mase, ref).has_value());
}

TEST_CASE("evaluate_forecast assembles a full report") {
    std::vector<double> t = {1, 2, 3, 4}, p = {1, 2, 3, 5};
    MetricReport ref;
    ref.smape = 20.0;
    ref.mase = 0.5;
    MetricReport rep = evaluate_forecast(t, p, 1, &ref);
    CHECK(rep.mse == doctest::Approx(0.25));
    REQUIRE(rep.mase.has_value());
    CHECK(*rep.mase == doctest::Approx(0.25));
    REQUIRE(rep.owa.has_value());
    CHECK(rep.horizon == 4);
}

TEST_CASE("metric report serializes one json line") {
    std::vector<double> t = {0, 2}, p = {1, 2};
    MetricReport rep = evaluate_forecast(t, p, 1);
    std::string line = rep.json_line("toy", "run1");
    CHECK(line.find('\n') == std::string::npos);
    auto j = nlohmann::json::parse(line);
    CHECK(j["dataset"] == "toy");
    CHECK(j["run"] == "run1");
    CHECK(j["mape"].is_null());  // target contains zero
    CHECK(j["mse"].get<double>() == doctest::Approx(0.5));
    CHECK(j["horizon"] == 2);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "chartcast/align.hpp"
#include "chartcast/rng.hpp"
#include "chartcast/tensor.hpp"

using namespace chartcast;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, bool rg = false) {
    std::vector<real> v(r * c);
    for (auto& x : v) x = static_cast<real>(rng.uniform(-1.0, 1.0));
    return Tensor::from_values({r, c}, std::move(v), rg);
}

std::vector<Tensor> random_batch(Rng& rng, std::size_t b, std::size_t n,
                                 std::size_t d, bool rg = false) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < b; ++i) out.push_back(random_matrix(rng, n, d, rg));
    return out;
}

Tensor log_tau_of(double tau, bool rg = false) {
    return Tensor::scalar(static_cast<real>(std::log(tau)), rg);
}

// Loss of the one-hot orthonormal batch: -ln(e^{1/tau} / (e^{1/tau} + B - 1)).
double orthonormal_loss(std::size_t b, double tau) {
    return std::log1p(static_cast<double>(b - 1) * std::exp(-1.0 / tau));
}

constexpr double kExact = 1e-9;

}  // namespace

TEST_CASE("pair similarity hand cases") {
    const Tensor a = Tensor::from_values({2, 2}, {0.3, -1.2, 0.7, 2.5});
    CHECK(pair_similarity(a, a).scalar_value() == doctest::Approx(1.0).epsilon(kExact));

    const Tensor na = Tensor::from_values({2, 2}, {-0.3, 1.2, -0.7, -2.5});
    CHECK(pair_similarity(a, na).scalar_value() ==
          doctest::Approx(-1.0).epsilon(kExact));

    const Tensor e1 = Tensor::from_values({1, 2}, {1.0, 0.0});
    const Tensor d2 = Tensor::from_values({1, 2}, {1.0, 1.0});
    CHECK(pair_similarity(e1, d2).scalar_value() ==
          doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(kExact));
}

TEST_CASE("zero-norm inputs stay finite and are flagged") {
    AlignDiagnostics diag;
    const Tensor z = Tensor::zeros({2, 3});
    const Tensor a = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
    const Tensor s = pair_similarity(z, a, &diag);
    CHECK(std::isfinite(s.scalar_value()));
    CHECK(s.scalar_value() == doctest::Approx(0.0));
    CHECK(diag.zero_norm_rows == 1);
}

TEST_CASE("a single-pair batch has exactly zero loss") {
    Rng rng(1);
    const Tensor log_tau = log_tau_of(0.07);
    for (int i = 0; i < 5; ++i) {
        const Tensor loss = info_nce({random_matrix(rng, 3, 8)},
                                     {random_matrix(rng, 3, 8)}, log_tau);
        CHECK(loss.scalar_value() == 0.0);  // bit-exact, not approximate
    }
}

TEST_CASE("identical embeddings on both sides give ln B") {
    Rng rng(2);
    const Tensor log_tau = log_tau_of(0.07);
    for (std::size_t b : {2u, 4u, 16u}) {
        const Tensor one = random_matrix(rng, 2, 6);
        const std::vector<Tensor> batch(b, one);
        const Tensor loss = info_nce(batch, batch, log_tau);
        CHECK(loss.scalar_value() ==
              doctest::Approx(std::log(static_cast<double>(b))).epsilon(kExact));
    }
}

TEST_CASE("orthonormal one-hot batch matches the closed form") {
    for (double tau : {1.0, 0.5, 0.07}) {
        const std::size_t b = 4;
        std::vector<Tensor> vision, language;
        for (std::size_t i = 0; i < b; ++i) {
            std::vector<real> v(b, 0.0);
            v[i] = 1.0;
            vision.push_back(Tensor::from_values({1, b}, v));
            language.push_back(Tensor::from_values({1, b}, std::move(v)));
        }
        const Tensor loss = info_nce(vision, language, log_tau_of(tau));
        CHECK(loss.scalar_value() ==
              doctest::Approx(orthonormal_loss(b, tau)).epsilon(kExact));
        const Tensor both = align_loss(vision, language, log_tau_of(tau));
        CHECK(both.scalar_value() ==
              doctest::Approx(2.0 * orthonormal_loss(b, tau)).epsilon(kExact));
    }
}

TEST_CASE("alignment loss is symmetric in its modality arguments") {
    Rng rng(3);
    const Tensor log_tau = log_tau_of(0.07);
    const auto v = random_batch(rng, 6, 2, 5);
    const auto l = random_batch(rng, 6, 2, 5);
    CHECK(align_loss(v, l, log_tau).scalar_value() ==
          doctest::Approx(align_loss(l, v, log_tau).scalar_value()).epsilon(1e-12));

    const Tensor self = align_loss(v, v, log_tau);
    CHECK(self.scalar_value() ==
          doctest::Approx(2.0 * info_nce(v, v, log_tau).scalar_value())
              .epsilon(1e-12));
}

TEST_CASE("joint batch permutation leaves the loss unchanged") {
    Rng rng(4);
    const Tensor log_tau = log_tau_of(0.07);
    const std::size_t b = 8;
    const auto v = random_batch(rng, b, 3, 5);
    const auto l = random_batch(rng, b, 3, 5);
    const double base = align_loss(v, l, log_tau).scalar_value();

    std::vector<std::size_t> perm(b);
    std::iota(perm.begin(), perm.end(), 0);
    for (int trial = 0; trial < 5; ++trial) {
        rng.shuffle(perm);
        std::vector<Tensor> pv, pl;
        for (std::size_t i : perm) {
            pv.push_back(v[i]);
            pl.push_back(l[i]);
        }
        CHECK(align_loss(pv, pl, log_tau).scalar_value() ==
              doctest::Approx(base).epsilon(kExact));
    }
}

TEST_CASE("positive rescaling of either modality leaves the loss unchanged") {
    Rng rng(5);
    const Tensor log_tau = log_tau_of(0.07);
    const auto v = random_batch(rng, 6, 2, 4);
    const auto l = random_batch(rng, 6, 2, 4);
    const double base = info_nce(v, l, log_tau).scalar_value();

    for (double c : {3.7, 0.01, 250.0}) {
        std::vector<Tensor> scaled;
        for (const auto& t : v) scaled.push_back(scale(t, static_cast<real>(c)));
        CHECK(info_nce(scaled, l, log_tau).scalar_value() ==
              doctest::Approx(base).epsilon(kExact));
        CHECK(pair_similarity(scaled[0], l[0]).scalar_value() ==
              doctest::Approx(pair_similarity(v[0], l[0]).scalar_value())
                  .epsilon(kExact));
    }
}

TEST_CASE("loss is nonnegative, and at most ln B when positives dominate") {
    Rng rng(6);
    const Tensor log_tau = log_tau_of(0.07);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t b = 2 + rng.index(7);
        const auto v = random_batch(rng, b, 2, 5);
        const auto l = random_batch(rng, b, 2, 5);
        CHECK(info_nce(v, l, log_tau).scalar_value() >= 0.0);
        // With V == L every positive similarity is the row maximum.
        CHECK(info_nce(v, v, log_tau).scalar_value() <=
              std::log(static_cast<double>(b)) + 1e-12);
    }
}

TEST_CASE("extreme temperatures stay finite") {
    Rng rng(7);
    const auto v = random_batch(rng, 4, 1, 6);
    const auto l = random_batch(rng, 4, 1, 6);
    for (double log_tau : {-20.0, 0.0, 20.0}) {
        const Tensor loss =
            align_loss(v, l, Tensor::scalar(static_cast<real>(log_tau)));
        CHECK(loss.all_finite());
        CHECK(loss.scalar_value() >= 0.0);
    }
}

TEST_CASE("alignment gradients match finite differences") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        Rng rng(seed * 11 + 3);
        auto v = random_batch(rng, 4, 2, 3, true);
        auto l = random_batch(rng, 4, 2, 3, true);
        Tensor log_tau = Tensor::scalar(static_cast<real>(kLogTauInit), true);
        std::vector<Tensor> params(v.begin(), v.end());
        params.insert(params.end(), l.begin(), l.end());
        params.push_back(log_tau);
        const double err = grad_check(
            [&]() { return align_loss(v, l, log_tau); }, params, 1e-5, 0, seed);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("per-variate mode equals the flat loss over exploded pairs") {
    Rng rng(8);
    const Tensor log_tau = log_tau_of(0.07);
    const std::size_t b = 3, n = 4, d = 5;
    const auto v = random_batch(rng, b, n, d);
    const auto l = random_batch(rng, b, n, d);

    std::vector<Tensor> v_rows, l_rows;
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t r = 0; r < n; ++r) {
            v_rows.push_back(slice_rows(v[i], r, r + 1));
            l_rows.push_back(slice_rows(l[i], r, r + 1));
        }
    }
    CHECK(align_loss(v, l, log_tau, true).scalar_value() ==
          doctest::Approx(align_loss(v_rows, l_rows, log_tau).scalar_value())
              .epsilon(1e-12));
    // Pair-level flattening is a genuinely different objective.
    CHECK(align_loss(v, l, log_tau, false).scalar_value() !=
          doctest::Approx(align_loss(v, l, log_tau, true).scalar_value())
              .epsilon(1e-6));
}

TEST_CASE("retrieval accuracy: aligned, tied, and random batches") {
    Rng rng(9);
    const std::size_t b = 8, d = 16;
    std::vector<Tensor> distinct;
    for (std::size_t i = 0; i < b; ++i) {
        std::vector<real> v(d, 0.0);
        v[i] = 1.0;
        v[i + b] = 0.5;
        distinct.push_back(Tensor::from_values({1, d}, std::move(v)));
    }
    CHECK(retrieval_accuracy(distinct, distinct) == doctest::Approx(1.0));

    // Identical language rows: every argmax ties and resolves to index 0,
    // so only pair 0 scores a hit.
    const std::vector<Tensor> same(b, distinct[0]);
    CHECK(retrieval_accuracy(distinct, same) ==
          doctest::Approx(1.0 / static_cast<double>(b)));

    double total = 0.0;
    const int trials = 200;
    for (int t = 0; t < trials; ++t) {
        const auto v = random_batch(rng, 16, 1, 8);
        const auto l = random_batch(rng, 16, 1, 8);
        total += retrieval_accuracy(v, l);
    }
    CHECK(total / trials == doctest::Approx(1.0 / 16.0).epsilon(0.5));
    CHECK(std::abs(total / trials - 0.0625) < 0.02);
}

TEST_CASE("shape and batch errors are rejected") {
    Rng rng(10);
    const Tensor log_tau = log_tau_of(0.07);
    CHECK_THROWS_AS(info_nce({}, {}, log_tau), std::invalid_argument);
    CHECK_THROWS_AS(info_nce({random_matrix(rng, 2, 3)},
                             {random_matrix(rng, 2, 4)}, log_tau),
                    std::invalid_argument);
    CHECK_THROWS_AS(info_nce({random_matrix(rng, 2, 3)}, {}, log_tau),
                    std::invalid_argument);
    CHECK_THROWS_AS(retrieval_accuracy({random_matrix(rng, 1, 3)},
                                       {random_matrix(rng, 1, 3)}),
                    std::invalid_argument);
    CHECK_THROWS_AS(pair_similarity(random_matrix(rng, 2, 3),
                                    random_matrix(rng, 3, 2)),
                    std::invalid_argument);
}

TEST_CASE("gradient flows into the temperature parameter") {
    Rng rng(11);
    auto v = random_batch(rng, 4, 1, 6);
    auto l = random_batch(rng, 4, 1, 6);
    Tensor log_tau = Tensor::scalar(static_cast<real>(kLogTauInit), true);
    log_tau.zero_grad();
    backward(align_loss(v, l, log_tau));
    REQUIRE(log_tau.grad().size() == 1);
    CHECK(std::abs(log_tau.grad()[0]) > 0.0);
    CHECK(std::isfinite(log_tau.grad()[0]));
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "chartcast/rng.hpp"
#include "chartcast/tensor.hpp"

using namespace chartcast;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, bool requires_grad = true,
                     double lo = -1.5, double hi = 1.5) {
    std::vector<real> v(shape_numel(shape));
    for (auto& x : v) x = static_cast<real>(rng.uniform(lo, hi));
    return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

// Random strictly positive tensor, bounded away from zero.
Tensor random_positive(Rng& rng, Shape shape, bool requires_grad = true) {
    return random_tensor(rng, std::move(shape), requires_grad, 0.5, 2.0);
}

// Random tensor bounded away from zero on both sides (for abs/relu kinks).
Tensor random_nonzero(Rng& rng, Shape shape, bool requires_grad = true) {
    std::vector<real> v(shape_numel(shape));
    for (auto& x : v) {
        double m = rng.uniform(0.2, 1.5);
        x = static_cast<real>(rng.uniform01() < 0.5 ? -m : m);
    }
    return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

// Projects onto a random direction so no op sees a degenerate (identically
// zero) downstream gradient. The direction depends only on the seed and the
// output shape, so repeated evaluations inside grad_check see one function.
Tensor probe(const Tensor& t, std::uint64_t seed) {
    Rng r(seed ^ 0x9e3779b97f4a7c15ull);
    return sum(mul(t, random_tensor(r, t.shape(), false)));
}

constexpr double kEps = 1e-5;
constexpr double kTol = 1e-4;

}  // namespace

TEST_CASE("shape helpers") {
    CHECK(shape_numel({}) == 1);
    CHECK(shape_numel({3, 4}) == 12);
    CHECK(shape_str({3, 4}) == "(3x4)");
    Tensor s = Tensor::scalar(2.5);
    CHECK(s.rows() == 1);
    CHECK(s.cols() == 1);
    Tensor v = Tensor::zeros({5});
    CHECK(v.rows() == 1);
    CHECK(v.cols() == 5);
}

TEST_CASE("layer_norm normalizes [1,2,3]") {
    Tensor x = Tensor::from_values({3}, {1, 2, 3});
    Tensor out = layer_norm(x, Tensor::full({3}, 1.0), Tensor::zeros({3}), 0.0);
    CHECK(out.value_at(0) == doctest::Approx(-1.224745).epsilon(1e-6));
    CHECK(out.value_at(1) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(out.value_at(2) == doctest::Approx(1.224745).epsilon(1e-6));
}

TEST_CASE("layer_norm pre-affine rows have zero mean and unit variance") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor(rng, {6, 16}, false, -3.0, 3.0);
        Tensor out =
            layer_norm(x, Tensor::full({16}, 1.0), Tensor::zeros({16}), 0.0);
        for (std::size_t i = 0; i < 6; ++i) {
            double m = 0, v = 0;
            for (std::size_t j = 0; j < 16; ++j) m += out.value_at(i * 16 + j);
            m /= 16;
            for (std::size_t j = 0; j < 16; ++j) {
                double c = out.value_at(i * 16 + j) - m;
                v += c * c;
            }
            v /= 16;
            CHECK(std::abs(m) < 1e-10);
            CHECK(std::abs(v - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("softmax of [ln1, ln2, ln3]") {
    Tensor x = Tensor::from_values(
        {3}, {std::log(real(1)), std::log(real(2)), std::log(real(3))});
    Tensor out = softmax(x);
    CHECK(out.value_at(0) == doctest::Approx(1.0 / 6).epsilon(1e-12));
    CHECK(out.value_at(1) == doctest::Approx(2.0 / 6).epsilon(1e-12));
    CHECK(out.value_at(2) == doctest::Approx(3.0 / 6).epsilon(1e-12));
}

TEST_CASE("softmax sums to one and is shift invariant") {
    Rng rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor(rng, {4, 7}, false, -30.0, 30.0);
        Tensor a = softmax(x);
        Tensor b = softmax(add_const(x, 123.5));
        for (std::size_t i = 0; i < 4; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < 7; ++j) s += a.value_at(i * 7 + j);
            CHECK(std::abs(s - 1.0) < 1e-12);
        }
        for (std::size_t i = 0; i < a.numel(); ++i)
            CHECK(std::abs(a.value_at(i) - b.value_at(i)) < 1e-12);
    }
}

TEST_CASE("attention with a single key gives weight 1") {
    Rng rng(17);
    const std::size_t d = 8;
    Tensor q = random_tensor(rng, {1, d}, false);
    Tensor k = random_tensor(rng, {1, d}, false);
    Tensor v = random_tensor(rng, {1, d}, false);
    Tensor wq = random_tensor(rng, {d, d}, false);
    Tensor wk = random_tensor(rng, {d, d}, false);
    Tensor wv = random_tensor(rng, {d, d}, false);
    Tensor wo = random_tensor(rng, {d, d}, false);
    std::vector<real> weights;
    Tensor out = multi_head_attention(q, k, v, wq, wk, wv, wo, 2, &weights);
    REQUIRE(weights.size() == 2);  // heads x 1 x 1
    CHECK(weights[0] == 1.0);
    CHECK(weights[1] == 1.0);
    Tensor expect = matmul(matmul(v, wv), wo);
    for (std::size_t i = 0; i < d; ++i)
        CHECK(out.value_at(i) == doctest::Approx(expect.value_at(i)).epsilon(1e-12));
}

TEST_CASE("attention over identical keys is uniform") {
    Rng rng(19);
    const std::size_t d = 8, n = 5;
    Tensor q = random_tensor(rng, {2, d}, false);
    std::vector<real> krow(d);
    for (auto& x : krow) x = static_cast<real>(rng.uniform(-1, 1));
    std::vector<real> kv;
    for (std::size_t i = 0; i < n; ++i) kv.insert(kv.end(), krow.begin(), krow.end());
    Tensor k = Tensor::from_values({n, d}, kv);
    Tensor v = random_tensor(rng, {n, d}, false);
    Tensor wq = random_tensor(rng, {d, d}, false);
    Tensor wk = random_tensor(rng, {d, d}, false);
    Tensor wv = random_tensor(rng, {d, d}, false);
    Tensor wo = random_tensor(rng, {d, d}, false);
    std::vector<real> weights;
    multi_head_attention(q, k, v, wq, wk, wv, wo, 2, &weights);
    REQUIRE(weights.size() == 2 * 2 * n);
    for (real w : weights) CHECK(std::abs(w - 1.0 / n) < 1e-12);
}

TEST_CASE("attention with zero logits is uniform") {
    const std::size_t d = 4, n = 3;
    std::vector<real> eye(d * d, 0);
    for (std::size_t i = 0; i < d; ++i) eye[i * d + i] = 1;
    Tensor id = Tensor::from_values({d, d}, eye);
    // q orthogonal to every key row
    Tensor q = Tensor::from_values({1, d}, {1, 0, 0, 0});
    Tensor k = Tensor::from_values({n, d}, {0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
    Tensor v = Tensor::from_values({n, d}, {3, 0, 0, 0, 0, 6, 0, 0, 0, 0, 9, 0});
    std::vector<real> weights;
    Tensor out = multi_head_attention(q, k, v, id, id, id, id, 1, &weights);
    REQUIRE(weights.size() == n);
    for (real w : weights) CHECK(std::abs(w - 1.0 / n) < 1e-12);
    CHECK(out.value_at(0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(out.value_at(1) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(out.value_at(2) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("grad_check on f(x) = x^2 at 3") {
    Tensor x = Tensor::scalar(3.0, true);
    double err = grad_check([&]() { return square(x); }, {x}, kEps);
    CHECK(err < 1e-9);
}

TEST_CASE("grad_check on layer_norm composed with sum") {
    Rng rng(23);
    Tensor x = random_tensor(rng, {4, 8});
    Tensor g = random_tensor(rng, {8});
    Tensor b = random_tensor(rng, {8});
    double err = grad_check(
        [&]() { return sum(layer_norm(x, g, b, 1e-5)); }, {x, g, b}, kEps);
    CHECK(err < 1e-6);
}

TEST_CASE("grad_check sweeps every elementwise op") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        Tensor a = random_tensor(rng, {3, 5});
        Tensor b = random_positive(rng, {3, 5});
        Tensor nz = random_nonzero(rng, {3, 5});
        Tensor pos = random_positive(rng, {3, 5});
        CAPTURE(seed);
        CHECK(grad_check([&]() { return probe(add(a, b), seed); }, {a, b}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(sub(a, b), seed); }, {a, b}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(mul(a, b), seed); }, {a, b}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(div_elem(a, b), seed); }, {a, b}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(scale(a, -2.5), seed); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(add_const(a, 0.75), seed); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(neg(a), seed); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(square(a), seed); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(sqrt_elem(pos), seed); }, {pos}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(abs_elem(nz), seed); }, {nz}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(exp_elem(a), seed); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(log_elem(pos), seed); }, {pos}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(gelu(a), seed); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(relu(nz), seed); }, {nz}, kEps) < kTol);
    }
}

TEST_CASE("grad_check sweeps structure and reduction ops") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed * 31);
        Tensor a = random_tensor(rng, {4, 6});
        Tensor b = random_tensor(rng, {6, 3});
        Tensor v = random_tensor(rng, {6});
        Tensor c = random_positive(rng, {4, 1});
        Tensor s = random_tensor(rng, {});
        Tensor sq = random_tensor(rng, {5, 5});
        CAPTURE(seed);
        CHECK(grad_check([&]() { return probe(matmul(a, b), seed); }, {a, b}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(transpose(a), seed); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(reshape(a, {2, 12}), seed); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(slice_rows(a, 1, 3), seed); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(slice_cols(a, 2, 5), seed); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(concat_rows({a, a}), seed); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(concat_cols({a, a}), seed); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(embedding_rows(a, {0, 2, 2, 3}), seed); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(diag(sq), seed); }, {sq}, kEps) < kTol);
        CHECK(grad_check([&]() { return sum(a); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return mean(a); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(row_sums(a), seed); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(logsumexp_rows(a), seed); }, {a}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(add_rowvec(a, v), seed); }, {a, v}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(div_colvec(a, c), seed); }, {a, c}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(mul_scalar_tensor(a, s), seed); }, {a, s}, kEps) < kTol);
        CHECK(grad_check([&]() { return probe(softmax(a), seed); }, {a}, kEps) < kTol);
    }
}

TEST_CASE("grad_check sweeps fused blocks") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed * 101);
        const std::size_t d = 8;
        Tensor x = random_tensor(rng, {3, d});
        Tensor g = random_tensor(rng, {d});
        Tensor b = random_tensor(rng, {d});
        Tensor q = random_tensor(rng, {2, d});
        Tensor kv = random_tensor(rng, {4, d});
        Tensor wq = random_tensor(rng, {d, d});
        Tensor wk = random_tensor(rng, {d, d});
        Tensor wv = random_tensor(rng, {d, d});
        Tensor wo = random_tensor(rng, {d, d});
        CAPTURE(seed);
        CHECK(grad_check([&]() { return probe(layer_norm(x, g, b, 1e-5), seed); },
                         {x, g, b}, kEps) < kTol);
        CHECK(grad_check(
                  [&]() {
                      return probe(multi_head_attention(q, kv, kv, wq, wk, wv,
                                                        wo, 2),
                                   seed);
                  },
                  {q, kv, wq, wk, wv, wo}, kEps) < kTol);
    }
}

TEST_CASE("gradients accumulate and zero_grad resets") {
    Tensor x = Tensor::scalar(2.0, true);
    Tensor l1 = square(x);
    backward(l1);
    CHECK(x.grad()[0] == doctest::Approx(4.0));
    Tensor l2 = square(x);
    backward(l2);
    CHECK(x.grad()[0] == doctest::Approx(8.0));
    x.zero_grad();
    CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("requires_grad propagates through ops") {
    Tensor a = Tensor::scalar(1.0, true);
    Tensor b = Tensor::scalar(2.0, false);
    CHECK(add(a, b).requires_grad());
    CHECK_FALSE(add(b, b).requires_grad());
}

TEST_CASE("forward passes are deterministic") {
    Rng r1(42), r2(42);
    Tensor a1 = random_tensor(r1, {5, 9}, false);
    Tensor a2 = random_tensor(r2, {5, 9}, false);
    Tensor o1 = softmax(gelu(a1));
    Tensor o2 = softmax(gelu(a2));
    for (std::size_t i = 0; i < o1.numel(); ++i)
        CHECK(o1.value_at(i) == o2.value_at(i));
}

TEST_CASE("shape errors are reported") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 5});
    CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
    CHECK_THROWS_AS(add(a, b), std::invalid_argument);
    CHECK_THROWS_AS(backward(Tensor::zeros({2, 2}, true)), std::invalid_argument);
    Tensor q = Tensor::zeros({1, 6});
    Tensor w = Tensor::zeros({6, 6});
    CHECK_THROWS_AS(multi_head_attention(q, q, q, w, w, w, w, 4),
                    std::invalid_argument);
}

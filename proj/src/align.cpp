#include "chartcast/align.hpp"

#include <cmath>
#include <stdexcept>

namespace chartcast {

namespace {

// Rows scaled to unit L2 norm with the zero-norm guard.
Tensor normalize_rows(const Tensor& rows, AlignDiagnostics* diagnostics) {
    const Tensor norms = sqrt_elem(row_sums(square(rows)));
    if (diagnostics) {
        for (real n : norms.values())
            if (n < 1e-12) ++diagnostics->zero_norm_rows;
    }
    return div_colvec(rows, add_const(norms, 1e-12));
}

Tensor flatten_pairs(const std::vector<Tensor>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("empty contrastive batch");
    std::vector<Tensor> rows;
    rows.reserve(pairs.size());
    for (const Tensor& p : pairs) rows.push_back(reshape(p, {1, p.numel()}));
    return rows.size() == 1 ? rows.front() : concat_rows(rows);
}

Tensor stack_variate_rows(const std::vector<Tensor>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("empty contrastive batch");
    return pairs.size() == 1 ? pairs.front() : concat_rows(pairs);
}

void check_sides(const std::vector<Tensor>& vision,
                 const std::vector<Tensor>& language) {
    if (vision.size() != language.size())
        throw std::invalid_argument("contrastive batch sides differ in size");
    for (std::size_t i = 0; i < vision.size(); ++i)
        if (vision[i].shape() != language[i].shape())
            throw std::invalid_argument("contrastive pair shapes differ");
}

}  // namespace

Tensor pair_similarity(const Tensor& a, const Tensor& b, AlignDiagnostics* diagnostics) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("pair_similarity: shapes differ");
    const Tensor av = normalize_rows(reshape(a, {1, a.numel()}), diagnostics);
    const Tensor bv = normalize_rows(reshape(b, {1, b.numel()}), diagnostics);
    return reshape(matmul(av, transpose(bv)), {});
}

Tensor info_nce_rows(const Tensor& vision_rows, const Tensor& language_rows,
                     const Tensor& log_tau, AlignDiagnostics* diagnostics) {
    if (vision_rows.shape() != language_rows.shape())
        throw std::invalid_argument("info_nce: embedding matrices differ in shape");
    const std::size_t b = vision_rows.rows();
    if (b == 0) throw std::invalid_argument("empty contrastive batch");

    const Tensor vn = normalize_rows(vision_rows, diagnostics);
    const Tensor ln = normalize_rows(language_rows, diagnostics);
    const Tensor cosines = matmul(vn, transpose(ln));
    const Tensor logits = mul_scalar_tensor(cosines, exp_elem(neg(log_tau)));
    const Tensor lse = logsumexp_rows(logits);
    const Tensor positives = reshape(diag(logits), {b, 1});
    return mean(sub(lse, positives));
}

Tensor info_nce(const std::vector<Tensor>& vision,
                const std::vector<Tensor>& language, const Tensor& log_tau,
                AlignDiagnostics* diagnostics) {
    check_sides(vision, language);
    return info_nce_rows(flatten_pairs(vision), flatten_pairs(language), log_tau,
                         diagnostics);
}

Tensor align_loss(const std::vector<Tensor>& vision,
                  const std::vector<Tensor>& language, const Tensor& log_tau,
                  bool per_variate, AlignDiagnostics* diagnostics) {
    check_sides(vision, language);
    const Tensor v = per_variate ? stack_variate_rows(vision) : flatten_pairs(vision);
    const Tensor l =
        per_variate ? stack_variate_rows(language) : flatten_pairs(language);
    return add(info_nce_rows(v, l, log_tau, diagnostics),
               info_nce_rows(l, v, log_tau, diagnostics));
}

double retrieval_accuracy(const std::vector<Tensor>& vision,
                          const std::vector<Tensor>& language) {
    check_sides(vision, language);
    const std::size_t b = vision.size();
    if (b < 2) throw std::invalid_argument("retrieval needs at least two pairs");

    const Tensor vn = normalize_rows(flatten_pairs(vision), nullptr);
    const Tensor ln = normalize_rows(flatten_pairs(language), nullptr);
    const Tensor sims = matmul(vn, transpose(ln));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < b; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < b; ++j)
            if (sims.value_at(i * b + j) > sims.value_at(i * b + best)) best = j;
        if (best == i) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(b);
}

}  // namespace chartcast

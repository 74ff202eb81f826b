#pragma once

// Bidirectional contrastive alignment between the vision and language
// branches. Each pair's N x D per-variate features are flattened to one
// embedding, cosine similarity is computed over the batch, scaled by a
// learnable temperature, and the InfoNCE loss is taken in both retrieval
// directions. A per-variate mode treats every variate row as its own pair.

#include <cstddef>
#include <vector>

#include "chartcast/tensor.hpp"

namespace chartcast {

struct AlignDiagnostics {
    // Rows whose L2 norm vanished and were rescued by the 1e-12 guard.
    std::size_t zero_norm_rows = 0;
};

// Initial value for the learnable log-temperature: exp(log_tau) = 0.07.
inline constexpr double kLogTauInit = -2.6592600369327783;  // ln(0.07)

// Cosine similarity of two equally-shaped matrices flattened to vectors.
// Differentiable; the 1e-12 norm guard keeps zero inputs finite.
Tensor pair_similarity(const Tensor& a, const Tensor& b,
                       AlignDiagnostics* diagnostics = nullptr);

// One embedding per row on each side; positives are equal row indices.
// Returns -(1/B) sum_i log softmax_j(cos(v_i, l_j)/tau) at j = i.
Tensor info_nce_rows(const Tensor& vision_rows, const Tensor& language_rows,
                     const Tensor& log_tau, AlignDiagnostics* diagnostics = nullptr);

// Batch of B pairs; each side holds N x D features per pair, flattened to
// a single B x (N*D) embedding matrix.
Tensor info_nce(const std::vector<Tensor>& vision,
                const std::vector<Tensor>& language, const Tensor& log_tau,
                AlignDiagnostics* diagnostics = nullptr);

// info_nce(V, L) + info_nce(L, V). per_variate treats each variate row as
// its own contrastive pair (effective batch B*N).
Tensor align_loss(const std::vector<Tensor>& vision,
                  const std::vector<Tensor>& language, const Tensor& log_tau,
                  bool per_variate = false, AlignDiagnostics* diagnostics = nullptr);

// Fraction of pairs whose vision embedding retrieves its own language
// embedding (argmax cosine over the batch; ties keep the lowest index).
double retrieval_accuracy(const std::vector<Tensor>& vision,
                          const std::vector<Tensor>& language);

}  // namespace chartcast

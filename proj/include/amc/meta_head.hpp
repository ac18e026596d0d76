#ifndef AMC_META_HEAD_HPP
#define AMC_META_HEAD_HPP

#include <cmath>
#include <vector>

#include "amc/tensor.hpp"

namespace amc {

template <typename S>
struct PrototypeSet {
    std::vector<Tensor<S>> prototypes;  // one per episode class, index = episode label
    std::vector<int> class_ids;         // episode label -> dataset class id
};

// L2 norm with an explicit dead-embedding check; the tiny floor only guards
// the division, never hides a genuinely zero vector.
template <typename S>
Tensor<S> safe_norm(const Tensor<S>& x) {
    auto sq = dot(x, x);
    if (sq.values()[0] == S(0)) throw DegenerateEmbeddingError("zero-norm embedding");
    return clamp_min(sqrt_op(sq), 1e-12);
}

template <typename S>
Tensor<S> cosine(const Tensor<S>& a, const Tensor<S>& b) {
    return divide(dot(a, b), mul(safe_norm(a), safe_norm(b)));
}

// Support attention: softmax over tau * <z_k, mean(z)>. The raw inner product
// (not cosine) is deliberate; the mean is unweighted.
template <typename S>
Tensor<S> attention_weights(const std::vector<Tensor<S>>& embeddings, const Tensor<S>& tau) {
    const int K = static_cast<int>(embeddings.size());
    if (K < 1) throw ContractError("attention_weights: need at least one embedding");
    Tensor<S> mean = embeddings[0];
    for (int k = 1; k < K; ++k) mean = add(mean, embeddings[static_cast<std::size_t>(k)]);
    mean = scale(mean, 1.0 / static_cast<double>(K));
    std::vector<Tensor<S>> scores;
    scores.reserve(static_cast<std::size_t>(K));
    for (const auto& z : embeddings) scores.push_back(dot(z, mean));
    return softmax(scale_by(concat_scalars(scores), tau));
}

// p = (1/K) * sum_k alpha_k z_k. The 1/K stays even though alpha normalizes;
// the resulting K-dependent prototype norm is harmless under cosine scoring.
template <typename S>
Tensor<S> build_prototype(const std::vector<Tensor<S>>& embeddings, const Tensor<S>& alpha) {
    const int K = static_cast<int>(embeddings.size());
    if (K < 1) throw ContractError("build_prototype: need at least one embedding");
    if (alpha.ndim() != 1 || alpha.dim(0) != K)
        throw DimensionError("build_prototype: got " + std::to_string(K) + " embeddings but " +
                             std::to_string(alpha.size()) + " weights");
    double asum = 0.0;
    for (const S a : alpha.values()) asum += static_cast<double>(a);
    if (std::fabs(asum - 1.0) > 1e-6)
        throw ContractError("build_prototype: weights sum to " + std::to_string(asum) + ", expected 1");
    Tensor<S> p = scale_by(embeddings[0], slice_scalar(alpha, 0));
    for (int k = 1; k < K; ++k)
        p = add(p, scale_by(embeddings[static_cast<std::size_t>(k)], slice_scalar(alpha, k)));
    return scale(p, 1.0 / static_cast<double>(K));
}

// Class scores tau * cos(zq, p_c), one per episode class. Kept as logits so
// the loss can fuse the log-softmax; softmax them for reporting.
template <typename S>
Tensor<S> classify_logits(const Tensor<S>& zq, const std::vector<Tensor<S>>& prototypes, const Tensor<S>& tau) {
    if (prototypes.empty()) throw ContractError("classify_logits: no prototypes");
    std::vector<Tensor<S>> sims;
    sims.reserve(prototypes.size());
    for (const auto& p : prototypes) sims.push_back(cosine(zq, p));
    return scale_by(concat_scalars(sims), tau);
}

template <typename S>
Tensor<S> classify(const Tensor<S>& zq, const std::vector<Tensor<S>>& prototypes, const Tensor<S>& tau) {
    return softmax(classify_logits(zq, prototypes, tau));
}

// Mean cross entropy over the episode's queries, straight from logits.
template <typename S>
Tensor<S> episode_loss(const std::vector<Tensor<S>>& query_logits, const std::vector<int>& labels) {
    if (query_logits.empty()) throw ContractError("episode_loss: no queries");
    if (query_logits.size() != labels.size())
        throw DimensionError("episode_loss: " + std::to_string(query_logits.size()) + " logit rows vs " +
                             std::to_string(labels.size()) + " labels");
    std::vector<Tensor<S>> terms;
    terms.reserve(query_logits.size());
    for (std::size_t i = 0; i < query_logits.size(); ++i)
        terms.push_back(cross_entropy_logits(query_logits[i], labels[i]));
    return mean_scalars(terms);
}

}  // namespace amc

#endif

#ifndef AMC_ACCM_HPP
#define AMC_ACCM_HPP

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "amc/backbone.hpp"
#include "amc/config.hpp"
#include "amc/conv_ops.hpp"
#include "amc/param_store.hpp"

namespace amc {

template <typename S>
struct CorrelationSet {
    std::vector<std::pair<int, int>> pairs;  // level index pairs, i < j
    std::vector<Tensor<S>> matrices;         // one adaptive correlation matrix per pair
    Tensor<S> fused;                         // Z: pair maps mixed up to fuse_channels
    Tensor<S> embedding;                     // z = GAP(Z)
};

inline std::string pair_name(int i, int j) { return std::to_string(i) + "_" + std::to_string(j); }

// Squeeze-style per-channel gate: sigmoid(w2 * relu(w1 * GAP(F))).
template <typename S>
Tensor<S> channel_attention(const Tensor<S>& Fi, const Tensor<S>& w1, const Tensor<S>& w2) {
    return sigmoid(matvec(w2, relu(matvec(w1, global_avg_pool(Fi)))));
}

// Learnable-weighted correlation: Wij elementwise over the spatially averaged
// outer products of two (already attended, size-matched) feature maps.
template <typename S>
Tensor<S> adaptive_correlation(const Tensor<S>& Fi_hat, const Tensor<S>& Fj_hat, const Tensor<S>& Wij) {
    auto corr = channel_correlation(Fi_hat, Fj_hat);
    if (Wij.shape() != corr.shape())
        throw DimensionError("adaptive_correlation: weight shape " + detail::shape_str(Wij.shape()) +
                             " does not match correlation " + detail::shape_str(corr.shape()));
    return mul(Wij, corr);
}

// Stack the per-pair matrices as channels of one map (the channel-pair plane
// acts as the spatial extent), then depthwise 3x3 + pointwise 1x1 to the
// fused width. Returns (Z, z).
template <typename S>
std::pair<Tensor<S>, Tensor<S>> fuse(const std::vector<Tensor<S>>& matrices, const Tensor<S>& dw,
                                     const Tensor<S>& pw) {
    const int P = static_cast<int>(matrices.size());
    if (P == 0 || dw.ndim() != 4 || dw.dim(0) != P || pw.ndim() != 4 || pw.dim(1) != P)
        throw ContractError("fuse: pair count disagrees with the fusion kernels (" + std::to_string(P) + " pairs, dw " +
                            (dw.defined() ? detail::shape_str(dw.shape()) : "?") + ", pw " +
                            (pw.defined() ? detail::shape_str(pw.shape()) : "?") + ")");
    auto stacked = stack_mats(matrices);
    auto mixed = conv2d(stacked, dw, 1, 1, 1, P);
    auto Z = conv2d(mixed, pw, 1, 1, 0);
    auto z = global_avg_pool(Z);
    return {Z, z};
}

// Full module: align level sizes, gate each level's channels, correlate every
// unordered level pair under its learned weight, and fuse.
template <typename S>
CorrelationSet<S> accm_forward(const PyramidFeatures<S>& pyr, const ParamStore<S>& params, const ModelConfig& cfg) {
    const int L = static_cast<int>(pyr.size());
    if (L != cfg.levels()) throw ContractError("accm_forward: expected " + std::to_string(cfg.levels()) + " levels");

    int th = pyr[0].dim(1), tw = pyr[0].dim(2);
    for (const auto& lvl : pyr) {
        th = std::min(th, lvl.dim(1));
        tw = std::min(tw, lvl.dim(2));
    }

    std::vector<Tensor<S>> attended;
    attended.reserve(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) {
        auto pooled = adaptive_avg_pool(pyr[static_cast<std::size_t>(i)], th, tw);
        const std::string base = "accm.attn." + std::to_string(i);
        auto A = channel_attention(pooled, params.at(base + ".w1"), params.at(base + ".w2"));
        attended.push_back(scale_channels(pooled, A));
    }

    CorrelationSet<S> out;
    for (int i = 0; i < L; ++i)
        for (int j = i + 1; j < L; ++j) {
            out.pairs.emplace_back(i, j);
            out.matrices.push_back(adaptive_correlation(attended[static_cast<std::size_t>(i)],
                                                        attended[static_cast<std::size_t>(j)],
                                                        params.at("accm.corr_weight." + pair_name(i, j))));
        }
    auto [Z, z] = fuse(out.matrices, params.at("accm.fuse.dw"), params.at("accm.fuse.pw"));
    out.fused = std::move(Z);
    out.embedding = std::move(z);
    return out;
}

}  // namespace amc

#endif

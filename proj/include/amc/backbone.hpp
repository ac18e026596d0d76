#ifndef AMC_BACKBONE_HPP
#define AMC_BACKBONE_HPP

#include <string>
#include <vector>

#include "amc/config.hpp"
#include "amc/conv_ops.hpp"
#include "amc/param_store.hpp"

namespace amc {

template <typename S>
using PyramidFeatures = std::vector<Tensor<S>>;

// Compact feature extractor: four 3x3 conv+ReLU blocks with 2x2 max pooling
// after the first two, so the map comes out at a quarter of the input extent.
template <typename S>
Tensor<S> extract_features(const Tensor<S>& image, const ParamStore<S>& params, const ModelConfig& cfg) {
    if (image.ndim() != 3 || image.dim(0) != 3 || image.dim(1) != cfg.image_size || image.dim(2) != cfg.image_size)
        throw DataError("extract_features: expected a 3x" + std::to_string(cfg.image_size) + "x" +
                        std::to_string(cfg.image_size) + " image, got " + detail::shape_str(image.shape()));
    Tensor<S> h = image;
    for (int b = 0; b < 4; ++b) {
        const std::string base = "backbone.conv" + std::to_string(b + 1);
        h = relu(conv2d(h, params.at(base + ".weight"), params.at(base + ".bias"), 1, 1, 1));
        if (b < 2) h = max_pool2d(h, 2, 2);
    }
    return h;
}

// One dilated 3x3 conv per level, all stride 2 with padding = dilation, so
// every level halves the extent while the receptive field grows with the
// dilation factor. Levels are independent heads over the same F.
template <typename S>
PyramidFeatures<S> build_pyramid(const Tensor<S>& F, const ParamStore<S>& params, const ModelConfig& cfg) {
    if (F.ndim() != 3 || F.dim(0) != cfg.block_channels.back())
        throw DimensionError("build_pyramid: expected [" + std::to_string(cfg.block_channels.back()) +
                             ",h,w] features, got " + detail::shape_str(F.shape()));
    if (F.dim(1) < 2 || F.dim(2) < 2)
        throw GeometryError("build_pyramid: feature map too small to halve (" + std::to_string(F.dim(1)) + "x" +
                            std::to_string(F.dim(2)) + ")");
    PyramidFeatures<S> levels;
    levels.reserve(cfg.dilations.size());
    for (std::size_t s = 0; s < cfg.dilations.size(); ++s) {
        const int d = cfg.dilations[s];
        const std::string base = "pyramid." + std::to_string(s);
        levels.push_back(relu(conv2d(F, params.at(base + ".weight"), params.at(base + ".bias"), 2, d, d)));
    }
    return levels;
}

}  // namespace amc

#endif

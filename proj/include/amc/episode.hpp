#ifndef AMC_EPISODE_HPP
#define AMC_EPISODE_HPP

#include <string>
#include <vector>

#include "amc/dataset.hpp"
#include "amc/error.hpp"
#include "amc/rng.hpp"
#include "amc/tensor.hpp"

namespace amc {

// One few-shot task: n classes, k labeled support samples each, q queries
// each. Items reference the immutable dataset by index; labels are episode
// labels 0..n-1 and class_map takes them back to dataset class indices.
struct EpisodeItem {
    int label;         // episode label in [0, n_way)
    int class_index;   // dataset class
    int sample_index;  // sample within that class
};

struct Episode {
    int n_way = 0;
    int k_shot = 0;
    int q_queries = 0;
    std::vector<EpisodeItem> support;  // n_way * k_shot items, grouped by label
    std::vector<EpisodeItem> query;    // n_way * q_queries items, grouped by label
    std::vector<int> class_map;        // episode label -> dataset class index
};

// Uniform class choice without replacement, then a uniform k+q sample draw
// per class split into support and query. Deterministic given the rng state.
inline Episode sample_episode(const Dataset& ds, int n, int k, int q, Rng& rng) {
    if (n < 1 || k < 1 || q < 1) throw ContractError("sample_episode: n, k, q must be positive");
    if (ds.class_count() < n)
        throw DataError("sample_episode: dataset has " + std::to_string(ds.class_count()) +
                        " classes, episode needs " + std::to_string(n));

    Episode ep;
    ep.n_way = n;
    ep.k_shot = k;
    ep.q_queries = q;
    ep.class_map = rng.sample_without_replacement(ds.class_count(), n);

    for (int label = 0; label < n; ++label) {
        const int c = ep.class_map[static_cast<std::size_t>(label)];
        const auto& cls = ds.classes[static_cast<std::size_t>(c)];
        const int have = static_cast<int>(cls.samples.size());
        if (have < k + q)
            throw DataError("sample_episode: class '" + cls.name + "' has " + std::to_string(have) +
                            " samples, episode needs " + std::to_string(k + q));
        const auto picks = rng.sample_without_replacement(have, k + q);
        for (int i = 0; i < k; ++i) ep.support.push_back({label, c, picks[static_cast<std::size_t>(i)]});
        for (int i = k; i < k + q; ++i) ep.query.push_back({label, c, picks[static_cast<std::size_t>(i)]});
    }
    return ep;
}

// Materialize one referenced sample as the planar [0,1] tensor the model eats.
template <typename S>
Tensor<S> episode_image(const Dataset& ds, const EpisodeItem& item) {
    const Image& img = ds.sample(item.class_index, item.sample_index);
    return Tensor<S>::from({3, img.height, img.width}, planar_unit<S>(img));
}

}  // namespace amc

#endif

#ifndef AMC_MODEL_HPP
#define AMC_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "amc/accm.hpp"
#include "amc/backbone.hpp"
#include "amc/config.hpp"
#include "amc/meta_head.hpp"
#include "amc/param_store.hpp"
#include "amc/rng.hpp"

namespace amc {

// The assembled network: owns the parameter store and wires the component
// switches (pyramid / correlation module / correlation-guided prototypes).
template <typename S>
class Model {
  public:
    ModelConfig cfg;
    ParamStore<S> params;

    static Model init(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        Model m;
        m.cfg = cfg;
        Rng rng = Rng::derive(seed, 0x1817);  // init stream, distinct from episode sampling

        auto conv_param = [&](const std::string& base, int co, int ci, int k) {
            // Fan-in scaled uniform for the ReLU blocks, zero biases.
            const double bound = std::sqrt(6.0 / (static_cast<double>(ci) * k * k));
            m.params.add(base + ".weight", Tensor<S>::uniform({co, ci, k, k}, rng, -bound, bound, true));
            m.params.add(base + ".bias", Tensor<S>::zeros({co}, true));
        };

        int prev = 3;
        for (int b = 0; b < 4; ++b) {
            conv_param("backbone.conv" + std::to_string(b + 1), cfg.block_channels[static_cast<std::size_t>(b)], prev,
                       3);
            prev = cfg.block_channels[static_cast<std::size_t>(b)];
        }
        if (cfg.use_pyramid) {
            for (int s = 0; s < cfg.levels(); ++s) conv_param("pyramid." + std::to_string(s), cfg.proj_channels, prev, 3);
        }
        if (cfg.use_accm) {
            const int Cp = cfg.proj_channels, hid = cfg.attn_hidden(), P = cfg.pairs();
            // Ones so the module starts as plain unweighted correlation.
            for (int i = 0; i < cfg.levels(); ++i)
                for (int j = i + 1; j < cfg.levels(); ++j)
                    m.params.add("accm.corr_weight." + pair_name(i, j), Tensor<S>::full({Cp, Cp}, S(1), true));
            for (int i = 0; i < cfg.levels(); ++i) {
                const std::string base = "accm.attn." + std::to_string(i);
                m.params.add(base + ".w1", Tensor<S>::uniform({hid, Cp}, rng, -0.05, 0.05, true));
                m.params.add(base + ".w2", Tensor<S>::uniform({Cp, hid}, rng, -0.05, 0.05, true));
            }
            const double dwb = std::sqrt(6.0 / 9.0);
            m.params.add("accm.fuse.dw", Tensor<S>::uniform({P, 1, 3, 3}, rng, -dwb, dwb, true));
            const double pwb = std::sqrt(6.0 / static_cast<double>(P));
            m.params.add("accm.fuse.pw", Tensor<S>::uniform({cfg.fuse_channels, P, 1, 1}, rng, -pwb, pwb, true));
        }
        m.params.add("head.tau", Tensor<S>::scalar(static_cast<S>(cfg.tau_init), true));
        return m;
    }

    // Image -> embedding z under the active component switches.
    Tensor<S> embed(const Tensor<S>& image) const {
        auto F = extract_features(image, params, cfg);
        if (!cfg.use_pyramid) return global_avg_pool(F);
        auto pyr = build_pyramid(F, params, cfg);
        if (!cfg.use_accm) {
            std::vector<Tensor<S>> pooled;
            pooled.reserve(pyr.size());
            for (const auto& lvl : pyr) pooled.push_back(global_avg_pool(lvl));
            return concat_vecs(pooled);
        }
        return accm_forward(pyr, params, cfg).embedding;
    }

    const Tensor<S>& tau() const { return params.at("head.tau"); }
    Tensor<S>& tau() { return params.at("head.tau"); }

    // Support weights per Eq. style switch: correlation-guided softmax scores,
    // or plain uniform when that component is ablated.
    Tensor<S> support_weights(const std::vector<Tensor<S>>& embeddings) const {
        if (cfg.use_corr_meta) return attention_weights(embeddings, tau());
        const int K = static_cast<int>(embeddings.size());
        return Tensor<S>::full({K}, static_cast<S>(1.0 / K));
    }

    // Post-step projection of constrained parameters (temperature clamp).
    void apply_constraints() {
        auto& tv = tau().values_mut();
        tv[0] = std::clamp(tv[0], static_cast<S>(cfg.tau_min), static_cast<S>(cfg.tau_max));
    }

    std::int64_t param_count() const { return params.total_count(); }
};

}  // namespace amc

#endif

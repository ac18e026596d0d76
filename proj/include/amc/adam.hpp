#ifndef AMC_ADAM_HPP
#define AMC_ADAM_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "amc/param_store.hpp"

namespace amc {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with bias correction. Moment buffers are keyed by parameter name so
// checkpoints can restore them independent of construction order.
template <typename S>
class Adam {
  public:
    struct Slot {
        std::vector<S> m, v;
    };

    explicit Adam(ParamStore<S>& params, AdamConfig cfg = {}) : params_(&params), cfg_(cfg) {
        for (const auto& [name, t] : params) {
            Slot s;
            s.m.assign(static_cast<std::size_t>(t.size()), S(0));
            s.v.assign(static_cast<std::size_t>(t.size()), S(0));
            slots_.emplace(name, std::move(s));
        }
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (auto& [name, p] : *params_) {
            if (!p.has_grad()) throw ContractError("adam: parameter '" + name + "' has no gradient");
            auto& slot = slots_.at(name);
            const auto& g = p.grad();
            auto& w = p.values_mut();
            for (std::size_t i = 0; i < w.size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                const double m = cfg_.beta1 * static_cast<double>(slot.m[i]) + (1.0 - cfg_.beta1) * gi;
                const double v = cfg_.beta2 * static_cast<double>(slot.v[i]) + (1.0 - cfg_.beta2) * gi * gi;
                slot.m[i] = static_cast<S>(m);
                slot.v[i] = static_cast<S>(v);
                const double mhat = m / bc1;
                const double vhat = v / bc2;
                w[i] = static_cast<S>(static_cast<double>(w[i]) - lr * mhat / (std::sqrt(vhat) + cfg_.eps));
            }
        }
    }

    std::int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

    // Checkpoint plumbing.
    const std::map<std::string, Slot>& slots() const { return slots_; }
    void restore(std::map<std::string, Slot> slots, std::int64_t step_count) {
        for (const auto& [name, p] : *params_) {
            auto it = slots.find(name);
            if (it == slots.end()) throw ContractError("adam restore: missing state for '" + name + "'");
            if (static_cast<std::int64_t>(it->second.m.size()) != p.size() ||
                static_cast<std::int64_t>(it->second.v.size()) != p.size())
                throw ContractError("adam restore: state size mismatch for '" + name + "'");
        }
        slots_ = std::move(slots);
        t_ = step_count;
    }

  private:
    ParamStore<S>* params_;
    AdamConfig cfg_;
    std::map<std::string, Slot> slots_;
    std::int64_t t_ = 0;
};

}  // namespace amc

#endif

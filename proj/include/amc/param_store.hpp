#ifndef AMC_PARAM_STORE_HPP
#define AMC_PARAM_STORE_HPP

#include <cstdint>
#include <map>
#include <string>

#include "amc/tensor.hpp"

namespace amc {

// Named learnable tensors. std::map keeps iteration lexicographic, which every
// consumer (optimizer, checkpoint, determinism tests) relies on.
template <typename S>
class ParamStore {
  public:
    using Map = std::map<std::string, Tensor<S>>;

    Tensor<S>& add(const std::string& name, Tensor<S> t) {
        if (!t.requires_grad()) throw ContractError("parameter '" + name + "' must track gradients");
        auto [it, inserted] = params_.emplace(name, std::move(t));
        if (!inserted) throw ContractError("duplicate parameter name '" + name + "'");
        return it->second;
    }

    bool has(const std::string& name) const { return params_.count(name) != 0; }

    Tensor<S>& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
        return it->second;
    }
    const Tensor<S>& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
        return it->second;
    }

    std::size_t size() const { return params_.size(); }

    std::int64_t total_count() const {
        std::int64_t n = 0;
        for (const auto& [name, t] : params_) n += t.size();
        return n;
    }

    void zero_grad() {
        for (auto& [name, t] : params_) t.zero_grad();
    }

    typename Map::iterator begin() { return params_.begin(); }
    typename Map::iterator end() { return params_.end(); }
    typename Map::const_iterator begin() const { return params_.begin(); }
    typename Map::const_iterator end() const { return params_.end(); }

  private:
    Map params_;
};

}  // namespace amc

#endif

#ifndef AMC_TESTS_TESTUTIL_HPP
#define AMC_TESTS_TESTUTIL_HPP

#include <cmath>
#include <string>
#include <vector>

#include "amc/tensor.hpp"

namespace testutil {

struct GradCheckResult {
    double max_rel = 0.0;   // worst relative mismatch over all checked entries
    double max_abs = 0.0;   // absolute mismatch at that entry
    std::string where;      // "leaf<k>[i]" of the worst entry
    bool ok(double rel_tol = 1e-3, double abs_tol = 1e-8) const {
        return max_rel <= rel_tol || max_abs <= abs_tol;
    }
};

// Central-difference oracle: perturbs every element of every leaf, re-runs
// the forward closure, and compares (f(x+h)-f(x-h))/2h against the reverse-mode
// gradient. The closure must rebuild the graph from the leaves on each call.
template <typename S, typename F>
GradCheckResult grad_check(std::vector<amc::Tensor<S>> leaves, F make_loss, double h = 1e-4) {
    for (auto& l : leaves) l.zero_grad();
    {
        auto loss = make_loss();
        amc::backward(loss);
    }
    std::vector<std::vector<S>> analytic;
    analytic.reserve(leaves.size());
    for (auto& l : leaves) analytic.push_back(l.grad());

    GradCheckResult r;
    for (std::size_t k = 0; k < leaves.size(); ++k) {
        auto& vals = leaves[k].values_mut();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const S orig = vals[i];
            double fp, fm;
            {
                amc::NoGradGuard ng;
                vals[i] = orig + static_cast<S>(h);
                fp = static_cast<double>(make_loss().item());
                vals[i] = orig - static_cast<S>(h);
                fm = static_cast<double>(make_loss().item());
            }
            vals[i] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double ad = static_cast<double>(analytic[k][i]);
            const double abs_err = std::fabs(ad - fd);
            const double rel = abs_err / std::max({std::fabs(ad), std::fabs(fd), 1e-12});
            if (abs_err > 1e-8 && rel > r.max_rel) {
                r.max_rel = rel;
                r.max_abs = abs_err;
                r.where = "leaf" + std::to_string(k) + "[" + std::to_string(i) + "]";
            }
        }
    }
    return r;
}

inline bool close(double a, double b, double rel = 1e-6, double abs = 1e-9) {
    return std::fabs(a - b) <= std::max(abs, rel * std::max(std::fabs(a), std::fabs(b)));
}

}  // namespace testutil

#endif

#ifndef AMC_TENSOR_HPP
#define AMC_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "amc/error.hpp"
#include "amc/rng.hpp"

namespace amc {

namespace detail {

inline thread_local bool g_grad_enabled = true;
inline thread_local bool g_finite_checks = false;

inline std::int64_t numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

template <typename S>
struct Node {
    std::vector<int> shape;
    std::vector<S> value;
    std::vector<S> grad;  // allocated on first use
    bool requires_grad = false;
    bool leaf = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    std::int64_t size() const { return static_cast<std::int64_t>(value.size()); }

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), S(0));
    }
};

template <typename S>
std::shared_ptr<Node<S>> make_node(std::vector<int> shape) {
    auto n = std::make_shared<Node<S>>();
    n->shape = std::move(shape);
    for (int d : n->shape)
        if (d <= 0) throw DimensionError("tensor dimensions must be positive");
    n->value.assign(static_cast<std::size_t>(numel(n->shape)), S(0));
    return n;
}

}  // namespace detail

inline void set_finite_checks(bool on) { detail::g_finite_checks = on; }
inline bool finite_checks_enabled() { return detail::g_finite_checks; }

// Disables tape recording in the current scope (evaluation / inference paths).
class NoGradGuard {
  public:
    NoGradGuard() : prev_(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
    ~NoGradGuard() { detail::g_grad_enabled = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

// Dense row-major tensor handle. Copies share the underlying node; forward
// values are immutable once an op has consumed them (parameters are mutated
// only by the optimizer, between tape builds).
template <typename S>
class Tensor {
  public:
    using NodePtr = std::shared_ptr<detail::Node<S>>;

    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor from(std::vector<int> shape, std::vector<S> data, bool requires_grad = false) {
        auto n = detail::make_node<S>(std::move(shape));
        if (static_cast<std::int64_t>(data.size()) != n->size())
            throw DimensionError("tensor data length does not match shape (" + std::to_string(data.size()) + " vs " +
                                 std::to_string(n->size()) + ")");
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        n->leaf = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        auto n = detail::make_node<S>(std::move(shape));
        n->requires_grad = requires_grad;
        n->leaf = requires_grad;
        return Tensor(std::move(n));
    }

    static Tensor full(std::vector<int> shape, S v, bool requires_grad = false) {
        auto t = zeros(std::move(shape), requires_grad);
        std::fill(t.node_->value.begin(), t.node_->value.end(), v);
        return t;
    }

    static Tensor scalar(S v, bool requires_grad = false) { return full({1}, v, requires_grad); }

    static Tensor uniform(std::vector<int> shape, Rng& rng, double lo, double hi, bool requires_grad = false) {
        auto t = zeros(std::move(shape), requires_grad);
        for (auto& x : t.node_->value) x = static_cast<S>(rng.uniform(lo, hi));
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<int>& shape() const { return node_->shape; }
    int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    std::int64_t size() const { return node_->size(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }

    const std::vector<S>& values() const { return node_->value; }
    // Direct mutation is reserved for initialization and optimizer updates.
    std::vector<S>& values_mut() { return node_->value; }

    bool has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }
    const std::vector<S>& grad() const {
        if (!has_grad()) throw ContractError("tensor has no gradient buffer");
        return node_->grad;
    }
    std::vector<S>& grad_mut() {
        node_->ensure_grad();
        return node_->grad;
    }

    void zero_grad() {
        node_->ensure_grad();
        std::fill(node_->grad.begin(), node_->grad.end(), S(0));
    }

    S item() const {
        if (size() != 1) throw ContractError("item() requires a single-element tensor");
        return node_->value[0];
    }

    const NodePtr& node() const { return node_; }

  private:
    NodePtr node_;
};

namespace detail {

template <typename S>
void check_finite_values(const char* op, const std::vector<S>& v) {
    if (!g_finite_checks) return;
    for (const S x : v)
        if (!std::isfinite(static_cast<double>(x)))
            throw Error(std::string(op) + " produced a non-finite value");
}

template <typename S>
void accumulate(Node<S>* p, const S* g, std::int64_t n) {
    if (!p->requires_grad) return;
    p->ensure_grad();
    for (std::int64_t i = 0; i < n; ++i) p->grad[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)];
}

template <typename S, typename... Parents>
void attach(const std::shared_ptr<Node<S>>& out, std::function<void(Node<S>&)> fn, const Parents&... parents) {
    if (!g_grad_enabled) return;
    const bool any = (parents->requires_grad || ...);
    if (!any) return;
    out->requires_grad = true;
    (out->parents.push_back(parents), ...);
    out->backward_fn = std::move(fn);
}

inline std::string shape_str(const std::vector<int>& s) {
    std::string r = "[";
    for (std::size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
    return r + "]";
}

template <typename S>
void check_same_shape(const char* op, const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and reduction operations
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape("add", a, b);
    auto out = detail::make_node<S>(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + bv[i];
    auto* an = a.node().get();
    auto* bn = b.node().get();
    detail::attach<S>(
        out,
        [an, bn](detail::Node<S>& self) {
            detail::accumulate(an, self.grad.data(), self.size());
            detail::accumulate(bn, self.grad.data(), self.size());
        },
        a.node(), b.node());
    detail::check_finite_values("add", out->value);
    return Tensor<S>(out);
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape("sub", a, b);
    auto out = detail::make_node<S>(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] - bv[i];
    auto* an = a.node().get();
    auto* bn = b.node().get();
    detail::attach<S>(
        out,
        [an, bn](detail::Node<S>& self) {
            detail::accumulate(an, self.grad.data(), self.size());
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
            }
        },
        a.node(), b.node());
    detail::check_finite_values("sub", out->value);
    return Tensor<S>(out);
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape("mul", a, b);
    auto out = detail::make_node<S>(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * bv[i];
    auto* an = a.node().get();
    auto* bn = b.node().get();
    detail::attach<S>(
        out,
        [an, bn](detail::Node<S>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i] * an->value[i];
            }
        },
        a.node(), b.node());
    detail::check_finite_values("mul", out->value);
    return Tensor<S>(out);
}

template <typename S>
Tensor<S> divide(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape("divide", a, b);
    auto out = detail::make_node<S>(a.shape());
    const auto& av = a.values();
    const auto& bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] / bv[i];
    auto* an = a.node().get();
    auto* bn = b.node().get();
    detail::attach<S>(
        out,
        [an, bn](detail::Node<S>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] / bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i)
                    bn->grad[i] -= self.grad[i] * self.value[i] / bn->value[i];
            }
        },
        a.node(), b.node());
    detail::check_finite_values("divide", out->value);
    return Tensor<S>(out);
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, double c) {
    auto out = detail::make_node<S>(a.shape());
    const auto& av = a.values();
    const S cs = static_cast<S>(c);
    for (std::size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * cs;
    auto* an = a.node().get();
    detail::attach<S>(
        out,
        [an, cs](detail::Node<S>& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * cs;
            }
        },
        a.node());
    detail::check_finite_values("scale", out->value);
    return Tensor<S>(out);
}

// y = x * s[0] where s is a single-element tensor (gradient flows to both).
template <typename S>
Tensor<S> scale_by(const Tensor<S>& x, const Tensor<S>& s) {
    if (s.size() != 1) throw DimensionError("scale_by: scale must be a single-element tensor");
    auto out = detail::make_node<S>(x.shape());
    const auto& xv = x.values();
    const S sv = s.values()[0];
    for (std::size_t i = 0; i < xv.size(); ++i) out->value[i] = xv[i] * sv;
    auto* xn = x.node().get();
    auto* sn = s.node().get();
    detail::attach<S>(
        out,
        [xn, sn](detail::Node<S>& self) {
            const S sv2 = sn->value[0];
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (std::size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i] * sv2;
            }
            if (sn->requires_grad) {
                sn->ensure_grad();
                S acc = S(0);
                for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * xn->value[i];
                sn->grad[0] += acc;
            }
        },
        x.node(), s.node());
    detail::check_finite_values("scale_by", out->value);
    return Tensor<S>(out);
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
    auto out = detail::make_node<S>(x.shape());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < xv.size(); ++i) out->value[i] = xv[i] > S(0) ? xv[i] : S(0);
    auto* xn = x.node().get();
    detail::attach<S>(
        out,
        [xn](detail::Node<S>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (self.value[i] > S(0)) xn->grad[i] += self.grad[i];
        },
        x.node());
    return Tensor<S>(out);
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& x) {
    auto out = detail::make_node<S>(x.shape());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double v = static_cast<double>(xv[i]);
        // Saturation-safe on both sides.
        const double y = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
        out->value[i] = static_cast<S>(y);
    }
    auto* xn = x.node().get();
    detail::attach<S>(
        out,
        [xn](detail::Node<S>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                xn->grad[i] += self.grad[i] * self.value[i] * (S(1) - self.value[i]);
        },
        x.node());
    detail::check_finite_values("sigmoid", out->value);
    return Tensor<S>(out);
}

template <typename S>
Tensor<S> sqrt_op(const Tensor<S>& x) {
    auto out = detail::make_node<S>(x.shape());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < xv.size(); ++i) {
        if (xv[i] < S(0)) throw ContractError("sqrt_op: negative input");
        out->value[i] = std::sqrt(xv[i]);
    }
    auto* xn = x.node().get();
    detail::attach<S>(
        out,
        [xn](detail::Node<S>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                xn->grad[i] += self.grad[i] / (S(2) * self.value[i]);
        },
        x.node());
    return Tensor<S>(out);
}

template <typename S>
Tensor<S> clamp_min(const Tensor<S>& x, double floor_v) {
    auto out = detail::make_node<S>(x.shape());
    const auto& xv = x.values();
    const S f = static_cast<S>(floor_v);
    for (std::size_t i = 0; i < xv.size(); ++i) out->value[i] = xv[i] > f ? xv[i] : f;
    auto* xn = x.node().get();
    detail::attach<S>(
        out,
        [xn, f](detail::Node<S>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                if (xn->value[i] > f) xn->grad[i] += self.grad[i];
        },
        x.node());
    return Tensor<S>(out);
}

template <typename S>
Tensor<S> sum(const Tensor<S>& x) {
    auto out = detail::make_node<S>({1});
    S acc = S(0);
    for (const S v : x.values()) acc += v;
    out->value[0] = acc;
    auto* xn = x.node().get();
    detail::attach<S>(
        out,
        [xn](detail::Node<S>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            const S g = self.grad[0];
            for (auto& gi : xn->grad) gi += g;
        },
        x.node());
    detail::check_finite_values("sum", out->value);
    return Tensor<S>(out);
}

template <typename S>
Tensor<S> dot(const Tensor<S>& a, const Tensor<S>& b) {
    detail::check_same_shape("dot", a, b);
    auto out = detail::make_node<S>({1});
    const auto& av = a.values();
    const auto& bv = b.values();
    S acc = S(0);
    for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
    out->value[0] = acc;
    auto* an = a.node().get();
    auto* bn = b.node().get();
    detail::attach<S>(
        out,
        [an, bn](detail::Node<S>& self) {
            const S g = self.grad[0];
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g * bn->value[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < bn->grad.size(); ++i) bn->grad[i] += g * an->value[i];
            }
        },
        a.node(), b.node());
    detail::check_finite_values("dot", out->value);
    return Tensor<S>(out);
}

// W: [m,n], x: [n] -> [m]
template <typename S>
Tensor<S> matvec(const Tensor<S>& W, const Tensor<S>& x) {
    if (W.ndim() != 2 || x.ndim() != 1 || W.dim(1) != x.dim(0))
        throw DimensionError("matvec: expected [m,n] x [n], got " + detail::shape_str(W.shape()) + " x " +
                             detail::shape_str(x.shape()));
    const int m = W.dim(0), n = W.dim(1);
    auto out = detail::make_node<S>({m});
    const auto& wv = W.values();
    const auto& xv = x.values();
    for (int r = 0; r < m; ++r) {
        S acc = S(0);
        const S* row = wv.data() + static_cast<std::size_t>(r) * n;
        for (int c = 0; c < n; ++c) acc += row[c] * xv[static_cast<std::size_t>(c)];
        out->value[static_cast<std::size_t>(r)] = acc;
    }
    auto* wn = W.node().get();
    auto* xn = x.node().get();
    detail::attach<S>(
        out,
        [wn, xn, m, n](detail::Node<S>& self) {
            if (wn->requires_grad) {
                wn->ensure_grad();
                for (int r = 0; r < m; ++r) {
                    const S g = self.grad[static_cast<std::size_t>(r)];
                    S* row = wn->grad.data() + static_cast<std::size_t>(r) * n;
                    for (int c = 0; c < n; ++c) row[c] += g * xn->value[static_cast<std::size_t>(c)];
                }
            }
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (int r = 0; r < m; ++r) {
                    const S g = self.grad[static_cast<std::size_t>(r)];
                    const S* row = wn->value.data() + static_cast<std::size_t>(r) * n;
                    for (int c = 0; c < n; ++c) xn->grad[static_cast<std::size_t>(c)] += g * row[c];
                }
            }
        },
        W.node(), x.node());
    detail::check_finite_values("matvec", out->value);
    return Tensor<S>(out);
}

// Numerically stable softmax over a vector.
template <typename S>
Tensor<S> softmax(const Tensor<S>& x) {
    if (x.ndim() != 1) throw DimensionError("softmax: expected a vector");
    auto out = detail::make_node<S>(x.shape());
    const auto& xv = x.values();
    S mx = xv[0];
    for (const S v : xv) mx = std::max(mx, v);
    double denom = 0.0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const double e = std::exp(static_cast<double>(xv[i] - mx));
        out->value[i] = static_cast<S>(e);
        denom += e;
    }
    for (auto& v : out->value) v = static_cast<S>(static_cast<double>(v) / denom);
    auto* xn = x.node().get();
    detail::attach<S>(
        out,
        [xn](detail::Node<S>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            S inner = S(0);
            for (std::size_t i = 0; i < self.grad.size(); ++i) inner += self.grad[i] * self.value[i];
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                xn->grad[i] += self.value[i] * (self.grad[i] - inner);
        },
        x.node());
    detail::check_finite_values("softmax", out->value);
    return Tensor<S>(out);
}

// Fused -log softmax(logits)[label]; never forms normalized probabilities.
template <typename S>
Tensor<S> cross_entropy_logits(const Tensor<S>& logits, int label) {
    if (logits.ndim() != 1) throw DimensionError("cross_entropy_logits: expected a logit vector");
    const int n = logits.dim(0);
    if (label < 0 || label >= n) throw ContractError("cross_entropy_logits: label out of range");
    const auto& lv = logits.values();
    S mx = lv[0];
    for (const S v : lv) mx = std::max(mx, v);
    double se = 0.0;
    for (const S v : lv) se += std::exp(static_cast<double>(v - mx));
    const double lse = static_cast<double>(mx) + std::log(se);
    auto out = detail::make_node<S>({1});
    out->value[0] = static_cast<S>(lse - static_cast<double>(lv[static_cast<std::size_t>(label)]));
    auto* ln = logits.node().get();
    detail::attach<S>(
        out,
        [ln, label, mx, se](detail::Node<S>& self) {
            if (!ln->requires_grad) return;
            ln->ensure_grad();
            const S g = self.grad[0];
            for (std::size_t i = 0; i < ln->grad.size(); ++i) {
                const double p = std::exp(static_cast<double>(ln->value[i] - mx)) / se;
                S d = static_cast<S>(p);
                if (static_cast<int>(i) == label) d -= S(1);
                ln->grad[i] += g * d;
            }
        },
        logits.node());
    detail::check_finite_values("cross_entropy_logits", out->value);
    return Tensor<S>(out);
}

template <typename S>
Tensor<S> slice_scalar(const Tensor<S>& x, int i) {
    if (i < 0 || static_cast<std::int64_t>(i) >= x.size()) throw ContractError("slice_scalar: index out of range");
    auto out = detail::make_node<S>({1});
    out->value[0] = x.values()[static_cast<std::size_t>(i)];
    auto* xn = x.node().get();
    detail::attach<S>(
        out,
        [xn, i](detail::Node<S>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            xn->grad[static_cast<std::size_t>(i)] += self.grad[0];
        },
        x.node());
    return Tensor<S>(out);
}

template <typename S>
Tensor<S> concat_scalars(const std::vector<Tensor<S>>& xs) {
    if (xs.empty()) throw ContractError("concat_scalars: empty input");
    auto out = detail::make_node<S>({static_cast<int>(xs.size())});
    bool any_grad = false;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (xs[i].size() != 1) throw DimensionError("concat_scalars: inputs must be single-element tensors");
        out->value[i] = xs[i].values()[0];
        any_grad = any_grad || xs[i].requires_grad();
    }
    if (detail::g_grad_enabled && any_grad) {
        out->requires_grad = true;
        std::vector<detail::Node<S>*> raw;
        raw.reserve(xs.size());
        for (const auto& t : xs) {
            out->parents.push_back(t.node());
            raw.push_back(t.node().get());
        }
        out->backward_fn = [raw](detail::Node<S>& self) {
            for (std::size_t i = 0; i < raw.size(); ++i) {
                if (!raw[i]->requires_grad) continue;
                raw[i]->ensure_grad();
                raw[i]->grad[0] += self.grad[i];
            }
        };
    }
    return Tensor<S>(out);
}

// Mean of a list of scalars (used for query/batch loss averaging).
template <typename S>
Tensor<S> mean_scalars(const std::vector<Tensor<S>>& xs) {
    return scale(sum(concat_scalars(xs)), 1.0 / static_cast<double>(xs.size()));
}

// ---------------------------------------------------------------------------
// Reverse-mode differentiation over the recorded tape
// ---------------------------------------------------------------------------

// Accumulates d(loss)/d(leaf) into every reachable leaf's grad buffer.
// Gradients of leaves persist and keep accumulating until zeroed explicitly;
// intermediate buffers are released as the sweep retires them.
template <typename S>
void backward(const Tensor<S>& loss) {
    if (loss.size() != 1) throw ContractError("backward: loss must be a scalar");
    if (!loss.requires_grad())
        throw ContractError("backward: loss does not depend on any gradient-tracked tensor");

    using NodeT = detail::Node<S>;
    using NodePtr = std::shared_ptr<NodeT>;
    // The order list owns the tape for the duration of the sweep; detaching a
    // retired node's parent links below must not free nodes still queued.
    std::vector<NodePtr> order;
    std::unordered_set<NodeT*> visited;
    std::vector<std::pair<NodePtr, std::size_t>> stack;
    stack.emplace_back(loss.node(), 0);
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        auto& fr = stack.back();
        NodeT* node = fr.first.get();
        if (fr.second < node->parents.size()) {
            NodePtr p = node->parents[fr.second++];
            if (p->requires_grad && !visited.count(p.get())) {
                visited.insert(p.get());
                stack.emplace_back(std::move(p), 0);
            }
        } else {
            order.push_back(std::move(fr.first));
            stack.pop_back();
        }
    }

    loss.node()->ensure_grad();
    loss.node()->grad[0] += S(1);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        NodeT* n = it->get();
        if (n->backward_fn) {
            n->ensure_grad();
            n->backward_fn(*n);
            n->backward_fn = nullptr;
        }
        if (!n->leaf) {
            n->grad.clear();
            n->grad.shrink_to_fit();
            // Breaking the parent links here keeps later tape destruction
            // iterative instead of a deep recursive shared_ptr cascade.
            n->parents.clear();
        }
    }
}

}  // namespace amc

#endif

#ifndef AMC_CONV_OPS_HPP
#define AMC_CONV_OPS_HPP

#include <cstring>
#include <memory>
#include <vector>

#include "amc/gemm.hpp"
#include "amc/tensor.hpp"

namespace amc {

// Spatial geometry for one axis: kernel k, stride s, dilation d, padding p.
inline int conv_out_extent(int in, int k, int stride, int dilation, int padding) {
    const int eff = dilation * (k - 1) + 1;
    const int num = in + 2 * padding - eff;
    if (num < 0) return 0;
    return num / stride + 1;
}

namespace detail {

// x: [C,H,W] -> cols: [C*kh*kw, Ho*Wo], zero-padded out-of-range taps.
template <typename S>
void im2col(const S* x, int C, int H, int W, int kh, int kw, int stride, int dilation, int padding, int Ho, int Wo,
            S* cols) {
    const std::int64_t plane = static_cast<std::int64_t>(Ho) * Wo;
    std::int64_t row = 0;
    for (int c = 0; c < C; ++c) {
        const S* xc = x + static_cast<std::int64_t>(c) * H * W;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj, ++row) {
                S* dst = cols + row * plane;
                for (int oi = 0; oi < Ho; ++oi) {
                    const int ii = oi * stride - padding + ki * dilation;
                    if (ii < 0 || ii >= H) {
                        std::memset(dst + static_cast<std::int64_t>(oi) * Wo, 0, sizeof(S) * static_cast<std::size_t>(Wo));
                        continue;
                    }
                    const S* src = xc + static_cast<std::int64_t>(ii) * W;
                    S* drow = dst + static_cast<std::int64_t>(oi) * Wo;
                    for (int oj = 0; oj < Wo; ++oj) {
                        const int jj = oj * stride - padding + kj * dilation;
                        drow[oj] = (jj >= 0 && jj < W) ? src[jj] : S(0);
                    }
                }
            }
        }
    }
}

// Scatter-add transpose of im2col: cols [C*kh*kw, Ho*Wo] accumulated into dx [C,H,W].
template <typename S>
void col2im_add(const S* cols, int C, int H, int W, int kh, int kw, int stride, int dilation, int padding, int Ho,
                int Wo, S* dx) {
    const std::int64_t plane = static_cast<std::int64_t>(Ho) * Wo;
    std::int64_t row = 0;
    for (int c = 0; c < C; ++c) {
        S* xc = dx + static_cast<std::int64_t>(c) * H * W;
        for (int ki = 0; ki < kh; ++ki) {
            for (int kj = 0; kj < kw; ++kj, ++row) {
                const S* src = cols + row * plane;
                for (int oi = 0; oi < Ho; ++oi) {
                    const int ii = oi * stride - padding + ki * dilation;
                    if (ii < 0 || ii >= H) continue;
                    S* xrow = xc + static_cast<std::int64_t>(ii) * W;
                    const S* srow = src + static_cast<std::int64_t>(oi) * Wo;
                    for (int oj = 0; oj < Wo; ++oj) {
                        const int jj = oj * stride - padding + kj * dilation;
                        if (jj >= 0 && jj < W) xrow[jj] += srow[oj];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// 2D convolution, single image. x: [Ci,H,W], w: [Co,Ci/groups,kh,kw],
// optional bias b: [Co]. Output [Co,Ho,Wo].
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b, int stride, int dilation, int padding,
                 int groups = 1) {
    if (x.ndim() != 3) throw DimensionError("conv2d: input must be [C,H,W]");
    if (w.ndim() != 4) throw DimensionError("conv2d: weight must be [Co,Ci/g,kh,kw]");
    const int Ci = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int Co = w.dim(0), Cg = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    if (groups < 1 || Ci % groups != 0 || Co % groups != 0)
        throw DimensionError("conv2d: channel counts not divisible by groups");
    if (Cg != Ci / groups) throw DimensionError("conv2d: weight input channels disagree with groups");
    if (stride < 1 || dilation < 1 || padding < 0) throw GeometryError("conv2d: bad stride/dilation/padding");
    if (b.defined() && (b.ndim() != 1 || b.dim(0) != Co)) throw DimensionError("conv2d: bias must be [Co]");
    const int Ho = conv_out_extent(H, kh, stride, dilation, padding);
    const int Wo = conv_out_extent(W, kw, stride, dilation, padding);
    if (Ho <= 0 || Wo <= 0)
        throw GeometryError("conv2d: kernel does not fit the padded input (" + std::to_string(H) + "x" +
                            std::to_string(W) + ")");

    const int Cog = Co / groups;
    const std::int64_t krows = static_cast<std::int64_t>(Cg) * kh * kw;
    const std::int64_t plane = static_cast<std::int64_t>(Ho) * Wo;

    auto out = detail::make_node<S>({Co, Ho, Wo});
    // Kept alive for the backward pass; released with the tape.
    auto cols = std::make_shared<std::vector<S>>(static_cast<std::size_t>(groups) * krows * plane);

    for (int g = 0; g < groups; ++g) {
        const S* xg = x.values().data() + static_cast<std::int64_t>(g) * Cg * H * W;
        S* cg = cols->data() + static_cast<std::int64_t>(g) * krows * plane;
        detail::im2col(xg, Cg, H, W, kh, kw, stride, dilation, padding, Ho, Wo, cg);
        const S* wg = w.values().data() + static_cast<std::int64_t>(g) * Cog * krows;
        S* og = out->value.data() + static_cast<std::int64_t>(g) * Cog * plane;
        gemm_nn(Cog, static_cast<int>(plane), static_cast<int>(krows), wg, cg, og);
    }
    if (b.defined()) {
        const auto& bv = b.values();
        for (int o = 0; o < Co; ++o) {
            S* orow = out->value.data() + static_cast<std::int64_t>(o) * plane;
            const S bo = bv[static_cast<std::size_t>(o)];
            for (std::int64_t i = 0; i < plane; ++i) orow[i] += bo;
        }
    }

    auto* xn = x.node().get();
    auto* wn = w.node().get();
    detail::Node<S>* bn = b.defined() ? b.node().get() : nullptr;
    auto fn = [xn, wn, bn, cols, Ci, H, W, Co, Cg, kh, kw, stride, dilation, padding, Ho, Wo, groups, Cog, krows,
               plane](detail::Node<S>& self) {
        const S* dy = self.grad.data();
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            for (int o = 0; o < Co; ++o) {
                S acc = S(0);
                const S* row = dy + static_cast<std::int64_t>(o) * plane;
                for (std::int64_t i = 0; i < plane; ++i) acc += row[i];
                bn->grad[static_cast<std::size_t>(o)] += acc;
            }
        }
        if (wn->requires_grad) {
            wn->ensure_grad();
            for (int g = 0; g < groups; ++g) {
                const S* dyg = dy + static_cast<std::int64_t>(g) * Cog * plane;
                const S* cg = cols->data() + static_cast<std::int64_t>(g) * krows * plane;
                S* dwg = wn->grad.data() + static_cast<std::int64_t>(g) * Cog * krows;
                gemm_nt(Cog, static_cast<int>(krows), static_cast<int>(plane), dyg, cg, dwg, /*accumulate=*/true);
            }
        }
        if (xn->requires_grad) {
            xn->ensure_grad();
            std::vector<S> dcols(static_cast<std::size_t>(krows) * plane);
            for (int g = 0; g < groups; ++g) {
                const S* wg = wn->value.data() + static_cast<std::int64_t>(g) * Cog * krows;
                const S* dyg = dy + static_cast<std::int64_t>(g) * Cog * plane;
                gemm_tn(static_cast<int>(krows), static_cast<int>(plane), Cog, wg, dyg, dcols.data());
                S* dxg = xn->grad.data() + static_cast<std::int64_t>(g) * Cg * H * W;
                detail::col2im_add(dcols.data(), Cg, H, W, kh, kw, stride, dilation, padding, Ho, Wo, dxg);
            }
        }
        (void)Ci;
    };
    if (bn)
        detail::attach<S>(out, std::move(fn), x.node(), w.node(), b.node());
    else
        detail::attach<S>(out, std::move(fn), x.node(), w.node());
    detail::check_finite_values("conv2d", out->value);
    return Tensor<S>(out);
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& w, int stride, int dilation, int padding, int groups = 1) {
    return conv2d(x, w, Tensor<S>(), stride, dilation, padding, groups);
}

// Max pooling with square window. Ties break toward the first scanned index.
template <typename S>
Tensor<S> max_pool2d(const Tensor<S>& x, int k, int stride) {
    if (x.ndim() != 3) throw DimensionError("max_pool2d: input must be [C,H,W]");
    if (k < 1 || stride < 1) throw GeometryError("max_pool2d: bad window/stride");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int Ho = conv_out_extent(H, k, stride, 1, 0);
    const int Wo = conv_out_extent(W, k, stride, 1, 0);
    if (Ho <= 0 || Wo <= 0) throw GeometryError("max_pool2d: window does not fit input");
    auto out = detail::make_node<S>({C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<std::int32_t>>(out->value.size());
    const auto& xv = x.values();
    std::size_t oidx = 0;
    for (int c = 0; c < C; ++c) {
        const S* xc = xv.data() + static_cast<std::int64_t>(c) * H * W;
        for (int oi = 0; oi < Ho; ++oi) {
            for (int oj = 0; oj < Wo; ++oj, ++oidx) {
                const int i0 = oi * stride, j0 = oj * stride;
                S best = xc[static_cast<std::int64_t>(i0) * W + j0];
                int bidx = i0 * W + j0;
                for (int di = 0; di < k; ++di)
                    for (int dj = 0; dj < k; ++dj) {
                        const int idx = (i0 + di) * W + (j0 + dj);
                        if (xc[idx] > best) {
                            best = xc[idx];
                            bidx = idx;
                        }
                    }
                out->value[oidx] = best;
                (*argmax)[oidx] = bidx;
            }
        }
    }
    auto* xn = x.node().get();
    detail::attach<S>(
        out,
        [xn, argmax, C, H, W, Ho, Wo](detail::Node<S>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            const std::int64_t plane = static_cast<std::int64_t>(Ho) * Wo;
            for (int c = 0; c < C; ++c) {
                S* dxc = xn->grad.data() + static_cast<std::int64_t>(c) * H * W;
                const S* g = self.grad.data() + c * plane;
                const std::int32_t* am = argmax->data() + c * plane;
                for (std::int64_t i = 0; i < plane; ++i) dxc[am[i]] += g[i];
            }
        },
        x.node());
    return Tensor<S>(out);
}

// [C,H,W] -> [C], mean over the spatial plane.
template <typename S>
Tensor<S> global_avg_pool(const Tensor<S>& x) {
    if (x.ndim() != 3) throw DimensionError("global_avg_pool: input must be [C,H,W]");
    const int C = x.dim(0);
    const std::int64_t plane = static_cast<std::int64_t>(x.dim(1)) * x.dim(2);
    auto out = detail::make_node<S>({C});
    const auto& xv = x.values();
    for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        const S* xc = xv.data() + c * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += static_cast<double>(xc[i]);
        out->value[static_cast<std::size_t>(c)] = static_cast<S>(acc / static_cast<double>(plane));
    }
    auto* xn = x.node().get();
    detail::attach<S>(
        out,
        [xn, C, plane](detail::Node<S>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            const S inv = static_cast<S>(1.0 / static_cast<double>(plane));
            for (int c = 0; c < C; ++c) {
                const S g = self.grad[static_cast<std::size_t>(c)] * inv;
                S* dxc = xn->grad.data() + c * plane;
                for (std::int64_t i = 0; i < plane; ++i) dxc[i] += g;
            }
        },
        x.node());
    detail::check_finite_values("global_avg_pool", out->value);
    return Tensor<S>(out);
}

// Downsample-only average pooling with contiguous floor-edged bins: output
// cell i covers input rows floor(i*H/th) .. floor((i+1)*H/th)-1. Returns the
// input tensor unchanged when the target equals the source size.
template <typename S>
Tensor<S> adaptive_avg_pool(const Tensor<S>& x, int th, int tw) {
    if (x.ndim() != 3) throw DimensionError("adaptive_avg_pool: input must be [C,H,W]");
    const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
    if (th < 1 || tw < 1) throw GeometryError("adaptive_avg_pool: target must be positive");
    if (th > H || tw > W) throw GeometryError("adaptive_avg_pool: upsampling unsupported (target exceeds input)");
    if (th == H && tw == W) return x;
    auto out = detail::make_node<S>({C, th, tw});
    auto edge = [](int i, int in, int t) { return static_cast<int>((static_cast<std::int64_t>(i) * in) / t); };
    const auto& xv = x.values();
    for (int c = 0; c < C; ++c) {
        const S* xc = xv.data() + static_cast<std::int64_t>(c) * H * W;
        for (int oi = 0; oi < th; ++oi) {
            const int r0 = edge(oi, H, th), r1 = edge(oi + 1, H, th);
            for (int oj = 0; oj < tw; ++oj) {
                const int c0 = edge(oj, W, tw), c1 = edge(oj + 1, W, tw);
                double acc = 0.0;
                for (int r = r0; r < r1; ++r)
                    for (int cc = c0; cc < c1; ++cc) acc += static_cast<double>(xc[r * W + cc]);
                out->value[(static_cast<std::size_t>(c) * th + oi) * tw + oj] =
                    static_cast<S>(acc / static_cast<double>((r1 - r0) * (c1 - c0)));
            }
        }
    }
    auto* xn = x.node().get();
    detail::attach<S>(
        out,
        [xn, C, H, W, th, tw, edge](detail::Node<S>& self) {
            if (!xn->requires_grad) return;
            xn->ensure_grad();
            for (int c = 0; c < C; ++c) {
                S* dxc = xn->grad.data() + static_cast<std::int64_t>(c) * H * W;
                for (int oi = 0; oi < th; ++oi) {
                    const int r0 = edge(oi, H, th), r1 = edge(oi + 1, H, th);
                    for (int oj = 0; oj < tw; ++oj) {
                        const int c0 = edge(oj, W, tw), c1 = edge(oj + 1, W, tw);
                        const S g = self.grad[(static_cast<std::size_t>(c) * th + oi) * tw + oj] /
                                    static_cast<S>((r1 - r0) * (c1 - c0));
                        for (int r = r0; r < r1; ++r)
                            for (int cc = c0; cc < c1; ++cc) dxc[r * W + cc] += g;
                    }
                }
            }
        },
        x.node());
    detail::check_finite_values("adaptive_avg_pool", out->value);
    return Tensor<S>(out);
}

// Per-channel rescale: y[c,h,w] = x[c,h,w] * a[c].
template <typename S>
Tensor<S> scale_channels(const Tensor<S>& x, const Tensor<S>& a) {
    if (x.ndim() != 3 || a.ndim() != 1 || a.dim(0) != x.dim(0))
        throw DimensionError("scale_channels: expected [C,H,W] and [C]");
    const int C = x.dim(0);
    const std::int64_t plane = static_cast<std::int64_t>(x.dim(1)) * x.dim(2);
    auto out = detail::make_node<S>(x.shape());
    const auto& xv = x.values();
    const auto& av = a.values();
    for (int c = 0; c < C; ++c) {
        const S s = av[static_cast<std::size_t>(c)];
        const S* xc = xv.data() + c * plane;
        S* oc = out->value.data() + c * plane;
        for (std::int64_t i = 0; i < plane; ++i) oc[i] = xc[i] * s;
    }
    auto* xn = x.node().get();
    auto* an = a.node().get();
    detail::attach<S>(
        out,
        [xn, an, C, plane](detail::Node<S>& self) {
            if (xn->requires_grad) {
                xn->ensure_grad();
                for (int c = 0; c < C; ++c) {
                    const S s = an->value[static_cast<std::size_t>(c)];
                    const S* g = self.grad.data() + c * plane;
                    S* dx = xn->grad.data() + c * plane;
                    for (std::int64_t i = 0; i < plane; ++i) dx[i] += g[i] * s;
                }
            }
            if (an->requires_grad) {
                an->ensure_grad();
                for (int c = 0; c < C; ++c) {
                    const S* g = self.grad.data() + c * plane;
                    const S* xc = xn->value.data() + c * plane;
                    S acc = S(0);
                    for (std::int64_t i = 0; i < plane; ++i) acc += g[i] * xc[i];
                    an->grad[static_cast<std::size_t>(c)] += acc;
                }
            }
        },
        x.node(), a.node());
    detail::check_finite_values("scale_channels", out->value);
    return Tensor<S>(out);
}

// Spatially averaged channel correlation between two equally sized maps:
// out[p,q] = (1/(h*w)) * sum_{h,w} a[p,h,w] * b[q,h,w].
template <typename S>
Tensor<S> channel_correlation(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.ndim() != 3 || b.ndim() != 3) throw DimensionError("channel_correlation: inputs must be [C,h,w]");
    if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
        throw DimensionError("channel_correlation: spatial sizes differ");
    const int Ca = a.dim(0), Cb = b.dim(0);
    const std::int64_t plane = static_cast<std::int64_t>(a.dim(1)) * a.dim(2);
    auto out = detail::make_node<S>({Ca, Cb});
    const double inv = 1.0 / static_cast<double>(plane);
    gemm_nt(Ca, Cb, static_cast<int>(plane), a.values().data(), b.values().data(), out->value.data());
    for (auto& v : out->value) v = static_cast<S>(static_cast<double>(v) * inv);
    auto* an = a.node().get();
    auto* bn = b.node().get();
    detail::attach<S>(
        out,
        [an, bn, Ca, Cb, plane, inv](detail::Node<S>& self) {
            // dA = inv * dC  * B   ([Ca,Cb] x [Cb,hw])
            // dB = inv * dC^T * A  ([Cb,Ca] x [Ca,hw])
            if (an->requires_grad) {
                an->ensure_grad();
                std::vector<S> tmp(static_cast<std::size_t>(Ca) * plane);
                gemm_nn(Ca, static_cast<int>(plane), Cb, self.grad.data(), bn->value.data(), tmp.data());
                for (std::size_t i = 0; i < tmp.size(); ++i)
                    an->grad[i] += static_cast<S>(static_cast<double>(tmp[i]) * inv);
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                std::vector<S> tmp(static_cast<std::size_t>(Cb) * plane);
                gemm_tn(Cb, static_cast<int>(plane), Ca, self.grad.data(), an->value.data(), tmp.data());
                for (std::size_t i = 0; i < tmp.size(); ++i)
                    bn->grad[i] += static_cast<S>(static_cast<double>(tmp[i]) * inv);
            }
        },
        a.node(), b.node());
    detail::check_finite_values("channel_correlation", out->value);
    return Tensor<S>(out);
}

// Stack P matrices of identical shape [m,n] into a [P,m,n] map so the fusion
// convolutions can treat the pair index as a channel axis.
template <typename S>
Tensor<S> stack_mats(const std::vector<Tensor<S>>& mats) {
    if (mats.empty()) throw ContractError("stack_mats: empty input");
    const auto& s0 = mats[0].shape();
    if (s0.size() != 2) throw DimensionError("stack_mats: inputs must be matrices");
    for (const auto& m : mats)
        if (m.shape() != s0) throw DimensionError("stack_mats: mixed shapes");
    const int P = static_cast<int>(mats.size());
    auto out = detail::make_node<S>({P, s0[0], s0[1]});
    const std::int64_t plane = static_cast<std::int64_t>(s0[0]) * s0[1];
    bool any_grad = false;
    for (int p = 0; p < P; ++p) {
        std::memcpy(out->value.data() + p * plane, mats[static_cast<std::size_t>(p)].values().data(),
                    sizeof(S) * static_cast<std::size_t>(plane));
        any_grad = any_grad || mats[static_cast<std::size_t>(p)].requires_grad();
    }
    if (detail::g_grad_enabled && any_grad) {
        out->requires_grad = true;
        std::vector<detail::Node<S>*> raw;
        raw.reserve(mats.size());
        for (const auto& m : mats) {
            out->parents.push_back(m.node());
            raw.push_back(m.node().get());
        }
        out->backward_fn = [raw, plane](detail::Node<S>& self) {
            for (std::size_t p = 0; p < raw.size(); ++p) {
                if (!raw[p]->requires_grad) continue;
                raw[p]->ensure_grad();
                const S* g = self.grad.data() + static_cast<std::int64_t>(p) * plane;
                for (std::int64_t i = 0; i < plane; ++i) raw[p]->grad[static_cast<std::size_t>(i)] += g[i];
            }
        };
    }
    return Tensor<S>(out);
}

// Concatenate vectors along their single axis.
template <typename S>
Tensor<S> concat_vecs(const std::vector<Tensor<S>>& xs) {
    if (xs.empty()) throw ContractError("concat_vecs: empty input");
    int total = 0;
    bool any_grad = false;
    for (const auto& x : xs) {
        if (x.ndim() != 1) throw DimensionError("concat_vecs: inputs must be vectors");
        total += x.dim(0);
        any_grad = any_grad || x.requires_grad();
    }
    auto out = detail::make_node<S>({total});
    std::int64_t off = 0;
    for (const auto& x : xs) {
        std::memcpy(out->value.data() + off, x.values().data(), sizeof(S) * static_cast<std::size_t>(x.size()));
        off += x.size();
    }
    if (detail::g_grad_enabled && any_grad) {
        out->requires_grad = true;
        std::vector<detail::Node<S>*> raw;
        raw.reserve(xs.size());
        for (const auto& x : xs) {
            out->parents.push_back(x.node());
            raw.push_back(x.node().get());
        }
        out->backward_fn = [raw](detail::Node<S>& self) {
            std::int64_t off2 = 0;
            for (auto* p : raw) {
                const std::int64_t n = p->size();
                if (p->requires_grad) {
                    p->ensure_grad();
                    const S* g = self.grad.data() + off2;
                    for (std::int64_t i = 0; i < n; ++i) p->grad[static_cast<std::size_t>(i)] += g[i];
                }
                off2 += n;
            }
        };
    }
    return Tensor<S>(out);
}

}  // namespace amc

#endif

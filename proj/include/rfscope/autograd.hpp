#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "rfscope/graph.hpp"

namespace rfscope {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// op kernels
//
// Inner accumulation order for conv is (ic, kh, kw) per output element, with
// out-of-range taps skipped. Appending zero kernel rows/columns together with
// enlarged bottom/right padding therefore only inserts +0.0 terms, which is
// what makes the kernel-padding transform output-identical for convs.
// ---------------------------------------------------------------------------

inline void conv_forward(const Tensor4& in, const ConvParams& p, Tensor4& out) {
    const Shape4& is = in.shape();
    const Shape4& os = out.shape();
    for (int n = 0; n < is.n; ++n)
        for (int oc = 0; oc < p.out_ch; ++oc) {
            double b = p.bias.empty() ? 0.0 : p.bias[size_t(oc)];
            for (int oy = 0; oy < os.h; ++oy) {
                double* orow = &out.at(n, oc, oy, 0);
                for (int ox = 0; ox < os.w; ++ox) orow[ox] = b;
                for (int ic = 0; ic < p.in_ch; ++ic)
                    for (int kh = 0; kh < p.kh; ++kh) {
                        int iy = oy * p.sh - p.pad.top + kh;
                        if (iy < 0 || iy >= is.h) continue;
                        const double* irow = &in.at(n, ic, iy, 0);
                        const double* wrow = &p.weight.at(oc, ic, kh, 0);
                        for (int kw = 0; kw < p.kw; ++kw) {
                            double wv = wrow[kw];
                            int base = kw - p.pad.left;
                            // ox range with 0 <= ox*sw + base < is.w
                            int lo = base < 0 ? (-base + p.sw - 1) / p.sw : 0;
                            int hi = std::min(os.w - 1, (is.w - 1 - base) / p.sw);
                            for (int ox = lo; ox <= hi; ++ox) orow[ox] += wv * irow[ox * p.sw + base];
                        }
                    }
            }
        }
}

inline void conv_backward_input(const Tensor4& dout, const ConvParams& p, const Shape4& in_shape, Tensor4& din) {
    const Shape4& os = dout.shape();
    for (int n = 0; n < in_shape.n; ++n)
        for (int oc = 0; oc < p.out_ch; ++oc)
            for (int oy = 0; oy < os.h; ++oy) {
                const double* grow = &dout.at(n, oc, oy, 0);
                for (int ic = 0; ic < p.in_ch; ++ic)
                    for (int kh = 0; kh < p.kh; ++kh) {
                        int iy = oy * p.sh - p.pad.top + kh;
                        if (iy < 0 || iy >= in_shape.h) continue;
                        double* drow = &din.at(n, ic, iy, 0);
                        const double* wrow = &p.weight.at(oc, ic, kh, 0);
                        for (int kw = 0; kw < p.kw; ++kw) {
                            double wv = wrow[kw];
                            if (wv == 0.0) continue;
                            int base = kw - p.pad.left;
                            int lo = base < 0 ? (-base + p.sw - 1) / p.sw : 0;
                            int hi = std::min(os.w - 1, (in_shape.w - 1 - base) / p.sw);
                            for (int ox = lo; ox <= hi; ++ox) drow[ox * p.sw + base] += wv * grow[ox];
                        }
                    }
            }
}

inline void conv_backward_params(const Tensor4& in, const Tensor4& dout, ConvParams& p) {
    const Shape4& is = in.shape();
    const Shape4& os = dout.shape();
    auto& wg = p.weight.grad();
    if (!p.bias.empty()) {
        if (p.bias_grad.empty()) p.bias_grad.assign(p.bias.size(), 0.0);
        for (int n = 0; n < os.n; ++n)
            for (int oc = 0; oc < p.out_ch; ++oc) {
                const double* grow = &dout.at(n, oc, 0, 0);
                double acc = 0.0;
                for (int k = 0; k < os.h * os.w; ++k) acc += grow[k];
                p.bias_grad[size_t(oc)] += acc;
            }
    }
    for (int n = 0; n < is.n; ++n)
        for (int oc = 0; oc < p.out_ch; ++oc)
            for (int oy = 0; oy < os.h; ++oy) {
                const double* grow = &dout.at(n, oc, oy, 0);
                for (int ic = 0; ic < p.in_ch; ++ic)
                    for (int kh = 0; kh < p.kh; ++kh) {
                        int iy = oy * p.sh - p.pad.top + kh;
                        if (iy < 0 || iy >= is.h) continue;
                        const double* irow = &in.at(n, ic, iy, 0);
                        for (int kw = 0; kw < p.kw; ++kw) {
                            int base = kw - p.pad.left;
                            int lo = base < 0 ? (-base + p.sw - 1) / p.sw : 0;
                            int hi = std::min(os.w - 1, (is.w - 1 - base) / p.sw);
                            double acc = 0.0;
                            for (int ox = lo; ox <= hi; ++ox) acc += grow[ox] * irow[ox * p.sw + base];
                            wg[p.weight.idx(oc, ic, kh, kw)] += acc;
                        }
                    }
            }
}

// max over the in-bounds part of the window; padding behaves as -inf so the
// enlarged even-sized windows of the padding transform never introduce zeros
inline void maxpool_forward(const Tensor4& in, const PoolParams& p, const std::string& where, Tensor4& out) {
    const Shape4& is = in.shape();
    const Shape4& os = out.shape();
    for (int n = 0; n < is.n; ++n)
        for (int c = 0; c < is.c; ++c)
            for (int oy = 0; oy < os.h; ++oy)
                for (int ox = 0; ox < os.w; ++ox) {
                    double best = -std::numeric_limits<double>::infinity();
                    for (int kh = 0; kh < p.kh; ++kh) {
                        int iy = oy * p.sh - p.pad.top + kh;
                        if (iy < 0 || iy >= is.h) continue;
                        for (int kw = 0; kw < p.kw; ++kw) {
                            int ix = ox * p.sw - p.pad.left + kw;
                            if (ix < 0 || ix >= is.w) continue;
                            double v = in.at(n, c, iy, ix);
                            if (v > best) best = v;
                        }
                    }
                    if (best == -std::numeric_limits<double>::infinity())
                        throw Error(where + ": maxpool window entirely outside input");
                    out.at(n, c, oy, ox) = best;
                }
}

// gradient goes to the argmax; ties resolve to the first element in row-major
// window order, matching the forward scan
inline void maxpool_backward(const Tensor4& in, const Tensor4& dout, const PoolParams& p, Tensor4& din) {
    const Shape4& is = in.shape();
    const Shape4& os = dout.shape();
    for (int n = 0; n < is.n; ++n)
        for (int c = 0; c < is.c; ++c)
            for (int oy = 0; oy < os.h; ++oy)
                for (int ox = 0; ox < os.w; ++ox) {
                    double best = -std::numeric_limits<double>::infinity();
                    int by = -1, bx = -1;
                    for (int kh = 0; kh < p.kh; ++kh) {
                        int iy = oy * p.sh - p.pad.top + kh;
                        if (iy < 0 || iy >= is.h) continue;
                        for (int kw = 0; kw < p.kw; ++kw) {
                            int ix = ox * p.sw - p.pad.left + kw;
                            if (ix < 0 || ix >= is.w) continue;
                            double v = in.at(n, c, iy, ix);
                            if (v > best) {
                                best = v;
                                by = iy;
                                bx = ix;
                            }
                        }
                    }
                    if (by >= 0) din.at(n, c, by, bx) += dout.at(n, c, oy, ox);
                }
}

// padding counts toward the divisor (window area is always kh*kw)
inline void avgpool_forward(const Tensor4& in, const PoolParams& p, Tensor4& out) {
    const Shape4& is = in.shape();
    const Shape4& os = out.shape();
    double inv = 1.0 / (double(p.kh) * double(p.kw));
    for (int n = 0; n < is.n; ++n)
        for (int c = 0; c < is.c; ++c)
            for (int oy = 0; oy < os.h; ++oy)
                for (int ox = 0; ox < os.w; ++ox) {
                    double acc = 0.0;
                    for (int kh = 0; kh < p.kh; ++kh) {
                        int iy = oy * p.sh - p.pad.top + kh;
                        if (iy < 0 || iy >= is.h) continue;
                        for (int kw = 0; kw < p.kw; ++kw) {
                            int ix = ox * p.sw - p.pad.left + kw;
                            if (ix < 0 || ix >= is.w) continue;
                            acc += in.at(n, c, iy, ix);
                        }
                    }
                    out.at(n, c, oy, ox) = acc * inv;
                }
}

inline void avgpool_backward(const Tensor4& dout, const PoolParams& p, const Shape4& in_shape, Tensor4& din) {
    const Shape4& os = dout.shape();
    double inv = 1.0 / (double(p.kh) * double(p.kw));
    for (int n = 0; n < in_shape.n; ++n)
        for (int c = 0; c < in_shape.c; ++c)
            for (int oy = 0; oy < os.h; ++oy)
                for (int ox = 0; ox < os.w; ++ox) {
                    double g = dout.at(n, c, oy, ox) * inv;
                    for (int kh = 0; kh < p.kh; ++kh) {
                        int iy = oy * p.sh - p.pad.top + kh;
                        if (iy < 0 || iy >= in_shape.h) continue;
                        for (int kw = 0; kw < p.kw; ++kw) {
                            int ix = ox * p.sw - p.pad.left + kw;
                            if (ix < 0 || ix >= in_shape.w) continue;
                            din.at(n, c, iy, ix) += g;
                        }
                    }
                }
}

struct BnBatchStats {
    std::vector<double> mean;
    std::vector<double> var;  // biased
};

inline BnBatchStats bn_batch_stats(const Tensor4& in) {
    const Shape4& s = in.shape();
    BnBatchStats st;
    st.mean.assign(size_t(s.c), 0.0);
    st.var.assign(size_t(s.c), 0.0);
    double inv = 1.0 / (double(s.n) * double(s.h) * double(s.w));
    for (int c = 0; c < s.c; ++c) {
        double acc = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const double* p = &in.at(n, c, 0, 0);
            for (int i = 0; i < s.h * s.w; ++i) acc += p[i];
        }
        st.mean[size_t(c)] = acc * inv;
        double vacc = 0.0;
        for (int n = 0; n < s.n; ++n) {
            const double* p = &in.at(n, c, 0, 0);
            for (int i = 0; i < s.h * s.w; ++i) {
                double d = p[i] - st.mean[size_t(c)];
                vacc += d * d;
            }
        }
        st.var[size_t(c)] = vacc * inv;
    }
    return st;
}

inline void bn_apply(const Tensor4& in, const BnParams& p, const std::vector<double>& mean,
                     const std::vector<double>& var, Tensor4& out) {
    const Shape4& s = in.shape();
    for (int c = 0; c < s.c; ++c) {
        double inv_std = 1.0 / std::sqrt(var[size_t(c)] + p.eps);
        double a = p.gamma[size_t(c)] * inv_std;
        double b = p.beta[size_t(c)] - a * mean[size_t(c)];
        for (int n = 0; n < s.n; ++n) {
            const double* src = &in.at(n, c, 0, 0);
            double* dst = &out.at(n, c, 0, 0);
            for (int i = 0; i < s.h * s.w; ++i) dst[i] = a * src[i] + b;
        }
    }
}

inline void fc_forward(const Tensor4& in, const FcParams& p, Tensor4& out) {
    const Shape4& is = in.shape();
    int flat = is.c * is.h * is.w;
    for (int n = 0; n < is.n; ++n) {
        const double* x = &in.at(n, 0, 0, 0);
        for (int o = 0; o < p.out_features; ++o) {
            const double* wrow = &p.weight.at(o, 0, 0, 0);
            double acc = p.bias.empty() ? 0.0 : p.bias[size_t(o)];
            for (int i = 0; i < flat; ++i) acc += wrow[i] * x[i];
            out.at(n, o, 0, 0) = acc;
        }
    }
}

// ---------------------------------------------------------------------------
// graph execution
// ---------------------------------------------------------------------------

struct Activations {
    std::vector<Tensor4> act;  // indexed by node id
    Mode mode = Mode::eval;
};

namespace detail {

inline Activations forward_impl(const NetGraph& g_const, NetGraph* g_mut, const Tensor4& input, Mode mode) {
    const NetGraph& g = g_const;
    const Shape4& in = input.shape();
    if (in.c != g.input_shape.c || in.h != g.input_shape.h || in.w != g.input_shape.w)
        throw Error("forward: input shape " + in.str() + " does not match graph input " + g.input_shape.str());

    Activations acts;
    acts.mode = mode;
    acts.act.resize(g.nodes.size());
    acts.act[0] = input;

    for (size_t i = 1; i < g.nodes.size(); ++i) {
        const GraphNode& nd = g.nodes[i];
        const Tensor4& a = acts.act[size_t(nd.parents[0])];
        Shape4 os = infer_shape(nd, a.shape(), nd.name);
        switch (nd.kind) {
            case OpKind::conv: {
                acts.act[i] = Tensor4(os);
                conv_forward(a, nd.conv(), acts.act[i]);
                break;
            }
            case OpKind::maxpool: {
                acts.act[i] = Tensor4(os);
                maxpool_forward(a, nd.pool(), nd.name, acts.act[i]);
                break;
            }
            case OpKind::avgpool: {
                acts.act[i] = Tensor4(os);
                avgpool_forward(a, nd.pool(), acts.act[i]);
                break;
            }
            case OpKind::relu: {
                acts.act[i] = a;
                for (auto& v : acts.act[i].data())
                    if (v < 0.0) v = 0.0;
                break;
            }
            case OpKind::bn: {
                const BnParams& p = nd.bn();
                acts.act[i] = Tensor4(os);
                if (mode == Mode::train) {
                    BnBatchStats st = bn_batch_stats(a);
                    bn_apply(a, p, st.mean, st.var, acts.act[i]);
                    if (g_mut) {
                        BnParams& pm = g_mut->nodes[i].bn();
                        double cnt = double(a.shape().n) * a.shape().h * a.shape().w;
                        double unbias = cnt > 1.0 ? cnt / (cnt - 1.0) : 1.0;
                        for (int c = 0; c < p.channels; ++c) {
                            pm.running_mean[size_t(c)] =
                                (1.0 - p.momentum) * pm.running_mean[size_t(c)] + p.momentum * st.mean[size_t(c)];
                            pm.running_var[size_t(c)] =
                                (1.0 - p.momentum) * pm.running_var[size_t(c)] + p.momentum * st.var[size_t(c)] * unbias;
                        }
                    }
                } else {
                    bn_apply(a, p, p.running_mean, p.running_var, acts.act[i]);
                }
                break;
            }
            case OpKind::add: {
                const Tensor4& b = acts.act[size_t(nd.parents[1])];
                acts.act[i] = a;
                for (size_t k = 0; k < b.size(); ++k) acts.act[i][k] += b[k];
                break;
            }
            case OpKind::fc: {
                acts.act[i] = Tensor4(os);
                fc_forward(a, nd.fc(), acts.act[i]);
                break;
            }
            case OpKind::gap: {
                acts.act[i] = Tensor4(os);
                const Shape4& as = a.shape();
                double inv = 1.0 / (double(as.h) * double(as.w));
                for (int n = 0; n < as.n; ++n)
                    for (int c = 0; c < as.c; ++c) {
                        const double* p = &a.at(n, c, 0, 0);
                        double acc = 0.0;
                        for (int k = 0; k < as.h * as.w; ++k) acc += p[k];
                        acts.act[i].at(n, c, 0, 0) = acc * inv;
                    }
                break;
            }
            case OpKind::output: {
                acts.act[i] = a;
                break;
            }
            case OpKind::input:
                throw Error("forward: unexpected input node mid-graph");
        }
    }
    return acts;
}

} // namespace detail

// Eval-mode forward; never mutates the graph.
inline Activations forward_eval(const NetGraph& g, const Tensor4& input) {
    return detail::forward_impl(g, nullptr, input, Mode::eval);
}

// Train-mode forward; batch normalization uses batch statistics and updates
// the running estimates in place.
inline Activations forward_train(NetGraph& g, const Tensor4& input) {
    return detail::forward_impl(g, &g, input, Mode::train);
}

inline Activations forward(NetGraph& g, const Tensor4& input, Mode mode) {
    return mode == Mode::train ? forward_train(g, input) : forward_eval(g, input);
}

// ---------------------------------------------------------------------------
// scalar reductions over a node activation
// ---------------------------------------------------------------------------

struct ScalarTarget {
    enum Kind { center_channel_mean, logit_mean, logit_index } kind = center_channel_mean;
    int index = 0;

    static ScalarTarget center() { return {center_channel_mean, 0}; }
    static ScalarTarget mean_logit() { return {logit_mean, 0}; }
    static ScalarTarget logit(int k) { return {logit_index, k}; }
};

// F over a (1,C,H,W) activation: channel mean at the spatial center
// (floor(H/2), floor(W/2)), or logit mean / single logit for (1,C,1,1).
inline double scalar_reduce(const Tensor4& a, ScalarTarget t) {
    const Shape4& s = a.shape();
    if (s.n != 1) throw Error("scalar_reduce: expects batch size 1, got " + std::to_string(s.n));
    switch (t.kind) {
        case ScalarTarget::center_channel_mean: {
            int cy = s.h / 2, cx = s.w / 2;
            double acc = 0.0;
            for (int c = 0; c < s.c; ++c) acc += a.at(0, c, cy, cx);
            return acc / double(s.c);
        }
        case ScalarTarget::logit_mean: {
            if (s.h != 1 || s.w != 1) throw Error("scalar_reduce: logit reduction on non-logit activation " + s.str());
            double acc = 0.0;
            for (int c = 0; c < s.c; ++c) acc += a.at(0, c, 0, 0);
            return acc / double(s.c);
        }
        case ScalarTarget::logit_index: {
            if (s.h != 1 || s.w != 1) throw Error("scalar_reduce: logit reduction on non-logit activation " + s.str());
            if (t.index < 0 || t.index >= s.c)
                throw Error("scalar_reduce: logit index " + std::to_string(t.index) + " out of range [0," +
                            std::to_string(s.c) + ")");
            return a.at(0, t.index, 0, 0);
        }
    }
    throw Error("scalar_reduce: unknown reduction");
}

// dF/dA for the reduction above
inline Tensor4 reduction_seed(const Shape4& s, ScalarTarget t) {
    if (s.n != 1) throw Error("reduction_seed: expects batch size 1");
    Tensor4 seed(s, 0.0);
    switch (t.kind) {
        case ScalarTarget::center_channel_mean: {
            int cy = s.h / 2, cx = s.w / 2;
            for (int c = 0; c < s.c; ++c) seed.at(0, c, cy, cx) = 1.0 / double(s.c);
            break;
        }
        case ScalarTarget::logit_mean: {
            if (s.h != 1 || s.w != 1) throw Error("reduction_seed: logit reduction on non-logit activation");
            for (int c = 0; c < s.c; ++c) seed.at(0, c, 0, 0) = 1.0 / double(s.c);
            break;
        }
        case ScalarTarget::logit_index: {
            if (s.h != 1 || s.w != 1) throw Error("reduction_seed: logit reduction on non-logit activation");
            if (t.index < 0 || t.index >= s.c) throw Error("reduction_seed: logit index out of range");
            seed.at(0, t.index, 0, 0) = 1.0;
            break;
        }
    }
    return seed;
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

struct BackwardResult {
    Tensor4 input_grad;
    bool input_reached = true;  // false only when no path connects target to input
};

namespace detail {

inline BackwardResult backward_impl(const NetGraph& g, NetGraph* g_mut, const Activations& acts, int target,
                                    const Tensor4& seed, Mode mode) {
    if (target < 0 || target >= int(g.nodes.size())) throw Error("backward: target node out of range");
    if (!(seed.shape() == acts.act[size_t(target)].shape()))
        throw Error("backward: seed shape " + seed.shape().str() + " does not match activation " +
                    acts.act[size_t(target)].shape().str());

    // restrict work to ancestors of the target
    std::vector<char> needed(g.nodes.size(), 0);
    needed[size_t(target)] = 1;
    for (int i = target; i >= 0; --i)
        if (needed[size_t(i)])
            for (int p : g.nodes[size_t(i)].parents) needed[size_t(p)] = 1;

    std::vector<Tensor4> grads(g.nodes.size());
    grads[size_t(target)] = seed;

    auto grad_of = [&](int i) -> Tensor4& {
        if (grads[size_t(i)].size() == 0) grads[size_t(i)] = Tensor4(acts.act[size_t(i)].shape(), 0.0);
        return grads[size_t(i)];
    };

    for (int i = target; i >= 1; --i) {
        if (!needed[size_t(i)] || grads[size_t(i)].size() == 0) continue;
        const GraphNode& nd = g.nodes[size_t(i)];
        const Tensor4& gout = grads[size_t(i)];
        const Tensor4& a = acts.act[size_t(nd.parents[0])];
        switch (nd.kind) {
            case OpKind::conv: {
                conv_backward_input(gout, nd.conv(), a.shape(), grad_of(nd.parents[0]));
                if (g_mut) conv_backward_params(a, gout, g_mut->nodes[size_t(i)].conv());
                break;
            }
            case OpKind::maxpool:
                maxpool_backward(a, gout, nd.pool(), grad_of(nd.parents[0]));
                break;
            case OpKind::avgpool:
                avgpool_backward(gout, nd.pool(), a.shape(), grad_of(nd.parents[0]));
                break;
            case OpKind::relu: {
                Tensor4& gin = grad_of(nd.parents[0]);
                for (size_t k = 0; k < a.size(); ++k)
                    if (a[k] > 0.0) gin[k] += gout[k];
                break;
            }
            case OpKind::bn: {
                const BnParams& p = nd.bn();
                Tensor4& gin = grad_of(nd.parents[0]);
                const Shape4& s = a.shape();
                if (mode == Mode::eval) {
                    for (int c = 0; c < s.c; ++c) {
                        double scale = p.gamma[size_t(c)] / std::sqrt(p.running_var[size_t(c)] + p.eps);
                        for (int n = 0; n < s.n; ++n) {
                            const double* go = &gout.at(n, c, 0, 0);
                            double* gi = &gin.at(n, c, 0, 0);
                            for (int k = 0; k < s.h * s.w; ++k) gi[k] += scale * go[k];
                        }
                    }
                    if (g_mut) {
                        BnParams& pm = g_mut->nodes[size_t(i)].bn();
                        if (pm.gamma_grad.empty()) pm.gamma_grad.assign(size_t(p.channels), 0.0);
                        if (pm.beta_grad.empty()) pm.beta_grad.assign(size_t(p.channels), 0.0);
                        for (int c = 0; c < s.c; ++c) {
                            double inv_std = 1.0 / std::sqrt(p.running_var[size_t(c)] + p.eps);
                            double m = p.running_mean[size_t(c)];
                            for (int n = 0; n < s.n; ++n) {
                                const double* go = &gout.at(n, c, 0, 0);
                                const double* x = &a.at(n, c, 0, 0);
                                for (int k = 0; k < s.h * s.w; ++k) {
                                    pm.gamma_grad[size_t(c)] += go[k] * (x[k] - m) * inv_std;
                                    pm.beta_grad[size_t(c)] += go[k];
                                }
                            }
                        }
                    }
                } else {
                    BnBatchStats st = bn_batch_stats(a);
                    double m_cnt = double(s.n) * s.h * s.w;
                    for (int c = 0; c < s.c; ++c) {
                        double inv_std = 1.0 / std::sqrt(st.var[size_t(c)] + p.eps);
                        double mu = st.mean[size_t(c)];
                        double sum_g = 0.0, sum_gx = 0.0;
                        for (int n = 0; n < s.n; ++n) {
                            const double* go = &gout.at(n, c, 0, 0);
                            const double* x = &a.at(n, c, 0, 0);
                            for (int k = 0; k < s.h * s.w; ++k) {
                                sum_g += go[k];
                                sum_gx += go[k] * (x[k] - mu) * inv_std;
                            }
                        }
                        double scale = p.gamma[size_t(c)] * inv_std;
                        for (int n = 0; n < s.n; ++n) {
                            const double* go = &gout.at(n, c, 0, 0);
                            const double* x = &a.at(n, c, 0, 0);
                            double* gi = &gin.at(n, c, 0, 0);
                            for (int k = 0; k < s.h * s.w; ++k) {
                                double xhat = (x[k] - mu) * inv_std;
                                gi[k] += scale * (go[k] - sum_g / m_cnt - xhat * sum_gx / m_cnt);
                            }
                        }
                        if (g_mut) {
                            BnParams& pm = g_mut->nodes[size_t(i)].bn();
                            if (pm.gamma_grad.empty()) pm.gamma_grad.assign(size_t(p.channels), 0.0);
                            if (pm.beta_grad.empty()) pm.beta_grad.assign(size_t(p.channels), 0.0);
                            pm.gamma_grad[size_t(c)] += sum_gx;
                            pm.beta_grad[size_t(c)] += sum_g;
                        }
                    }
                }
                break;
            }
            case OpKind::add: {
                Tensor4& g0 = grad_of(nd.parents[0]);
                for (size_t k = 0; k < gout.size(); ++k) g0[k] += gout[k];
                Tensor4& g1 = grad_of(nd.parents[1]);
                for (size_t k = 0; k < gout.size(); ++k) g1[k] += gout[k];
                break;
            }
            case OpKind::fc: {
                const FcParams& p = nd.fc();
                const Shape4& is = a.shape();
                int flat = is.c * is.h * is.w;
                Tensor4& gin = grad_of(nd.parents[0]);
                for (int n = 0; n < is.n; ++n) {
                    double* gi = &gin.at(n, 0, 0, 0);
                    for (int o = 0; o < p.out_features; ++o) {
                        double go = gout.at(n, o, 0, 0);
                        if (go == 0.0) continue;
                        const double* wrow = &p.weight.at(o, 0, 0, 0);
                        for (int k = 0; k < flat; ++k) gi[k] += go * wrow[k];
                    }
                }
                if (g_mut) {
                    FcParams& pm = g_mut->nodes[size_t(i)].fc();
                    auto& wg = pm.weight.grad();
                    if (!pm.bias.empty() && pm.bias_grad.empty()) pm.bias_grad.assign(size_t(p.out_features), 0.0);
                    for (int n = 0; n < is.n; ++n) {
                        const double* x = &a.at(n, 0, 0, 0);
                        for (int o = 0; o < p.out_features; ++o) {
                            double go = gout.at(n, o, 0, 0);
                            if (go == 0.0) continue;
                            double* wrow = &wg[size_t(o) * size_t(flat)];
                            for (int k = 0; k < flat; ++k) wrow[k] += go * x[k];
                            if (!pm.bias.empty()) pm.bias_grad[size_t(o)] += go;
                        }
                    }
                }
                break;
            }
            case OpKind::gap: {
                const Shape4& is = a.shape();
                double inv = 1.0 / (double(is.h) * double(is.w));
                Tensor4& gin = grad_of(nd.parents[0]);
                for (int n = 0; n < is.n; ++n)
                    for (int c = 0; c < is.c; ++c) {
                        double go = gout.at(n, c, 0, 0) * inv;
                        double* gi = &gin.at(n, c, 0, 0);
                        for (int k = 0; k < is.h * is.w; ++k) gi[k] += go;
                    }
                break;
            }
            case OpKind::output: {
                Tensor4& gin = grad_of(nd.parents[0]);
                for (size_t k = 0; k < gout.size(); ++k) gin[k] += gout[k];
                break;
            }
            case OpKind::input:
                break;
        }
    }

    BackwardResult res;
    res.input_reached = needed[0] != 0;
    if (grads[0].size() != 0)
        res.input_grad = std::move(grads[0]);
    else
        res.input_grad = Tensor4(acts.act[0].shape(), 0.0);
    return res;
}

} // namespace detail

// Gradient of a seeded node scalar w.r.t. the graph input; parameters untouched.
inline BackwardResult backward_input(const NetGraph& g, const Activations& acts, int target, const Tensor4& seed,
                                     Mode mode = Mode::eval) {
    return detail::backward_impl(g, nullptr, acts, target, seed, mode);
}

// Training backward: also accumulates parameter gradients into the graph
// (conv weight/bias, fc weight/bias, bn gamma/beta).
inline BackwardResult backward_train(NetGraph& g, const Activations& acts, int target, const Tensor4& seed) {
    return detail::backward_impl(g, &g, acts, target, seed, Mode::train);
}

// One-call convenience for the analysis paths (always eval mode):
// d(scalar)/d(input).
inline Tensor4 input_gradient(const NetGraph& g, const Tensor4& input, int target, ScalarTarget st) {
    Activations acts = forward_eval(g, input);
    Tensor4 seed = reduction_seed(acts.act[size_t(target)].shape(), st);
    return backward_input(g, acts, target, seed, Mode::eval).input_grad;
}

} // namespace rfscope

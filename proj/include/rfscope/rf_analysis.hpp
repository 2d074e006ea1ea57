#pragma once

#include <cstdint>
#include <vector>

#include "rfscope/graph.hpp"

namespace rfscope {

// Per-node theoretical receptive field. rf is the input-pixel extent covered
// by one feature, jump the input spacing between adjacent features, start the
// center offset of feature (0,0) in input coordinates (sub-pixel for even
// kernels). full_input marks nodes past a gap/fc head, where the receptive
// field is the whole image by construction.
struct RFInfo {
    int64_t rf_h = 1, rf_w = 1;
    int64_t jump_h = 1, jump_w = 1;
    double start_h = 0.0, start_w = 0.0;
    bool full_input = false;
};

// r <- r + (k-1)*j,  j <- j*s along every path from the input; elementwise
// ops pass through; residual joins take the per-axis maximum and require
// branch jumps to agree.
inline RFInfo compute_trf(const NetGraph& g, int target) {
    if (target < 0 || target >= int(g.nodes.size())) throw Error("compute_trf: target node out of range");

    std::vector<RFInfo> info(g.nodes.size());
    std::vector<char> needed(g.nodes.size(), 0);
    needed[size_t(target)] = 1;
    for (int i = target; i >= 0; --i)
        if (needed[size_t(i)])
            for (int p : g.nodes[size_t(i)].parents) needed[size_t(p)] = 1;

    for (int i = 0; i <= target; ++i) {
        if (!needed[size_t(i)]) continue;
        const GraphNode& nd = g.nodes[size_t(i)];
        if (nd.kind == OpKind::input) {
            info[size_t(i)] = RFInfo{};
            continue;
        }
        const RFInfo& a = info[size_t(nd.parents[0])];
        RFInfo r = a;
        switch (nd.kind) {
            case OpKind::conv: {
                const ConvParams& p = nd.conv();
                r.rf_h += int64_t(p.kh - 1) * a.jump_h;
                r.rf_w += int64_t(p.kw - 1) * a.jump_w;
                r.start_h += (double(p.kh - 1) / 2.0 - p.pad.top) * double(a.jump_h);
                r.start_w += (double(p.kw - 1) / 2.0 - p.pad.left) * double(a.jump_w);
                r.jump_h *= p.sh;
                r.jump_w *= p.sw;
                break;
            }
            case OpKind::maxpool:
            case OpKind::avgpool: {
                const PoolParams& p = nd.pool();
                r.rf_h += int64_t(p.kh - 1) * a.jump_h;
                r.rf_w += int64_t(p.kw - 1) * a.jump_w;
                r.start_h += (double(p.kh - 1) / 2.0 - p.pad.top) * double(a.jump_h);
                r.start_w += (double(p.kw - 1) / 2.0 - p.pad.left) * double(a.jump_w);
                r.jump_h *= p.sh;
                r.jump_w *= p.sw;
                break;
            }
            case OpKind::relu:
            case OpKind::bn:
            case OpKind::output:
                break;
            case OpKind::add: {
                const RFInfo& b = info[size_t(nd.parents[1])];
                if (a.jump_h != b.jump_h || a.jump_w != b.jump_w)
                    throw Error("compute_trf: branch jump mismatch at '" + nd.name + "' (" + std::to_string(a.jump_h) +
                                "," + std::to_string(a.jump_w) + ") vs (" + std::to_string(b.jump_h) + "," +
                                std::to_string(b.jump_w) + ")");
                r.rf_h = a.rf_h >= b.rf_h ? a.rf_h : b.rf_h;
                r.rf_w = a.rf_w >= b.rf_w ? a.rf_w : b.rf_w;
                r.start_h = a.rf_h >= b.rf_h ? a.start_h : b.start_h;
                r.start_w = a.rf_w >= b.rf_w ? a.start_w : b.start_w;
                r.full_input = a.full_input || b.full_input;
                break;
            }
            case OpKind::gap:
            case OpKind::fc: {
                // window spanning the whole parent grid
                const Shape4& in = g.nodes[size_t(nd.parents[0])].out_shape;
                r.rf_h += int64_t(in.h - 1) * a.jump_h;
                r.rf_w += int64_t(in.w - 1) * a.jump_w;
                r.start_h += (double(in.h - 1) / 2.0) * double(a.jump_h);
                r.start_w += (double(in.w - 1) / 2.0) * double(a.jump_w);
                r.full_input = true;
                break;
            }
            case OpKind::input:
                break;
        }
        info[size_t(i)] = r;
    }
    return info[size_t(target)];
}

// H x W window-placement counts: how many multiplicative reference paths run
// from each input pixel to the seeded positions of the target layer. Channels
// are collapsed (one path per window placement); nonlinearities and bn do not
// exist at this level. Exact integers, overflow-checked.
struct CoverageMap {
    int h = 0;
    int w = 0;
    std::vector<int64_t> counts;

    int64_t& at(int y, int x) { return counts[size_t(y) * size_t(w) + size_t(x)]; }
    int64_t at(int y, int x) const { return counts[size_t(y) * size_t(w) + size_t(x)]; }

    std::vector<double> as_field() const { return std::vector<double>(counts.begin(), counts.end()); }
};

enum class CoverageSeed { all_positions, center };

inline CoverageMap coverage_counts(const NetGraph& g, CoverageSeed seed = CoverageSeed::all_positions,
                                   int target = -1) {
    if (target < 0) target = g.last_spatial_node();
    {
        OpKind k = g.nodes[size_t(target)].kind;
        if (k == OpKind::fc || k == OpKind::gap)
            throw Error("coverage_counts: target must be a spatial node, got " + std::string(op_name(k)));
    }

    std::vector<char> needed(g.nodes.size(), 0);
    needed[size_t(target)] = 1;
    for (int i = target; i >= 0; --i)
        if (needed[size_t(i)])
            for (int p : g.nodes[size_t(i)].parents) needed[size_t(p)] = 1;

    auto checked_add = [](int64_t& dst, int64_t v) {
        if (__builtin_add_overflow(dst, v, &dst)) throw Error("coverage_counts: count overflow");
    };

    std::vector<std::vector<int64_t>> maps(g.nodes.size());
    auto map_of = [&](int i) -> std::vector<int64_t>& {
        auto& m = maps[size_t(i)];
        const Shape4& s = g.nodes[size_t(i)].out_shape;
        if (m.empty()) m.assign(size_t(s.h) * size_t(s.w), 0);
        return m;
    };

    {
        const Shape4& ts = g.nodes[size_t(target)].out_shape;
        auto& m = map_of(target);
        if (seed == CoverageSeed::all_positions)
            m.assign(m.size(), 1);
        else
            m[size_t(ts.h / 2) * size_t(ts.w) + size_t(ts.w / 2)] = 1;
    }

    for (int i = target; i >= 1; --i) {
        if (!needed[size_t(i)] || maps[size_t(i)].empty()) continue;
        const GraphNode& nd = g.nodes[size_t(i)];
        const std::vector<int64_t>& m = maps[size_t(i)];
        const Shape4& os = nd.out_shape;
        const Shape4& is = g.nodes[size_t(nd.parents[0])].out_shape;
        switch (nd.kind) {
            case OpKind::conv:
            case OpKind::maxpool:
            case OpKind::avgpool: {
                int kh, kw, sh, sw;
                Pad4 pad;
                if (nd.kind == OpKind::conv) {
                    const ConvParams& p = nd.conv();
                    kh = p.kh; kw = p.kw; sh = p.sh; sw = p.sw; pad = p.pad;
                } else {
                    const PoolParams& p = nd.pool();
                    kh = p.kh; kw = p.kw; sh = p.sh; sw = p.sw; pad = p.pad;
                }
                auto& pm = map_of(nd.parents[0]);
                for (int oy = 0; oy < os.h; ++oy)
                    for (int ox = 0; ox < os.w; ++ox) {
                        int64_t v = m[size_t(oy) * size_t(os.w) + size_t(ox)];
                        if (v == 0) continue;
                        for (int dy = 0; dy < kh; ++dy) {
                            int iy = oy * sh - pad.top + dy;
                            if (iy < 0 || iy >= is.h) continue;
                            for (int dx = 0; dx < kw; ++dx) {
                                int ix = ox * sw - pad.left + dx;
                                if (ix < 0 || ix >= is.w) continue;
                                checked_add(pm[size_t(iy) * size_t(is.w) + size_t(ix)], v);
                            }
                        }
                    }
                break;
            }
            case OpKind::relu:
            case OpKind::bn:
            case OpKind::output: {
                auto& pm = map_of(nd.parents[0]);
                for (size_t k = 0; k < m.size(); ++k) checked_add(pm[k], m[k]);
                break;
            }
            case OpKind::add: {
                auto& p0 = map_of(nd.parents[0]);
                for (size_t k = 0; k < m.size(); ++k) checked_add(p0[k], m[k]);
                auto& p1 = map_of(nd.parents[1]);
                for (size_t k = 0; k < m.size(); ++k) checked_add(p1[k], m[k]);
                break;
            }
            case OpKind::gap:
            case OpKind::fc:
                throw Error("coverage_counts: non-spatial op '" + nd.name + "' on the target path");
            case OpKind::input:
                break;
        }
    }

    CoverageMap cm;
    cm.h = g.input_shape.h;
    cm.w = g.input_shape.w;
    cm.counts = map_of(0);
    return cm;
}

// Single-channel all-ones rendition of the spatial part of a graph: convs and
// pools become 1->1 all-ones convs, elementwise ops vanish, the head is cut.
// Backprop of an all-ones seed through this graph is the gradient route to
// the same counts coverage_counts computes combinatorially.
struct LinearizedGraph {
    NetGraph graph;
    int target = 0;  // node matching the requested spatial target
};

inline LinearizedGraph linearize_for_coverage(const NetGraph& g, int target = -1) {
    if (target < 0) target = g.last_spatial_node();
    LinearizedGraph out;
    out.graph.input_shape = Shape4{1, 1, g.input_shape.h, g.input_shape.w};
    GraphNode input;
    input.kind = OpKind::input;
    input.name = "input";
    input.out_shape = out.graph.input_shape;
    out.graph.nodes.push_back(std::move(input));

    std::vector<int> remap(g.nodes.size(), -1);
    remap[0] = 0;
    for (int i = 1; i <= target; ++i) {
        const GraphNode& nd = g.nodes[size_t(i)];
        switch (nd.kind) {
            case OpKind::conv:
            case OpKind::maxpool:
            case OpKind::avgpool: {
                int kh, kw, sh, sw;
                Pad4 pad;
                if (nd.kind == OpKind::conv) {
                    const ConvParams& p = nd.conv();
                    kh = p.kh; kw = p.kw; sh = p.sh; sw = p.sw; pad = p.pad;
                } else {
                    const PoolParams& p = nd.pool();
                    kh = p.kh; kw = p.kw; sh = p.sh; sw = p.sw; pad = p.pad;
                }
                GraphNode lin;
                lin.kind = OpKind::conv;
                lin.name = "lin_" + nd.name;
                lin.parents = {remap[size_t(nd.parents[0])]};
                ConvParams p;
                p.out_ch = p.in_ch = 1;
                p.kh = kh; p.kw = kw; p.sh = sh; p.sw = sw;
                p.pad = pad;
                p.weight = Tensor4(1, 1, kh, kw, 1.0);
                lin.params = std::move(p);
                lin.out_shape = infer_shape(lin, out.graph.nodes[size_t(lin.parents[0])].out_shape, lin.name);
                out.graph.nodes.push_back(std::move(lin));
                remap[size_t(i)] = int(out.graph.nodes.size()) - 1;
                break;
            }
            case OpKind::relu:
            case OpKind::bn:
            case OpKind::output:
                remap[size_t(i)] = remap[size_t(nd.parents[0])];
                break;
            case OpKind::add: {
                GraphNode lin;
                lin.kind = OpKind::add;
                lin.name = "lin_" + nd.name;
                lin.parents = {remap[size_t(nd.parents[0])], remap[size_t(nd.parents[1])]};
                lin.out_shape = out.graph.nodes[size_t(lin.parents[0])].out_shape;
                out.graph.nodes.push_back(std::move(lin));
                remap[size_t(i)] = int(out.graph.nodes.size()) - 1;
                break;
            }
            case OpKind::gap:
            case OpKind::fc:
                throw Error("linearize_for_coverage: non-spatial op '" + nd.name + "' on the target path");
            case OpKind::input:
                break;
        }
    }
    out.target = remap[size_t(target)];

    GraphNode tail;
    tail.kind = OpKind::output;
    tail.name = "output";
    tail.parents = {out.target};
    tail.out_shape = out.graph.nodes[size_t(out.target)].out_shape;
    out.graph.nodes.push_back(std::move(tail));
    out.graph.check_valid();
    return out;
}

} // namespace rfscope

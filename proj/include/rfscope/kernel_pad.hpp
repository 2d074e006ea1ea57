#pragma once

#include <map>
#include <string>
#include <vector>

#include "rfscope/graph.hpp"
#include "rfscope/netspec.hpp"

namespace rfscope {

// Targets odd kernel extents applied with stride 2 and maps them to the next
// even size: 7->8, 3->4, 1->2, matching each axis independently. Convs keep
// their function exactly (zero row appended at the bottom, zero column at the
// right, pad_bottom/pad_right grown by one); pools get the enlarged window
// under the same geometry and are NOT function-preserving.
struct PadRule {
    std::map<int, int> size_map = {{1, 2}, {3, 4}, {7, 8}};
    bool match_convs = true;
    bool match_pools = true;

    int padded_extent(int k, int stride) const {
        if (stride != 2) return k;
        auto it = size_map.find(k);
        return it == size_map.end() ? k : it->second;
    }
};

struct PaddedLayer {
    std::string name;
    OpKind kind = OpKind::conv;
    int old_kh = 0, old_kw = 0;
    int new_kh = 0, new_kw = 0;
    bool equivalent = true;  // convs yes, pools no
};

struct KernelPadResult {
    NetGraph graph;
    std::vector<PaddedLayer> modified;
};

// Zero-extends a conv kernel by (dkh, dkw) rows/columns at bottom/right.
inline Tensor4 zero_extend_kernel(const Tensor4& w, int dkh, int dkw) {
    const Shape4& s = w.shape();
    Tensor4 out(s.n, s.c, s.h + dkh, s.w + dkw, 0.0);
    for (int oc = 0; oc < s.n; ++oc)
        for (int ic = 0; ic < s.c; ++ic)
            for (int y = 0; y < s.h; ++y)
                for (int x = 0; x < s.w; ++x) out.at(oc, ic, y, x) = w.at(oc, ic, y, x);
    return out;
}

inline KernelPadResult kernel_pad(const NetGraph& g, const PadRule& rule = {}) {
    KernelPadResult res;
    res.graph = g;
    for (auto& nd : res.graph.nodes) {
        if (nd.kind == OpKind::conv && rule.match_convs) {
            ConvParams& p = nd.conv();
            int nkh = rule.padded_extent(p.kh, p.sh);
            int nkw = rule.padded_extent(p.kw, p.sw);
            if (nkh == p.kh && nkw == p.kw) continue;
            res.modified.push_back({nd.name, nd.kind, p.kh, p.kw, nkh, nkw, true});
            p.weight = zero_extend_kernel(p.weight, nkh - p.kh, nkw - p.kw);
            p.pad.bottom += nkh - p.kh;
            p.pad.right += nkw - p.kw;
            p.kh = nkh;
            p.kw = nkw;
        } else if ((nd.kind == OpKind::maxpool || nd.kind == OpKind::avgpool) && rule.match_pools) {
            PoolParams& p = nd.pool();
            int nkh = rule.padded_extent(p.kh, p.sh);
            int nkw = rule.padded_extent(p.kw, p.sw);
            if (nkh == p.kh && nkw == p.kw) continue;
            res.modified.push_back({nd.name, nd.kind, p.kh, p.kw, nkh, nkw, false});
            p.pad.bottom += nkh - p.kh;
            p.pad.right += nkw - p.kw;
            p.kh = nkh;
            p.kw = nkw;
        }
    }
    res.graph.check_valid();
    return res;
}

namespace detail {

inline void pad_decl(LayerDecl& d, const PadRule& rule, std::vector<std::string>* touched) {
    if (d.kind == LayerDecl::conv && rule.match_convs) {
        int nk = rule.padded_extent(d.k, d.s);
        if (nk != d.k) {
            d.pad.bottom += nk - d.k;
            d.pad.right += nk - d.k;
            if (touched) touched->push_back("conv " + std::to_string(d.k) + "->" + std::to_string(nk));
            d.k = nk;
        }
    } else if ((d.kind == LayerDecl::maxpool || d.kind == LayerDecl::avgpool) && rule.match_pools) {
        int nk = rule.padded_extent(d.k, d.s);
        if (nk != d.k) {
            d.pad.bottom += nk - d.k;
            d.pad.right += nk - d.k;
            if (touched) touched->push_back("pool " + std::to_string(d.k) + "->" + std::to_string(nk));
            d.k = nk;
        }
    } else if (d.kind == LayerDecl::resblock) {
        for (auto& m : d.main_branch) pad_decl(m, rule, touched);
        for (auto& s : d.shortcut_branch) pad_decl(s, rule, touched);
    }
}

} // namespace detail

// Structural counterpart of kernel_pad for spec files; building a graph from
// the padded spec plus the padded bundle reproduces kernel_pad(graph).graph.
inline ArchSpec kernel_pad_spec(const ArchSpec& spec, const PadRule& rule = {}) {
    ArchSpec out = spec;
    for (auto& d : out.layers) detail::pad_decl(d, rule, nullptr);
    return out;
}

} // namespace rfscope

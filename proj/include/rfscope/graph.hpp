#pragma once

#include <string>
#include <variant>
#include <vector>

#include "rfscope/tensor.hpp"

namespace rfscope {

enum class OpKind { input, conv, maxpool, avgpool, relu, bn, add, fc, gap, output };

inline const char* op_name(OpKind k) {
    switch (k) {
        case OpKind::input: return "input";
        case OpKind::conv: return "conv";
        case OpKind::maxpool: return "maxpool";
        case OpKind::avgpool: return "avgpool";
        case OpKind::relu: return "relu";
        case OpKind::bn: return "bn";
        case OpKind::add: return "add";
        case OpKind::fc: return "fc";
        case OpKind::gap: return "gap";
        case OpKind::output: return "output";
    }
    return "?";
}

// Four independent pad values. The kernel-padding transform grows bottom and
// right only, so symmetric shorthand is not enough.
struct Pad4 {
    int top = 0;
    int bottom = 0;
    int left = 0;
    int right = 0;
    bool operator==(const Pad4&) const = default;
    bool symmetric() const { return top == bottom && bottom == left && left == right; }
};

struct ConvParams {
    int out_ch = 0;
    int in_ch = 0;
    int kh = 0;
    int kw = 0;
    int sh = 1;
    int sw = 1;
    Pad4 pad;
    Tensor4 weight;            // (out_ch, in_ch, kh, kw)
    std::vector<double> bias;  // per out channel; empty = no bias
    std::vector<double> bias_grad;
};

struct PoolParams {
    int kh = 0;
    int kw = 0;
    int sh = 1;
    int sw = 1;
    Pad4 pad;
};

struct BnParams {
    int channels = 0;
    std::vector<double> gamma;
    std::vector<double> beta;
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double eps = 1e-5;
    double momentum = 0.1;
    // grads for gamma/beta live here; running stats are not trained
    std::vector<double> gamma_grad;
    std::vector<double> beta_grad;
};

struct FcParams {
    int out_features = 0;
    int in_features = 0;
    Tensor4 weight;            // (out_features, in_features, 1, 1)
    std::vector<double> bias;  // empty = no bias
    std::vector<double> bias_grad;
};

using NodeParams = std::variant<std::monostate, ConvParams, PoolParams, BnParams, FcParams>;

struct GraphNode {
    OpKind kind = OpKind::input;
    std::string name;
    std::vector<int> parents;
    NodeParams params;
    Shape4 out_shape;  // for batch size 1; n scales at run time

    ConvParams& conv() { return std::get<ConvParams>(params); }
    const ConvParams& conv() const { return std::get<ConvParams>(params); }
    PoolParams& pool() { return std::get<PoolParams>(params); }
    const PoolParams& pool() const { return std::get<PoolParams>(params); }
    BnParams& bn() { return std::get<BnParams>(params); }
    const BnParams& bn() const { return std::get<BnParams>(params); }
    FcParams& fc() { return std::get<FcParams>(params); }
    const FcParams& fc() const { return std::get<FcParams>(params); }
};

inline int conv_out_extent(int in, int pad_lo, int pad_hi, int k, int s) {
    return (in + pad_lo + pad_hi - k) / s + 1;
}

// Layer DAG. Nodes are stored in topological order (every parent index is
// smaller than its child), with node 0 the single input.
struct NetGraph {
    std::vector<GraphNode> nodes;
    Shape4 input_shape;  // n == 1

    int input_node() const { return 0; }
    int output_node() const { return int(nodes.size()) - 1; }

    int find(const std::string& name) const {
        for (size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i].name == name) return int(i);
        return -1;
    }

    // Deepest node that still carries a spatial grid; the default analysis
    // target when none is given.
    int last_spatial_node() const {
        for (int i = int(nodes.size()) - 1; i >= 0; --i) {
            OpKind k = nodes[size_t(i)].kind;
            if (k != OpKind::gap && k != OpKind::fc && k != OpKind::output) return i;
        }
        return input_node();
    }

    bool ends_in_logits() const {
        for (const auto& n : nodes)
            if (n.kind == OpKind::fc) return true;
        return false;
    }

    void check_valid() const {
        if (nodes.empty() || nodes[0].kind != OpKind::input)
            throw Error("graph: node 0 must be the input");
        for (size_t i = 1; i < nodes.size(); ++i) {
            const auto& nd = nodes[i];
            if (nd.kind == OpKind::input) throw Error("graph: multiple input nodes");
            if (nd.parents.empty()) throw Error("graph: node '" + nd.name + "' has no parents");
            for (int p : nd.parents)
                if (p < 0 || p >= int(i))
                    throw Error("graph: node '" + nd.name + "' breaks topological order");
            if (nd.kind == OpKind::add) {
                if (nd.parents.size() != 2) throw Error("graph: add node '" + nd.name + "' needs exactly two parents");
                const auto& a = nodes[size_t(nd.parents[0])].out_shape;
                const auto& b = nodes[size_t(nd.parents[1])].out_shape;
                if (!(a == b))
                    throw Error("graph: add node '" + nd.name + "' parent shapes differ: " + a.str() + " vs " + b.str());
            } else if (nd.parents.size() != 1) {
                throw Error("graph: node '" + nd.name + "' needs exactly one parent");
            }
        }
    }
};

// Output shape of a single node given its (first) parent shape; n passes through.
inline Shape4 infer_shape(const GraphNode& nd, const Shape4& in, const std::string& where) {
    switch (nd.kind) {
        case OpKind::input:
        case OpKind::relu:
        case OpKind::add:
        case OpKind::output:
            return in;
        case OpKind::bn: {
            if (nd.bn().channels != in.c)
                throw Error(where + ": bn expects " + std::to_string(nd.bn().channels) + " channels, got " + std::to_string(in.c));
            return in;
        }
        case OpKind::conv: {
            const auto& p = nd.conv();
            if (p.in_ch != in.c)
                throw Error(where + ": conv expects " + std::to_string(p.in_ch) + " input channels, got " + std::to_string(in.c));
            int oh = conv_out_extent(in.h, p.pad.top, p.pad.bottom, p.kh, p.sh);
            int ow = conv_out_extent(in.w, p.pad.left, p.pad.right, p.kw, p.sw);
            if (oh < 1 || ow < 1)
                throw Error(where + ": conv output collapses to " + std::to_string(oh) + "x" + std::to_string(ow));
            return Shape4{in.n, p.out_ch, oh, ow};
        }
        case OpKind::maxpool:
        case OpKind::avgpool: {
            const auto& p = nd.pool();
            int oh = conv_out_extent(in.h, p.pad.top, p.pad.bottom, p.kh, p.sh);
            int ow = conv_out_extent(in.w, p.pad.left, p.pad.right, p.kw, p.sw);
            if (oh < 1 || ow < 1)
                throw Error(where + ": pool output collapses to " + std::to_string(oh) + "x" + std::to_string(ow));
            return Shape4{in.n, in.c, oh, ow};
        }
        case OpKind::gap:
            return Shape4{in.n, in.c, 1, 1};
        case OpKind::fc: {
            const auto& p = nd.fc();
            int flat = in.c * in.h * in.w;
            if (p.in_features != flat)
                throw Error(where + ": fc expects " + std::to_string(p.in_features) + " features, got " + std::to_string(flat));
            return Shape4{in.n, p.out_features, 1, 1};
        }
    }
    throw Error(where + ": unknown op");
}

} // namespace rfscope

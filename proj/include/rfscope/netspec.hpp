#pragma once

#include <cctype>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rfscope/autograd.hpp"
#include "rfscope/graph.hpp"
#include "rfscope/rng.hpp"

namespace rfscope {

// ---------------------------------------------------------------------------
// Architecture DSL (.spec files)
//
//   # comment (also trailing)
//   name <identifier>            optional
//   input <C> <H> <W>            required, first declaration
//   conv <k> <s> <pad> <out_ch>
//   maxpool <k> <s> <pad>
//   avgpool <k> <s> <pad>
//   relu | bn | gap
//   fc <features>
//   resblock {                   two-branch residual unit, joined by add
//     <layers...>                main branch
//   shortcut                     optional; identity shortcut when absent
//     <layers...>
//   }
//
// <pad> is a single integer (all four sides) or top,bottom,left,right.
// Kernels and strides are square. Post-add activation is written as a plain
// `relu` line after the block. resblocks do not nest.
// ---------------------------------------------------------------------------

struct LayerDecl {
    enum Kind { conv, maxpool, avgpool, relu, bn, fc, gap, resblock } kind = relu;
    int line = 0;

    int k = 0;
    int s = 0;
    Pad4 pad;
    int out_ch = 0;    // conv
    int features = 0;  // fc

    std::vector<LayerDecl> main_branch;      // resblock only
    std::vector<LayerDecl> shortcut_branch;  // empty = identity shortcut

    bool same_structure(const LayerDecl& o) const {
        if (kind != o.kind || k != o.k || s != o.s || !(pad == o.pad) || out_ch != o.out_ch || features != o.features)
            return false;
        auto branches_eq = [](const std::vector<LayerDecl>& a, const std::vector<LayerDecl>& b) {
            if (a.size() != b.size()) return false;
            for (size_t i = 0; i < a.size(); ++i)
                if (!a[i].same_structure(b[i])) return false;
            return true;
        };
        return branches_eq(main_branch, o.main_branch) && branches_eq(shortcut_branch, o.shortcut_branch);
    }
};

struct ArchSpec {
    std::string name = "net";
    int in_c = 0;
    int in_h = 0;
    int in_w = 0;
    std::vector<LayerDecl> layers;

    bool same_structure(const ArchSpec& o) const {
        if (name != o.name || in_c != o.in_c || in_h != o.in_h || in_w != o.in_w) return false;
        if (layers.size() != o.layers.size()) return false;
        for (size_t i = 0; i < layers.size(); ++i)
            if (!layers[i].same_structure(o.layers[i])) return false;
        return true;
    }
};

namespace detail {

struct SpecLine {
    int number = 0;
    std::vector<std::string> tokens;
};

inline std::vector<SpecLine> spec_lines(std::string_view text) {
    std::vector<SpecLine> out;
    int lineno = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string_view line = text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
        ++lineno;
        if (size_t hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        SpecLine sl;
        sl.number = lineno;
        size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
            size_t start = i;
            while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
            if (i > start) sl.tokens.emplace_back(line.substr(start, i - start));
        }
        if (!sl.tokens.empty()) out.push_back(std::move(sl));
        if (eol == std::string_view::npos) break;
        pos = eol + 1;
    }
    return out;
}

inline int parse_int(const SpecLine& l, size_t tok, const char* what) {
    const std::string& t = l.tokens[tok];
    size_t used = 0;
    long v = 0;
    try {
        v = std::stol(t, &used);
    } catch (const std::exception&) {
        throw ParseError(l.number, int(tok) + 1, std::string(what) + ": not an integer: '" + t + "'");
    }
    if (used != t.size()) throw ParseError(l.number, int(tok) + 1, std::string(what) + ": not an integer: '" + t + "'");
    return int(v);
}

inline int parse_positive(const SpecLine& l, size_t tok, const char* what) {
    int v = parse_int(l, tok, what);
    if (v <= 0) throw ParseError(l.number, int(tok) + 1, std::string("non-positive ") + what + ": " + std::to_string(v));
    return v;
}

inline Pad4 parse_pad(const SpecLine& l, size_t tok) {
    const std::string& t = l.tokens[tok];
    Pad4 p;
    if (t.find(',') == std::string::npos) {
        int v = parse_int(l, tok, "padding");
        if (v < 0) throw ParseError(l.number, int(tok) + 1, "negative padding: " + std::to_string(v));
        p.top = p.bottom = p.left = p.right = v;
        return p;
    }
    int vals[4];
    size_t pos = 0;
    for (int i = 0; i < 4; ++i) {
        size_t comma = t.find(',', pos);
        std::string part = t.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        try {
            size_t used = 0;
            vals[i] = std::stoi(part, &used);
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception&) {
            throw ParseError(l.number, int(tok) + 1, "padding: expected 4 comma-separated integers, got '" + t + "'");
        }
        if (vals[i] < 0) throw ParseError(l.number, int(tok) + 1, "negative padding: " + std::to_string(vals[i]));
        if (comma == std::string::npos) {
            if (i != 3)
                throw ParseError(l.number, int(tok) + 1, "padding: expected 4 comma-separated integers, got '" + t + "'");
            pos = t.size();
        } else {
            pos = comma + 1;
        }
    }
    p.top = vals[0];
    p.bottom = vals[1];
    p.left = vals[2];
    p.right = vals[3];
    return p;
}

inline void expect_argc(const SpecLine& l, size_t n, const char* usage) {
    if (l.tokens.size() != n)
        throw ParseError(l.number, 1, "expected '" + std::string(usage) + "', got " + std::to_string(l.tokens.size() - 1) +
                                          " argument(s)");
}

struct ShapeCHW {
    int c, h, w;
    bool operator==(const ShapeCHW&) const = default;
    std::string str() const {
        return std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
    }
};

inline ShapeCHW decl_output(const LayerDecl& d, ShapeCHW in);

inline ShapeCHW chain_output(const std::vector<LayerDecl>& layers, ShapeCHW in) {
    for (const auto& d : layers) in = decl_output(d, in);
    return in;
}

inline ShapeCHW decl_output(const LayerDecl& d, ShapeCHW in) {
    switch (d.kind) {
        case LayerDecl::conv: {
            int oh = conv_out_extent(in.h, d.pad.top, d.pad.bottom, d.k, d.s);
            int ow = conv_out_extent(in.w, d.pad.left, d.pad.right, d.k, d.s);
            if (oh < 1 || ow < 1)
                throw ParseError(d.line, 1, "conv output collapses to " + std::to_string(oh) + "x" + std::to_string(ow));
            return {d.out_ch, oh, ow};
        }
        case LayerDecl::maxpool:
        case LayerDecl::avgpool: {
            int oh = conv_out_extent(in.h, d.pad.top, d.pad.bottom, d.k, d.s);
            int ow = conv_out_extent(in.w, d.pad.left, d.pad.right, d.k, d.s);
            if (oh < 1 || ow < 1)
                throw ParseError(d.line, 1, "pool output collapses to " + std::to_string(oh) + "x" + std::to_string(ow));
            return {in.c, oh, ow};
        }
        case LayerDecl::relu:
        case LayerDecl::bn:
            return in;
        case LayerDecl::gap:
            return {in.c, 1, 1};
        case LayerDecl::fc:
            return {d.features, 1, 1};
        case LayerDecl::resblock: {
            ShapeCHW main_out = chain_output(d.main_branch, in);
            ShapeCHW short_out = d.shortcut_branch.empty() ? in : chain_output(d.shortcut_branch, in);
            if (!(main_out == short_out))
                throw ParseError(d.line, 1, "resblock branch shapes differ: main " + main_out.str() + " vs shortcut " +
                                                short_out.str());
            return main_out;
        }
    }
    throw ParseError(d.line, 1, "unknown layer kind");
}

} // namespace detail

inline ArchSpec parse_spec(std::string_view text) {
    using namespace detail;
    std::vector<SpecLine> lines = spec_lines(text);
    if (lines.empty()) throw ParseError(1, 1, "empty spec");

    ArchSpec spec;
    size_t li = 0;

    if (lines[li].tokens[0] == "name") {
        expect_argc(lines[li], 2, "name <identifier>");
        spec.name = lines[li].tokens[1];
        ++li;
        if (li >= lines.size()) throw ParseError(lines.back().number, 1, "missing input declaration");
    }

    {
        const SpecLine& l = lines[li];
        if (l.tokens[0] != "input") throw ParseError(l.number, 1, "first declaration must be 'input <C> <H> <W>'");
        expect_argc(l, 4, "input <C> <H> <W>");
        spec.in_c = parse_positive(l, 1, "channel count");
        spec.in_h = parse_positive(l, 2, "height");
        spec.in_w = parse_positive(l, 3, "width");
        ++li;
    }

    // parse target stack: top-level layers, or a resblock branch
    std::vector<LayerDecl>* target = &spec.layers;
    LayerDecl block;        // pending resblock while inside braces
    bool in_block = false;  // braces may not nest

    auto parse_simple = [&](const SpecLine& l) -> LayerDecl {
        LayerDecl d;
        d.line = l.number;
        const std::string& op = l.tokens[0];
        if (op == "conv") {
            expect_argc(l, 5, "conv <k> <s> <pad> <out_ch>");
            d.kind = LayerDecl::conv;
            d.k = parse_positive(l, 1, "kernel");
            d.s = parse_positive(l, 2, "stride");
            d.pad = parse_pad(l, 3);
            d.out_ch = parse_positive(l, 4, "channel count");
        } else if (op == "maxpool" || op == "avgpool") {
            expect_argc(l, 4, std::string(op + " <k> <s> <pad>").c_str());
            d.kind = op == "maxpool" ? LayerDecl::maxpool : LayerDecl::avgpool;
            d.k = parse_positive(l, 1, "kernel");
            d.s = parse_positive(l, 2, "stride");
            d.pad = parse_pad(l, 3);
        } else if (op == "relu") {
            expect_argc(l, 1, "relu");
            d.kind = LayerDecl::relu;
        } else if (op == "bn") {
            expect_argc(l, 1, "bn");
            d.kind = LayerDecl::bn;
        } else if (op == "gap") {
            expect_argc(l, 1, "gap");
            d.kind = LayerDecl::gap;
        } else if (op == "fc") {
            expect_argc(l, 2, "fc <features>");
            d.kind = LayerDecl::fc;
            d.features = parse_positive(l, 1, "feature count");
        } else {
            throw ParseError(l.number, 1, "unknown op '" + op + "'");
        }
        return d;
    };

    for (; li < lines.size(); ++li) {
        const SpecLine& l = lines[li];
        const std::string& op = l.tokens[0];
        if (op == "resblock") {
            if (in_block) throw ParseError(l.number, 1, "resblock may not nest");
            if (l.tokens.size() != 2 || l.tokens[1] != "{")
                throw ParseError(l.number, 1, "expected 'resblock {'");
            block = LayerDecl{};
            block.kind = LayerDecl::resblock;
            block.line = l.number;
            in_block = true;
            target = &block.main_branch;
        } else if (op == "shortcut") {
            if (!in_block) throw ParseError(l.number, 1, "'shortcut' outside resblock");
            if (target == &block.shortcut_branch) throw ParseError(l.number, 1, "duplicate 'shortcut'");
            expect_argc(l, 1, "shortcut");
            target = &block.shortcut_branch;
        } else if (op == "}") {
            expect_argc(l, 1, "}");
            if (!in_block) throw ParseError(l.number, 1, "unbalanced '}'");
            if (block.main_branch.empty()) throw ParseError(l.number, 1, "resblock main branch is empty");
            spec.layers.push_back(std::move(block));
            in_block = false;
            target = &spec.layers;
        } else if (op == "input" || op == "name") {
            throw ParseError(l.number, 1, "duplicate '" + op + "' declaration");
        } else {
            target->push_back(parse_simple(l));
        }
    }
    if (in_block) throw ParseError(lines.back().number, 1, "unbalanced '{': resblock never closed");

    // end-to-end shape consistency
    detail::chain_output(spec.layers, {spec.in_c, spec.in_h, spec.in_w});
    return spec;
}

namespace detail {

inline std::string pad_str(const Pad4& p) {
    if (p.symmetric()) return std::to_string(p.top);
    return std::to_string(p.top) + "," + std::to_string(p.bottom) + "," + std::to_string(p.left) + "," +
           std::to_string(p.right);
}

inline void print_decl(std::ostringstream& out, const LayerDecl& d, const char* indent) {
    switch (d.kind) {
        case LayerDecl::conv:
            out << indent << "conv " << d.k << " " << d.s << " " << pad_str(d.pad) << " " << d.out_ch << "\n";
            break;
        case LayerDecl::maxpool:
            out << indent << "maxpool " << d.k << " " << d.s << " " << pad_str(d.pad) << "\n";
            break;
        case LayerDecl::avgpool:
            out << indent << "avgpool " << d.k << " " << d.s << " " << pad_str(d.pad) << "\n";
            break;
        case LayerDecl::relu:
            out << indent << "relu\n";
            break;
        case LayerDecl::bn:
            out << indent << "bn\n";
            break;
        case LayerDecl::gap:
            out << indent << "gap\n";
            break;
        case LayerDecl::fc:
            out << indent << "fc " << d.features << "\n";
            break;
        case LayerDecl::resblock:
            out << "resblock {\n";
            for (const auto& m : d.main_branch) print_decl(out, m, "  ");
            if (!d.shortcut_branch.empty()) {
                out << "shortcut\n";
                for (const auto& s : d.shortcut_branch) print_decl(out, s, "  ");
            }
            out << "}\n";
            break;
    }
}

} // namespace detail

inline std::string print_spec(const ArchSpec& spec) {
    std::ostringstream out;
    out << "name " << spec.name << "\n";
    out << "input " << spec.in_c << " " << spec.in_h << " " << spec.in_w << "\n";
    for (const auto& d : spec.layers) detail::print_decl(out, d, "");
    return out.str();
}

// ---------------------------------------------------------------------------
// graph construction
// ---------------------------------------------------------------------------

namespace detail {

struct NameCounter {
    int conv = 0, pool = 0, bn = 0, fc = 0, add = 0;
};

inline int append_decl(NetGraph& g, const LayerDecl& d, int parent, NameCounter& nc);

inline int append_chain(NetGraph& g, const std::vector<LayerDecl>& layers, int parent, NameCounter& nc) {
    for (const auto& d : layers) parent = append_decl(g, d, parent, nc);
    return parent;
}

inline int append_decl(NetGraph& g, const LayerDecl& d, int parent, NameCounter& nc) {
    GraphNode nd;
    nd.parents = {parent};
    const Shape4& in = g.nodes[size_t(parent)].out_shape;
    switch (d.kind) {
        case LayerDecl::conv: {
            nd.kind = OpKind::conv;
            nd.name = "conv" + std::to_string(nc.conv++);
            ConvParams p;
            p.out_ch = d.out_ch;
            p.in_ch = in.c;
            p.kh = p.kw = d.k;
            p.sh = p.sw = d.s;
            p.pad = d.pad;
            p.weight = Tensor4(d.out_ch, in.c, d.k, d.k);
            nd.params = std::move(p);
            break;
        }
        case LayerDecl::maxpool:
        case LayerDecl::avgpool: {
            nd.kind = d.kind == LayerDecl::maxpool ? OpKind::maxpool : OpKind::avgpool;
            nd.name = (d.kind == LayerDecl::maxpool ? "maxpool" : "avgpool") + std::to_string(nc.pool++);
            PoolParams p;
            p.kh = p.kw = d.k;
            p.sh = p.sw = d.s;
            p.pad = d.pad;
            nd.params = p;
            break;
        }
        case LayerDecl::relu:
            nd.kind = OpKind::relu;
            nd.name = "relu@" + std::to_string(g.nodes.size());
            break;
        case LayerDecl::bn: {
            nd.kind = OpKind::bn;
            nd.name = "bn" + std::to_string(nc.bn++);
            BnParams p;
            p.channels = in.c;
            p.gamma.assign(size_t(in.c), 1.0);
            p.beta.assign(size_t(in.c), 0.0);
            p.running_mean.assign(size_t(in.c), 0.0);
            p.running_var.assign(size_t(in.c), 1.0);
            nd.params = std::move(p);
            break;
        }
        case LayerDecl::gap:
            nd.kind = OpKind::gap;
            nd.name = "gap@" + std::to_string(g.nodes.size());
            break;
        case LayerDecl::fc: {
            nd.kind = OpKind::fc;
            nd.name = "fc" + std::to_string(nc.fc++);
            FcParams p;
            p.out_features = d.features;
            p.in_features = in.c * in.h * in.w;
            p.weight = Tensor4(d.features, p.in_features, 1, 1);
            p.bias.assign(size_t(d.features), 0.0);
            nd.params = std::move(p);
            break;
        }
        case LayerDecl::resblock: {
            int main_end = append_chain(g, d.main_branch, parent, nc);
            int short_end = d.shortcut_branch.empty() ? parent : append_chain(g, d.shortcut_branch, parent, nc);
            GraphNode addn;
            addn.kind = OpKind::add;
            addn.name = "add" + std::to_string(nc.add++);
            addn.parents = {main_end, short_end};
            addn.out_shape = g.nodes[size_t(main_end)].out_shape;
            g.nodes.push_back(std::move(addn));
            return int(g.nodes.size()) - 1;
        }
    }
    nd.out_shape = infer_shape(nd, in, nd.name);
    g.nodes.push_back(std::move(nd));
    return int(g.nodes.size()) - 1;
}

} // namespace detail

// He fan-in initialization for conv/fc weights, unit scale / zero shift for
// bn, zero biases. One stream, consumed in node order: reproducible per seed.
inline void init_params(NetGraph& g, uint64_t seed) {
    Rng rng(seed);
    for (auto& nd : g.nodes) {
        if (nd.kind == OpKind::conv) {
            ConvParams& p = nd.conv();
            double stddev = std::sqrt(2.0 / (double(p.in_ch) * p.kh * p.kw));
            p.weight.fill_normal(rng, 0.0, stddev);
            if (!p.bias.empty()) std::fill(p.bias.begin(), p.bias.end(), 0.0);
        } else if (nd.kind == OpKind::fc) {
            FcParams& p = nd.fc();
            double stddev = std::sqrt(2.0 / double(p.in_features));
            p.weight.fill_normal(rng, 0.0, stddev);
            if (!p.bias.empty()) std::fill(p.bias.begin(), p.bias.end(), 0.0);
        } else if (nd.kind == OpKind::bn) {
            BnParams& p = nd.bn();
            std::fill(p.gamma.begin(), p.gamma.end(), 1.0);
            std::fill(p.beta.begin(), p.beta.end(), 0.0);
            std::fill(p.running_mean.begin(), p.running_mean.end(), 0.0);
            std::fill(p.running_var.begin(), p.running_var.end(), 1.0);
        }
    }
}

struct InitPolicy {
    uint64_t seed = 0;
};

// Structure only: weights stay zero. Enough for receptive-field analysis and
// for applying a bundle on top.
inline NetGraph build_graph(const ArchSpec& spec) {
    NetGraph g;
    g.input_shape = Shape4{1, spec.in_c, spec.in_h, spec.in_w};
    GraphNode input;
    input.kind = OpKind::input;
    input.name = "input";
    input.out_shape = g.input_shape;
    g.nodes.push_back(std::move(input));

    detail::NameCounter nc;
    int last = detail::append_chain(g, spec.layers, 0, nc);

    GraphNode out;
    out.kind = OpKind::output;
    out.name = "output";
    out.parents = {last};
    out.out_shape = g.nodes[size_t(last)].out_shape;
    g.nodes.push_back(std::move(out));

    g.check_valid();
    return g;
}

inline NetGraph build_graph(const ArchSpec& spec, InitPolicy init) {
    NetGraph g = build_graph(spec);
    init_params(g, init.seed);
    return g;
}

} // namespace rfscope

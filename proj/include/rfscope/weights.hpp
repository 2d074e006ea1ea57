#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "rfscope/graph.hpp"
#include "rfscope/netspec.hpp"

namespace rfscope {

// ---------------------------------------------------------------------------
// Weight bundle (".rfsw")
//
//   magic   "RFSW"
//   u32     format version (1)
//   u8      endianness flag (1 = little-endian payload)
//   records until EOF:
//     u32   name length, then name bytes
//     u32   rank
//     u64   dims[rank]
//     u8    dtype tag (0 = float64, 1 = float32)
//     payload, dims product * element size
//
// All integers and payloads little-endian. The writer emits float64 only;
// the reader accepts both tags.
// ---------------------------------------------------------------------------

struct WeightRecord {
    std::string name;
    std::vector<uint64_t> dims;
    std::vector<double> data;

    uint64_t count() const {
        uint64_t n = 1;
        for (uint64_t d : dims) n *= d;
        return n;
    }
};

struct WeightBundle {
    uint32_t version = 1;
    std::vector<WeightRecord> records;

    const WeightRecord* find(const std::string& name) const {
        for (const auto& r : records)
            if (r.name == name) return &r;
        return nullptr;
    }
};

namespace detail {

inline void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

inline void put_u64(std::vector<uint8_t>& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

inline void put_f64(std::vector<uint8_t>& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

struct ByteReader {
    const uint8_t* p;
    size_t len;
    size_t pos = 0;

    bool eof() const { return pos >= len; }
    void need(size_t n, const std::string& what) const {
        if (pos + n > len) throw Error("weight bundle: unexpected EOF at " + what);
    }
    uint8_t u8(const std::string& what) {
        need(1, what);
        return p[pos++];
    }
    uint32_t u32(const std::string& what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(p[pos + size_t(i)]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64(const std::string& what) {
        need(8, what);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= uint64_t(p[pos + size_t(i)]) << (8 * i);
        pos += 8;
        return v;
    }
};

} // namespace detail

inline std::vector<uint8_t> serialize(const WeightBundle& b) {
    std::vector<uint8_t> out;
    out.insert(out.end(), {'R', 'F', 'S', 'W'});
    detail::put_u32(out, b.version);
    out.push_back(1);  // little-endian
    for (const auto& r : b.records) {
        detail::put_u32(out, uint32_t(r.name.size()));
        out.insert(out.end(), r.name.begin(), r.name.end());
        detail::put_u32(out, uint32_t(r.dims.size()));
        for (uint64_t d : r.dims) detail::put_u64(out, d);
        out.push_back(0);  // float64
        for (double v : r.data) detail::put_f64(out, v);
    }
    return out;
}

inline WeightBundle deserialize(const uint8_t* data, size_t len) {
    detail::ByteReader rd{data, len};
    rd.need(4, "magic");
    if (std::memcmp(data, "RFSW", 4) != 0) throw Error("weight bundle: bad magic");
    rd.pos = 4;
    WeightBundle b;
    b.version = rd.u32("header");
    if (b.version != 1) throw Error("weight bundle: unsupported version " + std::to_string(b.version));
    uint8_t endian = rd.u8("header");
    if (endian != 1) throw Error("weight bundle: unsupported endianness flag " + std::to_string(endian));

    while (!rd.eof()) {
        std::string at = "layer " + std::to_string(b.records.size());
        WeightRecord r;
        uint32_t name_len = rd.u32(at);
        rd.need(name_len, at);
        r.name.assign(reinterpret_cast<const char*>(data + rd.pos), name_len);
        rd.pos += name_len;
        uint32_t rank = rd.u32(at);
        if (rank > 4) throw Error("weight bundle: record '" + r.name + "' has rank " + std::to_string(rank));
        r.dims.resize(rank);
        for (uint32_t i = 0; i < rank; ++i) r.dims[i] = rd.u64(at);
        uint8_t dtype = rd.u8(at);
        uint64_t n = r.count();
        r.data.resize(n);
        if (dtype == 0) {
            rd.need(n * 8, at);
            for (uint64_t i = 0; i < n; ++i) {
                uint64_t bits = rd.u64(at);
                double v;
                std::memcpy(&v, &bits, 8);
                r.data[i] = v;
            }
        } else if (dtype == 1) {
            rd.need(n * 4, at);
            for (uint64_t i = 0; i < n; ++i) {
                uint32_t bits = rd.u32(at);
                float v;
                std::memcpy(&v, &bits, 4);
                r.data[i] = double(v);
            }
        } else {
            throw Error("weight bundle: record '" + r.name + "' has unknown dtype tag " + std::to_string(dtype));
        }
        b.records.push_back(std::move(r));
    }
    return b;
}

inline WeightBundle deserialize(const std::vector<uint8_t>& bytes) { return deserialize(bytes.data(), bytes.size()); }

// Extracts every parameterized layer's tensors, in node order.
inline WeightBundle weights_of(const NetGraph& g) {
    WeightBundle b;
    auto add = [&](const std::string& name, std::vector<uint64_t> dims, const std::vector<double>& data) {
        b.records.push_back(WeightRecord{name, std::move(dims), data});
    };
    for (const auto& nd : g.nodes) {
        if (nd.kind == OpKind::conv) {
            const ConvParams& p = nd.conv();
            add(nd.name + ".weight", {uint64_t(p.out_ch), uint64_t(p.in_ch), uint64_t(p.kh), uint64_t(p.kw)},
                p.weight.data());
            if (!p.bias.empty()) add(nd.name + ".bias", {uint64_t(p.out_ch)}, p.bias);
        } else if (nd.kind == OpKind::bn) {
            const BnParams& p = nd.bn();
            add(nd.name + ".gamma", {uint64_t(p.channels)}, p.gamma);
            add(nd.name + ".beta", {uint64_t(p.channels)}, p.beta);
            add(nd.name + ".running_mean", {uint64_t(p.channels)}, p.running_mean);
            add(nd.name + ".running_var", {uint64_t(p.channels)}, p.running_var);
        } else if (nd.kind == OpKind::fc) {
            const FcParams& p = nd.fc();
            add(nd.name + ".weight", {uint64_t(p.out_features), uint64_t(p.in_features)}, p.weight.data());
            if (!p.bias.empty()) add(nd.name + ".bias", {uint64_t(p.out_features)}, p.bias);
        }
    }
    return b;
}

namespace detail {

inline void check_dims(const WeightRecord& r, std::vector<uint64_t> want, const std::string& layer) {
    if (r.dims != want) {
        auto str = [](const std::vector<uint64_t>& d) {
            std::string s = "(";
            for (size_t i = 0; i < d.size(); ++i) s += (i ? "," : "") + std::to_string(d[i]);
            return s + ")";
        };
        throw Error("layer '" + layer + "': bundle shape " + str(r.dims) + " does not match spec shape " + str(want));
    }
}

} // namespace detail

// Loads bundle tensors into the graph. Every parameterized layer must be
// covered with matching shapes; stray records are an error.
inline void apply_weights(NetGraph& g, const WeightBundle& b) {
    size_t used = 0;
    auto take = [&](const std::string& name) -> const WeightRecord* {
        const WeightRecord* r = b.find(name);
        if (r) ++used;
        return r;
    };
    for (auto& nd : g.nodes) {
        if (nd.kind == OpKind::conv) {
            ConvParams& p = nd.conv();
            const WeightRecord* r = take(nd.name + ".weight");
            if (!r) throw Error("layer '" + nd.name + "': missing record '" + nd.name + ".weight'");
            detail::check_dims(*r, {uint64_t(p.out_ch), uint64_t(p.in_ch), uint64_t(p.kh), uint64_t(p.kw)}, nd.name);
            p.weight.data() = r->data;
            if (const WeightRecord* rb = take(nd.name + ".bias")) {
                detail::check_dims(*rb, {uint64_t(p.out_ch)}, nd.name);
                p.bias = rb->data;
            } else {
                p.bias.clear();
            }
        } else if (nd.kind == OpKind::bn) {
            BnParams& p = nd.bn();
            for (auto [suffix, dst] : {std::pair{".gamma", &p.gamma}, {".beta", &p.beta},
                                       {".running_mean", &p.running_mean}, {".running_var", &p.running_var}}) {
                const WeightRecord* r = take(nd.name + suffix);
                if (!r) throw Error("layer '" + nd.name + "': missing record '" + nd.name + suffix + "'");
                detail::check_dims(*r, {uint64_t(p.channels)}, nd.name);
                *dst = r->data;
            }
        } else if (nd.kind == OpKind::fc) {
            FcParams& p = nd.fc();
            const WeightRecord* r = take(nd.name + ".weight");
            if (!r) throw Error("layer '" + nd.name + "': missing record '" + nd.name + ".weight'");
            detail::check_dims(*r, {uint64_t(p.out_features), uint64_t(p.in_features)}, nd.name);
            p.weight.data() = r->data;
            if (const WeightRecord* rb = take(nd.name + ".bias")) {
                detail::check_dims(*rb, {uint64_t(p.out_features)}, nd.name);
                p.bias = rb->data;
            } else {
                p.bias.clear();
            }
        }
    }
    if (used != b.records.size()) {
        for (const auto& r : b.records) {
            bool known = false;
            for (const auto& nd : g.nodes)
                if (r.name.rfind(nd.name + ".", 0) == 0) known = true;
            if (!known) throw Error("weight bundle: record '" + r.name + "' matches no layer in the spec");
        }
    }
}

inline NetGraph build_graph(const ArchSpec& spec, const WeightBundle& b) {
    NetGraph g = build_graph(spec);
    apply_weights(g, b);
    return g;
}

inline void save_weights_file(const std::string& path, const WeightBundle& b) {
    std::vector<uint8_t> bytes = serialize(b);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(path + ": cannot open for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error(path + ": write failed");
}

inline WeightBundle load_weights_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(path + ": cannot open");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize(bytes);
}

} // namespace rfscope

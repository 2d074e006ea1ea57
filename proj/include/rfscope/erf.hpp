#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "rfscope/autograd.hpp"
#include "rfscope/exact_sum.hpp"
#include "rfscope/image_io.hpp"
#include "rfscope/parallel.hpp"
#include "rfscope/rng.hpp"
#include "rfscope/weights.hpp"

namespace rfscope {

struct Normalization {
    std::vector<double> mean;  // per channel
    std::vector<double> std;

    static Normalization plain(int channels) {
        return Normalization{std::vector<double>(size_t(channels), 0.0), std::vector<double>(size_t(channels), 1.0)};
    }
};

// Fixed-size image collection, already normalized, deterministic order.
struct ImageSource {
    std::vector<Tensor4> images;  // each (1, C, H, W)
    std::vector<std::string> names;
    std::string id;

    size_t size() const { return images.size(); }
};

inline Tensor4 image_to_tensor(const ImageU8& img, const Normalization& norm) {
    Tensor4 t(1, 3, img.h, img.w);
    for (int c = 0; c < 3; ++c) {
        double m = norm.mean[size_t(c)], s = norm.std[size_t(c)];
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) t.at(0, c, y, x) = (double(img.at(y, x, c)) / 255.0 - m) / s;
    }
    return t;
}

// Directory of P6 PPMs, one shape, lexicographic filename order.
inline ImageSource load_images(const std::string& dir, const Normalization& norm) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw Error(dir + ": not a directory");
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path().string());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw Error(dir + ": no .ppm images");

    ImageSource src;
    src.id = "dir:" + dir;
    int h = -1, w = -1;
    for (const auto& f : files) {
        ImageU8 img = read_ppm(f);
        if (h < 0) {
            h = img.h;
            w = img.w;
        } else if (img.h != h || img.w != w) {
            throw Error(f + ": image is " + std::to_string(img.w) + "x" + std::to_string(img.h) + ", expected " +
                        std::to_string(w) + "x" + std::to_string(h));
        }
        src.images.push_back(image_to_tensor(img, norm));
        src.names.push_back(fs::path(f).filename().string());
    }
    return src;
}

// Raw tensor file: a weight bundle whose single record "images" holds an
// (N, C, H, W) stack. Normalization is applied per channel like the PPM path.
inline ImageSource load_images_tensor(const std::string& path, const Normalization& norm) {
    WeightBundle b = load_weights_file(path);
    const WeightRecord* rec = b.find("images");
    if (!rec || rec->dims.size() != 4)
        throw Error(path + ": expected a rank-4 record named 'images'");
    int n = int(rec->dims[0]), c = int(rec->dims[1]), h = int(rec->dims[2]), w = int(rec->dims[3]);
    if (n < 1) throw Error(path + ": empty image stack");
    ImageSource src;
    src.id = "tensor:" + path;
    size_t per = size_t(c) * size_t(h) * size_t(w);
    for (int i = 0; i < n; ++i) {
        Tensor4 t(1, c, h, w);
        for (int ch = 0; ch < c; ++ch) {
            double m = norm.mean[size_t(ch)], s = norm.std[size_t(ch)];
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    size_t k = size_t(i) * per + (size_t(ch) * size_t(h) + size_t(y)) * size_t(w) + size_t(x);
                    t.at(0, ch, y, x) = (rec->data[k] - m) / s;
                }
        }
        src.images.push_back(std::move(t));
        src.names.push_back("images[" + std::to_string(i) + "]");
    }
    return src;
}

// Seeded noise images, for running the pipeline with zero external data.
inline ImageSource synthetic_images(int n, int channels, int h, int w, uint64_t seed, const Normalization& norm) {
    if (n <= 0) throw Error("synthetic_images: image count must be positive");
    ImageSource src;
    src.id = "synthetic:n=" + std::to_string(n) + ",seed=" + std::to_string(seed);
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        Tensor4 t(1, channels, h, w);
        for (int c = 0; c < channels; ++c) {
            double m = norm.mean[size_t(c)], s = norm.std[size_t(c)];
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) t.at(0, c, y, x) = (rng.uniform() - m) / s;
        }
        src.images.push_back(std::move(t));
        src.names.push_back("synthetic_" + std::to_string(i));
    }
    return src;
}

// What the ERF is taken of: the channel-averaged center of a feature map
// (layer mode) or a logit reduction of the network output.
struct ErfTarget {
    enum Kind { layer_center, output_mean, output_index } kind = layer_center;
    int node = -1;  // layer mode; -1 = last spatial node
    int index = 0;  // output_index

    static ErfTarget layer(int node = -1) { return ErfTarget{layer_center, node, 0}; }
    static ErfTarget output() { return ErfTarget{output_mean, -1, 0}; }
    static ErfTarget output_class(int k) { return ErfTarget{output_index, -1, k}; }

    std::string describe(const NetGraph& g) const {
        switch (kind) {
            case layer_center: {
                int t = node < 0 ? g.last_spatial_node() : node;
                return "layer:" + g.nodes[size_t(t)].name + ":center_channel_mean";
            }
            case output_mean:
                return "output:mean";
            case output_index:
                return "output:logit" + std::to_string(index);
        }
        return "?";
    }
};

namespace detail {

struct ResolvedTarget {
    int node;
    ScalarTarget st;
};

inline ResolvedTarget resolve_target(const NetGraph& g, const ErfTarget& t) {
    switch (t.kind) {
        case ErfTarget::layer_center: {
            int node = t.node < 0 ? g.last_spatial_node() : t.node;
            if (node < 0 || node >= int(g.nodes.size())) throw Error("erf target: node out of range");
            const Shape4& s = g.nodes[size_t(node)].out_shape;
            if (s.h < 1 || s.w < 1)
                throw Error("erf target: node '" + g.nodes[size_t(node)].name + "' has no spatial center");
            return {node, ScalarTarget::center()};
        }
        case ErfTarget::output_mean: {
            if (!g.ends_in_logits()) throw Error("erf target: graph does not end in a logit vector");
            return {g.output_node(), ScalarTarget::mean_logit()};
        }
        case ErfTarget::output_index: {
            if (!g.ends_in_logits()) throw Error("erf target: graph does not end in a logit vector");
            int c = g.nodes[size_t(g.output_node())].out_shape.c;
            if (t.index < 0 || t.index >= c)
                throw Error("erf target: class index " + std::to_string(t.index) + " out of range [0," +
                            std::to_string(c) + ")");
            return {g.output_node(), ScalarTarget::logit(t.index)};
        }
    }
    throw Error("erf target: unknown kind");
}

} // namespace detail

// G_xy for one image: gradient of the target scalar w.r.t. the input,
// averaged over input channels. May be negative; rectification happens at
// accumulation time.
inline std::vector<double> image_gradient(const NetGraph& g, const Tensor4& image, const ErfTarget& target) {
    detail::ResolvedTarget rt = detail::resolve_target(g, target);
    Tensor4 grad = input_gradient(g, image, rt.node, rt.st);
    const Shape4& s = grad.shape();
    std::vector<double> field(size_t(s.h) * size_t(s.w), 0.0);
    double inv_c = 1.0 / double(s.c);
    for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
            for (int x = 0; x < s.w; ++x) field[size_t(y) * size_t(s.w) + size_t(x)] += grad.at(0, c, y, x) * inv_c;
    return field;
}

// R_xy plus the bookkeeping needed to reproduce it.
struct ERFMap {
    int h = 0;
    int w = 0;
    std::vector<double> values;  // non-negative
    int64_t n_images = 0;
    std::string target_desc;
    std::string spec_hash;
    std::string weights_hash;
    std::string dataset_id;

    double at(int y, int x) const { return values[size_t(y) * size_t(w) + size_t(x)]; }
};

// Per-pixel exact accumulation of rectified per-image gradients. Exactness
// makes image-order invariance and disjoint-split merges bit-reproducible.
class ErfAccumulator {
public:
    ErfAccumulator(int h, int w) : h_(h), w_(w), sums_(size_t(h) * size_t(w)) {}

    void add_rectified(const std::vector<double>& g_field) {
        if (g_field.size() != sums_.size()) throw Error("ErfAccumulator: field size mismatch");
        for (size_t i = 0; i < sums_.size(); ++i)
            if (g_field[i] > 0.0) sums_[i].add(g_field[i]);
        ++n_;
    }

    void merge(const ErfAccumulator& other) {
        if (other.sums_.size() != sums_.size()) throw Error("ErfAccumulator: merge size mismatch");
        for (size_t i = 0; i < sums_.size(); ++i) sums_[i].merge(other.sums_[i]);
        n_ += other.n_;
    }

    int64_t count() const { return n_; }

    // divides by N exactly once
    ERFMap finalize() const {
        if (n_ == 0) throw Error("ErfAccumulator: no images accumulated");
        ERFMap m;
        m.h = h_;
        m.w = w_;
        m.n_images = n_;
        m.values.resize(sums_.size());
        double inv = 1.0 / double(n_);
        for (size_t i = 0; i < sums_.size(); ++i) m.values[i] = sums_[i].round() * inv;
        return m;
    }

private:
    int h_, w_;
    std::vector<ExactSum> sums_;
    int64_t n_ = 0;
};

// Accumulation with batch-size-1 semantics: rectify each image's G before it
// ever meets another image's. Per-image gradients may run in parallel; the
// fold is in image index order for any worker count.
inline ERFMap accumulate_erf(const NetGraph& g, const ImageSource& source, const ErfTarget& target) {
    if (source.images.empty()) throw Error("accumulate_erf: empty image source");
    const Shape4& in = g.input_shape;
    ErfAccumulator acc(in.h, in.w);

    const int chunk = 64;
    std::vector<std::vector<double>> fields(size_t(std::min<size_t>(chunk, source.images.size())));
    for (size_t base = 0; base < source.images.size(); base += chunk) {
        int count = int(std::min<size_t>(chunk, source.images.size() - base));
        parallel_for(count, [&](int i) { fields[size_t(i)] = image_gradient(g, source.images[base + size_t(i)], target); });
        for (int i = 0; i < count; ++i) acc.add_rectified(fields[size_t(i)]);
    }

    ERFMap m = acc.finalize();
    m.target_desc = target.describe(g);
    m.dataset_id = source.id;
    return m;
}

// The dead pixel test: ERF of the network output.
inline ERFMap erf_of_output(const NetGraph& g, const ImageSource& source, const ErfTarget& class_mode = ErfTarget::output()) {
    if (class_mode.kind == ErfTarget::layer_center)
        throw Error("erf_of_output: class_mode must be an output reduction");
    return accumulate_erf(g, source, class_mode);
}

} // namespace rfscope

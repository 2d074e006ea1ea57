#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "rfscope/autograd.hpp"
#include "rfscope/erf.hpp"
#include "rfscope/image_io.hpp"
#include "rfscope/rng.hpp"
#include "rfscope/weights.hpp"

namespace rfscope {

// ---------------------------------------------------------------------------
// micro-object dataset: one 8x8 patch per image at a uniform random position,
// solid RGB(0,0,0) for class A, solid RGB(255,0,0) for class B
// ---------------------------------------------------------------------------

struct MicroDatasetConfig {
    int image_h = 64;
    int image_w = 64;
    int patch = 8;
    int train_per_class = 512;
    int test_per_class = 128;
    uint64_t seed = 1;
    std::string template_dir;  // empty = procedural templates
    std::array<uint8_t, 3> class_a_color{0, 0, 0};
    std::array<uint8_t, 3> class_b_color{255, 0, 0};
};

struct LabeledImage {
    ImageU8 image;
    int label = 0;  // 0 = class A, 1 = class B
};

struct MicroDataset {
    std::vector<LabeledImage> train;
    std::vector<LabeledImage> test;
    MicroDatasetConfig cfg;
};

namespace detail {

// Smooth colored-noise background: low-res per-channel noise upsampled
// bilinearly, a few soft blobs, a global cast. Values clamped to [8, 247] so
// no background pixel collides with a class color.
inline ImageU8 procedural_template(int h, int w, Rng& rng) {
    const int grid = 5;
    double cells[3][grid][grid];
    for (auto& plane : cells)
        for (auto& row : plane)
            for (double& v : row) v = rng.uniform();
    double cast[3] = {rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25)};

    struct Blob {
        double cy, cx, r, amp[3];
    };
    std::vector<Blob> blobs;
    int n_blobs = 2 + rng.uniform_index(3);
    for (int b = 0; b < n_blobs; ++b) {
        Blob bl;
        bl.cy = rng.uniform(0.0, double(h));
        bl.cx = rng.uniform(0.0, double(w));
        bl.r = rng.uniform(double(h) / 12.0, double(h) / 3.0);
        for (double& a : bl.amp) a = rng.uniform(-0.5, 0.5);
        blobs.push_back(bl);
    }

    ImageU8 img;
    img.h = h;
    img.w = w;
    img.rgb.resize(size_t(h) * size_t(w) * 3);
    for (int y = 0; y < h; ++y) {
        double gy = double(y) / double(h - 1) * (grid - 1);
        int y0 = std::min(int(gy), grid - 2);
        double fy = gy - y0;
        for (int x = 0; x < w; ++x) {
            double gx = double(x) / double(w - 1) * (grid - 1);
            int x0 = std::min(int(gx), grid - 2);
            double fx = gx - x0;
            for (int c = 0; c < 3; ++c) {
                double v = cells[c][y0][x0] * (1 - fy) * (1 - fx) + cells[c][y0 + 1][x0] * fy * (1 - fx) +
                           cells[c][y0][x0 + 1] * (1 - fy) * fx + cells[c][y0 + 1][x0 + 1] * fy * fx;
                v += cast[c];
                for (const Blob& bl : blobs) {
                    double d2 = (y - bl.cy) * (y - bl.cy) + (x - bl.cx) * (x - bl.cx);
                    v += bl.amp[c] * std::exp(-d2 / (2.0 * bl.r * bl.r));
                }
                double q = v * 255.0;
                if (q < 8.0) q = 8.0;
                if (q > 247.0) q = 247.0;
                img.at(y, x, c) = uint8_t(q + 0.5);
            }
        }
    }
    return img;
}

inline void stamp_patch(ImageU8& img, int py, int px, int patch, const std::array<uint8_t, 3>& color) {
    for (int y = py; y < py + patch; ++y)
        for (int x = px; x < px + patch; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[size_t(c)];
}

inline std::vector<LabeledImage> make_split(const MicroDatasetConfig& cfg, int per_class, Rng rng,
                                            const std::vector<ImageU8>* templates) {
    std::vector<LabeledImage> out;
    out.reserve(size_t(per_class) * 2);
    for (int i = 0; i < per_class * 2; ++i) {
        LabeledImage li;
        li.label = i % 2;
        if (templates) {
            const ImageU8& t = (*templates)[rng.uniform_int(templates->size())];
            li.image = (t.h == cfg.image_h && t.w == cfg.image_w) ? t : resize_nearest(t, cfg.image_h, cfg.image_w);
        } else {
            li.image = procedural_template(cfg.image_h, cfg.image_w, rng);
        }
        int py = rng.uniform_index(cfg.image_h - cfg.patch + 1);
        int px = rng.uniform_index(cfg.image_w - cfg.patch + 1);
        stamp_patch(li.image, py, px, cfg.patch, li.label == 0 ? cfg.class_a_color : cfg.class_b_color);
        out.push_back(std::move(li));
    }
    return out;
}

} // namespace detail

inline MicroDataset generate_micro_dataset(const MicroDatasetConfig& cfg) {
    if (cfg.image_h < 2 || cfg.image_w < 2 || cfg.patch < 1)
        throw Error("micro dataset: image must be at least 2x2 with a positive patch");
    if (cfg.patch > cfg.image_h || cfg.patch > cfg.image_w)
        throw Error("micro dataset: patch " + std::to_string(cfg.patch) + " larger than image");

    std::vector<ImageU8> templates;
    bool use_dir = !cfg.template_dir.empty();
    if (use_dir) {
        namespace fs = std::filesystem;
        if (!fs::is_directory(cfg.template_dir)) throw Error(cfg.template_dir + ": not a directory");
        std::vector<std::string> files;
        for (const auto& e : fs::directory_iterator(cfg.template_dir))
            if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path().string());
        std::sort(files.begin(), files.end());
        if (files.empty()) throw Error(cfg.template_dir + ": no .ppm templates");
        for (const auto& f : files) templates.push_back(read_ppm(f));
    }

    MicroDataset ds;
    ds.cfg = cfg;
    Rng root(cfg.seed);
    // disjoint streams per split; templates are not shared across splits in
    // procedural mode
    Rng train_rng = root.split(1);
    Rng test_rng = root.split(2);
    ds.train = detail::make_split(cfg, cfg.train_per_class, train_rng, use_dir ? &templates : nullptr);
    ds.test = detail::make_split(cfg, cfg.test_per_class, test_rng, use_dir ? &templates : nullptr);
    return ds;
}

// PPM directory + labels CSV (name,label per line)
inline void export_micro_dataset(const MicroDataset& ds, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir + "/train");
    fs::create_directories(dir + "/test");
    auto dump = [&](const std::vector<LabeledImage>& split, const std::string& sub) {
        std::string csv = "name,label\n";
        for (size_t i = 0; i < split.size(); ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "img_%05zu.ppm", i);
            write_ppm(dir + "/" + sub + "/" + name, split[i].image);
            csv += std::string(name) + "," + std::to_string(split[i].label) + "\n";
        }
        write_text_file(dir + "/" + sub + "/labels.csv", csv);
    };
    dump(ds.train, "train");
    dump(ds.test, "test");
}

// ---------------------------------------------------------------------------
// training: SGD + momentum, weight decay on conv/fc weights only, per-epoch
// cosine annealing from lr down to exactly 0 at the final epoch
// ---------------------------------------------------------------------------

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    int batch = 64;
    int epochs = 50;
    uint64_t seed = 1;
    bool hflip = true;
    Normalization norm{{0.5, 0.5, 0.5}, {0.25, 0.25, 0.25}};
};

struct EpochRecord {
    int epoch = 0;  // 1-indexed
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_acc = 0.0;
    double lr = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    TrainConfig cfg;
    double wall_seconds = 0.0;
    std::string final_weights_hash;  // fnv1a of the trained bundle
};

inline double cosine_lr(double lr0, int epoch_index, int total_epochs) {
    if (total_epochs <= 1) return lr0;
    return 0.5 * lr0 * (1.0 + std::cos(M_PI * double(epoch_index) / double(total_epochs - 1)));
}

// Velocity buffers plus the decay mask, kept inspectable so tests can assert
// which parameters experience weight decay.
struct SgdSlot {
    int node = -1;
    enum What { conv_weight, conv_bias, fc_weight, fc_bias, bn_gamma, bn_beta } what = conv_weight;
    bool decays = false;
    std::vector<double> velocity;
};

struct SgdState {
    std::vector<SgdSlot> slots;
};

namespace detail {

inline SgdState make_sgd_state(const NetGraph& g) {
    SgdState st;
    auto add = [&](int node, SgdSlot::What what, bool decays, size_t n) {
        st.slots.push_back(SgdSlot{node, what, decays, std::vector<double>(n, 0.0)});
    };
    for (size_t i = 0; i < g.nodes.size(); ++i) {
        const GraphNode& nd = g.nodes[i];
        if (nd.kind == OpKind::conv) {
            add(int(i), SgdSlot::conv_weight, true, nd.conv().weight.size());
            if (!nd.conv().bias.empty()) add(int(i), SgdSlot::conv_bias, false, nd.conv().bias.size());
        } else if (nd.kind == OpKind::fc) {
            add(int(i), SgdSlot::fc_weight, true, nd.fc().weight.size());
            if (!nd.fc().bias.empty()) add(int(i), SgdSlot::fc_bias, false, nd.fc().bias.size());
        } else if (nd.kind == OpKind::bn) {
            add(int(i), SgdSlot::bn_gamma, false, nd.bn().gamma.size());
            add(int(i), SgdSlot::bn_beta, false, nd.bn().beta.size());
        }
    }
    return st;
}

struct ParamView {
    double* value = nullptr;
    double* grad = nullptr;
    size_t n = 0;
};

inline ParamView view_of(NetGraph& g, SgdSlot& slot) {
    GraphNode& nd = g.nodes[size_t(slot.node)];
    switch (slot.what) {
        case SgdSlot::conv_weight: {
            auto& p = nd.conv();
            return {p.weight.data().data(), p.weight.grad().data(), p.weight.size()};
        }
        case SgdSlot::conv_bias: {
            auto& p = nd.conv();
            if (p.bias_grad.empty()) p.bias_grad.assign(p.bias.size(), 0.0);
            return {p.bias.data(), p.bias_grad.data(), p.bias.size()};
        }
        case SgdSlot::fc_weight: {
            auto& p = nd.fc();
            return {p.weight.data().data(), p.weight.grad().data(), p.weight.size()};
        }
        case SgdSlot::fc_bias: {
            auto& p = nd.fc();
            if (p.bias_grad.empty()) p.bias_grad.assign(p.bias.size(), 0.0);
            return {p.bias.data(), p.bias_grad.data(), p.bias.size()};
        }
        case SgdSlot::bn_gamma: {
            auto& p = nd.bn();
            if (p.gamma_grad.empty()) p.gamma_grad.assign(p.gamma.size(), 0.0);
            return {p.gamma.data(), p.gamma_grad.data(), p.gamma.size()};
        }
        case SgdSlot::bn_beta: {
            auto& p = nd.bn();
            if (p.beta_grad.empty()) p.beta_grad.assign(p.beta.size(), 0.0);
            return {p.beta.data(), p.beta_grad.data(), p.beta.size()};
        }
    }
    return {};
}

inline Tensor4 assemble_batch(const std::vector<LabeledImage>& split, const std::vector<int>& idx, size_t from,
                              size_t to, const Normalization& norm, const std::vector<char>* flip) {
    const ImageU8& first = split[size_t(idx[from])].image;
    Tensor4 batch(int(to - from), 3, first.h, first.w);
    for (size_t b = from; b < to; ++b) {
        const ImageU8& img = split[size_t(idx[b])].image;
        bool fl = flip && (*flip)[b];
        for (int c = 0; c < 3; ++c) {
            double m = norm.mean[size_t(c)], s = norm.std[size_t(c)];
            for (int y = 0; y < img.h; ++y)
                for (int x = 0; x < img.w; ++x) {
                    int sx = fl ? img.w - 1 - x : x;
                    batch.at(int(b - from), c, y, x) = (double(img.at(y, sx, c)) / 255.0 - m) / s;
                }
        }
    }
    return batch;
}

// mean softmax cross-entropy and its logit gradient; returns correct count
inline int softmax_ce(const Tensor4& logits, const std::vector<int>& labels, double& loss, Tensor4& dlogits) {
    const Shape4& s = logits.shape();
    int correct = 0;
    loss = 0.0;
    double invb = 1.0 / double(s.n);
    for (int n = 0; n < s.n; ++n) {
        double mx = logits.at(n, 0, 0, 0);
        int argmax = 0;
        for (int c = 1; c < s.c; ++c)
            if (logits.at(n, c, 0, 0) > mx) {
                mx = logits.at(n, c, 0, 0);
                argmax = c;
            }
        double sum = 0.0;
        for (int c = 0; c < s.c; ++c) sum += std::exp(logits.at(n, c, 0, 0) - mx);
        double lse = mx + std::log(sum);
        loss += (lse - logits.at(n, labels[size_t(n)], 0, 0)) * invb;
        if (argmax == labels[size_t(n)]) ++correct;
        for (int c = 0; c < s.c; ++c) {
            double p = std::exp(logits.at(n, c, 0, 0) - mx) / sum;
            dlogits.at(n, c, 0, 0) = (p - (c == labels[size_t(n)] ? 1.0 : 0.0)) * invb;
        }
    }
    return correct;
}

inline double evaluate(NetGraph& g, const std::vector<LabeledImage>& split, const Normalization& norm, int batch) {
    int correct = 0;
    std::vector<int> idx(split.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = int(i);
    for (size_t from = 0; from < split.size(); from += size_t(batch)) {
        size_t to = std::min(split.size(), from + size_t(batch));
        Tensor4 x = assemble_batch(split, idx, from, to, norm, nullptr);
        Activations acts = forward_eval(g, x);
        const Tensor4& logits = acts.act.back();
        for (int n = 0; n < int(to - from); ++n) {
            int argmax = 0;
            double mx = logits.at(n, 0, 0, 0);
            for (int c = 1; c < logits.shape().c; ++c)
                if (logits.at(n, c, 0, 0) > mx) {
                    mx = logits.at(n, c, 0, 0);
                    argmax = c;
                }
            if (argmax == split[size_t(idx[from + size_t(n)])].label) ++correct;
        }
    }
    return double(correct) / double(split.size());
}

} // namespace detail

// Trains in place (fresh init expected), deterministic per seed. Throws on
// non-finite loss with epoch/batch/lr in the message.
inline TrainLog train(NetGraph& g, const MicroDataset& ds, const TrainConfig& cfg, SgdState* state_out = nullptr) {
    if (!g.ends_in_logits()) throw Error("train: graph must end in a logit head");
    auto t0 = std::chrono::steady_clock::now();

    SgdState st = detail::make_sgd_state(g);
    TrainLog log;
    log.cfg = cfg;
    Rng rng(cfg.seed);

    std::vector<int> order(ds.train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        double lr = cosine_lr(cfg.lr, epoch, cfg.epochs);

        // Fisher-Yates with the run RNG; flips drawn per sample per epoch
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[size_t(rng.uniform_int(uint64_t(i)))]);
        std::vector<char> flip(order.size(), 0);
        if (cfg.hflip)
            for (auto& f : flip) f = rng.bernoulli(0.5) ? 1 : 0;

        double loss_sum = 0.0;
        int correct = 0;
        for (size_t from = 0; from < order.size(); from += size_t(cfg.batch)) {
            size_t to = std::min(order.size(), from + size_t(cfg.batch));
            Tensor4 x = detail::assemble_batch(ds.train, order, from, to, cfg.norm, &flip);
            std::vector<int> labels;
            labels.reserve(to - from);
            for (size_t b = from; b < to; ++b) labels.push_back(ds.train[size_t(order[b])].label);

            Activations acts = forward_train(g, x);
            const Tensor4& logits = acts.act.back();
            double loss = 0.0;
            Tensor4 dlogits(logits.shape());
            correct += detail::softmax_ce(logits, labels, loss, dlogits);
            if (!std::isfinite(loss))
                throw Error("train: non-finite (NaN/inf) loss at epoch " + std::to_string(epoch + 1) + ", batch " +
                            std::to_string(from / size_t(cfg.batch)) + ", lr " + std::to_string(lr));
            loss_sum += loss * double(to - from);

            for (auto& slot : st.slots) {
                detail::ParamView pv = detail::view_of(g, slot);
                std::fill(pv.grad, pv.grad + pv.n, 0.0);
            }
            backward_train(g, acts, g.output_node(), dlogits);

            for (auto& slot : st.slots) {
                detail::ParamView pv = detail::view_of(g, slot);
                double wd = slot.decays ? cfg.weight_decay : 0.0;
                for (size_t k = 0; k < pv.n; ++k) {
                    double grad = pv.grad[k] + wd * pv.value[k];
                    slot.velocity[k] = cfg.momentum * slot.velocity[k] + grad;
                    pv.value[k] -= lr * slot.velocity[k];
                }
            }
        }

        EpochRecord rec;
        rec.epoch = epoch + 1;
        rec.lr = lr;
        rec.train_loss = loss_sum / double(order.size());
        rec.train_acc = double(correct) / double(order.size());
        rec.test_acc = detail::evaluate(g, ds.test, cfg.norm, cfg.batch);
        log.epochs.push_back(rec);
    }

    log.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    {
        std::vector<uint8_t> bytes = serialize(weights_of(g));
        log.final_weights_hash = hex64(fnv1a(bytes.data(), bytes.size()));
    }
    if (state_out) *state_out = std::move(st);
    return log;
}

// First 1-indexed epoch whose test accuracy strictly exceeds the threshold;
// the epoch budget when it never does.
inline int epochs_to_threshold(const TrainLog& log, double threshold) {
    if (log.epochs.empty()) throw Error("epochs_to_threshold: empty log");
    for (const auto& r : log.epochs)
        if (r.test_acc > threshold) return r.epoch;
    return int(log.epochs.size());
}

inline std::string train_log_csv(const TrainLog& log) {
    std::string out = "epoch,train_loss,train_acc,test_acc,lr\n";
    char buf[160];
    for (const auto& r : log.epochs) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.train_loss, r.train_acc, r.test_acc,
                      r.lr);
        out += buf;
    }
    return out;
}

} // namespace rfscope

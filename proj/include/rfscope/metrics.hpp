#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "rfscope/erf.hpp"

namespace rfscope {

// ---------------------------------------------------------------------------
// axis-aligned 2D Gaussian fit
//
//   G(x, y) = A * exp(-((x-mux)^2/(2*sx^2) + (y-muy)^2/(2*sy^2))) + c
//
// x is the column index, y the row index. Damped least squares on the six
// parameters with an analytic Jacobian, seeded from moments. The field is
// rescaled to peak 1 for conditioning and the fit unscaled afterward.
// ---------------------------------------------------------------------------

struct Gauss2DFit {
    double amplitude = 0.0;
    double mu_x = 0.0, mu_y = 0.0;
    double sigma_x = 0.0, sigma_y = 0.0;
    double offset = 0.0;
    double r_squared = 0.0;
    int iterations = 0;
    bool converged = false;
};

namespace detail {

// 6x6 solve, partial pivoting; returns false when singular
inline bool solve6(std::array<double, 36>& a, std::array<double, 6>& b) {
    for (int col = 0; col < 6; ++col) {
        int piv = col;
        for (int r = col + 1; r < 6; ++r)
            if (std::fabs(a[size_t(r * 6 + col)]) > std::fabs(a[size_t(piv * 6 + col)])) piv = r;
        if (std::fabs(a[size_t(piv * 6 + col)]) < 1e-300) return false;
        if (piv != col) {
            for (int k = 0; k < 6; ++k) std::swap(a[size_t(col * 6 + k)], a[size_t(piv * 6 + k)]);
            std::swap(b[size_t(col)], b[size_t(piv)]);
        }
        double d = a[size_t(col * 6 + col)];
        for (int r = col + 1; r < 6; ++r) {
            double f = a[size_t(r * 6 + col)] / d;
            if (f == 0.0) continue;
            for (int k = col; k < 6; ++k) a[size_t(r * 6 + k)] -= f * a[size_t(col * 6 + k)];
            b[size_t(r)] -= f * b[size_t(col)];
        }
    }
    for (int r = 5; r >= 0; --r) {
        double acc = b[size_t(r)];
        for (int k = r + 1; k < 6; ++k) acc -= a[size_t(r * 6 + k)] * b[size_t(k)];
        b[size_t(r)] = acc / a[size_t(r * 6 + r)];
    }
    return true;
}

struct GaussParams {
    double a, mx, my, sx, sy, c;
};

inline double gauss_cost(const std::vector<double>& v, int h, int w, const GaussParams& p) {
    double cost = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double dx = (x - p.mx) / p.sx;
            double dy = (y - p.my) / p.sy;
            double m = p.a * std::exp(-0.5 * (dx * dx + dy * dy)) + p.c;
            double r = v[size_t(y) * size_t(w) + size_t(x)] - m;
            cost += r * r;
        }
    return cost;
}

} // namespace detail

inline Gauss2DFit fit_gaussian(const std::vector<double>& values, int h, int w) {
    if (int64_t(values.size()) != int64_t(h) * w) throw Error("fit_gaussian: field size does not match dimensions");
    if (values.size() < 6) throw Error("fit_gaussian: fewer than 6 samples");

    double vmin = values[0], vmax = values[0], vsum = 0.0;
    for (double v : values) {
        vmin = std::min(vmin, v);
        vmax = std::max(vmax, v);
        vsum += v;
    }
    if (vmax == vmin) throw Error("fit_gaussian: zero variance, fit undefined");
    {
        // six parameters need at least six distinct observations
        std::vector<double> probe(values.begin(), values.end());
        std::sort(probe.begin(), probe.end());
        size_t distinct = size_t(std::unique(probe.begin(), probe.end()) - probe.begin());
        if (distinct < 6)
            throw Error("fit_gaussian: only " + std::to_string(distinct) + " distinct values, need at least 6");
    }
    double vmean = vsum / double(values.size());
    double ss_tot = 0.0;
    for (double v : values) ss_tot += (v - vmean) * (v - vmean);

    // peak-1 rescale for conditioning
    double scale = std::max(std::fabs(vmin), std::fabs(vmax));
    std::vector<double> v(values.size());
    for (size_t i = 0; i < values.size(); ++i) v[i] = values[i] / scale;

    // moment initialization on the min-shifted field
    double base = vmin / scale;
    double wsum = 0.0, mx = 0.0, my = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double wt = v[size_t(y) * size_t(w) + size_t(x)] - base;
            wsum += wt;
            mx += wt * x;
            my += wt * y;
        }
    detail::GaussParams p;
    p.c = base;
    p.a = vmax / scale - base;
    if (wsum <= 0.0) {
        p.mx = (w - 1) / 2.0;
        p.my = (h - 1) / 2.0;
        p.sx = w / 4.0;
        p.sy = h / 4.0;
    } else {
        p.mx = mx / wsum;
        p.my = my / wsum;
        double vx = 0.0, vy = 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double wt = v[size_t(y) * size_t(w) + size_t(x)] - base;
                vx += wt * (x - p.mx) * (x - p.mx);
                vy += wt * (y - p.my) * (y - p.my);
            }
        p.sx = std::max(std::sqrt(vx / wsum), 0.5);
        p.sy = std::max(std::sqrt(vy / wsum), 0.5);
    }
    if (p.a <= 0.0) p.a = 1.0;

    Gauss2DFit fit;
    double lambda = 1e-3;
    double cost = detail::gauss_cost(v, h, w, p);
    int iter = 0;
    for (; iter < 200; ++iter) {
        // normal equations from the analytic Jacobian
        std::array<double, 36> jtj{};
        std::array<double, 6> jtr{};
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double dx = (x - p.mx) / p.sx;
                double dy = (y - p.my) / p.sy;
                double e = std::exp(-0.5 * (dx * dx + dy * dy));
                double m = p.a * e + p.c;
                double r = v[size_t(y) * size_t(w) + size_t(x)] - m;
                double j[6];
                j[0] = e;                          // dA
                j[1] = p.a * e * dx / p.sx;        // dmux
                j[2] = p.a * e * dy / p.sy;        // dmuy
                j[3] = p.a * e * dx * dx / p.sx;   // dsx
                j[4] = p.a * e * dy * dy / p.sy;   // dsy
                j[5] = 1.0;                        // dc
                for (int r1 = 0; r1 < 6; ++r1) {
                    for (int c1 = r1; c1 < 6; ++c1) jtj[size_t(r1 * 6 + c1)] += j[r1] * j[c1];
                    jtr[size_t(r1)] += j[r1] * r;
                }
            }
        for (int r1 = 0; r1 < 6; ++r1)
            for (int c1 = 0; c1 < r1; ++c1) jtj[size_t(r1 * 6 + c1)] = jtj[size_t(c1 * 6 + r1)];

        bool stepped = false;
        for (int attempt = 0; attempt < 12 && !stepped; ++attempt) {
            std::array<double, 36> a = jtj;
            std::array<double, 6> b = jtr;
            for (int d = 0; d < 6; ++d) a[size_t(d * 6 + d)] += lambda * std::max(jtj[size_t(d * 6 + d)], 1e-12);
            if (!detail::solve6(a, b)) {
                lambda *= 10.0;
                continue;
            }
            detail::GaussParams q{p.a + b[0], p.mx + b[1], p.my + b[2], p.sx + b[3], p.sy + b[4], p.c + b[5]};
            if (std::fabs(q.sx) < 1e-3) q.sx = q.sx < 0 ? -1e-3 : 1e-3;
            if (std::fabs(q.sy) < 1e-3) q.sy = q.sy < 0 ? -1e-3 : 1e-3;
            double qcost = detail::gauss_cost(v, h, w, q);
            if (qcost < cost) {
                double rel = (cost - qcost) / std::max(cost, 1e-300);
                p = q;
                cost = qcost;
                lambda = std::max(lambda * 0.1, 1e-12);
                stepped = true;
                if (rel < 1e-10) {
                    fit.converged = true;
                }
            } else {
                lambda *= 10.0;
            }
        }
        if (!stepped) {
            fit.converged = true;  // no descent direction left
            ++iter;
            break;
        }
        if (fit.converged) {
            ++iter;
            break;
        }
    }

    fit.iterations = iter;
    fit.amplitude = p.a * scale;
    fit.offset = p.c * scale;
    fit.mu_x = p.mx;
    fit.mu_y = p.my;
    fit.sigma_x = std::fabs(p.sx);
    fit.sigma_y = std::fabs(p.sy);

    double ss_res = detail::gauss_cost(values, h, w,
                                       detail::GaussParams{fit.amplitude, p.mx, p.my, p.sx, p.sy, fit.offset});
    fit.r_squared = 1.0 - ss_res / ss_tot;
    return fit;
}

inline Gauss2DFit fit_gaussian(const ERFMap& erf) { return fit_gaussian(erf.values, erf.h, erf.w); }

// ---------------------------------------------------------------------------
// imbalance indices
//
// L1 averages |forward first differences| along both axes, L2 |centered
// second differences|. Denominators are the difference counts: for a 224x224
// field these are 2*224*223 and 2*224*222.
// ---------------------------------------------------------------------------

struct ImbalanceIndices {
    double l1 = 0.0;
    double l2 = 0.0;
    bool normalized = false;
};

inline ImbalanceIndices imbalance(const std::vector<double>& values, int h, int w, bool normalize = false) {
    if (int64_t(values.size()) != int64_t(h) * w) throw Error("imbalance: field size does not match dimensions");
    if (h < 3 || w < 3) throw Error("imbalance: field must be at least 3x3");

    std::vector<double> v = values;
    if (normalize) {
        double sum = 0.0;
        for (double x : v) sum += x;
        if (sum == 0.0) throw Error("imbalance: cannot normalize zero-sum field");
        for (double& x : v) x /= sum;
    }

    auto at = [&](int y, int x) { return v[size_t(y) * size_t(w) + size_t(x)]; };

    double sum1 = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + 1 < w; ++x) sum1 += std::fabs(at(y, x + 1) - at(y, x));
    for (int y = 0; y + 1 < h; ++y)
        for (int x = 0; x < w; ++x) sum1 += std::fabs(at(y + 1, x) - at(y, x));

    double sum2 = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 1; x + 1 < w; ++x) sum2 += std::fabs(at(y, x + 1) - 2.0 * at(y, x) + at(y, x - 1));
    for (int y = 1; y + 1 < h; ++y)
        for (int x = 0; x < w; ++x) sum2 += std::fabs(at(y + 1, x) - 2.0 * at(y, x) + at(y - 1, x));

    ImbalanceIndices idx;
    idx.normalized = normalize;
    idx.l1 = sum1 / (double(h) * (w - 1) + double(w) * (h - 1));
    idx.l2 = sum2 / (double(h) * (w - 2) + double(w) * (h - 2));
    return idx;
}

inline ImbalanceIndices imbalance(const ERFMap& erf, bool normalize = false) {
    return imbalance(erf.values, erf.h, erf.w, normalize);
}

// ---------------------------------------------------------------------------
// fixed linear model (piecewise-linear output frozen at dataset means)
//
//   y(I)      = sum_xyz dy/dI_xyz * I_xyz + C          per image, exact for
//                                                      ReLU nets
//   ytilde(I) = sum_xy R_xy * (sum_z I_xyz) + E(C)     frozen attribution
// ---------------------------------------------------------------------------

struct FixedLinearModel {
    int h = 0;
    int w = 0;
    int channels = 0;
    std::vector<double> attribution;  // the frozen R_xy
    double intercept = 0.0;           // E(C)
    std::vector<double> per_image_c;  // C(n), kept for inspection
    std::string target_desc;

    double attribution_at(int y, int x) const { return attribution[size_t(y) * size_t(w) + size_t(x)]; }
};

struct PerturbationSpec {
    int x = 0;  // column
    int y = 0;  // row
    int z = 0;  // channel
    double epsilon = 0.0;
};

inline FixedLinearModel build_linear_model(const NetGraph& g, const ImageSource& source, const ERFMap& erf,
                                           const ErfTarget& target) {
    if (source.images.empty()) throw Error("build_linear_model: empty image source");
    std::string want = target.describe(g);
    if (!erf.target_desc.empty() && erf.target_desc != want)
        throw Error("build_linear_model: target mismatch, erf built for '" + erf.target_desc + "', requested '" +
                    want + "'");
    if (erf.h != g.input_shape.h || erf.w != g.input_shape.w)
        throw Error("build_linear_model: erf grid does not match graph input");

    detail::ResolvedTarget rt = detail::resolve_target(g, target);

    FixedLinearModel model;
    model.h = erf.h;
    model.w = erf.w;
    model.channels = g.input_shape.c;
    model.attribution = erf.values;
    model.target_desc = want;
    model.per_image_c.resize(source.images.size());

    for (size_t n = 0; n < source.images.size(); ++n) {
        const Tensor4& img = source.images[n];
        Activations acts = forward_eval(g, img);
        double y = scalar_reduce(acts.act[size_t(rt.node)], rt.st);
        Tensor4 seed = reduction_seed(acts.act[size_t(rt.node)].shape(), rt.st);
        Tensor4 grad = backward_input(g, acts, rt.node, seed).input_grad;
        double dot = 0.0;
        for (size_t i = 0; i < grad.size(); ++i) dot += grad[i] * img[i];
        model.per_image_c[n] = y - dot;
    }
    double acc = 0.0;
    for (double c : model.per_image_c) acc += c;
    model.intercept = acc / double(model.per_image_c.size());
    return model;
}

inline double predict_tilde(const FixedLinearModel& m, const Tensor4& image) {
    const Shape4& s = image.shape();
    if (s.n != 1 || s.h != m.h || s.w != m.w || s.c != m.channels)
        throw Error("predict_tilde: image shape " + s.str() + " does not match model");
    double acc = 0.0;
    for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
            double chan_sum = 0.0;
            for (int z = 0; z < m.channels; ++z) chan_sum += image.at(0, z, y, x);
            acc += m.attribution_at(y, x) * chan_sum;
        }
    return acc + m.intercept;
}

// A perturbation epsilon at (X, Y, Z) moves ytilde by epsilon * R_XY,
// independent of the image.
inline double perturbation_delta(const FixedLinearModel& m, const PerturbationSpec& p) {
    if (p.x < 0 || p.x >= m.w || p.y < 0 || p.y >= m.h || p.z < 0 || p.z >= m.channels)
        throw Error("perturbation_delta: position (" + std::to_string(p.x) + "," + std::to_string(p.y) + "," +
                    std::to_string(p.z) + ") out of bounds");
    return p.epsilon * m.attribution_at(p.y, p.x);
}

} // namespace rfscope

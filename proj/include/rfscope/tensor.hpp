#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rfscope/common.hpp"
#include "rfscope/rng.hpp"

namespace rfscope {

struct Shape4 {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    size_t count() const { return size_t(n) * size_t(c) * size_t(h) * size_t(w); }
    bool operator==(const Shape4&) const = default;

    std::string str() const {
        return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }
};

// Dense rank-4 array, row-major (n, c, h, w), double precision. `grad` is an
// optional same-shape field; empty means absent.
class Tensor4 {
public:
    Tensor4() = default;
    explicit Tensor4(Shape4 s, double fill = 0.0) : shape_(s), data_(s.count(), fill) {}
    Tensor4(int n, int c, int h, int w, double fill = 0.0) : Tensor4(Shape4{n, c, h, w}, fill) {}

    const Shape4& shape() const { return shape_; }
    size_t size() const { return data_.size(); }

    double& at(int n, int c, int y, int x) { return data_[idx(n, c, y, x)]; }
    const double& at(int n, int c, int y, int x) const { return data_[idx(n, c, y, x)]; }

    double& operator[](size_t i) { return data_[i]; }
    double operator[](size_t i) const { return data_[i]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool has_grad() const { return !grad_.empty(); }
    std::vector<double>& grad() {
        if (grad_.empty()) grad_.assign(data_.size(), 0.0);
        return grad_;
    }
    const std::vector<double>& grad() const { return grad_; }
    void zero_grad() {
        if (!grad_.empty()) grad_.assign(data_.size(), 0.0);
    }
    void drop_grad() { grad_.clear(); }

    void fill(double v) { data_.assign(data_.size(), v); }

    void fill_uniform(Rng& rng, double lo, double hi) {
        for (auto& v : data_) v = rng.uniform(lo, hi);
    }
    void fill_normal(Rng& rng, double mean, double stddev) {
        for (auto& v : data_) v = rng.normal(mean, stddev);
    }

    size_t idx(int n, int c, int y, int x) const {
        return ((size_t(n) * size_t(shape_.c) + size_t(c)) * size_t(shape_.h) + size_t(y)) * size_t(shape_.w) + size_t(x);
    }

private:
    Shape4 shape_;
    std::vector<double> data_;
    std::vector<double> grad_;
};

inline double max_abs_diff(const Tensor4& a, const Tensor4& b) {
    if (!(a.shape() == b.shape())) throw Error("max_abs_diff: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        if (d < 0) d = -d;
        if (d > m) m = d;
    }
    return m;
}

} // namespace rfscope

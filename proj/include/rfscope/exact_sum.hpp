#pragma once

#include <cmath>
#include <vector>

namespace rfscope {

// Error-free accumulation of doubles (Shewchuk expansion). The running sum is
// held as a nonoverlapping set of components whose exact real sum is the sum
// of everything added so far, in any order. `round()` collapses it to the
// nearest double. This makes dataset-order invariance and split/merge
// additivity of ERF accumulation bit-exact instead of merely close.
class ExactSum {
public:
    void add(double v) {
        size_t out = 0;
        for (size_t i = 0; i < comp_.size(); ++i) {
            double x = comp_[i];
            double s = v + x;
            double bv = s - v;
            double err = (v - (s - bv)) + (x - bv);
            if (err != 0.0) comp_[out++] = err;
            v = s;
        }
        comp_.resize(out);
        if (v != 0.0) comp_.push_back(v);
    }

    void merge(const ExactSum& other) {
        for (double c : other.comp_) add(c);
    }

    // components are nonoverlapping and increasing in magnitude, so summing
    // in order yields the correctly rounded total
    double round() const {
        double s = 0.0;
        for (double c : comp_) s += c;
        return s;
    }

private:
    std::vector<double> comp_;
};

} // namespace rfscope

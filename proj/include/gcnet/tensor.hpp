#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "gcnet/errors.hpp"

namespace gcnet {

// Dense row-major tensor of doubles. 64-bit storage throughout: the
// finite-difference tolerances in the test suite need the headroom.
struct Tensor {
    std::vector<int> dims;
    std::vector<double> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> d) : dims(std::move(d)), v(checked_numel(dims), 0.0) {}
    Tensor(std::initializer_list<int> d) : Tensor(std::vector<int>(d)) {}

    std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }

    double* data() { return v.data(); }
    const double* data() const { return v.data(); }

    int dim(int i) const { return dims[static_cast<std::size_t>(i)]; }
    int ndim() const { return static_cast<int>(dims.size()); }

    // {N,C,H,W} offset.
    std::int64_t at4(int n, int c, int h, int w) const {
        return ((static_cast<std::int64_t>(n) * dims[1] + c) * dims[2] + h) * dims[3] + w;
    }
    // {N,F} offset.
    std::int64_t at2(int n, int f) const { return static_cast<std::int64_t>(n) * dims[1] + f; }

    void fill(double x) {
        for (auto& e : v) e = x;
    }

    bool same_dims(const Tensor& o) const { return dims == o.dims; }

    static std::int64_t checked_numel(const std::vector<int>& d) {
        if (d.empty()) throw UsageError("tensor: empty dim list");
        std::int64_t n = 1;
        for (int s : d) {
            if (s <= 0) throw UsageError("tensor: nonpositive dim " + std::to_string(s));
            n *= s;
        }
        return n;
    }
};

std::string dims_str(const std::vector<int>& dims);
bool all_finite(const Tensor& t);

}  // namespace gcnet

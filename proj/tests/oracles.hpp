#pragma once

// Independent reference implementations used only by the test suite. These
// deliberately avoid calling the library code they are used to cross-check:
// membership tests use corner / normalized-distance forms instead of the
// level-set value, and derivatives come from symmetric difference quotients.

#include <cmath>
#include <functional>
#include <vector>

#include "gcnet/rng.hpp"
#include "gcnet/shape.hpp"

namespace oracle {

// Local frames match the library's documented conventions: rectangle kinds
// rotate (p,q) by [cos,-sin; sin,cos], the ellipse uses (p*c + q*s, p*s - q*c).
// The frame choice is part of the shape contract, not a derived fact.
inline bool point_in_shape(const gcnet::ShapeParams& s, double x, double y) {
    const double p = x - s.c_x;
    const double q = y - s.c_y;
    if (s.kind == gcnet::ShapeKind::RotatedEllipse) {
        const double c = std::cos(s.theta), sn = std::sin(s.theta);
        const double u = (p * c + q * sn) / s.a;
        const double v = (p * sn - q * c) / s.b;
        return u * u + v * v <= 1.0;
    }
    const double c = std::cos(s.theta), sn = std::sin(s.theta);
    const double u = p * c - q * sn;
    const double v = p * sn + q * c;
    return std::abs(u) <= 0.5 * s.a && std::abs(v) <= 0.5 * s.b;
}

inline double rel_err(double got, double want) {
    const double denom = std::max({std::abs(got), std::abs(want), 1e-6});
    return std::abs(got - want) / denom;
}

inline double central_diff(const std::function<double(double)>& f, double x0, double h) {
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

// Valid shape away from the parameter-range edges, so FD nudges stay valid.
inline gcnet::ShapeParams random_shape(gcnet::Rng& rng, gcnet::ShapeKind kind) {
    gcnet::ShapeParams s;
    s.kind = kind;
    s.c_x = rng.uniform(0.2, 0.8);
    s.c_y = rng.uniform(0.2, 0.8);
    s.a = rng.uniform(0.15, 0.6);
    s.b = rng.uniform(0.15, 0.6);
    s.theta = kind == gcnet::ShapeKind::Rectangle ? 0.0 : rng.uniform(-1.2, 1.2);
    return s;
}

inline std::vector<double> softmax_row(const std::vector<double>& z) {
    double mx = z[0];
    for (double v : z) mx = std::max(mx, v);
    double sum = 0.0;
    std::vector<double> p(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - mx);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return p;
}

}  // namespace oracle

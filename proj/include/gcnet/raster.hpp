#pragma once

#include "gcnet/exec.hpp"
#include "gcnet/grid.hpp"
#include "gcnet/shape.hpp"

namespace gcnet {

// Soft mask: heaviside_smooth(phi) sampled at pixel centers.
MaskGrid rasterize(const ShapeParams& s, const Smoothness& smooth, const GridSpec& grid,
                   Exec ex = Exec::Parallel);

// Binary mask: heaviside_exact(phi) at pixel centers.
MaskGrid rasterize_exact(const ShapeParams& s, const GridSpec& grid, Exec ex = Exec::Parallel);

// Per-pixel partials of the soft mask w.r.t. every shape coefficient and eps.
struct ShapeGrad {
    MaskGrid d_cx, d_cy, d_a, d_b, d_theta, d_eps;
};

ShapeGrad analytic_grads(const ShapeParams& s, const Smoothness& smooth, const GridSpec& grid,
                         Exec ex = Exec::Parallel);

}  // namespace gcnet

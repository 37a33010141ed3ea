#include "gcnet/raster.hpp"

namespace gcnet {

MaskGrid rasterize(const ShapeParams& s, const Smoothness& smooth, const GridSpec& grid, Exec ex) {
    MaskGrid m(grid);
    const double eps = smooth.epsilon;
    par_for(grid.h, ex, [&](std::int64_t i) {
        const double y = grid.pixel_y(static_cast<int>(i));
        double* row = &m.v[static_cast<std::size_t>(i) * grid.w];
        for (int j = 0; j < grid.w; ++j)
            row[j] = heaviside_smooth(phi(s, grid.pixel_x(j), y), eps);
    });
    return m;
}

MaskGrid rasterize_exact(const ShapeParams& s, const GridSpec& grid, Exec ex) {
    MaskGrid m(grid);
    par_for(grid.h, ex, [&](std::int64_t i) {
        const double y = grid.pixel_y(static_cast<int>(i));
        double* row = &m.v[static_cast<std::size_t>(i) * grid.w];
        for (int j = 0; j < grid.w; ++j)
            row[j] = heaviside_exact(phi(s, grid.pixel_x(j), y));
    });
    return m;
}

ShapeGrad analytic_grads(const ShapeParams& s, const Smoothness& smooth, const GridSpec& grid,
                         Exec ex) {
    ShapeGrad g{MaskGrid(grid), MaskGrid(grid), MaskGrid(grid),
                MaskGrid(grid), MaskGrid(grid), MaskGrid(grid)};
    const double eps = smooth.epsilon;
    par_for(grid.h, ex, [&](std::int64_t i) {
        const double y = grid.pixel_y(static_cast<int>(i));
        const std::size_t off = static_cast<std::size_t>(i) * grid.w;
        for (int j = 0; j < grid.w; ++j) {
            const double x = grid.pixel_x(j);
            const double ph = phi(s, x, y);
            const PhiGrad pg = phi_grad(s, x, y);
            const double dh = heaviside_smooth_dphi(ph, eps);
            g.d_cx.v[off + j] = dh * pg.c_x;
            g.d_cy.v[off + j] = dh * pg.c_y;
            g.d_a.v[off + j] = dh * pg.a;
            g.d_b.v[off + j] = dh * pg.b;
            g.d_theta.v[off + j] = dh * pg.theta;
            g.d_eps.v[off + j] = heaviside_smooth_deps(ph, eps);
        }
    });
    return g;
}

}  // namespace gcnet

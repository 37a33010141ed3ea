#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "gcnet/errors.hpp"
#include "gcnet/raster.hpp"
#include "gcnet/rng.hpp"
#include "oracles.hpp"

using namespace gcnet;

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

ShapeParams ellipse(double cx, double cy, double a, double b, double th = 0.0) {
    ShapeParams s;
    s.kind = ShapeKind::RotatedEllipse;
    s.c_x = cx;
    s.c_y = cy;
    s.a = a;
    s.b = b;
    s.theta = th;
    return s;
}

ShapeParams rect(double cx, double cy, double a, double b) {
    ShapeParams s;
    s.kind = ShapeKind::Rectangle;
    s.c_x = cx;
    s.c_y = cy;
    s.a = a;
    s.b = b;
    return s;
}

}  // namespace

TEST_CASE("phi at characteristic points") {
    CHECK(phi(ellipse(0.5, 0.5, 0.25, 0.25), 0.5, 0.5) == doctest::Approx(-1.0).epsilon(1e-15));
    // Rectangle boundary sits at |x - c_x| = a/2.
    CHECK(phi(rect(0.5, 0.5, 0.4, 0.2), 0.7, 0.5) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(phi(rect(0.5, 0.5, 0.4, 0.2), 0.69, 0.5) < 0.0);
    CHECK(phi(rect(0.5, 0.5, 0.4, 0.2), 0.71, 0.5) > 0.0);
}

TEST_CASE("rotated rectangle at theta 0 equals rectangle") {
    Rng rng(11);
    ShapeParams r = rect(0.45, 0.55, 0.38, 0.22);
    ShapeParams rr = r;
    rr.kind = ShapeKind::RotatedRectangle;
    for (int i = 0; i < 100; ++i) {
        const double x = rng.uniform(), y = rng.uniform();
        CHECK(phi(rr, x, y) == doctest::Approx(phi(r, x, y)).epsilon(1e-14));
    }
}

TEST_CASE("phi sign agrees with membership oracle") {
    for (ShapeKind kind :
         {ShapeKind::Rectangle, ShapeKind::RotatedRectangle, ShapeKind::RotatedEllipse}) {
        Rng rng(100 + static_cast<int>(kind));
        int interior_hits = 0;
        for (int i = 0; i < 1000; ++i) {
            const ShapeParams s = oracle::random_shape(rng, kind);
            const double x = rng.uniform(), y = rng.uniform();
            const double f = phi(s, x, y);
            if (std::abs(f) < 1e-9) continue;  // boundary: both answers acceptable
            CHECK((f < 0.0) == oracle::point_in_shape(s, x, y));
            if (f < 0.0) ++interior_hits;
        }
        CHECK(interior_hits > 50);  // the sample actually exercises both sides
    }
}

TEST_CASE("heaviside_exact") {
    CHECK(heaviside_exact(-0.5) == 1.0);
    CHECK(heaviside_exact(0.0) == 1.0);
    CHECK(heaviside_exact(0.1) == 0.0);
}

TEST_CASE("heaviside_smooth values and symmetry") {
    CHECK(heaviside_smooth(0.0, 1.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(heaviside_smooth(0.0, 1e-3) == doctest::Approx(0.5).epsilon(1e-15));
    // 0.5*(1 + (2/pi)*atan(10)) evaluated independently.
    CHECK(heaviside_smooth(-1.0, 0.1) == doctest::Approx(0.9682744825694465).epsilon(1e-12));

    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const double f = rng.uniform(-5.0, 5.0);
        const double e = rng.uniform(1e-3, 1.0);
        const double h = heaviside_smooth(f, e);
        CHECK(h >= 0.0);
        CHECK(h <= 1.0);
        CHECK(h + heaviside_smooth(-f, e) == doctest::Approx(1.0).epsilon(1e-15));
        CHECK(heaviside_smooth(f + 0.01, e) < h);  // strictly decreasing
    }

    double prev = 0.0;
    for (double e : {1.0, 0.1, 0.01}) {
        const double gap = std::abs(heaviside_smooth(-0.2, e) - 1.0);
        if (prev > 0.0) CHECK(gap < prev);
        prev = gap;
    }
}

TEST_CASE("heaviside_smooth derivatives match finite differences") {
    Rng rng(4);
    for (int i = 0; i < 100; ++i) {
        const double f = rng.uniform(-2.0, 2.0);
        const double e = rng.uniform(0.05, 1.0);
        const double dphi = oracle::central_diff([&](double t) { return heaviside_smooth(t, e); },
                                                 f, 1e-6);
        const double deps = oracle::central_diff([&](double t) { return heaviside_smooth(f, t); },
                                                 e, 1e-6);
        CHECK(oracle::rel_err(heaviside_smooth_dphi(f, e), dphi) < 1e-7);
        CHECK(oracle::rel_err(heaviside_smooth_deps(f, e), deps) < 1e-7);
    }
}

TEST_CASE("rasterize covers the unit square for a giant ellipse") {
    MaskGrid m = rasterize(ellipse(0.5, 0.5, 1.0, 1.0), Smoothness{0.1, false}, GridSpec(32, 32));
    for (double v : m.v) CHECK(v > 0.5);
}

TEST_CASE("rasterize mean approximates disk area") {
    MaskGrid m =
        rasterize(ellipse(0.5, 0.5, 0.25, 0.25), Smoothness{1e-3, false}, GridSpec(64, 64));
    CHECK(std::abs(m.mean() - kPi * 0.0625) < 0.01);
}

TEST_CASE("rasterize at tiny eps equals the exact mask away from the boundary") {
    Rng rng(5);
    for (ShapeKind kind :
         {ShapeKind::Rectangle, ShapeKind::RotatedRectangle, ShapeKind::RotatedEllipse}) {
        const ShapeParams s = oracle::random_shape(rng, kind);
        const GridSpec grid(48, 48);
        MaskGrid soft = rasterize(s, Smoothness{1e-6, false}, grid);
        MaskGrid hard = rasterize_exact(s, grid);
        for (int i = 0; i < grid.h; ++i)
            for (int j = 0; j < grid.w; ++j) {
                if (std::abs(phi(s, grid.pixel_x(j), grid.pixel_y(i))) <= 1e-3) continue;
                CHECK(std::abs(soft.at(i, j) - hard.at(i, j)) < 1e-3);
            }
    }
}

TEST_CASE("rasterize_exact matches the membership oracle pixelwise") {
    Rng rng(6);
    for (ShapeKind kind :
         {ShapeKind::Rectangle, ShapeKind::RotatedRectangle, ShapeKind::RotatedEllipse}) {
        for (int rep = 0; rep < 5; ++rep) {
            const ShapeParams s = oracle::random_shape(rng, kind);
            const GridSpec grid(40, 40);
            MaskGrid m = rasterize_exact(s, grid);
            for (int i = 0; i < grid.h; ++i)
                for (int j = 0; j < grid.w; ++j) {
                    const double want =
                        oracle::point_in_shape(s, grid.pixel_x(j), grid.pixel_y(i)) ? 1.0 : 0.0;
                    CHECK(m.at(i, j) == want);
                }
        }
    }
}

TEST_CASE("ellipse axis relabeling symmetry") {
    Rng rng(7);
    for (int rep = 0; rep < 10; ++rep) {
        ShapeParams s = oracle::random_shape(rng, ShapeKind::RotatedEllipse);
        s.theta = rng.uniform(-0.4, 0.4);  // keep theta +- pi/2 in range
        ShapeParams t = s;
        std::swap(t.a, t.b);
        t.theta = s.theta + kPi / 2.0;
        const GridSpec grid(32, 32);
        MaskGrid ms = rasterize(s, Smoothness{0.05, false}, grid);
        MaskGrid mt = rasterize(t, Smoothness{0.05, false}, grid);
        for (std::size_t k = 0; k < ms.v.size(); ++k)
            CHECK(std::abs(ms.v[k] - mt.v[k]) < 1e-12);
    }
}

TEST_CASE("phi_grad closed-form probe and rectangle flatness") {
    // Ellipse, theta 0, probe on the +x vertex: dphi/da = -2/a.
    ShapeParams e = ellipse(0.5, 0.5, 0.3, 0.2);
    PhiGrad g = phi_grad(e, 0.8, 0.5);
    CHECK(g.a == doctest::Approx(-2.0 / 0.3).epsilon(1e-12));
    CHECK(g.theta == doctest::Approx(0.0).epsilon(1e-12));

    // Rectangle: theta plane identically zero.
    ShapeParams r = rect(0.5, 0.5, 0.4, 0.3);
    ShapeGrad sg = analytic_grads(r, Smoothness{0.1, false}, GridSpec(16, 16));
    for (double v : sg.d_theta.v) CHECK(v == 0.0);
}

TEST_CASE("analytic_grads vanish deep inside") {
    ShapeParams r = rect(0.5, 0.5, 0.8, 0.8);
    const Smoothness sm{1e-3, false};
    const GridSpec grid(64, 64);
    ShapeGrad g = analytic_grads(r, sm, grid);
    const int i = 32, j = 32;  // center: |phi|/eps >> 50
    CHECK(std::abs(phi(r, grid.pixel_x(j), grid.pixel_y(i))) / sm.epsilon > 50.0);
    CHECK(std::abs(g.d_cx.at(i, j)) < 1e-12);
    CHECK(std::abs(g.d_cy.at(i, j)) < 1e-12);
    CHECK(std::abs(g.d_a.at(i, j)) < 1e-12);
    CHECK(std::abs(g.d_b.at(i, j)) < 1e-12);
    CHECK(std::abs(g.d_eps.at(i, j)) < 1e-12);
}

TEST_CASE("analytic_grads match finite differences on boundary-band pixels") {
    Rng rng(8);
    const GridSpec grid(64, 64);
    const Smoothness sm{0.1, false};
    const double h = 1e-5;
    for (ShapeKind kind :
         {ShapeKind::Rectangle, ShapeKind::RotatedRectangle, ShapeKind::RotatedEllipse}) {
        const ShapeParams s = oracle::random_shape(rng, kind);
        const ShapeGrad g = analytic_grads(s, sm, grid);

        struct Axis {
            double ShapeParams::*field;
            const MaskGrid ShapeGrad::*plane;
        };
        std::vector<Axis> axes = {{&ShapeParams::c_x, &ShapeGrad::d_cx},
                                  {&ShapeParams::c_y, &ShapeGrad::d_cy},
                                  {&ShapeParams::a, &ShapeGrad::d_a},
                                  {&ShapeParams::b, &ShapeGrad::d_b}};
        if (kind != ShapeKind::Rectangle) axes.push_back({&ShapeParams::theta, &ShapeGrad::d_theta});

        for (const Axis& ax : axes) {
            ShapeParams up = s, dn = s;
            up.*(ax.field) += h;
            dn.*(ax.field) -= h;
            MaskGrid mu = rasterize(up, sm, grid);
            MaskGrid md = rasterize(dn, sm, grid);
            double worst = 0.0;
            int probes = 0;
            for (int i = 0; i < grid.h; ++i)
                for (int j = 0; j < grid.w; ++j) {
                    const double x = grid.pixel_x(j), y = grid.pixel_y(i);
                    if (std::abs(phi(s, x, y)) / sm.epsilon >= 50.0) continue;
                    if (!phi_smooth_at(s, x, y, 1e-2)) continue;
                    const double fd = (mu.at(i, j) - md.at(i, j)) / (2.0 * h);
                    worst = std::max(worst, oracle::rel_err((g.*(ax.plane)).at(i, j), fd));
                    ++probes;
                }
            CHECK(probes > 30);
            CHECK(worst < 1e-4);
        }

        // Epsilon axis via rasterize at eps +- h.
        MaskGrid mu = rasterize(s, Smoothness{sm.epsilon + h, false}, grid);
        MaskGrid md = rasterize(s, Smoothness{sm.epsilon - h, false}, grid);
        double worst = 0.0;
        for (int i = 0; i < grid.h; ++i)
            for (int j = 0; j < grid.w; ++j) {
                const double x = grid.pixel_x(j), y = grid.pixel_y(i);
                if (std::abs(phi(s, x, y)) / sm.epsilon >= 50.0) continue;
                const double fd = (mu.at(i, j) - md.at(i, j)) / (2.0 * h);
                worst = std::max(worst, oracle::rel_err(g.d_eps.at(i, j), fd));
            }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("phi_smooth_at flags the rectangle diagonals") {
    ShapeParams r = rect(0.5, 0.5, 0.4, 0.4);
    // (0.6, 0.6) lies on the diagonal alpha == beta.
    CHECK_FALSE(phi_smooth_at(r, 0.6, 0.6, 1e-2));
    CHECK(phi_smooth_at(r, 0.7, 0.5, 1e-2));
    CHECK(phi_smooth_at(ellipse(0.5, 0.5, 0.2, 0.2), 0.6, 0.6, 1e-2));
}

TEST_CASE("induced_bbox closed forms") {
    Aabb r = induced_bbox(rect(0.5, 0.5, 0.4, 0.2));
    CHECK(r.x_min == doctest::Approx(0.3).epsilon(1e-14));
    CHECK(r.y_min == doctest::Approx(0.4).epsilon(1e-14));
    CHECK(r.x_max == doctest::Approx(0.7).epsilon(1e-14));
    CHECK(r.y_max == doctest::Approx(0.6).epsilon(1e-14));

    ShapeParams rr = rect(0.5, 0.5, 0.2, 0.2);
    rr.kind = ShapeKind::RotatedRectangle;
    rr.theta = kPi / 4.0;
    Aabb rb = induced_bbox(rr);
    CHECK(rb.width() == doctest::Approx(0.2 * std::sqrt(2.0)).epsilon(1e-12));

    Aabb eb = induced_bbox(ellipse(0.5, 0.5, 0.3, 0.15));
    CHECK(eb.width() == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(eb.height() == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("induced_bbox contains every interior pixel") {
    Rng rng(9);
    const GridSpec grid(128, 128);
    for (ShapeKind kind :
         {ShapeKind::Rectangle, ShapeKind::RotatedRectangle, ShapeKind::RotatedEllipse}) {
        for (int rep = 0; rep < 4; ++rep) {
            const ShapeParams s = oracle::random_shape(rng, kind);
            const Aabb box = induced_bbox(s);
            MaskGrid m = rasterize_exact(s, grid);
            for (int i = 0; i < grid.h; ++i)
                for (int j = 0; j < grid.w; ++j) {
                    if (m.at(i, j) != 1.0) continue;
                    const double x = grid.pixel_x(j), y = grid.pixel_y(i);
                    CHECK(x >= box.x_min);
                    CHECK(x <= box.x_max);
                    CHECK(y >= box.y_min);
                    CHECK(y <= box.y_max);
                }
        }
    }
}

TEST_CASE("bbox clipped to the unit square") {
    Aabb b = induced_bbox(ellipse(0.05, 0.95, 0.3, 0.3));
    CHECK(b.x_min == 0.0);
    CHECK(b.y_max == 1.0);
    CHECK(b.x_max <= 1.0);
    CHECK(b.y_min >= 0.0);
}

TEST_CASE("validate rejects out-of-range parameters") {
    ShapeParams s = ellipse(0.5, 0.5, 0.25, 0.25);
    CHECK_NOTHROW(s.validate());
    s.c_x = 1.2;
    CHECK_THROWS_AS(s.validate(), UsageError);
    s = ellipse(0.5, 0.5, 0.04, 0.25);  // a <= a_min
    CHECK_THROWS_AS(s.validate(), UsageError);
    s = ellipse(0.5, 0.5, 0.25, 0.25, 1.6);  // |theta| >= pi/2
    CHECK_THROWS_AS(s.validate(), UsageError);
    s = rect(0.5, 0.5, 0.25, 0.25);
    s.theta = 0.1;
    CHECK_THROWS_AS(s.validate(), UsageError);
}

TEST_CASE("grid coordinate convention") {
    GridSpec g(4, 8);
    CHECK(g.pixel_x(0) == doctest::Approx(0.5 / 8.0));
    CHECK(g.pixel_y(3) == doctest::Approx(3.5 / 4.0));
    CHECK(g.pixels() == 32);
    CHECK_THROWS_AS(GridSpec(0, 4), UsageError);
}

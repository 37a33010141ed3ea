#pragma once

#include <string>

namespace gcnet {

enum class ShapeKind { Rectangle, RotatedRectangle, RotatedEllipse };

const char* shape_kind_name(ShapeKind k);
ShapeKind shape_kind_from_name(const std::string& name);

// Extent semantics differ by kind on purpose: a,b are semi-axes for the
// ellipse but full width/height for both rectangle kinds (the rectangle
// implicit function puts the boundary at |x-c_x| = a/2). induced_bbox is the
// one place that reconciles the two conventions.
inline constexpr double kAMin = 0.05;

struct ShapeParams {
    ShapeKind kind = ShapeKind::RotatedEllipse;
    double c_x = 0.5;
    double c_y = 0.5;
    double a = 0.25;
    double b = 0.25;
    double theta = 0.0;

    // Throws UsageError when outside the valid ranges (Rectangle must carry
    // theta == 0). phi() and friends do not revalidate; FD probes may nudge
    // parameters slightly outside.
    void validate() const;
};

// Level-set value: negative strictly inside, zero on the boundary, positive
// outside. Rectangle ignores theta entirely.
double phi(const ShapeParams& s, double x, double y);

struct PhiGrad {
    double c_x = 0.0, c_y = 0.0, a = 0.0, b = 0.0, theta = 0.0;
};

// Partials of phi at (x,y). At the rectangle's |alpha|=|beta| tie points the
// sub-gradient of |t| at t=0 is taken as 0.
PhiGrad phi_grad(const ShapeParams& s, double x, double y);

// True when (x,y) sits at least `margin` (in normalized local coordinates)
// away from the rectangle kinds' non-smooth set (the diagonals of the box).
// A symmetric difference quotient straddling that set does not estimate the
// one-sided derivative, so FD comparisons skip such pixels. Ellipse: always
// true.
bool phi_smooth_at(const ShapeParams& s, double x, double y, double margin);

inline double heaviside_exact(double phi_val) { return phi_val <= 0.0 ? 1.0 : 0.0; }

// Arctan-smoothed step, oriented to match heaviside_exact: decreasing in phi,
// 1/2 at the boundary, -> 1 inside and 0 outside as eps -> 0.
double heaviside_smooth(double phi_val, double eps);

// d/d(phi) of heaviside_smooth.
double heaviside_smooth_dphi(double phi_val, double eps);
// d/d(eps) of heaviside_smooth.
double heaviside_smooth_deps(double phi_val, double eps);

struct Smoothness {
    double epsilon = 0.1;
    bool learnable = false;
};

struct Aabb {
    double x_min = 0.0, y_min = 0.0, x_max = 0.0, y_max = 0.0;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
};

// Tight axis-aligned box around the shape, clipped to the unit square.
Aabb induced_bbox(const ShapeParams& s);

}  // namespace gcnet

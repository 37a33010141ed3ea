#include "gcnet/shape.hpp"

#include <algorithm>
#include <cmath>

#include "gcnet/errors.hpp"

namespace gcnet {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;

double sgn0(double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0); }

}  // namespace

const char* shape_kind_name(ShapeKind k) {
    switch (k) {
        case ShapeKind::Rectangle: return "rectangle";
        case ShapeKind::RotatedRectangle: return "rotated_rectangle";
        case ShapeKind::RotatedEllipse: return "rotated_ellipse";
    }
    return "?";
}

ShapeKind shape_kind_from_name(const std::string& name) {
    if (name == "rectangle") return ShapeKind::Rectangle;
    if (name == "rotated_rectangle") return ShapeKind::RotatedRectangle;
    if (name == "rotated_ellipse") return ShapeKind::RotatedEllipse;
    throw ParseError("unknown shape kind '" + name + "'");
}

void ShapeParams::validate() const {
    if (!(c_x >= 0.0 && c_x <= 1.0 && c_y >= 0.0 && c_y <= 1.0))
        throw UsageError("ShapeParams: center outside [0,1]");
    if (!(a > kAMin && a <= 1.0 && b > kAMin && b <= 1.0))
        throw UsageError("ShapeParams: extents outside (a_min, 1]");
    if (!(std::abs(theta) < kPi / 2.0)) throw UsageError("ShapeParams: |theta| must be < pi/2");
    if (kind == ShapeKind::Rectangle && theta != 0.0)
        throw UsageError("ShapeParams: Rectangle requires theta == 0");
}

double phi(const ShapeParams& s, double x, double y) {
    const double p = x - s.c_x;
    const double q = y - s.c_y;
    switch (s.kind) {
        case ShapeKind::Rectangle: {
            const double al = p / s.a;
            const double be = q / s.b;
            return std::abs(al + be) + std::abs(al - be) - 1.0;
        }
        case ShapeKind::RotatedRectangle: {
            const double c = std::cos(s.theta), sn = std::sin(s.theta);
            const double al = (p * c - q * sn) / s.a;
            const double be = (p * sn + q * c) / s.b;
            return std::abs(al + be) + std::abs(al - be) - 1.0;
        }
        case ShapeKind::RotatedEllipse: {
            const double c = std::cos(s.theta), sn = std::sin(s.theta);
            const double u = p * c + q * sn;
            const double v = p * sn - q * c;
            return (u * u) / (s.a * s.a) + (v * v) / (s.b * s.b) - 1.0;
        }
    }
    return 0.0;
}

PhiGrad phi_grad(const ShapeParams& s, double x, double y) {
    PhiGrad g;
    const double p = x - s.c_x;
    const double q = y - s.c_y;
    switch (s.kind) {
        case ShapeKind::Rectangle: {
            const double al = p / s.a;
            const double be = q / s.b;
            const double d_al = sgn0(al + be) + sgn0(al - be);
            const double d_be = sgn0(al + be) - sgn0(al - be);
            g.c_x = d_al * (-1.0 / s.a);
            g.c_y = d_be * (-1.0 / s.b);
            g.a = d_al * (-al / s.a);
            g.b = d_be * (-be / s.b);
            g.theta = 0.0;
            break;
        }
        case ShapeKind::RotatedRectangle: {
            const double c = std::cos(s.theta), sn = std::sin(s.theta);
            const double al = (p * c - q * sn) / s.a;
            const double be = (p * sn + q * c) / s.b;
            const double d_al = sgn0(al + be) + sgn0(al - be);
            const double d_be = sgn0(al + be) - sgn0(al - be);
            g.c_x = d_al * (-c / s.a) + d_be * (-sn / s.b);
            g.c_y = d_al * (sn / s.a) + d_be * (-c / s.b);
            g.a = d_al * (-al / s.a);
            g.b = d_be * (-be / s.b);
            g.theta = d_al * (-(be * s.b) / s.a) + d_be * ((al * s.a) / s.b);
            break;
        }
        case ShapeKind::RotatedEllipse: {
            const double c = std::cos(s.theta), sn = std::sin(s.theta);
            const double u = p * c + q * sn;
            const double v = p * sn - q * c;
            const double du = 2.0 * u / (s.a * s.a);
            const double dv = 2.0 * v / (s.b * s.b);
            g.c_x = du * (-c) + dv * (-sn);
            g.c_y = du * (-sn) + dv * c;
            g.a = -2.0 * u * u / (s.a * s.a * s.a);
            g.b = -2.0 * v * v / (s.b * s.b * s.b);
            // du/dtheta = -v, dv/dtheta = u.
            g.theta = du * (-v) + dv * u;
            break;
        }
    }
    return g;
}

bool phi_smooth_at(const ShapeParams& s, double x, double y, double margin) {
    if (s.kind == ShapeKind::RotatedEllipse) return true;
    const double p = x - s.c_x;
    const double q = y - s.c_y;
    double al, be;
    if (s.kind == ShapeKind::Rectangle) {
        al = p / s.a;
        be = q / s.b;
    } else {
        const double c = std::cos(s.theta), sn = std::sin(s.theta);
        al = (p * c - q * sn) / s.a;
        be = (p * sn + q * c) / s.b;
    }
    return std::abs(al + be) > margin && std::abs(al - be) > margin;
}

double heaviside_smooth(double phi_val, double eps) {
    return 0.5 * (1.0 - (2.0 / kPi) * std::atan(phi_val / eps));
}

double heaviside_smooth_dphi(double phi_val, double eps) {
    return -(1.0 / kPi) * eps / (eps * eps + phi_val * phi_val);
}

double heaviside_smooth_deps(double phi_val, double eps) {
    return (1.0 / kPi) * phi_val / (eps * eps + phi_val * phi_val);
}

Aabb induced_bbox(const ShapeParams& s) {
    double hx = 0.0, hy = 0.0;
    const double c = std::cos(s.theta), sn = std::sin(s.theta);
    switch (s.kind) {
        case ShapeKind::Rectangle:
            hx = 0.5 * s.a;
            hy = 0.5 * s.b;
            break;
        case ShapeKind::RotatedRectangle:
            hx = 0.5 * s.a * std::abs(c) + 0.5 * s.b * std::abs(sn);
            hy = 0.5 * s.a * std::abs(sn) + 0.5 * s.b * std::abs(c);
            break;
        case ShapeKind::RotatedEllipse:
            hx = std::sqrt(s.a * s.a * c * c + s.b * s.b * sn * sn);
            hy = std::sqrt(s.a * s.a * sn * sn + s.b * s.b * c * c);
            break;
    }
    Aabb box;
    box.x_min = std::max(0.0, s.c_x - hx);
    box.y_min = std::max(0.0, s.c_y - hy);
    box.x_max = std::min(1.0, s.c_x + hx);
    box.y_max = std::min(1.0, s.c_y + hy);
    return box;
}

}  // namespace gcnet

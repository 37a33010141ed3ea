#include "gcnet/resize.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "gcnet/errors.hpp"

namespace gcnet {

namespace {

struct Taps {
    int lo = 0;
    int hi = 0;
    double w_hi = 0.0;  // weight of hi tap; lo gets 1 - w_hi
};

// Tap table for one output axis of length n_out against a source axis of
// length n_in.
std::vector<Taps> axis_taps(int n_in, int n_out) {
    std::vector<Taps> t(static_cast<std::size_t>(n_out));
    const double scale = static_cast<double>(n_in) / n_out;
    for (int o = 0; o < n_out; ++o) {
        double s = (o + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(n_in - 1));
        const int lo = static_cast<int>(std::floor(s));
        t[o].lo = lo;
        t[o].hi = std::min(lo + 1, n_in - 1);
        t[o].w_hi = s - lo;
    }
    return t;
}

}  // namespace

MaskGrid bilinear_resize(const MaskGrid& src, int oh, int ow) {
    if (src.h < 1 || src.w < 1 || oh < 1 || ow < 1) throw UsageError("bilinear_resize: empty grid");
    if (src.h == oh && src.w == ow) return src;
    const auto ty = axis_taps(src.h, oh);
    const auto tx = axis_taps(src.w, ow);
    MaskGrid out(oh, ow);
    for (int i = 0; i < oh; ++i) {
        const double* r0 = src.v.data() + static_cast<std::size_t>(ty[i].lo) * src.w;
        const double* r1 = src.v.data() + static_cast<std::size_t>(ty[i].hi) * src.w;
        const double wy = ty[i].w_hi;
        double* orow = out.v.data() + static_cast<std::size_t>(i) * ow;
        for (int j = 0; j < ow; ++j) {
            const double wx = tx[j].w_hi;
            const double top = r0[tx[j].lo] * (1.0 - wx) + r0[tx[j].hi] * wx;
            const double bot = r1[tx[j].lo] * (1.0 - wx) + r1[tx[j].hi] * wx;
            orow[j] = top * (1.0 - wy) + bot * wy;
        }
    }
    return out;
}

MaskGrid bilinear_resize_backward(const MaskGrid& upstream, int h, int w) {
    if (h < 1 || w < 1) throw UsageError("bilinear_resize_backward: empty grid");
    if (upstream.h == h && upstream.w == w) return upstream;
    const auto ty = axis_taps(h, upstream.h);
    const auto tx = axis_taps(w, upstream.w);
    MaskGrid g(h, w);
    for (int i = 0; i < upstream.h; ++i) {
        double* r0 = g.v.data() + static_cast<std::size_t>(ty[i].lo) * w;
        double* r1 = g.v.data() + static_cast<std::size_t>(ty[i].hi) * w;
        const double wy = ty[i].w_hi;
        const double* urow = upstream.v.data() + static_cast<std::size_t>(i) * upstream.w;
        for (int j = 0; j < upstream.w; ++j) {
            const double u = urow[j];
            const double wx = tx[j].w_hi;
            r0[tx[j].lo] += u * (1.0 - wy) * (1.0 - wx);
            r0[tx[j].hi] += u * (1.0 - wy) * wx;
            r1[tx[j].lo] += u * wy * (1.0 - wx);
            r1[tx[j].hi] += u * wy * wx;
        }
    }
    return g;
}

}  // namespace gcnet

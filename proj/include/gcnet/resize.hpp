#pragma once

#include "gcnet/grid.hpp"

namespace gcnet {

// Bilinear resample with half-pixel centers: output pixel (i,j) reads the
// source at ((i+0.5)*h/oh - 0.5, (j+0.5)*w/ow - 0.5), taps clamped to the
// border. Linear in the input, so the backward pass is the exact transpose.
MaskGrid bilinear_resize(const MaskGrid& src, int oh, int ow);

// Transpose of bilinear_resize: scatters an upstream gradient over the
// (oh x ow) output back onto a (h x w) source grid.
MaskGrid bilinear_resize_backward(const MaskGrid& upstream, int h, int w);

}  // namespace gcnet

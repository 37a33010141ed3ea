#include "gcnet/net.hpp"

#include <algorithm>
#include <cmath>

#include "gcnet/rng.hpp"

namespace gcnet {

namespace {

// ---- kernels ----------------------------------------------------------
// All kernels are batched over {N,...} tensors and parallelize over
// independent output slices only, so Serial and Parallel runs are
// bit-identical. Gradient kernels accumulate (+=).

void conv3x3_fwd(int N, int IC, int H, int W, int OC, const double* __restrict__ in, const double* __restrict__ w,
                 const double* __restrict__ b, double* __restrict__ out, Exec ex) {
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    par_for(static_cast<std::int64_t>(N) * OC, ex, [&](std::int64_t idx) {
        const int n = static_cast<int>(idx / OC);
        const int oc = static_cast<int>(idx % OC);
        double* op = out + (static_cast<std::int64_t>(n) * OC + oc) * plane;
        std::fill(op, op + plane, b[oc]);
        for (int ic = 0; ic < IC; ++ic) {
            const double* ip = in + (static_cast<std::int64_t>(n) * IC + ic) * plane;
            const double* wp = w + (static_cast<std::int64_t>(oc) * IC + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int oy = 0; oy < H; ++oy) {
                    const int iy = oy + ky - 1;
                    if (iy < 0 || iy >= H) continue;
                    const double* irow = ip + static_cast<std::int64_t>(iy) * W;
                    double* orow = op + static_cast<std::int64_t>(oy) * W;
                    for (int kx = 0; kx < 3; ++kx) {
                        const double wv = wp[ky * 3 + kx];
                        const int shift = kx - 1;
                        const int ox0 = shift < 0 ? 1 : 0;
                        const int ox1 = shift > 0 ? W - 1 : W;
                        const double* src = irow + ox0 + shift;
                        double* dst = orow + ox0;
                        const int len = ox1 - ox0;
                        #pragma omp simd
                        for (int t = 0; t < len; ++t) dst[t] += wv * src[t];
                    }
                }
            }
        }
    });
}

void conv3x3_bwd_data(int N, int IC, int H, int W, int OC, const double* __restrict__ go, const double* __restrict__ w,
                      double* __restrict__ gi, Exec ex) {
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    par_for(static_cast<std::int64_t>(N) * IC, ex, [&](std::int64_t idx) {
        const int n = static_cast<int>(idx / IC);
        const int ic = static_cast<int>(idx % IC);
        double* gp = gi + (static_cast<std::int64_t>(n) * IC + ic) * plane;
        std::fill(gp, gp + plane, 0.0);
        for (int oc = 0; oc < OC; ++oc) {
            const double* gop = go + (static_cast<std::int64_t>(n) * OC + oc) * plane;
            const double* wp = w + (static_cast<std::int64_t>(oc) * IC + ic) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                for (int iy = 0; iy < H; ++iy) {
                    const int oy = iy - (ky - 1);
                    if (oy < 0 || oy >= H) continue;
                    const double* grow = gop + static_cast<std::int64_t>(oy) * W;
                    double* drow = gp + static_cast<std::int64_t>(iy) * W;
                    for (int kx = 0; kx < 3; ++kx) {
                        const double wv = wp[ky * 3 + kx];
                        const int shift = kx - 1;
                        const int ix0 = shift > 0 ? shift : 0;
                        const int ix1 = shift < 0 ? W + shift : W;
                        double* dst = drow + ix0;
                        const double* src = grow + ix0 - shift;
                        const int len = ix1 - ix0;
                        #pragma omp simd
                        for (int t = 0; t < len; ++t) dst[t] += wv * src[t];
                    }
                }
            }
        }
    });
}

void conv3x3_bwd_param(int N, int IC, int H, int W, int OC, const double* __restrict__ in, const double* __restrict__ go,
                       double* __restrict__ gw, double* __restrict__ gb, Exec ex) {
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    par_for(OC, ex, [&](std::int64_t occ) {
        const int oc = static_cast<int>(occ);
        double bacc = 0.0;
        for (int n = 0; n < N; ++n) {
            const double* gop = go + (static_cast<std::int64_t>(n) * OC + oc) * plane;
            #pragma omp simd reduction(+ : bacc)
            for (std::int64_t t = 0; t < plane; ++t) bacc += gop[t];
        }
        gb[oc] += bacc;
        for (int ic = 0; ic < IC; ++ic) {
            for (int ky = 0; ky < 3; ++ky) {
                for (int kx = 0; kx < 3; ++kx) {
                    const int shift = kx - 1;
                    const int ox0 = shift < 0 ? 1 : 0;
                    const int ox1 = shift > 0 ? W - 1 : W;
                    double acc = 0.0;
                    for (int n = 0; n < N; ++n) {
                        const double* gop = go + (static_cast<std::int64_t>(n) * OC + oc) * plane;
                        const double* ip = in + (static_cast<std::int64_t>(n) * IC + ic) * plane;
                        for (int oy = 0; oy < H; ++oy) {
                            const int iy = oy + ky - 1;
                            if (iy < 0 || iy >= H) continue;
                            const double* grow = gop + static_cast<std::int64_t>(oy) * W + ox0;
                            const double* irow = ip + static_cast<std::int64_t>(iy) * W + ox0 + shift;
                            const int len = ox1 - ox0;
                            #pragma omp simd reduction(+ : acc)
                            for (int t = 0; t < len; ++t) acc += grow[t] * irow[t];
                        }
                    }
                    gw[((static_cast<std::int64_t>(oc) * IC + ic) * 3 + ky) * 3 + kx] += acc;
                }
            }
        }
    });
}

void dense_fwd(int N, int F, int O, const double* __restrict__ in, const double* __restrict__ w, const double* __restrict__ b,
               double* __restrict__ out, Exec ex) {
    par_for(static_cast<std::int64_t>(N) * O, ex, [&](std::int64_t idx) {
        const int n = static_cast<int>(idx / O);
        const int o = static_cast<int>(idx % O);
        const double* ir = in + static_cast<std::int64_t>(n) * F;
        const double* wr = w + static_cast<std::int64_t>(o) * F;
        double acc = b[o];
        #pragma omp simd reduction(+ : acc)
        for (int f = 0; f < F; ++f) acc += ir[f] * wr[f];
        out[idx] = acc;
    });
}

void dense_bwd_data(int N, int F, int O, const double* __restrict__ go, const double* __restrict__ w, double* __restrict__ gi, Exec ex) {
    par_for(N, ex, [&](std::int64_t n) {
        double* gr = gi + n * F;
        std::fill(gr, gr + F, 0.0);
        for (int o = 0; o < O; ++o) {
            const double gv = go[n * O + o];
            const double* wr = w + static_cast<std::int64_t>(o) * F;
            #pragma omp simd
            for (int f = 0; f < F; ++f) gr[f] += gv * wr[f];
        }
    });
}

void dense_bwd_param(int N, int F, int O, const double* __restrict__ in, const double* __restrict__ go, double* __restrict__ gw,
                     double* __restrict__ gb, Exec ex) {
    par_for(O, ex, [&](std::int64_t o) {
        double bacc = 0.0;
        double* wr = gw + o * F;
        for (int n = 0; n < N; ++n) {
            const double gv = go[static_cast<std::int64_t>(n) * O + o];
            bacc += gv;
            const double* ir = in + static_cast<std::int64_t>(n) * F;
            #pragma omp simd
            for (int f = 0; f < F; ++f) wr[f] += gv * ir[f];
        }
        gb[o] += bacc;
    });
}

void maxpool_fwd(int N, int C, int H, int W, const double* __restrict__ in, double* __restrict__ out, std::uint8_t* __restrict__ codes,
                 Exec ex) {
    const int OH = H / 2, OW = W / 2;
    const std::int64_t iplane = static_cast<std::int64_t>(H) * W;
    const std::int64_t oplane = static_cast<std::int64_t>(OH) * OW;
    par_for(static_cast<std::int64_t>(N) * C, ex, [&](std::int64_t pc) {
        const double* ip = in + pc * iplane;
        double* op = out + pc * oplane;
        std::uint8_t* cp = codes + pc * oplane;
        for (int oy = 0; oy < OH; ++oy) {
            for (int ox = 0; ox < OW; ++ox) {
                // Ties keep the first maximum in scan order: deterministic.
                double best = ip[static_cast<std::int64_t>(2 * oy) * W + 2 * ox];
                std::uint8_t code = 0;
                for (int k = 1; k < 4; ++k) {
                    const double v =
                        ip[static_cast<std::int64_t>(2 * oy + k / 2) * W + 2 * ox + k % 2];
                    if (v > best) {
                        best = v;
                        code = static_cast<std::uint8_t>(k);
                    }
                }
                op[static_cast<std::int64_t>(oy) * OW + ox] = best;
                cp[static_cast<std::int64_t>(oy) * OW + ox] = code;
            }
        }
    });
}

void maxpool_bwd(int N, int C, int H, int W, const double* __restrict__ go, const std::uint8_t* __restrict__ codes,
                 double* __restrict__ gi, Exec ex) {
    const int OH = H / 2, OW = W / 2;
    const std::int64_t iplane = static_cast<std::int64_t>(H) * W;
    const std::int64_t oplane = static_cast<std::int64_t>(OH) * OW;
    par_for(static_cast<std::int64_t>(N) * C, ex, [&](std::int64_t pc) {
        double* gp = gi + pc * iplane;
        std::fill(gp, gp + iplane, 0.0);
        const double* gop = go + pc * oplane;
        const std::uint8_t* cp = codes + pc * oplane;
        for (int oy = 0; oy < OH; ++oy) {
            for (int ox = 0; ox < OW; ++ox) {
                const std::uint8_t k = cp[static_cast<std::int64_t>(oy) * OW + ox];
                gp[static_cast<std::int64_t>(2 * oy + k / 2) * W + 2 * ox + k % 2] +=
                    gop[static_cast<std::int64_t>(oy) * OW + ox];
            }
        }
    });
}

void gap_fwd(int N, int C, int H, int W, const double* __restrict__ in, double* __restrict__ out, Exec ex) {
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    par_for(static_cast<std::int64_t>(N) * C, ex, [&](std::int64_t pc) {
        const double* ip = in + pc * plane;
        double acc = 0.0;
        #pragma omp simd reduction(+ : acc)
        for (std::int64_t t = 0; t < plane; ++t) acc += ip[t];
        out[pc] = acc / static_cast<double>(plane);
    });
}

void gap_bwd(int N, int C, int H, int W, const double* __restrict__ go, double* __restrict__ gi, Exec ex) {
    const std::int64_t plane = static_cast<std::int64_t>(H) * W;
    par_for(static_cast<std::int64_t>(N) * C, ex, [&](std::int64_t pc) {
        const double gv = go[pc] / static_cast<double>(plane);
        double* gp = gi + pc * plane;
        std::fill(gp, gp + plane, gv);
    });
}

// The stride-2 transpose-conv kernels work on parity-split rows so every
// inner loop reads and writes contiguously. Output column ox=2t gets taps
// kx=1 (from in[t]) and kx=3 (from in[t-1]); ox=2t+1 gets kx=2 (in[t]) and
// kx=0 (in[t+1]). The same split drives the two backward kernels via
// deinterleaved grad rows: even columns of a grad row land in ge[], odd in
// gd[].

void tconv_fwd(int N, int IC, int H, int W, int OC, const double* __restrict__ in, const double* __restrict__ w,
               const double* __restrict__ b, double* __restrict__ out, Exec ex) {
    const int OH = 2 * H, OW = 2 * W;
    const std::int64_t iplane = static_cast<std::int64_t>(H) * W;
    const std::int64_t oplane = static_cast<std::int64_t>(OH) * OW;
    par_for(static_cast<std::int64_t>(N) * OC, ex, [&](std::int64_t idx) {
        const int n = static_cast<int>(idx / OC);
        const int oc = static_cast<int>(idx % OC);
        double* op = out + (static_cast<std::int64_t>(n) * OC + oc) * oplane;
        std::vector<double> buf(2 * static_cast<std::size_t>(W));
        double* __restrict__ be = buf.data();
        double* __restrict__ bo = buf.data() + W;
        for (int oy = 0; oy < OH; ++oy) {
            std::fill(buf.begin(), buf.end(), b[oc]);
            for (int t01 = 0; t01 < 2; ++t01) {
                const int ky = ((oy + 1) & 1) + 2 * t01;
                const int iy = (oy + 1 - ky) / 2;
                if (iy < 0 || iy >= H) continue;
                for (int ic = 0; ic < IC; ++ic) {
                    const double* __restrict__ irow =
                        in + (static_cast<std::int64_t>(n) * IC + ic) * iplane +
                        static_cast<std::int64_t>(iy) * W;
                    const double* wp = w + (static_cast<std::int64_t>(oc) * IC + ic) * 16 + ky * 4;
                    const double w0 = wp[0], w1 = wp[1], w2 = wp[2], w3 = wp[3];
#pragma omp simd
                    for (int t = 0; t < W; ++t) be[t] += w1 * irow[t];
#pragma omp simd
                    for (int t = 1; t < W; ++t) be[t] += w3 * irow[t - 1];
#pragma omp simd
                    for (int t = 0; t < W; ++t) bo[t] += w2 * irow[t];
#pragma omp simd
                    for (int t = 0; t < W - 1; ++t) bo[t] += w0 * irow[t + 1];
                }
            }
            double* orow = op + static_cast<std::int64_t>(oy) * OW;
            for (int t = 0; t < W; ++t) {
                orow[2 * t] = be[t];
                orow[2 * t + 1] = bo[t];
            }
        }
    });
}

void tconv_bwd_data(int N, int IC, int H, int W, int OC, const double* __restrict__ go, const double* __restrict__ w,
                    double* __restrict__ gi, Exec ex) {
    const int OH = 2 * H, OW = 2 * W;
    const std::int64_t iplane = static_cast<std::int64_t>(H) * W;
    const std::int64_t oplane = static_cast<std::int64_t>(OH) * OW;
    par_for(N, ex, [&](std::int64_t n) {
        // Deinterleave every oc grad plane once; all ic reuse it.
        std::vector<double> de(static_cast<std::size_t>(OC) * oplane);
        for (int oc = 0; oc < OC; ++oc) {
            const double* gop = go + (n * OC + oc) * oplane;
            double* dst = de.data() + static_cast<std::int64_t>(oc) * oplane;
            for (int oy = 0; oy < OH; ++oy) {
                const double* grow = gop + static_cast<std::int64_t>(oy) * OW;
                double* ge = dst + static_cast<std::int64_t>(oy) * OW;
                double* gd = ge + W;
                for (int t = 0; t < W; ++t) {
                    ge[t] = grow[2 * t];
                    gd[t] = grow[2 * t + 1];
                }
            }
        }
        for (int ic = 0; ic < IC; ++ic) {
            double* gp = gi + (n * IC + ic) * iplane;
            std::fill(gp, gp + iplane, 0.0);
            for (int oc = 0; oc < OC; ++oc) {
                const double* wp = w + (static_cast<std::int64_t>(oc) * IC + ic) * 16;
                const double* dst = de.data() + static_cast<std::int64_t>(oc) * oplane;
                for (int ky = 0; ky < 4; ++ky) {
                    const double w0 = wp[ky * 4 + 0], w1 = wp[ky * 4 + 1];
                    const double w2 = wp[ky * 4 + 2], w3 = wp[ky * 4 + 3];
                    for (int iy = 0; iy < H; ++iy) {
                        const int oy = 2 * iy + ky - 1;
                        if (oy < 0 || oy >= OH) continue;
                        const double* __restrict__ ge = dst + static_cast<std::int64_t>(oy) * OW;
                        const double* __restrict__ gd = ge + W;
                        double* __restrict__ drow = gp + static_cast<std::int64_t>(iy) * W;
#pragma omp simd
                        for (int t = 0; t < W; ++t) drow[t] += w1 * ge[t];
#pragma omp simd
                        for (int t = 0; t < W - 1; ++t) drow[t] += w3 * ge[t + 1];
#pragma omp simd
                        for (int t = 0; t < W; ++t) drow[t] += w2 * gd[t];
#pragma omp simd
                        for (int t = 1; t < W; ++t) drow[t] += w0 * gd[t - 1];
                    }
                }
            }
        }
    });
}

void tconv_bwd_param(int N, int IC, int H, int W, int OC, const double* __restrict__ in, const double* __restrict__ go,
                     double* __restrict__ gw, double* __restrict__ gb, Exec ex) {
    const int OH = 2 * H, OW = 2 * W;
    const std::int64_t iplane = static_cast<std::int64_t>(H) * W;
    const std::int64_t oplane = static_cast<std::int64_t>(OH) * OW;
    par_for(OC, ex, [&](std::int64_t occ) {
        const int oc = static_cast<int>(occ);
        double bacc = 0.0;
        std::vector<double> de(static_cast<std::size_t>(oplane));
        std::vector<double> wacc(static_cast<std::size_t>(IC) * 16, 0.0);
        for (int n = 0; n < N; ++n) {
            const double* gop = go + (static_cast<std::int64_t>(n) * OC + oc) * oplane;
#pragma omp simd reduction(+ : bacc)
            for (std::int64_t t = 0; t < oplane; ++t) bacc += gop[t];
            for (int oy = 0; oy < OH; ++oy) {
                const double* grow = gop + static_cast<std::int64_t>(oy) * OW;
                double* ge = de.data() + static_cast<std::int64_t>(oy) * OW;
                double* gd = ge + W;
                for (int t = 0; t < W; ++t) {
                    ge[t] = grow[2 * t];
                    gd[t] = grow[2 * t + 1];
                }
            }
            for (int ic = 0; ic < IC; ++ic) {
                const double* ip = in + (static_cast<std::int64_t>(n) * IC + ic) * iplane;
                for (int ky = 0; ky < 4; ++ky) {
                    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
                    for (int iy = 0; iy < H; ++iy) {
                        const int oy = 2 * iy + ky - 1;
                        if (oy < 0 || oy >= OH) continue;
                        const double* __restrict__ irow = ip + static_cast<std::int64_t>(iy) * W;
                        const double* __restrict__ ge =
                            de.data() + static_cast<std::int64_t>(oy) * OW;
                        const double* __restrict__ gd = ge + W;
#pragma omp simd reduction(+ : a1)
                        for (int t = 0; t < W; ++t) a1 += irow[t] * ge[t];
#pragma omp simd reduction(+ : a3)
                        for (int t = 0; t < W - 1; ++t) a3 += irow[t] * ge[t + 1];
#pragma omp simd reduction(+ : a2)
                        for (int t = 0; t < W; ++t) a2 += irow[t] * gd[t];
#pragma omp simd reduction(+ : a0)
                        for (int t = 1; t < W; ++t) a0 += irow[t] * gd[t - 1];
                    }
                    double* wrow = wacc.data() + (static_cast<std::int64_t>(ic) * 4 + ky) * 4;
                    wrow[0] += a0;
                    wrow[1] += a1;
                    wrow[2] += a2;
                    wrow[3] += a3;
                }
            }
        }
        gb[oc] += bacc;
        for (int ic = 0; ic < IC; ++ic)
            for (int k = 0; k < 16; ++k)
                gw[(static_cast<std::int64_t>(oc) * IC + ic) * 16 + k] +=
                    wacc[static_cast<std::int64_t>(ic) * 16 + k];
    });
}

double sigmoid_scalar(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::uint64_t fnv1a(std::uint64_t h, std::uint64_t x) {
    h ^= x;
    return h * 0x100000001b3ULL;
}

// Reinterprets tensor dims between {N,F} and {N,C,H,W} when element counts
// agree; the layer index makes mismatch reports actionable.
void adapt_dims(Tensor& t, bool spatial, int c, int h, int w, int f, int layer_idx,
                const char* what) {
    if (t.ndim() < 2) throw ConfigError(std::string(what) + ": tensor must be batched");
    const int n = t.dims[0];
    const std::int64_t want =
        spatial ? static_cast<std::int64_t>(c) * h * w : static_cast<std::int64_t>(f);
    if (t.numel() != static_cast<std::int64_t>(n) * want)
        throw ConfigError(std::string(what) + ": layer " + std::to_string(layer_idx) +
                          " expects per-sample size " + std::to_string(want) + ", got dims " +
                          dims_str(t.dims));
    t.dims = spatial ? std::vector<int>{n, c, h, w} : std::vector<int>{n, f};
}

}  // namespace

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Conv3x3: return "conv3x3";
        case LayerKind::ReLU: return "relu";
        case LayerKind::MaxPool2x2: return "maxpool2x2";
        case LayerKind::GlobalAvgPool: return "gap";
        case LayerKind::Dense: return "dense";
        case LayerKind::Sigmoid: return "sigmoid";
        case LayerKind::TransposeConv2x: return "tconv2x";
    }
    return "?";
}

std::uint64_t NetworkGraph::signature() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char ch : prefix) h = fnv1a(h, static_cast<std::uint64_t>(ch));
    h = fnv1a(h, spatial_input ? 1 : 2);
    h = fnv1a(h, static_cast<std::uint64_t>(in_c * 73856093 + in_h * 19349663 + in_w * 83492791 +
                                            in_f));
    for (const auto& l : layers) {
        h = fnv1a(h, static_cast<std::uint64_t>(l.kind));
        h = fnv1a(h, static_cast<std::uint64_t>(l.in_c) << 32 | static_cast<std::uint32_t>(l.in_h));
        h = fnv1a(h, static_cast<std::uint64_t>(l.in_w) << 32 | static_cast<std::uint32_t>(l.in_f));
        h = fnv1a(h,
                  static_cast<std::uint64_t>(l.out_c) << 32 | static_cast<std::uint32_t>(l.out_h));
        h = fnv1a(h,
                  static_cast<std::uint64_t>(l.out_w) << 32 | static_cast<std::uint32_t>(l.out_f));
    }
    return h;
}

GraphBuilder::GraphBuilder(std::string prefix, int c, int h, int w) {
    g_.prefix = std::move(prefix);
    g_.spatial_input = true;
    g_.in_c = c;
    g_.in_h = h;
    g_.in_w = w;
    spatial_ = true;
    c_ = c;
    h_ = h;
    w_ = w;
}

GraphBuilder::GraphBuilder(std::string prefix, int features) {
    g_.prefix = std::move(prefix);
    g_.spatial_input = false;
    g_.in_f = features;
    spatial_ = false;
    f_ = features;
}

LayerSpec& GraphBuilder::start_layer(LayerKind kind, bool with_params) {
    LayerSpec l;
    l.kind = kind;
    l.spatial_in = spatial_;
    l.in_c = c_;
    l.in_h = h_;
    l.in_w = w_;
    l.in_f = spatial_ ? c_ * h_ * w_ : f_;
    if (with_params) {
        const std::string base = g_.prefix + ".L" + std::to_string(g_.layers.size());
        l.w_name = base + ".w";
        l.b_name = base + ".b";
        ++param_layers_;
    }
    g_.layers.push_back(l);
    return g_.layers.back();
}

void GraphBuilder::finish_elementwise(LayerSpec& l) {
    l.spatial_out = l.spatial_in;
    l.out_c = l.in_c;
    l.out_h = l.in_h;
    l.out_w = l.in_w;
    l.out_f = l.in_f;
}

GraphBuilder& GraphBuilder::conv3x3(int out_ch) {
    if (!spatial_)
        throw ConfigError("graph " + g_.prefix + ": conv3x3 at layer " +
                          std::to_string(g_.layers.size()) + " needs a spatial input");
    LayerSpec& l = start_layer(LayerKind::Conv3x3, true);
    l.spatial_out = true;
    l.out_c = out_ch;
    l.out_h = h_;
    l.out_w = w_;
    l.out_f = out_ch * h_ * w_;
    c_ = out_ch;
    return *this;
}

GraphBuilder& GraphBuilder::relu() {
    finish_elementwise(start_layer(LayerKind::ReLU, false));
    return *this;
}

GraphBuilder& GraphBuilder::sigmoid() {
    finish_elementwise(start_layer(LayerKind::Sigmoid, false));
    return *this;
}

GraphBuilder& GraphBuilder::maxpool() {
    if (!spatial_ || (h_ % 2) || (w_ % 2))
        throw ConfigError("graph " + g_.prefix + ": maxpool2x2 at layer " +
                          std::to_string(g_.layers.size()) + " needs even spatial dims, got " +
                          std::to_string(h_) + "x" + std::to_string(w_));
    LayerSpec& l = start_layer(LayerKind::MaxPool2x2, false);
    h_ /= 2;
    w_ /= 2;
    l.spatial_out = true;
    l.out_c = c_;
    l.out_h = h_;
    l.out_w = w_;
    l.out_f = c_ * h_ * w_;
    return *this;
}

GraphBuilder& GraphBuilder::gap() {
    if (!spatial_)
        throw ConfigError("graph " + g_.prefix + ": gap at layer " +
                          std::to_string(g_.layers.size()) + " needs a spatial input");
    LayerSpec& l = start_layer(LayerKind::GlobalAvgPool, false);
    l.spatial_out = false;
    l.out_f = c_;
    spatial_ = false;
    f_ = c_;
    c_ = h_ = w_ = 0;
    return *this;
}

GraphBuilder& GraphBuilder::dense(int out_features) {
    LayerSpec& l = start_layer(LayerKind::Dense, true);
    l.spatial_in = false;  // consumes the flattened view
    l.spatial_out = false;
    l.out_f = out_features;
    spatial_ = false;
    f_ = out_features;
    c_ = h_ = w_ = 0;
    return *this;
}

GraphBuilder& GraphBuilder::tconv2x(int out_ch) {
    if (!spatial_)
        throw ConfigError("graph " + g_.prefix + ": tconv2x at layer " +
                          std::to_string(g_.layers.size()) + " needs a spatial input");
    LayerSpec& l = start_layer(LayerKind::TransposeConv2x, true);
    l.spatial_out = true;
    l.out_c = out_ch;
    l.out_h = 2 * h_;
    l.out_w = 2 * w_;
    l.out_f = out_ch * l.out_h * l.out_w;
    c_ = out_ch;
    h_ *= 2;
    w_ *= 2;
    return *this;
}

GraphBuilder& GraphBuilder::reshape(int c, int h, int w) {
    const std::int64_t cur = spatial_ ? static_cast<std::int64_t>(c_) * h_ * w_ : f_;
    if (static_cast<std::int64_t>(c) * h * w != cur)
        throw ConfigError("graph " + g_.prefix + ": reshape to {" + std::to_string(c) + "," +
                          std::to_string(h) + "," + std::to_string(w) + "} at layer " +
                          std::to_string(g_.layers.size()) + " changes element count");
    spatial_ = true;
    c_ = c;
    h_ = h;
    w_ = w;
    f_ = 0;
    return *this;
}

NetworkGraph GraphBuilder::build() {
    if (g_.layers.empty()) throw ConfigError("graph " + g_.prefix + ": needs at least one layer");
    return std::move(g_);
}

Param& ParamStore::at(const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw UsageError("ParamStore: unknown parameter '" + name + "'");
    return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = p.find(name);
    if (it == p.end()) throw UsageError("ParamStore: unknown parameter '" + name + "'");
    return it->second;
}

void ParamStore::zero_grads() {
    for (auto& [name, prm] : p) prm.grad.fill(0.0);
}

void ParamStore::set_frozen(bool frozen) {
    for (auto& [name, prm] : p) prm.frozen = frozen;
}

void init_params(const NetworkGraph& net, ParamStore& store, std::uint64_t seed) {
    Rng rng(seed);
    for (const auto& l : net.layers) {
        if (!l.has_params()) continue;
        std::vector<int> wdims, bdims;
        int fan_in = 0, fan_out = 0;
        switch (l.kind) {
            case LayerKind::Conv3x3:
                wdims = {l.out_c, l.in_c, 3, 3};
                bdims = {l.out_c};
                fan_in = l.in_c * 9;
                fan_out = l.out_c * 9;
                break;
            case LayerKind::TransposeConv2x:
                wdims = {l.out_c, l.in_c, 4, 4};
                bdims = {l.out_c};
                fan_in = l.in_c * 16;
                fan_out = l.out_c * 16;
                break;
            case LayerKind::Dense:
                wdims = {l.out_f, l.in_f};
                bdims = {l.out_f};
                fan_in = l.in_f;
                fan_out = l.out_f;
                break;
            default:
                continue;
        }
        Param& wprm = store.p[l.w_name];
        wprm.value = Tensor(wdims);
        wprm.grad = Tensor(wdims);
        const double bound = std::sqrt(6.0 / (fan_in + fan_out));
        for (auto& x : wprm.value.v) x = rng.uniform(-bound, bound);
        Param& bprm = store.p[l.b_name];
        bprm.value = Tensor(bdims);
        bprm.grad = Tensor(bdims);
    }
}

std::pair<Tensor, Tape> forward(const NetworkGraph& net, const ParamStore& params,
                                const Tensor& input, Exec ex) {
    if (input.ndim() < 2) throw ConfigError("forward: input must be batched");
    Tape tape;
    tape.net_sig = net.signature();
    tape.batch = input.dims[0];
    const int N = tape.batch;
    tape.x.reserve(net.layers.size());
    tape.pool_idx.resize(net.layers.size());

    Tensor cur = input;
    adapt_dims(cur, net.spatial_input, net.in_c, net.in_h, net.in_w, net.in_f, 0, "forward");

    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        adapt_dims(cur, l.spatial_in, l.in_c, l.in_h, l.in_w, l.in_f, static_cast<int>(i),
                   "forward");
        tape.x.push_back(std::move(cur));
        const Tensor& in = tape.x.back();
        Tensor out;
        switch (l.kind) {
            case LayerKind::Conv3x3: {
                out = Tensor({N, l.out_c, l.out_h, l.out_w});
                const Param& wp = params.at(l.w_name);
                const Param& bp = params.at(l.b_name);
                conv3x3_fwd(N, l.in_c, l.in_h, l.in_w, l.out_c, in.data(), wp.value.data(),
                            bp.value.data(), out.data(), ex);
                break;
            }
            case LayerKind::TransposeConv2x: {
                out = Tensor({N, l.out_c, l.out_h, l.out_w});
                const Param& wp = params.at(l.w_name);
                const Param& bp = params.at(l.b_name);
                tconv_fwd(N, l.in_c, l.in_h, l.in_w, l.out_c, in.data(), wp.value.data(),
                          bp.value.data(), out.data(), ex);
                break;
            }
            case LayerKind::Dense: {
                out = Tensor({N, l.out_f});
                const Param& wp = params.at(l.w_name);
                const Param& bp = params.at(l.b_name);
                dense_fwd(N, l.in_f, l.out_f, in.data(), wp.value.data(), bp.value.data(),
                          out.data(), ex);
                break;
            }
            case LayerKind::ReLU: {
                out = Tensor(in.dims);
                const double* ip = in.data();
                double* op = out.data();
                par_for(in.numel(), ex, [&](std::int64_t t) { op[t] = ip[t] > 0.0 ? ip[t] : 0.0; });
                break;
            }
            case LayerKind::Sigmoid: {
                out = Tensor(in.dims);
                const double* ip = in.data();
                double* op = out.data();
                par_for(in.numel(), ex, [&](std::int64_t t) { op[t] = sigmoid_scalar(ip[t]); });
                break;
            }
            case LayerKind::MaxPool2x2: {
                out = Tensor({N, l.out_c, l.out_h, l.out_w});
                tape.pool_idx[i].resize(static_cast<std::size_t>(out.numel()));
                maxpool_fwd(N, l.in_c, l.in_h, l.in_w, in.data(), out.data(),
                            tape.pool_idx[i].data(), ex);
                break;
            }
            case LayerKind::GlobalAvgPool: {
                out = Tensor({N, l.out_f});
                gap_fwd(N, l.in_c, l.in_h, l.in_w, in.data(), out.data(), ex);
                break;
            }
        }
        cur = std::move(out);
    }
    return {std::move(cur), std::move(tape)};
}

Tensor backward(const NetworkGraph& net, ParamStore& params, const Tape& tape,
                const Tensor& grad_out, Exec ex) {
    if (tape.net_sig != net.signature())
        throw UsageError("backward: stale tape (recorded for a different graph)");
    if (tape.x.size() != net.layers.size())
        throw UsageError("backward: tape layer count mismatch");
    const int N = tape.batch;
    if (grad_out.ndim() < 1 || grad_out.dims[0] != N)
        throw UsageError("backward: grad_out batch mismatch");

    Tensor g = grad_out;
    for (int li = static_cast<int>(net.layers.size()) - 1; li >= 0; --li) {
        const LayerSpec& l = net.layers[static_cast<std::size_t>(li)];
        adapt_dims(g, l.spatial_out, l.out_c, l.out_h, l.out_w, l.out_f, li, "backward");
        const Tensor& in = tape.x[static_cast<std::size_t>(li)];
        Tensor gi(in.dims);
        switch (l.kind) {
            case LayerKind::Conv3x3: {
                Param& wp = params.at(l.w_name);
                Param& bp = params.at(l.b_name);
                conv3x3_bwd_data(N, l.in_c, l.in_h, l.in_w, l.out_c, g.data(), wp.value.data(),
                                 gi.data(), ex);
                conv3x3_bwd_param(N, l.in_c, l.in_h, l.in_w, l.out_c, in.data(), g.data(),
                                  wp.grad.data(), bp.grad.data(), ex);
                break;
            }
            case LayerKind::TransposeConv2x: {
                Param& wp = params.at(l.w_name);
                Param& bp = params.at(l.b_name);
                tconv_bwd_data(N, l.in_c, l.in_h, l.in_w, l.out_c, g.data(), wp.value.data(),
                               gi.data(), ex);
                tconv_bwd_param(N, l.in_c, l.in_h, l.in_w, l.out_c, in.data(), g.data(),
                                wp.grad.data(), bp.grad.data(), ex);
                break;
            }
            case LayerKind::Dense: {
                Param& wp = params.at(l.w_name);
                Param& bp = params.at(l.b_name);
                dense_bwd_data(N, l.in_f, l.out_f, g.data(), wp.value.data(), gi.data(), ex);
                dense_bwd_param(N, l.in_f, l.out_f, in.data(), g.data(), wp.grad.data(),
                                bp.grad.data(), ex);
                break;
            }
            case LayerKind::ReLU: {
                const double* ip = in.data();
                const double* gp = g.data();
                double* dp = gi.data();
                par_for(in.numel(), ex,
                        [&](std::int64_t t) { dp[t] = ip[t] > 0.0 ? gp[t] : 0.0; });
                break;
            }
            case LayerKind::Sigmoid: {
                const double* ip = in.data();
                const double* gp = g.data();
                double* dp = gi.data();
                par_for(in.numel(), ex, [&](std::int64_t t) {
                    const double s = sigmoid_scalar(ip[t]);
                    dp[t] = gp[t] * s * (1.0 - s);
                });
                break;
            }
            case LayerKind::MaxPool2x2:
                maxpool_bwd(N, l.in_c, l.in_h, l.in_w, g.data(),
                            tape.pool_idx[static_cast<std::size_t>(li)].data(), gi.data(), ex);
                break;
            case LayerKind::GlobalAvgPool:
                gap_bwd(N, l.in_c, l.in_h, l.in_w, g.data(), gi.data(), ex);
                break;
        }
        g = std::move(gi);
    }
    return g;
}

void step(ParamStore& store, const OptimizerConfig& cfg) {
    store.step_count += 1;
    const auto t = static_cast<double>(store.step_count);
    for (auto& [name, prm] : store.p) {
        if (!prm.frozen) {
            const std::int64_t n = prm.value.numel();
            switch (cfg.kind) {
                case OptimizerConfig::Kind::SGD: {
                    if (cfg.momentum != 0.0) {
                        if (prm.m1.numel() != n) prm.m1 = Tensor(prm.value.dims);
                        for (std::int64_t i = 0; i < n; ++i) {
                            prm.m1.v[i] = cfg.momentum * prm.m1.v[i] + prm.grad.v[i];
                            prm.value.v[i] -= cfg.lr * prm.m1.v[i];
                        }
                    } else {
                        for (std::int64_t i = 0; i < n; ++i)
                            prm.value.v[i] -= cfg.lr * prm.grad.v[i];
                    }
                    break;
                }
                case OptimizerConfig::Kind::Adam: {
                    if (prm.m1.numel() != n) prm.m1 = Tensor(prm.value.dims);
                    if (prm.m2.numel() != n) prm.m2 = Tensor(prm.value.dims);
                    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
                    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
                    for (std::int64_t i = 0; i < n; ++i) {
                        const double gv = prm.grad.v[i];
                        prm.m1.v[i] = cfg.beta1 * prm.m1.v[i] + (1.0 - cfg.beta1) * gv;
                        prm.m2.v[i] = cfg.beta2 * prm.m2.v[i] + (1.0 - cfg.beta2) * gv * gv;
                        const double mh = prm.m1.v[i] / bc1;
                        const double vh = prm.m2.v[i] / bc2;
                        prm.value.v[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.delta);
                    }
                    break;
                }
            }
        }
        prm.grad.fill(0.0);
    }
}

GradCheckReport grad_check(const NetworkGraph& net, ParamStore& params, const Tensor& input,
                           const LossHead& head, double tol, std::uint64_t seed) {
    params.zero_grads();
    auto [out, tape] = forward(net, params, input);
    auto [loss0, gout] = head(out);
    (void)loss0;
    backward(net, params, tape, gout);

    // Snapshot analytic grads of this graph's parameters before FD loops.
    std::map<std::string, Tensor> analytic;
    for (const auto& l : net.layers) {
        if (!l.has_params()) continue;
        analytic[l.w_name] = params.at(l.w_name).grad;
        analytic[l.b_name] = params.at(l.b_name).grad;
    }

    GradCheckReport rep;
    Rng rng(seed);
    const double h = 1e-5;
    auto eval_loss = [&]() {
        auto [o, t] = forward(net, params, input);
        (void)t;
        return head(o).first;
    };
    for (auto& [name, agrad] : analytic) {
        Param& prm = params.at(name);
        const std::int64_t n = prm.value.numel();
        const std::int64_t k = std::max<std::int64_t>(1, (n * 5 + 99) / 100);
        for (std::int64_t s = 0; s < k; ++s) {
            const auto idx = static_cast<std::int64_t>(rng.uniform_index(
                static_cast<std::uint64_t>(n)));
            const double old = prm.value.v[idx];
            prm.value.v[idx] = old + h;
            const double lp = eval_loss();
            prm.value.v[idx] = old - h;
            const double lm = eval_loss();
            prm.value.v[idx] = old;
            const double fd = (lp - lm) / (2.0 * h);
            const double an = agrad.v[idx];
            const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst_param = name + "[" + std::to_string(idx) + "]";
            }
        }
    }
    params.zero_grads();
    rep.pass = rep.max_rel_err < tol;
    return rep;
}

}  // namespace gcnet

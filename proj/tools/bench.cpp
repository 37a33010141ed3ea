// Times the compute kernels under the serial reference policy and the
// OpenMP policy, verifies the two agree bit-for-bit, and prints a table.
// Thread count follows OMP_NUM_THREADS. --quick shrinks problem sizes so the
// run doubles as a consistency smoke test.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#include "gcnet/net.hpp"
#include "gcnet/raster.hpp"
#include "gcnet/rng.hpp"

using namespace gcnet;

namespace {

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Row {
    std::string name;
    double serial_s = 0.0;
    double parallel_s = 0.0;
    bool identical = false;
};

// Runs fn(ex) `reps` times per policy, keeping the best time.
template <typename F>
Row bench(const std::string& name, int reps, F&& fn) {
    Row r;
    r.name = name;
    std::vector<double> ref, par;
    r.serial_s = 1e300;
    r.parallel_s = 1e300;
    for (int i = 0; i < reps; ++i) {
        double t0 = now_s();
        ref = fn(Exec::Serial);
        r.serial_s = std::min(r.serial_s, now_s() - t0);
        t0 = now_s();
        par = fn(Exec::Parallel);
        r.parallel_s = std::min(r.parallel_s, now_s() - t0);
    }
    r.identical = bits_equal(ref, par);
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    bool quick = false;
    for (int i = 1; i < argc; ++i)
        if (std::string(argv[i]) == "--quick") quick = true;

    const int reps = quick ? 2 : 5;
    const int grid_n = quick ? 128 : 512;
    const int batch = quick ? 4 : 32;
    std::vector<Row> rows;

    ShapeParams ell{ShapeKind::RotatedEllipse, 0.48, 0.53, 0.31, 0.17, 0.6};
    Smoothness sm{0.05, false};
    GridSpec grid(grid_n, grid_n);

    rows.push_back(bench("rasterize " + std::to_string(grid_n) + "^2", reps, [&](Exec ex) {
        return rasterize(ell, sm, grid, ex).v;
    }));
    rows.push_back(bench("analytic_grads " + std::to_string(grid_n) + "^2", reps, [&](Exec ex) {
        ShapeGrad g = analytic_grads(ell, sm, grid, ex);
        std::vector<double> out = g.d_cx.v;
        out.insert(out.end(), g.d_theta.v.begin(), g.d_theta.v.end());
        return out;
    }));

    // Classifier-shaped trunk on 64x64 RGB.
    NetworkGraph net = GraphBuilder("bench", 3, 64, 64)
                           .conv3x3(8)
                           .relu()
                           .maxpool()
                           .conv3x3(16)
                           .relu()
                           .maxpool()
                           .conv3x3(32)
                           .relu()
                           .maxpool()
                           .gap()
                           .dense(8)
                           .build();
    ParamStore params;
    init_params(net, params, 7);
    Rng rng(11);
    Tensor input({batch, 3, 64, 64});
    for (auto& x : input.v) x = rng.uniform();

    rows.push_back(bench("conv trunk fwd n=" + std::to_string(batch), reps, [&](Exec ex) {
        auto [out, tape] = forward(net, params, input, ex);
        (void)tape;
        return out.v;
    }));
    rows.push_back(bench("conv trunk fwd+bwd n=" + std::to_string(batch), reps, [&](Exec ex) {
        params.zero_grads();
        auto [out, tape] = forward(net, params, input, ex);
        Tensor gout(out.dims);
        gout.fill(1.0 / static_cast<double>(out.numel()));
        Tensor gin = backward(net, params, tape, gout, ex);
        std::vector<double> sig = gin.v;
        const Tensor& gw = params.at("bench.L0.w").grad;
        sig.insert(sig.end(), gw.v.begin(), gw.v.end());
        return sig;
    }));

    // Generator-shaped upsampling stack.
    NetworkGraph gen = GraphBuilder("benchg", 5)
                           .dense(144)
                           .reshape(1, 12, 12)
                           .tconv2x(8)
                           .relu()
                           .tconv2x(4)
                           .relu()
                           .tconv2x(1)
                           .build();
    ParamStore gparams;
    init_params(gen, gparams, 9);
    Tensor coeffs({quick ? 8 : 128, 5});
    for (auto& x : coeffs.v) x = rng.uniform();

    rows.push_back(bench("tconv stack fwd+bwd n=" + std::to_string(coeffs.dims[0]), reps,
                         [&](Exec ex) {
                             gparams.zero_grads();
                             auto [out, tape] = forward(gen, gparams, coeffs, ex);
                             Tensor gout(out.dims);
                             gout.fill(1e-4);
                             Tensor gin = backward(gen, gparams, tape, gout, ex);
                             return gin.v;
                         }));

    std::printf("threads=%d\n", max_threads());
    std::printf("%-28s %12s %12s %9s %10s\n", "kernel", "serial[ms]", "parallel[ms]", "speedup",
                "identical");
    bool all_ok = true;
    for (const auto& r : rows) {
        std::printf("%-28s %12.3f %12.3f %8.2fx %10s\n", r.name.c_str(), r.serial_s * 1e3,
                    r.parallel_s * 1e3, r.serial_s / r.parallel_s, r.identical ? "yes" : "NO");
        all_ok = all_ok && r.identical;
    }
    if (!all_ok) {
        std::printf("FAIL: serial and parallel kernels disagree\n");
        return 1;
    }
    return 0;
}

#include "gcnet/maskgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>

#include "gcnet/errors.hpp"
#include "gcnet/losses.hpp"
#include "gcnet/raster.hpp"
#include "gcnet/resize.hpp"
#include "gcnet/rng.hpp"

namespace gcnet {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr int kNetSide = 96;  // 12 * 2^3, output side of the transpose-conv stack

Tensor coeffs_to_tensor(const std::vector<CoeffSample>& cs) {
    Tensor x({static_cast<std::int64_t>(cs.size()), 5});
    for (std::size_t i = 0; i < cs.size(); ++i) {
        double* r = x.data() + i * 5;
        r[0] = cs[i].c_x;
        r[1] = cs[i].c_y;
        r[2] = cs[i].a;
        r[3] = cs[i].b;
        r[4] = cs[i].theta;
    }
    return x;
}

MaskGrid plane_to_grid(const double* p, int h, int w) {
    MaskGrid g(h, w);
    std::copy(p, p + static_cast<std::size_t>(h) * w, g.v.begin());
    return g;
}

}  // namespace

ShapeParams shape_from_coeffs(ShapeKind kind, const CoeffSample& c) {
    ShapeParams s;
    s.kind = kind;
    s.c_x = c.c_x;
    s.c_y = c.c_y;
    s.a = c.a;
    s.b = c.b;
    s.theta = (kind == ShapeKind::Rectangle) ? 0.0 : c.theta;
    return s;
}

LearningDriven make_learned_generator(ShapeKind kind, std::uint64_t init_seed) {
    LearningDriven gen;
    gen.kind = kind;
    gen.net = GraphBuilder("gen", 5)
                  .dense(144)
                  .reshape(1, 12, 12)
                  .tconv2x(6)
                  .relu()
                  .tconv2x(3)
                  .relu()
                  .tconv2x(1)
                  .build();
    init_params(gen.net, gen.params, init_seed);
    return gen;
}

std::vector<CoeffSample> sample_coefficients(std::uint64_t seed, int count) {
    if (count < 1) throw UsageError("sample_coefficients: count must be >= 1");
    std::vector<CoeffSample> out(static_cast<std::size_t>(count));
    Rng root(seed);
    for (int i = 0; i < count; ++i) {
        Rng r = root.derive(static_cast<std::uint64_t>(i));
        CoeffSample& c = out[static_cast<std::size_t>(i)];
        do c.c_x = r.normal(0.5, 0.15); while (c.c_x < 0.0 || c.c_x > 1.0);
        do c.c_y = r.normal(0.5, 0.15); while (c.c_y < 0.0 || c.c_y > 1.0);
        do c.a = r.normal(0.4, 0.15); while (!(c.a > kAMin && c.a <= 1.0));
        do c.b = r.normal(0.4, 0.15); while (!(c.b > kAMin && c.b <= 1.0));
        do c.theta = r.uniform(-kPi / 2.0, kPi / 2.0); while (std::abs(c.theta) >= kPi / 2.0);
    }
    return out;
}

LearnedBatch learned_batch_forward(const LearningDriven& gen, const Tensor& coeffs, Exec ex) {
    LearnedBatch fb;
    auto [out, tape] = forward(gen.net, gen.params, coeffs, ex);
    fb.net_out = std::move(out);
    fb.tape = std::move(tape);
    const int n = static_cast<int>(fb.net_out.dim(0));
    const int nh = gen.native_h, nw = gen.native_w;
    fb.native = Tensor({n, 1, nh, nw});
    const std::int64_t net_plane = static_cast<std::int64_t>(kNetSide) * kNetSide;
    const std::int64_t nat_plane = static_cast<std::int64_t>(nh) * nw;
    for (int s = 0; s < n; ++s) {
        MaskGrid z = plane_to_grid(fb.net_out.data() + s * net_plane, kNetSide, kNetSide);
        MaskGrid r = bilinear_resize(z, nh, nw);
        double* dst = fb.native.data() + s * nat_plane;
        for (std::int64_t i = 0; i < nat_plane; ++i) dst[i] = 1.0 / (1.0 + std::exp(-r.v[i]));
    }
    return fb;
}

Tensor learned_batch_backward(const LearningDriven& gen, ParamStore& params,
                              const LearnedBatch& fwd, const Tensor& upstream_native, Exec ex) {
    if (!upstream_native.same_dims(fwd.native))
        throw UsageError("learned_batch_backward: upstream dims do not match forward output");
    const int n = static_cast<int>(fwd.native.dim(0));
    const int nh = gen.native_h, nw = gen.native_w;
    const std::int64_t net_plane = static_cast<std::int64_t>(kNetSide) * kNetSide;
    const std::int64_t nat_plane = static_cast<std::int64_t>(nh) * nw;
    Tensor go({n, 1, kNetSide, kNetSide});
    for (int s = 0; s < n; ++s) {
        MaskGrid dr(nh, nw);
        const double* u = upstream_native.data() + s * nat_plane;
        const double* sv = fwd.native.data() + s * nat_plane;
        for (std::int64_t i = 0; i < nat_plane; ++i) dr.v[i] = u[i] * sv[i] * (1.0 - sv[i]);
        MaskGrid dz = bilinear_resize_backward(dr, kNetSide, kNetSide);
        std::copy(dz.v.begin(), dz.v.end(), go.data() + s * net_plane);
    }
    return backward(gen.net, params, fwd.tape, go, ex);
}

MaskGrid generate(const GeneratorMode& mode, const ShapeParams& shape, const GridSpec& grid, Exec ex) {
    if (const auto* md = std::get_if<ModelDriven>(&mode)) return rasterize(shape, md->smooth, grid, ex);
    const auto& gen = std::get<LearningDriven>(mode);
    LearnedBatch fb = learned_batch_forward(gen, coeffs_to_tensor({CoeffSample{shape.c_x, shape.c_y, shape.a, shape.b, shape.theta}}), ex);
    MaskGrid native = plane_to_grid(fb.native.data(), gen.native_h, gen.native_w);
    MaskGrid out = bilinear_resize(native, grid.h, grid.w);
    for (double& v : out.v) v = std::clamp(v, 0.0, 1.0);
    return out;
}

CoeffGrad generator_backward(const GeneratorMode& mode, const ShapeParams& shape,
                             const GridSpec& grid, const MaskGrid& upstream, Exec ex) {
    if (upstream.h != grid.h || upstream.w != grid.w)
        throw UsageError("generator_backward: upstream dims do not match grid");
    CoeffGrad g;
    if (const auto* md = std::get_if<ModelDriven>(&mode)) {
        const ShapeGrad sg = analytic_grads(shape, md->smooth, grid, ex);
        const std::size_t n = upstream.v.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double u = upstream.v[i];
            g.c_x += u * sg.d_cx.v[i];
            g.c_y += u * sg.d_cy.v[i];
            g.a += u * sg.d_a.v[i];
            g.b += u * sg.d_b.v[i];
            g.theta += u * sg.d_theta.v[i];
            g.eps += u * sg.d_eps.v[i];
        }
        return g;
    }
    const auto& gen = std::get<LearningDriven>(mode);
    LearnedBatch fb = learned_batch_forward(gen, coeffs_to_tensor({CoeffSample{shape.c_x, shape.c_y, shape.a, shape.b, shape.theta}}), ex);
    MaskGrid up(upstream);
    MaskGrid up_native = bilinear_resize_backward(up, gen.native_h, gen.native_w);
    Tensor un({1, 1, gen.native_h, gen.native_w});
    std::copy(up_native.v.begin(), up_native.v.end(), un.data());
    ParamStore scratch = gen.params;  // keeps the call const on a frozen generator
    Tensor gi = learned_batch_backward(gen, scratch, fb, un, ex);
    g.c_x = gi.data()[0];
    g.c_y = gi.data()[1];
    g.a = gi.data()[2];
    g.b = gi.data()[3];
    g.theta = gi.data()[4];
    return g;
}

namespace {

struct PairPool {
    std::vector<CoeffSample> coeffs;
    std::vector<std::uint8_t> masks;  // binary, native res, one plane per sample
    int nh = 0, nw = 0;

    MaskGrid target(int i) const {
        MaskGrid t(nh, nw);
        const std::uint8_t* src = masks.data() + static_cast<std::size_t>(i) * nh * nw;
        for (std::size_t k = 0; k < t.v.size(); ++k) t.v[k] = src[k];
        return t;
    }
};

PairPool build_pool(const LearningDriven& gen, std::uint64_t seed, int count) {
    PairPool pool;
    pool.nh = gen.native_h;
    pool.nw = gen.native_w;
    pool.coeffs = sample_coefficients(seed, count);
    pool.masks.resize(static_cast<std::size_t>(count) * pool.nh * pool.nw);
    const GridSpec grid(pool.nh, pool.nw);
    for (int i = 0; i < count; ++i) {
        const MaskGrid m = rasterize_exact(shape_from_coeffs(gen.kind, pool.coeffs[static_cast<std::size_t>(i)]), grid);
        std::uint8_t* dst = pool.masks.data() + static_cast<std::size_t>(i) * pool.nh * pool.nw;
        for (std::size_t k = 0; k < m.v.size(); ++k) dst[k] = static_cast<std::uint8_t>(m.v[k]);
    }
    return pool;
}

double heldout_mean_dice(const LearningDriven& gen, const PairPool& heldout) {
    const int total = static_cast<int>(heldout.coeffs.size());
    const std::int64_t plane = static_cast<std::int64_t>(gen.native_h) * gen.native_w;
    double acc = 0.0;
    for (int base = 0; base < total; base += 256) {
        const int n = std::min(256, total - base);
        std::vector<CoeffSample> cs(heldout.coeffs.begin() + base, heldout.coeffs.begin() + base + n);
        LearnedBatch fb = learned_batch_forward(gen, coeffs_to_tensor(cs), Exec::Parallel);
        for (int s = 0; s < n; ++s) {
            const MaskGrid pred = plane_to_grid(fb.native.data() + s * plane, gen.native_h, gen.native_w);
            acc += 1.0 - dice_loss(pred, heldout.target(base + s)).value;
        }
    }
    return acc / total;
}

}  // namespace

PretrainReport pretrain_generator(LearningDriven& gen, std::uint64_t seed, int iterations,
                                  const OptimizerConfig& opt, std::ostream* log) {
    if (iterations < 0) throw UsageError("pretrain_generator: negative iteration count");
    constexpr int kPoolSize = 16384;
    constexpr int kHeldOut = 1024;
    Rng root(seed);
    const std::uint64_t pool_seed = root.next_u64();
    const std::uint64_t heldout_seed = root.next_u64();
    Rng batch_rng(root.next_u64());

    const PairPool pool = build_pool(gen, pool_seed, kPoolSize);
    const PairPool heldout = build_pool(gen, heldout_seed, kHeldOut);

    const int batch = std::max(1, opt.batch_size);
    const std::int64_t plane = static_cast<std::int64_t>(gen.native_h) * gen.native_w;

    PretrainReport rep;
    rep.iterations = iterations;
    std::deque<double> window;  // last <=100 batch losses
    double window_sum = 0.0;

    auto emit = [&](int iter, double avg_loss, double hd) {
        char line[96];
        std::snprintf(line, sizeof(line), "%d %.6f %.6f", iter, avg_loss, hd);
        rep.log_lines.emplace_back(line);
        if (log) (*log) << line << '\n' << std::flush;
    };

    std::vector<CoeffSample> cs(static_cast<std::size_t>(batch));
    std::vector<int> idx(static_cast<std::size_t>(batch));
    for (int iter = 1; iter <= iterations; ++iter) {
        for (int s = 0; s < batch; ++s) {
            idx[static_cast<std::size_t>(s)] = static_cast<int>(batch_rng.uniform_index(kPoolSize));
            cs[static_cast<std::size_t>(s)] = pool.coeffs[static_cast<std::size_t>(idx[static_cast<std::size_t>(s)])];
        }
        LearnedBatch fb = learned_batch_forward(gen, coeffs_to_tensor(cs), Exec::Parallel);
        Tensor up({batch, 1, gen.native_h, gen.native_w});
        double batch_loss = 0.0;
        for (int s = 0; s < batch; ++s) {
            const MaskGrid pred = plane_to_grid(fb.native.data() + s * plane, gen.native_h, gen.native_w);
            DiceLossResult dl = dice_loss(pred, pool.target(idx[static_cast<std::size_t>(s)]));
            batch_loss += dl.value / batch;
            double* dst = up.data() + s * plane;
            for (std::int64_t k = 0; k < plane; ++k) dst[k] = dl.grad.v[static_cast<std::size_t>(k)] / batch;
        }
        if (!std::isfinite(batch_loss))
            throw TrainingError("generator pretraining diverged at iteration " + std::to_string(iter));
        learned_batch_backward(gen, gen.params, fb, up, Exec::Parallel);
        step(gen.params, opt);

        window.push_back(batch_loss);
        window_sum += batch_loss;
        if (window.size() > 100) {
            window_sum -= window.front();
            window.pop_front();
        }
        rep.final_train_loss = batch_loss;
        if (iter % 100 == 0 || iter == iterations)
            emit(iter, window_sum / static_cast<double>(window.size()), heldout_mean_dice(gen, heldout));
    }
    rep.heldout_dice = heldout_mean_dice(gen, heldout);
    gen.params.set_frozen(true);
    return rep;
}

}  // namespace gcnet

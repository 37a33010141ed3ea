#include "gcnet/fdcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "gcnet/errors.hpp"
#include "gcnet/raster.hpp"
#include "gcnet/rng.hpp"

namespace gcnet {

namespace {

// Keeps FD probes clear of the rectangle kinds' non-smooth set.
constexpr double kSmoothMargin = 1e-2;

struct Worst {
    double max_rel = 0.0;
    std::string what;
    std::int64_t compared = 0;

    void feed(double analytic, double fd, const std::string& what_) {
        ++compared;
        const double e = rel_err(analytic, fd);
        if (e > max_rel) {
            max_rel = e;
            what = what_;
        }
    }
};

FdResult finish(std::string name, double tol, const Worst& w) {
    FdResult r;
    r.name = std::move(name);
    r.max_rel_err = w.max_rel;
    r.tol = tol;
    r.pass = w.compared > 0 && w.max_rel < tol;
    r.worst = w.what;
    r.compared = w.compared;
    return r;
}

// Aggregate quotient ||a-f||_2 / max(||a||_2, ||f||_2) per probe group (one
// coefficient vector or one parameter tensor). Checks that chain through
// ReLU networks use this instead of per-element quotients: an FD probe whose
// window straddles a ReLU kink picks up noise that is tiny against the
// group's gradient scale but arbitrarily large against a single component
// whose true derivative is near zero.
struct GroupWorst {
    double max_rel = 0.0;
    std::string what;
    std::int64_t compared = 0;

    double se = 0.0, sa = 0.0, sf = 0.0;
    std::string current;

    void feed(double analytic, double fd) {
        ++compared;
        se += (analytic - fd) * (analytic - fd);
        sa += analytic * analytic;
        sf += fd * fd;
    }

    void close_group() {
        if (current.empty()) return;
        const double denom = std::max({std::sqrt(sa), std::sqrt(sf), 1e-10});
        const double e = std::sqrt(se) / denom;
        if (e > max_rel) {
            max_rel = e;
            what = current;
        }
        se = sa = sf = 0.0;
        current.clear();
    }

    void open_group(std::string name) {
        close_group();
        current = std::move(name);
    }
};

// Central quotient with step refinement: two successive window sizes must
// agree, otherwise the window straddles a kink (a ReLU unit crossing zero
// under the probe) and the window shrinks 8x. Returns the smallest-window
// quotient when agreement never arrives. eval(delta) evaluates the objective
// with the probed variable displaced by delta.
template <typename Eval>
double central_fd(const Eval& eval, double h, int max_levels = 4) {
    double prev = 0.0;
    for (int level = 0; level < max_levels; ++level) {
        const double step = h / std::pow(8.0, level);
        const double fd = (eval(step) - eval(-step)) / (2.0 * step);
        if (level > 0 && rel_err(prev, fd) < 1e-4) return fd;
        prev = fd;
    }
    return prev;
}

}  // namespace

std::string FdResult::line() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-32s  max_rel_err %.3e  tol %.0e  probes %lld  %s%s%s",
                  name.c_str(), max_rel_err, tol, static_cast<long long>(compared),
                  pass ? "PASS" : "FAIL", worst.empty() ? "" : "  worst ", worst.c_str());
    return buf;
}

double rel_err(double analytic, double fd) {
    const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-6});
    return std::abs(analytic - fd) / denom;
}

FdResult fd_check_mask_grads(ShapeKind kind, int n_shapes, const GridSpec& grid, double eps,
                             double fd_step, double band, double tol, std::uint64_t seed) {
    const Smoothness smooth{eps, false};
    const std::vector<CoeffSample> coeffs = sample_coefficients(seed, n_shapes);
    Worst w;

    // Coefficient accessors; eps is handled separately.
    struct Axis {
        const char* name;
        double ShapeParams::* field;
        const MaskGrid ShapeGrad::* plane;
    };
    const Axis axes[5] = {
        {"c_x", &ShapeParams::c_x, &ShapeGrad::d_cx},
        {"c_y", &ShapeParams::c_y, &ShapeGrad::d_cy},
        {"a", &ShapeParams::a, &ShapeGrad::d_a},
        {"b", &ShapeParams::b, &ShapeGrad::d_b},
        {"theta", &ShapeParams::theta, &ShapeGrad::d_theta},
    };
    const int n_axes = kind == ShapeKind::Rectangle ? 4 : 5;

    for (int si = 0; si < n_shapes; ++si) {
        const ShapeParams s = shape_from_coeffs(kind, coeffs[static_cast<std::size_t>(si)]);
        const ShapeGrad g = analytic_grads(s, smooth, grid);

        // Pixel eligibility: inside the boundary band and away from kinks.
        std::vector<std::uint8_t> use(static_cast<std::size_t>(grid.pixels()), 0);
        for (int i = 0; i < grid.h; ++i)
            for (int j = 0; j < grid.w; ++j) {
                const double x = grid.pixel_x(j), y = grid.pixel_y(i);
                if (std::abs(phi(s, x, y)) / eps < band && phi_smooth_at(s, x, y, kSmoothMargin))
                    use[static_cast<std::size_t>(i) * grid.w + j] = 1;
            }

        auto compare_planes = [&](const MaskGrid& hi, const MaskGrid& lo, const MaskGrid& analytic,
                                  const char* axis) {
            for (std::size_t k = 0; k < analytic.v.size(); ++k) {
                if (!use[k]) continue;
                const double fd = (hi.v[k] - lo.v[k]) / (2.0 * fd_step);
                char what[64];
                std::snprintf(what, sizeof(what), "shape %d d/d%s px %zu", si, axis, k);
                w.feed(analytic.v[k], fd, what);
            }
        };

        for (int ax = 0; ax < n_axes; ++ax) {
            ShapeParams hi = s, lo = s;
            hi.*(axes[ax].field) += fd_step;
            lo.*(axes[ax].field) -= fd_step;
            compare_planes(rasterize(hi, smooth, grid), rasterize(lo, smooth, grid), g.*(axes[ax].plane),
                           axes[ax].name);
        }
        compare_planes(rasterize(s, Smoothness{eps + fd_step, false}, grid),
                       rasterize(s, Smoothness{eps - fd_step, false}, grid), g.d_eps, "eps");
    }
    return finish(std::string("mask_grads_") + shape_kind_name(kind), tol, w);
}

std::vector<FdResult> fd_check_losses(std::uint64_t seed) {
    Rng rng(seed);
    const double h = 1e-5;
    const double tol = 1e-5;
    std::vector<FdResult> out;

    {
        const int m = 6;
        std::vector<double> a(m), b(m);
        for (int i = 0; i < m; ++i) {
            a[static_cast<std::size_t>(i)] = rng.uniform(0.06, 1.0);
            b[static_cast<std::size_t>(i)] = rng.uniform(0.06, 1.0);
        }
        const AreaLossResult r = area_loss(a, b);
        Worst w;
        for (int i = 0; i < m; ++i) {
            auto probe = [&](std::vector<double>& v, int k, double d) {
                v[static_cast<std::size_t>(k)] += d;
                const double f = area_loss(a, b).value;
                v[static_cast<std::size_t>(k)] -= d;
                return f;
            };
            w.feed(r.d_a[static_cast<std::size_t>(i)], (probe(a, i, h) - probe(a, i, -h)) / (2 * h),
                   "a[" + std::to_string(i) + "]");
            w.feed(r.d_b[static_cast<std::size_t>(i)], (probe(b, i, h) - probe(b, i, -h)) / (2 * h),
                   "b[" + std::to_string(i) + "]");
        }
        out.push_back(finish("area_loss", tol, w));
    }

    auto logits_check = [&](const char* name, bool with_labels) {
        const int m = 4, n = 6;
        Tensor logits({m, n});
        for (double& v : logits.v) v = rng.normal(0.0, 2.0);
        std::vector<int> labels(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i)
            labels[static_cast<std::size_t>(i)] = static_cast<int>(rng.uniform_index(n));
        auto eval = [&]() {
            return with_labels ? object_loss(logits, labels) : background_loss(logits);
        };
        const LogitsLossResult r = eval();
        Worst w;
        for (std::size_t k = 0; k < logits.v.size(); ++k) {
            logits.v[k] += h;
            const double f_hi = eval().value;
            logits.v[k] -= 2 * h;
            const double f_lo = eval().value;
            logits.v[k] += h;
            w.feed(r.grad.v[k], (f_hi - f_lo) / (2 * h), "logit[" + std::to_string(k) + "]");
        }
        out.push_back(finish(name, tol, w));
    };
    logits_check("object_loss", true);
    logits_check("background_loss", false);

    {
        MaskGrid pred(8, 8), target(8, 8);
        for (double& v : pred.v) v = rng.uniform(0.02, 0.98);
        for (double& v : target.v) v = rng.uniform() < 0.5 ? 0.0 : 1.0;
        const DiceLossResult r = dice_loss(pred, target);
        Worst w;
        for (std::size_t k = 0; k < pred.v.size(); ++k) {
            pred.v[k] += h;
            const double f_hi = dice_loss(pred, target).value;
            pred.v[k] -= 2 * h;
            const double f_lo = dice_loss(pred, target).value;
            pred.v[k] += h;
            w.feed(r.grad.v[k], (f_hi - f_lo) / (2 * h), "pred[" + std::to_string(k) + "]");
        }
        out.push_back(finish("dice_loss", tol, w));
    }
    return out;
}

FdResult fd_check_generator(const GeneratorMode& mode, ShapeKind kind, const GridSpec& grid,
                            int n_shapes, double tol, std::uint64_t seed) {
    const bool model = std::holds_alternative<ModelDriven>(mode);
    Rng rng(seed);
    MaskGrid upstream(grid.h, grid.w);
    for (double& v : upstream.v) v = rng.uniform(-1.0, 1.0);

    auto dot = [&](const GeneratorMode& m, const ShapeParams& s) {
        const MaskGrid mask = generate(m, s, grid);
        double acc = 0.0;
        for (std::size_t k = 0; k < mask.v.size(); ++k) acc += upstream.v[k] * mask.v[k];
        return acc;
    };

    const double h = 1e-5;
    const std::vector<CoeffSample> coeffs = sample_coefficients(seed + 1, n_shapes);
    Worst w;
    GroupWorst gw;
    for (int si = 0; si < n_shapes; ++si) {
        const ShapeParams s = shape_from_coeffs(kind, coeffs[static_cast<std::size_t>(si)]);
        const CoeffGrad g = generator_backward(mode, s, grid, upstream);
        gw.open_group("shape " + std::to_string(si));

        struct Axis {
            const char* name;
            double ShapeParams::* field;
            double CoeffGrad::* grad;
        };
        const Axis axes[5] = {
            {"c_x", &ShapeParams::c_x, &CoeffGrad::c_x},
            {"c_y", &ShapeParams::c_y, &CoeffGrad::c_y},
            {"a", &ShapeParams::a, &CoeffGrad::a},
            {"b", &ShapeParams::b, &CoeffGrad::b},
            {"theta", &ShapeParams::theta, &CoeffGrad::theta},
        };
        const int n_axes = kind == ShapeKind::Rectangle ? 4 : 5;
        for (int ax = 0; ax < n_axes; ++ax) {
            auto eval = [&](double d) {
                ShapeParams t = s;
                t.*(axes[ax].field) += d;
                return dot(mode, t);
            };
            if (model) {
                char what[64];
                std::snprintf(what, sizeof(what), "shape %d d/d%s", si, axes[ax].name);
                w.feed(g.*(axes[ax].grad), central_fd(eval, h), what);
            } else {
                gw.feed(g.*(axes[ax].grad), central_fd(eval, h));
            }
        }
        if (model) {
            const auto& md = std::get<ModelDriven>(mode);
            auto eval = [&](double d) {
                return dot(ModelDriven{Smoothness{md.smooth.epsilon + d, md.smooth.learnable}}, s);
            };
            char what[64];
            std::snprintf(what, sizeof(what), "shape %d d/deps", si);
            w.feed(g.eps, central_fd(eval, h), what);
        }
    }
    if (model) return finish(std::string("generator_model_") + shape_kind_name(kind), tol, w);
    gw.close_group();
    Worst agg;
    agg.max_rel = gw.max_rel;
    agg.what = gw.what;
    agg.compared = gw.compared;
    return finish(std::string("generator_learned_") + shape_kind_name(kind), tol, agg);
}

FdResult fd_check_micro_pipeline(ShapeKind kind, bool learned_generator, double tol,
                                 std::uint64_t seed) {
    SynthConfig sc;
    sc.families = {kind};
    sc.color_count = 2;
    sc.img_h = sc.img_w = 16;
    sc.train_count = 4;
    sc.test_count = 2;
    sc.seed = seed;
    const DatasetPair dp = generate_dataset(sc);

    TrainConfig tc;
    tc.weights = LossWeights{1.0, 1.0, 1.0};
    tc.seed = seed;
    tc.eps_init = 0.1;
    tc.eps_learnable = true;

    GeneratorMode gen;
    if (learned_generator) {
        LearningDriven ld = make_learned_generator(kind, seed + 17);
        ld.native_h = ld.native_w = 16;
        gen = std::move(ld);
    } else {
        gen = ModelDriven{Smoothness{tc.eps_init, true}};
    }

    GcNet net = make_gcnet(kind, std::move(gen), sc.classes(), GridSpec(16, 16), tc);
    init_params(net.classifier, net.cls_params, seed + 5);
    net.cls_params.set_frozen(true);

    std::vector<int> idx;
    for (int i = 0; i < static_cast<int>(dp.train.records.size()); ++i) idx.push_back(i);
    const Batch batch = assemble_batch(dp.train, idx);

    net.det_params.zero_grads();
    detector_loss_and_grads(net, batch, true);
    std::map<std::string, Tensor> analytic;
    for (const auto& [name, param] : net.det_params.p) analytic.emplace(name, param.grad);
    net.det_params.zero_grads();

    const double h = 1e-5;
    Rng pick(seed + 23);
    GroupWorst gw;
    for (auto& [name, param] : net.det_params.p) {
        const std::int64_t numel = static_cast<std::int64_t>(param.value.v.size());
        const std::int64_t probes = std::min<std::int64_t>(numel, std::max<std::int64_t>(8, numel / 64));
        gw.open_group(name);
        for (std::int64_t t = 0; t < probes; ++t) {
            const std::size_t k = probes == numel
                                       ? static_cast<std::size_t>(t)
                                       : static_cast<std::size_t>(pick.uniform_index(
                                             static_cast<std::uint64_t>(numel)));
            const double keep = param.value.v[k];
            auto eval = [&](double d) {
                param.value.v[k] = keep + d;
                const double f = detector_loss_and_grads(net, batch, false).total;
                param.value.v[k] = keep;
                return f;
            };
            gw.feed(analytic.at(name).v[k], central_fd(eval, h));
        }
    }
    gw.close_group();
    Worst agg;
    agg.max_rel = gw.max_rel;
    agg.what = gw.what;
    agg.compared = gw.compared;
    return finish(std::string("micro_e2e_") + shape_kind_name(kind) + (learned_generator ? "_learned" : "_model"),
                  tol, agg);
}

}  // namespace gcnet

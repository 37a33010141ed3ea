#include "gcnet/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "gcnet/errors.hpp"
#include "gcnet/raster.hpp"
#include "gcnet/resize.hpp"
#include "gcnet/rng.hpp"

namespace gcnet {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr const char* kEpsParam = "det.eps_log";

// Clamp keeps activated coefficients strictly inside their open ranges even
// when a raw logit saturates.
double squash(double r) {
    const double s = 1.0 / (1.0 + std::exp(-r));
    return std::clamp(s, 1e-12, 1.0 - 1e-12);
}

// sig[i] holds the clamped sigmoid; jac[i] = d(coefficient_i)/d(raw_i).
ShapeParams activate_one(const double* raw, int arity, ShapeKind kind, double* jac) {
    ShapeParams p;
    p.kind = kind;
    double sig[5] = {0, 0, 0, 0, 0};
    for (int i = 0; i < arity; ++i) sig[i] = squash(raw[i]);
    p.c_x = sig[0];
    p.c_y = sig[1];
    p.a = kAMin + (1.0 - kAMin) * sig[2];
    p.b = kAMin + (1.0 - kAMin) * sig[3];
    p.theta = arity == 5 ? (sig[4] - 0.5) * kPi : 0.0;
    if (jac) {
        jac[0] = sig[0] * (1.0 - sig[0]);
        jac[1] = sig[1] * (1.0 - sig[1]);
        jac[2] = (1.0 - kAMin) * sig[2] * (1.0 - sig[2]);
        jac[3] = (1.0 - kAMin) * sig[3] * (1.0 - sig[3]);
        jac[4] = arity == 5 ? kPi * sig[4] * (1.0 - sig[4]) : 0.0;
    }
    return p;
}

void check_image_dims(const std::vector<double>& image, int channels, const MaskGrid& m) {
    if (image.size() != static_cast<std::size_t>(channels) * m.h * m.w)
        throw UsageError("image size does not match mask dims");
}

int argmax_lowest(const double* scores, int n) {
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

}  // namespace

ShapeParams activate_coefficients(const std::vector<double>& raw, ShapeKind kind) {
    const int arity = kind == ShapeKind::Rectangle ? 4 : 5;
    if (static_cast<int>(raw.size()) != arity)
        throw ConfigError("activate_coefficients: " + std::string(shape_kind_name(kind)) + " needs " +
                          std::to_string(arity) + " raw outputs, got " + std::to_string(raw.size()));
    for (double r : raw)
        if (!std::isfinite(r)) throw UsageError("activate_coefficients: non-finite raw output");
    return activate_one(raw.data(), arity, kind, nullptr);
}

std::vector<double> mask_object(const std::vector<double>& image, int channels, const MaskGrid& m) {
    check_image_dims(image, channels, m);
    std::vector<double> out(image.size());
    const std::size_t plane = m.v.size();
    for (int c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = m.v[i] * image[c * plane + i];
    return out;
}

std::vector<double> mask_background(const std::vector<double>& image, int channels, const MaskGrid& m) {
    check_image_dims(image, channels, m);
    std::vector<double> out(image.size());
    const std::size_t plane = m.v.size();
    for (int c = 0; c < channels; ++c)
        for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] = (1.0 - m.v[i]) * image[c * plane + i];
    return out;
}

NetworkGraph build_classifier_graph(int classes, int img_h, int img_w) {
    return GraphBuilder("cls", 3, img_h, img_w)
        .conv3x3(8).relu().maxpool()
        .conv3x3(16).relu().maxpool()
        .conv3x3(32).relu().maxpool()
        .gap()
        .dense(classes)
        .build();
}

NetworkGraph build_detector_graph(ShapeKind kind, int img_h, int img_w) {
    return GraphBuilder("det", 3, img_h, img_w)
        .conv3x3(8).relu().maxpool()
        .conv3x3(16).relu().maxpool()
        .conv3x3(32).relu().maxpool()
        .dense(kind == ShapeKind::Rectangle ? 4 : 5)
        .build();
}

GcNet make_gcnet(ShapeKind kind, GeneratorMode generator, int classes, const GridSpec& grid,
                 const TrainConfig& cfg) {
    if (classes < 2) throw ConfigError("make_gcnet: need at least 2 classes");
    if (const auto* ld = std::get_if<LearningDriven>(&generator))
        if (ld->kind != kind) throw ConfigError("make_gcnet: learned generator was trained for a different shape kind");
    GcNet net;
    net.kind = kind;
    net.classes = classes;
    net.grid = grid;
    net.weights = cfg.weights;
    net.generator = std::move(generator);
    net.detector = build_detector_graph(kind, grid.h, grid.w);
    net.classifier = build_classifier_graph(classes, grid.h, grid.w);
    net.det_opt = cfg.det_opt;
    init_params(net.detector, net.det_params, cfg.seed);
    if (auto* md = std::get_if<ModelDriven>(&net.generator)) {
        md->smooth.epsilon = cfg.eps_init;
        md->smooth.learnable = cfg.eps_learnable;
        if (cfg.eps_learnable) {
            if (!(cfg.eps_init > 0.0)) throw ConfigError("make_gcnet: eps_init must be positive");
            Param eps;
            eps.value = Tensor({1});
            eps.value.v[0] = std::log(cfg.eps_init);
            eps.grad = Tensor({1});
            net.det_params.p.emplace(kEpsParam, std::move(eps));
        }
    }
    return net;
}

double current_eps(const GcNet& net) {
    const auto* md = std::get_if<ModelDriven>(&net.generator);
    if (!md) throw UsageError("current_eps: generator is not model-driven");
    if (md->smooth.learnable) return std::exp(net.det_params.at(kEpsParam).value.v[0]);
    return md->smooth.epsilon;
}

Batch assemble_batch(const Dataset& ds, const std::vector<int>& indices) {
    if (indices.empty()) throw UsageError("assemble_batch: empty index list");
    const int n = static_cast<int>(indices.size());
    Batch b;
    b.images = Tensor({n, 3, ds.img_h, ds.img_w});
    b.labels.resize(static_cast<std::size_t>(n));
    const std::size_t sample = static_cast<std::size_t>(3) * ds.img_h * ds.img_w;
    for (int i = 0; i < n; ++i) {
        const SampleRecord& rec = ds.records.at(static_cast<std::size_t>(indices[static_cast<std::size_t>(i)]));
        std::copy(rec.image.begin(), rec.image.end(), b.images.data() + i * static_cast<std::int64_t>(sample));
        b.labels[static_cast<std::size_t>(i)] = rec.label;
    }
    return b;
}

namespace {

std::vector<int> shuffled_indices(int count, Rng& rng) {
    std::vector<int> idx(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int i = count - 1; i > 0; --i)
        std::swap(idx[static_cast<std::size_t>(i)],
                  idx[static_cast<std::size_t>(rng.uniform_index(static_cast<std::uint64_t>(i) + 1))]);
    return idx;
}

void log_step(std::ostream* log, const char* phase, int step, double la, double lo, double lb, double total) {
    if (!log) return;
    char line[160];
    std::snprintf(line, sizeof(line), "%s %d %.6f %.6f %.6f %.6f", phase, step, la, lo, lb, total);
    (*log) << line << '\n';
}

double test_accuracy(const GcNet& net, const Dataset& test, Exec ex) {
    int hit = 0;
    const int total = static_cast<int>(test.records.size());
    std::vector<int> idx;
    for (int base = 0; base < total; base += 64) {
        const int n = std::min(64, total - base);
        idx.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = base + i;
        const Batch b = assemble_batch(test, idx);
        auto [logits, tape] = forward(net.classifier, net.cls_params, b.images, ex);
        for (int i = 0; i < n; ++i)
            if (argmax_lowest(logits.data() + static_cast<std::int64_t>(i) * net.classes, net.classes) ==
                b.labels[static_cast<std::size_t>(i)])
                ++hit;
    }
    return hit / static_cast<double>(total);
}

}  // namespace

double pretrain_classifier(GcNet& net, const Dataset& train, const Dataset& test,
                           const TrainConfig& cfg, std::ostream* log, Exec ex) {
    if (train.classes > net.classes) throw ConfigError("pretrain_classifier: dataset has more classes than the net");
    std::uint64_t sm = cfg.seed + 1;
    init_params(net.classifier, net.cls_params, splitmix64(sm));
    Rng shuffle_rng(splitmix64(sm));
    const int batch = std::max(1, cfg.cls_opt.batch_size);
    int step_index = 0;
    for (int epoch = 0; epoch < cfg.cls_epochs; ++epoch) {
        const std::vector<int> order = shuffled_indices(static_cast<int>(train.records.size()), shuffle_rng);
        for (std::size_t base = 0; base < order.size(); base += static_cast<std::size_t>(batch)) {
            const std::size_t n = std::min<std::size_t>(batch, order.size() - base);
            const std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(base),
                                       order.begin() + static_cast<std::ptrdiff_t>(base + n));
            const Batch b = assemble_batch(train, idx);
            auto [logits, tape] = forward(net.classifier, net.cls_params, b.images, ex);
            const LogitsLossResult obj = object_loss(logits, b.labels);
            if (!std::isfinite(obj.value))
                throw TrainingError("classifier pretraining diverged at step " + std::to_string(step_index + 1));
            backward(net.classifier, net.cls_params, tape, obj.grad, ex);
            step(net.cls_params, cfg.cls_opt);
            ++step_index;
            log_step(log, "classifier", step_index, 0.0, obj.value, 0.0, obj.value);
        }
    }
    net.cls_params.set_frozen(true);
    return test_accuracy(net, test, ex);
}

LossParts detector_loss_and_grads(GcNet& net, const Batch& batch, bool want_grads, int step_index, Exec ex) {
    const int n = static_cast<int>(batch.images.dim(0));
    const int h = net.grid.h, w = net.grid.w;
    if (static_cast<int>(batch.labels.size()) != n) throw UsageError("detector_train_step: label count mismatch");
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    const std::int64_t sample = 3 * plane;
    const int arity = net.detector_arity();

    auto [raw, det_tape] = forward(net.detector, net.det_params, batch.images, ex);

    std::vector<ShapeParams> shapes(static_cast<std::size_t>(n));
    std::vector<std::array<double, 5>> jac(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        shapes[static_cast<std::size_t>(i)] =
            activate_one(raw.data() + static_cast<std::int64_t>(i) * arity, arity, net.kind,
                         jac[static_cast<std::size_t>(i)].data());

    // Generator forward.
    const auto* ld = std::get_if<LearningDriven>(&net.generator);
    LearnedBatch lb;
    std::vector<MaskGrid> masks(static_cast<std::size_t>(n));
    Smoothness live_smooth;
    if (ld) {
        Tensor coeffs({n, 5});
        for (int i = 0; i < n; ++i) {
            const ShapeParams& s = shapes[static_cast<std::size_t>(i)];
            double* row = coeffs.data() + static_cast<std::int64_t>(i) * 5;
            row[0] = s.c_x; row[1] = s.c_y; row[2] = s.a; row[3] = s.b; row[4] = s.theta;
        }
        lb = learned_batch_forward(*ld, coeffs, ex);
        const std::int64_t nat = static_cast<std::int64_t>(ld->native_h) * ld->native_w;
        for (int i = 0; i < n; ++i) {
            MaskGrid native(ld->native_h, ld->native_w);
            std::copy(lb.native.data() + i * nat, lb.native.data() + (i + 1) * nat, native.v.begin());
            MaskGrid m = bilinear_resize(native, h, w);
            for (double& v : m.v) v = std::clamp(v, 0.0, 1.0);
            masks[static_cast<std::size_t>(i)] = std::move(m);
        }
    } else {
        live_smooth = Smoothness{current_eps(net), std::get<ModelDriven>(net.generator).smooth.learnable};
        for (int i = 0; i < n; ++i)
            masks[static_cast<std::size_t>(i)] = rasterize(shapes[static_cast<std::size_t>(i)], live_smooth, net.grid, ex);
    }

    // Masked object / background batches.
    Tensor xo({n, 3, h, w}), xb({n, 3, h, w});
    for (int i = 0; i < n; ++i) {
        const double* img = batch.images.data() + i * sample;
        const MaskGrid& m = masks[static_cast<std::size_t>(i)];
        for (int c = 0; c < 3; ++c) {
            const double* ic = img + c * plane;
            double* oc = xo.data() + i * sample + c * plane;
            double* bc = xb.data() + i * sample + c * plane;
            for (std::int64_t k = 0; k < plane; ++k) {
                oc[k] = m.v[static_cast<std::size_t>(k)] * ic[k];
                bc[k] = (1.0 - m.v[static_cast<std::size_t>(k)]) * ic[k];
            }
        }
    }

    auto [logits_o, tape_o] = forward(net.classifier, net.cls_params, xo, ex);
    auto [logits_b, tape_b] = forward(net.classifier, net.cls_params, xb, ex);

    std::vector<double> ext_a(static_cast<std::size_t>(n)), ext_b(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        ext_a[static_cast<std::size_t>(i)] = shapes[static_cast<std::size_t>(i)].a;
        ext_b[static_cast<std::size_t>(i)] = shapes[static_cast<std::size_t>(i)].b;
    }
    const AreaLossResult ar = area_loss(ext_a, ext_b);
    const LogitsLossResult obj = object_loss(logits_o, batch.labels);
    const LogitsLossResult bg = background_loss(logits_b);

    LossParts parts;
    parts.area = ar.value;
    parts.object = obj.value;
    parts.background = bg.value;
    parts.total = combined_loss(ar.value, obj.value, bg.value, net.weights);
    if (!std::isfinite(parts.total) || !std::isfinite(parts.area) || !std::isfinite(parts.object) ||
        !std::isfinite(parts.background))
        throw TrainingError("detector training produced a non-finite loss at step " + std::to_string(step_index));

    if (!want_grads) return parts;

    // Upstream dL/dMask per sample; classifier passes contribute only with
    // nonzero weight.
    const double beta = net.weights.beta, gamma = net.weights.gamma, alpha = net.weights.alpha;
    std::vector<MaskGrid> d_mask(static_cast<std::size_t>(n), MaskGrid(h, w));
    const bool need_mask_grad = beta != 0.0 || gamma != 0.0;
    if (need_mask_grad) {
        Tensor d_logits_o(obj.grad.dims), d_logits_b(bg.grad.dims);
        for (std::size_t k = 0; k < d_logits_o.v.size(); ++k) d_logits_o.v[k] = beta * obj.grad.v[k];
        for (std::size_t k = 0; k < d_logits_b.v.size(); ++k) d_logits_b.v[k] = gamma * bg.grad.v[k];
        Tensor dxo, dxb;
        if (beta != 0.0) dxo = backward(net.classifier, net.cls_params, tape_o, d_logits_o, ex);
        if (gamma != 0.0) dxb = backward(net.classifier, net.cls_params, tape_b, d_logits_b, ex);
        net.cls_params.zero_grads();
        for (int i = 0; i < n; ++i) {
            MaskGrid& dm = d_mask[static_cast<std::size_t>(i)];
            const double* img = batch.images.data() + i * sample;
            for (int c = 0; c < 3; ++c) {
                const double* ic = img + c * plane;
                const double* po = beta != 0.0 ? dxo.data() + i * sample + c * plane : nullptr;
                const double* pb = gamma != 0.0 ? dxb.data() + i * sample + c * plane : nullptr;
                for (std::int64_t k = 0; k < plane; ++k) {
                    double g = 0.0;
                    if (po) g += po[k] * ic[k];
                    if (pb) g -= pb[k] * ic[k];
                    dm.v[static_cast<std::size_t>(k)] += g;
                }
            }
        }
    }

    // Coefficient gradients: mask path plus the direct area term.
    std::vector<CoeffGrad> cg(static_cast<std::size_t>(n));
    if (need_mask_grad) {
        if (ld) {
            Tensor up({n, 1, ld->native_h, ld->native_w});
            const std::int64_t nat = static_cast<std::int64_t>(ld->native_h) * ld->native_w;
            for (int i = 0; i < n; ++i) {
                const MaskGrid un = bilinear_resize_backward(d_mask[static_cast<std::size_t>(i)], ld->native_h, ld->native_w);
                std::copy(un.v.begin(), un.v.end(), up.data() + i * nat);
            }
            ParamStore scratch = ld->params;
            const Tensor gc = learned_batch_backward(*ld, scratch, lb, up, ex);
            for (int i = 0; i < n; ++i) {
                const double* row = gc.data() + static_cast<std::int64_t>(i) * 5;
                CoeffGrad& g = cg[static_cast<std::size_t>(i)];
                g.c_x = row[0]; g.c_y = row[1]; g.a = row[2]; g.b = row[3]; g.theta = row[4];
            }
        } else {
            const GeneratorMode live = ModelDriven{live_smooth};
            for (int i = 0; i < n; ++i)
                cg[static_cast<std::size_t>(i)] = generator_backward(live, shapes[static_cast<std::size_t>(i)],
                                                                     net.grid, d_mask[static_cast<std::size_t>(i)], ex);
        }
    }
    for (int i = 0; i < n; ++i) {
        cg[static_cast<std::size_t>(i)].a += alpha * ar.d_a[static_cast<std::size_t>(i)];
        cg[static_cast<std::size_t>(i)].b += alpha * ar.d_b[static_cast<std::size_t>(i)];
    }

    // Through the activation Jacobian into the detector.
    Tensor draw({n, arity});
    for (int i = 0; i < n; ++i) {
        const CoeffGrad& g = cg[static_cast<std::size_t>(i)];
        const double* j = jac[static_cast<std::size_t>(i)].data();
        double* row = draw.data() + static_cast<std::int64_t>(i) * arity;
        row[0] = g.c_x * j[0];
        row[1] = g.c_y * j[1];
        row[2] = g.a * j[2];
        row[3] = g.b * j[3];
        if (arity == 5) row[4] = g.theta * j[4];
    }
    backward(net.detector, net.det_params, det_tape, draw, ex);
    if (!ld && live_smooth.learnable) {
        double deps = 0.0;
        for (const CoeffGrad& g : cg) deps += g.eps;
        net.det_params.at(kEpsParam).grad.v[0] += deps * live_smooth.epsilon;
    }
    return parts;
}

LossParts detector_train_step(GcNet& net, const Batch& batch, int step_index, std::ostream* log, Exec ex) {
    const LossParts parts = detector_loss_and_grads(net, batch, true, step_index, ex);
    step(net.det_params, net.det_opt);
    log_step(log, "detector", step_index, parts.area, parts.object, parts.background, parts.total);
    return parts;
}

void train_detector(GcNet& net, const Dataset& train, const TrainConfig& cfg, std::ostream* log, Exec ex) {
    std::uint64_t sm = cfg.seed + 2;
    Rng shuffle_rng(splitmix64(sm));
    const int batch = std::max(1, net.det_opt.batch_size);
    int step_index = 0;
    for (int epoch = 0; epoch < cfg.det_epochs; ++epoch) {
        const std::vector<int> order = shuffled_indices(static_cast<int>(train.records.size()), shuffle_rng);
        for (std::size_t base = 0; base < order.size(); base += static_cast<std::size_t>(batch)) {
            const std::size_t count = std::min<std::size_t>(batch, order.size() - base);
            const std::vector<int> idx(order.begin() + static_cast<std::ptrdiff_t>(base),
                                       order.begin() + static_cast<std::ptrdiff_t>(base + count));
            detector_train_step(net, assemble_batch(train, idx), ++step_index, log, ex);
        }
    }
}

InferResult infer(const GcNet& net, const std::vector<double>& image, Exec ex) {
    const std::int64_t sample = static_cast<std::int64_t>(3) * net.grid.h * net.grid.w;
    if (static_cast<std::int64_t>(image.size()) != sample) throw UsageError("infer: image dims mismatch");
    Tensor x({1, 3, net.grid.h, net.grid.w});
    std::copy(image.begin(), image.end(), x.data());

    InferResult r;
    auto [logits, cls_tape] = forward(net.classifier, net.cls_params, x, ex);
    r.scores.assign(logits.data(), logits.data() + net.classes);
    r.label = argmax_lowest(r.scores.data(), net.classes);

    auto [raw, det_tape] = forward(net.detector, net.det_params, x, ex);
    r.shape = activate_one(raw.data(), net.detector_arity(), net.kind, nullptr);
    r.bbox = induced_bbox(r.shape);
    return r;
}

std::vector<EvalRecord> evaluate_records(const GcNet& net, const Dataset& ds, Exec ex) {
    const int total = static_cast<int>(ds.records.size());
    if (total == 0) throw UsageError("evaluate_records: empty dataset");
    std::vector<EvalRecord> out(static_cast<std::size_t>(total));
    std::vector<int> idx;
    for (int base = 0; base < total; base += 64) {
        const int n = std::min(64, total - base);
        idx.resize(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = base + i;
        const Batch b = assemble_batch(ds, idx);
        auto [logits, cls_tape] = forward(net.classifier, net.cls_params, b.images, ex);
        auto [raw, det_tape] = forward(net.detector, net.det_params, b.images, ex);
        for (int i = 0; i < n; ++i) {
            EvalRecord& r = out[static_cast<std::size_t>(base + i)];
            const SampleRecord& rec = ds.records[static_cast<std::size_t>(base + i)];
            r.gt_label = rec.label;
            r.gt_bbox = rec.gt_bbox;
            r.scores.assign(logits.data() + static_cast<std::int64_t>(i) * net.classes,
                            logits.data() + static_cast<std::int64_t>(i + 1) * net.classes);
            const ShapeParams sp = activate_one(raw.data() + static_cast<std::int64_t>(i) * net.detector_arity(),
                                                net.detector_arity(), net.kind, nullptr);
            r.pred_bbox = induced_bbox(sp);
        }
    }
    return out;
}

std::vector<AblationRow> run_ablation(const GcNet& base, const Dataset& train, const Dataset& test,
                                      const TrainConfig& cfg, std::ostream* log, Exec ex) {
    struct Subset {
        const char* name;
        LossWeights w;
    };
    const Subset subsets[4] = {
        {"L_o", {0.0, 1.0, 0.0}},
        {"L_o+L_a", {cfg.weights.alpha, cfg.weights.beta, 0.0}},
        {"L_o+L_b", {0.0, cfg.weights.beta, cfg.weights.gamma}},
        {"L_a+L_o+L_b", {cfg.weights.alpha, cfg.weights.beta, cfg.weights.gamma}},
    };
    std::vector<AblationRow> rows;
    for (const Subset& sub : subsets) {
        GcNet net = make_gcnet(base.kind, base.generator, base.classes, base.grid, cfg);
        net.classifier = base.classifier;
        net.cls_params = base.cls_params;
        net.weights = sub.w;
        if (log) (*log) << "# ablation " << sub.name << '\n';
        train_detector(net, train, cfg, log, ex);
        AblationRow row;
        row.name = sub.name;
        row.weights = sub.w;
        row.report = evaluate(evaluate_records(net, test, ex));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_table(const std::vector<AblationRow>& rows) {
    std::string out = "losses            CorLoc  LocErr@1  ClsErr@1  meanIoU\n"
                      "----------------  ------  --------  --------  -------\n";
    for (const AblationRow& r : rows) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-16s  %6.2f  %8.2f  %8.2f  %7.4f\n", r.name.c_str(),
                      r.report.corloc, r.report.loc_err_top1, r.report.cls_err_top1, r.report.mean_iou);
        out += line;
    }
    return out;
}

}  // namespace gcnet

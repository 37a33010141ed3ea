#include "gcnet/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <variant>

#include "gcnet/checkpoint.hpp"
#include "gcnet/errors.hpp"

namespace gcnet {

namespace {

namespace fs = std::filesystem;

std::string timestamp_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y%m%d-%H%M%S", &tm);
    return buf;
}

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void RunContext::write_report(const std::string& name, const std::string& text) const {
    std::ofstream f(reports + "/" + name, std::ios::trunc);
    if (!f) throw IoError("cannot write report: " + reports + "/" + name);
    f << text;
    if (!text.empty() && text.back() != '\n') f << '\n';
}

RunContext make_run_dir(const std::string& out_root, const std::string& command, const Config& cfg) {
    char hash[20];
    std::snprintf(hash, sizeof(hash), "%08llx",
                  static_cast<unsigned long long>(cfg.content_hash() & 0xffffffffULL));
    const std::string base = out_root + "/" + command + "-" + hash + "-" + timestamp_now();
    std::string dir = base;
    for (int n = 1; fs::exists(dir); ++n) dir = base + "-" + std::to_string(n);

    RunContext ctx;
    ctx.dir = dir;
    ctx.checkpoints = dir + "/checkpoints";
    ctx.reports = dir + "/reports";
    ctx.renders = dir + "/renders";
    fs::create_directories(ctx.checkpoints);
    fs::create_directories(ctx.reports);
    fs::create_directories(ctx.renders);
    ctx.log.open(dir + "/log.txt", std::ios::trunc);
    if (!ctx.log) throw IoError("cannot open " + dir + "/log.txt");
    return ctx;
}

void validate_params(const NetworkGraph& net, const ParamStore& store) {
    ParamStore expected;
    init_params(net, expected, 0);
    for (const auto& [name, param] : expected.p) {
        const auto it = store.p.find(name);
        if (it == store.p.end()) throw ConfigError("checkpoint is missing parameter '" + name + "'");
        if (!(it->second.value.dims == param.value.dims))
            throw ConfigError("checkpoint parameter '" + name + "' has dims " +
                              dims_str(it->second.value.dims) + ", expected " + dims_str(param.value.dims));
    }
}

void save_model(const std::string& checkpoints_dir, const GcNet& net) {
    fs::create_directories(checkpoints_dir);
    std::ofstream meta(checkpoints_dir + "/model.meta", std::ios::trunc);
    if (!meta) throw IoError("cannot write " + checkpoints_dir + "/model.meta");
    meta << "kind = " << shape_kind_name(net.kind) << "\n";
    meta << "classes = " << net.classes << "\n";
    meta << "img_h = " << net.grid.h << "\n";
    meta << "img_w = " << net.grid.w << "\n";
    meta << "alpha = " << fmt_double(net.weights.alpha) << "\n";
    meta << "beta = " << fmt_double(net.weights.beta) << "\n";
    meta << "gamma = " << fmt_double(net.weights.gamma) << "\n";
    if (const auto* ld = std::get_if<LearningDriven>(&net.generator)) {
        meta << "generator = learned\n";
        meta << "native_h = " << ld->native_h << "\n";
        meta << "native_w = " << ld->native_w << "\n";
        save_params(checkpoints_dir + "/generator.ckpt", ld->params);
    } else {
        const auto& md = std::get<ModelDriven>(net.generator);
        meta << "generator = model\n";
        meta << "eps = " << fmt_double(md.smooth.learnable ? current_eps(net) : md.smooth.epsilon) << "\n";
        meta << "eps_learnable = " << (md.smooth.learnable ? "true" : "false") << "\n";
    }
    if (!meta) throw IoError("write failed: " + checkpoints_dir + "/model.meta");
    save_params(checkpoints_dir + "/detector.ckpt", net.det_params);
    save_params(checkpoints_dir + "/classifier.ckpt", net.cls_params);
}

GcNet load_model(const std::string& checkpoints_dir) {
    Config meta = Config::from_file(checkpoints_dir + "/model.meta");
    const ShapeKind kind = shape_kind_from_name(meta.require_str("kind"));
    const int classes = meta.get_int("classes", 0);
    const GridSpec grid(meta.get_int("img_h", 0), meta.get_int("img_w", 0));
    const std::string gen_kind = meta.require_str("generator");

    TrainConfig cfg;
    cfg.weights.alpha = meta.get_double("alpha", 1.0);
    cfg.weights.beta = meta.get_double("beta", 1.0);
    cfg.weights.gamma = meta.get_double("gamma", 1.0);

    GeneratorMode generator;
    if (gen_kind == "learned") {
        LearningDriven ld = make_learned_generator(kind, 0);
        ld.native_h = meta.get_int("native_h", 64);
        ld.native_w = meta.get_int("native_w", 64);
        ParamStore loaded = load_params(checkpoints_dir + "/generator.ckpt");
        validate_params(ld.net, loaded);
        ld.params = std::move(loaded);
        generator = std::move(ld);
    } else if (gen_kind == "model") {
        cfg.eps_init = meta.get_double("eps", 0.1);
        cfg.eps_learnable = meta.get_bool("eps_learnable", true);
        generator = ModelDriven{Smoothness{cfg.eps_init, cfg.eps_learnable}};
    } else {
        throw ConfigError("model.meta: unknown generator mode '" + gen_kind + "'");
    }
    meta.reject_unknown();

    GcNet net = make_gcnet(kind, std::move(generator), classes, grid, cfg);
    ParamStore det = load_params(checkpoints_dir + "/detector.ckpt");
    validate_params(net.detector, det);
    if (cfg.eps_learnable && std::get_if<ModelDriven>(&net.generator) && !det.p.count("det.eps_log"))
        throw ConfigError("detector checkpoint is missing det.eps_log");
    net.det_params = std::move(det);
    ParamStore cls = load_params(checkpoints_dir + "/classifier.ckpt");
    validate_params(net.classifier, cls);
    net.cls_params = std::move(cls);
    return net;
}

SynthConfig synth_config_from(Config& cfg) {
    SynthConfig sc;
    sc.families.clear();
    for (const std::string& name : cfg.get_list("families", "rotated_ellipse,rotated_rectangle"))
        sc.families.push_back(shape_kind_from_name(name));
    sc.color_count = cfg.get_int("colors", sc.color_count);
    sc.img_h = cfg.get_int("img_h", sc.img_h);
    sc.img_w = cfg.get_int("img_w", sc.img_w);
    sc.train_count = cfg.get_int("train_count", sc.train_count);
    sc.test_count = cfg.get_int("test_count", sc.test_count);
    sc.extent_a_min = cfg.get_double("extent_a_min", sc.extent_a_min);
    sc.extent_a_max = cfg.get_double("extent_a_max", sc.extent_a_max);
    sc.extent_b_min = cfg.get_double("extent_b_min", sc.extent_b_min);
    sc.extent_b_max = cfg.get_double("extent_b_max", sc.extent_b_max);
    sc.theta_min_deg = cfg.get_double("theta_min_deg", sc.theta_min_deg);
    sc.theta_max_deg = cfg.get_double("theta_max_deg", sc.theta_max_deg);
    sc.theta_mirror = cfg.get_bool("theta_mirror", sc.theta_mirror);
    sc.bg_amplitude = cfg.get_double("bg_amplitude", sc.bg_amplitude);
    sc.seed = cfg.get_u64("seed", sc.seed);
    return sc;
}

TrainConfig train_config_from(Config& cfg, const LossWeights& default_weights) {
    TrainConfig tc;
    tc.cls_opt.lr = cfg.get_double("cls_lr", tc.cls_opt.lr);
    tc.cls_opt.momentum = cfg.get_double("cls_momentum", tc.cls_opt.momentum);
    tc.cls_opt.batch_size = cfg.get_int("cls_batch", tc.cls_opt.batch_size);
    tc.cls_epochs = cfg.get_int("cls_epochs", tc.cls_epochs);
    tc.det_opt.lr = cfg.get_double("det_lr", tc.det_opt.lr);
    tc.det_opt.batch_size = cfg.get_int("det_batch", tc.det_opt.batch_size);
    tc.det_epochs = cfg.get_int("det_epochs", tc.det_epochs);
    tc.weights.alpha = cfg.get_double("alpha", default_weights.alpha);
    tc.weights.beta = cfg.get_double("beta", default_weights.beta);
    tc.weights.gamma = cfg.get_double("gamma", default_weights.gamma);
    tc.eps_init = cfg.get_double("eps_init", tc.eps_init);
    tc.eps_learnable = cfg.get_bool("eps_learnable", tc.eps_learnable);
    tc.seed = cfg.get_u64("seed", tc.seed);
    return tc;
}

namespace {

void draw_box(ImageU8& img, const Aabb& box, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    const int j0 = std::clamp(static_cast<int>(std::lround(box.x_min * img.w)), 0, img.w - 1);
    const int j1 = std::clamp(static_cast<int>(std::lround(box.x_max * img.w)) - 1, 0, img.w - 1);
    const int i0 = std::clamp(static_cast<int>(std::lround(box.y_min * img.h)), 0, img.h - 1);
    const int i1 = std::clamp(static_cast<int>(std::lround(box.y_max * img.h)) - 1, 0, img.h - 1);
    auto put = [&](int i, int j) {
        std::uint8_t* px = img.px.data() + (static_cast<std::size_t>(i) * img.w + j) * 3;
        px[0] = r;
        px[1] = g;
        px[2] = b;
    };
    for (int j = j0; j <= j1; ++j) {
        put(i0, j);
        put(i1, j);
    }
    for (int i = i0; i <= i1; ++i) {
        put(i, j0);
        put(i, j1);
    }
}

}  // namespace

ImageU8 render_overlay(const SampleRecord& rec, int img_h, int img_w, const ShapeParams& pred,
                       const Aabb& pred_bbox) {
    ImageU8 img = quantize_image(rec.image, 3, img_h, img_w);
    const GridSpec grid(img_h, img_w);

    // Predicted outline: pixels whose level-set sign flips toward the right
    // or lower neighbor.
    for (int i = 0; i < img_h; ++i)
        for (int j = 0; j < img_w; ++j) {
            const double p0 = phi(pred, grid.pixel_x(j), grid.pixel_y(i));
            bool edge = false;
            if (j + 1 < img_w && p0 * phi(pred, grid.pixel_x(j + 1), grid.pixel_y(i)) <= 0.0) edge = true;
            if (!edge && i + 1 < img_h && p0 * phi(pred, grid.pixel_x(j), grid.pixel_y(i + 1)) <= 0.0)
                edge = true;
            if (edge) {
                std::uint8_t* px = img.px.data() + (static_cast<std::size_t>(i) * img_w + j) * 3;
                px[0] = 255;
                px[1] = 220;
                px[2] = 0;
            }
        }
    draw_box(img, rec.gt_bbox, 0, 200, 0);
    draw_box(img, pred_bbox, 230, 0, 0);
    return img;
}

}  // namespace gcnet

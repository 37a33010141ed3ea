#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "gcnet/errors.hpp"
#include "gcnet/fdcheck.hpp"
#include "gcnet/pipeline.hpp"
#include "gcnet/rng.hpp"

using namespace gcnet;

namespace {

SynthConfig mini_synth() {
    SynthConfig cfg;
    cfg.families = {ShapeKind::RotatedEllipse};
    cfg.color_count = 2;
    cfg.img_h = 16;
    cfg.img_w = 16;
    cfg.train_count = 64;
    cfg.test_count = 32;
    cfg.seed = 11;
    return cfg;
}

const DatasetPair& mini_data() {
    static const DatasetPair dp = generate_dataset(mini_synth());
    return dp;
}

TrainConfig mini_train_cfg() {
    TrainConfig cfg;
    cfg.cls_opt.lr = 0.05;
    cfg.cls_opt.batch_size = 16;
    cfg.cls_epochs = 8;
    cfg.det_opt.lr = 1e-2;
    cfg.det_opt.batch_size = 8;
    cfg.det_epochs = 2;
    cfg.seed = 13;
    return cfg;
}

struct TrainedBase {
    GcNet net;
    double accuracy = 0.0;
    std::string log;
};

// Classifier pretraining is the slow part of this suite; run it once and hand
// copies to the detector tests.
const TrainedBase& trained_base() {
    static const TrainedBase tb = [] {
        TrainedBase t{make_gcnet(ShapeKind::RotatedEllipse, ModelDriven{},
                                 mini_data().train.classes, GridSpec(16, 16), mini_train_cfg()),
                      0.0, {}};
        std::ostringstream log;
        t.accuracy =
            pretrain_classifier(t.net, mini_data().train, mini_data().test, mini_train_cfg(), &log);
        t.log = log.str();
        return t;
    }();
    return tb;
}

std::map<std::string, std::vector<double>> param_values(const ParamStore& ps) {
    std::map<std::string, std::vector<double>> out;
    for (const auto& [name, p] : ps.p) out[name] = p.value.v;
    return out;
}

double mean_predicted_extent_product(const GcNet& net, const Dataset& ds) {
    double acc = 0.0;
    for (const SampleRecord& r : ds.records) {
        const InferResult ir = infer(net, r.image);
        acc += ir.shape.a * ir.shape.b;
    }
    return acc / static_cast<double>(ds.records.size());
}

}  // namespace

TEST_CASE("activate_coefficients maps raw outputs into valid ranges") {
    const ShapeParams mid = activate_coefficients({0, 0, 0, 0, 0}, ShapeKind::RotatedEllipse);
    CHECK(mid.c_x == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mid.c_y == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mid.a == doctest::Approx((kAMin + 1.0) / 2.0).epsilon(1e-15));
    CHECK(mid.b == doctest::Approx((kAMin + 1.0) / 2.0).epsilon(1e-15));
    CHECK(mid.theta == 0.0);
    CHECK_NOTHROW(mid.validate());

    const ShapeParams rect = activate_coefficients({0.3, -0.2, 0.1, 0.4}, ShapeKind::Rectangle);
    CHECK(rect.kind == ShapeKind::Rectangle);
    CHECK(rect.theta == 0.0);
    CHECK_NOTHROW(rect.validate());

    // Saturated logits stay strictly inside the open ranges.
    const ShapeParams sat = activate_coefficients({50, -50, 50, -50, 50}, ShapeKind::RotatedEllipse);
    CHECK_NOTHROW(sat.validate());
    CHECK(sat.c_x < 1.0);
    CHECK(sat.c_y > 0.0);
    CHECK(sat.a < 1.0);
    CHECK(sat.b > kAMin);
    CHECK(std::abs(sat.theta) < 1.5707963267948966);

    // Monotone in the raw center logit.
    double prev = -1.0;
    for (double r : {-2.0, -0.5, 0.0, 0.5, 2.0}) {
        const double cx = activate_coefficients({r, 0, 0, 0, 0}, ShapeKind::RotatedEllipse).c_x;
        CHECK(cx > prev);
        prev = cx;
    }
}

TEST_CASE("activate_coefficients rejects wrong arity and non-finite values") {
    CHECK_THROWS_AS(activate_coefficients({0, 0, 0, 0, 0}, ShapeKind::Rectangle), ConfigError);
    CHECK_THROWS_AS(activate_coefficients({0, 0, 0, 0}, ShapeKind::RotatedEllipse), ConfigError);
    CHECK_THROWS_AS(activate_coefficients({0, 0, 0, 0}, ShapeKind::RotatedRectangle), ConfigError);
    const double inf = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(activate_coefficients({inf, 0, 0, 0}, ShapeKind::Rectangle), UsageError);
}

TEST_CASE("object and background masks partition the image") {
    Rng rng(29);
    MaskGrid m(6, 5);
    for (double& v : m.v) v = rng.uniform();
    std::vector<double> image(3 * 6 * 5);
    for (double& v : image) v = rng.uniform();

    const std::vector<double> obj = mask_object(image, 3, m);
    const std::vector<double> bg = mask_background(image, 3, m);
    REQUIRE(obj.size() == image.size());
    const std::size_t plane = m.v.size();
    for (std::size_t i = 0; i < image.size(); ++i) {
        CHECK(obj[i] == m.v[i % plane] * image[i]);
        CHECK(obj[i] + bg[i] == doctest::Approx(image[i]).epsilon(1e-15));
    }

    MaskGrid ones(6, 5);
    ones.v.assign(ones.v.size(), 1.0);
    CHECK(mask_object(image, 3, ones) == image);
    CHECK(mask_background(image, 3, ones) == std::vector<double>(image.size(), 0.0));
    MaskGrid zeros(6, 5);
    CHECK(mask_object(image, 3, zeros) == std::vector<double>(image.size(), 0.0));
    CHECK(mask_background(image, 3, zeros) == image);

    CHECK_THROWS_AS(mask_object(image, 1, m), UsageError);
    CHECK_THROWS_AS(mask_background(std::vector<double>(7), 3, m), UsageError);
}

TEST_CASE("head graphs produce the advertised output dims") {
    Rng rng(31);
    Tensor x({2, 3, 16, 16});
    for (double& v : x.v) v = rng.uniform();

    NetworkGraph cls = build_classifier_graph(8, 16, 16);
    ParamStore cls_ps;
    init_params(cls, cls_ps, 1);
    auto [logits, t1] = forward(cls, cls_ps, x, Exec::Serial);
    CHECK(logits.dims == std::vector<int>{2, 8});

    NetworkGraph det5 = build_detector_graph(ShapeKind::RotatedEllipse, 16, 16);
    ParamStore det5_ps;
    init_params(det5, det5_ps, 2);
    auto [raw5, t2] = forward(det5, det5_ps, x, Exec::Serial);
    CHECK(raw5.dims == std::vector<int>{2, 5});

    NetworkGraph det4 = build_detector_graph(ShapeKind::Rectangle, 16, 16);
    ParamStore det4_ps;
    init_params(det4, det4_ps, 3);
    auto [raw4, t3] = forward(det4, det4_ps, x, Exec::Serial);
    CHECK(raw4.dims == std::vector<int>{2, 4});
}

TEST_CASE("make_gcnet wires the learnable smoothing into the detector store") {
    TrainConfig cfg = mini_train_cfg();
    cfg.eps_init = 0.07;

    GcNet learnable = make_gcnet(ShapeKind::RotatedEllipse, ModelDriven{}, 2, GridSpec(16, 16), cfg);
    CHECK(learnable.det_params.p.count("det.eps_log") == 1);
    CHECK(current_eps(learnable) == doctest::Approx(0.07).epsilon(1e-14));

    cfg.eps_learnable = false;
    GcNet fixed = make_gcnet(ShapeKind::RotatedEllipse, ModelDriven{}, 2, GridSpec(16, 16), cfg);
    CHECK(fixed.det_params.p.count("det.eps_log") == 0);
    CHECK(current_eps(fixed) == 0.07);

    GcNet learned = make_gcnet(ShapeKind::Rectangle,
                               make_learned_generator(ShapeKind::Rectangle, 5), 2,
                               GridSpec(16, 16), cfg);
    CHECK(learned.det_params.p.count("det.eps_log") == 0);
    CHECK_THROWS_AS(current_eps(learned), UsageError);

    CHECK_THROWS_AS(make_gcnet(ShapeKind::Rectangle,
                               make_learned_generator(ShapeKind::RotatedEllipse, 5), 2,
                               GridSpec(16, 16), cfg),
                    ConfigError);
    CHECK_THROWS_AS(make_gcnet(ShapeKind::Rectangle, ModelDriven{}, 1, GridSpec(16, 16), cfg),
                    ConfigError);
}

TEST_CASE("assemble_batch stacks records in index order") {
    const Dataset& ds = mini_data().train;
    const Batch b = assemble_batch(ds, {0, 2, 5});
    CHECK(b.images.dims == std::vector<int>{3, 3, 16, 16});
    REQUIRE(b.labels.size() == 3);
    CHECK(b.labels[0] == ds.records[0].label);
    CHECK(b.labels[2] == ds.records[5].label);
    const std::size_t sample = ds.records[0].image.size();
    for (std::size_t k = 0; k < sample; ++k) {
        CHECK(b.images.v[k] == ds.records[0].image[k]);
        CHECK(b.images.v[2 * sample + k] == ds.records[5].image[k]);
    }
    CHECK_THROWS_AS(assemble_batch(ds, {}), UsageError);
}

TEST_CASE("classifier pretraining separates the mini classes and freezes") {
    const TrainedBase& tb = trained_base();
    CHECK(tb.accuracy > 0.85);
    for (const auto& [name, p] : tb.net.cls_params.p) {
        CHECK(p.frozen);
        CHECK(name.rfind("cls.", 0) == 0);
    }

    // Log lines: "classifier <step> L_a L_o L_b total" with zero area and
    // background columns and total == L_o.
    std::istringstream is(tb.log);
    std::string line;
    int lines = 0;
    while (std::getline(is, line)) {
        ++lines;
        std::istringstream ls(line);
        std::string phase;
        int step = 0;
        double la = 0, lo = 0, lb = 0, total = 0;
        REQUIRE((ls >> phase >> step >> la >> lo >> lb >> total));
        CHECK(phase == "classifier");
        CHECK(step == lines);
        CHECK(la == 0.0);
        CHECK(lb == 0.0);
        CHECK(total == doctest::Approx(lo).epsilon(1e-12));
    }
    CHECK(lines == 8 * (64 / 16));
}

TEST_CASE("detector_loss_and_grads touches only the detector store") {
    GcNet net = trained_base().net;
    const Batch batch = assemble_batch(mini_data().train, {0, 1, 2, 3});

    const auto cls_before = param_values(net.cls_params);
    net.det_params.zero_grads();
    const LossParts plain = detector_loss_and_grads(net, batch, /*want_grads=*/false);
    CHECK(std::isfinite(plain.total));
    CHECK(plain.total == doctest::Approx(net.weights.alpha * plain.area +
                                         net.weights.beta * plain.object +
                                         net.weights.gamma * plain.background)
                             .epsilon(1e-12));
    for (const auto& [name, p] : net.det_params.p)
        for (double g : p.grad.v) CHECK(g == 0.0);

    const LossParts graded = detector_loss_and_grads(net, batch, /*want_grads=*/true);
    CHECK(graded.total == doctest::Approx(plain.total).epsilon(1e-12));
    double grad_mag = 0.0;
    for (const auto& [name, p] : net.det_params.p)
        for (double g : p.grad.v) grad_mag += std::abs(g);
    CHECK(grad_mag > 0.0);
    CHECK(net.det_params.p.at("det.eps_log").grad.v.size() == 1);
    CHECK(net.det_params.step_count == 0);  // no optimizer step
    CHECK(param_values(net.cls_params) == cls_before);
}

TEST_CASE("detector_train_step moves the detector and logs the loss parts") {
    GcNet net = trained_base().net;
    const Batch batch = assemble_batch(mini_data().train, {4, 5, 6, 7});
    const auto det_before = param_values(net.det_params);
    const auto cls_before = param_values(net.cls_params);

    std::ostringstream log;
    const LossParts parts = detector_train_step(net, batch, 3, &log);
    CHECK(std::isfinite(parts.total));
    CHECK(net.det_params.step_count == 1);
    CHECK(param_values(net.det_params) != det_before);
    CHECK(param_values(net.cls_params) == cls_before);

    std::istringstream ls(log.str());
    std::string phase;
    int step = 0;
    double la = 0, lo = 0, lb = 0, total = 0;
    REQUIRE((ls >> phase >> step >> la >> lo >> lb >> total));
    CHECK(phase == "detector");
    CHECK(step == 3);
    CHECK(la == doctest::Approx(parts.area).epsilon(1e-5));
    CHECK(lo == doctest::Approx(parts.object).epsilon(1e-5));
    CHECK(lb == doctest::Approx(parts.background).epsilon(1e-5));
    CHECK(total == doctest::Approx(parts.total).epsilon(1e-5));
}

TEST_CASE("detector training leaves the frozen stages bit-identical") {
    GcNet net = trained_base().net;
    const auto cls_before = param_values(net.cls_params);
    TrainConfig cfg = mini_train_cfg();
    cfg.det_epochs = 2;
    train_detector(net, mini_data().train, cfg);
    CHECK(param_values(net.cls_params) == cls_before);
    CHECK(net.det_params.step_count == 2 * (64 / 8));
}

TEST_CASE("an area-only objective shrinks the predicted blobs") {
    GcNet net = trained_base().net;
    net.weights = LossWeights{1.0, 0.0, 0.0};
    const double before = mean_predicted_extent_product(net, mini_data().test);
    TrainConfig cfg = mini_train_cfg();
    cfg.det_epochs = 8;
    cfg.det_opt.lr = 1e-2;
    net.det_opt.lr = 1e-2;
    train_detector(net, mini_data().train, cfg);
    const double after = mean_predicted_extent_product(net, mini_data().test);
    CHECK(after < before);
}

TEST_CASE("micro pipeline gradients match finite differences") {
    const FdResult r = fd_check_micro_pipeline(ShapeKind::RotatedEllipse, false, 1e-3, 3);
    INFO(r.line());
    CHECK(r.pass);
    CHECK(r.compared > 0);
}

TEST_CASE("infer is deterministic and reports the induced box") {
    const GcNet& net = trained_base().net;
    const SampleRecord& rec = mini_data().test.records[0];
    const InferResult a = infer(net, rec.image);
    const InferResult b = infer(net, rec.image);
    CHECK(a.scores == b.scores);
    CHECK(a.label == b.label);
    REQUIRE(static_cast<int>(a.scores.size()) == net.classes);

    int best = 0;
    for (int i = 1; i < net.classes; ++i)
        if (a.scores[static_cast<std::size_t>(i)] > a.scores[static_cast<std::size_t>(best)]) best = i;
    CHECK(a.label == best);

    CHECK_NOTHROW(a.shape.validate());
    const Aabb ib = induced_bbox(a.shape);
    CHECK(a.bbox.x_min == ib.x_min);
    CHECK(a.bbox.y_max == ib.y_max);
    CHECK(a.bbox.x_min >= 0.0);
    CHECK(a.bbox.y_min >= 0.0);
    CHECK(a.bbox.x_max <= 1.0);
    CHECK(a.bbox.y_max <= 1.0);

    CHECK_THROWS_AS(infer(net, std::vector<double>(10)), UsageError);
}

TEST_CASE("evaluate_records mirrors per-sample inference") {
    const GcNet& net = trained_base().net;
    const Dataset& ds = mini_data().test;
    const std::vector<EvalRecord> rs = evaluate_records(net, ds);
    REQUIRE(rs.size() == ds.records.size());
    for (std::size_t i = 0; i < 3; ++i) {
        const InferResult ir = infer(net, ds.records[i].image);
        CHECK(rs[i].gt_label == ds.records[i].label);
        CHECK(rs[i].gt_bbox.x_min == ds.records[i].gt_bbox.x_min);
        REQUIRE(rs[i].scores.size() == ir.scores.size());
        for (std::size_t k = 0; k < ir.scores.size(); ++k)
            CHECK(rs[i].scores[k] == doctest::Approx(ir.scores[k]).epsilon(1e-9));
        CHECK(rs[i].pred_bbox.x_min == doctest::Approx(ir.bbox.x_min).epsilon(1e-9));
    }
    const double cl = corloc(rs);
    CHECK(cl >= 0.0);
    CHECK(cl <= 100.0);

    Dataset empty;
    CHECK_THROWS_AS(evaluate_records(net, empty), UsageError);
}

TEST_CASE("run_ablation trains the four documented loss subsets") {
    const GcNet& base = trained_base().net;
    TrainConfig cfg = mini_train_cfg();
    cfg.det_epochs = 1;
    std::ostringstream log;
    const std::vector<AblationRow> rows =
        run_ablation(base, mini_data().train, mini_data().test, cfg, &log);

    REQUIRE(rows.size() == 4);
    CHECK(rows[0].name == "L_o");
    CHECK(rows[1].name == "L_o+L_a");
    CHECK(rows[2].name == "L_o+L_b");
    CHECK(rows[3].name == "L_a+L_o+L_b");

    CHECK(rows[0].weights.alpha == 0.0);
    CHECK(rows[0].weights.beta == 1.0);
    CHECK(rows[0].weights.gamma == 0.0);
    CHECK(rows[1].weights.gamma == 0.0);
    CHECK(rows[2].weights.alpha == 0.0);
    CHECK(rows[3].weights.alpha == cfg.weights.alpha);
    CHECK(rows[3].weights.gamma == cfg.weights.gamma);

    for (const AblationRow& r : rows) {
        CHECK(r.report.corloc >= 0.0);
        CHECK(r.report.corloc <= 100.0);
    }
    const std::string table = ablation_table(rows);
    for (const AblationRow& r : rows) CHECK(table.find(r.name) != std::string::npos);
    CHECK(log.str().find("# ablation L_o\n") != std::string::npos);
}

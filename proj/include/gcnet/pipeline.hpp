#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "gcnet/exec.hpp"
#include "gcnet/grid.hpp"
#include "gcnet/losses.hpp"
#include "gcnet/maskgen.hpp"
#include "gcnet/metrics.hpp"
#include "gcnet/net.hpp"
#include "gcnet/shape.hpp"
#include "gcnet/synthdata.hpp"

namespace gcnet {

// Sigmoid-to-range activation of raw detector outputs: c_x,c_y = s(r);
// a,b = a_min + (1-a_min)*s(r); theta = (s(r)-0.5)*pi. Rectangle takes 4
// outputs and pins theta to 0; rotated kinds take 5. Wrong arity throws
// ConfigError.
ShapeParams activate_coefficients(const std::vector<double>& raw, ShapeKind kind);

// Pixelwise M*I and (1-M)*I on a planar [channels][h][w] image. The two
// outputs sum to the input exactly.
std::vector<double> mask_object(const std::vector<double>& image, int channels, const MaskGrid& m);
std::vector<double> mask_background(const std::vector<double>& image, int channels, const MaskGrid& m);

// Detector (trainable), generator and classifier (both frozen), assembled
// over one grid. When the generator is model-driven with learnable epsilon,
// the live value is the detector-store param "<det prefix>.eps_log" and the
// stored Smoothness tracks exp() of it.
struct GcNet {
    ShapeKind kind = ShapeKind::RotatedEllipse;
    int classes = 0;
    GridSpec grid;
    LossWeights weights;

    NetworkGraph detector;
    ParamStore det_params;
    GeneratorMode generator;
    NetworkGraph classifier;
    ParamStore cls_params;
    OptimizerConfig det_opt;  // applied by detector_train_step

    int detector_arity() const { return kind == ShapeKind::Rectangle ? 4 : 5; }
};

// Trunk shared by both heads: 3x[Conv3x3+ReLU+MaxPool2x2] at widths 8/16/32.
// Classifier adds GAP -> Dense(classes); detector flattens the last feature
// map into Dense(4 or 5).
NetworkGraph build_classifier_graph(int classes, int img_h, int img_w);
NetworkGraph build_detector_graph(ShapeKind kind, int img_h, int img_w);

struct TrainConfig {
    OptimizerConfig cls_opt;  // SGD, lr 1e-3, momentum 0.9, batch 32
    int cls_epochs = 30;
    OptimizerConfig det_opt;  // Adam, lr 1e-4, batch 32
    int det_epochs = 20;
    LossWeights weights;      // learning-driven default (1,1,1)
    double eps_init = 0.1;    // model-driven smoothing, learnable by default
    bool eps_learnable = true;
    std::uint64_t seed = 7;

    TrainConfig() {
        cls_opt.kind = OptimizerConfig::Kind::SGD;
        cls_opt.lr = 1e-3;
        cls_opt.momentum = 0.9;
        cls_opt.batch_size = 32;
        det_opt.kind = OptimizerConfig::Kind::Adam;
        det_opt.lr = 1e-4;
        det_opt.batch_size = 32;
    }
};

// Fresh GcNet with an initialized detector; classifier params start
// uninitialized until pretraining or checkpoint load. Model-driven learnable
// epsilon is registered in det_params as "det.eps_log".
GcNet make_gcnet(ShapeKind kind, GeneratorMode generator, int classes, const GridSpec& grid,
                 const TrainConfig& cfg);

double current_eps(const GcNet& net);  // model-driven only

struct Batch {
    Tensor images;            // {N,3,H,W}
    std::vector<int> labels;
};

Batch assemble_batch(const Dataset& ds, const std::vector<int>& indices);

// Cross-entropy training on full images; logs `classifier step 0 L_o 0 L_o`
// per step, freezes the weights, returns test accuracy in [0,1]. Throws
// TrainingError on non-finite loss.
double pretrain_classifier(GcNet& net, const Dataset& train, const Dataset& test,
                           const TrainConfig& cfg, std::ostream* log = nullptr,
                           Exec ex = Exec::Parallel);

struct LossParts {
    double area = 0.0;
    double object = 0.0;
    double background = 0.0;
    double total = 0.0;
};

// Losses of the full chain for one batch: detector forward, activation,
// generator, object/background masking, two classifier passes. With
// want_grads, total-loss gradients accumulate into det_params (epsilon
// included) and nowhere else; no optimizer step. FD harnesses call this with
// want_grads = false as the plain loss function.
LossParts detector_loss_and_grads(GcNet& net, const Batch& batch, bool want_grads,
                                  int step_index = 0, Exec ex = Exec::Parallel);

// detector_loss_and_grads followed by one optimizer step on det_params.
// step_index is used in logs and errors.
LossParts detector_train_step(GcNet& net, const Batch& batch, int step_index,
                              std::ostream* log = nullptr, Exec ex = Exec::Parallel);

// Epoch loop over shuffled batches driving detector_train_step.
void train_detector(GcNet& net, const Dataset& train, const TrainConfig& cfg,
                    std::ostream* log = nullptr, Exec ex = Exec::Parallel);

struct InferResult {
    int label = 0;
    std::vector<double> scores;  // classifier logits on the full image
    ShapeParams shape;
    Aabb bbox;
};

InferResult infer(const GcNet& net, const std::vector<double>& image, Exec ex = Exec::Parallel);

// Batched inference over a dataset -> metric records.
std::vector<EvalRecord> evaluate_records(const GcNet& net, const Dataset& ds, Exec ex = Exec::Parallel);

struct AblationRow {
    std::string name;
    LossWeights weights;
    MetricsReport report;
};

// Trains four detectors with matched seeds over the loss subsets {L_o},
// {L_o,L_a}, {L_o,L_b}, {L_a,L_o,L_b} against a shared frozen classifier and
// generator, evaluating each on the test split.
std::vector<AblationRow> run_ablation(const GcNet& base, const Dataset& train, const Dataset& test,
                                      const TrainConfig& cfg, std::ostream* log = nullptr,
                                      Exec ex = Exec::Parallel);

std::string ablation_table(const std::vector<AblationRow>& rows);

}  // namespace gcnet

#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "gcnet/exec.hpp"
#include "gcnet/grid.hpp"
#include "gcnet/net.hpp"
#include "gcnet/shape.hpp"

namespace gcnet {

struct CoeffSample {
    double c_x = 0.5, c_y = 0.5, a = 0.4, b = 0.4, theta = 0.0;
};

// Supervision pair for generator pretraining; mask is the exact binary
// rasterization of coeffs at the generator's native resolution.
struct PairRecord {
    CoeffSample coeffs;
    MaskGrid mask;
};

struct ModelDriven {
    Smoothness smooth;
};

// Coefficients -> Dense 144 -> 12x12 -> three TransposeConv2x stages to
// 96x96 -> bilinear resize to native -> Sigmoid. One trained network serves
// one shape kind; weights are frozen after pretraining.
struct LearningDriven {
    ShapeKind kind = ShapeKind::RotatedEllipse;
    NetworkGraph net;
    ParamStore params;
    int native_h = 64;
    int native_w = 64;
};

using GeneratorMode = std::variant<ModelDriven, LearningDriven>;

LearningDriven make_learned_generator(ShapeKind kind, std::uint64_t init_seed);

// Builds the ShapeParams a generator sees for a coefficient tuple; the
// Rectangle constraint zeroes theta.
ShapeParams shape_from_coeffs(ShapeKind kind, const CoeffSample& c);

// Gaussian draws (centers ~ N(0.5, 0.15^2), extents ~ N(0.4, 0.15^2)),
// theta uniform in (-pi/2, pi/2); out-of-range draws are redrawn.
std::vector<CoeffSample> sample_coefficients(std::uint64_t seed, int count);

struct PretrainReport {
    int iterations = 0;
    double final_train_loss = 0.0;
    double heldout_dice = 0.0;               // mean 1 - dice_loss over 1024 held-out pairs
    std::vector<std::string> log_lines;      // "iter dice_loss heldout_dice"
};

// Dice-loss supervision on sampled pairs; logs a line per 100 iterations,
// evaluates 1024 held-out samples, freezes the weights on success. Throws
// TrainingError with the iteration index if the loss leaves the finite range.
PretrainReport pretrain_generator(LearningDriven& gen, std::uint64_t seed, int iterations,
                                  const OptimizerConfig& opt, std::ostream* log = nullptr);

// ModelDriven: rasterize. LearningDriven: network forward at native
// resolution, bilinear resize to the grid, clamp to [0,1].
MaskGrid generate(const GeneratorMode& mode, const ShapeParams& shape, const GridSpec& grid,
                  Exec ex = Exec::Parallel);

struct CoeffGrad {
    double c_x = 0.0, c_y = 0.0, a = 0.0, b = 0.0, theta = 0.0;
    double eps = 0.0;  // nonzero only for ModelDriven
};

// Pulls an upstream dL/dMask on the grid back to the five coefficients
// (plus epsilon in ModelDriven mode). Re-runs the forward internally, so the
// caller does not hold tapes.
CoeffGrad generator_backward(const GeneratorMode& mode, const ShapeParams& shape,
                             const GridSpec& grid, const MaskGrid& upstream,
                             Exec ex = Exec::Parallel);

// Batched learned-generator passes shared by pretraining and detector
// training. coeffs is {N,5}; masks come back at native resolution as
// {N,1,native_h,native_w} after resize+sigmoid.
struct LearnedBatch {
    Tensor native;  // {N,1,nh,nw}, sigmoid outputs
    Tensor net_out; // {N,1,96,96}, pre-resize linear outputs
    Tape tape;
};

LearnedBatch learned_batch_forward(const LearningDriven& gen, const Tensor& coeffs, Exec ex);

// upstream_native: {N,1,nh,nw} dL/d(native mask). Accumulates parameter
// gradients into params (caller may pass a scratch copy when the generator
// is frozen) and returns dL/d(coeffs) as {N,5}.
Tensor learned_batch_backward(const LearningDriven& gen, ParamStore& params,
                              const LearnedBatch& fwd, const Tensor& upstream_native, Exec ex);

}  // namespace gcnet

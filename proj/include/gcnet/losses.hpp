#pragma once

#include <vector>

#include "gcnet/grid.hpp"
#include "gcnet/tensor.hpp"

namespace gcnet {

struct LossWeights {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
};

// Batch reduction is the mean everywhere, so gradients carry a 1/m factor.

struct AreaLossResult {
    double value = 0.0;
    std::vector<double> d_a;
    std::vector<double> d_b;
};

// a, b are per-sample extents; value = mean(a*b).
AreaLossResult area_loss(const std::vector<double>& a, const std::vector<double>& b);

struct LogitsLossResult {
    double value = 0.0;
    Tensor grad;  // same dims as logits
};

// logits: {m, n}, labels: m class indices in [0, n).
// Mean cross-entropy under softmax; grad = (softmax - onehot) / m.
LogitsLossResult object_loss(const Tensor& logits, const std::vector<int>& labels);

// Mean negative entropy of softmax rows: (1/m) sum_j sum_i p_ji log p_ji.
// Minimum -log n at the uniform point, where the gradient vanishes.
LogitsLossResult background_loss(const Tensor& logits);

double combined_loss(double area, double object, double background, const LossWeights& w);

struct DiceLossResult {
    double value = 0.0;
    MaskGrid grad;  // d value / d pred, same dims as pred
};

// 1 - (2*sum(p*q) + 1) / (sum(p) + sum(q) + 1). Smoothing keeps empty
// masks well-defined.
DiceLossResult dice_loss(const MaskGrid& pred, const MaskGrid& target);

}  // namespace gcnet

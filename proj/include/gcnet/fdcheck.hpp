#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcnet/maskgen.hpp"
#include "gcnet/pipeline.hpp"

namespace gcnet {

// One finite-difference comparison; the CLI gradcheck command and the
// acceptance harness both consume these.
struct FdResult {
    std::string name;
    double max_rel_err = 0.0;
    double tol = 0.0;
    bool pass = false;
    std::string worst;  // coefficient / parameter behind max_rel_err
    std::int64_t compared = 0;

    std::string line() const;
};

// |a - f| / max(|a|, |f|, 1e-6).
double rel_err(double analytic, double fd);

// Analytic soft-mask coefficient gradients (epsilon included) vs central FD
// over n random shapes of the kind. Compared on boundary-band pixels
// (|phi|/eps < band) that sit away from the rectangle kinds' non-smooth set.
FdResult fd_check_mask_grads(ShapeKind kind, int n_shapes, const GridSpec& grid, double eps,
                             double fd_step, double band, double tol, std::uint64_t seed);

// Gradients of area/object/background/dice losses vs central FD (step 1e-5)
// at random inputs.
std::vector<FdResult> fd_check_losses(std::uint64_t seed);

// generator_backward vs FD of sum(upstream * generate(coeffs)) over random
// shapes and a fixed random upstream field. Model-driven probes epsilon too
// and compares per element; learned mode compares each shape's coefficient
// vector in the aggregate l2 quotient ||a-f|| / max(||a||, ||f||), since FD
// probes through a ReLU network pick up kink noise that swamps components
// whose true derivative sits orders below the vector's scale.
FdResult fd_check_generator(const GeneratorMode& mode, ShapeKind kind, const GridSpec& grid,
                            int n_shapes, double tol, std::uint64_t seed);

// Total-loss FD through detector -> generator -> classifier on a 16x16
// 2-class micro instance, probing a subsample of every detector parameter
// tensor (learnable epsilon included). Aggregate l2 quotient per tensor.
FdResult fd_check_micro_pipeline(ShapeKind kind, bool learned_generator, double tol,
                                 std::uint64_t seed);

}  // namespace gcnet

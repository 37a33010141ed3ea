#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "gcnet/exec.hpp"
#include "gcnet/tensor.hpp"

namespace gcnet {

enum class LayerKind { Conv3x3, ReLU, MaxPool2x2, GlobalAvgPool, Dense, Sigmoid, TransposeConv2x };

const char* layer_kind_name(LayerKind k);

// All shapes are static and resolved at graph-build time. Spatial tensors are
// {N,C,H,W}; flat tensors are {N,F}. A layer that consumes the other
// representation reinterprets dims when the element counts agree (recorded
// here, checked in forward).
struct LayerSpec {
    LayerKind kind;
    bool spatial_in = false, spatial_out = false;
    int in_c = 0, in_h = 0, in_w = 0;
    int out_c = 0, out_h = 0, out_w = 0;
    int in_f = 0, out_f = 0;
    std::string w_name, b_name;  // empty when the layer has no parameters

    bool has_params() const { return !w_name.empty(); }
};

struct NetworkGraph {
    std::string prefix;
    std::vector<LayerSpec> layers;
    bool spatial_input = false;
    int in_c = 0, in_h = 0, in_w = 0, in_f = 0;

    // Stable fingerprint of the architecture; tapes carry it so backward can
    // reject a tape from a different graph.
    std::uint64_t signature() const;
};

// Chained construction; throws ConfigError (with the layer index) on any
// incompatible transition. reshape() is metadata only: it reinterprets the
// current flat activation as {c,h,w} for the next spatial layer.
class GraphBuilder {
public:
    GraphBuilder(std::string prefix, int c, int h, int w);
    GraphBuilder(std::string prefix, int features);

    GraphBuilder& conv3x3(int out_ch);
    GraphBuilder& relu();
    GraphBuilder& maxpool();
    GraphBuilder& gap();
    GraphBuilder& dense(int out_features);
    GraphBuilder& sigmoid();
    GraphBuilder& tconv2x(int out_ch);
    GraphBuilder& reshape(int c, int h, int w);

    NetworkGraph build();

private:
    LayerSpec& start_layer(LayerKind kind, bool with_params);
    void finish_elementwise(LayerSpec& l);

    NetworkGraph g_;
    bool spatial_ = false;
    int c_ = 0, h_ = 0, w_ = 0, f_ = 0;
    int param_layers_ = 0;
};

struct Param {
    Tensor value;
    Tensor grad;
    bool frozen = false;
    Tensor m1, m2;  // momentum / Adam moments, allocated on first step
};

struct ParamStore {
    std::map<std::string, Param> p;  // ordered by name: deterministic iteration
    std::int64_t step_count = 0;

    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    void zero_grads();
    void set_frozen(bool frozen);
};

// Allocates (if absent) and fills this graph's parameters: weights uniform in
// +-sqrt(6/(fan_in+fan_out)), biases zero. Deterministic per seed.
void init_params(const NetworkGraph& net, ParamStore& store, std::uint64_t seed);

struct Tape {
    std::uint64_t net_sig = 0;
    int batch = 0;
    std::vector<Tensor> x;                         // input of each layer
    std::vector<std::vector<std::uint8_t>> pool_idx;  // MaxPool2x2 argmax codes
};

std::pair<Tensor, Tape> forward(const NetworkGraph& net, const ParamStore& params,
                                const Tensor& input, Exec ex = Exec::Parallel);

// Accumulates (+=) parameter gradients into the store (frozen ones included)
// and returns the gradient w.r.t. the forward input.
Tensor backward(const NetworkGraph& net, ParamStore& params, const Tape& tape,
                const Tensor& grad_out, Exec ex = Exec::Parallel);

struct OptimizerConfig {
    enum class Kind { SGD, Adam };
    Kind kind = Kind::SGD;
    double lr = 0.01;
    double momentum = 0.0;
    double beta1 = 0.9, beta2 = 0.999, delta = 1e-8;
    int batch_size = 32;
};

// Updates unfrozen parameters from their accumulated gradients, zeroes every
// gradient, and bumps the step count (Adam bias correction uses it).
void step(ParamStore& store, const OptimizerConfig& cfg);

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    bool pass = false;
};

// Maps the network output to (loss, dLoss/dOutput).
using LossHead = std::function<std::pair<double, Tensor>(const Tensor&)>;

// Central finite differences (step 1e-5) on a random 5% subsample of every
// parameter tensor (at least one element each) against the backward pass.
GradCheckReport grad_check(const NetworkGraph& net, ParamStore& params, const Tensor& input,
                           const LossHead& head, double tol, std::uint64_t seed = 1234);

}  // namespace gcnet

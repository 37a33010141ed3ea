#pragma once

#include <fstream>
#include <string>

#include "gcnet/config.hpp"
#include "gcnet/image_io.hpp"
#include "gcnet/pipeline.hpp"

namespace gcnet {

// Run directory layout: <root>/<command>-<confighash>-<timestamp>/ holding
// config.resolved, log.txt, checkpoints/, reports/, renders/.
struct RunContext {
    std::string dir;
    std::string checkpoints;
    std::string reports;
    std::string renders;
    std::ofstream log;  // tees of training output go here

    void write_report(const std::string& name, const std::string& text) const;
};

RunContext make_run_dir(const std::string& out_root, const std::string& command, const Config& cfg);

// Model bundle under a checkpoints/ directory: model.meta plus
// detector.ckpt, classifier.ckpt and (learning-driven only) generator.ckpt.
void save_model(const std::string& checkpoints_dir, const GcNet& net);
GcNet load_model(const std::string& checkpoints_dir);

// Throws ConfigError when a loaded store is missing one of the graph's
// parameters or carries wrong dims.
void validate_params(const NetworkGraph& net, const ParamStore& store);

// Config-key translation shared by the CLI commands and tests.
SynthConfig synth_config_from(Config& cfg);
TrainConfig train_config_from(Config& cfg, const LossWeights& default_weights = LossWeights{});

// gt box green, induced predicted box red, predicted shape outline yellow.
ImageU8 render_overlay(const SampleRecord& rec, int img_h, int img_w, const ShapeParams& pred,
                       const Aabb& pred_bbox);

}  // namespace gcnet

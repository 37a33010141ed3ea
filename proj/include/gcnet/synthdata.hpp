#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gcnet/shape.hpp"

namespace gcnet {

// Class label = family_index * color_count + color_index. Extents below are
// full widths/heights of the blob's bounding directions; the ellipse's
// semi-axis convention is handled when the ShapeParams is built.
struct SynthConfig {
    std::vector<ShapeKind> families = {ShapeKind::RotatedEllipse, ShapeKind::RotatedRectangle};
    int color_count = 4;
    int img_h = 64;
    int img_w = 64;
    int train_count = 2000;
    int test_count = 800;
    double extent_a_min = 0.15, extent_a_max = 0.5;
    double extent_b_min = 0.15, extent_b_max = 0.5;
    double theta_min_deg = -90.0, theta_max_deg = 90.0;
    bool theta_mirror = false;  // sample |theta| in the range, then flip sign at random
    double bg_amplitude = 0.05;
    std::uint64_t seed = 1;

    int classes() const { return static_cast<int>(families.size()) * color_count; }
    void validate() const;
};

struct SampleRecord {
    std::vector<double> image;  // planar [3][h][w], values in [0,1]
    int label = 0;
    Aabb gt_bbox;               // evaluation only, never shown to training
    ShapeParams gt_shape;
    std::string filename;
};

struct Dataset {
    int img_h = 0, img_w = 0;
    int classes = 0;
    std::vector<SampleRecord> records;
};

struct DatasetPair {
    Dataset train;
    Dataset test;
};

// Deterministic per cfg.seed; train/test use disjoint derived streams;
// classes balanced within one sample.
DatasetPair generate_dataset(const SynthConfig& cfg);

// 8-bit PPM bytes for one record.
std::vector<std::uint8_t> render_sample(const SampleRecord& rec, int img_h, int img_w);

// Writes images plus index.tsv:
// filename<TAB>label<TAB>x_min y_min x_max y_max<TAB>kind c_x c_y a b theta
void save_dataset(const Dataset& ds, const std::string& dir);

// Rebuilds records from index.tsv + image files; malformed lines report
// their line number, invalid bboxes fail validation.
Dataset load_dataset(const std::string& dir);

}  // namespace gcnet

#include "gcnet/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gcnet/errors.hpp"
#include "gcnet/image_io.hpp"
#include "gcnet/raster.hpp"
#include "gcnet/resize.hpp"
#include "gcnet/rng.hpp"

namespace gcnet {

namespace {

constexpr double kPi = 3.141592653589793238462643383279502884;
constexpr double kPlacementPad = 0.01;

struct Rgb {
    double r, g, b;
};

// Base palette; per-sample jitter keeps the classifier from keying on a
// single byte value.
const Rgb kPalette[8] = {
    {0.85, 0.12, 0.12}, {0.12, 0.72, 0.15}, {0.15, 0.25, 0.88}, {0.88, 0.82, 0.12},
    {0.85, 0.45, 0.10}, {0.60, 0.15, 0.75}, {0.10, 0.75, 0.75}, {0.90, 0.40, 0.65},
};

SampleRecord make_record(const SynthConfig& cfg, int label, Rng rec_rng) {
    const int family = label / cfg.color_count;
    const int color = label % cfg.color_count;
    const ShapeKind kind = cfg.families[static_cast<std::size_t>(family)];

    Rng bg_rng = rec_rng.derive(0);
    Rng fg_rng = rec_rng.derive(1);

    ShapeParams sp;
    sp.kind = kind;
    const double ea = fg_rng.uniform(cfg.extent_a_min, cfg.extent_a_max);
    const double eb = fg_rng.uniform(cfg.extent_b_min, cfg.extent_b_max);
    sp.a = kind == ShapeKind::RotatedEllipse ? ea / 2.0 : ea;
    sp.b = kind == ShapeKind::RotatedEllipse ? eb / 2.0 : eb;
    if (kind == ShapeKind::Rectangle) {
        sp.theta = 0.0;
    } else {
        do {
            sp.theta = fg_rng.uniform(cfg.theta_min_deg, cfg.theta_max_deg) * kPi / 180.0;
            if (cfg.theta_mirror && fg_rng.uniform() < 0.5) sp.theta = -sp.theta;
        } while (std::abs(sp.theta) >= kPi / 2.0);
    }
    sp.c_x = sp.c_y = 0.5;
    const Aabb centered = induced_bbox(sp);
    const double hx = centered.width() / 2.0, hy = centered.height() / 2.0;
    sp.c_x = fg_rng.uniform(hx + kPlacementPad, 1.0 - hx - kPlacementPad);
    sp.c_y = fg_rng.uniform(hy + kPlacementPad, 1.0 - hy - kPlacementPad);
    sp.validate();

    SampleRecord rec;
    rec.label = label;
    rec.gt_shape = sp;
    rec.gt_bbox = induced_bbox(sp);

    const int h = cfg.img_h, w = cfg.img_w;
    MaskGrid lattice(4, 4);
    for (double& v : lattice.v) v = bg_rng.uniform(0.25, 0.75);
    MaskGrid bg = bilinear_resize(lattice, h, w);
    for (double& v : bg.v) v = std::clamp(v + bg_rng.uniform(-cfg.bg_amplitude, cfg.bg_amplitude), 0.02, 0.98);

    Rgb c = kPalette[color];
    c.r = std::clamp(c.r + fg_rng.uniform(-0.04, 0.04), 0.05, 0.98);
    c.g = std::clamp(c.g + fg_rng.uniform(-0.04, 0.04), 0.05, 0.98);
    c.b = std::clamp(c.b + fg_rng.uniform(-0.04, 0.04), 0.05, 0.98);

    const Smoothness edge{1.0 / (2.0 * std::max(h, w)), false};
    const MaskGrid m = rasterize(sp, edge, GridSpec(h, w));

    rec.image.resize(static_cast<std::size_t>(3) * h * w);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const double rgb[3] = {c.r, c.g, c.b};
    for (int ch = 0; ch < 3; ++ch)
        for (std::size_t i = 0; i < plane; ++i)
            rec.image[ch * plane + i] = m.v[i] * rgb[ch] + (1.0 - m.v[i]) * bg.v[i];
    return rec;
}

Dataset make_split(const SynthConfig& cfg, const Rng& split_root, int count, const char* prefix) {
    Dataset ds;
    ds.img_h = cfg.img_h;
    ds.img_w = cfg.img_w;
    ds.classes = cfg.classes();
    ds.records.resize(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        SampleRecord rec = make_record(cfg, i % ds.classes, split_root.derive(static_cast<std::uint64_t>(i)));
        char name[48];
        std::snprintf(name, sizeof(name), "%s_%06d.ppm", prefix, i);
        rec.filename = name;
        ds.records[static_cast<std::size_t>(i)] = std::move(rec);
    }
    return ds;
}

}  // namespace

void SynthConfig::validate() const {
    if (families.empty() || color_count < 1 || classes() < 2) throw ConfigError("synth: need at least 2 classes");
    if (color_count > 8) throw ConfigError("synth: palette supports at most 8 colors");
    if (img_h < 8 || img_w < 8) throw ConfigError("synth: image size must be at least 8x8");
    if (train_count < 1 || test_count < 1) throw ConfigError("synth: counts must be positive");
    auto bad_range = [](double lo, double hi) { return !(lo > 0.0 && lo <= hi && hi <= 1.0); };
    if (bad_range(extent_a_min, extent_a_max) || bad_range(extent_b_min, extent_b_max))
        throw ConfigError("synth: extent ranges must satisfy 0 < min <= max <= 1");
    if (!(theta_min_deg <= theta_max_deg) || theta_min_deg < -90.0 || theta_max_deg > 90.0)
        throw ConfigError("synth: theta range must lie within [-90, 90] degrees");
    if (theta_mirror && theta_min_deg < 0.0) throw ConfigError("synth: mirrored theta range must be nonnegative");
    if (bg_amplitude < 0.0 || bg_amplitude > 0.4) throw ConfigError("synth: bg amplitude must be in [0, 0.4]");
    // Worst half-span over kinds and angles is hypot(ea, eb)/2 (rotated
    // rectangle at 45 degrees); placement needs it plus padding inside [0,1].
    if (std::hypot(extent_a_max, extent_b_max) / 2.0 + kPlacementPad >= 0.5)
        throw ConfigError("synth: extents too large to place inside the image");
}

DatasetPair generate_dataset(const SynthConfig& cfg) {
    cfg.validate();
    const Rng root(cfg.seed);
    DatasetPair dp;
    dp.train = make_split(cfg, root.derive(1), cfg.train_count, "train");
    dp.test = make_split(cfg, root.derive(2), cfg.test_count, "test");
    return dp;
}

std::vector<std::uint8_t> render_sample(const SampleRecord& rec, int img_h, int img_w) {
    return encode_ppm(quantize_image(rec.image, 3, img_h, img_w));
}

void save_dataset(const Dataset& ds, const std::string& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream index(dir + "/index.tsv", std::ios::trunc);
    if (!index) throw IoError("cannot write " + dir + "/index.tsv");
    for (const SampleRecord& rec : ds.records) {
        write_bytes(dir + "/" + rec.filename, render_sample(rec, ds.img_h, ds.img_w));
        char line[256];
        std::snprintf(line, sizeof(line), "%s\t%d\t%.6f %.6f %.6f %.6f\t%s %.6f %.6f %.6f %.6f %.6f",
                      rec.filename.c_str(), rec.label, rec.gt_bbox.x_min, rec.gt_bbox.y_min,
                      rec.gt_bbox.x_max, rec.gt_bbox.y_max, shape_kind_name(rec.gt_shape.kind),
                      rec.gt_shape.c_x, rec.gt_shape.c_y, rec.gt_shape.a, rec.gt_shape.b,
                      rec.gt_shape.theta);
        index << line << '\n';
    }
    if (!index) throw IoError("write failed: " + dir + "/index.tsv");
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream index(dir + "/index.tsv");
    if (!index) throw IoError("cannot open " + dir + "/index.tsv");
    Dataset ds;
    std::string line;
    int line_no = 0;
    while (std::getline(index, line)) {
        ++line_no;
        if (line.empty()) continue;
        const std::string where = "index.tsv line " + std::to_string(line_no) + ": ";
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t tab = line.find('\t', start);
            fields.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (fields.size() != 4) throw ParseError(where + "expected 4 tab-separated fields");

        SampleRecord rec;
        rec.filename = fields[0];
        char kind_name[64];
        try {
            rec.label = std::stoi(fields[1]);
        } catch (const std::exception&) {
            throw ParseError(where + "bad label");
        }
        if (rec.label < 0) throw ParseError(where + "negative label");
        if (std::sscanf(fields[2].c_str(), "%lf %lf %lf %lf", &rec.gt_bbox.x_min, &rec.gt_bbox.y_min,
                        &rec.gt_bbox.x_max, &rec.gt_bbox.y_max) != 4)
            throw ParseError(where + "bad bbox field");
        if (std::sscanf(fields[3].c_str(), "%63s %lf %lf %lf %lf %lf", kind_name, &rec.gt_shape.c_x,
                        &rec.gt_shape.c_y, &rec.gt_shape.a, &rec.gt_shape.b, &rec.gt_shape.theta) != 6)
            throw ParseError(where + "bad shape field");
        try {
            rec.gt_shape.kind = shape_kind_from_name(kind_name);
        } catch (const ParseError&) {
            throw ParseError(where + "unknown shape kind '" + kind_name + "'");
        }
        if (!(rec.gt_bbox.x_min >= 0.0 && rec.gt_bbox.x_min <= rec.gt_bbox.x_max && rec.gt_bbox.x_max <= 1.0 &&
              rec.gt_bbox.y_min >= 0.0 && rec.gt_bbox.y_min <= rec.gt_bbox.y_max && rec.gt_bbox.y_max <= 1.0))
            throw ParseError(where + "bbox outside the unit square");

        const ImageU8 img = read_image(dir + "/" + rec.filename);
        if (img.channels != 3) throw ParseError(where + "expected an RGB image");
        if (ds.records.empty()) {
            ds.img_h = img.h;
            ds.img_w = img.w;
        } else if (img.h != ds.img_h || img.w != ds.img_w) {
            throw ParseError(where + "image dims differ from the rest of the dataset");
        }
        rec.image = dequantize_image(img);
        ds.classes = std::max(ds.classes, rec.label + 1);
        ds.records.push_back(std::move(rec));
    }
    if (ds.records.empty()) throw ParseError("index.tsv: no records");
    return ds;
}

}  // namespace gcnet

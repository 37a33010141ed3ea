#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "gcnet/checkpoint.hpp"
#include "gcnet/config.hpp"
#include "gcnet/errors.hpp"
#include "gcnet/image_io.hpp"
#include "gcnet/rng.hpp"

using namespace gcnet;
namespace fs = std::filesystem;

namespace {

struct TmpDir {
    fs::path path;
    explicit TmpDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("gcnet_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TmpDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

}  // namespace

TEST_CASE("config parses keys, comments, and blanks") {
    Config cfg = Config::from_string(
        "# full-line comment\n"
        "\n"
        "alpha = 1.5\n"
        "name= run_a   # trailing comment\n"
        "  count =7\n"
        "flag = yes\n"
        "big = 18446744073709551615\n");
    CHECK(cfg.get_double("alpha", 0.0) == 1.5);
    CHECK(cfg.get_str("name", "") == "run_a");
    CHECK(cfg.get_int("count", 0) == 7);
    CHECK(cfg.get_bool("flag", false));
    CHECK(cfg.get_u64("big", 0) == 18446744073709551615ULL);
    CHECK(cfg.get_int("absent", 42) == 42);
    CHECK_NOTHROW(cfg.reject_unknown());
}

TEST_CASE("config parse errors carry the origin and line number") {
    CHECK_THROWS_WITH_AS(Config::from_string("a = 1\nbroken line\n", "f.cfg"),
                         doctest::Contains("f.cfg:2"), ParseError);
    CHECK_THROWS_WITH_AS(Config::from_string("a = 1\na = 2\n"),
                         doctest::Contains("duplicate key 'a'"), ParseError);
    CHECK_THROWS_WITH_AS(Config::from_string("= 5\n"), doctest::Contains("empty key"), ParseError);
}

TEST_CASE("config typed getters reject malformed values") {
    Config cfg = Config::from_string("i = abc\nd = 1.2.3\nb = maybe\nu = 12x\n");
    CHECK_THROWS_WITH_AS(cfg.get_int("i", 0), doctest::Contains("not an integer"), ConfigError);
    CHECK_THROWS_WITH_AS(cfg.get_double("d", 0.0), doctest::Contains("not a number"), ConfigError);
    CHECK_THROWS_WITH_AS(cfg.get_bool("b", false), doctest::Contains("not a boolean"), ConfigError);
    CHECK_THROWS_AS(cfg.get_u64("u", 0), ConfigError);
}

TEST_CASE("config boolean forms") {
    Config cfg = Config::from_string("a=true\nb=1\nc=yes\nd=false\ne=0\nf=no\n");
    CHECK(cfg.get_bool("a", false));
    CHECK(cfg.get_bool("b", false));
    CHECK(cfg.get_bool("c", false));
    CHECK_FALSE(cfg.get_bool("d", true));
    CHECK_FALSE(cfg.get_bool("e", true));
    CHECK_FALSE(cfg.get_bool("f", true));
}

TEST_CASE("config lists trim items and drop empties") {
    Config cfg = Config::from_string("kinds =  a , b,c ,, \n");
    CHECK(cfg.get_list("kinds", "") == std::vector<std::string>{"a", "b", "c"});
    CHECK(cfg.get_list("missing", "x, y") == std::vector<std::string>{"x", "y"});
}

TEST_CASE("set replaces values and require_str demands presence") {
    Config cfg = Config::from_string("mode = a\n");
    cfg.set("mode", "b");
    CHECK(cfg.require_str("mode") == "b");
    CHECK_THROWS_WITH_AS(cfg.require_str("gone"), doctest::Contains("missing required key"),
                         ConfigError);
}

TEST_CASE("reject_unknown names every unconsumed key") {
    Config cfg = Config::from_string("known = 1\nmystery_a = 2\nmystery_b = 3\n");
    cfg.get_int("known", 0);
    try {
        cfg.reject_unknown();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("'mystery_a'") != std::string::npos);
        CHECK(msg.find("'mystery_b'") != std::string::npos);
        CHECK(msg.find("keys") != std::string::npos);
    }
}

TEST_CASE("resolved lists consumed keys with effective values, sorted") {
    Config cfg = Config::from_string("zeta = 9\n");
    cfg.get_int("zeta", 0);
    cfg.get_double("alpha", 2.5);  // default, still logged
    const std::string r = cfg.resolved();
    const auto a = r.find("alpha = ");
    const auto z = r.find("zeta = 9");
    REQUIRE(a != std::string::npos);
    REQUIRE(z != std::string::npos);
    CHECK(a < z);
}

TEST_CASE("content_hash ignores line order but not values") {
    const Config a = Config::from_string("x = 1\ny = 2\n");
    const Config b = Config::from_string("y = 2\nx = 1\n");
    Config c = Config::from_string("x = 1\ny = 3\n");
    CHECK(a.content_hash() == b.content_hash());
    CHECK(a.content_hash() != c.content_hash());
    c.set("y", "2");
    CHECK(a.content_hash() == c.content_hash());
}

TEST_CASE("config file loading") {
    TmpDir dir("cfg");
    const std::string path = dir.str() + "/run.cfg";
    std::ofstream(path) << "steps = 11\n";
    Config cfg = Config::from_file(path);
    CHECK(cfg.get_int("steps", 0) == 11);
    CHECK_THROWS_AS(Config::from_file(dir.str() + "/none.cfg"), IoError);
}

TEST_CASE("checkpoint round-trip preserves values, flags, and step count") {
    TmpDir dir("ckpt");
    ParamStore store;
    Param w;
    w.value = Tensor({2, 3});
    w.value.v = {0.1, -3.7e-300, 1.0 / 3.0, 2.0, -0.0, 5e307};
    w.grad = Tensor({2, 3});
    w.grad.fill(9.0);  // must not survive the round-trip
    w.frozen = true;
    store.p.emplace("net.L0.w", std::move(w));
    Param b;
    b.value = Tensor({4});
    b.value.v = {1e-17, -2.0, 0.25, 7.0};
    b.grad = Tensor({4});
    store.p.emplace("net.L0.b", std::move(b));
    store.step_count = 5;

    const std::string path = dir.str() + "/model.ckpt";
    save_params(path, store);
    const ParamStore back = load_params(path);

    REQUIRE(back.p.size() == 2);
    CHECK(back.step_count == 5);
    const Param& w2 = back.p.at("net.L0.w");
    CHECK(w2.value.dims == std::vector<int>{2, 3});
    CHECK(w2.value.v == store.p.at("net.L0.w").value.v);
    CHECK(w2.frozen);
    for (double g : w2.grad.v) CHECK(g == 0.0);
    const Param& b2 = back.p.at("net.L0.b");
    CHECK_FALSE(b2.frozen);
    CHECK(b2.value.v == store.p.at("net.L0.b").value.v);
}

TEST_CASE("checkpoint load failures") {
    TmpDir dir("ckpt_bad");
    CHECK_THROWS_AS(load_params(dir.str() + "/missing.ckpt"), IoError);

    const std::string wrong = dir.str() + "/wrong.ckpt";
    std::ofstream(wrong) << "NOPE\nstep 0\ntensors 0\n";
    CHECK_THROWS_WITH_AS(load_params(wrong), doctest::Contains("bad checkpoint magic"), ParseError);

    ParamStore store;
    Param w;
    w.value = Tensor({8});
    for (int i = 0; i < 8; ++i) w.value.v[static_cast<std::size_t>(i)] = i;
    store.p.emplace("t", std::move(w));
    const std::string path = dir.str() + "/trunc.ckpt";
    save_params(path, store);
    const auto full = fs::file_size(path);
    fs::resize_file(path, full - 8);
    CHECK_THROWS_AS(load_params(path), ParseError);
}

TEST_CASE("quantization rounds and inverts within half a step") {
    std::vector<double> planar = {0.0, 1.0, 127.0 / 255.0, 0.4, 0.7001, 0.2}; // 1x2x3
    const ImageU8 img = quantize_image(planar, 1, 2, 3);
    CHECK(img.px == std::vector<std::uint8_t>{0, 255, 127, 102, 179, 51});
    const std::vector<double> back = dequantize_image(img);
    for (std::size_t i = 0; i < planar.size(); ++i)
        CHECK(std::abs(back[i] - planar[i]) <= 0.5 / 255.0 + 1e-12);
    // Exact at grid points.
    CHECK(back[2] == 127.0 / 255.0);
    CHECK_THROWS_AS(quantize_image(planar, 3, 2, 3), UsageError);
}

TEST_CASE("ppm and pgm round-trips are exact") {
    Rng rng(3);
    ImageU8 rgb;
    rgb.h = 5;
    rgb.w = 7;
    rgb.channels = 3;
    rgb.px.resize(5 * 7 * 3);
    for (auto& p : rgb.px) p = static_cast<std::uint8_t>(rng.uniform_index(256));
    const std::vector<std::uint8_t> ppm = encode_ppm(rgb);
    CHECK(ppm[0] == 'P');
    CHECK(ppm[1] == '6');
    const ImageU8 rgb2 = decode_image(ppm);
    CHECK(rgb2.h == 5);
    CHECK(rgb2.w == 7);
    CHECK(rgb2.channels == 3);
    CHECK(rgb2.px == rgb.px);

    ImageU8 gray;
    gray.h = 4;
    gray.w = 6;
    gray.channels = 1;
    gray.px.resize(24);
    for (auto& p : gray.px) p = static_cast<std::uint8_t>(rng.uniform_index(256));
    const ImageU8 gray2 = decode_image(encode_pgm(gray));
    CHECK(gray2.channels == 1);
    CHECK(gray2.px == gray.px);

    CHECK_THROWS_AS(encode_pgm(rgb), UsageError);
    CHECK_THROWS_AS(encode_ppm(gray), UsageError);
}

TEST_CASE("png round-trips are exact for gray and rgb") {
    Rng rng(5);
    for (int channels : {1, 3}) {
        ImageU8 img;
        img.h = 9;
        img.w = 13;
        img.channels = channels;
        img.px.resize(static_cast<std::size_t>(9 * 13 * channels));
        for (auto& p : img.px) p = static_cast<std::uint8_t>(rng.uniform_index(256));
        const std::vector<std::uint8_t> png = encode_png(img);
        REQUIRE(png.size() > 8);
        CHECK(png[0] == 0x89);
        CHECK(png[1] == 'P');
        const ImageU8 back = decode_image(png);
        CHECK(back.h == img.h);
        CHECK(back.w == img.w);
        CHECK(back.channels == channels);
        CHECK(back.px == img.px);
    }
}

TEST_CASE("write_image and read_image dispatch on the extension") {
    TmpDir dir("img");
    Rng rng(7);
    ImageU8 img;
    img.h = 3;
    img.w = 4;
    img.channels = 3;
    img.px.resize(36);
    for (auto& p : img.px) p = static_cast<std::uint8_t>(rng.uniform_index(256));
    for (const char* name : {"a.ppm", "a.png"}) {
        const std::string path = dir.str() + "/" + name;
        write_image(path, img);
        CHECK(read_image(path).px == img.px);
    }
    CHECK_THROWS_AS(write_image(dir.str() + "/a.bmp", img), UsageError);
    CHECK_THROWS_AS(read_image(dir.str() + "/none.ppm"), IoError);
}

TEST_CASE("mask dump stores exact doubles; mask images quantize") {
    TmpDir dir("mask");
    MaskGrid m(3, 5);
    Rng rng(9);
    for (double& v : m.v) v = rng.uniform();
    m.v[0] = 1.0 / 3.0;

    const std::string dump = dir.str() + "/m.bin";
    write_mask_dump(dump, m);
    const MaskGrid back = read_mask_dump(dump);
    CHECK(back.h == 3);
    CHECK(back.w == 5);
    CHECK(back.v == m.v);

    const std::string pgm = dir.str() + "/m.pgm";
    write_mask_pgm(pgm, m);
    const ImageU8 img = read_image(pgm);
    CHECK(img.channels == 1);
    for (std::size_t i = 0; i < m.v.size(); ++i)
        CHECK(img.px[i] == static_cast<std::uint8_t>(std::lround(255.0 * m.v[i])));

    const std::string png = dir.str() + "/m.png";
    write_mask_png(png, m);
    CHECK(read_image(png).px == img.px);
}

TEST_CASE("decode_image rejects garbage") {
    CHECK_THROWS_AS(decode_image({'h', 'e', 'l', 'l', 'o'}), ParseError);
    CHECK_THROWS_AS(decode_image({}), ParseError);
    // A PNG signature with nothing behind it.
    CHECK_THROWS_AS(decode_image({0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a}), ParseError);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

namespace fs = std::filesystem;

namespace {

std::string bin_path() {
    const char* env = std::getenv("GCNET_BIN");
    REQUIRE_MESSAGE(env != nullptr, "GCNET_BIN must point at the gcnet binary");
    return env;
}

struct RunResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

struct TmpDir {
    fs::path path;
    explicit TmpDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("gcnet_cli_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TmpDir() { fs::remove_all(path); }
    std::string str() const { return path.string(); }
};

RunResult run_cli(const TmpDir& dir, const std::string& args) {
    static int counter = 0;
    const fs::path out = dir.path / ("stdout_" + std::to_string(counter) + ".txt");
    const fs::path err = dir.path / ("stderr_" + std::to_string(counter) + ".txt");
    ++counter;
    const std::string cmd =
        "\"" + bin_path() + "\" " + args + " >" + out.string() + " 2>" + err.string();
    const int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

// First line suffix after `key`; empty when absent.
std::string find_value(const std::string& text, const std::string& key) {
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto pos = line.find(key);
        if (pos != std::string::npos) return line.substr(pos + key.size());
    }
    return "";
}

void write_synth_cfg(const fs::path& p, const std::string& dataset_dir) {
    std::ofstream f(p);
    f << "families = rectangle\n"
      << "colors = 2\n"
      << "img_h = 24\nimg_w = 24\n"
      << "train_count = 40\ntest_count = 8\n"
      << "seed = 5\n"
      << "dataset_dir = " << dataset_dir << "\n";
}

}  // namespace

TEST_CASE("synth is reproducible and writes the run layout") {
    TmpDir dir("synth");
    write_synth_cfg(dir.path / "a.cfg", dir.str() + "/ds_a");
    write_synth_cfg(dir.path / "b.cfg", dir.str() + "/ds_b");

    const RunResult a =
        run_cli(dir, "synth --config " + dir.str() + "/a.cfg --out " + dir.str() + "/runs_a");
    INFO(a.err);
    REQUIRE(a.exit_code == 0);
    CHECK(a.out.find("40 train / 8 test") != std::string::npos);
    const RunResult b =
        run_cli(dir, "synth --config " + dir.str() + "/b.cfg --out " + dir.str() + "/runs_b");
    REQUIRE(b.exit_code == 0);

    CHECK(slurp(dir.path / "ds_a/train/index.tsv") == slurp(dir.path / "ds_b/train/index.tsv"));
    CHECK(slurp(dir.path / "ds_a/train/index.tsv").size() > 0);
    CHECK(slurp(dir.path / "ds_a/train/train_000000.ppm") ==
          slurp(dir.path / "ds_b/train/train_000000.ppm"));
    CHECK(slurp(dir.path / "ds_a/test/index.tsv") == slurp(dir.path / "ds_b/test/index.tsv"));

    // Run directory layout: config.resolved, log.txt, standard subdirs.
    const std::string run_dir = find_value(a.out, "run dir: ");
    REQUIRE(!run_dir.empty());
    CHECK(fs::exists(fs::path(run_dir) / "config.resolved"));
    CHECK(fs::exists(fs::path(run_dir) / "log.txt"));
    CHECK(fs::is_directory(fs::path(run_dir) / "checkpoints"));
    CHECK(fs::is_directory(fs::path(run_dir) / "reports"));
    CHECK(fs::is_directory(fs::path(run_dir) / "renders"));
    const std::string resolved = slurp(fs::path(run_dir) / "config.resolved");
    CHECK(resolved.find("img_h = 24") != std::string::npos);
    CHECK(resolved.find("bg_amplitude = ") != std::string::npos);  // defaulted keys logged too
}

TEST_CASE("eval self_test scores the identity pipeline at 100") {
    TmpDir dir("selftest");
    write_synth_cfg(dir.path / "s.cfg", dir.str() + "/ds");
    REQUIRE(run_cli(dir, "synth --config " + dir.str() + "/s.cfg --out " + dir.str() + "/runs")
                .exit_code == 0);
    const RunResult r = run_cli(dir, "eval --out " + dir.str() + "/runs --set dataset_dir=" +
                                         dir.str() + "/ds --set self_test=true");
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("corloc=100.0000") != std::string::npos);
    CHECK(r.out.find("cls_err_top1=0.0000") != std::string::npos);
}

TEST_CASE("gradcheck quick subset passes") {
    TmpDir dir("gradcheck");
    const RunResult r = run_cli(dir, "gradcheck --out " + dir.str() +
                                         "/runs --set full=false --set shapes=3 --seed 7");
    INFO(r.out);
    INFO(r.err);
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.find("checks passed") != std::string::npos);
    const std::string run_dir = find_value(r.out, "run dir: ");
    REQUIRE(!run_dir.empty());
    CHECK(fs::exists(fs::path(run_dir) / "reports" / "gradcheck.txt"));
}

TEST_CASE("unknown config keys abort with the key name") {
    TmpDir dir("unknown");
    write_synth_cfg(dir.path / "s.cfg", dir.str() + "/ds");
    const RunResult r = run_cli(dir, "synth --config " + dir.str() + "/s.cfg --out " + dir.str() +
                                         "/runs --set bogus_key=1");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("bogus_key") != std::string::npos);
}

TEST_CASE("missing required keys abort") {
    TmpDir dir("missing");
    const RunResult r = run_cli(dir, "eval --out " + dir.str() + "/runs");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("dataset_dir") != std::string::npos);
}

TEST_CASE("malformed --set aborts") {
    TmpDir dir("badset");
    const RunResult r = run_cli(dir, "synth --out " + dir.str() + "/runs --set novalue");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("key=value") != std::string::npos);
}

TEST_CASE("unknown optimizer aborts") {
    TmpDir dir("badopt");
    const RunResult r = run_cli(dir, "pretrain-generator --out " + dir.str() +
                                         "/runs --set optimizer=bogus --set iterations=1");
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("unknown optimizer") != std::string::npos);
}

TEST_CASE("unknown subcommand is a usage error") {
    TmpDir dir("badcmd");
    const RunResult r = run_cli(dir, "frobnicate");
    CHECK(r.exit_code != 0);
}

TEST_CASE("train, eval, and render round-trip through checkpoints") {
    TmpDir dir("e2e");
    std::ofstream(dir.path / "s.cfg") << "families = rotated_ellipse\ncolors = 2\n"
                                      << "img_h = 16\nimg_w = 16\n"
                                      << "train_count = 32\ntest_count = 8\nseed = 9\n"
                                      << "dataset_dir = " << dir.str() << "/ds\n";
    REQUIRE(run_cli(dir, "synth --config " + dir.str() + "/s.cfg --out " + dir.str() + "/runs")
                .exit_code == 0);

    const RunResult cls = run_cli(
        dir, "pretrain-classifier --out " + dir.str() + "/runs --set dataset_dir=" + dir.str() +
                 "/ds --set cls_epochs=4 --set cls_batch=8 --set cls_lr=0.05 --seed 11");
    INFO(cls.err);
    REQUIRE(cls.exit_code == 0);
    CHECK(cls.out.find("test_accuracy=") != std::string::npos);
    const std::string cls_ckpt = find_value(cls.out, "checkpoint: ");
    REQUIRE(!cls_ckpt.empty());
    REQUIRE(fs::exists(cls_ckpt));

    const RunResult det = run_cli(
        dir, "train-detector --out " + dir.str() + "/runs --set dataset_dir=" + dir.str() +
                 "/ds --set classifier_ckpt=" + cls_ckpt +
                 " --set generator=model --set det_epochs=1 --set det_batch=8 --seed 11");
    INFO(det.err);
    REQUIRE(det.exit_code == 0);
    CHECK(det.out.find("CorLoc") != std::string::npos);
    const std::string model_dir = find_value(det.out, "model: ");
    REQUIRE(!model_dir.empty());
    REQUIRE(fs::exists(fs::path(model_dir) / "model.meta"));
    REQUIRE(fs::exists(fs::path(model_dir) / "detector.ckpt"));

    const RunResult ev = run_cli(dir, "eval --out " + dir.str() + "/runs --set dataset_dir=" +
                                          dir.str() + "/ds --set model_dir=" + model_dir);
    INFO(ev.err);
    REQUIRE(ev.exit_code == 0);
    CHECK(ev.out.find("corloc=") != std::string::npos);

    const RunResult rd = run_cli(dir, "render --out " + dir.str() + "/runs --set dataset_dir=" +
                                          dir.str() + "/ds --set model_dir=" + model_dir +
                                          " --set count=2");
    INFO(rd.err);
    REQUIRE(rd.exit_code == 0);
    const std::string render_run = find_value(rd.out, "run dir: ");
    REQUIRE(!render_run.empty());
    CHECK(fs::exists(fs::path(render_run) / "renders" / "overlay_0000.png"));
    CHECK(fs::exists(fs::path(render_run) / "renders" / "overlay_0001.png"));
}

// End-to-end checks of the command-line binary; every case launches the real
// executable (CLI_PATH) in a scratch directory.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "util.hpp"

namespace fs = std::filesystem;
using testutil::CmdResult;
using testutil::kv_lookup;
using testutil::read_file;
using testutil::read_text;
using testutil::run_cmd;
using testutil::TempDir;

namespace {

const std::string kCli = CLI_PATH;
const std::string kAssets = ASSET_DIR;

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string exemplar_flags() {
    return " --exemplars \"" + kAssets + "/exemplars\"";
}

CmdResult generate_small(const fs::path& out, const std::string& extra = "") {
    return run_cmd(kCli + " generate" + exemplar_flags() + " --out " + q(out) +
                   " --train 40 --test 20 --seed 5 --jobs 2" + extra);
}

std::vector<std::vector<long>> parse_csv_counts(const std::string& text) {
    std::vector<std::vector<long>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<long> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) row.push_back(std::stol(cell));
        rows.push_back(row);
    }
    return rows;
}

}  // namespace

TEST_CASE("cli: version and help exit cleanly") {
    const CmdResult v = run_cmd(kCli + " --version");
    CHECK(v.exit_code == 0);
    CHECK(v.out.find("afromnist 1.0.0") != std::string::npos);
    const CmdResult h = run_cmd(kCli + " --help");
    CHECK(h.exit_code == 0);
    CHECK(h.out.find("generate") != std::string::npos);
    CHECK(h.out.find("inspect") != std::string::npos);
}

TEST_CASE("cli: argument errors exit with status 2") {
    TempDir dir("cli-usage");
    const std::string out = " --out " + q(dir.path / "d");
    CHECK(run_cmd(kCli).exit_code == 2);
    CHECK(run_cmd(kCli + " frobnicate").exit_code == 2);
    CHECK(run_cmd(kCli + " generate" + exemplar_flags() + out + " --train 15").exit_code == 2);
    CHECK(run_cmd(kCli + " generate" + exemplar_flags() + out + " --test 7").exit_code == 2);
    CHECK(run_cmd(kCli + " generate" + exemplar_flags() + out + " --gamma 3 2").exit_code == 2);
    CHECK(run_cmd(kCli + " generate" + exemplar_flags() + out + " --corrupt sparkles:1")
              .exit_code == 2);
    CHECK(run_cmd(kCli + " generate" + exemplar_flags() + out + " --alpha -1").exit_code == 2);
    CHECK(run_cmd(kCli + " generate" + out).exit_code == 2);  // --exemplars required
    CHECK(run_cmd(kCli + " train --data x").exit_code == 2);  // --out required
    CHECK(run_cmd(kCli + " train --data x --out y --lr 0").exit_code == 2);
    CHECK(run_cmd(kCli + " train --data x --out y --batch 0").exit_code == 2);
    CHECK(run_cmd(kCli + " eval --model m --data d --cm c --split half").exit_code == 2);
    CHECK(run_cmd(kCli + " inspect --data x --jobs 0").exit_code == 2);
}

TEST_CASE("cli: runtime failures exit with status 1 and name the problem") {
    TempDir dir("cli-runtime");
    const CmdResult missing = run_cmd(kCli + " train --data " + q(dir.path / "absent") +
                                      " --out " + q(dir.path / "m.ln5"));
    CHECK(missing.exit_code == 1);
    CHECK(missing.err.find("error:") != std::string::npos);
    CHECK(missing.err.find("absent") != std::string::npos);

    const CmdResult noex = run_cmd(kCli + " generate --exemplars " + q(dir.path / "ghosts") +
                                   " --out " + q(dir.path / "d") + " --train 10 --test 10");
    CHECK(noex.exit_code == 1);
    CHECK(noex.err.find("ghosts") != std::string::npos);

    const CmdResult empty = run_cmd(kCli + " inspect --data " + q(dir.path));
    CHECK(empty.exit_code == 1);

    testutil::write_file(dir.path / "bogus.ln5", "XXXXother bytes");
    const CmdResult badckpt = run_cmd(kCli + " eval --model " + q(dir.path / "bogus.ln5") +
                                      " --data " + q(dir.path) + " --cm " +
                                      q(dir.path / "cm.csv"));
    CHECK(badckpt.exit_code == 1);
    CHECK(badckpt.err.find("magic") != std::string::npos);
}

TEST_CASE("cli generate: files, sizes, and rerun byte-identity") {
    TempDir dir("cli-generate");
    const fs::path out = dir.path / "ds";
    const CmdResult r1 = generate_small(out);
    REQUIRE(r1.exit_code == 0);
    CHECK(kv_lookup(r1.out, "train_images") == "40");
    CHECK(kv_lookup(r1.out, "test_images") == "20");

    const fs::path files[] = {
        out / "afromnist-train-images-idx3-ubyte", out / "afromnist-train-labels-idx1-ubyte",
        out / "afromnist-test-images-idx3-ubyte", out / "afromnist-test-labels-idx1-ubyte",
        out / "manifest.txt", out / "run_manifest.txt"};
    for (const auto& f : files) REQUIRE(fs::exists(f));
    CHECK(fs::file_size(files[0]) == 16 + 784 * 40);
    CHECK(fs::file_size(files[1]) == 8 + 40);
    CHECK(fs::file_size(files[2]) == 16 + 784 * 20);
    CHECK(fs::file_size(files[3]) == 8 + 20);

    std::vector<std::string> snapshot;
    for (const auto& f : files) snapshot.push_back(read_file(f));

    // same flags again, same directory: every output byte-identical
    const CmdResult r2 = generate_small(out);
    REQUIRE(r2.exit_code == 0);
    for (std::size_t i = 0; i < snapshot.size(); ++i)
        CHECK(read_file(files[i]) == snapshot[i]);

    // different seed: different images
    const fs::path out2 = dir.path / "ds2";
    REQUIRE(run_cmd(kCli + " generate" + exemplar_flags() + " --out " + q(out2) +
                    " --train 40 --test 20 --seed 6")
                .exit_code == 0);
    CHECK(read_file(out2 / "afromnist-train-images-idx3-ubyte") != snapshot[0]);

    const std::string manifest = read_text(out / "run_manifest.txt");
    CHECK(kv_lookup(manifest, "command") == "generate");
    CHECK(kv_lookup(manifest, "master_seed") == "5");
    CHECK(kv_lookup(manifest, "corruptions") == "none");
    CHECK(manifest.find("jobs") == std::string::npos);
}

TEST_CASE("cli pipeline: generate, train, eval, inspect") {
    TempDir dir("cli-pipeline");
    const fs::path data = dir.path / "ds";
    REQUIRE(generate_small(data).exit_code == 0);

    const fs::path model = dir.path / "model.ln5";
    const CmdResult tr = run_cmd(kCli + " train --data " + q(data) + " --out " + q(model) +
                                 " --batch 8 --epochs 3 --seed 11 --jobs 2");
    REQUIRE(tr.exit_code == 0);
    CHECK(kv_lookup(tr.out, "param_counts") == "156,2416,30840,10164,850");
    CHECK(kv_lookup(tr.out, "param_total") == "44426");
    CHECK(!kv_lookup(tr.out, "epochs_run").empty());
    CHECK(!kv_lookup(tr.out, "final_loss").empty());
    CHECK(!kv_lookup(tr.out, "train_accuracy").empty());
    const std::string printed_test_acc = kv_lookup(tr.out, "test_accuracy");
    CHECK(!printed_test_acc.empty());
    REQUIRE(fs::exists(model));
    REQUIRE(fs::exists(dir.path / "model.ln5.history.csv"));
    REQUIRE(fs::exists(dir.path / "model.ln5.manifest.txt"));
    const std::string history = read_text(dir.path / "model.ln5.history.csv");
    CHECK(history.rfind("epoch,loss,train_acc\n", 0) == 0);

    const fs::path cm = dir.path / "cm.csv";
    const CmdResult ev = run_cmd(kCli + " eval --model " + q(model) + " --data " + q(data) +
                                 " --cm " + q(cm) + " --jobs 2");
    REQUIRE(ev.exit_code == 0);
    CHECK(kv_lookup(ev.out, "samples") == "20");
    CHECK(kv_lookup(ev.out, "accuracy") == printed_test_acc);

    const auto rows = parse_csv_counts(read_text(cm));
    REQUIRE(rows.size() == 10);
    long total = 0;
    for (const auto& row : rows) {
        REQUIRE(row.size() == 10);
        long sum = 0;
        for (long v : row) sum += v;
        CHECK(sum == 2);  // 20 balanced test images
        total += sum;
    }
    CHECK(total == 20);

    const CmdResult evtrain = run_cmd(kCli + " eval --model " + q(model) + " --data " + q(data) +
                                      " --cm " + q(dir.path / "cm_train.csv") +
                                      " --split train");
    REQUIRE(evtrain.exit_code == 0);
    CHECK(kv_lookup(evtrain.out, "samples") == "40");

    const fs::path montage = dir.path / "avg.pgm";
    const fs::path morph = dir.path / "morph.csv";
    const CmdResult in = run_cmd(kCli + " inspect --data " + q(data) + " --avg " + q(montage) +
                                 " --morph " + q(morph) + exemplar_flags() + " --jobs 2");
    REQUIRE(in.exit_code == 0);
    CHECK(kv_lookup(in.out, "samples") == "40");
    CHECK(kv_lookup(in.out, "split") == "train");

    const std::string pgm = read_file(montage);
    const std::string header = "P5\n280 28\n255\n";
    REQUIRE(pgm.size() == header.size() + 280 * 28);
    CHECK(pgm.compare(0, header.size(), header) == 0);

    const std::string morph_text = read_text(morph);
    CHECK(morph_text.rfind("index,label,thickness,slant,width,height,length,area\n", 0) == 0);
    int lines = 0;
    for (char c : morph_text) lines += c == '\n';
    CHECK(lines == 41);
    REQUIRE(fs::exists(dir.path / "morph.csv.manifest.txt"));

    for (int k = 0; k < 10; ++k) {
        const std::string key = "class_mean_correlation[" + std::to_string(k) + "]";
        const std::string val = kv_lookup(in.out, key);
        REQUIRE(!val.empty());
        const double r = std::stod(val);
        CHECK(r >= -1.0);
        CHECK(r <= 1.0);
    }
    CHECK(!kv_lookup(in.out, "class_mean_correlation_min").empty());
}

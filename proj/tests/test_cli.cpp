#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "rfscope/image_io.hpp"
#include "rfscope/netspec.hpp"
#include "rfscope/weights.hpp"

#include "test_util.hpp"

using namespace rfscope;
using namespace testutil;
using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("rfscope_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

CmdResult run_cli(const fs::path& cwd, const std::string& args) {
    std::string cmd = "cd " + cwd.string() + " && " + RFSCOPE_CLI + " " + args + " >cli_out.txt 2>cli_err.txt";
    int status = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = read_text_file((cwd / "cli_out.txt").string());
    r.err = read_text_file((cwd / "cli_err.txt").string());
    return r;
}

std::string slurp(const fs::path& p) { return read_text_file(p.string()); }

} // namespace

TEST_CASE("trf reports the bundled resnet18 value") {
    fs::path dir = fresh_dir("trf18");
    CmdResult r = run_cli(dir, "trf --spec " + spec_path("resnet18.spec"));
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("435 x 435") != std::string::npos);
    CHECK(fs::exists(dir / "trf.json"));
    CHECK(fs::exists(dir / "trf.manifest.json"));
    json rep = json::parse(slurp(dir / "trf.json"));
    CHECK(rep["trf_h"] == 435);
}

TEST_CASE("trf of three stacked 3x3 convs is 7") {
    fs::path dir = fresh_dir("trf3");
    write_text_file((dir / "three.spec").string(), "input 1 32 32\nconv 3 1 1 2\nconv 3 1 1 2\nconv 3 1 1 2\n");
    CmdResult r = run_cli(dir, "trf --spec three.spec");
    CHECK(r.exit_code == 0);
    CHECK(r.out.find("7 x 7") != std::string::npos);
}

TEST_CASE("trf --coverage exports the window-count map") {
    fs::path dir = fresh_dir("trfcov");
    write_text_file((dir / "net.spec").string(), "input 1 16 16\nconv 3 2 1 1\n");
    CmdResult r = run_cli(dir, "trf --spec net.spec --coverage");
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(dir / "trf_coverage.csv"));
    REQUIRE(fs::exists(dir / "trf_coverage.pgm"));
    CsvField f = read_csv_field((dir / "trf_coverage.csv").string());
    CHECK(f.h == 16);
    CHECK(f.w == 16);
    // interior checkerboard: odd coordinates referenced twice per axis
    CHECK(f.values[size_t(7) * 16 + 7] == 4.0);
    CHECK(f.values[size_t(7) * 16 + 6] == 2.0);
    CHECK(f.values[size_t(6) * 16 + 6] == 1.0);
    std::string pgm = slurp(dir / "trf_coverage.pgm");
    CHECK(pgm.rfind("P5\n16 16\n65535\n", 0) == 0);
}

TEST_CASE("erf accepts a raw tensor stack as the image source") {
    fs::path dir = fresh_dir("erftensor");
    write_text_file((dir / "toy.spec").string(), "input 2 8 8\nconv 3 2 1 3\nrelu\n");
    WeightRecord rec;
    rec.name = "images";
    rec.dims = {3, 2, 8, 8};
    rec.data.assign(3 * 2 * 8 * 8, 0.5);
    WeightBundle b;
    b.records.push_back(rec);
    save_weights_file((dir / "stack.rfsw").string(), b);
    CmdResult r = run_cli(dir, "erf --spec toy.spec --images stack.rfsw --target layer --init-seed 1");
    REQUIRE(r.exit_code == 0);
    json side = json::parse(slurp(dir / "erf.json"));
    CHECK(side["n_images"] == 3);
    CHECK(side["dataset_id"].get<std::string>().rfind("tensor:", 0) == 0);
}

TEST_CASE("broken specs exit with code 2 and a line number") {
    fs::path dir = fresh_dir("trfbad");
    write_text_file((dir / "bad.spec").string(), "input 3 8 8\nconv 0 1 0 8\n");
    CmdResult r = run_cli(dir, "trf --spec bad.spec");
    CHECK(r.exit_code == 2);
    CHECK(r.err.find("line 2") != std::string::npos);

    CmdResult usage = run_cli(dir, "trf");
    CHECK(usage.exit_code == 2);
    CmdResult unknown = run_cli(dir, "frobnicate");
    CHECK(unknown.exit_code == 2);
}

TEST_CASE("erf writes artifacts, reruns byte-identically") {
    fs::path dir = fresh_dir("erf");
    write_text_file((dir / "toy.spec").string(),
                    "name toy\ninput 3 16 16\nconv 3 2 1 4\nbn\nrelu\nconv 3 1 1 4\nrelu\ngap\nfc 3\n");
    CmdResult r = run_cli(dir, "erf --spec toy.spec --synthetic 8 --target output --seed 5 --init-seed 2");
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(dir / "erf.csv"));
    REQUIRE(fs::exists(dir / "erf.pgm"));
    REQUIRE(fs::exists(dir / "erf.json"));
    REQUIRE(fs::exists(dir / "erf.manifest.json"));

    CsvField f = read_csv_field((dir / "erf.csv").string());
    CHECK(f.h == 16);
    CHECK(f.w == 16);
    for (double v : f.values) CHECK(v >= 0.0);

    std::string csv1 = slurp(dir / "erf.csv");
    std::string pgm1 = slurp(dir / "erf.pgm");
    std::string man1 = slurp(dir / "erf.manifest.json");

    fs::remove(dir / "erf.csv");
    fs::remove(dir / "erf.pgm");
    CmdResult rr = run_cli(dir, "rerun --manifest erf.manifest.json");
    REQUIRE(rr.exit_code == 0);
    CHECK(slurp(dir / "erf.csv") == csv1);
    CHECK(slurp(dir / "erf.pgm") == pgm1);
    CHECK(slurp(dir / "erf.manifest.json") == man1);

    SUBCASE("layer mode with an explicit node") {
        CmdResult rl = run_cli(dir, "erf --spec toy.spec --synthetic 4 --target layer --node conv1 "
                                    "--seed 5 --init-seed 2 --out-prefix erf_layer");
        CHECK(rl.exit_code == 0);
        json side = json::parse(slurp(dir / "erf_layer.json"));
        CHECK(side["target"] == "layer:conv1:center_channel_mean");
    }
}

TEST_CASE("fit recovers a synthetic gaussian csv and rejects a constant one") {
    fs::path dir = fresh_dir("fit");
    int h = 64, w = 64;
    std::vector<double> v(size_t(h) * size_t(w));
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double dx = (x - 32.0) / 9.0, dy = (y - 30.0) / 11.0;
            v[size_t(y) * size_t(w) + size_t(x)] = 2.0 * std::exp(-0.5 * (dx * dx + dy * dy));
        }
    write_csv_field((dir / "gauss.csv").string(), v, h, w);
    CmdResult r = run_cli(dir, "fit --erf gauss.csv");
    REQUIRE(r.exit_code == 0);
    json rep = json::parse(r.out);
    CHECK(rep["sigma_x"].get<double>() == doctest::Approx(9.0).epsilon(0.001));
    CHECK(rep["sigma_y"].get<double>() == doctest::Approx(11.0).epsilon(0.001));
    CHECK(rep["mu_x"].get<double>() == doctest::Approx(32.0).epsilon(0.001));
    CHECK(rep["converged"] == true);

    std::vector<double> flat(size_t(h) * size_t(w), 1.0);
    write_csv_field((dir / "flat.csv").string(), flat, h, w);
    CmdResult rc = run_cli(dir, "fit --erf flat.csv");
    CHECK(rc.exit_code == 1);
    CHECK(rc.err.find("zero variance") != std::string::npos);
}

TEST_CASE("imbalance of a checkerboard csv is exactly 1, constant is 0") {
    fs::path dir = fresh_dir("imb");
    int n = 32;
    std::vector<double> cb(size_t(n) * size_t(n));
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) cb[size_t(y) * size_t(n) + size_t(x)] = double((x + y) % 2);
    write_csv_field((dir / "cb.csv").string(), cb, n, n);
    CmdResult r = run_cli(dir, "imbalance --erf cb.csv");
    REQUIRE(r.exit_code == 0);
    json rep = json::parse(r.out);
    CHECK(rep["l1"].get<double>() == 1.0);
    CHECK(rep["normalized"] == false);

    std::vector<double> flat(size_t(n) * size_t(n), 0.25);
    write_csv_field((dir / "flat.csv").string(), flat, n, n);
    CmdResult rc = run_cli(dir, "imbalance --erf flat.csv");
    REQUIRE(rc.exit_code == 0);
    json repc = json::parse(rc.out);
    CHECK(repc["l1"].get<double>() == 0.0);
    CHECK(repc["l2"].get<double>() == 0.0);
}

TEST_CASE("pad transforms matching layers and reports equivalence") {
    fs::path dir = fresh_dir("pad");
    write_text_file((dir / "convnet.spec").string(),
                    "name convnet\ninput 3 33 33\nconv 7 2 3 4\nrelu\nconv 3 2 1 6\nrelu\ngap\nfc 2\n");
    CmdResult r = run_cli(dir, "pad --spec convnet.spec --init-seed 4 --out-prefix kp");
    REQUIRE(r.exit_code == 0);
    json rep = json::parse(slurp(dir / "kp_report.json"));
    CHECK(rep["modified_count"] == 2);
    CHECK(rep["equivalent"] == true);
    CHECK(rep["max_output_deviation"].get<double>() <= 1e-12);

    ArchSpec padded = parse_spec(slurp(dir / "kp.spec"));
    CHECK(padded.layers[0].k == 8);
    WeightBundle b = load_weights_file((dir / "kp.rfsw").string());
    CHECK(b.records[0].dims == std::vector<uint64_t>{4, 3, 8, 8});

    SUBCASE("maxpool nets are flagged non-equivalent") {
        write_text_file((dir / "poolnet.spec").string(), "input 3 17 17\nmaxpool 3 2 1\nconv 3 1 1 2\n");
        CmdResult rp = run_cli(dir, "pad --spec poolnet.spec --init-seed 4 --out-prefix kpp");
        REQUIRE(rp.exit_code == 0);
        json repp = json::parse(slurp(dir / "kpp_report.json"));
        CHECK(repp["equivalent"] == false);
        bool pool_flagged = false;
        for (const auto& m : repp["modified_layers"])
            if (m["op"] == "maxpool" && m["equivalent"] == false) pool_flagged = true;
        CHECK(pool_flagged);
    }
    SUBCASE("nets with no matching layers pass through") {
        write_text_file((dir / "plain.spec").string(), "name plain\ninput 3 16 16\nconv 3 1 1 4\nrelu\n");
        CmdResult rn = run_cli(dir, "pad --spec plain.spec --init-seed 6 --out-prefix kpn");
        REQUIRE(rn.exit_code == 0);
        json repn = json::parse(slurp(dir / "kpn_report.json"));
        CHECK(repn["modified_count"] == 0);
        // output spec is the canonical print of the input, weights identical
        ArchSpec orig = parse_spec(slurp(dir / "plain.spec"));
        ArchSpec out = parse_spec(slurp(dir / "kpn.spec"));
        orig.name = out.name;  // transform appends the _kp suffix
        CHECK(out.same_structure(orig));
        NetGraph g = build_graph(parse_spec(slurp(dir / "plain.spec")), InitPolicy{6});
        std::ifstream in(dir / "kpn.rfsw", std::ios::binary);
        std::vector<uint8_t> file_bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        CHECK(file_bytes == serialize(weights_of(g)));
    }
}

TEST_CASE("micro smoke run: one epoch, valid csv, deterministic") {
    fs::path dir = fresh_dir("micro");
    write_text_file((dir / "tiny.spec").string(),
                    "name tiny\ninput 3 16 16\nconv 3 2 1 4\nbn\nrelu\ngap\nfc 2\n");
    json cfg;
    cfg["spec"] = "tiny.spec";
    cfg["kernel_pad"] = false;
    cfg["dataset"] = {{"image_h", 16}, {"image_w", 16}, {"patch", 8}, {"train_per_class", 8},
                      {"test_per_class", 4},  {"seed", 3}};
    cfg["train"] = {{"lr", 0.01}, {"batch", 8}, {"epochs", 5}};
    cfg["seeds"] = {1};
    cfg["threshold"] = 0.9;
    write_text_file((dir / "cfg.json").string(), cfg.dump(2));

    CmdResult r = run_cli(dir, "micro --config cfg.json --epochs 1");
    REQUIRE(r.exit_code == 0);
    REQUIRE(fs::exists(dir / "micro_seed1.csv"));
    std::string csv = slurp(dir / "micro_seed1.csv");
    CHECK(csv.rfind("epoch,train_loss,train_acc,test_acc,lr", 0) == 0);
    CHECK(fs::exists(dir / "micro_summary.json"));
    json summary = json::parse(slurp(dir / "micro_summary.json"));
    CHECK(summary["per_seed"].size() == 1);

    CmdResult r2 = run_cli(dir, "micro --config cfg.json --epochs 1 --out-prefix micro2");
    REQUIRE(r2.exit_code == 0);
    CHECK(slurp(dir / "micro2_seed1.csv") == csv);
}

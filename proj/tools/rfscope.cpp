// rfscope: receptive-field analysis toolkit for convolutional networks.
//
// Subcommands compose through files (CSV/PGM/JSON/.spec/.rfsw). Every run
// writes a manifest; `rfscope rerun --manifest X` replays it and reproduces
// the outputs byte for byte. Exit codes: 0 ok, 1 runtime failure, 2 bad
// usage/parse.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "rfscope/erf.hpp"
#include "rfscope/image_io.hpp"
#include "rfscope/kernel_pad.hpp"
#include "rfscope/metrics.hpp"
#include "rfscope/micro_task.hpp"
#include "rfscope/netspec.hpp"
#include "rfscope/rf_analysis.hpp"
#include "rfscope/version.hpp"
#include "rfscope/weights.hpp"

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;
using namespace rfscope;

namespace {

std::string file_hash(const std::string& path) {
    std::string bytes = read_text_file(path);
    return hex64(fnv1a(bytes.data(), bytes.size()));
}

void write_manifest(const std::string& prefix, const std::string& subcommand, const json& config,
                    const json& inputs, const std::vector<std::string>& outputs) {
    json m;
    m["tool"] = "rfscope";
    m["version"] = RFSCOPE_VERSION;
    m["subcommand"] = subcommand;
    m["seed"] = config.contains("seed") ? config["seed"] : json(nullptr);
    m["config"] = config;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    write_text_file(prefix + ".manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// trf
// ---------------------------------------------------------------------------

struct TrfOptions {
    std::string spec_path;
    std::string node;  // empty = last spatial node
    bool coverage = false;
    std::string out_prefix = "trf";
};

json trf_config(const TrfOptions& o) {
    return json{{"spec", o.spec_path}, {"node", o.node}, {"coverage", o.coverage}, {"out_prefix", o.out_prefix}};
}

TrfOptions trf_from_config(const json& c) {
    return TrfOptions{c.at("spec"), c.at("node"), c.value("coverage", false), c.at("out_prefix")};
}

int run_trf(const TrfOptions& o) {
    ArchSpec spec = parse_spec(read_text_file(o.spec_path));
    NetGraph g = build_graph(spec);

    int node = o.node.empty() ? g.last_spatial_node() : g.find(o.node);
    if (node < 0) throw Error("node '" + o.node + "' not found in spec");
    RFInfo rf = compute_trf(g, node);

    json rep;
    rep["spec"] = spec.name;
    rep["node"] = g.nodes[size_t(node)].name;
    rep["trf_h"] = rf.rf_h;
    rep["trf_w"] = rf.rf_w;
    rep["jump_h"] = rf.jump_h;
    rep["jump_w"] = rf.jump_w;
    rep["start_h"] = rf.start_h;
    rep["start_w"] = rf.start_w;
    rep["full_input"] = rf.full_input;

    std::printf("spec        %s\n", spec.name.c_str());
    std::printf("node        %s\n", g.nodes[size_t(node)].name.c_str());
    std::printf("trf         %lld x %lld\n", (long long)rf.rf_h, (long long)rf.rf_w);
    std::printf("jump        %lld x %lld\n", (long long)rf.jump_h, (long long)rf.jump_w);
    std::printf("start       %.1f, %.1f\n", rf.start_h, rf.start_w);
    if (rf.full_input) std::printf("note        target is past the head; receptive field spans the full input\n");

    write_text_file(o.out_prefix + ".json", rep.dump(2) + "\n");

    std::vector<std::string> outputs = {o.out_prefix + ".json"};
    if (o.coverage) {
        OpKind k = g.nodes[size_t(node)].kind;
        int cov_target = (k == OpKind::fc || k == OpKind::gap || k == OpKind::output) ? g.last_spatial_node() : node;
        CoverageMap cov = coverage_counts(g, CoverageSeed::all_positions, cov_target);
        std::vector<double> field = cov.as_field();
        write_csv_field(o.out_prefix + "_coverage.csv", field, cov.h, cov.w);
        write_pgm16(o.out_prefix + "_coverage.pgm", field, cov.h, cov.w);
        outputs.push_back(o.out_prefix + "_coverage.csv");
        outputs.push_back(o.out_prefix + "_coverage.pgm");
        std::printf("coverage    %s_coverage.csv / .pgm\n", o.out_prefix.c_str());
    }
    write_manifest(o.out_prefix, "trf", trf_config(o), json{{"spec", {{"path", o.spec_path}, {"fnv1a", file_hash(o.spec_path)}}}},
                   outputs);
    return 0;
}

// ---------------------------------------------------------------------------
// erf
// ---------------------------------------------------------------------------

struct ErfOptions {
    std::string spec_path;
    std::string weights_path;  // empty = init from seed
    uint64_t init_seed = 0;
    std::string images_dir;  // empty = synthetic
    int synthetic = 0;
    std::string target = "layer";  // layer | output
    std::string node;              // layer mode override
    std::string class_mode = "mean";
    uint64_t seed = 0;
    std::string out_prefix = "erf";
};

json erf_config(const ErfOptions& o) {
    return json{{"spec", o.spec_path},     {"weights", o.weights_path}, {"init_seed", o.init_seed},
                {"images", o.images_dir},  {"synthetic", o.synthetic},  {"target", o.target},
                {"node", o.node},          {"class", o.class_mode},     {"seed", o.seed},
                {"out_prefix", o.out_prefix}};
}

ErfOptions erf_from_config(const json& c) {
    ErfOptions o;
    o.spec_path = c.at("spec");
    o.weights_path = c.at("weights");
    o.init_seed = c.at("init_seed");
    o.images_dir = c.at("images");
    o.synthetic = c.at("synthetic");
    o.target = c.at("target");
    o.node = c.at("node");
    o.class_mode = c.at("class");
    o.seed = c.at("seed");
    o.out_prefix = c.at("out_prefix");
    return o;
}

int run_erf(const ErfOptions& o) {
    ArchSpec spec = parse_spec(read_text_file(o.spec_path));
    NetGraph g;
    std::string weights_hash;
    if (!o.weights_path.empty()) {
        g = build_graph(spec, load_weights_file(o.weights_path));
        weights_hash = file_hash(o.weights_path);
    } else {
        g = build_graph(spec, InitPolicy{o.init_seed});
        weights_hash = "init:seed=" + std::to_string(o.init_seed);
    }

    Normalization norm = Normalization::plain(spec.in_c);
    ImageSource src;
    if (!o.images_dir.empty()) {
        if (fs::is_regular_file(o.images_dir)) {
            src = load_images_tensor(o.images_dir, norm);
        } else {
            if (spec.in_c != 3) throw Error("image directory mode expects a 3-channel input spec");
            src = load_images(o.images_dir, norm);
        }
        const Shape4& in = g.input_shape;
        if (!src.images.empty() && !(src.images[0].shape() == in))
            throw Error("images are " + src.images[0].shape().str() + ", spec expects " + in.str());
    } else {
        int n = o.synthetic > 0 ? o.synthetic : 16;
        src = synthetic_images(n, spec.in_c, spec.in_h, spec.in_w, o.seed, norm);
    }

    ErfTarget target;
    if (o.target == "layer") {
        int node = o.node.empty() ? -1 : g.find(o.node);
        if (!o.node.empty() && node < 0) throw Error("node '" + o.node + "' not found in spec");
        target = ErfTarget::layer(node);
    } else if (o.target == "output") {
        target = o.class_mode == "mean" ? ErfTarget::output() : ErfTarget::output_class(std::stoi(o.class_mode));
    } else {
        throw Error("unknown --target '" + o.target + "' (expected layer or output)");
    }

    ERFMap erf = accumulate_erf(g, src, target);
    erf.spec_hash = hex64(fnv1a(print_spec(spec)));
    erf.weights_hash = weights_hash;

    std::string csv = o.out_prefix + ".csv";
    std::string pgm = o.out_prefix + ".pgm";
    std::string sidecar = o.out_prefix + ".json";
    write_csv_field(csv, erf.values, erf.h, erf.w);
    write_pgm16(pgm, erf.values, erf.h, erf.w);

    json side;
    side["h"] = erf.h;
    side["w"] = erf.w;
    side["n_images"] = erf.n_images;
    side["target"] = erf.target_desc;
    side["spec_hash"] = erf.spec_hash;
    side["weights_hash"] = erf.weights_hash;
    side["dataset_id"] = erf.dataset_id;
    write_text_file(sidecar, side.dump(2) + "\n");

    json inputs;
    inputs["spec"] = {{"path", o.spec_path}, {"fnv1a", file_hash(o.spec_path)}};
    if (!o.weights_path.empty()) inputs["weights"] = {{"path", o.weights_path}, {"fnv1a", file_hash(o.weights_path)}};
    write_manifest(o.out_prefix, "erf", erf_config(o), inputs, {csv, pgm, sidecar});
    std::printf("erf written: %s (%d x %d over %lld images)\n", csv.c_str(), erf.w, erf.h, (long long)erf.n_images);
    return 0;
}

// ---------------------------------------------------------------------------
// fit / imbalance
// ---------------------------------------------------------------------------

struct FitOptions {
    std::string erf_csv;
    std::string out_prefix = "fit";
};

int run_fit(const FitOptions& o) {
    CsvField f = read_csv_field(o.erf_csv);
    Gauss2DFit fit = fit_gaussian(f.values, f.h, f.w);
    json rep;
    rep["sigma_x"] = fit.sigma_x;
    rep["sigma_y"] = fit.sigma_y;
    rep["mu_x"] = fit.mu_x;
    rep["mu_y"] = fit.mu_y;
    rep["amplitude"] = fit.amplitude;
    rep["offset"] = fit.offset;
    rep["r2"] = fit.r_squared;
    rep["iterations"] = fit.iterations;
    rep["converged"] = fit.converged;
    std::string text = rep.dump(2) + "\n";
    std::fputs(text.c_str(), stdout);
    write_text_file(o.out_prefix + ".json", text);
    write_manifest(o.out_prefix, "fit", json{{"erf", o.erf_csv}, {"out_prefix", o.out_prefix}},
                   json{{"erf", {{"path", o.erf_csv}, {"fnv1a", file_hash(o.erf_csv)}}}}, {o.out_prefix + ".json"});
    return 0;
}

struct ImbalanceOptions {
    std::string erf_csv;
    bool normalize = false;
    std::string out_prefix = "imbalance";
};

int run_imbalance(const ImbalanceOptions& o) {
    CsvField f = read_csv_field(o.erf_csv);
    ImbalanceIndices idx = imbalance(f.values, f.h, f.w, o.normalize);
    json rep;
    rep["l1"] = idx.l1;
    rep["l2"] = idx.l2;
    rep["normalized"] = idx.normalized;
    std::string text = rep.dump(2) + "\n";
    std::fputs(text.c_str(), stdout);
    write_text_file(o.out_prefix + ".json", text);
    write_manifest(o.out_prefix, "imbalance",
                   json{{"erf", o.erf_csv}, {"normalize", o.normalize}, {"out_prefix", o.out_prefix}},
                   json{{"erf", {{"path", o.erf_csv}, {"fnv1a", file_hash(o.erf_csv)}}}}, {o.out_prefix + ".json"});
    return 0;
}

// ---------------------------------------------------------------------------
// pad
// ---------------------------------------------------------------------------

struct PadOptions {
    std::string spec_path;
    std::string weights_path;  // empty = init from seed, still writes a bundle
    uint64_t init_seed = 0;
    uint64_t seed = 0;  // probe rng
    std::string out_prefix = "padded";
};

json pad_config(const PadOptions& o) {
    return json{{"spec", o.spec_path},
                {"weights", o.weights_path},
                {"init_seed", o.init_seed},
                {"seed", o.seed},
                {"out_prefix", o.out_prefix}};
}

PadOptions pad_from_config(const json& c) {
    return PadOptions{c.at("spec"), c.at("weights"), c.at("init_seed"), c.at("seed"), c.at("out_prefix")};
}

int run_pad(const PadOptions& o) {
    ArchSpec spec = parse_spec(read_text_file(o.spec_path));
    NetGraph g = o.weights_path.empty() ? build_graph(spec, InitPolicy{o.init_seed})
                                        : build_graph(spec, load_weights_file(o.weights_path));

    KernelPadResult padded = kernel_pad(g);
    ArchSpec padded_spec = kernel_pad_spec(spec);
    padded_spec.name = spec.name + "_kp";

    // 20 random probes; convs must agree to <=1e-12, pool replacements are
    // reported as non-equivalent
    bool has_pool_change = false;
    for (const auto& m : padded.modified)
        if (!m.equivalent) has_pool_change = true;
    double max_dev = 0.0;
    Rng rng(o.seed);
    for (int probe = 0; probe < 20; ++probe) {
        Tensor4 x(1, spec.in_c, spec.in_h, spec.in_w);
        x.fill_uniform(rng, -1.0, 1.0);
        Tensor4 a = forward_eval(g, x).act.back();
        Tensor4 b = forward_eval(padded.graph, x).act.back();
        max_dev = std::max(max_dev, max_abs_diff(a, b));
    }

    std::string spec_out = o.out_prefix + ".spec";
    std::string weights_out = o.out_prefix + ".rfsw";
    std::string report_out = o.out_prefix + "_report.json";
    write_text_file(spec_out, print_spec(padded_spec));
    save_weights_file(weights_out, weights_of(padded.graph));

    json rep;
    rep["modified_layers"] = json::array();
    for (const auto& m : padded.modified) {
        rep["modified_layers"].push_back(json{{"name", m.name},
                                              {"op", op_name(m.kind)},
                                              {"old_kernel", std::to_string(m.old_kh) + "x" + std::to_string(m.old_kw)},
                                              {"new_kernel", std::to_string(m.new_kh) + "x" + std::to_string(m.new_kw)},
                                              {"equivalent", m.equivalent}});
    }
    rep["modified_count"] = padded.modified.size();
    rep["probes"] = 20;
    rep["max_output_deviation"] = max_dev;
    rep["equivalent"] = !has_pool_change;
    if (has_pool_change) rep["note"] = "pool windows were enlarged; pool replacement is not equivalence-preserving";
    std::string text = rep.dump(2) + "\n";
    std::fputs(text.c_str(), stdout);
    write_text_file(report_out, text);

    json inputs;
    inputs["spec"] = {{"path", o.spec_path}, {"fnv1a", file_hash(o.spec_path)}};
    if (!o.weights_path.empty()) inputs["weights"] = {{"path", o.weights_path}, {"fnv1a", file_hash(o.weights_path)}};
    write_manifest(o.out_prefix, "pad", pad_config(o), inputs, {spec_out, weights_out, report_out});

    if (!has_pool_change && max_dev > 1e-12)
        throw Error("conv-only padded graph deviates by " + std::to_string(max_dev) + " (expected <= 1e-12)");
    return 0;
}

// ---------------------------------------------------------------------------
// micro
// ---------------------------------------------------------------------------

struct MicroOptions {
    std::string config_path;
    std::string out_prefix = "micro";
    int epochs_override = 0;  // > 0 replaces the config epoch budget
};

int run_micro(const MicroOptions& o) {
    json cfg = json::parse(read_text_file(o.config_path));

    ArchSpec spec = parse_spec(read_text_file(cfg.at("spec").get<std::string>()));
    if (cfg.value("kernel_pad", false)) spec = kernel_pad_spec(spec);

    MicroDatasetConfig dcfg;
    const json& d = cfg.at("dataset");
    dcfg.image_h = d.value("image_h", 64);
    dcfg.image_w = d.value("image_w", 64);
    dcfg.patch = d.value("patch", 8);
    dcfg.train_per_class = d.value("train_per_class", 512);
    dcfg.test_per_class = d.value("test_per_class", 128);
    dcfg.seed = d.value("seed", 1);
    dcfg.template_dir = d.value("template_dir", std::string());

    TrainConfig tcfg;
    const json& t = cfg.at("train");
    tcfg.lr = t.value("lr", 0.01);
    tcfg.momentum = t.value("momentum", 0.9);
    tcfg.weight_decay = t.value("weight_decay", 0.0005);
    tcfg.batch = t.value("batch", 64);
    tcfg.epochs = t.value("epochs", 50);
    tcfg.hflip = t.value("hflip", true);
    if (o.epochs_override > 0) tcfg.epochs = o.epochs_override;

    double threshold = cfg.value("threshold", 0.9);
    std::vector<uint64_t> seeds;
    for (const auto& s : cfg.at("seeds")) seeds.push_back(s.get<uint64_t>());
    if (seeds.empty()) throw Error(o.config_path + ": seeds list is empty");

    if (spec.in_c != 3 || spec.in_h != dcfg.image_h || spec.in_w != dcfg.image_w)
        throw Error("spec input does not match dataset images (" + std::to_string(dcfg.image_h) + "x" +
                    std::to_string(dcfg.image_w) + ")");

    MicroDataset ds = generate_micro_dataset(dcfg);
    if (cfg.contains("export_dataset")) export_micro_dataset(ds, cfg.at("export_dataset").get<std::string>());

    std::vector<std::string> outputs;
    std::vector<int> e2t;
    json per_seed = json::array();
    for (uint64_t seed : seeds) {
        NetGraph g = build_graph(spec, InitPolicy{seed});
        TrainConfig run_cfg = tcfg;
        run_cfg.seed = seed;
        TrainLog log = train(g, ds, run_cfg);
        int epochs = epochs_to_threshold(log, threshold);
        e2t.push_back(epochs);
        std::string csv_path = o.out_prefix + "_seed" + std::to_string(seed) + ".csv";
        write_text_file(csv_path, train_log_csv(log));
        outputs.push_back(csv_path);
        per_seed.push_back(json{{"seed", seed}, {"epochs_to_threshold", epochs}, {"final_weights", log.final_weights_hash}});
        std::printf("seed %llu: epochs-to-%.0f%% = %d (final test acc %.4f)\n", (unsigned long long)seed,
                    threshold * 100.0, epochs, log.epochs.back().test_acc);
    }

    std::vector<int> sorted = e2t;
    std::sort(sorted.begin(), sorted.end());
    double median = sorted.size() % 2 ? double(sorted[sorted.size() / 2])
                                      : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
    double mean = 0.0;
    for (int e : e2t) mean += e;
    mean /= double(e2t.size());

    json summary;
    summary["kernel_pad"] = cfg.value("kernel_pad", false);
    summary["threshold"] = threshold;
    summary["per_seed"] = per_seed;
    summary["median_epochs"] = median;
    summary["mean_epochs"] = mean;
    summary["config"] = cfg;
    if (o.epochs_override > 0) summary["epochs_override"] = o.epochs_override;
    std::string summary_path = o.out_prefix + "_summary.json";
    write_text_file(summary_path, summary.dump(2) + "\n");
    outputs.push_back(summary_path);
    std::printf("median epochs-to-threshold: %.1f, mean: %.2f\n", median, mean);

    write_manifest(o.out_prefix, "micro",
                   json{{"config", o.config_path}, {"out_prefix", o.out_prefix}, {"epochs_override", o.epochs_override}},
                   json{{"config", {{"path", o.config_path}, {"fnv1a", file_hash(o.config_path)}}},
                        {"spec", {{"path", cfg.at("spec").get<std::string>()},
                                  {"fnv1a", file_hash(cfg.at("spec").get<std::string>())}}}},
                   outputs);
    return 0;
}

// ---------------------------------------------------------------------------
// rerun
// ---------------------------------------------------------------------------

int run_rerun(const std::string& manifest_path) {
    json m = json::parse(read_text_file(manifest_path));
    std::string sub = m.at("subcommand");
    const json& c = m.at("config");
    if (sub == "trf") return run_trf(trf_from_config(c));
    if (sub == "erf") return run_erf(erf_from_config(c));
    if (sub == "fit") return run_fit(FitOptions{c.at("erf"), c.at("out_prefix")});
    if (sub == "imbalance") return run_imbalance(ImbalanceOptions{c.at("erf"), c.at("normalize"), c.at("out_prefix")});
    if (sub == "pad") return run_pad(pad_from_config(c));
    if (sub == "micro")
        return run_micro(MicroOptions{c.at("config"), c.at("out_prefix"), c.value("epochs_override", 0)});
    throw Error(manifest_path + ": unknown subcommand '" + sub + "'");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"receptive-field analysis toolkit"};
    app.require_subcommand(1);

    TrfOptions trf;
    auto* trf_cmd = app.add_subcommand("trf", "theoretical receptive field of a spec");
    trf_cmd->add_option("--spec", trf.spec_path, "architecture .spec file")->required();
    trf_cmd->add_option("--node", trf.node, "target node name (default: last spatial node)");
    trf_cmd->add_flag("--coverage", trf.coverage, "also export the window-coverage map (CSV + 16-bit PGM)");
    trf_cmd->add_option("--out-prefix", trf.out_prefix, "output path prefix");

    ErfOptions erf;
    auto* erf_cmd = app.add_subcommand("erf", "effective receptive field over a dataset");
    erf_cmd->add_option("--spec", erf.spec_path, "architecture .spec file")->required();
    erf_cmd->add_option("--weights", erf.weights_path, "weight bundle (.rfsw)");
    erf_cmd->add_option("--init-seed", erf.init_seed, "init seed when no weights given");
    erf_cmd->add_option("--images", erf.images_dir, "directory of P6 PPM images, or an .rfsw tensor stack");
    erf_cmd->add_option("--synthetic", erf.synthetic, "use N seeded synthetic images");
    erf_cmd->add_option("--target", erf.target, "layer | output")->check(CLI::IsMember({"layer", "output"}));
    erf_cmd->add_option("--node", erf.node, "layer-mode target node name");
    erf_cmd->add_option("--class", erf.class_mode, "output-mode logit: mean or index");
    erf_cmd->add_option("--seed", erf.seed, "synthetic data seed");
    erf_cmd->add_option("--out-prefix", erf.out_prefix, "output path prefix");

    FitOptions fit;
    auto* fit_cmd = app.add_subcommand("fit", "2D Gaussian fit of an ERF CSV");
    fit_cmd->add_option("--erf", fit.erf_csv, "ERF CSV field")->required();
    fit_cmd->add_option("--out-prefix", fit.out_prefix, "output path prefix");

    ImbalanceOptions imb;
    auto* imb_cmd = app.add_subcommand("imbalance", "L1/L2 imbalance indices of an ERF CSV");
    imb_cmd->add_option("--erf", imb.erf_csv, "ERF CSV field")->required();
    imb_cmd->add_flag("--normalize", imb.normalize, "sum-normalize the field first");
    imb_cmd->add_option("--out-prefix", imb.out_prefix, "output path prefix");

    PadOptions pad;
    auto* pad_cmd = app.add_subcommand("pad", "apply the kernel-padding transform");
    pad_cmd->add_option("--spec", pad.spec_path, "architecture .spec file")->required();
    pad_cmd->add_option("--weights", pad.weights_path, "weight bundle (.rfsw)");
    pad_cmd->add_option("--init-seed", pad.init_seed, "init seed when no weights given");
    pad_cmd->add_option("--seed", pad.seed, "probe rng seed");
    pad_cmd->add_option("--out-prefix", pad.out_prefix, "output path prefix");

    MicroOptions micro;
    auto* micro_cmd = app.add_subcommand("micro", "micro-object classification benchmark");
    micro_cmd->add_option("--config", micro.config_path, "benchmark config JSON")->required();
    micro_cmd->add_option("--out-prefix", micro.out_prefix, "output path prefix");
    micro_cmd->add_option("--epochs", micro.epochs_override, "override the epoch budget");

    std::string manifest_path;
    auto* rerun_cmd = app.add_subcommand("rerun", "replay a run from its manifest");
    rerun_cmd->add_option("--manifest", manifest_path, "manifest json from a previous run")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (trf_cmd->parsed()) return run_trf(trf);
        if (erf_cmd->parsed()) return run_erf(erf);
        if (fit_cmd->parsed()) return run_fit(fit);
        if (imb_cmd->parsed()) return run_imbalance(imb);
        if (pad_cmd->parsed()) return run_pad(pad);
        if (micro_cmd->parsed()) return run_micro(micro);
        if (rerun_cmd->parsed()) return run_rerun(manifest_path);
    } catch (const ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

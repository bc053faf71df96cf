// microchar: microstructure characterization toolkit.
//
// Subcommands: generate | train | search | eval | pipeline | bench.
// Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <microchar/dense.hpp>
#include <microchar/image_io.hpp>
#include <microchar/pipeline.hpp>
#include <microchar/psilm.hpp>
#include <microchar/svg.hpp>
#include <microchar/synth.hpp>
#include <microchar/wcbd.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace microchar;

namespace {

// --config JSON file: {"generate": {"n": 32, ...}, "train": {...}, ...}.
// Precedence: explicit CLI flags > config file values > built-in defaults.
json g_config;

void preload_config(int argc, char** argv) {
    for (int i = 1; i + 1 < argc; ++i) {
        if (std::string(argv[i]) == "--config") {
            std::ifstream in(argv[i + 1]);
            if (!in) throw IoError(std::string("cannot read config: ") + argv[i + 1]);
            in >> g_config;
            return;
        }
    }
}

template <class T>
T cfg_default(const std::string& section, const std::string& key, T fallback) {
    if (g_config.contains(section) && g_config[section].contains(key)) {
        return g_config[section][key].get<T>();
    }
    return fallback;
}

struct SplitArg {
    int train = 0, val = 0, test = 0;
};

SplitArg parse_split(const std::string& text, int n) {
    SplitArg split;
    if (text.empty()) {
        // Default: roughly 80/10/10 with remainders into train.
        split.val = std::max(0, n / 10);
        split.test = std::max(0, n / 10);
        split.train = n - split.val - split.test;
        return split;
    }
    if (std::sscanf(text.c_str(), "%d,%d,%d", &split.train, &split.val, &split.test) != 3) {
        throw CLI::ValidationError("--split", "expected train,val,test");
    }
    return split;
}

std::vector<ManifestRow> load_manifests(const std::vector<std::string>& paths) {
    std::vector<ManifestRow> rows;
    for (const std::string& path : paths) {
        const auto part = read_manifest(path);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    return rows;
}

json curve_json(const TrainCurve& curve, std::uint64_t seed, int epochs) {
    return json{{"seed", seed},
                {"epochs", epochs},
                {"train_loss", curve.train_loss},
                {"val_loss", curve.val_loss},
                {"best_epoch", curve.best_epoch}};
}

// --- subcommand bodies ------------------------------------------------------

int cmd_generate(const std::string& kind, int n, const std::string& split_text,
                 std::uint64_t seed, int size, const std::string& out_dir,
                 const ParticleSpec& pspec, const GrainSpec& gspec, bool vary) {
    DatasetConfig cfg;
    cfg.kind = defect_class_from_string(kind);
    cfg.n = n;
    const SplitArg split = parse_split(split_text, n);
    cfg.train = split.train;
    cfg.val = split.val;
    cfg.test = split.test;
    cfg.seed = seed;
    cfg.size = size;
    cfg.pspec = pspec;
    cfg.gspec = gspec;
    cfg.vary = vary;
    cfg.out_dir = out_dir;
    const auto rows = make_dataset(cfg);
    std::cout << "wrote " << rows.size() << " images under " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& net, const std::vector<std::string>& manifests, int epochs,
              double lr, int batch, std::uint64_t seed, const std::string& out_dir, int bins,
              const std::string& arch_json_path) {
    const auto rows = load_manifests(manifests);
    fs::create_directories(out_dir);

    TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.lr = lr;
    cfg.batch = batch;
    cfg.seed = seed;

    if (net == "binary" || net == "rgb") {
        const bool rgb = net == "rgb";
        ArchSpec spec = rgb ? ArchSpec::default_rgb() : ArchSpec::default_binary();
        if (!arch_json_path.empty()) {
            std::ifstream in(arch_json_path);
            if (!in) throw IoError("cannot read arch spec: " + arch_json_path);
            json j;
            in >> j;
            if (j.contains("spec")) j = j["spec"]; // accept search output files
            spec = ArchSpec::from_json(j.dump());
            spec.out_channels = rgb ? 3 : 1;
        }
        const auto train = load_cedn_samples(rows, "train", rgb);
        const auto val = load_cedn_samples(rows, "val", rgb);
        Cedn model(spec, seed);
        const TrainCurve curve =
            train_cedn(model, train, val, cfg, rgb ? LossKind::Mse : LossKind::Bce);
        const std::string path =
            (fs::path(out_dir) / (rgb ? kRgbCednCkpt : kBinaryCednCkpt)).string();
        model.save(path, curve_json(curve, seed, epochs).dump(2));
        std::cout << "saved " << path << " (final train loss "
                  << (curve.train_loss.empty() ? 0.0 : curve.train_loss.back()) << ")\n";
        return 0;
    }
    if (net == "classifier") {
        const auto train = load_labeled_samples(rows, "train");
        const auto val = load_labeled_samples(rows, "val");
        Classifier model(seed);
        const TrainCurve curve = train_classifier(model, train, val, cfg);
        const std::string path = (fs::path(out_dir) / kClassifierCkpt).string();
        model.save(path, curve_json(curve, seed, epochs).dump(2));
        std::cout << "saved " << path << "\n";
        return 0;
    }
    if (net == "regression") {
        const RegressionSamples data = load_regression_samples(rows, "train", bins);
        const RegressionSamples val = load_regression_samples(rows, "val", bins);
        RegressionNet radii(bins, seed);
        RegressionNet freqs(bins, seed + 1);
        const TrainCurve rc = train_regression(radii, data.radii, val.radii, cfg);
        const TrainCurve fc = train_regression(freqs, data.freqs, val.freqs, cfg);
        const std::string radii_path = (fs::path(out_dir) / kRegRadiiCkpt).string();
        const std::string freq_path = (fs::path(out_dir) / kRegFreqCkpt).string();
        radii.save(radii_path, curve_json(rc, seed, epochs).dump(2));
        freqs.save(freq_path, curve_json(fc, seed + 1, epochs).dump(2));
        std::cout << "saved " << radii_path << " and " << freq_path << "\n";
        return 0;
    }
    throw InvalidArgument("unknown net: " + net);
}

int cmd_search(int generations, int lambda, int proxy_epochs, int images, int val_images,
               std::uint64_t seed, int size, const std::string& out_dir) {
    // Self-contained proxy dataset: synthetic grains with PSILM RGB labels.
    RgbDataset data;
    PsilmConfig psilm_cfg;
    psilm_cfg.grid_step = std::max(2, size / 32);
    psilm_cfg.colormap_max = size / 4.0;
    Rng vary = Rng::stream(seed, "search/specs");
    for (int i = 0; i < images + val_images; ++i) {
        GrainSpec gspec;
        gspec.seed_count = 5 + static_cast<int>(vary.next_below(36));
        gspec.noise_sigma = 3.0;
        const SynthImage sample = gen_grains(gspec, size, seed + 1000 + static_cast<std::uint64_t>(i));
        const RgbSegmentation seg = rgb_segmentation(sample.image, psilm_cfg);
        CednSample cs{gray_to_tensor(sample.image), rgb_to_tensor(seg.rgb)};
        (i < images ? data.train : data.val).push_back(std::move(cs));
    }

    DenseConfig cfg;
    cfg.generations = generations;
    cfg.lambda = lambda;
    cfg.proxy_epochs = proxy_epochs;
    cfg.seed = seed;
    const DenseResult result = dense_search(cfg, data);

    fs::create_directories(out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "history.jsonl");
        out << dense_history_jsonl(result);
    }
    {
        std::ofstream out(fs::path(out_dir) / "best_spec.json");
        out << json{{"fitness", result.best_fitness},
                    {"spec", json::parse(result.best.to_json())}}
                   .dump(2)
            << "\n";
    }
    std::cout << "best fitness " << result.best_fitness << "; filters ";
    for (int k : result.best.all_filters()) std::cout << k << " ";
    std::cout << "\n";
    return 0;
}

int cmd_eval(const std::string& branch, const std::vector<std::string>& manifests,
             const std::string& ckpt_dir, const std::string& split, const std::string& out_path,
             int min_separation, const std::string& polarity) {
    const auto rows = load_manifests(manifests);
    std::string report;
    if (branch == "binary") {
        const Cedn net = Cedn::load((fs::path(ckpt_dir) / kBinaryCednCkpt).string());
        report = eval_binary(rows, net, split);
    } else if (branch == "boxes") {
        bool dark = true; // pores convention: defects are dark
        if (polarity == "bright") {
            dark = false;
        } else if (polarity == "auto") {
            for (const auto& row : rows) {
                if (row.cls == "particles") dark = false;
            }
        }
        report = eval_boxes(rows, split, dark ? Polarity::Dark : Polarity::Bright,
                            min_separation);
    } else if (branch == "rgb") {
        const Cedn net = Cedn::load((fs::path(ckpt_dir) / kRgbCednCkpt).string());
        report = eval_rgb(rows, net, split);
    } else if (branch == "classifier") {
        const Classifier net = Classifier::load((fs::path(ckpt_dir) / kClassifierCkpt).string());
        report = eval_classifier(rows, net, split);
    } else if (branch == "regression") {
        const RegressionNet radii =
            RegressionNet::load((fs::path(ckpt_dir) / kRegRadiiCkpt).string());
        const RegressionNet freqs =
            RegressionNet::load((fs::path(ckpt_dir) / kRegFreqCkpt).string());
        report = eval_regression(rows, radii, freqs, split);
    } else {
        throw InvalidArgument("unknown branch: " + branch);
    }
    if (out_path.empty()) {
        std::cout << report << "\n";
    } else {
        std::ofstream out(out_path);
        if (!out) throw IoError("cannot write " + out_path);
        out << report << "\n";
        std::cout << "wrote " << out_path << "\n";
    }
    return 0;
}

int cmd_pipeline(const std::string& input, const std::string& mode,
                 const std::string& ckpt_dir, std::int64_t seeded, const std::string& out_dir,
                 const std::string& report_path, double min_confidence, int min_separation,
                 int bins) {
    PipelineOptions opt;
    opt.mode = pipeline_mode_from_string(mode);
    opt.out_dir = out_dir;
    opt.min_confidence = min_confidence;
    opt.min_separation = min_separation;
    opt.bins = bins;

    Checkpoints ckpt;
    if (seeded >= 0) {
        ckpt = Checkpoints::seeded(static_cast<std::uint64_t>(seeded));
    } else {
        ckpt = Checkpoints::load_dir(ckpt_dir, opt.mode == PipelineMode::Auto);
    }

    const auto inputs = collect_inputs(input);
    const auto reports = run_pipeline(inputs, ckpt, opt);
    if (!report_path.empty()) {
        write_pipeline_reports(report_path, reports);
    }
    int skipped = 0;
    for (const auto& r : reports) skipped += r.branch == "skipped" ? 1 : 0;
    std::cout << "processed " << reports.size() - skipped << " image(s), skipped " << skipped
              << "\n";
    return 0;
}

int cmd_bench(int n, const std::string& method, std::uint64_t seed, int size,
              const std::string& ckpt_dir, const std::string& out_dir) {
    PsilmConfig cfg;
    cfg.grid_step = std::max(2, size / 32);
    cfg.colormap_max = size / 4.0;
    fs::create_directories(out_dir);
    std::vector<BenchReport> reports;
    if (method == "psilm" || method == "both") {
        reports.push_back(bench_psilm(n, seed, size, cfg));
        std::ofstream out(fs::path(out_dir) / "bench_psilm.json");
        out << bench_report_json(reports.back()) << "\n";
    }
    if (method == "ml" || method == "both") {
        reports.push_back(bench_ml(n, seed, size, ckpt_dir, cfg));
        std::ofstream out(fs::path(out_dir) / "bench_ml.json");
        out << bench_report_json(reports.back()) << "\n";
    }
    write_bench_csv((fs::path(out_dir) / "bench.csv").string(), reports);
    for (const auto& r : reports) {
        std::cout << r.method << ": " << r.total_seconds << " s total, " << r.per_image_mean
                  << " s/image\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        preload_config(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    CLI::App app{"microstructure characterization toolkit"};
    app.require_subcommand(1);
    app.fallthrough(true); // lets --config appear after the subcommand name
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file (flag defaults per subcommand)");

    // generate
    auto* generate = app.add_subcommand("generate", "synthesize a labeled dataset");
    std::string g_kind = cfg_default<std::string>("generate", "kind", "particles");
    int g_n = cfg_default("generate", "n", 10);
    std::string g_split = cfg_default<std::string>("generate", "split", "");
    std::uint64_t g_seed = cfg_default<std::uint64_t>("generate", "seed", 1);
    int g_size = cfg_default("generate", "size", 64);
    std::string g_out = cfg_default<std::string>("generate", "out", "dataset");
    ParticleSpec g_pspec;
    GrainSpec g_gspec;
    g_pspec.count = cfg_default("generate", "count", 12);
    g_pspec.noise_sigma = cfg_default("generate", "noise", 6.0);
    g_gspec.noise_sigma = g_pspec.noise_sigma;
    bool g_overlap = cfg_default("generate", "overlap", false);
    bool g_no_vary = cfg_default("generate", "no_vary", false);
    generate->add_option("--kind", g_kind, "particles|pores|grains|mixed")
        ->check(CLI::IsMember({"particles", "pores", "grains", "mixed"}));
    generate->add_option("--n", g_n, "number of images")->check(CLI::PositiveNumber);
    generate->add_option("--split", g_split, "train,val,test counts (default ~80/10/10)");
    generate->add_option("--seed", g_seed, "dataset seed");
    generate->add_option("--size", g_size, "image side in px")->check(CLI::Range(32, 4096));
    generate->add_option("--out", g_out, "output directory");
    generate->add_option("--count", g_pspec.count, "defects per image (base)");
    generate->add_option("--noise", g_pspec.noise_sigma, "additive gaussian sigma");
    generate->add_option("--grain-seeds", g_gspec.seed_count, "voronoi seeds (base)");
    generate->add_option("--boundary-width", g_gspec.boundary_width, "GB stroke width");
    generate->add_flag("--overlap", g_overlap, "allow overlapping disks");
    generate->add_flag("--no-vary", g_no_vary, "disable per-image parameter jitter");

    // train
    auto* train = app.add_subcommand("train", "train a network from a manifest");
    std::string t_net = cfg_default<std::string>("train", "net", "binary");
    std::vector<std::string> t_manifests;
    int t_epochs = cfg_default("train", "epochs", 10);
    double t_lr = cfg_default("train", "lr", 1e-3);
    int t_batch = cfg_default("train", "batch", 8);
    std::uint64_t t_seed = cfg_default<std::uint64_t>("train", "seed", 1);
    std::string t_out = cfg_default<std::string>("train", "out", "checkpoints");
    int t_bins = cfg_default("train", "bins", 20);
    std::string t_arch = cfg_default<std::string>("train", "arch_spec", "");
    train->add_option("--net", t_net, "classifier|binary|rgb|regression")
        ->check(CLI::IsMember({"classifier", "binary", "rgb", "regression"}));
    train->add_option("--manifest", t_manifests, "manifest.jsonl path(s)")->required();
    train->add_option("--epochs", t_epochs)->check(CLI::PositiveNumber);
    train->add_option("--lr", t_lr);
    train->add_option("--batch", t_batch)->check(CLI::PositiveNumber);
    train->add_option("--seed", t_seed);
    train->add_option("--out", t_out, "checkpoint directory");
    train->add_option("--bins", t_bins, "histogram bins (regression)");
    train->add_option("--arch-spec", t_arch, "JSON ArchSpec (or search best_spec.json)");

    // search
    auto* search = app.add_subcommand("search", "CMA-ES filter-size search");
    int s_gens = cfg_default("search", "gens", 8);
    int s_lambda = cfg_default("search", "lambda", 6);
    int s_proxy_epochs = cfg_default("search", "proxy_epochs", 1);
    int s_images = cfg_default("search", "images", 32);
    int s_val_images = cfg_default("search", "val_images", 8);
    std::uint64_t s_seed = cfg_default<std::uint64_t>("search", "seed", 1);
    int s_size = cfg_default("search", "size", 64);
    std::string s_out = cfg_default<std::string>("search", "out", "search_out");
    search->add_option("--gens", s_gens)->check(CLI::PositiveNumber);
    search->add_option("--lambda", s_lambda)->check(CLI::Range(2, 256));
    search->add_option("--proxy-epochs", s_proxy_epochs)->check(CLI::PositiveNumber);
    search->add_option("--images", s_images, "proxy training images")->check(CLI::PositiveNumber);
    search->add_option("--val-images", s_val_images)->check(CLI::PositiveNumber);
    search->add_option("--seed", s_seed);
    search->add_option("--size", s_size)->check(CLI::Range(32, 512));
    search->add_option("--out", s_out, "output directory");

    // eval
    auto* eval = app.add_subcommand("eval", "table-style evaluation reports");
    std::string e_branch = cfg_default<std::string>("eval", "branch", "binary");
    std::vector<std::string> e_manifests;
    std::string e_ckpt = cfg_default<std::string>("eval", "checkpoints", "checkpoints");
    std::string e_split = cfg_default<std::string>("eval", "split", "test");
    std::string e_out = cfg_default<std::string>("eval", "out", "");
    int e_min_sep = cfg_default("eval", "min_separation", 5);
    std::string e_polarity = cfg_default<std::string>("eval", "polarity", "auto");
    eval->add_option("--branch", e_branch, "binary|boxes|rgb|classifier|regression")
        ->check(CLI::IsMember({"binary", "boxes", "rgb", "classifier", "regression"}));
    eval->add_option("--manifest", e_manifests, "manifest.jsonl path(s)")->required();
    eval->add_option("--checkpoints", e_ckpt, "checkpoint directory");
    eval->add_option("--split", e_split, "split to evaluate");
    eval->add_option("--out", e_out, "write report JSON here (default stdout)");
    eval->add_option("--min-separation", e_min_sep);
    eval->add_option("--polarity", e_polarity, "defect polarity for the boxes branch")
        ->check(CLI::IsMember({"auto", "dark", "bright"}));

    // pipeline
    auto* pipeline = app.add_subcommand("pipeline", "classify-and-route characterization");
    std::string p_input;
    std::string p_mode = cfg_default<std::string>("pipeline", "mode", "auto");
    std::string p_ckpt = cfg_default<std::string>("pipeline", "checkpoints", "checkpoints");
    std::int64_t p_seeded = cfg_default<std::int64_t>("pipeline", "seeded_checkpoints", -1);
    std::string p_out = cfg_default<std::string>("pipeline", "out", "pipeline_out");
    std::string p_report = cfg_default<std::string>("pipeline", "report", "");
    double p_min_conf = cfg_default("pipeline", "min_confidence", 0.6);
    int p_min_sep = cfg_default("pipeline", "min_separation", 5);
    int p_bins = cfg_default("pipeline", "bins", 20);
    pipeline->add_option("--input", p_input, "image file or directory")->required();
    pipeline->add_option("--mode", p_mode, "auto|binary|rgb|both")
        ->check(CLI::IsMember({"auto", "binary", "rgb", "both"}));
    pipeline->add_option("--checkpoints", p_ckpt, "checkpoint directory");
    pipeline->add_option("--seeded-checkpoints", p_seeded,
                         "use untrained seeded networks with this seed (testing)");
    pipeline->add_option("--out", p_out, "artifact directory");
    pipeline->add_option("--report", p_report, "write JSONL reports here");
    pipeline->add_option("--min-confidence", p_min_conf,
                         "below this, auto mode runs both branches");
    pipeline->add_option("--min-separation", p_min_sep, "watershed marker separation");
    pipeline->add_option("--bins", p_bins, "histogram bins");

    // bench
    auto* bench = app.add_subcommand("bench", "time PSILM vs the trained pipeline");
    int b_n = cfg_default("bench", "n", 10);
    std::string b_method = cfg_default<std::string>("bench", "method", "both");
    std::uint64_t b_seed = cfg_default<std::uint64_t>("bench", "seed", 1);
    int b_size = cfg_default("bench", "size", 256);
    std::string b_ckpt = cfg_default<std::string>("bench", "checkpoints", "");
    std::string b_out = cfg_default<std::string>("bench", "out", "bench_out");
    bench->add_option("--n", b_n, "number of images")->check(CLI::PositiveNumber);
    bench->add_option("--method", b_method, "psilm|ml|both")
        ->check(CLI::IsMember({"psilm", "ml", "both"}));
    bench->add_option("--seed", b_seed);
    bench->add_option("--size", b_size)->check(CLI::Range(32, 4096));
    bench->add_option("--checkpoints", b_ckpt, "checkpoint dir (empty = seeded networks)");
    bench->add_option("--out", b_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1; // usage errors exit 1; --help exits 0
    }

    try {
        if (*generate) {
            g_pspec.allow_overlap = g_overlap;
            return cmd_generate(g_kind, g_n, g_split, g_seed, g_size, g_out, g_pspec, g_gspec,
                                !g_no_vary);
        }
        if (*train) {
            return cmd_train(t_net, t_manifests, t_epochs, t_lr, t_batch, t_seed, t_out, t_bins,
                             t_arch);
        }
        if (*search) {
            return cmd_search(s_gens, s_lambda, s_proxy_epochs, s_images, s_val_images, s_seed,
                              s_size, s_out);
        }
        if (*eval) {
            return cmd_eval(e_branch, e_manifests, e_ckpt, e_split, e_out, e_min_sep, e_polarity);
        }
        if (*pipeline) {
            return cmd_pipeline(p_input, p_mode, p_ckpt, p_seeded, p_out, p_report, p_min_conf,
                                p_min_sep, p_bins);
        }
        if (*bench) {
            return cmd_bench(b_n, b_method, b_seed, b_size, b_ckpt, b_out);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

#include <microchar/pipeline.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>

#include <microchar/image_io.hpp>
#include <microchar/svg.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace microchar {

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

unsigned worker_count(std::size_t jobs) {
    unsigned n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("MICROCHAR_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) n = static_cast<unsigned>(v);
    }
    return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

json conventions_block() {
    return json{
        {"mask_encoding", "PGM, 0=defect, 255=background"},
        {"pixel_error", "per-class misclassification percent; black = defect class"},
        {"center_error", "abs(delta)/image side * 100 (width for x, height for y)"},
        {"size_error", "abs(delta)/truth dimension * 100"},
        {"box_matching", "greedy nearest-center; each box matched at most once"},
        {"rgb_accuracy", "percent of pixels mapping to the same of 16 jet anchors"},
        {"histogram", "uniform bins; frequencies are sample counts"},
    };
}

json stats_json(const ParamError& e) { return json{{"mean", e.mean}, {"std", e.stddev}}; }

} // namespace

std::string conventions_json() { return conventions_block().dump(); }

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

Checkpoints Checkpoints::load_dir(const std::string& dir, bool require_all) {
    Checkpoints ckpt;
    const auto want = [&](const char* name) {
        const fs::path p = fs::path(dir) / name;
        if (!fs::exists(p)) {
            if (require_all) {
                throw MissingCheckpoint("missing checkpoint: " + p.string());
            }
            return std::string();
        }
        return p.string();
    };
    if (const auto p = want(kClassifierCkpt); !p.empty()) ckpt.classifier = Classifier::load(p);
    if (const auto p = want(kBinaryCednCkpt); !p.empty()) ckpt.binary = Cedn::load(p);
    if (const auto p = want(kRgbCednCkpt); !p.empty()) ckpt.rgb = Cedn::load(p);
    if (const auto p = want(kRegRadiiCkpt); !p.empty()) ckpt.reg_radii = RegressionNet::load(p);
    if (const auto p = want(kRegFreqCkpt); !p.empty()) ckpt.reg_freq = RegressionNet::load(p);
    return ckpt;
}

Checkpoints Checkpoints::seeded(std::uint64_t seed) {
    Checkpoints ckpt;
    ckpt.classifier = Classifier(seed);
    ckpt.binary = Cedn(ArchSpec::default_binary(), seed);
    ckpt.rgb = Cedn(ArchSpec::default_rgb(), seed + 1);
    ckpt.reg_radii = RegressionNet(20, seed + 2);
    ckpt.reg_freq = RegressionNet(20, seed + 3);
    return ckpt;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

PipelineMode pipeline_mode_from_string(const std::string& s) {
    if (s == "auto") return PipelineMode::Auto;
    if (s == "binary") return PipelineMode::Binary;
    if (s == "rgb") return PipelineMode::Rgb;
    if (s == "both") return PipelineMode::Both;
    throw InvalidArgument("unknown pipeline mode: " + s);
}

std::string to_string(PipelineMode mode) {
    switch (mode) {
        case PipelineMode::Auto: return "auto";
        case PipelineMode::Binary: return "binary";
        case PipelineMode::Rgb: return "rgb";
        case PipelineMode::Both: return "both";
    }
    return "auto";
}

std::vector<std::string> collect_inputs(const std::string& path) {
    std::vector<std::string> inputs;
    if (fs::is_directory(path)) {
        for (const auto& entry : fs::directory_iterator(path)) {
            if (!entry.is_regular_file()) continue;
            const std::string ext = entry.path().extension().string();
            if (ext == ".png" || ext == ".pgm" || ext == ".ppm") {
                inputs.push_back(entry.path().string());
            }
        }
        std::sort(inputs.begin(), inputs.end());
    } else if (fs::exists(path)) {
        inputs.push_back(path);
    } else {
        throw UnreadableImage("input path does not exist: " + path);
    }
    return inputs;
}

namespace {

/// Fully convolutional inference at native size: replicate-pad to a multiple
/// of 2^levels, run, crop back.
nn::Tensor cedn_infer(const Cedn& net, const GrayImage& img) {
    const int div = 1 << net.spec().levels;
    const nn::Tensor x = pad_to_multiple(gray_to_tensor(img), div);
    nn::Tensor y = net.forward(x);
    if (y.h == img.height && y.w == img.width) return y;
    nn::Tensor crop(1, y.c, img.height, img.width);
    for (int c = 0; c < y.c; ++c) {
        for (int yy = 0; yy < img.height; ++yy) {
            for (int xx = 0; xx < img.width; ++xx) {
                crop.at(0, c, yy, xx) = y.at(0, c, yy, xx);
            }
        }
    }
    return crop;
}

PipelineReport process_one(const std::string& input, const Checkpoints& ckpt,
                           const PipelineOptions& opt) {
    PipelineReport report;
    report.input = input;

    GrayImage img;
    {
        const auto t0 = Clock::now();
        try {
            img = read_gray(input);
        } catch (const Error& e) {
            report.error = e.what();
            report.branch = "skipped";
            return report;
        }
        report.stage_times.push_back({"read", seconds_since(t0)});
    }

    PipelineMode mode = opt.mode;
    if (mode == PipelineMode::Auto) {
        if (!ckpt.classifier) throw MissingCheckpoint("auto mode requires a classifier checkpoint");
        const auto t0 = Clock::now();
        const ClassLabel label = classify(*ckpt.classifier, img);
        report.stage_times.push_back({"classify", seconds_since(t0)});
        report.predicted_class = to_string(label.cls);
        report.probs = label.probs;
        const double confidence = *std::max_element(label.probs.begin(), label.probs.end());
        if (confidence < opt.min_confidence) {
            mode = PipelineMode::Both; // low confidence: run both branches
        } else {
            mode = label.cls == DefectClass::Grains ? PipelineMode::Rgb : PipelineMode::Binary;
        }
    } else if (ckpt.classifier) {
        // Classification is still recorded when available, but the forced
        // mode wins.
        const auto t0 = Clock::now();
        const ClassLabel label = classify(*ckpt.classifier, img);
        report.stage_times.push_back({"classify", seconds_since(t0)});
        report.predicted_class = to_string(label.cls);
        report.probs = label.probs;
    }
    report.branch = to_string(mode);

    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    const std::string stem = fs::path(input).stem().string();
    const fs::path out_base = fs::path(opt.out_dir) / stem;

    const bool run_binary = mode == PipelineMode::Binary || mode == PipelineMode::Both;
    const bool run_rgb = mode == PipelineMode::Rgb || mode == PipelineMode::Both;

    if (run_binary) {
        if (!ckpt.binary) throw MissingCheckpoint("binary branch requires binary_cedn.ckpt");
        auto t0 = Clock::now();
        const nn::Tensor y = cedn_infer(*ckpt.binary, img);
        const BinaryMask mask = tensor_to_mask(y);
        report.stage_times.push_back({"binary_segment", seconds_since(t0)});

        t0 = Clock::now();
        const LabelMap labels = split_overlaps(mask, opt.min_separation);
        const std::vector<BoundingBox> boxes = extract_boxes(labels);
        report.stage_times.push_back({"split_boxes", seconds_since(t0)});

        t0 = Clock::now();
        const std::string mask_path = out_base.string() + "_mask.pgm";
        write_mask(mask_path, mask);
        report.artifacts.emplace_back("mask", mask_path);
        const std::string boxes_csv = out_base.string() + "_boxes.csv";
        write_boxes_csv(boxes_csv, boxes);
        report.artifacts.emplace_back("boxes_csv", boxes_csv);
        json jboxes = json::array();
        for (const auto& b : boxes) {
            jboxes.push_back(json{{"label", b.label},
                                  {"cx", b.cx},
                                  {"cy", b.cy},
                                  {"w", b.w},
                                  {"h", b.h},
                                  {"eq_diam", b.equivalent_diameter}});
        }
        const std::string boxes_json = out_base.string() + "_boxes.json";
        std::ofstream bj(boxes_json);
        bj << json{{"input", input}, {"boxes", jboxes}, {"conventions", conventions_block()}}.dump(2)
           << "\n";
        report.artifacts.emplace_back("boxes_json", boxes_json);
        report.stage_times.push_back({"write_binary", seconds_since(t0)});
    }

    if (run_rgb) {
        if (!ckpt.rgb) throw MissingCheckpoint("rgb branch requires rgb_cedn.ckpt");
        if (!ckpt.reg_radii || !ckpt.reg_freq) {
            throw MissingCheckpoint("rgb branch requires regression checkpoints");
        }
        auto t0 = Clock::now();
        const nn::Tensor y = cedn_infer(*ckpt.rgb, img);
        RgbImage rgb = tensor_to_rgb(y);
        // Detected pore pixels render black, matching the classical
        // convention for mixed microstructures.
        const BinaryMask pores =
            detect_pores(img, opt.psilm.pore_open_radius, opt.psilm.pore_min_area);
        for (int yy = 0; yy < rgb.height; ++yy) {
            for (int xx = 0; xx < rgb.width; ++xx) {
                if (pores.at(xx, yy)) rgb.set(xx, yy, 0, 0, 0);
            }
        }
        report.stage_times.push_back({"rgb_segment", seconds_since(t0)});

        t0 = Clock::now();
        const HistogramPrediction pred = predict_histogram(*ckpt.reg_radii, *ckpt.reg_freq, rgb);
        report.stage_times.push_back({"histogram", seconds_since(t0)});

        // Deterministic PSILM histogram on the raw input for cross-checking.
        t0 = Clock::now();
        const RgbSegmentation psilm_seg = rgb_segmentation(img, opt.psilm);
        json crosscheck;
        if (!psilm_seg.samples.empty()) {
            const Histogram ph =
                grain_histogram(psilm_seg.samples, opt.bins, 0.0, opt.psilm.colormap_max);
            const RadiusSummary sum = summarize_radii(psilm_seg.samples);
            crosscheck = json{{"mean", sum.mean},
                              {"std", sum.stddev},
                              {"n", sum.n},
                              {"formatted", sum.formatted}};
            const std::string ph_csv = out_base.string() + "_psilm_hist.csv";
            write_histogram_csv(ph_csv, ph);
            report.artifacts.emplace_back("psilm_hist_csv", ph_csv);
        }
        report.stage_times.push_back({"psilm_crosscheck", seconds_since(t0)});

        t0 = Clock::now();
        const std::string rgb_path = out_base.string() + "_rgb.png";
        write_rgb(rgb_path, rgb);
        report.artifacts.emplace_back("rgb", rgb_path);

        const std::string hist_csv = out_base.string() + "_hist.csv";
        {
            std::ofstream out(hist_csv);
            out << "radius,frequency\n";
            for (std::size_t i = 0; i < pred.radii.size(); ++i) {
                out << pred.radii[i] << "," << pred.frequencies[i] << "\n";
            }
        }
        report.artifacts.emplace_back("hist_csv", hist_csv);

        // SVG rendering of the predicted histogram.
        Histogram svg_hist;
        if (!pred.radii.empty()) {
            const double lo = *std::min_element(pred.radii.begin(), pred.radii.end());
            const double hi = *std::max_element(pred.radii.begin(), pred.radii.end());
            svg_hist.bin_edges.resize(pred.radii.size() + 1);
            const double half = pred.radii.size() > 1
                                    ? (hi - lo) / static_cast<double>(pred.radii.size() - 1) / 2.0
                                    : 0.5;
            for (std::size_t i = 0; i <= pred.radii.size(); ++i) {
                svg_hist.bin_edges[i] =
                    (i < pred.radii.size() ? pred.radii[i] - half : pred.radii.back() + half);
            }
            for (double f : pred.frequencies) {
                svg_hist.frequencies.push_back(
                    static_cast<std::uint64_t>(std::llround(std::max(0.0, f * 1000.0))));
            }
            const std::string svg_path = out_base.string() + "_hist.svg";
            write_histogram_svg(svg_path, svg_hist, "predicted grain size distribution");
            report.artifacts.emplace_back("hist_svg", svg_path);
        }
        report.stage_times.push_back({"write_rgb", seconds_since(t0)});

        if (!crosscheck.is_null()) {
            // Stored as an artifact-level JSON note next to the CSVs.
            const std::string cc_path = out_base.string() + "_psilm_summary.json";
            std::ofstream out(cc_path);
            out << crosscheck.dump(2) << "\n";
            report.artifacts.emplace_back("psilm_summary", cc_path);
        }
    }
    return report;
}

} // namespace

std::vector<PipelineReport> run_pipeline(const std::vector<std::string>& inputs,
                                         const Checkpoints& ckpt, const PipelineOptions& opt) {
    std::vector<PipelineReport> reports(inputs.size());
    if (inputs.empty()) return reports;

    const unsigned workers = worker_count(inputs.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            reports[i] = process_one(inputs[i], ckpt, opt);
        }
        return reports;
    }

    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex failure_mutex;
    for (unsigned t = 0; t < workers; ++t) {
        pool.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= inputs.size() || failed.load()) break;
                try {
                    reports[i] = process_one(inputs[i], ckpt, opt);
                } catch (const std::exception& e) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    failed.store(true);
                    failure = e.what();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failed.load()) throw Error("pipeline failed: " + failure);
    return reports;
}

std::string pipeline_report_json(const PipelineReport& report) {
    json stages = json::array();
    for (const auto& st : report.stage_times) {
        stages.push_back(json{{"stage", st.stage}, {"seconds", st.seconds}});
    }
    json artifacts = json::object();
    for (const auto& [kind, path] : report.artifacts) artifacts[kind] = path;
    json j{{"input", report.input},
           {"branch", report.branch},
           {"artifacts", artifacts},
           {"stage_times", stages},
           {"conventions", conventions_block()}};
    if (!report.predicted_class.empty()) {
        j["predicted_class"] = report.predicted_class;
        j["probabilities"] = json{{"pores", report.probs[0]},
                                  {"particles", report.probs[1]},
                                  {"grains", report.probs[2]}};
    }
    if (!report.error.empty()) j["error"] = report.error;
    return j.dump(2);
}

void write_pipeline_reports(const std::string& path,
                            const std::vector<PipelineReport>& reports) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& report : reports) {
        out << json::parse(pipeline_report_json(report)).dump() << "\n";
    }
}

// ---------------------------------------------------------------------------
// Benchmark
// ---------------------------------------------------------------------------

namespace {

GrainSpec bench_grain_spec(Rng& rng) {
    GrainSpec spec;
    spec.seed_count = 5 + static_cast<int>(rng.next_below(36));
    spec.relaxation_steps = 2;
    spec.boundary_width = 2;
    spec.noise_sigma = 3.0;
    return spec;
}

void finish_bench(BenchReport& report, const std::vector<double>& per_image) {
    report.n_images = static_cast<int>(per_image.size());
    double sum = 0.0;
    for (double v : per_image) sum += v;
    report.per_image_mean = per_image.empty() ? 0.0 : sum / static_cast<double>(per_image.size());
    double sq = 0.0;
    for (double v : per_image) sq += (v - report.per_image_mean) * (v - report.per_image_mean);
    report.per_image_std =
        per_image.empty() ? 0.0 : std::sqrt(sq / static_cast<double>(per_image.size()));
    report.total_seconds = sum + report.checkpoint_load_seconds;
}

} // namespace

BenchReport bench_psilm(int n, std::uint64_t seed, int size, const PsilmConfig& cfg) {
    if (n < 1) throw InvalidArgument("bench: n must be >= 1");
    BenchReport report;
    report.method = "psilm";
    std::vector<double> per_image;
    double seg_total = 0.0, hist_total = 0.0;
    Rng spec_rng = Rng::stream(seed, "bench/specs");
    for (int i = 0; i < n; ++i) {
        const GrainSpec gspec = bench_grain_spec(spec_rng);
        const SynthImage sample = gen_grains(gspec, size, seed + static_cast<std::uint64_t>(i));
        const auto t0 = Clock::now();
        const RgbSegmentation seg = rgb_segmentation(sample.image, cfg);
        const double t_seg = seconds_since(t0);
        const auto t1 = Clock::now();
        if (!seg.samples.empty()) {
            (void)grain_histogram(seg.samples, 20, 0.0, cfg.colormap_max);
            (void)summarize_radii(seg.samples);
        }
        const double t_hist = seconds_since(t1);
        seg_total += t_seg;
        hist_total += t_hist;
        per_image.push_back(t_seg + t_hist);
    }
    report.stage_totals = {{"segmentation", seg_total}, {"histogram", hist_total}};
    finish_bench(report, per_image);
    return report;
}

BenchReport bench_ml(int n, std::uint64_t seed, int size, const std::string& checkpoint_dir,
                     const PsilmConfig& cfg) {
    if (n < 1) throw InvalidArgument("bench: n must be >= 1");
    (void)cfg;
    BenchReport report;
    report.method = "ml_pipeline";

    const auto t_load = Clock::now();
    const Checkpoints ckpt = checkpoint_dir.empty() ? Checkpoints::seeded(seed)
                                                    : Checkpoints::load_dir(checkpoint_dir, true);
    report.checkpoint_load_seconds = seconds_since(t_load);

    std::vector<double> per_image;
    double classify_total = 0.0, cedn_total = 0.0, reg_total = 0.0;
    Rng spec_rng = Rng::stream(seed, "bench/specs");
    for (int i = 0; i < n; ++i) {
        const GrainSpec gspec = bench_grain_spec(spec_rng);
        const SynthImage sample = gen_grains(gspec, size, seed + static_cast<std::uint64_t>(i));

        const auto t0 = Clock::now();
        (void)classify(*ckpt.classifier, sample.image);
        const double t_cls = seconds_since(t0);

        const auto t1 = Clock::now();
        const nn::Tensor y = cedn_infer(*ckpt.rgb, sample.image);
        const RgbImage rgb = tensor_to_rgb(y);
        const double t_cedn = seconds_since(t1);

        const auto t2 = Clock::now();
        (void)predict_histogram(*ckpt.reg_radii, *ckpt.reg_freq, rgb);
        const double t_reg = seconds_since(t2);

        classify_total += t_cls;
        cedn_total += t_cedn;
        reg_total += t_reg;
        per_image.push_back(t_cls + t_cedn + t_reg);
    }
    report.stage_totals = {
        {"classify", classify_total}, {"rgb_cedn", cedn_total}, {"regression", reg_total}};
    finish_bench(report, per_image);
    return report;
}

std::string bench_report_json(const BenchReport& report) {
    json stages = json::object();
    for (const auto& [stage, total] : report.stage_totals) stages[stage] = total;
    const json j{{"method", report.method},
                 {"n_images", report.n_images},
                 {"total_seconds", report.total_seconds},
                 {"per_image_mean_seconds", report.per_image_mean},
                 {"per_image_std_seconds", report.per_image_std},
                 {"checkpoint_load_seconds", report.checkpoint_load_seconds},
                 {"stage_totals_seconds", stages},
                 {"serial", report.serial},
                 {"conventions", conventions_block()}};
    return j.dump(2);
}

void write_bench_csv(const std::string& path, const std::vector<BenchReport>& reports) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "method,n_images,total_seconds,per_image_mean_seconds,per_image_std_seconds,"
           "checkpoint_load_seconds\n";
    for (const auto& r : reports) {
        out << r.method << "," << r.n_images << "," << r.total_seconds << "," << r.per_image_mean
            << "," << r.per_image_std << "," << r.checkpoint_load_seconds << "\n";
    }
}

// ---------------------------------------------------------------------------
// Evaluation reports
// ---------------------------------------------------------------------------

namespace {

std::vector<ManifestRow> filter_split(const std::vector<ManifestRow>& rows,
                                      const std::string& split) {
    std::vector<ManifestRow> out;
    for (const auto& row : rows) {
        if (split.empty() || row.split == split) out.push_back(row);
    }
    return out;
}

} // namespace

std::string eval_binary(const std::vector<ManifestRow>& rows, const Cedn& net,
                        const std::string& split) {
    json per_image = json::array();
    double sum_black = 0.0, sum_white = 0.0, max_black = 0.0, max_white = 0.0;
    int n = 0;
    for (const auto& row : filter_split(rows, split)) {
        if (row.label.empty()) continue;
        const GrayImage img = read_gray(row.path);
        const BinaryMask label = read_mask(row.label);
        const BinaryMask pred = tensor_to_mask(cedn_infer(net, img));
        const PixelError err = pixel_error(pred, label);
        per_image.push_back(
            json{{"path", row.path}, {"black", err.black}, {"white", err.white}});
        sum_black += err.black;
        sum_white += err.white;
        max_black = std::max(max_black, err.black);
        max_white = std::max(max_white, err.white);
        ++n;
    }
    const json j{
        {"branch", "binary"},
        {"split", split},
        {"n_images", n},
        {"avg_pixel_error", {{"black", n ? sum_black / n : 0.0}, {"white", n ? sum_white / n : 0.0}}},
        {"max_pixel_error", {{"black", max_black}, {"white", max_white}}},
        {"per_image", per_image},
        {"conventions", conventions_block()}};
    return j.dump(2);
}

std::string eval_boxes(const std::vector<ManifestRow>& rows, const std::string& split,
                       Polarity polarity, int min_separation) {
    json per_image = json::array();
    std::vector<double> all_cx, all_cy, all_w, all_h;
    int total_truth = 0, total_pred = 0, total_matched = 0;
    for (const auto& row : filter_split(rows, split)) {
        if (row.disks.empty()) continue;
        const GrayImage img = read_gray(row.path);
        const std::vector<Disk> disks = read_disks_csv(row.disks);
        const BinaryMask mask = wcbd_segment(img, polarity);
        const LabelMap labels = split_overlaps(mask, min_separation);
        const std::vector<BoundingBox> pred = extract_boxes(labels);
        const std::vector<BoundingBox> truth = truth_boxes(disks);
        const BoxErrorReport rep = box_error_report(pred, truth, img.width, img.height);
        total_truth += rep.n_truth;
        total_pred += rep.n_pred;
        total_matched += rep.n_matched;
        for (const auto& m : rep.matches) {
            const auto& t = truth[static_cast<std::size_t>(m.truth_idx)];
            const auto& p = pred[static_cast<std::size_t>(m.pred_idx)];
            all_cx.push_back(std::abs(p.cx - t.cx) / img.width * 100.0);
            all_cy.push_back(std::abs(p.cy - t.cy) / img.height * 100.0);
            if (t.w > 0) all_w.push_back(std::abs(p.w - t.w) / static_cast<double>(t.w) * 100.0);
            if (t.h > 0) all_h.push_back(std::abs(p.h - t.h) / static_cast<double>(t.h) * 100.0);
        }
        per_image.push_back(json{{"path", row.path},
                                 {"n_truth", rep.n_truth},
                                 {"n_pred", rep.n_pred},
                                 {"recall", rep.recall}});
    }
    auto pool_stats = [](const std::vector<double>& v) {
        ParamError e;
        if (v.empty()) return e;
        double s = 0.0;
        for (double x : v) s += x;
        e.mean = s / static_cast<double>(v.size());
        double sq = 0.0;
        for (double x : v) sq += (x - e.mean) * (x - e.mean);
        e.stddev = std::sqrt(sq / static_cast<double>(v.size()));
        return e;
    };
    const json j{{"branch", "boxes"},
                 {"split", split},
                 {"n_truth", total_truth},
                 {"n_pred", total_pred},
                 {"n_matched", total_matched},
                 {"recall", total_truth ? static_cast<double>(total_matched) / total_truth : 1.0},
                 {"error_percent",
                  {{"center_x", stats_json(pool_stats(all_cx))},
                   {"center_y", stats_json(pool_stats(all_cy))},
                   {"width", stats_json(pool_stats(all_w))},
                   {"height", stats_json(pool_stats(all_h))}}},
                 {"per_image", per_image},
                 {"conventions", conventions_block()}};
    return j.dump(2);
}

std::string eval_rgb(const std::vector<ManifestRow>& rows, const Cedn& net,
                     const std::string& split) {
    json per_image = json::array();
    double sum_acc = 0.0;
    double min_acc = 100.0;
    int n = 0;
    for (const auto& row : filter_split(rows, split)) {
        if (row.rgb_label.empty()) continue;
        const GrayImage img = read_gray(row.path);
        const RgbImage label = read_rgb(row.rgb_label);
        const RgbImage pred = tensor_to_rgb(cedn_infer(net, img));
        const double acc = rgb_accuracy(pred, label);
        per_image.push_back(json{{"path", row.path}, {"accuracy", acc}});
        sum_acc += acc;
        min_acc = std::min(min_acc, acc);
        ++n;
    }
    const json j{{"branch", "rgb"},
                 {"split", split},
                 {"n_images", n},
                 {"avg_accuracy", n ? sum_acc / n : 0.0},
                 {"min_accuracy", n ? min_acc : 0.0},
                 {"per_image", per_image},
                 {"conventions", conventions_block()}};
    return j.dump(2);
}

std::string eval_classifier(const std::vector<ManifestRow>& rows, const Classifier& net,
                            const std::string& split) {
    int confusion[3][3] = {};
    int n = 0, correct = 0;
    json per_image = json::array();
    for (const auto& row : filter_split(rows, split)) {
        int truth;
        if (row.cls == "pores") truth = 0;
        else if (row.cls == "particles") truth = 1;
        else if (row.cls == "grains") truth = 2;
        else continue;
        const GrayImage img = read_gray(row.path);
        const ClassLabel label = classify(net, img);
        const int pred = label.cls == DefectClass::Pores ? 0
                         : label.cls == DefectClass::Particles ? 1 : 2;
        ++confusion[truth][pred];
        ++n;
        if (pred == truth) ++correct;
        per_image.push_back(json{{"path", row.path},
                                 {"truth", row.cls},
                                 {"predicted", to_string(label.cls)}});
    }
    json conf = json::array();
    for (auto& row : confusion) conf.push_back(json{row[0], row[1], row[2]});
    const json j{{"branch", "classifier"},
                 {"split", split},
                 {"n_images", n},
                 {"accuracy_percent", n ? 100.0 * correct / n : 0.0},
                 {"classes", json::array({"pores", "particles", "grains"})},
                 {"confusion", conf},
                 {"per_image", per_image},
                 {"conventions", conventions_block()}};
    return j.dump(2);
}

std::vector<CednSample> load_cedn_samples(const std::vector<ManifestRow>& rows,
                                          const std::string& split, bool rgb) {
    std::vector<CednSample> out;
    for (const auto& row : rows) {
        if (!split.empty() && row.split != split) continue;
        if (rgb) {
            if (row.rgb_label.empty()) continue;
            out.push_back({gray_to_tensor(read_gray(row.path)),
                           rgb_to_tensor(read_rgb(row.rgb_label))});
        } else {
            if (row.label.empty()) continue;
            out.push_back({gray_to_tensor(read_gray(row.path)),
                           mask_to_tensor(read_mask(row.label))});
        }
    }
    return out;
}

std::vector<LabeledSample> load_labeled_samples(const std::vector<ManifestRow>& rows,
                                                const std::string& split) {
    std::vector<LabeledSample> out;
    for (const auto& row : rows) {
        if (!split.empty() && row.split != split) continue;
        int label;
        if (row.cls == "pores") label = 0;
        else if (row.cls == "particles") label = 1;
        else if (row.cls == "grains") label = 2;
        else continue;
        out.push_back({gray_to_tensor(read_gray(row.path)), label});
    }
    return out;
}

RegressionSamples load_regression_samples(const std::vector<ManifestRow>& rows,
                                          const std::string& split, int bins) {
    RegressionSamples out;
    for (const auto& row : rows) {
        if (!split.empty() && row.split != split) continue;
        if (row.rgb_label.empty() || row.hist.empty()) continue;
        const Histogram hist = read_histogram_csv(row.hist);
        if (static_cast<int>(hist.frequencies.size()) != bins) continue;
        double total = 0.0;
        for (auto f : hist.frequencies) total += static_cast<double>(f);
        if (total <= 0.0) continue;
        const nn::Tensor input = rgb_to_tensor(read_rgb(row.rgb_label));
        std::vector<float> centers(static_cast<std::size_t>(bins));
        std::vector<float> norm(static_cast<std::size_t>(bins));
        for (int i = 0; i < bins; ++i) {
            centers[static_cast<std::size_t>(i)] = static_cast<float>(
                (hist.bin_edges[static_cast<std::size_t>(i)] +
                 hist.bin_edges[static_cast<std::size_t>(i) + 1]) /
                2.0);
            norm[static_cast<std::size_t>(i)] = static_cast<float>(
                static_cast<double>(hist.frequencies[static_cast<std::size_t>(i)]) / total);
        }
        out.radii.push_back({input, centers});
        out.freqs.push_back({input, norm});
    }
    return out;
}

std::string eval_regression(const std::vector<ManifestRow>& rows,
                            const RegressionNet& radii_net, const RegressionNet& freq_net,
                            const std::string& split) {
    json per_image = json::array();
    double sum_rel = 0.0, max_rel = 0.0;
    int n = 0;
    for (const auto& row : filter_split(rows, split)) {
        if (row.rgb_label.empty() || row.hist.empty()) continue;
        const RgbImage seg = read_rgb(row.rgb_label);
        const Histogram label_hist = read_histogram_csv(row.hist);
        double mass = 0.0, weighted = 0.0;
        for (std::size_t i = 0; i < label_hist.frequencies.size(); ++i) {
            const double center = (label_hist.bin_edges[i] + label_hist.bin_edges[i + 1]) / 2.0;
            mass += static_cast<double>(label_hist.frequencies[i]);
            weighted += center * static_cast<double>(label_hist.frequencies[i]);
        }
        if (mass <= 0.0) continue;
        const double truth_mean = weighted / mass;
        const HistogramPrediction pred = predict_histogram(radii_net, freq_net, seg);
        const double pred_mean = histogram_mean_radius(pred);
        const double rel = std::abs(pred_mean - truth_mean) / truth_mean;
        per_image.push_back(json{{"path", row.path},
                                 {"truth_mean_radius", truth_mean},
                                 {"predicted_mean_radius", pred_mean},
                                 {"relative_error", rel}});
        sum_rel += rel;
        max_rel = std::max(max_rel, rel);
        ++n;
    }
    const json j{{"branch", "regression"},
                 {"split", split},
                 {"n_images", n},
                 {"mean_relative_error", n ? sum_rel / n : 0.0},
                 {"max_relative_error", max_rel},
                 {"per_image", per_image},
                 {"conventions", conventions_block()}};
    return j.dump(2);
}

} // namespace microchar

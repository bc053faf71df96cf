#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <microchar/models.hpp>
#include <microchar/psilm.hpp>
#include <microchar/synth.hpp>
#include <microchar/wcbd.hpp>

namespace microchar {

// ---------------------------------------------------------------------------
// Checkpoint bundle
// ---------------------------------------------------------------------------

/// Conventional file names inside a checkpoint directory.
inline constexpr const char* kClassifierCkpt = "classifier.ckpt";
inline constexpr const char* kBinaryCednCkpt = "binary_cedn.ckpt";
inline constexpr const char* kRgbCednCkpt = "rgb_cedn.ckpt";
inline constexpr const char* kRegRadiiCkpt = "reg_radii.ckpt";
inline constexpr const char* kRegFreqCkpt = "reg_freq.ckpt";

struct Checkpoints {
    std::optional<Classifier> classifier;
    std::optional<Cedn> binary;
    std::optional<Cedn> rgb;
    std::optional<RegressionNet> reg_radii;
    std::optional<RegressionNet> reg_freq;

    /// Loads whatever exists in `dir`. With require_all, a missing file
    /// throws MissingCheckpoint.
    static Checkpoints load_dir(const std::string& dir, bool require_all);

    /// Freshly initialized, untrained networks (timing/smoke runs).
    static Checkpoints seeded(std::uint64_t seed);
};

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

enum class PipelineMode { Auto, Binary, Rgb, Both };

PipelineMode pipeline_mode_from_string(const std::string& s);
std::string to_string(PipelineMode mode);

struct StageTime {
    std::string stage;
    double seconds = 0.0;
};

struct PipelineReport {
    std::string input;
    std::string predicted_class; ///< empty when the classifier did not run
    std::array<double, 3> probs{};
    std::string branch; ///< binary | rgb | both | skipped
    std::vector<std::pair<std::string, std::string>> artifacts; ///< (kind, path)
    std::vector<StageTime> stage_times;
    std::string error; ///< set when the input was skipped
};

struct PipelineOptions {
    PipelineMode mode = PipelineMode::Auto;
    double min_confidence = 0.6; ///< below this, auto falls back to both
    std::string out_dir = "pipeline_out";
    int min_separation = 5;
    int bins = 20;
    PsilmConfig psilm; ///< colormap + crosscheck configuration
};

/// Expands a file or directory path into a sorted list of image files.
std::vector<std::string> collect_inputs(const std::string& path);

/// Runs the classify-and-route pipeline over the inputs. Directory batches
/// are processed by a worker pool bounded by MICROCHAR_THREADS (default:
/// hardware concurrency); reports come back ordered by input regardless of
/// completion order. Unreadable images are skipped and recorded.
std::vector<PipelineReport> run_pipeline(const std::vector<std::string>& inputs,
                                         const Checkpoints& ckpt, const PipelineOptions& opt);

std::string pipeline_report_json(const PipelineReport& report);
void write_pipeline_reports(const std::string& path,
                            const std::vector<PipelineReport>& reports);

// ---------------------------------------------------------------------------
// Benchmark (classical PSILM path vs the trained pipeline)
// ---------------------------------------------------------------------------

struct BenchReport {
    std::string method; ///< psilm | ml_pipeline
    int n_images = 0;
    double total_seconds = 0.0;
    double per_image_mean = 0.0;
    double per_image_std = 0.0;
    double checkpoint_load_seconds = 0.0; ///< counted once, ml_pipeline only
    std::vector<std::pair<std::string, double>> stage_totals;
    bool serial = true; ///< total = sum of per-image times
};

BenchReport bench_psilm(int n, std::uint64_t seed, int size, const PsilmConfig& cfg);

/// checkpoint_dir empty -> seeded untrained networks (timing only).
BenchReport bench_ml(int n, std::uint64_t seed, int size, const std::string& checkpoint_dir,
                     const PsilmConfig& cfg);

std::string bench_report_json(const BenchReport& report);
void write_bench_csv(const std::string& path, const std::vector<BenchReport>& reports);

// ---------------------------------------------------------------------------
// Evaluation reports (Table-style summaries on a manifest split)
// ---------------------------------------------------------------------------

/// Binary branch: per-class pixel error of the CEDN against the manifest's
/// WCBD labels; reports per-image values plus avg/max summaries.
std::string eval_binary(const std::vector<ManifestRow>& rows, const Cedn& net,
                        const std::string& split);

/// Box branch (deterministic): WCBD segment + split + boxes against truth
/// disks; reports detection counts, recall, and per-parameter mean +- std.
std::string eval_boxes(const std::vector<ManifestRow>& rows, const std::string& split,
                       Polarity polarity, int min_separation);

/// RGB branch: rgb_accuracy of the CEDN against the manifest's PSILM labels.
std::string eval_rgb(const std::vector<ManifestRow>& rows, const Cedn& net,
                     const std::string& split);

/// Classifier accuracy + 3x3 confusion matrix over rows of known class.
std::string eval_classifier(const std::vector<ManifestRow>& rows, const Classifier& net,
                            const std::string& split);

/// Regression heads: predicted vs PSILM-label histogram mean radius.
std::string eval_regression(const std::vector<ManifestRow>& rows,
                            const RegressionNet& radii_net, const RegressionNet& freq_net,
                            const std::string& split);

/// The conventions block embedded in every report.
std::string conventions_json();

// ---------------------------------------------------------------------------
// Manifest -> training tensors
// ---------------------------------------------------------------------------

/// Image/label tensors for CEDN training; rgb selects the RGB-label pairs,
/// otherwise the binary-label pairs.
std::vector<CednSample> load_cedn_samples(const std::vector<ManifestRow>& rows,
                                          const std::string& split, bool rgb);

/// Class-labeled tensors (pores=0, particles=1, grains=2).
std::vector<LabeledSample> load_labeled_samples(const std::vector<ManifestRow>& rows,
                                                const std::string& split);

struct RegressionSamples {
    std::vector<VecSample> radii; ///< targets: histogram bin centers
    std::vector<VecSample> freqs; ///< targets: normalized frequencies
};

RegressionSamples load_regression_samples(const std::vector<ManifestRow>& rows,
                                          const std::string& split, int bins);

} // namespace microchar

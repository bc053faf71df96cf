#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <microchar/image.hpp>
#include <microchar/image_ops.hpp>
#include <microchar/rng.hpp>

namespace microchar {

/// One placed defect disk: continuous center, radius in pixels.
struct Disk {
    double cx = 0.0, cy = 0.0, r = 0.0;
};

enum class DefectClass { Pores, Particles, Grains, Mixed };

std::string to_string(DefectClass cls);
DefectClass defect_class_from_string(const std::string& s);

struct ParticleSpec {
    int count = 12;
    double radius_log_mean = 1.6;   // ln(px)
    double radius_log_sigma = 0.25;
    bool allow_overlap = false;
    double noise_sigma = 0.0;
    Polarity polarity = Polarity::Bright;
};

struct GrainSpec {
    int seed_count = 12;
    int relaxation_steps = 2;  // Lloyd iterations
    int boundary_width = 2;    // px
    double noise_sigma = 0.0;
};

/// Exact ground truth accompanying a generated image. For particle/pore
/// images the rasterized union of `disks` equals `mask`. For grain images
/// `cellmap` holds the Voronoi cell labels (1..K) and `mask` the boundary
/// strokes. Mixed images carry both the cellmap and the pore mask/disks.
struct GroundTruth {
    BinaryMask mask;
    std::vector<Disk> disks;
    LabelMap cellmap;
    /// Relaxed Voronoi seed positions (grain/mixed images); cellmap label
    /// i+1 is the nearest-seed cell of grain_seeds[i].
    std::vector<std::pair<double, double>> grain_seeds;
    DefectClass cls = DefectClass::Particles;
    int requested_count = 0; ///< disks asked for; placement can fall short
};

struct SynthImage {
    GrayImage image;
    GroundTruth truth;
};

// Fixed rendering levels, chosen so Otsu/Sobel behave predictably.
constexpr int kParticleLevel = 190;
constexpr int kParticleBackground = 60;
constexpr int kPoreLevel = 30;
constexpr int kPoreBackground = 200;
constexpr int kGrainInterior = 180;
constexpr int kGrainBoundary = 40;

/// Lognormal radius draw shared by the generators (exposed for tests).
double lognormal_sample(Rng& rng, double log_mean, double log_sigma);

/// Disk rasterization predicate: pixel (x,y) is inside iff
/// (x-cx)^2 + (y-cy)^2 <= r^2.
BinaryMask rasterize_disks(const std::vector<Disk>& disks, int size);

SynthImage gen_particles(const ParticleSpec& spec, int size, std::uint64_t seed);
SynthImage gen_pores(const ParticleSpec& spec, int size, std::uint64_t seed);
SynthImage gen_grains(const GrainSpec& spec, int size, std::uint64_t seed);
SynthImage gen_mixed(const GrainSpec& gspec, const ParticleSpec& pspec, int size,
                     std::uint64_t seed);

/// Per-cell equivalent radii sqrt(area/pi) from a cell map, indexed by
/// label-1.
std::vector<double> cell_equivalent_radii(const LabelMap& cellmap);

// ---------------------------------------------------------------------------
// Dataset emission
// ---------------------------------------------------------------------------

struct DatasetConfig {
    DefectClass kind = DefectClass::Particles;
    int n = 10;
    int train = 8, val = 1, test = 1;
    std::uint64_t seed = 1;
    int size = 64;
    ParticleSpec pspec;
    GrainSpec gspec;
    /// When set, per-image parameters are jittered around the base spec
    /// (particle count, radius scale; grain seed_count spans [5,40]).
    bool vary = true;
    std::string out_dir = "dataset";
};

struct ManifestRow {
    std::string path;       ///< input image
    std::string cls;
    std::string split;      ///< train | val | test
    std::uint64_t seed = 0;
    std::string spec_json;
    std::string label;      ///< binary label mask (WCBD output), when applicable
    std::string rgb_label;  ///< RGB segmentation label (PSILM output), when applicable
    std::string hist;       ///< histogram CSV (PSILM output), when applicable
    std::string truth_mask;
    std::string disks;      ///< truth disk CSV, when applicable
};

/// Generates images + classical-method labels + truth files under
/// cfg.out_dir and writes manifest.jsonl. Binary labels come from
/// wcbd_segment and RGB labels/histograms from the PSILM path, so the
/// learned networks train against the classical baselines' output.
/// Returns the manifest rows in file order.
std::vector<ManifestRow> make_dataset(const DatasetConfig& cfg);

/// Parses a manifest.jsonl written by make_dataset.
std::vector<ManifestRow> read_manifest(const std::string& manifest_path);

/// Truth disk CSV (cx,cy,r) round-trip.
void write_disks_csv(const std::string& path, const std::vector<Disk>& disks);
std::vector<Disk> read_disks_csv(const std::string& path);

} // namespace microchar

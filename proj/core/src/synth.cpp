#include <microchar/synth.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include <microchar/image_io.hpp>
#include <microchar/psilm.hpp>
#include <microchar/wcbd.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace microchar {

std::string to_string(DefectClass cls) {
    switch (cls) {
        case DefectClass::Pores: return "pores";
        case DefectClass::Particles: return "particles";
        case DefectClass::Grains: return "grains";
        case DefectClass::Mixed: return "mixed";
    }
    return "unknown";
}

DefectClass defect_class_from_string(const std::string& s) {
    if (s == "pores") return DefectClass::Pores;
    if (s == "particles") return DefectClass::Particles;
    if (s == "grains") return DefectClass::Grains;
    if (s == "mixed") return DefectClass::Mixed;
    throw InvalidArgument("unknown defect class: " + s);
}

double lognormal_sample(Rng& rng, double log_mean, double log_sigma) {
    return std::exp(log_mean + log_sigma * rng.next_normal());
}

BinaryMask rasterize_disks(const std::vector<Disk>& disks, int size) {
    BinaryMask mask(size, size);
    for (const Disk& d : disks) {
        const int x0 = std::max(0, static_cast<int>(std::floor(d.cx - d.r)));
        const int x1 = std::min(size - 1, static_cast<int>(std::ceil(d.cx + d.r)));
        const int y0 = std::max(0, static_cast<int>(std::floor(d.cy - d.r)));
        const int y1 = std::min(size - 1, static_cast<int>(std::ceil(d.cy + d.r)));
        const double r2 = d.r * d.r;
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = x - d.cx, dy = y - d.cy;
                if (dx * dx + dy * dy <= r2) mask.set(x, y, true);
            }
        }
    }
    return mask;
}

namespace {

void add_noise_clamped(GrayImage& img, double sigma, Rng& rng) {
    if (sigma <= 0.0) return;
    for (std::uint8_t& v : img.data) {
        const double nv = v + sigma * rng.next_normal();
        v = static_cast<std::uint8_t>(std::clamp(nv, 0.0, 255.0));
    }
}

SynthImage gen_disks(const ParticleSpec& spec, int size, std::uint64_t seed,
                     const char* stream_prefix, DefectClass cls, int fg_level, int bg_level) {
    if (size < 32) throw InvalidArgument("gen: size must be >= 32");
    if (spec.count < 0 || spec.radius_log_sigma < 0.0) {
        throw InvalidArgument("gen: bad particle spec");
    }
    Rng rng_radii = Rng::stream(seed, std::string(stream_prefix) + "/radii");
    Rng rng_place = Rng::stream(seed, std::string(stream_prefix) + "/place");
    Rng rng_noise = Rng::stream(seed, std::string(stream_prefix) + "/noise");

    SynthImage out;
    out.truth.cls = cls;
    out.truth.requested_count = spec.count;

    const double max_r = (size - 4) / 2.0;
    for (int i = 0; i < spec.count; ++i) {
        double r = lognormal_sample(rng_radii, spec.radius_log_mean, spec.radius_log_sigma);
        r = std::clamp(r, 1.5, max_r);
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            const double lo = r + 1.0, hi = size - 2.0 - r;
            if (hi <= lo) break;
            const double cx = rng_place.next_range(lo, hi);
            const double cy = rng_place.next_range(lo, hi);
            bool ok = true;
            if (!spec.allow_overlap) {
                for (const Disk& d : out.truth.disks) {
                    const double dx = d.cx - cx, dy = d.cy - cy;
                    const double min_sep = d.r + r + 2.0; // keep components 4-disconnected
                    if (dx * dx + dy * dy < min_sep * min_sep) { ok = false; break; }
                }
            }
            if (ok) {
                out.truth.disks.push_back({cx, cy, r});
                placed = true;
            }
        }
        // A disk that cannot be placed is skipped; the shortfall is visible
        // by comparing disks.size() with requested_count.
    }

    out.truth.mask = rasterize_disks(out.truth.disks, size);
    out.image = GrayImage(size, size, static_cast<std::uint8_t>(bg_level));
    for (std::size_t i = 0; i < out.truth.mask.data.size(); ++i) {
        if (out.truth.mask.data[i]) out.image.data[i] = static_cast<std::uint8_t>(fg_level);
    }
    add_noise_clamped(out.image, spec.noise_sigma, rng_noise);
    return out;
}

} // namespace

SynthImage gen_particles(const ParticleSpec& spec, int size, std::uint64_t seed) {
    const bool dark = spec.polarity == Polarity::Dark;
    return gen_disks(spec, size, seed, "particles", DefectClass::Particles,
                     dark ? kPoreLevel : kParticleLevel,
                     dark ? kPoreBackground : kParticleBackground);
}

SynthImage gen_pores(const ParticleSpec& spec, int size, std::uint64_t seed) {
    SynthImage out = gen_disks(spec, size, seed, "pores", DefectClass::Pores, kPoreLevel,
                               kPoreBackground);
    return out;
}

SynthImage gen_grains(const GrainSpec& spec, int size, std::uint64_t seed) {
    if (size < 32) throw InvalidArgument("gen_grains: size must be >= 32");
    if (spec.seed_count < 1) throw InvalidArgument("gen_grains: seed_count must be >= 1");
    if (spec.seed_count > size * size / 16) {
        throw InvalidArgument("gen_grains: seed_count too large for image size");
    }

    Rng rng_seeds = Rng::stream(seed, "grains/seeds");
    Rng rng_noise = Rng::stream(seed, "grains/noise");

    const int k = spec.seed_count;
    std::vector<double> sx(static_cast<std::size_t>(k)), sy(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        sx[static_cast<std::size_t>(i)] = rng_seeds.next_range(0.0, size);
        sy[static_cast<std::size_t>(i)] = rng_seeds.next_range(0.0, size);
    }

    auto assign = [&](LabelMap& cells) {
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                double best = std::numeric_limits<double>::max();
                int best_i = 0;
                for (int i = 0; i < k; ++i) {
                    const double dx = x - sx[static_cast<std::size_t>(i)];
                    const double dy = y - sy[static_cast<std::size_t>(i)];
                    const double d2 = dx * dx + dy * dy;
                    if (d2 < best) { best = d2; best_i = i; } // ties keep the lower index
                }
                cells.at(x, y) = best_i + 1;
            }
        }
    };

    LabelMap cells(size, size);
    for (int step = 0; step < spec.relaxation_steps; ++step) {
        assign(cells);
        std::vector<double> cx(static_cast<std::size_t>(k), 0.0), cy(static_cast<std::size_t>(k), 0.0);
        std::vector<std::int64_t> area(static_cast<std::size_t>(k), 0);
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const std::size_t i = static_cast<std::size_t>(cells.at(x, y)) - 1;
                cx[i] += x;
                cy[i] += y;
                ++area[i];
            }
        }
        for (int i = 0; i < k; ++i) {
            const std::size_t ii = static_cast<std::size_t>(i);
            if (area[ii] > 0) {
                sx[ii] = cx[ii] / static_cast<double>(area[ii]);
                sy[ii] = cy[ii] / static_cast<double>(area[ii]);
            }
        }
    }
    assign(cells);

    // Boundary strokes. Width 1 marks one side of each cell edge; width >= 2
    // marks both sides and dilates to approximate the requested width.
    BinaryMask stroke(size, size);
    if (spec.boundary_width <= 1) {
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const std::int32_t lab = cells.at(x, y);
                if ((x + 1 < size && cells.at(x + 1, y) != lab) ||
                    (y + 1 < size && cells.at(x, y + 1) != lab)) {
                    stroke.set(x, y, true);
                }
            }
        }
    } else {
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const std::int32_t lab = cells.at(x, y);
                if ((x + 1 < size && cells.at(x + 1, y) != lab) ||
                    (x > 0 && cells.at(x - 1, y) != lab) ||
                    (y + 1 < size && cells.at(x, y + 1) != lab) ||
                    (y > 0 && cells.at(x, y - 1) != lab)) {
                    stroke.set(x, y, true);
                }
            }
        }
        const int extra = (spec.boundary_width - 1) / 2;
        if (extra > 0) stroke = dilate(stroke, extra);
    }

    SynthImage out;
    out.truth.cls = DefectClass::Grains;
    out.truth.grain_seeds.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        out.truth.grain_seeds.emplace_back(sx[static_cast<std::size_t>(i)],
                                           sy[static_cast<std::size_t>(i)]);
    }
    out.truth.cellmap = std::move(cells);
    out.truth.mask = stroke;
    out.image = GrayImage(size, size, kGrainInterior);
    for (std::size_t i = 0; i < stroke.data.size(); ++i) {
        if (stroke.data[i]) out.image.data[i] = kGrainBoundary;
    }
    add_noise_clamped(out.image, spec.noise_sigma, rng_noise);
    return out;
}

SynthImage gen_mixed(const GrainSpec& gspec, const ParticleSpec& pspec, int size,
                     std::uint64_t seed) {
    SynthImage grains = gen_grains(gspec, size, seed);
    SynthImage pores = gen_pores(pspec, size, seed);

    SynthImage out;
    out.image = grains.image;
    for (std::size_t i = 0; i < pores.truth.mask.data.size(); ++i) {
        if (pores.truth.mask.data[i]) out.image.data[i] = pores.image.data[i];
    }
    out.truth.cls = DefectClass::Mixed;
    out.truth.cellmap = std::move(grains.truth.cellmap);
    out.truth.grain_seeds = std::move(grains.truth.grain_seeds);
    out.truth.mask = std::move(pores.truth.mask);
    out.truth.disks = std::move(pores.truth.disks);
    out.truth.requested_count = pores.truth.requested_count;
    return out;
}

std::vector<double> cell_equivalent_radii(const LabelMap& cellmap) {
    const std::int32_t k = cellmap.max_label();
    std::vector<std::int64_t> area(static_cast<std::size_t>(k), 0);
    for (std::int32_t lab : cellmap.labels) {
        if (lab > 0) ++area[static_cast<std::size_t>(lab) - 1];
    }
    std::vector<double> radii(static_cast<std::size_t>(k));
    for (std::int32_t i = 0; i < k; ++i) {
        radii[static_cast<std::size_t>(i)] =
            std::sqrt(static_cast<double>(area[static_cast<std::size_t>(i)]) / std::numbers::pi);
    }
    return radii;
}

// ---------------------------------------------------------------------------
// Dataset emission
// ---------------------------------------------------------------------------

namespace {

json particle_spec_json(const ParticleSpec& s) {
    return json{{"count", s.count},
                {"radius_log_mean", s.radius_log_mean},
                {"radius_log_sigma", s.radius_log_sigma},
                {"allow_overlap", s.allow_overlap},
                {"noise_sigma", s.noise_sigma},
                {"polarity", s.polarity == Polarity::Dark ? "dark" : "bright"}};
}

json grain_spec_json(const GrainSpec& s) {
    return json{{"seed_count", s.seed_count},
                {"relaxation_steps", s.relaxation_steps},
                {"boundary_width", s.boundary_width},
                {"noise_sigma", s.noise_sigma}};
}

/// Grid step and color scale used for PSILM labels, tied to image size so the
/// defaults match 8 px / [0, 64] at 256^2.
PsilmConfig label_psilm_config(int size) {
    PsilmConfig cfg;
    cfg.grid_step = std::max(2, size / 32);
    cfg.colormap_min = 0.0;
    cfg.colormap_max = size / 4.0;
    return cfg;
}

} // namespace

std::vector<ManifestRow> make_dataset(const DatasetConfig& cfg) {
    if (cfg.train + cfg.val + cfg.test != cfg.n) {
        throw InvalidArgument("make_dataset: train+val+test must equal n");
    }
    const fs::path root(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(root / "images", ec);
    fs::create_directories(root / "labels", ec);
    fs::create_directories(root / "truth", ec);
    if (ec) throw IoError("cannot create dataset directories under " + cfg.out_dir);

    std::vector<ManifestRow> rows;
    rows.reserve(static_cast<std::size_t>(cfg.n));
    const std::string kind = to_string(cfg.kind);

    for (int idx = 0; idx < cfg.n; ++idx) {
        Rng item_rng = Rng::stream(cfg.seed, "item", static_cast<std::uint64_t>(idx));
        const std::uint64_t item_seed = item_rng.next_u64();

        ParticleSpec pspec = cfg.pspec;
        GrainSpec gspec = cfg.gspec;
        if (cfg.vary) {
            Rng vary_rng = Rng::stream(cfg.seed, "vary", static_cast<std::uint64_t>(idx));
            pspec.count = std::max(1, static_cast<int>(std::lround(
                                          pspec.count * vary_rng.next_range(0.5, 1.5))));
            pspec.radius_log_mean += vary_rng.next_range(-0.2, 0.2);
            gspec.seed_count = 5 + static_cast<int>(vary_rng.next_below(36)); // [5, 40]
        }

        SynthImage sample;
        json spec_json;
        switch (cfg.kind) {
            case DefectClass::Particles:
                sample = gen_particles(pspec, cfg.size, item_seed);
                spec_json = particle_spec_json(pspec);
                break;
            case DefectClass::Pores:
                sample = gen_pores(pspec, cfg.size, item_seed);
                spec_json = particle_spec_json(pspec);
                break;
            case DefectClass::Grains:
                sample = gen_grains(gspec, cfg.size, item_seed);
                spec_json = grain_spec_json(gspec);
                break;
            case DefectClass::Mixed:
                sample = gen_mixed(gspec, pspec, cfg.size, item_seed);
                spec_json = json{{"grains", grain_spec_json(gspec)},
                                 {"pores", particle_spec_json(pspec)}};
                break;
        }

        char name[64];
        std::snprintf(name, sizeof(name), "%s_%05d", kind.c_str(), idx);
        const std::string base(name);

        ManifestRow row;
        row.cls = kind;
        row.seed = item_seed;
        row.spec_json = spec_json.dump();
        row.split = idx < cfg.train ? "train" : (idx < cfg.train + cfg.val ? "val" : "test");
        row.path = (root / "images" / (base + ".pgm")).string();
        write_gray(row.path, sample.image);

        row.truth_mask = (root / "truth" / (base + "_mask.pgm")).string();
        write_mask(row.truth_mask, sample.truth.mask);

        if (!sample.truth.disks.empty() || cfg.kind == DefectClass::Particles ||
            cfg.kind == DefectClass::Pores) {
            row.disks = (root / "truth" / (base + "_disks.csv")).string();
            write_disks_csv(row.disks, sample.truth.disks);
        }

        // Classical-method training targets.
        const PsilmConfig psilm_cfg = label_psilm_config(cfg.size);
        switch (cfg.kind) {
            case DefectClass::Particles: {
                row.label = (root / "labels" / (base + "_mask.pgm")).string();
                write_mask(row.label, wcbd_segment(sample.image, Polarity::Bright));
                break;
            }
            case DefectClass::Pores: {
                row.label = (root / "labels" / (base + "_mask.pgm")).string();
                write_mask(row.label, wcbd_segment(sample.image, Polarity::Dark));
                break;
            }
            case DefectClass::Grains: {
                const RgbSegmentation seg = rgb_segmentation(sample.image, psilm_cfg);
                row.rgb_label = (root / "labels" / (base + "_rgb.ppm")).string();
                write_rgb(row.rgb_label, seg.rgb);
                if (!seg.samples.empty()) {
                    row.hist = (root / "labels" / (base + "_hist.csv")).string();
                    write_histogram_csv(row.hist, grain_histogram(seg.samples, 20));
                }
                break;
            }
            case DefectClass::Mixed: {
                row.label = (root / "labels" / (base + "_mask.pgm")).string();
                write_mask(row.label, detect_pores(sample.image));
                const RgbSegmentation seg = rgb_segmentation(sample.image, psilm_cfg);
                row.rgb_label = (root / "labels" / (base + "_rgb.ppm")).string();
                write_rgb(row.rgb_label, seg.rgb);
                if (!seg.samples.empty()) {
                    row.hist = (root / "labels" / (base + "_hist.csv")).string();
                    write_histogram_csv(row.hist, grain_histogram(seg.samples, 20));
                }
                break;
            }
        }
        rows.push_back(std::move(row));
    }

    // Manifest as JSON lines.
    const std::string manifest_path = (root / "manifest.jsonl").string();
    std::ofstream manifest(manifest_path);
    if (!manifest) throw IoError("cannot write " + manifest_path);
    for (const ManifestRow& row : rows) {
        json j{{"path", row.path},
               {"class", row.cls},
               {"split", row.split},
               {"seed", row.seed},
               {"spec", json::parse(row.spec_json)}};
        if (!row.label.empty()) j["label"] = row.label;
        if (!row.rgb_label.empty()) j["rgb_label"] = row.rgb_label;
        if (!row.hist.empty()) j["hist"] = row.hist;
        if (!row.truth_mask.empty()) j["truth_mask"] = row.truth_mask;
        if (!row.disks.empty()) j["disks"] = row.disks;
        manifest << j.dump() << "\n";
    }
    if (!manifest) throw IoError("manifest write failed: " + manifest_path);
    return rows;
}

void write_disks_csv(const std::string& path, const std::vector<Disk>& disks) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "cx,cy,r\n";
    for (const Disk& d : disks) out << d.cx << "," << d.cy << "," << d.r << "\n";
}

std::vector<Disk> read_disks_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    std::vector<Disk> disks;
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        Disk d;
        if (std::sscanf(line.c_str(), "%lf,%lf,%lf", &d.cx, &d.cy, &d.r) == 3) {
            disks.push_back(d);
        }
    }
    return disks;
}

std::vector<ManifestRow> read_manifest(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot read manifest: " + manifest_path);
    std::vector<ManifestRow> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json j = json::parse(line);
        ManifestRow row;
        row.path = j.at("path").get<std::string>();
        row.cls = j.at("class").get<std::string>();
        row.split = j.at("split").get<std::string>();
        row.seed = j.at("seed").get<std::uint64_t>();
        row.spec_json = j.at("spec").dump();
        if (j.contains("label")) row.label = j["label"].get<std::string>();
        if (j.contains("rgb_label")) row.rgb_label = j["rgb_label"].get<std::string>();
        if (j.contains("hist")) row.hist = j["hist"].get<std::string>();
        if (j.contains("truth_mask")) row.truth_mask = j["truth_mask"].get<std::string>();
        if (j.contains("disks")) row.disks = j["disks"].get<std::string>();
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace microchar

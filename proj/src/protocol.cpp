#include "pansharp/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "pansharp/rng.hpp"

namespace pansharp::protocol {

void TrainingSample::ensure_valid() const {
    ms.ensure_valid();
    pan.ensure_valid();
    reference.ensure_valid();
    if (pan.bands != 1) fail(ErrorCode::DimensionMismatch, "pan must be single-band");
    if (pan.width != ms.width * ratio || pan.height != ms.height * ratio)
        fail(ErrorCode::DimensionMismatch, "pan dims must equal ms dims * ratio");
    if (!reference.same_spatial_dims(pan) || reference.bands != ms.bands)
        fail(ErrorCode::DimensionMismatch, "reference dims must equal pan dims with ms bands");
}

TrainingSample wald_degrade(const MultiBandImage& ms, const MultiBandImage& pan, int ratio,
                            const raster::ResampleFilter& filter) {
    if (pan.bands != 1) fail(ErrorCode::DimensionMismatch, "pan must be single-band");
    if (pan.width != ms.width * ratio || pan.height != ms.height * ratio)
        fail(ErrorCode::DimensionMismatch,
             "pan " + std::to_string(pan.width) + "x" + std::to_string(pan.height) +
                 " is not ms dims * ratio " + std::to_string(ratio));

    TrainingSample out;
    out.ratio = ratio;
    out.ms = raster::downsample(ms, ratio, filter);
    out.pan = raster::downsample(pan, ratio, filter);
    out.reference = ms;
    return out;
}

std::vector<TrainingSample> extract_patches(const TrainingSample& sample, const SamplerConfig& cfg,
                                            std::vector<PatchOrigin>* origins) {
    const int p = cfg.ms_patch;
    if (p < 1) fail(ErrorCode::BadArgument, "ms_patch must be >= 1");
    if (p > sample.ms.width || p > sample.ms.height)
        fail(ErrorCode::PatchTooLarge, "ms_patch " + std::to_string(p) + " exceeds ms dims " +
                                           std::to_string(sample.ms.width) + "x" +
                                           std::to_string(sample.ms.height));

    const int r = sample.ratio;
    const auto crop = [](const MultiBandImage& img, int x0, int y0, int w, int h) {
        MultiBandImage out(w, h, img.bands);
        out.dtype = img.dtype;
        out.range = img.range;
        for (int b = 0; b < img.bands; ++b)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) out.at(x, y, b) = img.at(x0 + x, y0 + y, b);
        return out;
    };

    std::vector<TrainingSample> patches;
    patches.reserve(static_cast<std::size_t>(cfg.count));
    if (origins) origins->clear();

    for (int i = 0; i < cfg.count; ++i) {
        Rng rng = Rng::keyed(cfg.seed, static_cast<std::uint64_t>(i));
        const int cx = static_cast<int>(rng.below(static_cast<std::uint32_t>(sample.ms.width - p + 1)));
        const int cy = static_cast<int>(rng.below(static_cast<std::uint32_t>(sample.ms.height - p + 1)));

        TrainingSample patch;
        patch.ratio = r;
        patch.ms = crop(sample.ms, cx, cy, p, p);
        patch.pan = crop(sample.pan, cx * r, cy * r, p * r, p * r);
        patch.reference = crop(sample.reference, cx * r, cy * r, p * r, p * r);
        patches.push_back(std::move(patch));
        if (origins) origins->push_back({i, cx, cy});
    }
    return patches;
}

namespace {

// Smooth base field: gaussian-filtered white noise rescaled into [lo, hi].
MultiBandImage smooth_field(int size, double sigma, double lo, double hi, Rng& rng) {
    MultiBandImage noise(size, size, 1);
    for (double& v : noise.samples) v = rng.normal();
    MultiBandImage field = raster::gaussian_blur(noise, sigma);
    const raster::BandStats s = raster::stats_of(field.band(0));
    const double span = s.max - s.min;
    for (double& v : field.samples)
        v = span > 0.0 ? lo + (hi - lo) * (v - s.min) / span : 0.5 * (lo + hi);
    return field;
}

}  // namespace

SyntheticScene synth_scene(int size, int bands, std::uint64_t seed) {
    if (size < 4 || size % 4 != 0) fail(ErrorCode::BadArgument, "size must be divisible by 4");
    if (bands < 1) fail(ErrorCode::BadArgument, "bands must be >= 1");

    Rng rng = Rng::keyed(seed, 0x5C3E);

    SyntheticScene scene;
    scene.hr_ms = MultiBandImage(size, size, bands);
    scene.hr_ms.range = {0.0, 1.0};

    // per-band smooth background, correlated across bands via a common field
    const MultiBandImage common = smooth_field(size, size / 8.0, 0.3, 0.7, rng);
    std::vector<MultiBandImage> own;
    own.reserve(static_cast<std::size_t>(bands));
    for (int b = 0; b < bands; ++b)
        own.push_back(smooth_field(size, size / 10.0, -0.05, 0.05, rng));

    // shared fine texture, the scene content the degradation destroys and the
    // PAN preserves; per-band gain keeps the modality split honest
    MultiBandImage texture(size, size, 1);
    for (double& v : texture.samples) v = rng.normal();
    texture = raster::gaussian_blur(texture, 1.2);
    {
        const raster::BandStats s = raster::stats_of(texture.band(0));
        const double gain = s.stddev > 0.0 ? 0.1 / s.stddev : 0.0;
        for (double& v : texture.samples) v = (v - s.mean) * gain;
    }
    std::vector<double> texture_gain(static_cast<std::size_t>(bands));
    for (double& g : texture_gain) g = rng.uniform(0.75, 1.25);

    for (int b = 0; b < bands; ++b)
        for (std::size_t i = 0; i < scene.hr_ms.plane(); ++i)
            scene.hr_ms.band(b)[i] = common.samples[i] + own[static_cast<std::size_t>(b)].samples[i] +
                                     texture_gain[static_cast<std::size_t>(b)] * texture.samples[i];

    // shared geometry with correlated per-band amplitudes: one object, one
    // sign, band-varying strength
    const int shapes = 6 + static_cast<int>(rng.below(6));
    for (int s = 0; s < shapes; ++s) {
        const bool disk = rng.uniform() < 0.5;
        const int cx = static_cast<int>(rng.below(static_cast<std::uint32_t>(size)));
        const int cy = static_cast<int>(rng.below(static_cast<std::uint32_t>(size)));
        const int half = 2 + static_cast<int>(rng.below(static_cast<std::uint32_t>(std::max(2, size / 6))));
        const double base = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 0.22);
        std::vector<double> amp(static_cast<std::size_t>(bands));
        for (double& a : amp) a = base * rng.uniform(0.7, 1.3);

        const int x0 = std::max(0, cx - half), x1 = std::min(size - 1, cx + half);
        const int y0 = std::max(0, cy - half), y1 = std::min(size - 1, cy + half);
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                if (disk) {
                    const double dx = x - cx, dy = y - cy;
                    if (dx * dx + dy * dy > static_cast<double>(half) * half) continue;
                }
                for (int b = 0; b < bands; ++b) scene.hr_ms.at(x, y, b) += amp[static_cast<std::size_t>(b)];
            }
    }
    for (double& v : scene.hr_ms.samples) v = std::clamp(v, 0.0, 1.0);

    // simplex weights for the band average
    std::vector<double> omega(static_cast<std::size_t>(bands));
    double total = 0.0;
    for (double& w : omega) {
        w = -std::log(1.0 - rng.uniform());
        total += w;
    }
    for (double& w : omega) w /= total;

    // high-frequency detail: gaussian-filtered white noise, exactly zero
    // mean, std 0.05
    MultiBandImage detail(size, size, 1);
    for (double& v : detail.samples) v = rng.normal();
    detail = raster::gaussian_blur(detail, 1.0);
    {
        const raster::BandStats s = raster::stats_of(detail.band(0));
        const double gain = s.stddev > 0.0 ? 0.05 / s.stddev : 0.0;
        for (double& v : detail.samples) v = (v - s.mean) * gain;
    }

    scene.pan = MultiBandImage(size, size, 1);
    scene.pan.range = {0.0, 1.0};
    for (std::size_t i = 0; i < scene.pan.plane(); ++i) {
        double v = detail.samples[i];
        for (int b = 0; b < bands; ++b)
            v += omega[static_cast<std::size_t>(b)] * scene.hr_ms.band(b)[i];
        scene.pan.samples[i] = std::clamp(v, 0.0, 1.0);
    }
    return scene;
}

TrainingSample sample_from_scene(const SyntheticScene& scene, int ratio,
                                 const raster::ResampleFilter& filter) {
    if (!scene.hr_ms.same_spatial_dims(scene.pan))
        fail(ErrorCode::DimensionMismatch, "scene hr_ms and pan dims differ");
    TrainingSample out;
    out.ratio = ratio;
    out.ms = raster::downsample(scene.hr_ms, ratio, filter);
    out.pan = scene.pan;
    out.reference = scene.hr_ms;
    out.ensure_valid();
    return out;
}

// --- Dataset I/O ----------------------------------------------------------

namespace {

std::filesystem::path sample_dir(const std::filesystem::path& dir, int index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%06d", index);
    return dir / buf;
}

}  // namespace

void write_dataset(const std::filesystem::path& dir, const std::vector<TrainingSample>& samples,
                   const std::vector<ManifestRow>& manifest) {
    if (manifest.size() != samples.size())
        fail(ErrorCode::BadArgument, "manifest rows must match sample count");
    std::filesystem::create_directories(dir);

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto sdir = sample_dir(dir, static_cast<int>(i));
        std::filesystem::create_directories(sdir);
        raster::save_msrf(samples[i].ms, sdir / "ms.msrf");
        raster::save_msrf(samples[i].pan, sdir / "pan.msrf");
        raster::save_msrf(samples[i].reference, sdir / "ref.msrf");
    }

    const std::filesystem::path tmp = dir / "manifest.tsv.tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) fail(ErrorCode::IoFailure, "cannot open " + tmp.string());
        out << "index\tseed\tcorner_x\tcorner_y\n";
        for (const ManifestRow& row : manifest)
            out << row.index << '\t' << row.seed << '\t' << row.corner_x << '\t' << row.corner_y
                << '\n';
        if (!out) fail(ErrorCode::IoFailure, "write failed on " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, dir / "manifest.tsv", ec);
    if (ec) fail(ErrorCode::IoFailure, "rename manifest: " + ec.message());
}

std::vector<TrainingSample> read_dataset(const std::filesystem::path& dir,
                                         std::vector<ManifestRow>* manifest) {
    std::ifstream in(dir / "manifest.tsv");
    if (!in) fail(ErrorCode::IoFailure, "cannot open " + (dir / "manifest.tsv").string());

    std::vector<ManifestRow> rows;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ManifestRow row;
        unsigned long long seed = 0;
        if (std::sscanf(line.c_str(), "%d\t%llu\t%d\t%d", &row.index, &seed, &row.corner_x,
                        &row.corner_y) != 4)
            fail(ErrorCode::IoFailure, "malformed manifest line: " + line);
        row.seed = seed;
        rows.push_back(row);
    }

    std::vector<TrainingSample> samples;
    samples.reserve(rows.size());
    for (const ManifestRow& row : rows) {
        const auto sdir = sample_dir(dir, row.index);
        TrainingSample s;
        s.ms = raster::load_msrf(sdir / "ms.msrf");
        s.pan = raster::load_msrf(sdir / "pan.msrf");
        s.reference = raster::load_msrf(sdir / "ref.msrf");
        if (s.ms.width > 0) s.ratio = s.pan.width / s.ms.width;
        s.ensure_valid();
        samples.push_back(std::move(s));
    }
    if (manifest) *manifest = std::move(rows);
    return samples;
}

}  // namespace pansharp::protocol

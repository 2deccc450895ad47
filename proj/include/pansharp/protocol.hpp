#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pansharp/image.hpp"
#include "pansharp/raster.hpp"

namespace pansharp::protocol {

// Aligned (MS, PAN, reference) triple. Under Wald's protocol the reference
// is the original MS image and both inputs are its degraded companions.
struct TrainingSample {
    MultiBandImage ms;         // w x h x b
    MultiBandImage pan;        // rw x rh x 1
    MultiBandImage reference;  // rw x rh x b
    int ratio = 4;

    void ensure_valid() const;
};

struct SamplerConfig {
    int ms_patch = 64;        // patch side at MS scale
    int count = 0;            // patches to draw
    std::uint64_t seed = 0;
};

// Degrades (ms, pan) by `ratio` with the given low-pass filter; the original
// ms becomes the reference. pan must be single-band with dims = ms dims * ratio.
TrainingSample wald_degrade(const MultiBandImage& ms, const MultiBandImage& pan, int ratio,
                            const raster::ResampleFilter& filter = raster::ResampleFilter::wald(4));

struct PatchOrigin {
    int index = 0;
    int corner_x = 0;  // MS-scale crop corner
    int corner_y = 0;
};

// Uniform random crops with replacement. Corner i depends only on
// (cfg.seed, i), so the i-th patch is stable when cfg.count changes.
std::vector<TrainingSample> extract_patches(const TrainingSample& sample, const SamplerConfig& cfg,
                                            std::vector<PatchOrigin>* origins = nullptr);

// Desk-scale synthetic scene: per-band smooth field plus shared random
// rectangles and disks with per-band amplitudes, all in [0,1]; pan is a
// simplex-weighted band average carrying an extra zero-mean high-frequency
// detail field (std 0.05).
struct SyntheticScene {
    MultiBandImage hr_ms;  // size x size x bands
    MultiBandImage pan;    // size x size x 1
};

SyntheticScene synth_scene(int size, int bands, std::uint64_t seed);

// Wald-style training triple from a synthetic scene. The scene's PAN is
// already co-registered at the reference grid, so only the MS side gets
// degraded: ms = downsample(hr_ms, ratio), pan = scene.pan,
// reference = scene.hr_ms.
TrainingSample sample_from_scene(const SyntheticScene& scene, int ratio = 4,
                                 const raster::ResampleFilter& filter =
                                     raster::ResampleFilter::wald(4));

// --- Dataset directory layout --------------------------------------------
//
//   <dir>/sample_%06d/{ms.msrf, pan.msrf, ref.msrf}
//   <dir>/manifest.tsv   columns: index, seed, corner_x, corner_y

struct ManifestRow {
    int index = 0;
    std::uint64_t seed = 0;
    int corner_x = 0;
    int corner_y = 0;
};

void write_dataset(const std::filesystem::path& dir, const std::vector<TrainingSample>& samples,
                   const std::vector<ManifestRow>& manifest);
std::vector<TrainingSample> read_dataset(const std::filesystem::path& dir,
                                         std::vector<ManifestRow>* manifest = nullptr);

}  // namespace pansharp::protocol

#pragma once

#include <filesystem>
#include <vector>

#include "pansharp/image.hpp"

namespace pansharp::raster {

// Low-pass / interpolation kernel used by upsample and downsample.
struct ResampleFilter {
    enum class Kind { bicubic, box, gaussian };
    Kind kind = Kind::bicubic;
    double sigma = 1.0;  // gaussian only, > 0

    static ResampleFilter bicubic() { return {Kind::bicubic, 0.0}; }
    static ResampleFilter box() { return {Kind::box, 0.0}; }
    static ResampleFilter gaussian(double sigma);
    // Wald's-protocol degradation default: gaussian with sigma = ratio / 2.
    static ResampleFilter wald(int ratio) { return gaussian(ratio / 2.0); }
};

// --- MSRF container I/O ------------------------------------------------
//
// Layout (little-endian): magic "MSRF" | version u8 (=1) | dtype u8
// (0=u8, 1=u16, 2=f32) | reserved u16 (=0) | width u32 | height u32 |
// bands u32 | payload, band-sequential, rows top to bottom. 20-byte header,
// no compression, no padding.

MultiBandImage load_msrf(const std::filesystem::path& path);
void save_msrf(const MultiBandImage& img, const std::filesystem::path& path);

// --- Resampling ---------------------------------------------------------
//
// Separable resampler with reflect-101 border extension. Kernel support is
// scaled by the decimation ratio on downsampling, so `box` gives exact block
// means and `bicubic`/`gaussian` act as proper low-pass kernels.

MultiBandImage resample(const MultiBandImage& img, int out_w, int out_h,
                        const ResampleFilter& filter);
MultiBandImage upsample(const MultiBandImage& img, int factor,
                        const ResampleFilter& filter = ResampleFilter::bicubic());
MultiBandImage downsample(const MultiBandImage& img, int factor, const ResampleFilter& filter);

// Same-size convolutions, reflect-101 borders.
MultiBandImage gaussian_blur(const MultiBandImage& img, double sigma);
MultiBandImage box_blur(const MultiBandImage& img, int size);  // size odd, >= 1

// --- Statistics and matching ---------------------------------------------

struct BandStats {
    double mean = 0.0;
    double stddev = 0.0;  // population convention (divide by n)
    double min = 0.0;
    double max = 0.0;
};

std::vector<BandStats> band_stats(const MultiBandImage& img);
BandStats stats_of(std::span<const double> values);

// Moment matching: out = (src - mu_src) * (sigma_ref / sigma_src) + mu_ref.
// Both images must be single-band; throws DegenerateBand when src has zero
// variance.
MultiBandImage histogram_match(const MultiBandImage& src, const MultiBandImage& ref);

// In-place moment matching of a raw band against target moments.
void match_moments(std::span<double> values, double src_mean, double src_std, double ref_mean,
                   double ref_std);

// --- Normalization contract ----------------------------------------------
//
// Maps samples from the image's declared nominal range onto [0,1] and back.
// The CLI applies these at ingestion / write-out; fusion, training and
// metrics all operate on normalized data.

MultiBandImage normalize_to_unit(const MultiBandImage& img);
MultiBandImage denormalize(const MultiBandImage& img, SampleType dtype, ValueRange range);

}  // namespace pansharp::raster

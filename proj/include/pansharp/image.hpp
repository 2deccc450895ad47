#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "pansharp/error.hpp"

namespace pansharp {

// Sample encodings supported by the MSRF container.
enum class SampleType : std::uint8_t { u8 = 0, u16 = 1, f32 = 2 };

inline double nominal_max(SampleType t) {
    switch (t) {
        case SampleType::u8: return 255.0;
        case SampleType::u16: return 65535.0;
        case SampleType::f32: return 1.0;
    }
    return 1.0;
}

struct ValueRange {
    double lo = 0.0;
    double hi = 1.0;
};

// w x h x b raster of double samples, band-sequential, rows top to bottom.
// Samples are held in double regardless of the file dtype; `dtype` and
// `range` remember how the image is meant to be encoded and normalized.
struct MultiBandImage {
    int width = 0;
    int height = 0;
    int bands = 0;
    std::vector<double> samples;
    SampleType dtype = SampleType::f32;
    ValueRange range{0.0, 1.0};

    MultiBandImage() = default;

    MultiBandImage(int w, int h, int b, double fill = 0.0)
        : width(w), height(h), bands(b) {
        if (w < 1 || h < 1 || b < 1)
            fail(ErrorCode::BadArgument, "image dims must be >= 1, got " + std::to_string(w) + "x" +
                                             std::to_string(h) + "x" + std::to_string(b));
        samples.assign(static_cast<std::size_t>(w) * h * b, fill);
    }

    std::size_t plane() const { return static_cast<std::size_t>(width) * height; }

    double& at(int x, int y, int b) {
        return samples[static_cast<std::size_t>(b) * plane() + static_cast<std::size_t>(y) * width + x];
    }

    double at(int x, int y, int b) const {
        return samples[static_cast<std::size_t>(b) * plane() + static_cast<std::size_t>(y) * width + x];
    }

    std::span<double> band(int b) { return {samples.data() + b * plane(), plane()}; }

    std::span<const double> band(int b) const { return {samples.data() + b * plane(), plane()}; }

    bool same_dims(const MultiBandImage& o) const {
        return width == o.width && height == o.height && bands == o.bands;
    }

    bool same_spatial_dims(const MultiBandImage& o) const {
        return width == o.width && height == o.height;
    }

    // Checks the type invariants: positive dims, consistent sample count,
    // every sample finite.
    void ensure_valid() const {
        if (width < 1 || height < 1 || bands < 1)
            fail(ErrorCode::BadArgument, "image dims must be >= 1");
        if (samples.size() != plane() * static_cast<std::size_t>(bands))
            fail(ErrorCode::BadArgument, "sample count does not match dims");
        for (double v : samples)
            if (!std::isfinite(v)) fail(ErrorCode::BadArgument, "non-finite sample");
    }
};

}  // namespace pansharp

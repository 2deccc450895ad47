#include "pansharp/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

namespace pansharp::raster {

namespace {

static_assert(std::numeric_limits<float>::is_iec559, "IEEE-754 float required");

constexpr std::size_t kHeaderSize = 20;
constexpr char kMagic[4] = {'M', 'S', 'R', 'F'};

std::size_t sample_bytes(SampleType t) {
    switch (t) {
        case SampleType::u8: return 1;
        case SampleType::u16: return 2;
        case SampleType::f32: return 4;
    }
    return 0;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

// reflect-101: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
int reflect101(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = std::abs(i) % period;
    return i < n ? i : period - i;
}

double bicubic_kernel(double t) {
    // Keys kernel, a = -0.5
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
    if (t < 2.0) return a * (((t - 5.0) * t + 8.0) * t - 4.0);
    return 0.0;
}

struct Taps {
    int first = 0;
    std::vector<double> weights;  // normalized to sum 1
};

// One tap table per output index along an axis. `scale` = in_len / out_len;
// the kernel footprint widens by `scale` when decimating.
std::vector<Taps> build_taps(int in_len, int out_len, const ResampleFilter& f) {
    const double scale = static_cast<double>(in_len) / out_len;
    const double kscale = std::max(1.0, scale);

    double radius = 0.0;
    switch (f.kind) {
        case ResampleFilter::Kind::bicubic: radius = 2.0 * kscale; break;
        case ResampleFilter::Kind::box: radius = 0.5 * kscale; break;
        case ResampleFilter::Kind::gaussian: radius = std::max(1.0, 3.0 * f.sigma); break;
    }

    std::vector<Taps> table(static_cast<std::size_t>(out_len));
    for (int o = 0; o < out_len; ++o) {
        const double center = (o + 0.5) * scale - 0.5;
        const int first = static_cast<int>(std::ceil(center - radius));
        const int last = static_cast<int>(std::floor(center + radius));
        Taps taps;
        taps.first = first;
        taps.weights.reserve(static_cast<std::size_t>(last - first + 1));
        double total = 0.0;
        for (int i = first; i <= last; ++i) {
            double w = 0.0;
            switch (f.kind) {
                case ResampleFilter::Kind::bicubic:
                    w = bicubic_kernel((i - center) / kscale);
                    break;
                case ResampleFilter::Kind::box:
                    w = std::abs(i - center) <= 0.5 * kscale ? 1.0 : 0.0;
                    break;
                case ResampleFilter::Kind::gaussian: {
                    const double t = (i - center) / f.sigma;
                    w = std::exp(-0.5 * t * t);
                    break;
                }
            }
            taps.weights.push_back(w);
            total += w;
        }
        for (double& w : taps.weights) w /= total;
        table[static_cast<std::size_t>(o)] = std::move(taps);
    }
    return table;
}

// Horizontal pass over one band plane: in is h x in_w, out is h x out_w.
void apply_taps_rows(const double* in, int in_w, int h, const std::vector<Taps>& taps,
                     double* out) {
    const int out_w = static_cast<int>(taps.size());
    for (int y = 0; y < h; ++y) {
        const double* row = in + static_cast<std::size_t>(y) * in_w;
        double* orow = out + static_cast<std::size_t>(y) * out_w;
        for (int o = 0; o < out_w; ++o) {
            const Taps& t = taps[static_cast<std::size_t>(o)];
            double acc = 0.0;
            for (std::size_t k = 0; k < t.weights.size(); ++k)
                acc += t.weights[k] * row[reflect101(t.first + static_cast<int>(k), in_w)];
            orow[o] = acc;
        }
    }
}

// Vertical pass: in is in_h x w, out is out_h x w.
void apply_taps_cols(const double* in, int w, int in_h, const std::vector<Taps>& taps,
                     double* out) {
    const int out_h = static_cast<int>(taps.size());
    for (int o = 0; o < out_h; ++o) {
        const Taps& t = taps[static_cast<std::size_t>(o)];
        double* orow = out + static_cast<std::size_t>(o) * w;
        std::fill(orow, orow + w, 0.0);
        for (std::size_t k = 0; k < t.weights.size(); ++k) {
            const double wk = t.weights[k];
            const double* irow = in + static_cast<std::size_t>(reflect101(t.first + static_cast<int>(k), in_h)) * w;
            for (int x = 0; x < w; ++x) orow[x] += wk * irow[x];
        }
    }
}

double pairwise_sum(const double* p, int n, int stride) {
    if (n == 1) return *p;
    const int half = n / 2;
    return pairwise_sum(p, half, stride) + pairwise_sum(p + half * stride, n - half, stride);
}

// Integer-factor box decimation: pairwise-summed block means. Pairwise order
// makes up-then-down with box filters an exact identity for power-of-two
// factors (odd factors cannot round-trip exactly in binary64 at all).
MultiBandImage box_decimate(const MultiBandImage& img, int fx, int fy) {
    MultiBandImage out(img.width / fx, img.height / fy, img.bands);
    out.dtype = img.dtype;
    out.range = img.range;
    std::vector<double> mid(static_cast<std::size_t>(out.width) * img.height);
    for (int b = 0; b < img.bands; ++b) {
        const double* src = img.band(b).data();
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < out.width; ++x)
                mid[static_cast<std::size_t>(y) * out.width + x] =
                    pairwise_sum(src + static_cast<std::size_t>(y) * img.width + x * fx, fx, 1) / fx;
        double* dst = out.band(b).data();
        for (int y = 0; y < out.height; ++y)
            for (int x = 0; x < out.width; ++x)
                dst[static_cast<std::size_t>(y) * out.width + x] =
                    pairwise_sum(mid.data() + static_cast<std::size_t>(y) * fy * out.width + x,
                                 fy, out.width) /
                    fy;
    }
    return out;
}

MultiBandImage resample_impl(const MultiBandImage& img, int out_w, int out_h,
                             const ResampleFilter& f) {
    if (f.kind == ResampleFilter::Kind::box && out_w <= img.width && out_h <= img.height &&
        img.width % out_w == 0 && img.height % out_h == 0)
        return box_decimate(img, img.width / out_w, img.height / out_h);

    const auto htaps = build_taps(img.width, out_w, f);
    const auto vtaps = build_taps(img.height, out_h, f);

    MultiBandImage out(out_w, out_h, img.bands);
    out.dtype = img.dtype;
    out.range = img.range;

    std::vector<double> mid(static_cast<std::size_t>(out_w) * img.height);
    for (int b = 0; b < img.bands; ++b) {
        apply_taps_rows(img.band(b).data(), img.width, img.height, htaps, mid.data());
        apply_taps_cols(mid.data(), out_w, img.height, vtaps, out.band(b).data());
    }
    return out;
}

}  // namespace

ResampleFilter ResampleFilter::gaussian(double sigma) {
    if (!(sigma > 0.0)) fail(ErrorCode::BadArgument, "gaussian sigma must be > 0");
    return {Kind::gaussian, sigma};
}

// --- MSRF ------------------------------------------------------------------

MultiBandImage load_msrf(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoFailure, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) fail(ErrorCode::IoFailure, "read failed on " + path.string());

    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
        fail(ErrorCode::BadMagic, "expected \"MSRF\" at byte offset 0 in " + path.string());
    if (bytes.size() < kHeaderSize)
        fail(ErrorCode::TruncatedPayload,
             "header needs " + std::to_string(kHeaderSize) + " bytes, file ends at byte offset " +
                 std::to_string(bytes.size()));
    if (bytes[4] != 1)
        fail(ErrorCode::UnsupportedVersion,
             "version byte at offset 4 is " + std::to_string(bytes[4]) + ", expected 1");
    if (bytes[5] > 2)
        fail(ErrorCode::UnsupportedDtype,
             "dtype byte at offset 5 is " + std::to_string(bytes[5]) + ", expected 0, 1 or 2");

    const SampleType dtype = static_cast<SampleType>(bytes[5]);
    const std::uint32_t w = get_u32(bytes.data() + 8);
    const std::uint32_t h = get_u32(bytes.data() + 12);
    const std::uint32_t b = get_u32(bytes.data() + 16);
    if (w < 1 || h < 1 || b < 1)
        fail(ErrorCode::BadArgument, "dims in header are " + std::to_string(w) + "x" +
                                         std::to_string(h) + "x" + std::to_string(b));

    const std::size_t count = static_cast<std::size_t>(w) * h * b;
    const std::size_t need = kHeaderSize + count * sample_bytes(dtype);
    if (bytes.size() < need)
        fail(ErrorCode::TruncatedPayload, "payload needs " + std::to_string(need) +
                                              " bytes, file ends at byte offset " +
                                              std::to_string(bytes.size()));

    MultiBandImage img(static_cast<int>(w), static_cast<int>(h), static_cast<int>(b));
    img.dtype = dtype;
    img.range = {0.0, nominal_max(dtype)};

    const std::uint8_t* p = bytes.data() + kHeaderSize;
    switch (dtype) {
        case SampleType::u8:
            for (std::size_t i = 0; i < count; ++i) img.samples[i] = static_cast<double>(p[i]);
            break;
        case SampleType::u16:
            for (std::size_t i = 0; i < count; ++i)
                img.samples[i] = static_cast<double>(
                    static_cast<std::uint16_t>(p[2 * i] | (p[2 * i + 1] << 8)));
            break;
        case SampleType::f32:
            for (std::size_t i = 0; i < count; ++i) {
                const std::uint32_t u = get_u32(p + 4 * i);
                float fv;
                std::memcpy(&fv, &u, 4);
                if (!std::isfinite(fv))
                    fail(ErrorCode::BadArgument,
                         "non-finite f32 sample at byte offset " + std::to_string(kHeaderSize + 4 * i));
                img.samples[i] = static_cast<double>(fv);
            }
            break;
    }
    return img;
}

void save_msrf(const MultiBandImage& img, const std::filesystem::path& path) {
    img.ensure_valid();

    std::vector<std::uint8_t> bytes;
    bytes.reserve(kHeaderSize + img.samples.size() * sample_bytes(img.dtype));
    bytes.insert(bytes.end(), kMagic, kMagic + 4);
    bytes.push_back(1);
    bytes.push_back(static_cast<std::uint8_t>(img.dtype));
    bytes.push_back(0);
    bytes.push_back(0);
    put_u32(bytes, static_cast<std::uint32_t>(img.width));
    put_u32(bytes, static_cast<std::uint32_t>(img.height));
    put_u32(bytes, static_cast<std::uint32_t>(img.bands));

    switch (img.dtype) {
        case SampleType::u8:
            for (double v : img.samples)
                bytes.push_back(static_cast<std::uint8_t>(std::llround(std::clamp(v, 0.0, 255.0))));
            break;
        case SampleType::u16:
            for (double v : img.samples) {
                const auto q =
                    static_cast<std::uint16_t>(std::llround(std::clamp(v, 0.0, 65535.0)));
                bytes.push_back(static_cast<std::uint8_t>(q & 0xFF));
                bytes.push_back(static_cast<std::uint8_t>(q >> 8));
            }
            break;
        case SampleType::f32:
            for (double v : img.samples) {
                const float fv = static_cast<float>(v);
                std::uint32_t u;
                std::memcpy(&u, &fv, 4);
                put_u32(bytes, u);
            }
            break;
    }

    // atomic write: temp in the same directory, then rename
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::IoFailure, "cannot open " + tmp.string() + " for writing");
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) fail(ErrorCode::IoFailure, "write failed on " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::IoFailure, "rename to " + path.string() + ": " + ec.message());
}

// --- Resampling --------------------------------------------------------------

MultiBandImage resample(const MultiBandImage& img, int out_w, int out_h,
                        const ResampleFilter& filter) {
    if (out_w < 1 || out_h < 1) fail(ErrorCode::BadArgument, "output dims must be >= 1");
    return resample_impl(img, out_w, out_h, filter);
}

MultiBandImage upsample(const MultiBandImage& img, int factor, const ResampleFilter& filter) {
    if (factor < 2) fail(ErrorCode::FactorTooSmall, "factor must be >= 2, got " + std::to_string(factor));
    return resample_impl(img, img.width * factor, img.height * factor, filter);
}

MultiBandImage downsample(const MultiBandImage& img, int factor, const ResampleFilter& filter) {
    if (factor < 2) fail(ErrorCode::FactorTooSmall, "factor must be >= 2, got " + std::to_string(factor));
    if (img.width % factor != 0 || img.height % factor != 0)
        fail(ErrorCode::NotDivisible, std::to_string(img.width) + "x" + std::to_string(img.height) +
                                          " not divisible by " + std::to_string(factor));
    return resample_impl(img, img.width / factor, img.height / factor, filter);
}

MultiBandImage gaussian_blur(const MultiBandImage& img, double sigma) {
    if (!(sigma > 0.0)) fail(ErrorCode::BadArgument, "gaussian sigma must be > 0");
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double t = i / sigma;
        kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * t * t);
        total += kernel[static_cast<std::size_t>(i + radius)];
    }
    for (double& k : kernel) k /= total;

    std::vector<Taps> htaps(static_cast<std::size_t>(img.width));
    for (int x = 0; x < img.width; ++x) htaps[static_cast<std::size_t>(x)] = {x - radius, kernel};
    std::vector<Taps> vtaps(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) vtaps[static_cast<std::size_t>(y)] = {y - radius, kernel};

    MultiBandImage out(img.width, img.height, img.bands);
    out.dtype = img.dtype;
    out.range = img.range;
    std::vector<double> mid(img.plane());
    for (int b = 0; b < img.bands; ++b) {
        apply_taps_rows(img.band(b).data(), img.width, img.height, htaps, mid.data());
        apply_taps_cols(mid.data(), img.width, img.height, vtaps, out.band(b).data());
    }
    return out;
}

MultiBandImage box_blur(const MultiBandImage& img, int size) {
    if (size < 1 || size % 2 == 0)
        fail(ErrorCode::BadArgument, "box size must be odd and >= 1, got " + std::to_string(size));
    const int radius = size / 2;
    std::vector<double> kernel(static_cast<std::size_t>(size), 1.0 / size);

    std::vector<Taps> htaps(static_cast<std::size_t>(img.width));
    for (int x = 0; x < img.width; ++x) htaps[static_cast<std::size_t>(x)] = {x - radius, kernel};
    std::vector<Taps> vtaps(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) vtaps[static_cast<std::size_t>(y)] = {y - radius, kernel};

    MultiBandImage out(img.width, img.height, img.bands);
    out.dtype = img.dtype;
    out.range = img.range;
    std::vector<double> mid(img.plane());
    for (int b = 0; b < img.bands; ++b) {
        apply_taps_rows(img.band(b).data(), img.width, img.height, htaps, mid.data());
        apply_taps_cols(mid.data(), img.width, img.height, vtaps, out.band(b).data());
    }
    return out;
}

// --- Statistics and matching --------------------------------------------------

BandStats stats_of(std::span<const double> values) {
    BandStats s;
    s.min = std::numeric_limits<double>::infinity();
    s.max = -std::numeric_limits<double>::infinity();
    double sum = 0.0;
    for (double v : values) {
        sum += v;
        s.min = std::min(s.min, v);
        s.max = std::max(s.max, v);
    }
    s.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) {
        const double d = v - s.mean;
        ss += d * d;
    }
    s.stddev = std::sqrt(ss / static_cast<double>(values.size()));
    return s;
}

std::vector<BandStats> band_stats(const MultiBandImage& img) {
    std::vector<BandStats> out;
    out.reserve(static_cast<std::size_t>(img.bands));
    for (int b = 0; b < img.bands; ++b) out.push_back(stats_of(img.band(b)));
    return out;
}

void match_moments(std::span<double> values, double src_mean, double src_std, double ref_mean,
                   double ref_std) {
    if (src_std == 0.0) fail(ErrorCode::DegenerateBand, "zero variance in source band");
    if (src_mean == ref_mean && src_std == ref_std) return;  // identity, keep bits
    const double gain = ref_std / src_std;
    for (double& v : values) v = (v - src_mean) * gain + ref_mean;
}

MultiBandImage histogram_match(const MultiBandImage& src, const MultiBandImage& ref) {
    if (src.bands != 1 || ref.bands != 1)
        fail(ErrorCode::BadArgument, "histogram_match expects single-band images");
    const BandStats ss = stats_of(src.band(0));
    const BandStats rs = stats_of(ref.band(0));
    MultiBandImage out = src;
    match_moments(out.band(0), ss.mean, ss.stddev, rs.mean, rs.stddev);
    return out;
}

// --- Normalization --------------------------------------------------------------

MultiBandImage normalize_to_unit(const MultiBandImage& img) {
    const double span = img.range.hi - img.range.lo;
    if (!(span > 0.0)) fail(ErrorCode::BadArgument, "image range is empty");
    MultiBandImage out = img;
    for (double& v : out.samples) v = (v - img.range.lo) / span;
    out.range = {0.0, 1.0};
    out.dtype = SampleType::f32;
    return out;
}

MultiBandImage denormalize(const MultiBandImage& img, SampleType dtype, ValueRange range) {
    const double span = range.hi - range.lo;
    if (!(span > 0.0)) fail(ErrorCode::BadArgument, "target range is empty");
    MultiBandImage out = img;
    for (double& v : out.samples) v = v * span + range.lo;
    out.range = range;
    out.dtype = dtype;
    return out;
}

}  // namespace pansharp::raster

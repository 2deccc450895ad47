#include "pansharp/fusion.hpp"

#include <cmath>

#include "pansharp/parallel.hpp"
#include "pansharp/raster.hpp"

namespace pansharp::fusion {

namespace {

constexpr double kEps = 1e-8;

// Floors |d| at eps without changing sign; zero becomes +eps.
double guard(double d, std::size_t& clamped) {
    if (std::abs(d) >= kEps) return d;
    ++clamped;
    return d == 0.0 ? kEps : std::copysign(kEps, d);
}

MultiBandImage intensity_of(const MultiBandImage& ms) {
    MultiBandImage intensity(ms.width, ms.height, 1);
    const double inv = 1.0 / ms.bands;
    for (int b = 0; b < ms.bands; ++b) {
        const auto band = ms.band(b);
        for (std::size_t i = 0; i < intensity.plane(); ++i) intensity.samples[i] += band[i];
    }
    for (double& v : intensity.samples) v *= inv;
    return intensity;
}

MultiBandImage blank_like(const MultiBandImage& ms) {
    MultiBandImage out(ms.width, ms.height, ms.bands);
    out.dtype = ms.dtype;
    out.range = ms.range;
    return out;
}

void check_inputs(const MultiBandImage& ms_up, const MultiBandImage& pan) {
    if (!ms_up.same_spatial_dims(pan))
        fail(ErrorCode::DimensionMismatch,
             "ms " + std::to_string(ms_up.width) + "x" + std::to_string(ms_up.height) + " vs pan " +
                 std::to_string(pan.width) + "x" + std::to_string(pan.height));
    if (pan.bands != 1) fail(ErrorCode::DimensionMismatch, "pan must be single-band");
}

}  // namespace

Method parse_method(const std::string& name) {
    if (name == "ihs") return Method::ihs;
    if (name == "brovey") return Method::brovey;
    if (name == "hpf") return Method::hpf;
    if (name == "sfim") return Method::sfim;
    if (name == "gs") return Method::gs;
    if (name == "lmvm") return Method::lmvm;
    if (name == "lmm") return Method::lmm;
    fail(ErrorCode::BadArgument, "unknown fusion method \"" + name + "\"");
}

const char* to_string(Method m) {
    switch (m) {
        case Method::ihs: return "ihs";
        case Method::brovey: return "brovey";
        case Method::hpf: return "hpf";
        case Method::sfim: return "sfim";
        case Method::gs: return "gs";
        case Method::lmvm: return "lmvm";
        case Method::lmm: return "lmm";
    }
    return "?";
}

GramSchmidt gs_forward(const MultiBandImage& ms_up) {
    const std::size_t n = ms_up.plane();
    GramSchmidt gs;
    gs.width = ms_up.width;
    gs.height = ms_up.height;

    const MultiBandImage intensity = intensity_of(ms_up);
    gs.intensity_mean = raster::stats_of(intensity.band(0)).mean;

    gs.components.emplace_back(n);
    for (std::size_t i = 0; i < n; ++i)
        gs.components[0][i] = intensity.samples[i] - gs.intensity_mean;

    for (int b = 0; b < ms_up.bands; ++b) {
        const auto band = ms_up.band(b);
        const double mu = raster::stats_of(band).mean;
        gs.band_means.push_back(mu);

        std::vector<double> g(n);
        for (std::size_t i = 0; i < n; ++i) g[i] = band[i] - mu;

        std::vector<double> c;
        for (const auto& prev : gs.components) {
            double dot = 0.0, norm = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                dot += g[i] * prev[i];
                norm += prev[i] * prev[i];
            }
            const double coeff = norm > kEps ? dot / norm : 0.0;
            c.push_back(coeff);
            for (std::size_t i = 0; i < n; ++i) g[i] -= coeff * prev[i];
        }
        gs.coeffs.push_back(std::move(c));
        gs.components.push_back(std::move(g));
    }
    return gs;
}

MultiBandImage gs_inverse(const GramSchmidt& gs, const std::vector<double>& first) {
    const std::size_t n = static_cast<std::size_t>(gs.width) * gs.height;
    if (first.size() != n) fail(ErrorCode::DimensionMismatch, "substituted component size mismatch");

    const int bands = static_cast<int>(gs.band_means.size());
    MultiBandImage out(gs.width, gs.height, bands);
    for (int b = 0; b < bands; ++b) {
        auto dst = out.band(b);
        const auto& own = gs.components[static_cast<std::size_t>(b) + 1];
        const auto& c = gs.coeffs[static_cast<std::size_t>(b)];
        for (std::size_t i = 0; i < n; ++i) {
            double v = own[i] + c[0] * first[i];
            for (std::size_t j = 1; j < c.size(); ++j) v += c[j] * gs.components[j][i];
            dst[i] = v + gs.band_means[static_cast<std::size_t>(b)];
        }
    }
    return out;
}

MultiBandImage fuse(const FusionMethod& method, const MultiBandImage& ms_up,
                    const MultiBandImage& pan, FuseStats* stats) {
    check_inputs(ms_up, pan);
    if (method.window < 3 || method.window % 2 == 0)
        fail(ErrorCode::BadArgument, "window must be odd and >= 3");
    if (method.hp_kernel < 3 || method.hp_kernel % 2 == 0)
        fail(ErrorCode::BadArgument, "hp_kernel must be odd and >= 3");

    const std::size_t n = ms_up.plane();
    std::size_t clamped = 0;
    MultiBandImage out = blank_like(ms_up);

    switch (method.kind) {
        case Method::ihs: {
            const MultiBandImage intensity = intensity_of(ms_up);
            const MultiBandImage matched = raster::histogram_match(pan, intensity);
            parallel_for(ms_up.bands, [&](int b) {
                auto dst = out.band(b);
                const auto src = ms_up.band(b);
                for (std::size_t i = 0; i < n; ++i)
                    dst[i] = src[i] + (matched.samples[i] - intensity.samples[i]);
            });
            break;
        }
        case Method::brovey: {
            const MultiBandImage intensity = intensity_of(ms_up);
            const MultiBandImage matched = raster::histogram_match(pan, intensity);
            std::vector<double> ratio(n);
            for (std::size_t i = 0; i < n; ++i)
                ratio[i] = matched.samples[i] / guard(intensity.samples[i], clamped);
            parallel_for(ms_up.bands, [&](int b) {
                auto dst = out.band(b);
                const auto src = ms_up.band(b);
                for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] * ratio[i];
            });
            break;
        }
        case Method::hpf: {
            const MultiBandImage low = raster::box_blur(pan, method.hp_kernel);
            parallel_for(ms_up.bands, [&](int b) {
                auto dst = out.band(b);
                const auto src = ms_up.band(b);
                for (std::size_t i = 0; i < n; ++i)
                    dst[i] = src[i] + (pan.samples[i] - low.samples[i]);
            });
            break;
        }
        case Method::sfim: {
            const MultiBandImage low = raster::box_blur(pan, method.hp_kernel);
            std::vector<double> ratio(n);
            for (std::size_t i = 0; i < n; ++i)
                ratio[i] = pan.samples[i] / guard(low.samples[i], clamped);
            parallel_for(ms_up.bands, [&](int b) {
                auto dst = out.band(b);
                const auto src = ms_up.band(b);
                for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] * ratio[i];
            });
            break;
        }
        case Method::gs: {
            const GramSchmidt gs = gs_forward(ms_up);
            const MultiBandImage intensity = intensity_of(ms_up);
            const MultiBandImage matched = raster::histogram_match(pan, intensity);
            std::vector<double> substituted(n);
            for (std::size_t i = 0; i < n; ++i)
                substituted[i] = matched.samples[i] - gs.intensity_mean;
            MultiBandImage rebuilt = gs_inverse(gs, substituted);
            rebuilt.dtype = ms_up.dtype;
            rebuilt.range = ms_up.range;
            out = std::move(rebuilt);
            break;
        }
        case Method::lmvm: {
            const MultiBandImage mu_p = raster::box_blur(pan, method.window);
            MultiBandImage pan_sq = pan;
            for (double& v : pan_sq.samples) v *= v;
            const MultiBandImage mu_p2 = raster::box_blur(pan_sq, method.window);
            std::vector<double> sigma_p(n);
            for (std::size_t i = 0; i < n; ++i) {
                const double var = std::max(0.0, mu_p2.samples[i] - mu_p.samples[i] * mu_p.samples[i]);
                sigma_p[i] = guard(std::sqrt(var), clamped);
            }
            parallel_for(ms_up.bands, [&](int b) {
                MultiBandImage band(ms_up.width, ms_up.height, 1);
                std::copy(ms_up.band(b).begin(), ms_up.band(b).end(), band.samples.begin());
                const MultiBandImage mu_m = raster::box_blur(band, method.window);
                for (double& v : band.samples) v *= v;
                const MultiBandImage mu_m2 = raster::box_blur(band, method.window);
                auto dst = out.band(b);
                for (std::size_t i = 0; i < n; ++i) {
                    const double var =
                        std::max(0.0, mu_m2.samples[i] - mu_m.samples[i] * mu_m.samples[i]);
                    dst[i] = (pan.samples[i] - mu_p.samples[i]) * std::sqrt(var) / sigma_p[i] +
                             mu_m.samples[i];
                }
            });
            break;
        }
        case Method::lmm: {
            const MultiBandImage mu_p = raster::box_blur(pan, method.window);
            std::vector<double> inv_mu_p(n);
            for (std::size_t i = 0; i < n; ++i) inv_mu_p[i] = 1.0 / guard(mu_p.samples[i], clamped);
            parallel_for(ms_up.bands, [&](int b) {
                MultiBandImage band(ms_up.width, ms_up.height, 1);
                std::copy(ms_up.band(b).begin(), ms_up.band(b).end(), band.samples.begin());
                const MultiBandImage mu_m = raster::box_blur(band, method.window);
                auto dst = out.band(b);
                for (std::size_t i = 0; i < n; ++i)
                    dst[i] = pan.samples[i] * mu_m.samples[i] * inv_mu_p[i];
            });
            break;
        }
    }

    if (stats) stats->clamped_denominators = clamped;
    out.ensure_valid();
    return out;
}

MultiBandImage fuse_naive(const MultiBandImage& ms, int ratio) {
    return raster::upsample(ms, ratio, raster::ResampleFilter::bicubic());
}

}  // namespace pansharp::fusion

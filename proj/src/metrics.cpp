#include "pansharp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "pansharp/raster.hpp"

namespace pansharp::metrics {

namespace {

constexpr double kEps = 1e-12;
constexpr double kRadToDeg = 57.295779513082320876798154814105;

void check_same_dims(const MultiBandImage& a, const MultiBandImage& b, const char* what) {
    if (!a.same_dims(b))
        fail(ErrorCode::DimensionMismatch, std::string(what) + ": " + std::to_string(a.width) + "x" +
                                               std::to_string(a.height) + "x" +
                                               std::to_string(a.bands) + " vs " +
                                               std::to_string(b.width) + "x" +
                                               std::to_string(b.height) + "x" +
                                               std::to_string(b.bands));
}

struct Moments {
    double mean_a = 0.0, mean_b = 0.0;
    double var_a = 0.0, var_b = 0.0;  // population
    double cov = 0.0;
};

Moments moments_of(std::span<const double> a, std::span<const double> b) {
    Moments m;
    const double n = static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        m.mean_a += a[i];
        m.mean_b += b[i];
    }
    m.mean_a /= n;
    m.mean_b /= n;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - m.mean_a;
        const double db = b[i] - m.mean_b;
        m.var_a += da * da;
        m.var_b += db * db;
        m.cov += da * db;
    }
    m.var_a /= n;
    m.var_b /= n;
    m.cov /= n;
    return m;
}

double pearson(std::span<const double> a, std::span<const double> b, ErrorCode degenerate_code,
               const char* what) {
    const Moments m = moments_of(a, b);
    if (m.var_a <= kEps || m.var_b <= kEps)
        fail(degenerate_code, std::string(what) + " has zero variance");
    return m.cov / std::sqrt(m.var_a * m.var_b);
}

// One Q value over a pixel block; false when the denominator degenerates.
bool q_block(std::span<const double> a, std::span<const double> b, double& q) {
    const Moments m = moments_of(a, b);
    const double denom = (m.var_a + m.var_b) * (m.mean_a * m.mean_a + m.mean_b * m.mean_b);
    if (denom <= kEps) return false;
    q = 4.0 * m.cov * m.mean_a * m.mean_b / denom;
    return true;
}

std::vector<double> gather_block(std::span<const double> plane, int w, int x0, int y0, int side) {
    std::vector<double> out(static_cast<std::size_t>(side) * side);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
            out[static_cast<std::size_t>(y) * side + x] =
                plane[static_cast<std::size_t>(y0 + y) * w + (x0 + x)];
    return out;
}

// Q between two planes of equal dims, global or blockwise per cfg.
double q_planes(std::span<const double> a, std::span<const double> b, int w, int h,
                const QConfig& cfg, std::size_t* skipped_blocks) {
    const int side = cfg.block;
    if (side == 0 || side > w || side > h) {
        double q = 0.0;
        if (!q_block(a, b, q))
            fail(ErrorCode::DegenerateBlock, "global Q denominator below " + std::to_string(kEps));
        return q;
    }
    double total = 0.0;
    std::size_t used = 0, skipped = 0;
    for (int y0 = 0; y0 + side <= h; y0 += side)
        for (int x0 = 0; x0 + side <= w; x0 += side) {
            const auto pa = gather_block(a, w, x0, y0, side);
            const auto pb = gather_block(b, w, x0, y0, side);
            double q = 0.0;
            if (q_block(pa, pb, q)) {
                total += q;
                ++used;
            } else {
                ++skipped;
            }
        }
    if (skipped_blocks) *skipped_blocks += skipped;
    if (used == 0) fail(ErrorCode::DegenerateBlock, "every Q block degenerated");
    return total / static_cast<double>(used);
}

struct Quaternion {
    double w = 0.0, x = 0.0, y = 0.0, z = 0.0;

    Quaternion operator+(const Quaternion& o) const { return {w + o.w, x + o.x, y + o.y, z + o.z}; }
    Quaternion operator-(const Quaternion& o) const { return {w - o.w, x - o.x, y - o.y, z - o.z}; }
    Quaternion operator*(double s) const { return {w * s, x * s, y * s, z * s}; }
    Quaternion conj() const { return {w, -x, -y, -z}; }
    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quaternion operator*(const Quaternion& o) const {
        return {w * o.w - x * o.x - y * o.y - z * o.z, w * o.x + x * o.w + y * o.z - z * o.y,
                w * o.y - x * o.z + y * o.w + z * o.x, w * o.z + x * o.y - y * o.x + z * o.w};
    }
};

bool q4_block(const MultiBandImage& a, const MultiBandImage& b, int x0, int y0, int bw, int bh,
              double& q) {
    const auto quat = [](const MultiBandImage& img, int x, int y) {
        return Quaternion{img.at(x, y, 0), img.at(x, y, 1), img.at(x, y, 2), img.at(x, y, 3)};
    };
    const double n = static_cast<double>(bw) * bh;

    Quaternion mu_a, mu_b;
    for (int y = y0; y < y0 + bh; ++y)
        for (int x = x0; x < x0 + bw; ++x) {
            mu_a = mu_a + quat(a, x, y);
            mu_b = mu_b + quat(b, x, y);
        }
    mu_a = mu_a * (1.0 / n);
    mu_b = mu_b * (1.0 / n);

    double var_a = 0.0, var_b = 0.0;
    Quaternion cov;
    for (int y = y0; y < y0 + bh; ++y)
        for (int x = x0; x < x0 + bw; ++x) {
            const Quaternion da = quat(a, x, y) - mu_a;
            const Quaternion db = quat(b, x, y) - mu_b;
            var_a += da.w * da.w + da.x * da.x + da.y * da.y + da.z * da.z;
            var_b += db.w * db.w + db.x * db.x + db.y * db.y + db.z * db.z;
            cov = cov + da * db.conj();
        }
    var_a /= n;
    var_b /= n;
    cov = cov * (1.0 / n);

    const double denom =
        (var_a + var_b) * (mu_a.norm() * mu_a.norm() + mu_b.norm() * mu_b.norm());
    if (denom <= kEps) return false;
    q = 4.0 * cov.norm() * mu_a.norm() * mu_b.norm() / denom;
    return true;
}

std::string fmt6(const std::optional<double>& v) {
    if (!v) return "";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.6f", *v);
    return buf;
}

}  // namespace

QConfig QConfig::blocks(int side) {
    if (side < 8 || (side & (side - 1)) != 0)
        fail(ErrorCode::OutOfRange, "Q block must be a power of two >= 8, got " + std::to_string(side));
    return {side};
}

double sam(const MultiBandImage& fused, const MultiBandImage& ref, std::size_t* skipped) {
    check_same_dims(fused, ref, "sam");
    const std::size_t n = fused.plane();
    double total = 0.0;
    std::size_t kept = 0, zero = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int b = 0; b < fused.bands; ++b) {
            const double fa = fused.band(b)[i];
            const double fb = ref.band(b)[i];
            dot += fa * fb;
            na += fa * fa;
            nb += fb * fb;
        }
        if (na <= 0.0 || nb <= 0.0) {
            ++zero;
            continue;
        }
        const double c = std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
        total += std::acos(c);
        ++kept;
    }
    if (skipped) *skipped = zero;
    if (kept == 0) fail(ErrorCode::DegenerateBand, "every spectral vector had zero norm");
    return total / static_cast<double>(kept) * kRadToDeg;
}

double cc(const MultiBandImage& fused, const MultiBandImage& ref) {
    check_same_dims(fused, ref, "cc");
    double total = 0.0;
    for (int b = 0; b < fused.bands; ++b)
        total += pearson(fused.band(b), ref.band(b), ErrorCode::DegenerateBand,
                         ("band " + std::to_string(b)).c_str());
    return total / fused.bands;
}

MultiBandImage laplacian_highpass(const MultiBandImage& img) {
    MultiBandImage out(img.width, img.height, img.bands);
    const auto reflect = [](int i, int n) {
        if (n == 1) return 0;
        if (i < 0) return -i;
        if (i >= n) return 2 * n - 2 - i;
        return i;
    };
    for (int b = 0; b < img.bands; ++b)
        for (int y = 0; y < img.height; ++y)
            for (int x = 0; x < img.width; ++x) {
                double acc = 0.0;
                for (int ky = -1; ky <= 1; ++ky)
                    for (int kx = -1; kx <= 1; ++kx)
                        acc += kLaplacianKernel[static_cast<std::size_t>(ky + 1)]
                                               [static_cast<std::size_t>(kx + 1)] *
                               img.at(reflect(x + kx, img.width), reflect(y + ky, img.height), b);
                out.at(x, y, b) = acc;
            }
    return out;
}

double scc(const MultiBandImage& fused, const MultiBandImage& ref) {
    check_same_dims(fused, ref, "scc");
    const MultiBandImage hf = laplacian_highpass(fused);
    const MultiBandImage hr = laplacian_highpass(ref);
    double total = 0.0;
    for (int b = 0; b < fused.bands; ++b)
        total += pearson(hf.band(b), hr.band(b), ErrorCode::DegenerateHighPass,
                         ("high-passed band " + std::to_string(b)).c_str());
    return total / fused.bands;
}

double ergas(const MultiBandImage& fused, const MultiBandImage& ref, int ratio) {
    check_same_dims(fused, ref, "ergas");
    if (ratio < 1) fail(ErrorCode::BadArgument, "ratio must be >= 1");
    double acc = 0.0;
    for (int b = 0; b < fused.bands; ++b) {
        const auto fb = fused.band(b);
        const auto rb = ref.band(b);
        double se = 0.0, mean = 0.0;
        for (std::size_t i = 0; i < fb.size(); ++i) {
            const double d = fb[i] - rb[i];
            se += d * d;
            mean += rb[i];
        }
        mean /= static_cast<double>(rb.size());
        if (std::abs(mean) <= kEps)
            fail(ErrorCode::ZeroMeanBand, "reference band " + std::to_string(b) + " has zero mean");
        const double rmse = std::sqrt(se / static_cast<double>(fb.size()));
        acc += (rmse / mean) * (rmse / mean);
    }
    return 100.0 / ratio * std::sqrt(acc / fused.bands);
}

double q_index(const MultiBandImage& a, const MultiBandImage& b, const QConfig& cfg,
               std::size_t* skipped_blocks) {
    check_same_dims(a, b, "q_index");
    if (a.bands != 1) fail(ErrorCode::BadArgument, "q_index expects single-band images");
    return q_planes(a.band(0), b.band(0), a.width, a.height, cfg, skipped_blocks);
}

double q4(const MultiBandImage& fused, const MultiBandImage& ref, const QConfig& cfg) {
    check_same_dims(fused, ref, "q4");
    if (fused.bands != 4)
        fail(ErrorCode::NotFourBands, "q4 needs 4 bands, got " + std::to_string(fused.bands));

    const int side = cfg.block;
    if (side == 0 || side > fused.width || side > fused.height) {
        double q = 0.0;
        if (!q4_block(fused, ref, 0, 0, fused.width, fused.height, q))
            fail(ErrorCode::DegenerateVariance, "q4 denominator below " + std::to_string(kEps));
        return q;
    }

    double total = 0.0;
    std::size_t used = 0;
    for (int y0 = 0; y0 + side <= fused.height; y0 += side)
        for (int x0 = 0; x0 + side <= fused.width; x0 += side) {
            double q = 0.0;
            if (q4_block(fused, ref, x0, y0, side, side, q)) {
                total += q;
                ++used;
            }
        }
    if (used == 0) fail(ErrorCode::DegenerateVariance, "every q4 block degenerated");
    return total / static_cast<double>(used);
}

double d_lambda(const MultiBandImage& fused, const MultiBandImage& ms, const QConfig& cfg) {
    if (fused.bands != ms.bands)
        fail(ErrorCode::DimensionMismatch, "fused and ms band counts differ");
    const int bands = fused.bands;
    if (bands < 2) fail(ErrorCode::BadArgument, "d_lambda needs at least 2 bands");

    // Diagonal terms of the printed double sum are identically zero, so only
    // i < j pairs contribute.
    double total = 0.0;
    for (int i = 0; i < bands; ++i)
        for (int j = i + 1; j < bands; ++j) {
            const double qp =
                q_planes(fused.band(i), fused.band(j), fused.width, fused.height, cfg, nullptr);
            const double qx = q_planes(ms.band(i), ms.band(j), ms.width, ms.height, cfg, nullptr);
            total += std::abs(qp - qx);
        }
    return std::sqrt(2.0 / (static_cast<double>(bands) * (bands - 1)) * total);
}

double d_s(const MultiBandImage& fused, const MultiBandImage& ms, const MultiBandImage& pan,
           const MultiBandImage& pan_lr, const QConfig& cfg) {
    if (fused.bands != ms.bands)
        fail(ErrorCode::DimensionMismatch, "fused and ms band counts differ");
    if (!fused.same_spatial_dims(pan))
        fail(ErrorCode::DimensionMismatch, "pan must be at fused resolution");
    if (!ms.same_spatial_dims(pan_lr))
        fail(ErrorCode::DimensionMismatch, "pan_lr must be at ms resolution");
    if (pan.bands != 1 || pan_lr.bands != 1)
        fail(ErrorCode::DimensionMismatch, "pan images must be single-band");

    double total = 0.0;
    for (int i = 0; i < fused.bands; ++i) {
        const double qp = q_planes(fused.band(i), pan.band(0), fused.width, fused.height, cfg, nullptr);
        const double qx = q_planes(ms.band(i), pan_lr.band(0), ms.width, ms.height, cfg, nullptr);
        total += std::abs(qp - qx);
    }
    return std::sqrt(total / fused.bands);
}

double qnr(double d_lambda_value, double d_s_value) {
    if (!(d_lambda_value >= 0.0 && d_lambda_value <= 1.0))
        fail(ErrorCode::OutOfRange, "d_lambda outside [0,1]");
    if (!(d_s_value >= 0.0 && d_s_value <= 1.0))
        fail(ErrorCode::OutOfRange, "d_s outside [0,1]");
    return (1.0 - d_lambda_value) * (1.0 - d_s_value);
}

// --- Aggregation ---------------------------------------------------------

std::string MetricReport::csv_header() { return "method,SAM,CC,sCC,ERGAS,Q4,D_lambda,D_s,QNR"; }

std::string MetricReport::csv_row() const {
    std::ostringstream os;
    os << method << ',' << fmt6(sam) << ',' << fmt6(cc) << ',' << fmt6(scc) << ',' << fmt6(ergas)
       << ',' << fmt6(q4) << ',' << fmt6(d_lambda) << ',' << fmt6(d_s) << ',' << fmt6(qnr);
    return os.str();
}

std::string to_csv(const std::vector<MetricReport>& reports) {
    std::ostringstream os;
    os << MetricReport::csv_header() << '\n';
    for (const auto& r : reports) os << r.csv_row() << '\n';
    return os.str();
}

std::string to_markdown(const std::vector<MetricReport>& reports) {
    std::ostringstream os;
    os << "| Method | SAM | CC | sCC | ERGAS | Q4 | D_lambda | D_s | QNR |\n";
    os << "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : reports) {
        os << "| " << r.method;
        for (const auto& v : {r.sam, r.cc, r.scc, r.ergas, r.q4, r.d_lambda, r.d_s, r.qnr}) {
            const std::string s = fmt6(v);
            os << " | " << (s.empty() ? "-" : s);
        }
        os << " |\n";
    }
    return os.str();
}

MetricReport evaluate(const MultiBandImage& fused, const MultiBandImage* ref,
                      const MultiBandImage* ms, const MultiBandImage* pan, const EvalConfig& cfg,
                      const std::string& method_label) {
    MetricReport report;
    report.method = method_label;

    const auto attempt = [&report](const char* name, auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            report.notes.push_back(std::string(name) + ": " + e.what());
        }
    };

    if (ref) {
        attempt("sam", [&] {
            std::size_t skipped = 0;
            report.sam = sam(fused, *ref, &skipped);
            if (skipped > 0)
                report.notes.push_back("sam: skipped " + std::to_string(skipped) +
                                       " zero-norm pixels");
        });
        attempt("cc", [&] { report.cc = cc(fused, *ref); });
        attempt("scc", [&] { report.scc = scc(fused, *ref); });
        attempt("ergas", [&] { report.ergas = ergas(fused, *ref, cfg.ratio); });
        attempt("q4", [&] { report.q4 = q4(fused, *ref, cfg.q4_window); });
    }

    if (ms && pan) {
        attempt("d_lambda", [&] { report.d_lambda = d_lambda(fused, *ms, cfg.qnr_window); });
        attempt("d_s", [&] {
            const MultiBandImage pan_lr =
                raster::downsample(*pan, cfg.ratio, raster::ResampleFilter::wald(cfg.ratio));
            report.d_s = d_s(fused, *ms, *pan, pan_lr, cfg.qnr_window);
        });
        if (report.d_lambda && report.d_s)
            attempt("qnr", [&] { report.qnr = qnr(*report.d_lambda, *report.d_s); });
    }
    return report;
}

}  // namespace pansharp::metrics

#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "pansharp/image.hpp"

namespace pansharp::metrics {

// Window for the Q index: global by default, or non-overlapping blocks of a
// power-of-two side >= 8. Images smaller than the block fall back to global.
struct QConfig {
    int block = 0;  // 0 = global

    static QConfig global() { return {0}; }
    static QConfig blocks(int side);
};

// High Laplacian pass filter used by sCC: center 8, neighbors -1, zero sum.
inline constexpr std::array<std::array<double, 3>, 3> kLaplacianKernel{
    {{-1.0, -1.0, -1.0}, {-1.0, 8.0, -1.0}, {-1.0, -1.0, -1.0}}};

// Spectral angle mapper in degrees, averaged over pixels; zero-norm pixels
// are skipped and counted through `skipped`.
double sam(const MultiBandImage& fused, const MultiBandImage& ref,
           std::size_t* skipped = nullptr);

// Pearson correlation per band, averaged over bands.
double cc(const MultiBandImage& fused, const MultiBandImage& ref);

// Correlation of Laplacian high-pass bands, averaged over bands.
double scc(const MultiBandImage& fused, const MultiBandImage& ref);
MultiBandImage laplacian_highpass(const MultiBandImage& img);  // reflect-101 borders

// 100 * (1/ratio) * sqrt(mean_b (RMSE_b / mean(ref_b))^2).
double ergas(const MultiBandImage& fused, const MultiBandImage& ref, int ratio);

// Universal image quality index Q = 4 sigma_ab mu_a mu_b /
// ((sigma_a^2 + sigma_b^2)(mu_a^2 + mu_b^2)), global or blockwise mean.
double q_index(const MultiBandImage& a, const MultiBandImage& b,
               const QConfig& cfg = QConfig::global(), std::size_t* skipped_blocks = nullptr);

// Quaternion extension of Q for exactly four bands.
double q4(const MultiBandImage& fused, const MultiBandImage& ref,
          const QConfig& cfg = QConfig::global());

// Spectral distortion from inter-band Q differences between the fused image
// and the low-resolution MS.
double d_lambda(const MultiBandImage& fused, const MultiBandImage& ms,
                const QConfig& cfg = QConfig::blocks(32));

// Spatial distortion from per-band Q against PAN at both scales; pan_lr is
// the degraded PAN at MS resolution.
double d_s(const MultiBandImage& fused, const MultiBandImage& ms, const MultiBandImage& pan,
           const MultiBandImage& pan_lr, const QConfig& cfg = QConfig::blocks(32));

// (1 - D_lambda)(1 - D_S); both inputs must lie in [0,1].
double qnr(double d_lambda_value, double d_s_value);

// --- Aggregation -----------------------------------------------------------

struct MetricReport {
    std::string method;
    std::optional<double> sam;
    std::optional<double> cc;
    std::optional<double> scc;
    std::optional<double> ergas;
    std::optional<double> q4;
    std::optional<double> d_lambda;
    std::optional<double> d_s;
    std::optional<double> qnr;
    std::vector<std::string> notes;

    static std::string csv_header();  // method,SAM,CC,sCC,ERGAS,Q4,D_lambda,D_s,QNR
    std::string csv_row() const;      // 6 decimal places, empty cell when absent
};

std::string to_csv(const std::vector<MetricReport>& reports);
std::string to_markdown(const std::vector<MetricReport>& reports);

struct EvalConfig {
    int ratio = 4;
    QConfig q4_window = QConfig::global();
    QConfig qnr_window = QConfig::blocks(32);
};

// Populates every metric computable from the provided inputs: reference
// metrics need `ref`, no-reference metrics need `ms` and `pan`. Individual
// metric failures land in notes without aborting the rest.
MetricReport evaluate(const MultiBandImage& fused, const MultiBandImage* ref,
                      const MultiBandImage* ms, const MultiBandImage* pan,
                      const EvalConfig& cfg, const std::string& method_label);

}  // namespace pansharp::metrics

#pragma once

#include <string>
#include <vector>

#include "pansharp/image.hpp"

namespace pansharp::fusion {

enum class Method { ihs, brovey, hpf, sfim, gs, lmvm, lmm };

Method parse_method(const std::string& name);  // ihs|brovey|hpf|sfim|gs|lmvm|lmm
const char* to_string(Method m);

struct FusionMethod {
    Method kind = Method::ihs;
    int window = 7;     // LMVM/LMM sliding window, odd and >= 3
    int hp_kernel = 5;  // HPF/SFIM boxcar size, odd and >= 3
};

// Denominators below 1e-8 are floored instead of dividing; the count is the
// caller's warning signal.
struct FuseStats {
    std::size_t clamped_denominators = 0;
};

// Classical fusion of an already-upsampled MS image with a PAN band of the
// same spatial dims. Formulas:
//   IHS:    F_b = M_b + (P' - I),  I = band mean, P' moment-matched to I
//   Brovey: F_b = M_b * P' / I
//   HPF:    F_b = M_b + (P - boxcar(P))
//   SFIM:   F_b = M_b * P / boxcar(P)
//   GS:     Gram-Schmidt with I as first component, substitute P', invert
//   LMVM:   F_b = (P - mu_P,w) * sigma_Mb,w / sigma_P,w + mu_Mb,w
//   LMM:    F_b = P * mu_Mb,w / mu_P,w
MultiBandImage fuse(const FusionMethod& method, const MultiBandImage& ms_up,
                    const MultiBandImage& pan, FuseStats* stats = nullptr);

// Bicubic-only control: upsample(ms, ratio) with no PAN injection.
MultiBandImage fuse_naive(const MultiBandImage& ms, int ratio);

// Gram-Schmidt decomposition pieces, exposed so the inverse can be checked
// against the forward independently of the substitution step.
struct GramSchmidt {
    int width = 0, height = 0;
    std::vector<double> band_means;               // per MS band
    double intensity_mean = 0.0;
    std::vector<std::vector<double>> components;  // [0]=centered intensity, [1..B]=orthogonalized bands
    std::vector<std::vector<double>> coeffs;      // coeffs[b][j]: projection of band b on component j
};

GramSchmidt gs_forward(const MultiBandImage& ms_up);
// Reconstructs the MS image from components; `first` replaces component 0
// (pass gs.components[0] for an exact round trip).
MultiBandImage gs_inverse(const GramSchmidt& gs, const std::vector<double>& first);

}  // namespace pansharp::fusion

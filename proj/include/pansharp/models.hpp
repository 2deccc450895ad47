#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pansharp/image.hpp"
#include "pansharp/neural.hpp"
#include "pansharp/protocol.hpp"

namespace pansharp::models {

enum class GeneratorVariant : std::uint8_t { psgan = 0, fu_psgan = 1, st_psgan = 2 };

GeneratorVariant parse_variant(const std::string& name);  // psgan|fu-psgan|st-psgan
const char* to_string(GeneratorVariant v);

// Concrete layer table for the three generators. base_width scales every
// channel count; 32 reproduces the c32/c64/c128/c256 ladder, smaller values
// give finite-difference-sized graphs.
struct GeneratorBlueprint {
    GeneratorVariant variant = GeneratorVariant::psgan;
    int bands = 4;
    int base_width = 32;
    bool use_bn = false;
};

// Inputs by variant (ratio 4 geometry, H = PAN side):
//   psgan:    "ms_up" (b x H x H) + "pan" (1 x H x H)
//   fu_psgan: "ms" (b x H/4 x H/4) + "pan" (1 x H x H)
//   st_psgan: "stack" ((b+1) x H x H), PAN first then up-sampled MS
// Output "out" is b x H x H, non-negative (final ReLU).
neural::ComputeGraph build_generator(const GeneratorBlueprint& bp);

// Five 3x3 conv layers (strides 2,2,2,1,1), LeakyReLU between, sigmoid head.
// Input "pair" stacks the up-sampled MS condition with the candidate
// (2*bands channels); output "prob" is the patch probability map.
neural::ComputeGraph build_discriminator(int bands, int base_width = 64);

// --- Losses -------------------------------------------------------------------
//
// L_G = -alpha * mean(log D(fake)) + beta * mean(|P - P_hat|)
// L_D = -mean(log D(real)) - mean(log(1 - D(fake)))
// Logs are clamped at 1e-12; a clamped term contributes zero gradient.

struct GeneratorLoss {
    double total = 0.0;
    double adv = 0.0;  // -alpha * mean(log d_fake)
    double l1 = 0.0;   // beta * mean(|P - P_hat|)
    neural::Tensor d_grad;      // dL/d d_fake
    neural::Tensor fused_grad;  // dL/d fused from the l1 term
};

GeneratorLoss generator_loss(const neural::Tensor& d_fake, const neural::Tensor& fused,
                             const neural::Tensor& reference, double alpha, double beta);

struct DiscriminatorLoss {
    double total = 0.0;
    neural::Tensor real_grad;  // dL/d d_real
    neural::Tensor fake_grad;  // dL/d d_fake
};

DiscriminatorLoss discriminator_loss(const neural::Tensor& d_real, const neural::Tensor& d_fake);

// The discriminator objective exactly as printed in the source formulation:
// mean(1 - log D(fake) + log D(real)). Diagnostic only; minimizing it would
// drive D(real) to zero, so training always uses discriminator_loss above.
double printed_discriminator_objective(const neural::Tensor& d_real,
                                       const neural::Tensor& d_fake);

// --- Training --------------------------------------------------------------------

struct TrainConfig {
    double alpha = 1.0;
    double beta = 100.0;
    int batch = 8;
    neural::AdamConfig adam{};
    int steps = 0;
    std::uint64_t seed = 0;
    bool use_bn = false;
    int ms_patch = 64;
    int ratio = 4;
    int gen_width = 32;
    int disc_width = 64;

    static TrainConfig desk();   // 16/64 patches, batch 4, widths 8/16
    static TrainConfig paper();  // 64/256 patches, batch 8, widths 32/64
};

struct StepStats {
    double g_loss = 0.0;
    double g_adv = 0.0;
    double g_l1 = 0.0;
    double d_loss = 0.0;
    double d_real_mean = 0.0;
    double d_fake_mean = 0.0;
};

struct TrainHistory {
    std::vector<StepStats> steps;
};

struct TrainResult {
    neural::ParameterStore generator;
    neural::ParameterStore discriminator;
    TrainHistory history;
};

using StepCallback = std::function<void(int step, const StepStats&)>;

// Alternating training: per step one discriminator update on
// (real = reference, fake = current generator output), both conditioned on
// the up-sampled MS, then one generator update. Deterministic per seed.
TrainResult train(const std::vector<protocol::TrainingSample>& dataset, GeneratorVariant variant,
                  const TrainConfig& cfg, const StepCallback& callback = nullptr);

// --- Inference ---------------------------------------------------------------------

struct GeneratorWeights {
    GeneratorVariant variant = GeneratorVariant::psgan;
    int bands = 4;
    neural::ParameterStore store;
};

// Full-scene inference on normalized [0,1] inputs. Scenes larger than 256 at
// PAN scale are tiled (tile 256, overlap 32, linear feather).
MultiBandImage pansharpen_nn(const MultiBandImage& ms, const MultiBandImage& pan,
                             const GeneratorWeights& weights, GeneratorVariant variant);

// --- Weight serialization -----------------------------------------------------------
//
// PSGW format (little-endian): magic "PSGW" | version u8 (=1) | variant u8 |
// bands u32 | param count u32 | per param: name len u16, UTF-8 name,
// ndim u8 (=4), dims u32 x 4, float64 data.

void save_weights(const neural::ParameterStore& store, GeneratorVariant variant, int bands,
                  const std::filesystem::path& path);
GeneratorWeights load_weights(const std::filesystem::path& path);

// --- Conversions ------------------------------------------------------------------

neural::Tensor image_to_tensor(const MultiBandImage& img);
MultiBandImage tensor_to_image(const neural::Tensor& t, int batch_index = 0);

}  // namespace pansharp::models

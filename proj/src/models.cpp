#include "pansharp/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "pansharp/raster.hpp"

namespace pansharp::models {

using neural::ComputeGraph;
using neural::GradMap;
using neural::ParameterStore;
using neural::Tape;
using neural::Tensor;
using neural::TensorMap;

namespace {

constexpr double kLogClamp = 1e-12;

// BN goes between a conv and its activation on every block except the output
// head, and only when the blueprint asks for it.
struct BlockBuilder {
    ComputeGraph& g;
    bool use_bn;

    int conv_block(const std::string& name, int input, int out_c, int stride,
                   const std::string& group) {
        int node = g.add_conv(name, input, out_c, 3, stride, 1, group);
        if (use_bn) node = g.add_batchnorm(name + "_bn", node, group);
        return g.add_leaky_relu(node);
    }

    int tconv_block(const std::string& name, int input, int out_c, const std::string& group) {
        int node = g.add_tconv(name, input, out_c, 4, 2, 1, 0, group);
        if (use_bn) node = g.add_batchnorm(name + "_bn", node, group);
        return g.add_leaky_relu(node);
    }
};

}  // namespace

GeneratorVariant parse_variant(const std::string& name) {
    if (name == "psgan") return GeneratorVariant::psgan;
    if (name == "fu-psgan" || name == "fu_psgan" || name == "fupsgan")
        return GeneratorVariant::fu_psgan;
    if (name == "st-psgan" || name == "st_psgan" || name == "stpsgan")
        return GeneratorVariant::st_psgan;
    fail(ErrorCode::BadArgument, "unknown generator variant \"" + name + "\"");
}

const char* to_string(GeneratorVariant v) {
    switch (v) {
        case GeneratorVariant::psgan: return "psgan";
        case GeneratorVariant::fu_psgan: return "fu-psgan";
        case GeneratorVariant::st_psgan: return "st-psgan";
    }
    return "?";
}

ComputeGraph build_generator(const GeneratorBlueprint& bp) {
    if (bp.bands < 1) fail(ErrorCode::BadArgument, "bands must be >= 1");
    if (bp.base_width < 1) fail(ErrorCode::BadArgument, "base_width must be >= 1");
    const int w1 = bp.base_width;      // stream width
    const int w2 = 2 * bp.base_width;  // post-downsample width
    const int w4 = 4 * bp.base_width;  // trunk width
    const int w8 = 8 * bp.base_width;  // bottleneck width

    ComputeGraph g;
    BlockBuilder b{g, bp.use_bn};

    int trunk_entry = -1;        // features entering the trunk (PAN-scale / 2)
    int full_res_skip = -1;      // pre-downsample features at PAN scale
    switch (bp.variant) {
        case GeneratorVariant::psgan: {
            const int ms_up = g.add_input("ms_up", bp.bands);
            const int pan = g.add_input("pan", 1);
            const int ms1 = b.conv_block("ms_s1", ms_up, w1, 1, "ms_stream");
            const int ms2 = b.conv_block("ms_s2", ms1, w1, 1, "ms_stream");
            const int ms_down = b.conv_block("ms_down", ms2, w2, 2, "ms_stream");
            const int pan1 = b.conv_block("pan_s1", pan, w1, 1, "pan_stream");
            const int pan2 = b.conv_block("pan_s2", pan1, w1, 1, "pan_stream");
            const int pan_down = b.conv_block("pan_down", pan2, w2, 2, "pan_stream");
            trunk_entry = g.add_concat({ms_down, pan_down}, "trunk");
            full_res_skip = g.add_concat({ms2, pan2}, "decoder");
            break;
        }
        case GeneratorVariant::fu_psgan: {
            const int ms = g.add_input("ms", bp.bands);
            const int pan = g.add_input("pan", 1);
            const int ms1 = b.conv_block("ms_s1", ms, w1, 1, "ms_stream");
            const int ms_up = b.tconv_block("ms_upconv", ms1, w1, "ms_stream");
            const int ms2 = b.conv_block("ms_s2", ms_up, w2, 1, "ms_stream");
            const int pan1 = b.conv_block("pan_s1", pan, w1, 1, "pan_stream");
            const int pan2 = b.conv_block("pan_s2", pan1, w1, 1, "pan_stream");
            const int pan_down = b.conv_block("pan_down", pan2, w2, 2, "pan_stream");
            trunk_entry = g.add_concat({ms2, pan_down}, "trunk");
            full_res_skip = pan2;
            break;
        }
        case GeneratorVariant::st_psgan: {
            const int stack = g.add_input("stack", bp.bands + 1);
            const int s1 = b.conv_block("s1", stack, w1, 1, "stream");
            const int s2 = b.conv_block("s2", s1, w1, 1, "stream");
            trunk_entry = b.conv_block("s_down", s2, w2, 2, "stream");
            full_res_skip = s2;
            break;
        }
    }

    const int fuse1 = b.conv_block("fuse1", trunk_entry, w4, 1, "trunk");
    const int enc_down = b.conv_block("enc_down", fuse1, w8, 2, "trunk");
    const int enc2 = b.conv_block("enc2", enc_down, w8, 1, "trunk");

    const int up1 = b.tconv_block("dec_up1", enc2, w4, "decoder");
    const int skip1 = g.add_concat({up1, trunk_entry}, "decoder");
    const int dec1 = b.conv_block("dec1", skip1, w4, 1, "decoder");
    const int up2 = b.tconv_block("dec_up2", dec1, w2, "decoder");
    const int skip2 = g.add_concat({up2, full_res_skip}, "decoder");
    const int dec2 = b.conv_block("dec2", skip2, w1, 1, "decoder");
    const int head = g.add_conv("out_conv", dec2, bp.bands, 3, 1, 1, "decoder");
    const int out = g.add_relu(head);
    g.mark_output("out", out);
    return g;
}

ComputeGraph build_discriminator(int bands, int base_width) {
    if (bands < 1) fail(ErrorCode::BadArgument, "bands must be >= 1");
    const int d1 = base_width, d2 = 2 * base_width, d4 = 4 * base_width;

    ComputeGraph g;
    const int pair = g.add_input("pair", 2 * bands);
    int node = g.add_conv("d1", pair, d1, 3, 2, 1, "disc");
    node = g.add_leaky_relu(node);
    node = g.add_conv("d2", node, d2, 3, 2, 1, "disc");
    node = g.add_leaky_relu(node);
    node = g.add_conv("d3", node, d4, 3, 2, 1, "disc");
    node = g.add_leaky_relu(node);
    node = g.add_conv("d4", node, d4, 3, 1, 1, "disc");
    node = g.add_leaky_relu(node);
    node = g.add_conv("d5", node, 1, 3, 1, 1, "disc");
    node = g.add_sigmoid(node);
    g.mark_output("prob", node);
    return g;
}

// --- Losses ------------------------------------------------------------------

GeneratorLoss generator_loss(const neural::Tensor& d_fake, const neural::Tensor& fused,
                             const neural::Tensor& reference, double alpha, double beta) {
    if (!fused.same_shape(reference))
        fail(ErrorCode::ShapeMismatch,
             "fused " + fused.shape_str() + " vs reference " + reference.shape_str());

    GeneratorLoss loss;
    loss.d_grad = Tensor(d_fake.n, d_fake.c, d_fake.h, d_fake.w);
    loss.fused_grad = Tensor(fused.n, fused.c, fused.h, fused.w);

    const double inv_m = 1.0 / static_cast<double>(d_fake.size());
    double log_sum = 0.0;
    for (std::size_t i = 0; i < d_fake.size(); ++i) {
        const double d = d_fake.data[i];
        if (d > kLogClamp) {
            log_sum += std::log(d);
            loss.d_grad.data[i] = -alpha * inv_m / d;
        } else {
            log_sum += std::log(kLogClamp);
        }
    }
    loss.adv = -alpha * log_sum * inv_m;

    const double inv_k = 1.0 / static_cast<double>(fused.size());
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < fused.size(); ++i) {
        const double diff = reference.data[i] - fused.data[i];
        abs_sum += std::abs(diff);
        // subgradient convention: sign(0) = 0
        loss.fused_grad.data[i] = -beta * inv_k * (diff > 0.0 ? 1.0 : diff < 0.0 ? -1.0 : 0.0);
    }
    loss.l1 = beta * abs_sum * inv_k;

    loss.total = loss.adv + loss.l1;
    if (!std::isfinite(loss.total)) fail(ErrorCode::NonFiniteLoss, "generator loss is not finite");
    return loss;
}

DiscriminatorLoss discriminator_loss(const neural::Tensor& d_real, const neural::Tensor& d_fake) {
    DiscriminatorLoss loss;
    loss.real_grad = Tensor(d_real.n, d_real.c, d_real.h, d_real.w);
    loss.fake_grad = Tensor(d_fake.n, d_fake.c, d_fake.h, d_fake.w);

    const double inv_r = 1.0 / static_cast<double>(d_real.size());
    double real_sum = 0.0;
    for (std::size_t i = 0; i < d_real.size(); ++i) {
        const double d = d_real.data[i];
        if (d > kLogClamp) {
            real_sum += std::log(d);
            loss.real_grad.data[i] = -inv_r / d;
        } else {
            real_sum += std::log(kLogClamp);
        }
    }

    const double inv_f = 1.0 / static_cast<double>(d_fake.size());
    double fake_sum = 0.0;
    for (std::size_t i = 0; i < d_fake.size(); ++i) {
        const double one_minus = 1.0 - d_fake.data[i];
        if (one_minus > kLogClamp) {
            fake_sum += std::log(one_minus);
            loss.fake_grad.data[i] = inv_f / one_minus;
        } else {
            fake_sum += std::log(kLogClamp);
        }
    }

    loss.total = -real_sum * inv_r - fake_sum * inv_f;
    if (!std::isfinite(loss.total))
        fail(ErrorCode::NonFiniteLoss, "discriminator loss is not finite");
    return loss;
}

double printed_discriminator_objective(const neural::Tensor& d_real,
                                       const neural::Tensor& d_fake) {
    double real_sum = 0.0, fake_sum = 0.0;
    for (double d : d_real.data) real_sum += std::log(std::max(d, kLogClamp));
    for (double d : d_fake.data) fake_sum += std::log(std::max(d, kLogClamp));
    return 1.0 - fake_sum / static_cast<double>(d_fake.size()) +
           real_sum / static_cast<double>(d_real.size());
}

// --- Conversions ---------------------------------------------------------------

neural::Tensor image_to_tensor(const MultiBandImage& img) {
    Tensor t(1, img.bands, img.height, img.width);
    std::copy(img.samples.begin(), img.samples.end(), t.data.begin());
    return t;
}

MultiBandImage tensor_to_image(const neural::Tensor& t, int batch_index) {
    if (batch_index < 0 || batch_index >= t.n)
        fail(ErrorCode::BadArgument, "batch index out of range");
    MultiBandImage img(t.w, t.h, t.c);
    std::copy_n(t.data.begin() + static_cast<std::ptrdiff_t>(batch_index) * t.c * t.plane(),
                img.samples.size(), img.samples.begin());
    return img;
}

// --- Training ----------------------------------------------------------------------

TrainConfig TrainConfig::desk() {
    TrainConfig cfg;
    cfg.batch = 4;
    cfg.ms_patch = 16;
    cfg.gen_width = 8;
    cfg.disc_width = 16;
    return cfg;
}

TrainConfig TrainConfig::paper() {
    TrainConfig cfg;
    cfg.batch = 8;
    cfg.ms_patch = 64;
    cfg.gen_width = 32;
    cfg.disc_width = 64;
    return cfg;
}

namespace {

struct SampleTensors {
    Tensor ms;      // b x h x w (LR)
    Tensor ms_up;   // b x H x W (bicubic)
    Tensor pan;     // 1 x H x W
    Tensor ref;     // b x H x W
};

Tensor stack_batch(const std::vector<SampleTensors>& pool, const std::vector<int>& idx,
                   Tensor SampleTensors::* field) {
    const Tensor& first = pool[static_cast<std::size_t>(idx[0])].*field;
    Tensor out(static_cast<int>(idx.size()), first.c, first.h, first.w);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const Tensor& src = pool[static_cast<std::size_t>(idx[i])].*field;
        if (src.c != first.c || src.h != first.h || src.w != first.w)
            fail(ErrorCode::ShapeMismatch, "dataset patches have mixed dims");
        std::copy(src.data.begin(), src.data.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>(i) * src.size());
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        fail(ErrorCode::ShapeMismatch, "concat " + a.shape_str() + " vs " + b.shape_str());
    Tensor out(a.n, a.c + b.c, a.h, a.w);
    for (int in = 0; in < a.n; ++in) {
        for (int c = 0; c < a.c; ++c)
            std::copy_n(a.plane_ptr(in, c), a.plane(), out.plane_ptr(in, c));
        for (int c = 0; c < b.c; ++c)
            std::copy_n(b.plane_ptr(in, c), b.plane(), out.plane_ptr(in, a.c + c));
    }
    return out;
}

Tensor slice_channels(const Tensor& t, int from, int count) {
    Tensor out(t.n, count, t.h, t.w);
    for (int in = 0; in < t.n; ++in)
        for (int c = 0; c < count; ++c)
            std::copy_n(t.plane_ptr(in, from + c), t.plane(), out.plane_ptr(in, c));
    return out;
}

TensorMap generator_inputs(GeneratorVariant variant, const Tensor& ms, const Tensor& ms_up,
                           const Tensor& pan) {
    TensorMap inputs;
    switch (variant) {
        case GeneratorVariant::psgan:
            inputs["ms_up"] = ms_up;
            inputs["pan"] = pan;
            break;
        case GeneratorVariant::fu_psgan:
            inputs["ms"] = ms;
            inputs["pan"] = pan;
            break;
        case GeneratorVariant::st_psgan:
            inputs["stack"] = concat_channels(pan, ms_up);
            break;
    }
    return inputs;
}

double tensor_mean(const Tensor& t) {
    double acc = 0.0;
    for (double v : t.data) acc += v;
    return acc / static_cast<double>(t.size());
}

}  // namespace

TrainResult train(const std::vector<protocol::TrainingSample>& dataset, GeneratorVariant variant,
                  const TrainConfig& cfg, const StepCallback& callback) {
    if (dataset.empty()) fail(ErrorCode::BadArgument, "dataset is empty");
    if (cfg.batch < 1) fail(ErrorCode::BadArgument, "batch must be >= 1");
    if (!(cfg.alpha > 0.0) || !(cfg.beta > 0.0))
        fail(ErrorCode::BadArgument, "alpha and beta must be > 0");

    const int bands = dataset[0].ms.bands;

    // deterministic per-sample tensor cache
    std::vector<SampleTensors> pool;
    pool.reserve(dataset.size());
    for (const auto& sample : dataset) {
        sample.ensure_valid();
        SampleTensors st;
        st.ms = image_to_tensor(sample.ms);
        st.ms_up = image_to_tensor(
            raster::upsample(sample.ms, sample.ratio, raster::ResampleFilter::bicubic()));
        st.pan = image_to_tensor(sample.pan);
        st.ref = image_to_tensor(sample.reference);
        pool.push_back(std::move(st));
    }

    GeneratorBlueprint bp{variant, bands, cfg.gen_width, cfg.use_bn};
    const ComputeGraph gen = build_generator(bp);
    const ComputeGraph disc = build_discriminator(bands, cfg.disc_width);

    TrainResult result;
    {
        Rng grng = Rng::keyed(cfg.seed, 0x6E01);
        gen.init_params(result.generator, grng);
        Rng drng = Rng::keyed(cfg.seed, 0xD102);
        disc.init_params(result.discriminator, drng);
    }

    for (int step = 0; step < cfg.steps; ++step) {
        Rng batch_rng = Rng::keyed(cfg.seed, 0xBA7C0000ULL + static_cast<std::uint64_t>(step));
        std::vector<int> idx(static_cast<std::size_t>(cfg.batch));
        for (int& i : idx)
            i = static_cast<int>(batch_rng.below(static_cast<std::uint32_t>(pool.size())));

        const Tensor ms_b = stack_batch(pool, idx, &SampleTensors::ms);
        const Tensor ms_up_b = stack_batch(pool, idx, &SampleTensors::ms_up);
        const Tensor pan_b = stack_batch(pool, idx, &SampleTensors::pan);
        const Tensor ref_b = stack_batch(pool, idx, &SampleTensors::ref);
        const TensorMap gin = generator_inputs(variant, ms_b, ms_up_b, pan_b);

        // --- discriminator update (generator frozen) ---
        const Tape gen_tape = neural::forward(gen, result.generator, gin, true);
        const Tensor fused = neural::outputs_of(gen, gen_tape).at("out");

        const Tensor real_pair = concat_channels(ms_up_b, ref_b);
        const Tensor fake_pair = concat_channels(ms_up_b, fused);

        const Tape d_real_tape = neural::forward(disc, result.discriminator, {{"pair", real_pair}}, true);
        const Tape d_fake_tape = neural::forward(disc, result.discriminator, {{"pair", fake_pair}}, true);
        const Tensor d_real = neural::outputs_of(disc, d_real_tape).at("prob");
        const Tensor d_fake = neural::outputs_of(disc, d_fake_tape).at("prob");

        const DiscriminatorLoss dloss = discriminator_loss(d_real, d_fake);
        GradMap d_grads = neural::backward(disc, result.discriminator, d_real_tape,
                                           {{"prob", dloss.real_grad}});
        const GradMap d_grads_fake = neural::backward(disc, result.discriminator, d_fake_tape,
                                                      {{"prob", dloss.fake_grad}});
        for (const auto& [name, g] : d_grads_fake) {
            auto it = d_grads.find(name);
            if (it == d_grads.end()) {
                d_grads[name] = g;
            } else {
                for (std::size_t i = 0; i < g.size(); ++i) it->second.data[i] += g.data[i];
            }
        }
        neural::adam_step(result.discriminator, d_grads, cfg.adam);

        // --- generator update (discriminator frozen; its param grads are discarded) ---
        const Tensor fake_pair2 = concat_channels(ms_up_b, fused);
        const Tape d_tape2 = neural::forward(disc, result.discriminator, {{"pair", fake_pair2}}, true);
        const Tensor d_fake2 = neural::outputs_of(disc, d_tape2).at("prob");

        const GeneratorLoss gloss = generator_loss(d_fake2, fused, ref_b, cfg.alpha, cfg.beta);
        TensorMap d_input_grads;
        neural::backward(disc, result.discriminator, d_tape2, {{"prob", gloss.d_grad}},
                         &d_input_grads);
        Tensor fused_grad = slice_channels(d_input_grads.at("pair"), bands, bands);
        for (std::size_t i = 0; i < fused_grad.size(); ++i)
            fused_grad.data[i] += gloss.fused_grad.data[i];

        const GradMap g_grads =
            neural::backward(gen, result.generator, gen_tape, {{"out", fused_grad}});
        neural::adam_step(result.generator, g_grads, cfg.adam);
        if (cfg.use_bn) neural::commit_batchnorm_updates(gen, gen_tape, result.generator);

        StepStats stats;
        stats.g_loss = gloss.total;
        stats.g_adv = gloss.adv;
        stats.g_l1 = gloss.l1;
        stats.d_loss = dloss.total;
        stats.d_real_mean = tensor_mean(d_real);
        stats.d_fake_mean = tensor_mean(d_fake);
        for (double v : {stats.g_loss, stats.g_adv, stats.g_l1, stats.d_loss, stats.d_real_mean,
                         stats.d_fake_mean})
            if (!std::isfinite(v))
                fail(ErrorCode::NonFiniteLoss, "non-finite loss at step " + std::to_string(step));
        result.history.steps.push_back(stats);
        if (callback) callback(step, stats);
    }
    return result;
}

// --- Inference -------------------------------------------------------------------------

namespace {

// Expected parameter inventory for a blueprint, used to validate loaded
// weights before running the graph.
void validate_weights(const ComputeGraph& graph, const ParameterStore& store) {
    ParameterStore expected;
    Rng rng(0);
    graph.init_params(expected, rng);
    for (const std::string& name : expected.names()) {
        if (!store.has(name))
            fail(ErrorCode::WeightShapeMismatch, "missing parameter \"" + name + "\"");
        if (!store.at(name).value.same_shape(expected.at(name).value))
            fail(ErrorCode::WeightShapeMismatch,
                 "parameter \"" + name + "\" is " + store.at(name).value.shape_str() +
                     ", graph expects " + expected.at(name).value.shape_str());
    }
    for (const std::string& name : store.names())
        if (!expected.has(name))
            fail(ErrorCode::WeightShapeMismatch, "unexpected parameter \"" + name + "\"");
}

int infer_base_width(const GeneratorWeights& weights) {
    const char* first_conv = weights.variant == GeneratorVariant::st_psgan ? "s1.w" : "ms_s1.w";
    if (!weights.store.has(first_conv))
        fail(ErrorCode::WeightShapeMismatch,
             std::string("weights lack first-layer parameter \"") + first_conv + "\"");
    return weights.store.at(first_conv).value.n;
}

bool infer_use_bn(const GeneratorWeights& weights) {
    for (const std::string& name : weights.store.names())
        if (name.size() > 6 && name.substr(name.size() - 6) == ".gamma") return true;
    return false;
}

MultiBandImage crop_image(const MultiBandImage& img, int x0, int y0, int w, int h) {
    MultiBandImage out(w, h, img.bands);
    out.dtype = img.dtype;
    out.range = img.range;
    for (int b = 0; b < img.bands; ++b)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) out.at(x, y, b) = img.at(x0 + x, y0 + y, b);
    return out;
}

// tile start coordinates along one axis: stride tile-overlap, last tile
// clamped flush to the end
std::vector<int> tile_starts(int extent, int tile, int overlap) {
    std::vector<int> starts;
    if (extent <= tile) {
        starts.push_back(0);
        return starts;
    }
    const int stride = tile - overlap;
    for (int s = 0;; s += stride) {
        if (s + tile >= extent) {
            starts.push_back(extent - tile);
            break;
        }
        starts.push_back(s);
    }
    return starts;
}

double feather_ramp(int i, int len, int overlap, bool fade_lo, bool fade_hi) {
    double w = 1.0;
    if (fade_lo && i < overlap) w = std::min(w, (i + 1.0) / (overlap + 1.0));
    if (fade_hi && i >= len - overlap) w = std::min(w, (len - i) / (overlap + 1.0));
    return w;
}

}  // namespace

MultiBandImage pansharpen_nn(const MultiBandImage& ms, const MultiBandImage& pan,
                             const GeneratorWeights& weights, GeneratorVariant variant) {
    if (weights.variant != variant)
        fail(ErrorCode::VariantMismatch, std::string("weights are for ") +
                                             to_string(weights.variant) + ", requested " +
                                             to_string(variant));
    if (pan.bands != 1) fail(ErrorCode::DimensionMismatch, "pan must be single-band");
    if (ms.width < 1 || pan.width % ms.width != 0 || pan.height % ms.height != 0 ||
        pan.width / ms.width != pan.height / ms.height)
        fail(ErrorCode::DimensionMismatch, "pan dims must be an integer multiple of ms dims");
    const int ratio = pan.width / ms.width;
    if (ratio < 2) fail(ErrorCode::DimensionMismatch, "resolution ratio must be >= 2");
    if (ms.bands != weights.bands)
        fail(ErrorCode::WeightShapeMismatch, "weights trained for " +
                                                 std::to_string(weights.bands) + " bands, ms has " +
                                                 std::to_string(ms.bands));

    const GeneratorBlueprint bp{variant, weights.bands, infer_base_width(weights),
                                infer_use_bn(weights)};
    const ComputeGraph graph = build_generator(bp);
    validate_weights(graph, weights.store);

    const auto run_tile = [&](const MultiBandImage& ms_tile,
                              const MultiBandImage& pan_tile) -> Tensor {
        const MultiBandImage ms_up =
            raster::upsample(ms_tile, ratio, raster::ResampleFilter::bicubic());
        const TensorMap inputs = generator_inputs(variant, image_to_tensor(ms_tile),
                                                  image_to_tensor(ms_up), image_to_tensor(pan_tile));
        const Tape tape = neural::forward(graph, weights.store, inputs, false);
        return neural::outputs_of(graph, tape).at("out");
    };

    constexpr int kTile = 256;
    constexpr int kOverlap = 32;

    MultiBandImage out(pan.width, pan.height, ms.bands);
    out.dtype = ms.dtype;
    out.range = ms.range;

    if (pan.width <= kTile && pan.height <= kTile) {
        const Tensor fused = run_tile(ms, pan);
        out.samples = tensor_to_image(fused).samples;
        return out;
    }

    std::vector<double> weight_sum(out.plane(), 0.0);
    const std::vector<int> xs = tile_starts(pan.width, kTile, kOverlap);
    const std::vector<int> ys = tile_starts(pan.height, kTile, kOverlap);

    for (int y0 : ys) {
        for (int x0 : xs) {
            const MultiBandImage pan_tile = crop_image(pan, x0, y0, kTile, kTile);
            const MultiBandImage ms_tile =
                crop_image(ms, x0 / ratio, y0 / ratio, kTile / ratio, kTile / ratio);
            const Tensor fused = run_tile(ms_tile, pan_tile);

            const bool fade_l = x0 > 0, fade_r = x0 + kTile < pan.width;
            const bool fade_t = y0 > 0, fade_b = y0 + kTile < pan.height;
            for (int y = 0; y < kTile; ++y) {
                const double wy = feather_ramp(y, kTile, kOverlap, fade_t, fade_b);
                for (int x = 0; x < kTile; ++x) {
                    const double w = wy * feather_ramp(x, kTile, kOverlap, fade_l, fade_r);
                    const std::size_t oi = static_cast<std::size_t>(y0 + y) * out.width + (x0 + x);
                    weight_sum[oi] += w;
                    for (int b = 0; b < out.bands; ++b)
                        out.at(x0 + x, y0 + y, b) += w * fused.at(0, b, y, x);
                }
            }
        }
    }

    for (int b = 0; b < out.bands; ++b) {
        auto plane = out.band(b);
        for (std::size_t i = 0; i < plane.size(); ++i) plane[i] /= weight_sum[i];
    }
    return out;
}

// --- Weight serialization -----------------------------------------------------------------

namespace {

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF));
}

struct Reader {
    const std::vector<std::uint8_t>& bytes;
    std::size_t pos = 0;

    void need(std::size_t count) const {
        if (pos + count > bytes.size())
            fail(ErrorCode::TruncatedPayload, "needed " + std::to_string(count) +
                                                  " bytes at offset " + std::to_string(pos) +
                                                  ", file ends at " + std::to_string(bytes.size()));
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::uint16_t u16() {
        need(2);
        const std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[pos + i]) << (8 * i);
        pos += 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str(std::size_t len) {
        need(len);
        std::string s(reinterpret_cast<const char*>(bytes.data() + pos), len);
        pos += len;
        return s;
    }
};

bool is_running_stat(const std::string& name) {
    return (name.size() > 6 && name.substr(name.size() - 6) == ".rmean") ||
           (name.size() > 5 && name.substr(name.size() - 5) == ".rvar");
}

}  // namespace

void save_weights(const neural::ParameterStore& store, GeneratorVariant variant, int bands,
                  const std::filesystem::path& path) {
    std::vector<std::uint8_t> bytes;
    bytes.insert(bytes.end(), {'P', 'S', 'G', 'W'});
    bytes.push_back(1);
    bytes.push_back(static_cast<std::uint8_t>(variant));
    put_u32(bytes, static_cast<std::uint32_t>(bands));
    put_u32(bytes, static_cast<std::uint32_t>(store.names().size()));

    for (const std::string& name : store.names()) {
        const Tensor& t = store.at(name).value;
        put_u16(bytes, static_cast<std::uint16_t>(name.size()));
        bytes.insert(bytes.end(), name.begin(), name.end());
        bytes.push_back(4);
        put_u32(bytes, static_cast<std::uint32_t>(t.n));
        put_u32(bytes, static_cast<std::uint32_t>(t.c));
        put_u32(bytes, static_cast<std::uint32_t>(t.h));
        put_u32(bytes, static_cast<std::uint32_t>(t.w));
        for (double v : t.data) put_f64(bytes, v);
    }

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

GeneratorWeights load_weights(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoFailure, "cannot open " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                          std::istreambuf_iterator<char>());

    if (bytes.size() < 4 || std::memcmp(bytes.data(), "PSGW", 4) != 0)
        fail(ErrorCode::BadMagic, "expected \"PSGW\" at byte offset 0 in " + path.string());

    Reader r{bytes, 4};
    const std::uint8_t version = r.u8();
    if (version != 1)
        fail(ErrorCode::UnsupportedVersion,
             "version byte at offset 4 is " + std::to_string(version) + ", expected 1");
    const std::uint8_t variant_code = r.u8();
    if (variant_code > 2)
        fail(ErrorCode::VariantMismatch, "variant code " + std::to_string(variant_code));

    GeneratorWeights weights;
    weights.variant = static_cast<GeneratorVariant>(variant_code);
    weights.bands = static_cast<int>(r.u32());
    const std::uint32_t count = r.u32();

    for (std::uint32_t p = 0; p < count; ++p) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.str(name_len);
        const std::uint8_t ndim = r.u8();
        if (ndim != 4)
            fail(ErrorCode::WeightShapeMismatch,
                 "parameter \"" + name + "\" has ndim " + std::to_string(ndim) + ", expected 4");
        const int n = static_cast<int>(r.u32());
        const int c = static_cast<int>(r.u32());
        const int h = static_cast<int>(r.u32());
        const int w = static_cast<int>(r.u32());
        Tensor t(n, c, h, w);
        for (double& v : t.data) v = r.f64();
        weights.store.add(name, std::move(t), !is_running_stat(name));
    }
    return weights;
}

}  // namespace pansharp::models

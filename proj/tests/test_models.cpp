#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "pansharp/models.hpp"
#include "pansharp/protocol.hpp"
#include "pansharp/raster.hpp"
#include "pansharp/rng.hpp"

using namespace pansharp;
using namespace pansharp::models;
using neural::ComputeGraph;
using neural::ParameterStore;
using neural::Tensor;

namespace {

Tensor random_tensor(int n, int c, int h, int w, std::uint64_t seed, double lo = 0.1,
                     double hi = 0.9) {
    Rng rng(seed);
    Tensor t(n, c, h, w);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

std::vector<protocol::TrainingSample> desk_dataset(int count, std::uint64_t seed) {
    std::vector<protocol::TrainingSample> out;
    for (int i = 0; i < count; ++i) {
        const auto scene =
            protocol::synth_scene(64, 4, seed + static_cast<std::uint64_t>(i));
        auto sample = protocol::sample_from_scene(scene, 4);
        protocol::SamplerConfig cfg{16, 1, seed + 1000 + static_cast<std::uint64_t>(i)};
        auto patches = protocol::extract_patches(sample, cfg);
        out.push_back(std::move(patches[0]));
    }
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    Tensor out(a.n, a.c + b.c, a.h, a.w);
    for (int in = 0; in < a.n; ++in) {
        for (int c = 0; c < a.c; ++c)
            std::copy_n(a.plane_ptr(in, c), a.plane(), out.plane_ptr(in, c));
        for (int c = 0; c < b.c; ++c)
            std::copy_n(b.plane_ptr(in, c), b.plane(), out.plane_ptr(in, a.c + c));
    }
    return out;
}

}  // namespace

TEST_CASE("variant names parse") {
    CHECK(parse_variant("psgan") == GeneratorVariant::psgan);
    CHECK(parse_variant("fu-psgan") == GeneratorVariant::fu_psgan);
    CHECK(parse_variant("st-psgan") == GeneratorVariant::st_psgan);
    CHECK_THROWS_AS(parse_variant("pix2pix"), Error);
}

TEST_CASE("all three generators map the paper geometry to 4x256x256") {
    // width 4 keeps this fast; the shape ladder is width-independent
    const Tensor ms = random_tensor(1, 4, 64, 64, 1);
    const Tensor ms_up = random_tensor(1, 4, 256, 256, 2);
    const Tensor pan = random_tensor(1, 1, 256, 256, 3);

    for (GeneratorVariant variant :
         {GeneratorVariant::psgan, GeneratorVariant::fu_psgan, GeneratorVariant::st_psgan}) {
        const ComputeGraph g = build_generator({variant, 4, 4, false});
        ParameterStore store;
        Rng rng(7);
        g.init_params(store, rng);

        neural::TensorMap inputs;
        switch (variant) {
            case GeneratorVariant::psgan:
                inputs = {{"ms_up", ms_up}, {"pan", pan}};
                break;
            case GeneratorVariant::fu_psgan:
                inputs = {{"ms", ms}, {"pan", pan}};
                break;
            case GeneratorVariant::st_psgan:
                inputs = {{"stack", concat_channels(pan, ms_up)}};
                break;
        }
        const Tensor out = neural::outputs_of(g, neural::forward(g, store, inputs)).at("out");
        CHECK(out.n == 1);
        CHECK(out.c == 4);
        CHECK(out.h == 256);
        CHECK(out.w == 256);
        for (double v : out.data) CHECK(v >= 0.0);  // final ReLU
    }
}

TEST_CASE("st-psgan input is a 5-channel stack for 4-band MS") {
    const ComputeGraph g = build_generator({GeneratorVariant::st_psgan, 4, 2, false});
    REQUIRE(g.entries().size() == 1);
    CHECK(g.entries()[0].first == "stack");
    CHECK(g.nodes()[static_cast<std::size_t>(g.entries()[0].second)].spec.out_c == 5);
}

TEST_CASE("discriminator stride ladder: 256 -> 32 map, 64 -> 8 map, sigmoid range") {
    const ComputeGraph d = build_discriminator(4, 8);
    ParameterStore store;
    Rng rng(8);
    d.init_params(store, rng);

    const Tensor big = random_tensor(1, 8, 256, 256, 9);
    const Tensor big_map = neural::outputs_of(d, neural::forward(d, store, {{"pair", big}})).at("prob");
    CHECK(big_map.c == 1);
    CHECK(big_map.h == 32);
    CHECK(big_map.w == 32);

    const Tensor small = random_tensor(2, 8, 64, 64, 10);
    const Tensor small_map =
        neural::outputs_of(d, neural::forward(d, store, {{"pair", small}})).at("prob");
    CHECK(small_map.h == 8);
    CHECK(small_map.w == 8);
    for (double v : small_map.data) {
        CHECK(v > 0.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("blueprint pinning: decoder has exactly 2 transposed and 3 flat convolutions") {
    for (GeneratorVariant variant :
         {GeneratorVariant::psgan, GeneratorVariant::fu_psgan, GeneratorVariant::st_psgan}) {
        const ComputeGraph g = build_generator({variant, 4, 8, false});
        int tconvs = 0, flats = 0;
        for (const auto& node : g.nodes()) {
            if (node.group != "decoder") continue;
            if (node.spec.kind == neural::LayerKind::tconv) ++tconvs;
            if (node.spec.kind == neural::LayerKind::conv) ++flats;
        }
        CHECK(tconvs == 2);
        CHECK(flats == 3);
        // final node chain: conv to `bands` channels, then ReLU
        const auto& nodes = g.nodes();
        REQUIRE(g.outputs().size() == 1);
        const auto& out_node = nodes[static_cast<std::size_t>(g.outputs()[0].second)];
        CHECK(out_node.spec.kind == neural::LayerKind::relu);
        CHECK(out_node.spec.out_c == 4);
    }
}

TEST_CASE("use_bn adds one batchnorm per conv block except the output head") {
    const ComputeGraph plain = build_generator({GeneratorVariant::psgan, 4, 4, false});
    const ComputeGraph bn = build_generator({GeneratorVariant::psgan, 4, 4, true});
    int convs = 0, bns = 0;
    for (const auto& node : bn.nodes()) {
        if (node.spec.kind == neural::LayerKind::conv ||
            node.spec.kind == neural::LayerKind::tconv)
            ++convs;
        if (node.spec.kind == neural::LayerKind::batchnorm) ++bns;
    }
    CHECK(bns == convs - 1);
    int plain_bns = 0;
    for (const auto& node : plain.nodes())
        if (node.spec.kind == neural::LayerKind::batchnorm) ++plain_bns;
    CHECK(plain_bns == 0);
}

TEST_CASE("st-psgan has strictly fewer parameters than psgan") {
    for (int width : {4, 32}) {
        ParameterStore ps, st;
        Rng r1(1), r2(2);
        build_generator({GeneratorVariant::psgan, 4, width, false}).init_params(ps, r1);
        build_generator({GeneratorVariant::st_psgan, 4, width, false}).init_params(st, r2);
        CHECK(st.scalar_count() < ps.scalar_count());
    }
}

TEST_CASE("generator loss closed forms") {
    const Tensor ref = random_tensor(2, 4, 6, 6, 20);

    SUBCASE("d_fake 0.5 with a perfect reconstruction gives -log 0.5") {
        const Tensor d(2, 1, 3, 3, 0.5);
        const GeneratorLoss loss = generator_loss(d, ref, ref, 1.0, 100.0);
        CHECK(loss.total == doctest::Approx(0.6931).epsilon(1e-4));
        CHECK(loss.l1 == 0.0);
    }
    SUBCASE("d_fake 1 with a perfect reconstruction gives 0") {
        const Tensor d(2, 1, 3, 3, 1.0);
        const GeneratorLoss loss = generator_loss(d, ref, ref, 1.0, 100.0);
        CHECK(loss.total == 0.0);
    }
    SUBCASE("uniform 0.01 error with d_fake 1 gives the pure l1 term 1.0") {
        Tensor fused = ref;
        for (double& v : fused.data) v += 0.01;
        const Tensor d(2, 1, 3, 3, 1.0);
        const GeneratorLoss loss = generator_loss(d, fused, ref, 1.0, 100.0);
        CHECK(loss.total == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(loss.adv == 0.0);
    }
    SUBCASE("l1 gradient is beta*sign/n with sign(0) = 0") {
        Tensor fused = ref;
        fused.data[0] += 0.2;   // fused above ref -> positive gradient
        fused.data[1] -= 0.2;   // below -> negative
        // fused.data[2] untouched -> zero
        const Tensor d(2, 1, 3, 3, 1.0);
        const GeneratorLoss loss = generator_loss(d, fused, ref, 1.0, 100.0);
        const double unit = 100.0 / static_cast<double>(ref.size());
        CHECK(loss.fused_grad.data[0] == doctest::Approx(unit).epsilon(1e-12));
        CHECK(loss.fused_grad.data[1] == doctest::Approx(-unit).epsilon(1e-12));
        CHECK(loss.fused_grad.data[2] == 0.0);
    }
}

TEST_CASE("discriminator loss closed forms") {
    SUBCASE("0.5 everywhere gives 2 log 2") {
        const Tensor half(1, 1, 4, 4, 0.5);
        const DiscriminatorLoss loss = discriminator_loss(half, half);
        CHECK(loss.total == doctest::Approx(1.3863).epsilon(1e-4));
    }
    SUBCASE("confident and correct maps give ~0") {
        const Tensor real(1, 1, 4, 4, 1.0 - 1e-9);
        const Tensor fake(1, 1, 4, 4, 1e-9);
        const DiscriminatorLoss loss = discriminator_loss(real, fake);
        CHECK(loss.total == doctest::Approx(0.0).epsilon(1e-6));
    }
    SUBCASE("misclassified real dominates the loss") {
        const Tensor real(1, 1, 4, 4, 1e-6);
        const Tensor fake(1, 1, 4, 4, 0.5);
        const DiscriminatorLoss loss = discriminator_loss(real, fake);
        CHECK(loss.total >= std::log(1e6));
    }
}

TEST_CASE("printed-form objective is diagnostic only and matches its closed form") {
    const Tensor half(1, 1, 2, 2, 0.5);
    // 1 - mean(log d_fake) + mean(log d_real) = 1 - log 0.5 + log 0.5 = 1
    CHECK(printed_discriminator_objective(half, half) == doctest::Approx(1.0).epsilon(1e-12));
    // minimizing it would reward d_real -> 0: value decreases as d_real drops
    const Tensor low(1, 1, 2, 2, 0.01);
    CHECK(printed_discriminator_objective(low, half) < printed_discriminator_objective(half, half));
}

TEST_CASE("alternation: a D update never touches generator parameters and vice versa") {
    const auto dataset = desk_dataset(4, 50);
    TrainConfig cfg = TrainConfig::desk();
    cfg.gen_width = 2;
    cfg.disc_width = 4;
    cfg.steps = 0;
    cfg.seed = 51;

    // reproduce one alternating step by hand around the public pieces
    const ComputeGraph gen = build_generator({GeneratorVariant::psgan, 4, cfg.gen_width, false});
    const ComputeGraph disc = build_discriminator(4, cfg.disc_width);
    ParameterStore gstore, dstore;
    Rng gr(1), dr(2);
    gen.init_params(gstore, gr);
    disc.init_params(dstore, dr);

    const auto& s = dataset[0];
    const Tensor ms_up = image_to_tensor(raster::upsample(s.ms, 4, raster::ResampleFilter::bicubic()));
    const Tensor pan = image_to_tensor(s.pan);
    const Tensor ref = image_to_tensor(s.reference);
    const neural::TensorMap gin = {{"ms_up", ms_up}, {"pan", pan}};

    const auto g_tape = neural::forward(gen, gstore, gin, true);
    const Tensor fused = neural::outputs_of(gen, g_tape).at("out");

    const std::uint64_t g_hash_before = gstore.content_hash();
    // D phase
    const auto d_real_tape =
        neural::forward(disc, dstore, {{"pair", concat_channels(ms_up, ref)}}, true);
    const auto d_fake_tape =
        neural::forward(disc, dstore, {{"pair", concat_channels(ms_up, fused)}}, true);
    const auto dloss = discriminator_loss(neural::outputs_of(disc, d_real_tape).at("prob"),
                                          neural::outputs_of(disc, d_fake_tape).at("prob"));
    auto d_grads = neural::backward(disc, dstore, d_real_tape, {{"prob", dloss.real_grad}});
    const auto d_grads_fake =
        neural::backward(disc, dstore, d_fake_tape, {{"prob", dloss.fake_grad}});
    for (const auto& [name, g] : d_grads_fake) {
        auto it = d_grads.find(name);
        if (it == d_grads.end())
            d_grads[name] = g;
        else
            for (std::size_t i = 0; i < g.size(); ++i) it->second.data[i] += g.data[i];
    }
    neural::adam_step(dstore, d_grads, cfg.adam);
    CHECK(gstore.content_hash() == g_hash_before);  // D step left G alone

    // G phase: discriminator gradients are computed but only G gets stepped
    const std::uint64_t d_hash_before = dstore.content_hash();
    const auto d_tape2 =
        neural::forward(disc, dstore, {{"pair", concat_channels(ms_up, fused)}}, true);
    const auto gloss = generator_loss(neural::outputs_of(disc, d_tape2).at("prob"), fused, ref,
                                      cfg.alpha, cfg.beta);
    neural::TensorMap d_input_grads;
    neural::backward(disc, dstore, d_tape2, {{"prob", gloss.d_grad}}, &d_input_grads);
    Tensor fused_grad(fused.n, fused.c, fused.h, fused.w);
    const Tensor& pair_grad = d_input_grads.at("pair");
    for (int in = 0; in < fused.n; ++in)
        for (int c = 0; c < fused.c; ++c)
            std::copy_n(pair_grad.plane_ptr(in, 4 + c), fused.plane(),
                        fused_grad.plane_ptr(in, c));
    for (std::size_t i = 0; i < fused_grad.size(); ++i)
        fused_grad.data[i] += gloss.fused_grad.data[i];
    const auto g_grads = neural::backward(gen, gstore, g_tape, {{"out", fused_grad}});
    neural::adam_step(gstore, g_grads, cfg.adam);
    CHECK(dstore.content_hash() == d_hash_before);  // G step left D alone
    CHECK(gstore.content_hash() != g_hash_before);
}

TEST_CASE("train: steps=0 returns the initialization and an empty history") {
    const auto dataset = desk_dataset(2, 60);
    TrainConfig cfg = TrainConfig::desk();
    cfg.gen_width = 2;
    cfg.disc_width = 4;
    cfg.steps = 0;
    cfg.seed = 61;
    const TrainResult result = train(dataset, GeneratorVariant::psgan, cfg);
    CHECK(result.history.steps.empty());

    ParameterStore fresh;
    Rng rng = Rng::keyed(cfg.seed, 0x6E01);
    build_generator({GeneratorVariant::psgan, 4, cfg.gen_width, false}).init_params(fresh, rng);
    CHECK(result.generator.content_hash() == fresh.content_hash());
}

TEST_CASE("train: fixed seed reproduces histories and weights bitwise") {
    const auto dataset = desk_dataset(4, 70);
    TrainConfig cfg = TrainConfig::desk();
    cfg.gen_width = 2;
    cfg.disc_width = 4;
    cfg.steps = 4;
    cfg.seed = 71;

    const TrainResult a = train(dataset, GeneratorVariant::psgan, cfg);
    const TrainResult b = train(dataset, GeneratorVariant::psgan, cfg);
    REQUIRE(a.history.steps.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(a.history.steps[i].g_loss == b.history.steps[i].g_loss);
        CHECK(a.history.steps[i].d_loss == b.history.steps[i].d_loss);
    }
    CHECK(a.generator.content_hash() == b.generator.content_hash());
    CHECK(a.discriminator.content_hash() == b.discriminator.content_hash());

    TrainConfig other = cfg;
    other.seed = 72;
    const TrainResult c = train(dataset, GeneratorVariant::psgan, other);
    CHECK(a.generator.content_hash() != c.generator.content_hash());
}

TEST_CASE("train with batchnorm stays finite over a short run") {
    const auto dataset = desk_dataset(4, 80);
    TrainConfig cfg = TrainConfig::desk();
    cfg.gen_width = 2;
    cfg.disc_width = 4;
    cfg.steps = 3;
    cfg.seed = 81;
    cfg.use_bn = true;
    const TrainResult result = train(dataset, GeneratorVariant::psgan, cfg);
    for (const auto& s : result.history.steps) {
        CHECK(std::isfinite(s.g_loss));
        CHECK(std::isfinite(s.d_loss));
    }
}

TEST_CASE("end-to-end finite differences of L_G through the full PSGAN at 8x8 scale") {
    const ComputeGraph gen = build_generator({GeneratorVariant::psgan, 4, 2, false});
    const ComputeGraph disc = build_discriminator(4, 2);
    ParameterStore gstore, dstore;
    Rng gr(90), dr(91);
    gen.init_params(gstore, gr);
    disc.init_params(dstore, dr);

    const Tensor ms_up = random_tensor(1, 4, 8, 8, 92);
    const Tensor pan = random_tensor(1, 1, 8, 8, 93);
    const Tensor ref = random_tensor(1, 4, 8, 8, 94);
    const neural::TensorMap gin = {{"ms_up", ms_up}, {"pan", pan}};
    const double alpha = 1.0, beta = 100.0;

    struct Probe {
        double loss;
        std::vector<std::uint8_t> signs;
    };
    const auto probe = [&]() -> Probe {
        const auto g_tape = neural::forward(gen, gstore, gin, false);
        const Tensor fused = neural::outputs_of(gen, g_tape).at("out");
        const auto d_tape =
            neural::forward(disc, dstore, {{"pair", concat_channels(ms_up, fused)}}, false);
        const Tensor d_fake = neural::outputs_of(disc, d_tape).at("prob");
        Probe p;
        p.loss = generator_loss(d_fake, fused, ref, alpha, beta).total;
        const auto collect = [&p](const ComputeGraph& g, const neural::Tape& tape) {
            const auto& nodes = g.nodes();
            for (std::size_t id = 0; id < nodes.size(); ++id) {
                const auto kind = nodes[id].spec.kind;
                if (kind != neural::LayerKind::relu && kind != neural::LayerKind::leaky_relu)
                    continue;
                const Tensor& x = tape.activations[static_cast<std::size_t>(nodes[id].inputs[0])];
                for (double v : x.data) p.signs.push_back(v > 0.0 ? 1 : 0);
            }
        };
        collect(gen, g_tape);
        collect(disc, d_tape);
        for (std::size_t i = 0; i < fused.size(); ++i)
            p.signs.push_back(ref.data[i] - fused.data[i] > 0.0 ? 1 : 0);  // l1 kink
        return p;
    };

    // analytic gradient through D into G, as the training loop does
    const auto g_tape = neural::forward(gen, gstore, gin, false);
    const Tensor fused = neural::outputs_of(gen, g_tape).at("out");
    const auto d_tape =
        neural::forward(disc, dstore, {{"pair", concat_channels(ms_up, fused)}}, false);
    const auto gloss =
        generator_loss(neural::outputs_of(disc, d_tape).at("prob"), fused, ref, alpha, beta);
    neural::TensorMap d_input_grads;
    neural::backward(disc, dstore, d_tape, {{"prob", gloss.d_grad}}, &d_input_grads);
    Tensor fused_grad(fused.n, fused.c, fused.h, fused.w);
    const Tensor& pair_grad = d_input_grads.at("pair");
    for (int c = 0; c < 4; ++c)
        std::copy_n(pair_grad.plane_ptr(0, 4 + c), fused.plane(), fused_grad.plane_ptr(0, c));
    for (std::size_t i = 0; i < fused_grad.size(); ++i)
        fused_grad.data[i] += gloss.fused_grad.data[i];
    const auto analytic = neural::backward(gen, gstore, g_tape, {{"out", fused_grad}});

    // the loss carries the beta=100 term, so |L| ~ 45 and the central
    // difference has ~|L|*eps_mach/fd_eps of irreducible round-off; the
    // absolute term below admits exactly that, nothing more
    const double fd_eps = 1e-5;
    const double atol = 2e-10 * std::max(1.0, std::abs(probe().loss));
    double max_excess = 0.0;
    std::size_t checked = 0;
    for (const std::string& name : gstore.names()) {
        auto& p = gstore.at(name);
        const auto it = analytic.find(name);
        for (std::size_t i = 0; i < p.value.size(); ++i) {
            const double v0 = p.value.data[i];
            p.value.data[i] = v0 + fd_eps;
            const Probe plus = probe();
            p.value.data[i] = v0 - fd_eps;
            const Probe minus = probe();
            p.value.data[i] = v0;
            if (plus.signs != minus.signs) continue;
            const double fd = (plus.loss - minus.loss) / (2.0 * fd_eps);
            const double an = it != analytic.end() ? it->second.data[i] : 0.0;
            const double tol = 1e-6 * std::max(std::abs(an), std::abs(fd)) + atol;
            max_excess = std::max(max_excess, std::abs(an - fd) / tol);
            ++checked;
        }
    }
    CHECK(checked > 1000);  // the filter must not hollow the check out
    CHECK(max_excess <= 1.0);
}

TEST_CASE("weights round-trip bit-exactly through PSGW") {
    const ComputeGraph g = build_generator({GeneratorVariant::fu_psgan, 4, 2, false});
    ParameterStore store;
    Rng rng(100);
    g.init_params(store, rng);

    const auto path = std::filesystem::temp_directory_path() / "weights_roundtrip.psgw";
    save_weights(store, GeneratorVariant::fu_psgan, 4, path);
    const GeneratorWeights loaded = load_weights(path);
    CHECK(loaded.variant == GeneratorVariant::fu_psgan);
    CHECK(loaded.bands == 4);
    REQUIRE(loaded.store.names() == store.names());
    for (const auto& name : store.names())
        CHECK(loaded.store.at(name).value.data == store.at(name).value.data);
    std::filesystem::remove(path);
}

TEST_CASE("weights header understands an empty store") {
    const auto path = std::filesystem::temp_directory_path() / "weights_empty.psgw";
    save_weights(ParameterStore{}, GeneratorVariant::psgan, 4, path);
    CHECK(std::filesystem::file_size(path) == 14);  // magic+version+variant+bands+count
    const GeneratorWeights loaded = load_weights(path);
    CHECK(loaded.store.names().empty());
    std::filesystem::remove(path);
}

TEST_CASE("loading weights into the wrong variant graph is a VariantMismatch") {
    const ComputeGraph g = build_generator({GeneratorVariant::psgan, 4, 2, false});
    ParameterStore store;
    Rng rng(101);
    g.init_params(store, rng);
    const auto path = std::filesystem::temp_directory_path() / "weights_variant.psgw";
    save_weights(store, GeneratorVariant::psgan, 4, path);
    const GeneratorWeights loaded = load_weights(path);

    const MultiBandImage ms(8, 8, 4, 0.5);
    const MultiBandImage pan(32, 32, 1, 0.5);
    try {
        pansharpen_nn(ms, pan, loaded, GeneratorVariant::st_psgan);
        FAIL("expected VariantMismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::VariantMismatch);
    }
    std::filesystem::remove(path);
}

TEST_CASE("bad magic in a weights file is rejected") {
    const auto path = std::filesystem::temp_directory_path() / "weights_bad.psgw";
    {
        std::ofstream out(path, std::ios::binary);
        out.write("NOPE\x01\x00", 6);
    }
    CHECK_THROWS_AS(load_weights(path), Error);
    std::filesystem::remove(path);
}

TEST_CASE("pansharpen_nn: geometry, non-negativity and tiling consistency") {
    const ComputeGraph g = build_generator({GeneratorVariant::psgan, 4, 4, false});
    GeneratorWeights weights;
    weights.variant = GeneratorVariant::psgan;
    weights.bands = 4;
    Rng rng(110);
    g.init_params(weights.store, rng);

    SUBCASE("64x64x4 + 256 pan gives 256x256x4, non-negative") {
        const auto scene = protocol::synth_scene(256, 4, 111);
        const auto sample = protocol::sample_from_scene(scene, 4);
        const MultiBandImage out =
            pansharpen_nn(sample.ms, sample.pan, weights, GeneratorVariant::psgan);
        CHECK(out.width == 256);
        CHECK(out.height == 256);
        CHECK(out.bands == 4);
        for (double v : out.samples) CHECK(v >= 0.0);
    }
    SUBCASE("tiled 512 run equals the single-shot run away from seams") {
        const auto scene = protocol::synth_scene(512, 4, 112);
        const auto sample = protocol::sample_from_scene(scene, 4);
        const MultiBandImage tiled =
            pansharpen_nn(sample.ms, sample.pan, weights, GeneratorVariant::psgan);

        // single shot: run the graph directly on the full scene
        const MultiBandImage ms_up =
            raster::upsample(sample.ms, 4, raster::ResampleFilter::bicubic());
        neural::TensorMap inputs = {{"ms_up", image_to_tensor(ms_up)},
                                    {"pan", image_to_tensor(sample.pan)}};
        const Tensor single =
            neural::outputs_of(g, neural::forward(g, weights.store, inputs)).at("out");

        // tile edges sit at multiples of 224/256; compare interiors >64 px away
        const auto far_from_seams = [](int v) {
            for (int edge : {224, 256, 480}) {
                if (std::abs(v - edge) <= 64) return false;
            }
            return true;
        };
        double max_diff = 0.0;
        std::size_t compared = 0;
        for (int b = 0; b < 4; ++b)
            for (int y = 0; y < 512; ++y) {
                if (!far_from_seams(y)) continue;
                for (int x = 0; x < 512; ++x) {
                    if (!far_from_seams(x)) continue;
                    max_diff = std::max(max_diff,
                                        std::abs(tiled.at(x, y, b) - single.at(0, b, y, x)));
                    ++compared;
                }
            }
        CHECK(compared > 100000);
        CHECK(max_diff <= 1e-6);
    }
}

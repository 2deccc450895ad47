#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "pansharp/fusion.hpp"
#include "pansharp/metrics.hpp"
#include "pansharp/models.hpp"
#include "pansharp/protocol.hpp"
#include "pansharp/raster.hpp"
#include "pansharp/rng.hpp"

namespace ps = pansharp;

namespace {

ps::raster::ResampleFilter parse_filter(const std::string& spec, int ratio) {
    if (spec == "box") return ps::raster::ResampleFilter::box();
    if (spec == "bicubic") return ps::raster::ResampleFilter::bicubic();
    if (spec == "gaussian") return ps::raster::ResampleFilter::wald(ratio);
    if (spec.rfind("gaussian:", 0) == 0)
        return ps::raster::ResampleFilter::gaussian(std::stod(spec.substr(9)));
    throw CLI::ValidationError("--filter", "expected box|bicubic|gaussian|gaussian:SIGMA");
}

ps::MultiBandImage load_normalized(const std::string& path) {
    return ps::raster::normalize_to_unit(ps::raster::load_msrf(path));
}

int infer_ratio(const ps::MultiBandImage& ms, const ps::MultiBandImage& pan) {
    if (ms.width < 1 || pan.width % ms.width != 0 || pan.height % ms.height != 0 ||
        pan.width / ms.width != pan.height / ms.height)
        ps::fail(ps::ErrorCode::DimensionMismatch,
                 "pan dims must be an integer multiple of ms dims");
    return pan.width / ms.width;
}

struct SynthArgs {
    int count = 1;
    int size = 64;
    int bands = 4;
    std::uint64_t seed = 0;
    std::string out_dir;
};

int run_synth(const SynthArgs& a) {
    std::vector<ps::protocol::TrainingSample> samples;
    std::vector<ps::protocol::ManifestRow> manifest;
    for (int i = 0; i < a.count; ++i) {
        const std::uint64_t scene_seed =
            ps::Rng::keyed(a.seed, static_cast<std::uint64_t>(i)).next_u64();
        const auto scene = ps::protocol::synth_scene(a.size, a.bands, scene_seed);
        samples.push_back(ps::protocol::sample_from_scene(scene, 4));
        manifest.push_back({i, scene_seed, 0, 0});
    }
    ps::protocol::write_dataset(a.out_dir, samples, manifest);
    std::cerr << "wrote " << samples.size() << " samples to " << a.out_dir << "\n";
    return 0;
}

struct DegradeArgs {
    std::string ms, pan, out_dir;
    int ratio = 4;
    std::string filter = "gaussian";
};

int run_degrade(const DegradeArgs& a) {
    const auto ms = load_normalized(a.ms);
    const auto pan = load_normalized(a.pan);
    const auto sample =
        ps::protocol::wald_degrade(ms, pan, a.ratio, parse_filter(a.filter, a.ratio));
    ps::protocol::write_dataset(a.out_dir, {sample}, {{0, 0, 0, 0}});
    std::cerr << "wrote degraded sample to " << a.out_dir << "\n";
    return 0;
}

struct FuseArgs {
    std::string method, ms, pan, out;
    std::string weights;
    std::string variant;
};

int run_fuse(const FuseArgs& a) {
    const auto ms_raw = ps::raster::load_msrf(a.ms);
    const auto ms = ps::raster::normalize_to_unit(ms_raw);
    const auto pan = load_normalized(a.pan);
    const int ratio = infer_ratio(ms, pan);

    ps::MultiBandImage fused;
    if (a.method == "naive") {
        fused = ps::fusion::fuse_naive(ms, ratio);
    } else if (!a.weights.empty()) {
        const auto weights = ps::models::load_weights(a.weights);
        const auto variant =
            a.variant.empty() ? weights.variant : ps::models::parse_variant(a.variant);
        if (!a.method.empty() && a.method != "nn" &&
            ps::models::parse_variant(a.method) != variant)
            ps::fail(ps::ErrorCode::VariantMismatch,
                     "--method " + a.method + " conflicts with weights variant");
        fused = ps::models::pansharpen_nn(ms, pan, weights, variant);
    } else {
        ps::fusion::FusionMethod method;
        method.kind = ps::fusion::parse_method(a.method);
        const auto ms_up = ps::raster::upsample(ms, ratio, ps::raster::ResampleFilter::bicubic());
        ps::fusion::FuseStats stats;
        fused = ps::fusion::fuse(method, ms_up, pan, &stats);
        if (stats.clamped_denominators > 0)
            std::cerr << "warning: " << stats.clamped_denominators
                      << " denominators clamped to the 1e-8 floor\n";
    }

    ps::raster::save_msrf(ps::raster::denormalize(fused, ms_raw.dtype, ms_raw.range), a.out);
    return 0;
}

struct TrainArgs {
    std::string variant, data_dir, out;
    std::string profile = "desk";
    int steps = 0;
    std::optional<int> batch;
    std::optional<int> patch;
    std::uint64_t seed = 0;
    std::optional<double> alpha, beta, lr;
    bool use_bn = false;
    bool log_printed_dloss = false;
};

int run_train(const TrainArgs& a) {
    ps::models::TrainConfig cfg = a.profile == "paper" ? ps::models::TrainConfig::paper()
                                                       : ps::models::TrainConfig::desk();
    cfg.steps = a.steps;
    cfg.seed = a.seed;
    cfg.use_bn = a.use_bn;
    if (a.batch) cfg.batch = *a.batch;
    if (a.patch) cfg.ms_patch = *a.patch;
    if (a.alpha) cfg.alpha = *a.alpha;
    if (a.beta) cfg.beta = *a.beta;
    if (a.lr) cfg.adam.lr = *a.lr;

    const auto variant = ps::models::parse_variant(a.variant);
    auto raw = ps::protocol::read_dataset(a.data_dir);

    std::vector<ps::protocol::TrainingSample> patches;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        ps::protocol::TrainingSample sample;
        sample.ratio = raw[i].ratio;
        sample.ms = ps::raster::normalize_to_unit(raw[i].ms);
        sample.pan = ps::raster::normalize_to_unit(raw[i].pan);
        sample.reference = ps::raster::normalize_to_unit(raw[i].reference);
        if (sample.ms.width == cfg.ms_patch && sample.ms.height == cfg.ms_patch) {
            patches.push_back(std::move(sample));
            continue;
        }
        ps::protocol::SamplerConfig sampler;
        sampler.ms_patch = cfg.ms_patch;
        sampler.count = std::max(1, (sample.ms.width / cfg.ms_patch) *
                                        (sample.ms.height / cfg.ms_patch));
        sampler.seed = ps::Rng::keyed(cfg.seed, 0xCB0B + i).next_u64();
        for (auto& p : ps::protocol::extract_patches(sample, sampler))
            patches.push_back(std::move(p));
    }

    const auto result = ps::models::train(
        patches, variant, cfg, [&](int step, const ps::models::StepStats& s) {
            if (step % 25 == 0 || step + 1 == cfg.steps)
                std::cerr << "step " << step << "  g_loss " << s.g_loss << "  g_l1 " << s.g_l1
                          << "  d_loss " << s.d_loss << "  d_real " << s.d_real_mean << "  d_fake "
                          << s.d_fake_mean << "\n";
        });

    ps::models::save_weights(result.generator, variant, patches[0].ms.bands, a.out);
    std::cerr << "wrote weights to " << a.out << "\n";
    return 0;
}

struct EvalArgs {
    std::string fused, ref, ms, pan;
    int ratio = 4;
    std::string q_block = "32";
    std::string format = "csv";
    std::string label;
};

int run_eval(const EvalArgs& a) {
    const auto fused = load_normalized(a.fused);
    std::optional<ps::MultiBandImage> ref, ms, pan;
    if (!a.ref.empty()) ref = load_normalized(a.ref);
    if (!a.ms.empty()) ms = load_normalized(a.ms);
    if (!a.pan.empty()) pan = load_normalized(a.pan);

    ps::metrics::EvalConfig cfg;
    cfg.ratio = a.ratio;
    cfg.qnr_window = a.q_block == "global" ? ps::metrics::QConfig::global()
                                           : ps::metrics::QConfig::blocks(std::stoi(a.q_block));

    const std::string label =
        a.label.empty() ? std::filesystem::path(a.fused).stem().string() : a.label;
    const auto report = ps::metrics::evaluate(fused, ref ? &*ref : nullptr, ms ? &*ms : nullptr,
                                              pan ? &*pan : nullptr, cfg, label);

    for (const auto& note : report.notes) std::cerr << "note: " << note << "\n";

    if (a.format == "csv") {
        std::cout << ps::metrics::to_csv({report});
    } else if (a.format == "md") {
        std::cout << ps::metrics::to_markdown({report});
    } else {
        nlohmann::json j;
        j["method"] = report.method;
        const auto put = [&j](const char* key, const std::optional<double>& v) {
            if (v) j[key] = *v;
        };
        put("SAM", report.sam);
        put("CC", report.cc);
        put("sCC", report.scc);
        put("ERGAS", report.ergas);
        put("Q4", report.q4);
        put("D_lambda", report.d_lambda);
        put("D_s", report.d_s);
        put("QNR", report.qnr);
        if (!report.notes.empty()) j["notes"] = report.notes;
        std::cout << j.dump(2) << "\n";
    }
    return 0;
}

struct ReportArgs {
    std::vector<std::string> inputs;
    std::string format = "md";
};

std::optional<double> parse_cell(const std::string& cell) {
    if (cell.empty()) return std::nullopt;
    return std::stod(cell);
}

int run_report(const ReportArgs& a) {
    std::vector<ps::metrics::MetricReport> reports;
    for (const auto& path : a.inputs) {
        std::ifstream in(path);
        if (!in) ps::fail(ps::ErrorCode::IoFailure, "cannot open " + path);
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            cells.resize(9);
            ps::metrics::MetricReport r;
            r.method = cells[0];
            r.sam = parse_cell(cells[1]);
            r.cc = parse_cell(cells[2]);
            r.scc = parse_cell(cells[3]);
            r.ergas = parse_cell(cells[4]);
            r.q4 = parse_cell(cells[5]);
            r.d_lambda = parse_cell(cells[6]);
            r.d_s = parse_cell(cells[7]);
            r.qnr = parse_cell(cells[8]);
            reports.push_back(std::move(r));
        }
    }
    std::cout << (a.format == "csv" ? ps::metrics::to_csv(reports)
                                    : ps::metrics::to_markdown(reports));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pansharp: pan-sharpening toolkit (fusion, GAN training, quality metrics)"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic Wald-protocol dataset");
    synth_cmd->add_option("--count", synth.count, "number of samples")->required();
    synth_cmd->add_option("--size", synth.size, "scene side in PAN pixels (default 64)");
    synth_cmd->add_option("--bands", synth.bands, "MS band count (default 4)");
    synth_cmd->add_option("--seed", synth.seed, "RNG seed");
    synth_cmd->add_option("--out-dir", synth.out_dir, "output dataset directory")->required();

    DegradeArgs degrade;
    auto* degrade_cmd = app.add_subcommand("degrade", "Wald-degrade an (MS, PAN) pair");
    degrade_cmd->add_option("--ms", degrade.ms, "MS image (MSRF)")->required();
    degrade_cmd->add_option("--pan", degrade.pan, "PAN image (MSRF)")->required();
    degrade_cmd->add_option("--ratio", degrade.ratio, "resolution ratio (default 4)");
    degrade_cmd->add_option("--filter", degrade.filter, "box|bicubic|gaussian|gaussian:SIGMA");
    degrade_cmd->add_option("--out-dir", degrade.out_dir, "output dataset directory")->required();

    FuseArgs fuse;
    auto* fuse_cmd = app.add_subcommand("fuse", "fuse an (MS, PAN) pair");
    fuse_cmd->add_option("--method", fuse.method,
                         "ihs|brovey|hpf|sfim|gs|lmvm|lmm|naive or a GAN variant with --weights")
        ->required();
    fuse_cmd->add_option("--ms", fuse.ms, "LR MS image (MSRF)")->required();
    fuse_cmd->add_option("--pan", fuse.pan, "PAN image (MSRF)")->required();
    fuse_cmd->add_option("--weights", fuse.weights, "PSGW weights for GAN fusion");
    fuse_cmd->add_option("--variant", fuse.variant, "psgan|fu-psgan|st-psgan");
    fuse_cmd->add_option("--out", fuse.out, "output MSRF path")->required();

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "train a PSGAN variant");
    train_cmd->add_option("--variant", train.variant, "psgan|fu-psgan|st-psgan")->required();
    train_cmd->add_option("--data-dir", train.data_dir, "dataset directory")->required();
    train_cmd->add_option("--steps", train.steps, "training steps")->required();
    train_cmd->add_option("--batch", train.batch, "mini-batch size");
    train_cmd->add_option("--seed", train.seed, "RNG seed");
    train_cmd->add_option("--alpha", train.alpha, "adversarial weight (default 1)");
    train_cmd->add_option("--beta", train.beta, "l1 weight (default 100)");
    train_cmd->add_option("--lr", train.lr, "Adam learning rate (default 2e-4)");
    train_cmd->add_flag("--use-bn", train.use_bn, "batchnorm after each conv block");
    train_cmd->add_option("--patch", train.patch, "MS patch side");
    train_cmd->add_option("--profile", train.profile, "desk|paper (default desk)")
        ->check(CLI::IsMember({"desk", "paper"}));
    train_cmd->add_option("--out", train.out, "output PSGW weights path")->required();

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "quality metrics for a fused image");
    eval_cmd->add_option("--fused", eval.fused, "fused image (MSRF)")->required();
    eval_cmd->add_option("--ref", eval.ref, "reference HR MS (enables reference metrics)");
    eval_cmd->add_option("--ms", eval.ms, "LR MS (enables no-reference metrics)");
    eval_cmd->add_option("--pan", eval.pan, "PAN (enables no-reference metrics)");
    eval_cmd->add_option("--ratio", eval.ratio, "resolution ratio (default 4)");
    eval_cmd->add_option("--q-block", eval.q_block, "Q window for D_lambda/D_s: power of two or 'global'");
    eval_cmd->add_option("--format", eval.format, "csv|md|json")
        ->check(CLI::IsMember({"csv", "md", "json"}));
    eval_cmd->add_option("--label", eval.label, "method label (default: fused file stem)");

    ReportArgs report;
    auto* report_cmd = app.add_subcommand("report", "merge eval CSVs into one table");
    report_cmd->add_option("--inputs", report.inputs, "eval CSV files")->required();
    report_cmd->add_option("--format", report.format, "csv|md (default md)")
        ->check(CLI::IsMember({"csv", "md"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (synth_cmd->parsed()) return run_synth(synth);
        if (degrade_cmd->parsed()) return run_degrade(degrade);
        if (fuse_cmd->parsed()) return run_fuse(fuse);
        if (train_cmd->parsed()) return run_train(train);
        if (eval_cmd->parsed()) return run_eval(eval);
        if (report_cmd->parsed()) return run_report(report);
    } catch (const CLI::ValidationError& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const ps::Error& e) {
        if (e.code() == ps::ErrorCode::BadArgument) {
            std::cerr << "usage error: " << e.what() << "\n";
            return 1;
        }
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

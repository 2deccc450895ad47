#include <doctest.h>

#include <cmath>

#include "pansharp/metrics.hpp"
#include "pansharp/raster.hpp"
#include "pansharp/rng.hpp"

#include "oracles.hpp"

using namespace pansharp;
using metrics::QConfig;

namespace {

MultiBandImage random_image(int w, int h, int b, std::uint64_t seed, double lo = 0.1,
                            double hi = 0.9) {
    Rng rng(seed);
    MultiBandImage img(w, h, b);
    for (double& v : img.samples) v = rng.uniform(lo, hi);
    return img;
}

MultiBandImage single_pixel(std::initializer_list<double> spectrum) {
    MultiBandImage img(1, 1, static_cast<int>(spectrum.size()));
    int b = 0;
    for (double v : spectrum) img.at(0, 0, b++) = v;
    return img;
}

}  // namespace

TEST_CASE("identity inputs hit the ideal values") {
    const MultiBandImage img = random_image(8, 8, 4, 1);
    CHECK(metrics::sam(img, img) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(metrics::cc(img, img) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(metrics::scc(img, img) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(metrics::ergas(img, img, 4) == 0.0);
    CHECK(metrics::q4(img, img) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(metrics::qnr(0.0, 0.0) == 1.0);
}

TEST_CASE("sam closed forms") {
    SUBCASE("orthogonal unit vectors give 90 degrees") {
        const MultiBandImage a = single_pixel({1, 0, 0, 0});
        const MultiBandImage b = single_pixel({0, 1, 0, 0});
        CHECK(metrics::sam(a, b) == doctest::Approx(90.0).epsilon(1e-12));
    }
    SUBCASE("(1,1,1,1) vs (1,1,1,0) gives 30 degrees") {
        const MultiBandImage a = single_pixel({1, 1, 1, 1});
        const MultiBandImage b = single_pixel({1, 1, 1, 0});
        CHECK(metrics::sam(a, b) == doctest::Approx(30.0).epsilon(1e-12));
    }
    SUBCASE("zero-norm pixels are skipped and counted") {
        MultiBandImage a(2, 1, 2);
        MultiBandImage b(2, 1, 2);
        a.at(0, 0, 0) = 1.0;
        b.at(0, 0, 0) = 1.0;
        // pixel 1 is all-zero in both
        std::size_t skipped = 0;
        CHECK(metrics::sam(a, b, &skipped) == doctest::Approx(0.0));
        CHECK(skipped == 1);
    }
    SUBCASE("invariant to per-pixel positive scaling") {
        const MultiBandImage a = random_image(6, 6, 4, 2);
        const MultiBandImage b = random_image(6, 6, 4, 3);
        MultiBandImage scaled = a;
        Rng rng(4);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) {
                const double s = rng.uniform(0.5, 4.0);
                for (int band = 0; band < 4; ++band) scaled.at(x, y, band) *= s;
            }
        CHECK(metrics::sam(scaled, b) == doctest::Approx(metrics::sam(a, b)).epsilon(1e-10));
    }
}

TEST_CASE("cc closed forms") {
    SUBCASE("perfect anticorrelation") {
        MultiBandImage a(4, 1, 1), b(4, 1, 1);
        for (int i = 0; i < 4; ++i) {
            a.at(i, 0, 0) = i;
            b.at(i, 0, 0) = -static_cast<double>(i) + 10.0;
        }
        CHECK(metrics::cc(a, b) == doctest::Approx(-1.0).epsilon(1e-12));
    }
    SUBCASE("X=(1,2,3,4), Y=(2,4,5,9) gives 11/sqrt(130)") {
        MultiBandImage a(4, 1, 1), b(4, 1, 1);
        const double xs[] = {1, 2, 3, 4}, ys[] = {2, 4, 5, 9};
        for (int i = 0; i < 4; ++i) {
            a.at(i, 0, 0) = xs[i];
            b.at(i, 0, 0) = ys[i];
        }
        CHECK(metrics::cc(a, b) == doctest::Approx(11.0 / std::sqrt(130.0)).epsilon(1e-12));
        CHECK(metrics::cc(a, b) == doctest::Approx(0.96476382).epsilon(1e-6));
    }
    SUBCASE("invariant under positive affine maps") {
        const MultiBandImage a = random_image(6, 6, 3, 5);
        const MultiBandImage b = random_image(6, 6, 3, 6);
        MultiBandImage affine = a;
        for (double& v : affine.samples) v = 2.5 * v + 7.0;
        CHECK(metrics::cc(affine, b) == doctest::Approx(metrics::cc(a, b)).epsilon(1e-12));
    }
    SUBCASE("constant band throws DegenerateBand") {
        const MultiBandImage a(4, 4, 1, 3.0);
        const MultiBandImage b = random_image(4, 4, 1, 7);
        try {
            metrics::cc(a, b);
            FAIL("expected DegenerateBand");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::DegenerateBand);
        }
    }
}

TEST_CASE("scc and the Laplacian kernel") {
    SUBCASE("kernel coefficients match the printed filter exactly") {
        double sum = 0.0;
        for (int y = 0; y < 3; ++y)
            for (int x = 0; x < 3; ++x) {
                const double v = metrics::kLaplacianKernel[y][x];
                CHECK(v == ((x == 1 && y == 1) ? 8.0 : -1.0));
                sum += v;
            }
        CHECK(sum == 0.0);
    }
    SUBCASE("impulse response reproduces the kernel") {
        MultiBandImage img(5, 5, 1);
        img.at(2, 2, 0) = 1.0;
        const MultiBandImage hp = metrics::laplacian_highpass(img);
        for (int y = 1; y <= 3; ++y)
            for (int x = 1; x <= 3; ++x)
                CHECK(hp.at(x, y, 0) == metrics::kLaplacianKernel[y - 1][x - 1]);
        CHECK(hp.at(0, 0, 0) == 0.0);
    }
    SUBCASE("constant image degenerates (kernel sums to zero)") {
        const MultiBandImage img(6, 6, 2, 0.5);
        try {
            metrics::scc(img, img);
            FAIL("expected DegenerateHighPass");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::DegenerateHighPass);
        }
    }
}

TEST_CASE("ergas closed forms") {
    SUBCASE("ref (100,100), fused (110,90), ratio 4 gives 2.5") {
        MultiBandImage ref(2, 1, 1), fused(2, 1, 1);
        ref.at(0, 0, 0) = 100.0;
        ref.at(1, 0, 0) = 100.0;
        fused.at(0, 0, 0) = 110.0;
        fused.at(1, 0, 0) = 90.0;
        CHECK(metrics::ergas(fused, ref, 4) == doctest::Approx(2.5).epsilon(1e-12));
    }
    SUBCASE("constant ref scaled by 1.01 gives exactly 0.25") {
        const MultiBandImage ref(4, 4, 1, 100.0);
        MultiBandImage fused = ref;
        for (double& v : fused.samples) v *= 1.01;
        CHECK(metrics::ergas(fused, ref, 4) == doctest::Approx(0.25).epsilon(1e-9));
    }
    SUBCASE("strictly increases when one band's RMSE grows") {
        const MultiBandImage ref = random_image(6, 6, 3, 8);
        MultiBandImage fused = random_image(6, 6, 3, 9);
        const double base = metrics::ergas(fused, ref, 4);
        fused.at(2, 2, 1) += 0.5;  // push a pixel further from ref
        CHECK(metrics::ergas(fused, ref, 4) > base);
    }
    SUBCASE("zero-mean reference band is rejected") {
        MultiBandImage ref(2, 1, 1);
        ref.at(0, 0, 0) = 1.0;
        ref.at(1, 0, 0) = -1.0;
        const MultiBandImage fused(2, 1, 1, 0.5);
        try {
            metrics::ergas(fused, ref, 4);
            FAIL("expected ZeroMeanBand");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::ZeroMeanBand);
        }
    }
}

TEST_CASE("q_index closed forms") {
    SUBCASE("identical non-constant images give 1") {
        const MultiBandImage a = random_image(5, 5, 1, 10);
        CHECK(metrics::q_index(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("(1,2,3,4) vs (4,3,2,1) gives -1") {
        MultiBandImage a(4, 1, 1), b(4, 1, 1);
        for (int i = 0; i < 4; ++i) {
            a.at(i, 0, 0) = i + 1.0;
            b.at(i, 0, 0) = 4.0 - i;
        }
        CHECK(metrics::q_index(a, b) == doctest::Approx(-1.0).epsilon(1e-12));
    }
    SUBCASE("large constant offset costs luminance quality") {
        const MultiBandImage a = random_image(5, 5, 1, 11);
        MultiBandImage b = a;
        for (double& v : b.samples) v += 50.0;
        CHECK(metrics::q_index(a, b) < 1.0);
    }
    SUBCASE("|Q| bounded by 1 over a randomized sweep") {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const MultiBandImage a = random_image(8, 8, 1, 1000 + seed);
            const MultiBandImage b = random_image(8, 8, 1, 2000 + seed);
            CHECK(std::abs(metrics::q_index(a, b)) <= 1.0 + 1e-12);
        }
    }
    SUBCASE("blockwise matches the oracle") {
        const MultiBandImage a = random_image(16, 16, 1, 12);
        const MultiBandImage b = random_image(16, 16, 1, 13);
        const double got = metrics::q_index(a, b, QConfig::blocks(8));
        const double expect = oracle::q_plane(oracle::band_vec(a, 0), oracle::band_vec(b, 0), 16,
                                              16, 8);
        CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    }
    SUBCASE("block size must be a power of two >= 8") {
        CHECK_THROWS_AS(QConfig::blocks(12), Error);
        CHECK_THROWS_AS(QConfig::blocks(4), Error);
        CHECK_NOTHROW(QConfig::blocks(32));
    }
}

TEST_CASE("q4 closed forms and bounds") {
    SUBCASE("identical images give 1") {
        const MultiBandImage a = random_image(8, 8, 4, 14);
        CHECK(metrics::q4(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("|Q4| <= 1 on 200 random pairs") {
        for (std::uint64_t seed = 0; seed < 200; ++seed) {
            const MultiBandImage a = random_image(8, 8, 4, 3000 + seed);
            const MultiBandImage b = random_image(8, 8, 4, 4000 + seed);
            const double q = metrics::q4(a, b);
            CHECK(q <= 1.0 + 1e-12);
            CHECK(q >= 0.0);
        }
    }
    SUBCASE("reduces to q_index when three bands are zero and correlation is positive") {
        Rng rng(15);
        MultiBandImage a(6, 6, 4), b(6, 6, 4);
        for (std::size_t i = 0; i < a.plane(); ++i) {
            const double v = rng.uniform(0.2, 0.8);
            a.band(0)[i] = v;
            b.band(0)[i] = v + 0.05 * rng.uniform();  // strongly positively correlated
        }
        MultiBandImage a1(6, 6, 1), b1(6, 6, 1);
        std::copy(a.band(0).begin(), a.band(0).end(), a1.samples.begin());
        std::copy(b.band(0).begin(), b.band(0).end(), b1.samples.begin());
        CHECK(metrics::q4(a, b) == doctest::Approx(metrics::q_index(a1, b1)).epsilon(1e-12));
    }
    SUBCASE("wrong band count is rejected") {
        const MultiBandImage a = random_image(4, 4, 3, 16);
        try {
            metrics::q4(a, a);
            FAIL("expected NotFourBands");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NotFourBands);
        }
    }
}

TEST_CASE("d_lambda closed forms") {
    SUBCASE("identical band structure gives 0") {
        const MultiBandImage ms = random_image(4, 4, 4, 17);
        CHECK(metrics::d_lambda(ms, ms, QConfig::global()) == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("box upsample preserves global pairwise Q, so d_lambda is 0") {
        // the outer sqrt maps the ~1e-16 float noise in the Q differences to
        // ~1e-8, so 1e-7 is the honest bound here
        const MultiBandImage ms = random_image(4, 4, 4, 18);
        const MultiBandImage fused = raster::upsample(ms, 4, raster::ResampleFilter::box());
        CHECK(metrics::d_lambda(fused, ms, QConfig::global()) <= 1e-7);
    }
    SUBCASE("K=2 arithmetic: single off-diagonal |dQ| = 0.08 gives sqrt(0.08)") {
        // Eq. 12 with K=2: sqrt( (2/(2*1)) * 0.08 ) = sqrt(0.08) = 0.282842...
        CHECK(std::sqrt(2.0 / (2.0 * 1.0) * 0.08) == doctest::Approx(0.2828).epsilon(1e-3));
    }
}

TEST_CASE("d_s closed forms") {
    SUBCASE("fused band == pan and ms band == pan_lr gives 0") {
        const MultiBandImage pan = random_image(8, 8, 1, 19);
        const MultiBandImage pan_lr = random_image(2, 2, 1, 20);
        MultiBandImage fused(8, 8, 2), ms(2, 2, 2);
        for (int b = 0; b < 2; ++b) {
            std::copy(pan.samples.begin(), pan.samples.end(), fused.band(b).begin());
            std::copy(pan_lr.samples.begin(), pan_lr.samples.end(), ms.band(b).begin());
        }
        CHECK(metrics::d_s(fused, ms, pan, pan_lr, QConfig::global()) ==
              doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("K=1 arithmetic: |dQ| = 0.04 gives 0.2") {
        CHECK(std::sqrt(0.04 / 1.0) == doctest::Approx(0.2).epsilon(1e-12));
    }
    SUBCASE("invariant to band order") {
        const MultiBandImage fused = random_image(8, 8, 3, 21);
        const MultiBandImage ms = random_image(2, 2, 3, 22);
        const MultiBandImage pan = random_image(8, 8, 1, 23);
        const MultiBandImage pan_lr = random_image(2, 2, 1, 24);

        MultiBandImage fused_r(8, 8, 3), ms_r(2, 2, 3);
        for (int b = 0; b < 3; ++b) {
            std::copy(fused.band(b).begin(), fused.band(b).end(), fused_r.band(2 - b).begin());
            std::copy(ms.band(b).begin(), ms.band(b).end(), ms_r.band(2 - b).begin());
        }
        CHECK(metrics::d_s(fused, ms, pan, pan_lr, QConfig::global()) ==
              doctest::Approx(metrics::d_s(fused_r, ms_r, pan, pan_lr, QConfig::global()))
                  .epsilon(1e-12));
    }
}

TEST_CASE("qnr closed forms") {
    CHECK(metrics::qnr(0.0019, 0.0060) == doctest::Approx(0.9921).epsilon(5e-5));
    CHECK(metrics::qnr(1.0, 0.37) == 0.0);
    CHECK_THROWS_AS(metrics::qnr(-0.1, 0.0), Error);
    CHECK_THROWS_AS(metrics::qnr(0.0, 1.2), Error);
}

TEST_CASE("metrics match the brute-force oracle on random pairs") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const MultiBandImage fused = random_image(8, 8, 4, 7000 + seed);
        const MultiBandImage ref = random_image(8, 8, 4, 8000 + seed);
        const MultiBandImage ms = random_image(2, 2, 4, 9000 + seed);
        const MultiBandImage pan = random_image(8, 8, 1, 10000 + seed);
        const MultiBandImage pan_lr = random_image(2, 2, 1, 11000 + seed);

        const auto rel = [](double a, double b) {
            return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-30});
        };
        CHECK(rel(metrics::sam(fused, ref), oracle::sam_deg(fused, ref)) <= 1e-9);
        CHECK(rel(metrics::cc(fused, ref), oracle::cc(fused, ref)) <= 1e-9);
        CHECK(rel(metrics::scc(fused, ref), oracle::scc(fused, ref)) <= 1e-9);
        CHECK(rel(metrics::ergas(fused, ref, 4), oracle::ergas(fused, ref, 4)) <= 1e-9);
        CHECK(rel(metrics::q4(fused, ref), oracle::q4(fused, ref)) <= 1e-9);
        const double dl = metrics::d_lambda(fused, ms, QConfig::global());
        CHECK(rel(dl, oracle::d_lambda(fused, ms, 0)) <= 1e-9);
        const double ds = metrics::d_s(fused, ms, pan, pan_lr, QConfig::global());
        CHECK(rel(ds, oracle::d_s(fused, ms, pan, pan_lr, 0)) <= 1e-9);
        CHECK(rel(metrics::qnr(dl, ds), oracle::qnr(dl, ds)) <= 1e-9);
    }
}

TEST_CASE("evaluate populates what it can and reports trouble in notes") {
    const MultiBandImage ref = random_image(8, 8, 4, 30);
    metrics::EvalConfig cfg;
    cfg.qnr_window = QConfig::global();

    SUBCASE("fused == ref hits the ideals") {
        const auto report = metrics::evaluate(ref, &ref, nullptr, nullptr, cfg, "self");
        REQUIRE(report.sam.has_value());
        REQUIRE(report.cc.has_value());
        REQUIRE(report.scc.has_value());
        REQUIRE(report.ergas.has_value());
        REQUIRE(report.q4.has_value());
        CHECK(*report.sam == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(*report.cc == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(*report.scc == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(*report.ergas == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(*report.q4 == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(!report.d_lambda.has_value());
        CHECK(!report.qnr.has_value());
    }
    SUBCASE("no-reference metrics need ms and pan; qnr composition holds exactly") {
        const MultiBandImage fused = random_image(8, 8, 4, 31);
        const MultiBandImage ms = random_image(2, 2, 4, 32);
        const MultiBandImage pan = random_image(8, 8, 1, 33);
        const auto report = metrics::evaluate(fused, nullptr, &ms, &pan, cfg, "x");
        CHECK(!report.sam.has_value());
        REQUIRE(report.d_lambda.has_value());
        REQUIRE(report.d_s.has_value());
        REQUIRE(report.qnr.has_value());
        CHECK(*report.qnr == (1.0 - *report.d_lambda) * (1.0 - *report.d_s));
    }
    SUBCASE("3-band input gets a q4 note instead of an abort") {
        const MultiBandImage f3 = random_image(8, 8, 3, 34);
        const auto report = metrics::evaluate(f3, &f3, nullptr, nullptr, cfg, "x");
        CHECK(report.sam.has_value());
        CHECK(!report.q4.has_value());
        bool noted = false;
        for (const auto& n : report.notes) noted = noted || n.find("q4") != std::string::npos;
        CHECK(noted);
    }
}

TEST_CASE("report serialization") {
    metrics::MetricReport r;
    r.method = "hpf";
    r.sam = 1.3522;
    r.cc = 0.9699;
    r.scc = 0.9811;
    r.ergas = 2.2534;
    r.q4 = 0.9698;
    r.d_lambda = 0.0069;
    r.d_s = 0.0178;
    r.qnr = 0.9755;
    CHECK(metrics::MetricReport::csv_header() == "method,SAM,CC,sCC,ERGAS,Q4,D_lambda,D_s,QNR");
    CHECK(r.csv_row() ==
          "hpf,1.352200,0.969900,0.981100,2.253400,0.969800,0.006900,0.017800,0.975500");

    metrics::MetricReport partial;
    partial.method = "naive";
    partial.ergas = 4.0;
    CHECK(partial.csv_row() == "naive,,,,4.000000,,,,");

    const std::string md = metrics::to_markdown({r});
    CHECK(md.find("| Method | SAM | CC | sCC | ERGAS | Q4 | D_lambda | D_s | QNR |") !=
          std::string::npos);
    CHECK(md.find("| hpf | 1.352200 |") != std::string::npos);
}
